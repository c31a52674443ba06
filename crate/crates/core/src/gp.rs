//! Generalized Pareto transforms and the normalization `T_t`.
//!
//! With all operations taken per site,
//!
//! ```text
//! W_{mu,sigma,gamma} = mu + sigma (W^gamma - 1) / gamma
//! T_t X              = (1 + gamma (X - b_t) / a_t)_+^(1/gamma)
//! T_t^{<-} y         = b_t + a_t (y^gamma - 1) / gamma
//! ```
//!
//! Sites with `|gamma| < GAMMA_ZERO_TOL` use the exp/log limits. For small
//! nonzero `|gamma|` the power maps are evaluated as `expm1(gamma ln w) / gamma`
//! and `exp(ln_1p(gamma z) / gamma)` so they stay continuous across the
//! switch; otherwise plain `powf` is used, which is exact at `gamma = 1`.

use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

/// Below this `|gamma|` the logarithmic limit is used.
pub const GAMMA_ZERO_TOL: f64 = 1e-8;

/// Below this `|gamma|` the power maps go through `expm1`/`ln_1p`.
const SMALL_GAMMA: f64 = 0.1;

/// `(w^gamma - 1) / gamma`, or `ln w` in the limit.
pub fn box_cox(w: f64, gamma: f64) -> f64 {
    if gamma.abs() < GAMMA_ZERO_TOL {
        w.ln()
    } else if gamma.abs() < SMALL_GAMMA {
        (gamma * w.ln()).exp_m1() / gamma
    } else {
        (w.powf(gamma) - 1.0) / gamma
    }
}

/// `(1 + gamma z)^(1/gamma)`, or `exp(z)` in the limit. `None` when
/// `1 + gamma z <= 0`.
pub fn inverse_box_cox(z: f64, gamma: f64) -> Option<f64> {
    if gamma.abs() < GAMMA_ZERO_TOL {
        return Some(z.exp());
    }
    let gz = gamma * z;
    if gz <= -1.0 {
        None
    } else if gamma.abs() < SMALL_GAMMA {
        Some((gz.ln_1p() / gamma).exp())
    } else {
        Some((1.0 + gz).powf(1.0 / gamma))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpParams {
    pub mu: Field,
    pub sigma: Field,
    pub gamma: Field,
    pub omega0: f64,
}

impl GpParams {
    pub fn new(mu: Field, sigma: Field, gamma: Field, omega0: f64) -> Result<Self> {
        mu.check_grid(&sigma)?;
        mu.check_grid(&gamma)?;
        if let Some(site) = sigma.values().iter().position(|&s| s <= 0.0) {
            return Err(Error::DomainError {
                site,
                reason: "sigma must be positive".into(),
            });
        }
        if !(omega0 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "omega0 must be positive, got {omega0}"
            )));
        }
        Ok(Self {
            mu,
            sigma,
            gamma,
            omega0,
        })
    }

    /// Constant parameters on `grid`.
    pub fn uniform(grid: &Arc<Grid>, mu: f64, sigma: f64, gamma: f64, omega0: f64) -> Result<Self> {
        Self::new(
            Field::constant(grid.clone(), mu)?,
            Field::constant(grid.clone(), sigma)?,
            Field::constant(grid.clone(), gamma)?,
            omega0,
        )
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.mu.grid()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "omega0": self.omega0,
            "site_index": (0..self.mu.len()).collect::<Vec<_>>(),
            "mu": self.mu.values(),
            "sigma": self.sigma.values(),
            "gamma": self.gamma.values(),
        })
    }

    pub fn from_json(grid: &Arc<Grid>, value: &serde_json::Value) -> Result<Self> {
        #[derive(Deserialize)]
        struct Doc {
            omega0: f64,
            mu: Vec<f64>,
            sigma: Vec<f64>,
            gamma: Vec<f64>,
        }
        let d: Doc = serde_json::from_value(value.clone())?;
        Self::new(
            Field::new(grid.clone(), d.mu)?,
            Field::new(grid.clone(), d.sigma)?,
            Field::new(grid.clone(), d.gamma)?,
            d.omega0,
        )
    }
}

/// Per-site shape, scale and location used by `T_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormingFunctions {
    pub gamma: Field,
    pub a_t: Field,
    pub b_t: Field,
    pub t: f64,
    /// Number of upper order statistics, when estimated.
    pub k: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct NormingDoc {
    t: f64,
    k: Option<usize>,
    site_index: Vec<usize>,
    gamma: Vec<f64>,
    a_t: Vec<f64>,
    b_t: Vec<f64>,
}

impl NormingFunctions {
    pub fn new(gamma: Field, a_t: Field, b_t: Field, t: f64, k: Option<usize>) -> Result<Self> {
        gamma.check_grid(&a_t)?;
        gamma.check_grid(&b_t)?;
        if let Some(site) = a_t.values().iter().position(|&a| a <= 0.0) {
            return Err(Error::DomainError {
                site,
                reason: "a_t must be positive".into(),
            });
        }
        if !(t > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "t must be positive, got {t}"
            )));
        }
        Ok(Self {
            gamma,
            a_t,
            b_t,
            t,
            k,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.gamma.grid()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(NormingDoc {
            t: self.t,
            k: self.k,
            site_index: (0..self.gamma.len()).collect(),
            gamma: self.gamma.values().to_vec(),
            a_t: self.a_t.values().to_vec(),
            b_t: self.b_t.values().to_vec(),
        })
        .expect("norming document serializes")
    }

    pub fn from_json(grid: &Arc<Grid>, value: &serde_json::Value) -> Result<Self> {
        let d: NormingDoc = serde_json::from_value(value.clone())?;
        Self::new(
            Field::new(grid.clone(), d.gamma)?,
            Field::new(grid.clone(), d.a_t)?,
            Field::new(grid.clone(), d.b_t)?,
            d.t,
            d.k,
        )
    }
}

/// A field together with the sites where the positive-part convention set
/// the value to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Clamped {
    pub field: Field,
    pub out_of_support: Vec<usize>,
}

impl Clamped {
    pub fn is_clean(&self) -> bool {
        self.out_of_support.is_empty()
    }
}

/// `mu + sigma (w^gamma - 1) / gamma` per site.
pub fn to_generalized(w: &Field, p: &GpParams) -> Result<Field> {
    w.check_grid(&p.mu)?;
    let vals = (0..w.len())
        .map(|i| {
            let x = p.mu.get(i) + p.sigma.get(i) * box_cox(w.get(i), p.gamma.get(i));
            if x.is_finite() {
                Ok(x)
            } else {
                Err(Error::DomainError {
                    site: i,
                    reason: format!(
                        "W = {} has no finite image under gamma = {}",
                        w.get(i),
                        p.gamma.get(i)
                    ),
                })
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Field::from_raw(w.grid().clone(), vals))
}

/// `(1 + gamma (g - mu) / sigma)^(1/gamma)` per site; sites where the base
/// is not positive are set to 0 and reported.
pub fn from_generalized(g: &Field, p: &GpParams) -> Result<Clamped> {
    g.check_grid(&p.mu)?;
    Ok(standardize(g, &p.gamma, &p.sigma, &p.mu))
}

fn standardize(x: &Field, gamma: &Field, scale: &Field, loc: &Field) -> Clamped {
    let mut out = Vec::with_capacity(x.len());
    let mut oos = Vec::new();
    for i in 0..x.len() {
        let z = (x.get(i) - loc.get(i)) / scale.get(i);
        match inverse_box_cox(z, gamma.get(i)) {
            Some(v) if v.is_finite() => out.push(v),
            _ => {
                oos.push(i);
                out.push(0.0);
            }
        }
    }
    Clamped {
        field: Field::from_raw(x.grid().clone(), out),
        out_of_support: oos,
    }
}

/// `T_t x = (1 + gamma (x - b_t) / a_t)_+^(1/gamma)`.
pub fn apply_t(x: &Field, nf: &NormingFunctions) -> Result<Clamped> {
    x.check_grid(&nf.gamma)?;
    Ok(standardize(x, &nf.gamma, &nf.a_t, &nf.b_t))
}

/// `T_t^{<-} y = b_t + a_t (y^gamma - 1) / gamma`.
///
/// Fails when the result is not finite, i.e. `y = 0` at a site with
/// `gamma <= 0`.
pub fn invert_t(y: &Field, nf: &NormingFunctions) -> Result<Field> {
    y.check_grid(&nf.gamma)?;
    let vals = (0..y.len())
        .map(|i| {
            let yi = y.get(i);
            if yi < 0.0 {
                return Err(Error::DomainError {
                    site: i,
                    reason: format!("T_t inverse needs y >= 0, got {yi}"),
                });
            }
            let x = nf.b_t.get(i) + nf.a_t.get(i) * box_cox(yi, nf.gamma.get(i));
            if x.is_finite() {
                Ok(x)
            } else {
                Err(Error::DomainError {
                    site: i,
                    reason: format!(
                        "y = {yi} has no finite preimage under gamma = {}",
                        nf.gamma.get(i)
                    ),
                })
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Field::from_raw(y.grid().clone(), vals))
}

/// `u(r) = mu + sigma (r^gamma - 1) / gamma` and `s(r) = sigma r^gamma`.
pub fn stability_norming(p: &GpParams, r: f64) -> Result<(Field, Field)> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "r must be positive, got {r}"
        )));
    }
    let n = p.mu.len();
    let u = (0..n)
        .map(|i| p.mu.get(i) + p.sigma.get(i) * box_cox(r, p.gamma.get(i)))
        .collect::<Vec<_>>();
    let s = (0..n)
        .map(|i| p.sigma.get(i) * r.powf(p.gamma.get(i)))
        .collect::<Vec<_>>();
    Ok((
        Field::new(p.grid().clone(), u)?,
        Field::new(p.grid().clone(), s)?,
    ))
}

/// Standardize a generalized field with explicit location and scale fields,
/// as in the stability relation with `(u(r), s(r))`.
pub fn standardize_with(g: &Field, gamma: &Field, loc: &Field, scale: &Field) -> Result<Clamped> {
    g.check_grid(gamma)?;
    g.check_grid(loc)?;
    g.check_grid(scale)?;
    Ok(standardize(g, gamma, scale, loc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(n: usize) -> Arc<Grid> {
        Arc::new(Grid::uniform_1d(0.0, 1.0, n).unwrap())
    }

    fn fld(g: &Arc<Grid>, v: &[f64]) -> Field {
        Field::new(g.clone(), v.to_vec()).unwrap()
    }

    fn norming(g: &Arc<Grid>, gamma: f64, a: f64, b: f64) -> NormingFunctions {
        NormingFunctions::new(
            Field::constant(g.clone(), gamma).unwrap(),
            Field::constant(g.clone(), a).unwrap(),
            Field::constant(g.clone(), b).unwrap(),
            10.0,
            None,
        )
        .unwrap()
    }

    #[test]
    fn to_generalized_examples() {
        let g = line(2);
        let p = GpParams::uniform(&g, 0.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(
            to_generalized(&fld(&g, &[2.0, 3.0]), &p).unwrap().values(),
            &[1.0, 2.0]
        );
        let p0 = GpParams::uniform(&g, 0.0, 1.0, 0.0, 1.0).unwrap();
        let out = to_generalized(&fld(&g, &[1f64.exp(), 2f64.exp()]), &p0).unwrap();
        assert!((out.get(0) - 1.0).abs() < 1e-15 && (out.get(1) - 2.0).abs() < 1e-15);
        let p2 = GpParams::uniform(&g, 5.0, 2.0, 0.5, 1.0).unwrap();
        let out = to_generalized(&fld(&g, &[4.0, 4.0]), &p2).unwrap();
        assert!((out.get(0) - 9.0).abs() < 1e-14);
    }

    #[test]
    fn to_generalized_zero_with_nonpositive_shape_fails() {
        let g = line(2);
        let p = GpParams::uniform(&g, 0.0, 1.0, -0.5, 1.0).unwrap();
        assert!(matches!(
            to_generalized(&fld(&g, &[0.0, 2.0]), &p),
            Err(Error::DomainError { site: 0, .. })
        ));
        let p = GpParams::uniform(&g, 0.0, 1.0, 0.5, 1.0).unwrap();
        // lower endpoint mu - sigma / gamma
        assert_eq!(
            to_generalized(&fld(&g, &[0.0, 1.0]), &p).unwrap().values(),
            &[-2.0, 0.0]
        );
    }

    #[test]
    fn from_generalized_examples() {
        let g = line(2);
        let p = GpParams::uniform(&g, 0.0, 1.0, 1.0, 1.0).unwrap();
        let c = from_generalized(&fld(&g, &[1.0, 2.0]), &p).unwrap();
        assert_eq!(c.field.values(), &[2.0, 3.0]);
        assert!(c.is_clean());
        // gamma = -0.5: upper endpoint mu + sigma / 0.5 = 2
        let p = GpParams::uniform(&g, 0.0, 1.0, -0.5, 1.0).unwrap();
        let c = from_generalized(&fld(&g, &[1.0, 2.5]), &p).unwrap();
        assert_eq!(c.out_of_support, vec![1]);
        assert_eq!(c.field.get(1), 0.0);
        assert!((c.field.get(0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn apply_t_examples() {
        let g = line(3);
        let nf = norming(&g, 1.0, 2.0, 3.0);
        let c = apply_t(&fld(&g, &[5.0, 3.0, -100.0]), &nf).unwrap();
        assert_eq!(c.field.values(), &[2.0, 1.0, 0.0]);
        assert_eq!(c.out_of_support, vec![2]);
        let c = apply_t(&fld(&g, &[3.0, 3.0, 3.0]), &nf).unwrap();
        assert!(c.field.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn invert_t_examples() {
        let g = line(2);
        let nf = norming(&g, 1.0, 2.0, 3.0);
        assert_eq!(
            invert_t(&fld(&g, &[2.0, 1.0]), &nf).unwrap().values(),
            &[5.0, 3.0]
        );
        let nf0 = norming(&g, 0.0, 2.0, 3.0);
        let x = invert_t(&fld(&g, &[2.0, 1.0]), &nf0).unwrap();
        assert!((x.get(0) - (3.0 + 2.0 * 2f64.ln())).abs() < 1e-14);
        assert_eq!(x.get(1), 3.0);
        assert!(invert_t(&fld(&g, &[0.0, 1.0]), &nf0).is_err());
    }

    #[test]
    fn stability_norming_examples() {
        let g = line(2);
        let p = GpParams::new(
            fld(&g, &[0.5, -1.0]),
            fld(&g, &[2.0, 3.0]),
            fld(&g, &[0.3, -0.2]),
            1.0,
        )
        .unwrap();
        let (u, s) = stability_norming(&p, 1.0).unwrap();
        assert_eq!(u.values(), p.mu.values());
        assert_eq!(s.values(), p.sigma.values());
        let p0 = GpParams::uniform(&g, 1.0, 2.0, 0.0, 1.0).unwrap();
        let (u, s) = stability_norming(&p0, 3.0).unwrap();
        assert!((u.get(0) - (1.0 + 2.0 * 3f64.ln())).abs() < 1e-14);
        assert_eq!(s.get(0), 2.0);
        let p1 = GpParams::uniform(&g, 0.0, 1.0, 1.0, 1.0).unwrap();
        let (u, s) = stability_norming(&p1, 10.0).unwrap();
        assert!((u.get(0) - 9.0).abs() < 1e-14);
        assert!((s.get(0) - 10.0).abs() < 1e-14);
    }

    #[test]
    fn continuity_across_zero_shape_switch() {
        for w in [0.3, 1.0, 2.5, 40.0] {
            let at_zero = box_cox(w, 0.0);
            for gamma in [1.1e-8, -1.1e-8, 1e-7, -1e-7] {
                assert!(
                    (box_cox(w, gamma) - at_zero).abs() < 1e-6 * (1.0 + at_zero.abs()),
                    "w={w} g={gamma}"
                );
            }
        }
        for z in [-2.0, 0.0, 0.7, 5.0] {
            let at_zero = inverse_box_cox(z, 0.0).unwrap();
            for gamma in [1.1e-8, -1.1e-8, 1e-7] {
                let v = inverse_box_cox(z, gamma).unwrap();
                // (1 + g z)^(1/g) = exp(z - g z^2 / 2 + ...)
                let tol = (gamma.abs() * (1.0 + z * z) + 1e-12) * at_zero;
                assert!((v - at_zero).abs() < tol, "z={z} g={gamma}");
            }
        }
    }

    #[test]
    fn grid_mismatch_reported() {
        let p = GpParams::uniform(&line(2), 0.0, 1.0, 1.0, 1.0).unwrap();
        let w = Field::constant(line(3), 2.0).unwrap();
        assert!(matches!(to_generalized(&w, &p), Err(Error::GridMismatch)));
    }

    #[test]
    fn json_round_trips() {
        let g = line(3);
        let p = GpParams::new(
            fld(&g, &[0.0, 1.0, 2.0]),
            fld(&g, &[1.0, 1.0, 2.0]),
            fld(&g, &[0.1, 0.0, -0.1]),
            2.0,
        )
        .unwrap();
        assert_eq!(GpParams::from_json(&g, &p.to_json()).unwrap(), p);
        let nf = norming(&g, 0.5, 2.0, 1.0);
        let j = nf.to_json();
        assert_eq!(j["site_index"], serde_json::json!([0, 1, 2]));
        assert_eq!(NormingFunctions::from_json(&g, &j).unwrap(), nf);
    }

    proptest! {
        #[test]
        fn generalized_round_trip(
            w in prop::collection::vec(1.0f64..1e4, 3),
            mu in -5.0f64..5.0,
            sigma in 0.1f64..10.0,
            gamma in -1.0f64..1.5,
        ) {
            let g = line(3);
            let p = GpParams::uniform(&g, mu, sigma, gamma, 1.0).unwrap();
            let wf = Field::new(g, w.clone()).unwrap();
            let back = from_generalized(&to_generalized(&wf, &p).unwrap(), &p).unwrap();
            prop_assert!(back.is_clean());
            for (a, b) in w.iter().zip(back.field.values()) {
                prop_assert!((a - b).abs() <= 1e-9 * a, "{} vs {}", a, b);
            }
        }

        #[test]
        fn t_round_trip_on_unclamped_sites(
            x in prop::collection::vec(-10.0f64..50.0, 4),
            gamma in -0.8f64..1.2,
            a in 0.2f64..5.0,
            b in -3.0f64..10.0,
        ) {
            let g = line(4);
            let nf = norming(&g, gamma, a, b);
            let xf = Field::new(g, x.clone()).unwrap();
            let t = apply_t(&xf, &nf).unwrap();
            for (i, &xi) in x.iter().enumerate() {
                if t.out_of_support.contains(&i) || t.field.get(i) == 0.0 {
                    continue;
                }
                let one = Field::constant(xf.grid().clone(), t.field.get(i)).unwrap();
                let back = invert_t(&one, &nf).unwrap().get(0);
                prop_assert!((back - xi).abs() <= 1e-8 * (1.0 + xi.abs()), "{} vs {}", back, xi);
            }
        }
    }
}
