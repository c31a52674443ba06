//! Simple Pareto processes `W = Y * V`.
//!
//! `Y` is standard Pareto (`P(Y > y) = 1/y`, `y >= 1`), drawn as `1/U` with
//! `U` uniform on `(0, 1]`, independently of the profile `V`. Conversely any
//! nonnegative field with positive supremum decomposes into the radius
//! `sup W / omega0` and the angle `omega0 * W / sup W`.

use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::rng::{par_draws, RandomStream};
use crate::spectral::{ProfileSampler, SpectralProfileSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct SimpleParetoSample {
    pub w: Field,
    /// Pareto radius, `sup w / omega0`.
    pub y: f64,
    /// Angle (spectral profile) with `sup v == omega0`.
    pub v: Field,
    pub omega0: f64,
}

impl SimpleParetoSample {
    pub fn sup(&self) -> f64 {
        self.y * self.omega0
    }
}

/// How [`pot_conditional_sample`] produces draws conditional on `sup W > r omega0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditioningMethod {
    /// Draw unconditionally and keep only exceedances.
    Rejection,
    /// Draw unconditionally and multiply the radius by `r`.
    Stability,
}

#[derive(Debug, Clone)]
pub struct ParetoSampler {
    profile: ProfileSampler,
}

impl ParetoSampler {
    pub fn new(spec: &SpectralProfileSpec, grid: Arc<Grid>) -> Result<Self> {
        Ok(Self {
            profile: ProfileSampler::new(spec, grid)?,
        })
    }

    pub fn from_profile(profile: ProfileSampler) -> Self {
        Self { profile }
    }

    pub fn profile(&self) -> &ProfileSampler {
        &self.profile
    }

    pub fn omega0(&self) -> f64 {
        self.profile.omega0()
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.profile.grid()
    }

    pub fn sample(&self, rng: &mut RandomStream) -> SimpleParetoSample {
        let y = 1.0 / rng.uniform_open0();
        let v = self.profile.sample(rng);
        self.compose(y, v)
    }

    fn compose(&self, y: f64, v: Field) -> SimpleParetoSample {
        let w = Field::from_raw(v.grid().clone(), v.values().iter().map(|x| y * x).collect());
        SimpleParetoSample {
            w,
            y,
            v,
            omega0: self.omega0(),
        }
    }

    pub fn sample_batch(&self, n: usize, rng: &mut RandomStream) -> Vec<SimpleParetoSample> {
        par_draws(rng, n, |r| self.sample(r))
    }

    /// `n` draws of `W` given `sup W > r * omega0`.
    pub fn conditional(
        &self,
        r: f64,
        n: usize,
        method: ConditioningMethod,
        rng: &mut RandomStream,
    ) -> Result<Vec<SimpleParetoSample>> {
        if !(r > 1.0 && r.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "threshold ratio must exceed 1, got {r}"
            )));
        }
        let level = r * self.omega0();
        Ok(match method {
            ConditioningMethod::Rejection => par_draws(rng, n, |s| loop {
                let w = self.sample(s);
                if w.sup() > level {
                    break w;
                }
            }),
            ConditioningMethod::Stability => par_draws(rng, n, |s| {
                let base = self.sample(s);
                self.compose(r * base.y, base.v)
            }),
        })
    }
}

pub fn sample_simple_pareto(
    spec: &SpectralProfileSpec,
    grid: &Arc<Grid>,
    rng: &mut RandomStream,
) -> Result<SimpleParetoSample> {
    Ok(ParetoSampler::new(spec, grid.clone())?.sample(rng))
}

/// Split `w` into radius `sup w / omega0` and angle `omega0 * w / sup w`.
pub fn decompose(w: &Field, omega0: f64) -> Result<(f64, Field)> {
    if !(omega0 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "omega0 must be positive, got {omega0}"
        )));
    }
    if let Some(site) = w.values().iter().position(|&x| x < 0.0) {
        return Err(Error::DomainError {
            site,
            reason: "field must be nonnegative".into(),
        });
    }
    let (sup, imax) = w.sup();
    if sup == 0.0 {
        return Err(Error::ZeroField);
    }
    let mut v: Vec<f64> = w.values().iter().map(|x| omega0 * (x / sup)).collect();
    v[imax] = omega0;
    Ok((sup / omega0, Field::new(w.grid().clone(), v)?))
}

pub fn pot_conditional_sample(
    spec: &SpectralProfileSpec,
    grid: &Arc<Grid>,
    r: f64,
    n: usize,
    method: ConditioningMethod,
    rng: &mut RandomStream,
) -> Result<Vec<SimpleParetoSample>> {
    ParetoSampler::new(spec, grid.clone())?.conditional(r, n, method, rng)
}

/// Sites `i / (d - 1)` on `[0, 1]` used for finite-dimensional vectors.
pub fn unit_interval_grid(d: usize) -> Result<Arc<Grid>> {
    Ok(Arc::new(Grid::uniform_1d(0.0, 1.0, d)?))
}

/// Simple Pareto vector in `R^d_+` from the same `Y * V` construction on `d`
/// sites of `[0, 1]`. For `d == 1` every profile is the constant `omega0`.
pub fn sample_simple_pareto_vector(
    spec: &SpectralProfileSpec,
    d: usize,
    rng: &mut RandomStream,
) -> Result<Vec<f64>> {
    spec.validate()?;
    match d {
        0 => Err(Error::InvalidParameter(
            "dimension must be at least 1".into(),
        )),
        1 => {
            if matches!(spec.kind, crate::spectral::ProfileKind::BernoulliPair) {
                return Err(Error::SpecGridMismatch {
                    kind: spec.kind.name(),
                    expected: 2,
                    actual: 1,
                });
            }
            Ok(vec![spec.omega0 / rng.uniform_open0()])
        }
        _ => Ok(sample_simple_pareto(spec, &unit_interval_grid(d)?, rng)?
            .w
            .into_values()),
    }
}

/// Rows `sample_id,site_index,w,v`.
pub fn write_samples_csv<W: Write>(samples: &[SimpleParetoSample], out: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(out);
    wr.write_record(["sample_id", "site_index", "w", "v"])?;
    for (id, s) in samples.iter().enumerate() {
        for (i, (w, v)) in s.w.values().iter().zip(s.v.values()).enumerate() {
            wr.write_record([id.to_string(), i.to_string(), w.to_string(), v.to_string()])?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Rows `sample_id,y`.
pub fn write_radii_csv<W: Write>(samples: &[SimpleParetoSample], out: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(out);
    wr.write_record(["sample_id", "y"])?;
    for (id, s) in samples.iter().enumerate() {
        wr.write_record([id.to_string(), s.y.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{correlation, ks_one_sample, ks_two_sample, standard_pareto_cdf};
    use proptest::prelude::*;

    fn line(n: usize) -> Arc<Grid> {
        Arc::new(Grid::uniform_1d(0.0, 1.0, n).unwrap())
    }

    #[test]
    fn decompose_examples() {
        let g = line(2);
        let (y, v) = decompose(&Field::new(g.clone(), vec![2.0, 4.0]).unwrap(), 1.0).unwrap();
        assert_eq!(y, 4.0);
        assert_eq!(v.values(), &[0.5, 1.0]);
        let (y, v) = decompose(&Field::new(g.clone(), vec![3.0, 3.0]).unwrap(), 3.0).unwrap();
        assert_eq!(y, 1.0);
        assert_eq!(v.values(), &[3.0, 3.0]);
        assert!(matches!(
            decompose(&Field::new(g, vec![0.0, 0.0]).unwrap(), 1.0),
            Err(Error::ZeroField)
        ));
    }

    #[test]
    fn sample_invariants() {
        let mut rng = RandomStream::new(1);
        for spec in [
            SpectralProfileSpec::gaussian_moving_max(1.7, 0.2),
            SpectralProfileSpec::rescaled_positive_field(0.4, 0.3),
        ] {
            let s = ParetoSampler::new(&spec, line(31)).unwrap();
            for _ in 0..1000 {
                let x = s.sample(&mut rng);
                assert!(x.y >= 1.0);
                assert_eq!(x.w.sup().0, x.y * spec.omega0);
                for (w, v) in x.w.values().iter().zip(x.v.values()) {
                    assert_eq!(*w, x.y * v);
                }
                let (y, v) = decompose(&x.w, spec.omega0).unwrap();
                assert_eq!(v.sup().0, spec.omega0);
                assert!((y - x.y).abs() <= f64::EPSILON * x.y);
            }
        }
    }

    #[test]
    fn bernoulli_pair_samples_live_on_axes() {
        let mut rng = RandomStream::new(2);
        let s = ParetoSampler::new(&SpectralProfileSpec::bernoulli_pair(1.0), line(2)).unwrap();
        for _ in 0..1000 {
            let x = s.sample(&mut rng);
            let w = x.w.values();
            assert!((w[0] == x.y && w[1] == 0.0) || (w[0] == 0.0 && w[1] == x.y));
            assert!(x.y >= 1.0);
        }
    }

    #[test]
    fn constant_profile_sup_is_standard_pareto() {
        let s = ParetoSampler::new(&SpectralProfileSpec::constant(1.0), line(3)).unwrap();
        let sups: Vec<f64> = s
            .sample_batch(100_000, &mut RandomStream::new(3))
            .iter()
            .map(|x| x.sup())
            .collect();
        let ks = ks_one_sample(&sups, standard_pareto_cdf);
        assert!(!ks.rejects(0.01), "{ks:?}");
    }

    #[test]
    fn conditional_samples_exceed_level() {
        let spec = SpectralProfileSpec::constant(1.0);
        let mut rng = RandomStream::new(4);
        for method in [ConditioningMethod::Rejection, ConditioningMethod::Stability] {
            let xs = pot_conditional_sample(&spec, &line(3), 2.0, 500, method, &mut rng).unwrap();
            assert_eq!(xs.len(), 500);
            assert!(xs.iter().all(|x| x.sup() > 2.0));
        }
        assert!(pot_conditional_sample(
            &spec,
            &line(3),
            1.0,
            5,
            ConditioningMethod::Rejection,
            &mut rng
        )
        .is_err());
    }

    #[test]
    fn conditional_angle_law_matches_unconditional() {
        let spec = SpectralProfileSpec::gaussian_moving_max(1.0, 0.25);
        let s = ParetoSampler::new(&spec, line(21)).unwrap();
        let mut rng = RandomStream::new(5);
        let site = 7;
        let uncond: Vec<f64> = s
            .sample_batch(10_000, &mut rng)
            .iter()
            .map(|x| x.v.get(site))
            .collect();
        let cond: Vec<f64> = s
            .conditional(3.0, 10_000, ConditioningMethod::Rejection, &mut rng)
            .unwrap()
            .iter()
            .map(|x| x.v.get(site))
            .collect();
        let ks = ks_two_sample(&uncond, &cond);
        assert!(ks.p_value > 0.01, "{ks:?}");
    }

    #[test]
    fn conditional_near_one_is_unconditional() {
        let spec = SpectralProfileSpec::constant(1.0);
        let s = ParetoSampler::new(&spec, line(2)).unwrap();
        let r = 1.0 + 1e-12;
        let a: Vec<f64> = s
            .conditional(
                r,
                20_000,
                ConditioningMethod::Rejection,
                &mut RandomStream::new(6),
            )
            .unwrap()
            .iter()
            .map(|x| x.y)
            .collect();
        let ks = ks_one_sample(&a, standard_pareto_cdf);
        assert!(!ks.rejects(0.01), "{ks:?}");
    }

    #[test]
    fn radius_independent_of_angle() {
        let spec = SpectralProfileSpec::rescaled_positive_field(1.0, 0.2);
        let s = ParetoSampler::new(&spec, line(21)).unwrap();
        let xs = s.sample_batch(20_000, &mut RandomStream::new(7));
        let logy: Vec<f64> = xs.iter().map(|x| x.y.ln()).collect();
        let v: Vec<f64> = xs.iter().map(|x| x.v.get(10)).collect();
        let c = correlation(&logy, &v);
        assert!(c.abs() < 3.0 / (xs.len() as f64).sqrt(), "corr {c}");
    }

    #[test]
    fn homogeneity_on_threshold_sets() {
        // A = {f : f(s0) > c}; r P(W in rA) = P(W in A)
        let spec = SpectralProfileSpec::gaussian_moving_max(1.0, 0.25);
        let s = ParetoSampler::new(&spec, line(21)).unwrap();
        let n = 200_000;
        let xs = s.sample_batch(n, &mut RandomStream::new(8));
        let (site, c) = (5, 1.5);
        let freq =
            |level: f64| xs.iter().filter(|x| x.w.get(site) > level).count() as f64 / n as f64;
        let p_a = freq(c);
        for r in [2.0, 5.0] {
            let p_ra = freq(r * c);
            let diff = r * p_ra - p_a;
            let se = ((r * r * p_ra * (1.0 - p_ra) + p_a * (1.0 - p_a)) / n as f64).sqrt();
            assert!(diff.abs() <= 3.0 * se, "r={r}: diff {diff} se {se}");
        }
    }

    #[test]
    fn bernoulli_pair_has_no_joint_exceedances() {
        let s = ParetoSampler::new(&SpectralProfileSpec::bernoulli_pair(1.0), line(2)).unwrap();
        let xs = s.sample_batch(20_000, &mut RandomStream::new(9));
        let c = 2.0;
        let joint = xs
            .iter()
            .filter(|x| x.w.get(0) > c && x.w.get(1) > c)
            .count();
        let m0 = xs.iter().filter(|x| x.w.get(0) > c).count();
        let m1 = xs.iter().filter(|x| x.w.get(1) > c).count();
        assert_eq!(joint, 0);
        assert!(m0 > 0 && m1 > 0);
    }

    #[test]
    fn vector_sampler() {
        let mut rng = RandomStream::new(10);
        let v =
            sample_simple_pareto_vector(&SpectralProfileSpec::constant(1.0), 1, &mut rng).unwrap();
        assert_eq!(v.len(), 1);
        assert!(v[0] >= 1.0);
        let maxima: Vec<f64> = (0..100_000)
            .map(|_| {
                let w = sample_simple_pareto_vector(
                    &SpectralProfileSpec::bernoulli_pair(1.0),
                    2,
                    &mut rng,
                )
                .unwrap();
                w[0].max(w[1])
            })
            .collect();
        let ks = ks_one_sample(&maxima, standard_pareto_cdf);
        assert!(!ks.rejects(0.01), "{ks:?}");
        assert!(sample_simple_pareto_vector(
            &SpectralProfileSpec::bernoulli_pair(1.0),
            3,
            &mut rng
        )
        .is_err());
    }

    #[test]
    fn spectral_measure_times_tail() {
        // P(max > r, angle in B) = rho(B) / r with B = {first coordinate = omega0}
        let mut rng = RandomStream::new(11);
        let spec = SpectralProfileSpec::gaussian_moving_max(1.0, 0.5);
        let n = 100_000;
        let r = 2.0;
        let mut in_b = 0usize;
        let mut joint = 0usize;
        for _ in 0..n {
            let w = sample_simple_pareto_vector(&spec, 2, &mut rng).unwrap();
            let m = w[0].max(w[1]);
            let first_is_max = w[0] >= w[1];
            in_b += first_is_max as usize;
            joint += (first_is_max && m > r) as usize;
        }
        let rho = in_b as f64 / n as f64;
        let lhs = joint as f64 / n as f64;
        let se = (lhs * (1.0 - lhs) / n as f64 + (rho * (1.0 - rho) / n as f64) / (r * r)).sqrt();
        assert!((lhs - rho / r).abs() <= 3.0 * se, "{lhs} vs {}", rho / r);
    }

    #[test]
    fn csv_exports() {
        let s = ParetoSampler::new(&SpectralProfileSpec::constant(1.0), line(2)).unwrap();
        let xs = s.sample_batch(3, &mut RandomStream::new(12));
        let mut buf = Vec::new();
        write_samples_csv(&xs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 * 2);
        assert!(text.starts_with("sample_id,site_index,w,v\n"));
        let mut buf = Vec::new();
        write_radii_csv(&xs, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
    }

    proptest! {
        #[test]
        fn decompose_recombine_identity(vals in prop::collection::vec(0.0f64..1e3, 2..30), omega0 in 0.1f64..10.0) {
            prop_assume!(vals.iter().any(|&v| v > 0.0));
            let w = Field::new(line(vals.len()), vals.clone()).unwrap();
            let (y, v) = decompose(&w, omega0).unwrap();
            for (orig, vi) in vals.iter().zip(v.values()) {
                let back = y * vi;
                prop_assert!((back - orig).abs() <= 2.0 * f64::EPSILON * orig.abs().max(f64::MIN_POSITIVE));
            }
        }
    }
}
