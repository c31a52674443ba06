//! Simple max-stable processes by the Poisson (Penrose) construction.
//!
//! `eta(s) = max_i Z_i V_i(s) / m(s)` where `{Z_i}` is a Poisson process on
//! `(0, inf)` with mean measure `z^-2 dz`, the `V_i` are i.i.d. profiles and
//! `m = E V` so that the rescaled profiles have mean one at every site. The
//! points are generated in decreasing order as `Z_i = 1 / Gamma_i` with
//! `Gamma_i` the arrival times of a unit-rate Poisson process, which gives
//! the same law as drawing a Poisson(1/eps) number of points `eps / U`.
//! Points below the truncation level `eps` are dropped. Generation also stops
//! once `Z_i sup V'` cannot exceed the current minimum, which changes nothing.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::df::Estimate;
use crate::error::{Error, Result};
use crate::gp::{apply_t, box_cox, NormingFunctions};
use crate::grid::{Field, Grid};
use crate::pareto::ParetoSampler;
use crate::rng::{par_draws, RandomStream};
use crate::spectral::{ProfileSampler, SpectralProfileSpec};
use crate::stats::{
    binomial_se, ks_one_sample, ks_two_sample, mean_se, standard_frechet_cdf, z_score, Check,
};

pub const DEFAULT_TRUNCATION: f64 = 1e-4;
pub const DEFAULT_MEAN_SAMPLES: usize = 1_000_000;
const DEFAULT_MEAN_SEED: u64 = 0x6d65_616e;

#[derive(Debug, Clone, PartialEq)]
pub struct PenroseConfig {
    pub spec: SpectralProfileSpec,
    /// Smallest Poisson point retained.
    pub truncation: f64,
    pub grid: Arc<Grid>,
    /// Profile draws used to estimate `E V` when it has no closed form.
    pub mean_samples: usize,
    pub mean_seed: u64,
}

impl PenroseConfig {
    pub fn new(spec: SpectralProfileSpec, grid: Arc<Grid>) -> Self {
        Self {
            spec,
            truncation: DEFAULT_TRUNCATION,
            grid,
            mean_samples: DEFAULT_MEAN_SAMPLES,
            mean_seed: DEFAULT_MEAN_SEED,
        }
    }

    pub fn with_truncation(mut self, eps: f64) -> Self {
        self.truncation = eps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.truncation > 0.0 && self.truncation < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "truncation must lie in (0, 1), got {}",
                self.truncation
            )));
        }
        if self.mean_samples < 2 {
            return Err(Error::InvalidParameter(
                "mean_samples must be at least 2".into(),
            ));
        }
        self.spec.validate()
    }
}

/// Sampler with the mean field of the profile computed once.
#[derive(Debug, Clone)]
pub struct MaxStableSampler {
    profile: ProfileSampler,
    /// `1 / E V(s)`.
    scale: Vec<f64>,
    /// Standard error of the mean estimate relative to the mean, per site;
    /// zero when the mean is exact.
    mean_rel_se: Vec<f64>,
    /// Upper bound on `sup V'` for the rescaled profile `V' = V / E V`.
    vmax: f64,
    truncation: f64,
}

impl MaxStableSampler {
    pub fn new(cfg: &PenroseConfig) -> Result<Self> {
        cfg.validate()?;
        let profile = ProfileSampler::new(&cfg.spec, cfg.grid.clone())?;
        let (mean, se) = match profile.exact_mean() {
            Some(m) => {
                let n = m.len();
                (m, vec![0.0; n])
            }
            None => profile.mean_with_se(cfg.mean_samples, &mut RandomStream::new(cfg.mean_seed)),
        };
        if let Some(site) = mean.iter().position(|&m| !(m > 0.0)) {
            return Err(Error::DomainError {
                site,
                reason: "profile has zero mean here".into(),
            });
        }
        let scale: Vec<f64> = mean.iter().map(|m| 1.0 / m).collect();
        let vmax = cfg.spec.omega0 * scale.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            profile,
            mean_rel_se: se.iter().zip(&mean).map(|(s, m)| s / m).collect(),
            scale,
            vmax,
            truncation: cfg.truncation,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.profile.grid()
    }

    pub fn profile(&self) -> &ProfileSampler {
        &self.profile
    }

    /// `1 / E V(s)` per site.
    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    /// Largest relative standard error of the estimated mean field.
    pub fn mean_residual(&self) -> f64 {
        self.mean_rel_se.iter().copied().fold(0.0, f64::max)
    }

    /// One rescaled profile draw `V / E V`.
    pub fn rescaled_profile_into(&self, rng: &mut RandomStream, out: &mut [f64]) {
        self.profile.sample_into(rng, out);
        for (o, s) in out.iter_mut().zip(&self.scale) {
            *o *= s;
        }
    }

    pub fn sample_into(&self, rng: &mut RandomStream, out: &mut [f64]) {
        out.fill(0.0);
        let mut v = vec![0.0; out.len()];
        let mut arrival = 0.0;
        loop {
            arrival += rng.exp1();
            let z = 1.0 / arrival;
            if z < self.truncation {
                break;
            }
            let floor = out.iter().copied().fold(f64::INFINITY, f64::min);
            if z * self.vmax <= floor {
                break;
            }
            self.rescaled_profile_into(rng, &mut v);
            for (o, vi) in out.iter_mut().zip(&v) {
                *o = o.max(z * vi);
            }
        }
    }

    pub fn sample(&self, rng: &mut RandomStream) -> Field {
        let mut out = vec![0.0; self.grid().len()];
        self.sample_into(rng, &mut out);
        Field::from_raw(self.grid().clone(), out)
    }

    pub fn sample_batch(&self, n: usize, rng: &mut RandomStream) -> Vec<Field> {
        par_draws(rng, n, |r| self.sample(r))
    }

    /// `G(x) = exp(-E max_i V'(s_i) / x_i)` with the expectation over `n`
    /// profile draws; the standard error is by the delta method.
    pub fn findim_evd(
        &self,
        x: &[f64],
        sites: &[usize],
        n: usize,
        rng: &mut RandomStream,
    ) -> Result<Estimate> {
        if x.len() != sites.len() || x.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "{} evaluation points for {} sites",
                x.len(),
                sites.len()
            )));
        }
        if let Some(i) = x.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::NonPositiveArgument {
                site: sites[i],
                value: x[i],
            });
        }
        if let Some(&s) = sites.iter().find(|&&s| s >= self.grid().len()) {
            return Err(Error::InvalidParameter(format!("site {s} out of range")));
        }
        let exps = par_draws(rng, n, |r| {
            let mut v = vec![0.0; self.grid().len()];
            self.rescaled_profile_into(r, &mut v);
            sites
                .iter()
                .zip(x)
                .map(|(&s, xi)| v[s] / xi)
                .fold(0.0, f64::max)
        });
        let m = mean_se(exps);
        let g = (-m.mean).exp();
        Ok(Estimate {
            estimate: g,
            std_error: g * m.std_error,
            no_mass: false,
        })
    }
}

pub fn sample_max_stable(cfg: &PenroseConfig, rng: &mut RandomStream) -> Result<Field> {
    Ok(MaxStableSampler::new(cfg)?.sample(rng))
}

pub fn findim_evd(
    cfg: &PenroseConfig,
    x: &[f64],
    sites: &[usize],
    n: usize,
    rng: &mut RandomStream,
) -> Result<Estimate> {
    MaxStableSampler::new(cfg)?.findim_evd(x, sites, n, rng)
}

/// General max-stable process `(eta^gamma - 1) / gamma` from a simple one.
pub fn to_general_max_stable(eta: &Field, gamma: &Field) -> Result<Field> {
    eta.check_grid(gamma)?;
    let vals = (0..eta.len())
        .map(|i| {
            let x = box_cox(eta.get(i), gamma.get(i));
            if x.is_finite() {
                Ok(x)
            } else {
                Err(Error::DomainError {
                    site: i,
                    reason: format!(
                        "eta = {} has no finite image under gamma = {}",
                        eta.get(i),
                        gamma.get(i)
                    ),
                })
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Field::new(eta.grid().clone(), vals)
}

/// Process fed to the domain-of-attraction check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoaSource {
    SimplePareto,
    MaxStable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoaReport {
    pub source: DoaSource,
    pub t: f64,
    pub n_rep: usize,
    /// Replicates with `sup T_t X > 1`.
    pub n_exceed: usize,
    pub mean_residual: f64,
    pub checks: Vec<Check>,
}

impl DoaReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Standard Frechet `1 - 1/t` quantile.
fn frechet_quantile(t: f64) -> f64 {
    -1.0 / (-1.0 / t).ln_1p()
}

/// Sites used for the angle comparison: first, middle and last.
fn angle_sites(n: usize) -> Vec<usize> {
    let mut s = vec![0, n / 2, n - 1];
    s.dedup();
    s
}

/// Empirical check of the exceedance conditions at level `t`.
///
/// `n_rep` copies of `X` are normalized with the known marginal norming
/// (`gamma = 1`; `b_t` the `1 - 1/t` quantile, `a_t = b_t` for the Pareto
/// process and `a_t = b_{2t} - b_t` for the max-stable one). Reported are the
/// ratios `P(sup T_t X > x) / P(sup T_t X > 1)` against `1/x`, as z-scores
/// with binomial SE, and two-sample KS p-values of the angle
/// `T_t X / sup T_t X` at fixed sites against the limit law, which draws
/// `V' = V / E V` with probability proportional to `sup V'`. For the
/// Pareto input both are exact at any `t >= sup V'`; for the max-stable input
/// they converge at rate `1/t`, which the angle comparison resolves first.
pub fn doa_empirical_check(
    cfg: &PenroseConfig,
    source: DoaSource,
    t: f64,
    n_rep: usize,
    xs: &[f64],
    rng: &mut RandomStream,
) -> Result<DoaReport> {
    if !(t >= 1.0) || n_rep == 0 {
        return Err(Error::InvalidParameter(format!(
            "need t >= 1 and n_rep >= 1, got t = {t}, n_rep = {n_rep}"
        )));
    }
    if let Some(x) = xs.iter().find(|&&x| !(x >= 1.0)) {
        return Err(Error::InvalidParameter(format!(
            "ratio levels must be >= 1, got {x}"
        )));
    }
    let ms = MaxStableSampler::new(cfg)?;
    let grid = cfg.grid.clone();
    let (b, a): (Vec<f64>, Vec<f64>) = match source {
        DoaSource::SimplePareto => ms.scale.iter().map(|s| (t / s, t / s)).unzip(),
        DoaSource::MaxStable => {
            let (bt, b2t) = (frechet_quantile(t), frechet_quantile(2.0 * t));
            (vec![bt; grid.len()], vec![b2t - bt; grid.len()])
        }
    };
    let nf = NormingFunctions::new(
        Field::constant(grid.clone(), 1.0)?,
        Field::new(grid.clone(), a)?,
        Field::new(grid.clone(), b)?,
        t,
        None,
    )?;
    let mut draw_rng = rng.split();
    let xs_fields: Vec<Field> = match source {
        DoaSource::SimplePareto => {
            let ps = ParetoSampler::from_profile(ms.profile.clone());
            ps.sample_batch(n_rep, &mut draw_rng)
                .into_iter()
                .map(|s| s.w)
                .collect()
        }
        DoaSource::MaxStable => ms.sample_batch(n_rep, &mut draw_rng),
    };
    let mut sups = Vec::with_capacity(n_rep);
    let mut angles: Vec<Vec<f64>> = Vec::new();
    for x in &xs_fields {
        let tx = apply_t(x, &nf)?.field;
        let (sup, _) = tx.sup();
        sups.push(sup);
        if sup > 1.0 {
            angles.push(tx.values().iter().map(|v| v / sup).collect());
        }
    }
    let n1 = angles.len();
    let mut checks = Vec::new();
    for &x in xs {
        let nx = sups.iter().filter(|&&s| s > x).count();
        let ratio = if n1 == 0 { 0.0 } else { nx as f64 / n1 as f64 };
        let se = binomial_se(1.0 / x, n1.max(1));
        checks.push(Check::below(
            format!("sup_ratio_x{x}"),
            z_score(ratio, 1.0 / x, se),
            3.0,
        ));
    }
    let n_true = n1.max(10_000);
    let mut true_rng = rng.split();
    let limit: Vec<Vec<f64>> = par_draws(&mut true_rng, n_true, |r| {
        let mut v = vec![0.0; grid.len()];
        loop {
            ms.rescaled_profile_into(r, &mut v);
            let sup = v.iter().copied().fold(0.0, f64::max);
            if r.uniform() * ms.vmax < sup {
                return v.iter().map(|x| x / sup).collect();
            }
        }
    });
    for s in angle_sites(grid.len()) {
        let emp: Vec<f64> = angles.iter().map(|a| a[s]).collect();
        let lim: Vec<f64> = limit.iter().map(|a| a[s]).collect();
        let p = if emp.is_empty() {
            0.0
        } else {
            ks_two_sample(&emp, &lim).p_value
        };
        checks.push(Check::above(format!("angle_ks_site{s}"), p, 0.01));
    }
    Ok(DoaReport {
        source,
        t,
        n_rep,
        n_exceed: n1,
        mean_residual: ms.mean_residual(),
        checks,
    })
}

/// Marginal Frechet KS at each of `sites`, the finite-dimensional df at the
/// given points against the empirical df, and `m`-max stability at the
/// first site, all from `n` draws.
pub fn validation_checks(
    ms: &MaxStableSampler,
    n: usize,
    sites: &[usize],
    points: &[Vec<f64>],
    m: usize,
    rng: &mut RandomStream,
) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let draws = ms.sample_batch(n, rng);
    for &s in sites {
        let marg: Vec<f64> = draws.iter().map(|f| f.get(s)).collect();
        let ks = ks_one_sample(&marg, standard_frechet_cdf);
        checks.push(Check::below(
            format!("frechet_ks_site{s}"),
            ks.statistic,
            ks.critical_value(0.01),
        ));
    }
    for (k, x) in points.iter().enumerate() {
        let formula = ms.findim_evd(x, sites, n, rng)?;
        let hits = draws
            .iter()
            .filter(|f| sites.iter().zip(x).all(|(&s, xi)| f.get(s) <= *xi))
            .count();
        let p = hits as f64 / n as f64;
        let se = (formula.std_error.powi(2) + binomial_se(formula.estimate, n).powi(2)).sqrt();
        checks.push(Check::below(
            format!("findim_point{k}"),
            z_score(formula.estimate, p, se),
            3.0,
        ));
    }
    if m >= 2 {
        let s = sites[0];
        let single: Vec<f64> = ms.sample_batch(n, rng).iter().map(|f| f.get(s)).collect();
        let group = ms.sample_batch(n * m, rng);
        let maxima: Vec<f64> = group
            .chunks(m)
            .map(|c| c.iter().map(|f| f.get(s)).fold(0.0, f64::max) / m as f64)
            .collect();
        let ks = ks_two_sample(&single, &maxima);
        checks.push(Check::above(
            format!("max_stability_m{m}_site{s}"),
            ks.p_value,
            0.01,
        ));
    }
    Ok(checks)
}
