//! Distribution functions of simple and generalized Pareto processes.
//!
//! Every formula is an expectation over the profile `V` and is estimated by
//! plain Monte Carlo with a reported standard error. With `S0` the zero set
//! of the argument `w`,
//!
//! ```text
//! P(W <= w) = E[ 1{V = 0 on S0} (1 - sup_{w > 0} V / w)_+ ]
//!           = E sup V / (w ^ omega0) - E sup V / w          (w > 0)
//! P(W >  w) = E[ 1{inf V > 0} min(1, inf_{w > 0} V / w) ]
//! ```
//!
//! Each estimate can be checked against the empirical frequency of the
//! event over directly simulated `W`, drawn from an independent stream.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{from_generalized, GpParams};
use crate::grid::{Field, Grid};
use crate::pareto::unit_interval_grid;
use crate::rng::{RandomStream, CHUNK};
use crate::spectral::{ProfileSampler, SpectralProfileSpec};
use crate::stats::{binomial_se, Accumulator};

/// Stream label for the formula side of a query.
const FORMULA_STREAM: u64 = 0;
/// Stream label for the direct-simulation oracle.
const ORACLE_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DfMode {
    /// `W <= w` at every site.
    #[serde(alias = "leq")]
    Leq,
    /// `W > w` at every site.
    #[serde(alias = "gt")]
    Gt,
    /// `W > w` at some site.
    #[serde(alias = "not_leq")]
    NotLeq,
}

impl DfMode {
    /// Whether the realization `w_real` lies in the event defined by `w`.
    pub fn contains(self, w_real: &[f64], w: &[f64]) -> bool {
        let leq = w_real.iter().zip(w).all(|(a, b)| a <= b);
        match self {
            DfMode::Leq => leq,
            DfMode::NotLeq => !leq,
            DfMode::Gt => w_real.iter().zip(w).all(|(a, b)| a > b),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DfQuery {
    pub w: Field,
    pub mode: DfMode,
    pub n_mc: usize,
    pub seed: u64,
}

impl DfQuery {
    pub fn new(w: Field, mode: DfMode, n_mc: usize, seed: u64) -> Result<Self> {
        if let Some(site) = w.values().iter().position(|&x| x < 0.0) {
            return Err(Error::DomainError {
                site,
                reason: "query argument must be nonnegative".into(),
            });
        }
        if n_mc == 0 {
            return Err(Error::InvalidParameter("n_mc must be at least 1".into()));
        }
        Ok(Self {
            w,
            mode,
            n_mc,
            seed,
        })
    }
}

/// Monte Carlo estimate of a probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub estimate: f64,
    pub std_error: f64,
    /// No sampled profile fell in the conditioning set; the estimate is 0 by
    /// convention.
    pub no_mass: bool,
}

impl Estimate {
    fn exact(p: f64) -> Self {
        Self {
            estimate: p,
            std_error: 0.0,
            no_mass: false,
        }
    }

    fn with_se(self, std_error: f64) -> Self {
        Self { std_error, ..self }
    }

    fn complement(self) -> Self {
        Self {
            estimate: 1.0 - self.estimate,
            ..self
        }
    }
}

/// Mean of `f` over `n` profile draws, where `None` counts as 0 and as
/// outside the conditioning set. Returns the accumulator and the number of
/// draws inside the set.
fn expectation<F>(n: usize, rng: &mut RandomStream, sites: usize, f: F) -> (Accumulator, usize)
where
    F: Fn(&mut RandomStream, &mut [f64]) -> Option<f64> + Sync,
{
    let root = rng.split();
    let parts: Vec<(Accumulator, usize)> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut stream = root.fork(c as u64);
            let mut buf = vec![0.0; sites];
            let mut acc = Accumulator::default();
            let mut inside = 0;
            for _ in 0..CHUNK.min(n - c * CHUNK) {
                match f(&mut stream, &mut buf) {
                    Some(x) => {
                        inside += 1;
                        acc.push(x);
                    }
                    None => acc.push(0.0),
                }
            }
            (acc, inside)
        })
        .collect();
    parts
        .iter()
        .fold((Accumulator::default(), 0), |(mut acc, k), (a, i)| {
            acc.merge(a);
            (acc, k + i)
        })
}

fn check_query_grid(q: &DfQuery, grid: &Arc<Grid>) -> Result<()> {
    if Arc::ptr_eq(q.w.grid(), grid) || **q.w.grid() == **grid {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

fn formula_stream(seed: u64) -> RandomStream {
    RandomStream::new(seed).fork(FORMULA_STREAM)
}

fn sampler(spec: &SpectralProfileSpec, grid: &Arc<Grid>) -> Result<ProfileSampler> {
    ProfileSampler::new(spec, grid.clone())
}

/// `P(W <= w) = E sup V / (w ^ omega0) - E sup V / w` for strictly positive `w`.
///
/// Both expectations are taken over the same profile draws; the standard
/// error is that of the paired difference.
pub fn df_leq_positive(
    q: &DfQuery,
    spec: &SpectralProfileSpec,
    grid: &Arc<Grid>,
) -> Result<Estimate> {
    check_query_grid(q, grid)?;
    if let Some(site) = q.w.values().iter().position(|&x| x <= 0.0) {
        return Err(Error::NonPositiveArgument {
            site,
            value: q.w.get(site),
        });
    }
    let profile = sampler(spec, grid)?;
    let omega0 = spec.omega0;
    let w = q.w.values();
    let (acc, _) = expectation(q.n_mc, &mut formula_stream(q.seed), w.len(), |r, v| {
        profile.sample_into(r, v);
        let (mut capped, mut plain) = (0.0f64, 0.0f64);
        for (vi, wi) in v.iter().zip(w) {
            capped = capped.max(vi / wi.min(omega0));
            plain = plain.max(vi / wi);
        }
        Some(capped - plain)
    });
    let m = acc.finish();
    Ok(Estimate {
        estimate: m.mean,
        std_error: m.std_error,
        no_mass: false,
    })
}

/// `P(W <= w) = rho(B0) (1 - E[sup_{w > 0} V / w | V in B0])` for `w >= 0`,
/// where `B0` holds the profiles vanishing on the zero set of `w` and lying
/// below `w` elsewhere.
pub fn df_leq_general(
    q: &DfQuery,
    spec: &SpectralProfileSpec,
    grid: &Arc<Grid>,
) -> Result<Estimate> {
    check_query_grid(q, grid)?;
    let profile = sampler(spec, grid)?;
    let w = q.w.values();
    let (acc, inside) = expectation(q.n_mc, &mut formula_stream(q.seed), w.len(), |r, v| {
        profile.sample_into(r, v);
        let mut ratio = 0.0f64;
        for (vi, &wi) in v.iter().zip(w) {
            if wi == 0.0 {
                if *vi != 0.0 {
                    return None;
                }
            } else {
                ratio = ratio.max(vi / wi);
            }
        }
        (ratio <= 1.0).then_some(1.0 - ratio)
    });
    if inside == 0 {
        return Ok(Estimate {
            estimate: 0.0,
            std_error: 0.0,
            no_mass: true,
        });
    }
    let m = acc.finish();
    Ok(Estimate::exact(m.mean).with_se(m.std_error))
}

/// `P(W > w) = E[1{inf V > 0} min(1, inf_{w > 0} V / w)]`.
///
/// For `w > 0` with `sup w > omega0` the minimum with 1 is never active and
/// this is `E inf V / w`.
pub fn survival_gt(q: &DfQuery, spec: &SpectralProfileSpec, grid: &Arc<Grid>) -> Result<Estimate> {
    if q.mode != DfMode::Gt {
        return Err(Error::PreconditionFailed(format!(
            "survival_gt needs mode GT, got {:?}",
            q.mode
        )));
    }
    check_query_grid(q, grid)?;
    let profile = sampler(spec, grid)?;
    let w = q.w.values();
    let (acc, inside) = expectation(q.n_mc, &mut formula_stream(q.seed), w.len(), |r, v| {
        profile.sample_into(r, v);
        let mut ratio = f64::INFINITY;
        for (vi, &wi) in v.iter().zip(w) {
            if *vi <= 0.0 {
                return None;
            }
            if wi > 0.0 {
                ratio = ratio.min(vi / wi);
            }
        }
        Some(ratio.min(1.0))
    });
    if inside == 0 {
        return Ok(Estimate {
            estimate: 0.0,
            std_error: 0.0,
            no_mass: true,
        });
    }
    let m = acc.finish();
    Ok(Estimate::exact(m.mean).with_se(m.std_error))
}

/// Dispatch on the query mode: `LEQ` via the positive or general formula,
/// `NOT_LEQ` as its complement, `GT` via [`survival_gt`].
pub fn evaluate(q: &DfQuery, spec: &SpectralProfileSpec, grid: &Arc<Grid>) -> Result<Estimate> {
    let leq = || {
        if q.w.values().iter().all(|&x| x > 0.0) {
            df_leq_positive(q, spec, grid)
        } else {
            df_leq_general(q, spec, grid)
        }
    };
    match q.mode {
        DfMode::Leq => leq(),
        DfMode::NotLeq => Ok(leq()?.complement()),
        DfMode::Gt => survival_gt(q, spec, grid),
    }
}

/// Mean and standard error of `E inf V` over `n` draws.
fn inf_profile_mean(profile: &ProfileSampler, n: usize, rng: &mut RandomStream) -> (f64, f64) {
    let (acc, _) = expectation(n, rng, profile.grid().len(), |r, v| {
        profile.sample_into(r, v);
        Some(v.iter().copied().fold(f64::INFINITY, f64::min))
    });
    let m = acc.finish();
    (m.mean, m.std_error)
}

/// Empirical `P(inf W > x | inf W > omega0)` from `n` direct draws of `W`.
/// Its limit is `min(1, omega0 / x)`.
///
/// Fails with `PreconditionFailed` unless a Monte Carlo pre-test over the
/// same number of profile draws shows `E inf V > 0` (mean above 3 SE).
pub fn conditional_sup_tail(
    spec: &SpectralProfileSpec,
    grid: &Arc<Grid>,
    x: f64,
    n: usize,
    rng: &mut RandomStream,
) -> Result<Estimate> {
    let profile = sampler(spec, grid)?;
    let (mean, se) = inf_profile_mean(&profile, n, rng);
    if !(mean > 0.0 && mean > 3.0 * se) {
        return Err(Error::PreconditionFailed(format!(
            "E inf V > 0 not supported by the data: mean {mean:.3e}, SE {se:.3e}"
        )));
    }
    let omega0 = spec.omega0;
    let (acc, inside) = expectation(n, rng, grid.len(), |r, v| {
        let y = 1.0 / r.uniform_open0();
        profile.sample_into(r, v);
        let inf_w = y * v.iter().copied().fold(f64::INFINITY, f64::min);
        (inf_w > omega0).then(|| f64::from(u8::from(inf_w > x)))
    });
    Ok(conditional_frequency(&acc, inside))
}

/// Frequency of hits among the `inside` conditioned draws; the accumulator
/// holds 1 for a hit, 0 otherwise, over all draws.
fn conditional_frequency(acc: &Accumulator, inside: usize) -> Estimate {
    if inside == 0 {
        return Estimate {
            estimate: 0.0,
            std_error: 0.0,
            no_mass: true,
        };
    }
    let m = acc.finish();
    let hits = (m.mean * m.n as f64).round();
    let p = (hits / inside as f64).min(1.0);
    Estimate::exact(p).with_se(binomial_se(p, inside))
}

/// Empirical `P(W(site) > x | W(site) > omega0)` from `n` direct draws.
/// Its limit is `min(1, omega0 / x)` whenever `E V(site) > 0`.
pub fn marginal_conditional_tail(
    spec: &SpectralProfileSpec,
    grid: &Arc<Grid>,
    site: usize,
    x: f64,
    n: usize,
    rng: &mut RandomStream,
) -> Result<Estimate> {
    if site >= grid.len() {
        return Err(Error::InvalidParameter(format!(
            "site {site} out of range for a grid of {} sites",
            grid.len()
        )));
    }
    let profile = sampler(spec, grid)?;
    let omega0 = spec.omega0;
    let (acc, inside) = expectation(n, rng, grid.len(), |r, v| {
        let y = 1.0 / r.uniform_open0();
        profile.sample_into(r, v);
        let ws = y * v[site];
        (ws > omega0).then(|| f64::from(u8::from(ws > x)))
    });
    Ok(conditional_frequency(&acc, inside))
}

/// `P(W_{mu,sigma,gamma} <= w)`: maps `w` to the simple scale with
/// [`from_generalized`] and applies [`df_leq_positive`].
pub fn df_generalized(
    q: &DfQuery,
    p: &GpParams,
    spec: &SpectralProfileSpec,
    grid: &Arc<Grid>,
) -> Result<Estimate> {
    check_query_grid(q, grid)?;
    if p.omega0 != spec.omega0 {
        return Err(Error::InvalidParameter(format!(
            "omega0 differs between parameters ({}) and profile ({})",
            p.omega0, spec.omega0
        )));
    }
    let mapped = from_generalized(&q.w, p)?;
    if !mapped.is_clean() {
        return Err(Error::OutOfSupport {
            sites: mapped.out_of_support,
        });
    }
    let simple = DfQuery {
        w: mapped.field,
        ..q.clone()
    };
    df_leq_positive(&simple, spec, grid)
}

/// `P(W_1 <= w_1, ..., W_d <= w_d)` for the simple Pareto vector on the `d`
/// sites of [`unit_interval_grid`].
pub fn df_findim(
    w: &[f64],
    spec: &SpectralProfileSpec,
    d: usize,
    n_mc: usize,
    seed: u64,
) -> Result<Estimate> {
    if w.len() != d {
        return Err(Error::InvalidParameter(format!(
            "argument has {} coordinates, expected {d}",
            w.len()
        )));
    }
    spec.validate()?;
    if d == 1 {
        if matches!(spec.kind, crate::spectral::ProfileKind::BernoulliPair) {
            return Err(Error::SpecGridMismatch {
                kind: spec.kind.name(),
                expected: 2,
                actual: 1,
            });
        }
        if w[0] < 0.0 {
            return Err(Error::DomainError {
                site: 0,
                reason: "query argument must be nonnegative".into(),
            });
        }
        return Ok(Estimate::exact((1.0 - spec.omega0 / w[0]).max(0.0)));
    }
    let grid = unit_interval_grid(d)?;
    let q = DfQuery::new(
        Field::new(grid.clone(), w.to_vec())?,
        DfMode::Leq,
        n_mc,
        seed,
    )?;
    evaluate(&q, spec, &grid)
}

/// Empirical frequency of the query event over `n` directly simulated `W`,
/// drawn from a stream independent of the formula's.
pub fn direct_frequency(
    q: &DfQuery,
    spec: &SpectralProfileSpec,
    grid: &Arc<Grid>,
    n: usize,
) -> Result<Estimate> {
    check_query_grid(q, grid)?;
    let profile = sampler(spec, grid)?;
    let w = q.w.values();
    let mode = q.mode;
    let mut rng = RandomStream::new(q.seed).fork(ORACLE_STREAM);
    let (acc, _) = expectation(n, &mut rng, w.len(), |r, v| {
        let y = 1.0 / r.uniform_open0();
        profile.sample_into(r, v);
        v.iter_mut().for_each(|x| *x *= y);
        Some(f64::from(u8::from(mode.contains(v, w))))
    });
    let p = acc.finish().mean;
    Ok(Estimate::exact(p).with_se(binomial_se(p, n)))
}

/// Query argument as read from a battery file: a scalar is broadcast to
/// every site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QueryArgument {
    Scalar(f64),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryQuery {
    pub mode: DfMode,
    pub w: QueryArgument,
    pub n_mc: usize,
    pub seed: u64,
}

impl BatteryQuery {
    pub fn to_query(&self, grid: &Arc<Grid>) -> Result<DfQuery> {
        let w = match &self.w {
            QueryArgument::Scalar(c) => Field::constant(grid.clone(), *c)?,
            QueryArgument::Values(v) => Field::new(grid.clone(), v.clone())?,
        };
        DfQuery::new(w, self.mode, self.n_mc, self.seed)
    }
}

pub fn read_battery_json<R: std::io::Read>(input: R) -> Result<Vec<BatteryQuery>> {
    Ok(serde_json::from_reader(input)?)
}

/// The fixed five-query battery, in units of `omega0`, for a 1-d grid.
///
/// Queries: `LEQ` at `2`, `LEQ` at the ramp `0.8 + 2s`, `LEQ` at `2` on the
/// first half of the sites and `0` elsewhere, `GT` at the ramp `0.3 + s`,
/// `NOT_LEQ` at `3`; `s` runs over `[0, 1]` in site order.
pub fn standard_battery(
    grid: &Arc<Grid>,
    omega0: f64,
    n_mc: usize,
    seed: u64,
) -> Result<Vec<DfQuery>> {
    let n = grid.len();
    let s = |i: usize| i as f64 / (n - 1) as f64;
    let field = |f: &dyn Fn(usize) -> f64| {
        Field::new(grid.clone(), (0..n).map(|i| omega0 * f(i)).collect())
    };
    let half = n.div_ceil(2);
    let queries = [
        (field(&|_| 2.0)?, DfMode::Leq),
        (field(&|i| 0.8 + 2.0 * s(i))?, DfMode::Leq),
        (field(&|i| if i < half { 2.0 } else { 0.0 })?, DfMode::Leq),
        (field(&|i| 0.3 + s(i))?, DfMode::Gt),
        (field(&|_| 3.0)?, DfMode::NotLeq),
    ];
    queries
        .into_iter()
        .enumerate()
        .map(|(k, (w, mode))| DfQuery::new(w, mode, n_mc, seed.wrapping_add(k as u64)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatteryRow {
    pub query_id: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub oracle_estimate: f64,
    pub oracle_se: f64,
    pub pass: bool,
}

/// Formula estimate against the direct-simulation oracle with `n_oracle`
/// draws. The oracle SE is the binomial SE at the formula's probability;
/// a row passes when the gap is within 3 pooled SE.
pub fn battery_row(
    query_id: usize,
    q: &DfQuery,
    spec: &SpectralProfileSpec,
    grid: &Arc<Grid>,
    n_oracle: usize,
) -> Result<BatteryRow> {
    let f = evaluate(q, spec, grid)?;
    let o = direct_frequency(q, spec, grid, n_oracle)?;
    let oracle_se = binomial_se(f.estimate, n_oracle);
    let pooled = (f.std_error * f.std_error + oracle_se * oracle_se).sqrt();
    Ok(BatteryRow {
        query_id,
        estimate: f.estimate,
        std_error: f.std_error,
        oracle_estimate: o.estimate,
        oracle_se,
        pass: (f.estimate - o.estimate).abs() <= 3.0 * pooled + 1e-12,
    })
}

pub fn run_battery(
    queries: &[DfQuery],
    spec: &SpectralProfileSpec,
    grid: &Arc<Grid>,
    n_oracle: usize,
) -> Result<Vec<BatteryRow>> {
    queries
        .iter()
        .enumerate()
        .map(|(i, q)| battery_row(i, q, spec, grid, n_oracle))
        .collect()
}

pub fn write_battery_csv<W: Write>(rows: &[BatteryRow], out: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(out);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}
