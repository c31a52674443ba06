//! End-to-end verification suite.
//!
//! Nine checks, each returning one [`CheckOutcome`]. [`Scale::Full`] runs
//! at the documented sample sizes; [`Scale::Quick`] shrinks the replication
//! counts for smoke runs while keeping every threshold unchanged.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use crate::df::{df_findim, run_battery, standard_battery};
use crate::error::Result;
use crate::gp::{
    apply_t, from_generalized, stability_norming, standardize_with, to_generalized, GpParams,
    NormingFunctions,
};
use crate::grid::{Field, Grid};
use crate::lifting::{
    estimate_site, lift, FieldSample, Scenario43, ScenarioConfig, SelectionPolicy,
};
use crate::maxstable::{validation_checks, MaxStableSampler, PenroseConfig};
use crate::pareto::{ConditioningMethod, ParetoSampler};
use crate::rng::RandomStream;
use crate::spectral::SpectralProfileSpec;
use crate::stats::{ks_critical_value, ks_one_sample, ks_two_sample, median, standard_pareto_cdf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Full,
    Quick,
}

impl Scale {
    fn pick(self, full: usize, quick: usize) -> usize {
        match self {
            Scale::Full => full,
            Scale::Quick => quick,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub id: u8,
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CheckOutcome {
    pub fn line(&self) -> String {
        format!(
            "[{}] {}. {}: statistic={:.6} threshold={} ({}) {:.2}s",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.statistic,
            self.threshold,
            self.detail,
            self.seconds
        )
    }
}

/// Grid used by the functional checks.
fn check_grid() -> Arc<Grid> {
    Arc::new(Grid::uniform_1d(0.0, 1.0, 16).expect("valid grid"))
}

fn pair_grid() -> Arc<Grid> {
    Arc::new(Grid::uniform_1d(0.0, 1.0, 2).expect("valid grid"))
}

/// The four built-in profiles with the grid each runs on.
pub fn builtin_specs() -> Vec<(SpectralProfileSpec, Arc<Grid>)> {
    vec![
        (SpectralProfileSpec::constant(1.0), check_grid()),
        (
            SpectralProfileSpec::gaussian_moving_max(1.0, 0.25),
            check_grid(),
        ),
        (
            SpectralProfileSpec::rescaled_positive_field(1.0, 0.2),
            check_grid(),
        ),
        (SpectralProfileSpec::bernoulli_pair(1.0), pair_grid()),
    ]
}

fn finish(
    id: u8,
    name: &str,
    statistic: f64,
    threshold: f64,
    pass: bool,
    detail: String,
    start: Instant,
) -> CheckOutcome {
    CheckOutcome {
        id,
        name: name.into(),
        statistic,
        threshold,
        pass,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Sup of `W / omega0` against standard Pareto for every built-in profile;
/// each profile must also finish within 30 s.
pub fn check_sup_pareto(scale: Scale, rng: &RandomStream) -> Result<CheckOutcome> {
    let start = Instant::now();
    let n = scale.pick(100_000, 20_000);
    let crit = ks_critical_value(n as f64, 0.01);
    let mut worst: f64 = 0.0;
    let mut slowest: f64 = 0.0;
    let mut parts = Vec::new();
    for (i, (spec, grid)) in builtin_specs().into_iter().enumerate() {
        let t = Instant::now();
        let s = ParetoSampler::new(&spec, grid)?;
        let sups: Vec<f64> = s
            .sample_batch(n, &mut rng.fork(i as u64))
            .iter()
            .map(|w| w.w.sup().0 / spec.omega0)
            .collect();
        let d = ks_one_sample(&sups, standard_pareto_cdf).statistic;
        let secs = t.elapsed().as_secs_f64();
        worst = worst.max(d);
        slowest = slowest.max(secs);
        parts.push(format!("{} D={d:.5}", spec.kind.name()));
    }
    let pass = worst < crit && slowest < 30.0;
    let detail = format!("n={n}; {}; slowest {slowest:.2}s", parts.join(", "));
    Ok(finish(
        1,
        "sup-Pareto law",
        worst,
        crit,
        pass,
        detail,
        start,
    ))
}

/// Angle at a fixed site under rejection vs stability conditioning.
pub fn check_pot_stability(scale: Scale, rng: &RandomStream) -> Result<CheckOutcome> {
    let start = Instant::now();
    let n = scale.pick(10_000, 2_000);
    let grid = check_grid();
    let site = 5;
    let s = ParetoSampler::new(&SpectralProfileSpec::gaussian_moving_max(1.0, 0.25), grid)?;
    let mut min_p: f64 = 1.0;
    let mut parts = Vec::new();
    for (i, r) in [2.0, 5.0].into_iter().enumerate() {
        let arm = |method, label| -> Result<Vec<f64>> {
            Ok(s.conditional(r, n, method, &mut rng.fork(label))?
                .iter()
                .map(|w| w.v.get(site))
                .collect())
        };
        let a = arm(ConditioningMethod::Rejection, 2 * i as u64)?;
        let b = arm(ConditioningMethod::Stability, 2 * i as u64 + 1)?;
        let p = ks_two_sample(&a, &b).p_value;
        min_p = min_p.min(p);
        parts.push(format!("r={r} p={p:.4}"));
    }
    let detail = format!("n={n} per arm, site {site}; {}", parts.join(", "));
    Ok(finish(
        2,
        "POT stability",
        min_p,
        0.01,
        min_p > 0.01,
        detail,
        start,
    ))
}

/// Bivariate df of `(YB, Y(1-B))` read off the piecewise closed form.
pub fn bernoulli_pair_reference(x: f64, y: f64) -> f64 {
    if x >= 1.0 && y >= 1.0 {
        0.5 * (2.0 - 1.0 / x - 1.0 / y)
    } else if x >= 1.0 && (0.0..1.0).contains(&y) {
        0.5 * (1.0 - 1.0 / x)
    } else if y >= 1.0 && (0.0..1.0).contains(&x) {
        0.5 * (1.0 - 1.0 / y)
    } else {
        0.0
    }
}

pub const BERNOULLI_POINTS: [(f64, f64); 6] = [
    (2.0, 2.0),
    (2.0, 0.5),
    (0.5, 2.0),
    (0.5, 0.5),
    (4.0, 4.0),
    (1.0, 1.0),
];

/// `df_findim` on the Bernoulli pair against the closed form, 1e-3
/// absolute, within 10 s.
pub fn check_bivariate_closed_form(_scale: Scale, rng: &RandomStream) -> Result<CheckOutcome> {
    let start = Instant::now();
    let n_mc = 1_000_000;
    let spec = SpectralProfileSpec::bernoulli_pair(1.0);
    let seed = rng.fork(0).next_u64();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (x, y) in BERNOULLI_POINTS {
        let e = df_findim(&[x, y], &spec, 2, n_mc, seed)?;
        let want = bernoulli_pair_reference(x, y);
        worst = worst.max((e.estimate - want).abs());
        parts.push(format!("({x},{y})={:.4}/{want:.4}", e.estimate));
    }
    let secs = start.elapsed().as_secs_f64();
    let detail = format!("n_mc={n_mc}; {}", parts.join(" "));
    Ok(finish(
        3,
        "bivariate closed form",
        worst,
        1e-3,
        worst <= 1e-3 && secs < 10.0,
        detail,
        start,
    ))
}

/// Five-query battery per profile over many seeds; at least 95% of cells
/// within 3 pooled SE of the direct-simulation frequency.
pub fn check_formula_oracle(scale: Scale, rng: &RandomStream) -> Result<CheckOutcome> {
    let start = Instant::now();
    let seeds = scale.pick(20, 4);
    let n = scale.pick(20_000, 5_000);
    let (mut cells, mut passed) = (0usize, 0usize);
    let mut parts = Vec::new();
    for (i, (spec, grid)) in builtin_specs().into_iter().enumerate() {
        let mut spec_pass = 0;
        for k in 0..seeds {
            let seed = rng.fork((i * 1000 + k) as u64).next_u64();
            let qs = standard_battery(&grid, spec.omega0, n, seed)?;
            let rows = run_battery(&qs, &spec, &grid, n)?;
            cells += rows.len();
            let ok = rows.iter().filter(|r| r.pass).count();
            passed += ok;
            spec_pass += ok;
        }
        parts.push(format!("{} {spec_pass}/{}", spec.kind.name(), 5 * seeds));
    }
    let frac = passed as f64 / cells as f64;
    let detail = format!("{passed}/{cells} cells, n={n}; {}", parts.join(", "));
    Ok(finish(
        4,
        "formula/oracle equivalence",
        frac,
        0.95,
        frac >= 0.95,
        detail,
        start,
    ))
}

/// The two parameter sets of the generalized stability check on `grid`.
pub fn gp_configs(grid: &Arc<Grid>) -> Result<Vec<GpParams>> {
    let f = |h: &dyn Fn(f64) -> f64| Field::from_fn(grid.clone(), |s| h(s[0]));
    Ok(vec![
        GpParams::new(f(&|_| 1.0)?, f(&|_| 2.0)?, f(&|_| 0.25)?, 1.0)?,
        GpParams::new(f(&|s| s)?, f(&|s| 1.0 + s)?, f(&|s| 0.5 - s)?, 1.0)?,
    ])
}

/// Generalized field renormalized by `(u(r), s(r))` given a sup exceedance
/// against the base law, at a fixed site.
pub fn check_generalized_stability(scale: Scale, rng: &RandomStream) -> Result<CheckOutcome> {
    let start = Instant::now();
    let n = scale.pick(10_000, 2_000);
    let grid = check_grid();
    let site = 5;
    let spec = SpectralProfileSpec::gaussian_moving_max(1.0, 0.25);
    let s = ParetoSampler::new(&spec, grid.clone())?;
    let mut min_p: f64 = 1.0;
    let mut parts = Vec::new();
    for (c, p) in gp_configs(&grid)?.iter().enumerate() {
        for (j, r) in [2.0, 10.0].into_iter().enumerate() {
            let label = (10 * c + 2 * j) as u64;
            let (u, sr) = stability_norming(p, r)?;
            let mut cond = Vec::with_capacity(n);
            let mut stream = rng.fork(label);
            while cond.len() < n {
                let batch = s.sample_batch(n, &mut stream);
                for w in batch {
                    let g = to_generalized(&w.w, p)?;
                    let z = standardize_with(&g, &p.gamma, &u, &sr)?.field;
                    if z.sup().0 > spec.omega0 && cond.len() < n {
                        cond.push(z.get(site));
                    }
                }
            }
            let base: Vec<f64> = s
                .sample_batch(n, &mut rng.fork(label + 1))
                .iter()
                .map(|w| {
                    Ok(from_generalized(&to_generalized(&w.w, p)?, p)?
                        .field
                        .get(site))
                })
                .collect::<Result<_>>()?;
            let pv = ks_two_sample(&cond, &base).p_value;
            min_p = min_p.min(pv);
            parts.push(format!("cfg{c} r={r} p={pv:.4}"));
        }
    }
    let detail = format!("n={n} per arm, site {site}; {}", parts.join(", "));
    Ok(finish(
        5,
        "generalized stability",
        min_p,
        0.01,
        min_p > 0.01,
        detail,
        start,
    ))
}

/// Frechet marginals, finite-dimensional df and 4-max stability of the
/// Penrose sampler.
pub fn check_max_stable(scale: Scale, rng: &RandomStream) -> Result<CheckOutcome> {
    let start = Instant::now();
    let n = scale.pick(10_000, 3_000);
    let cfg = PenroseConfig::new(
        SpectralProfileSpec::gaussian_moving_max(1.0, 0.25),
        check_grid(),
    )
    .with_truncation(1e-4);
    let ms = MaxStableSampler::new(&cfg)?;
    let points = vec![
        vec![1.0, 1.0, 1.0],
        vec![2.0, 0.5, 3.0],
        vec![0.7, 1.5, 4.0],
    ];
    let checks = validation_checks(&ms, n, &[0, 8, 15], &points, 4, &mut rng.fork(0))?;
    let failed = checks.iter().filter(|c| !c.pass).count();
    let detail = checks
        .iter()
        .map(|c| format!("{}={:.4}/{}", c.name, c.statistic, c.threshold))
        .collect::<Vec<_>>()
        .join(" ");
    Ok(finish(
        6,
        "max-stable validation",
        failed as f64,
        0.0,
        failed == 0,
        format!("n={n}; {detail}"),
        start,
    ))
}

/// Distance in units in the last place between two finite doubles of the
/// same sign.
pub fn ulp_distance(a: f64, b: f64) -> u64 {
    if a == b {
        return 0;
    }
    if a.is_sign_negative() != b.is_sign_negative() {
        return u64::MAX;
    }
    a.to_bits().abs_diff(b.to_bits())
}

/// Lifting a simple Pareto sample with its true norming multiplies the
/// selected fields by `t0`, and the lifted sup has the law of a fresh
/// exceedance of the higher threshold.
pub fn check_lifting_exactness(scale: Scale, rng: &RandomStream) -> Result<CheckOutcome> {
    let start = Instant::now();
    let n = scale.pick(20_000, 20_000);
    let (t, t0) = (20.0, 10.0);
    let grid = check_grid();
    let s = ParetoSampler::new(
        &SpectralProfileSpec::gaussian_moving_max(1.0, 0.25),
        grid.clone(),
    )?;
    let fields = s
        .sample_batch(n, &mut rng.fork(0))
        .into_iter()
        .map(|w| w.w)
        .collect();
    let data = FieldSample::new(fields, "simple_pareto", None)?;
    let one = Field::constant(grid.clone(), 1.0)?;
    let tf = Field::constant(grid, t)?;
    let nf = NormingFunctions::new(one, tf.clone(), tf, t, None)?;
    let report = lift(&data, &nf, t0, &SelectionPolicy::SupAnywhere)?;
    let mut max_ulp = 0;
    for (id, l) in report.selected_ids.iter().zip(&report.lifted) {
        for (x, y) in data.fields[*id].values().iter().zip(l.values()) {
            max_ulp = max_ulp.max(ulp_distance(t0 * x, *y));
        }
    }
    let selected = report.selected_ids.len();
    let lifted_sup: Vec<f64> = report.lifted.iter().map(|f| f.sup().0 / (t0 * t)).collect();
    let fresh: Vec<f64> = s
        .conditional(
            t * t0 / s.omega0(),
            selected.max(1),
            ConditioningMethod::Rejection,
            &mut rng.fork(1),
        )?
        .iter()
        .map(|w| w.w.sup().0 / (t0 * t))
        .collect();
    let p = ks_two_sample(&lifted_sup, &fresh).p_value;
    let pass = max_ulp <= 1 && p > 0.01 && selected >= 500;
    let detail = format!("max ulp {max_ulp}, selected {selected} of {n}, sup KS p={p:.4}");
    Ok(finish(
        7,
        "lifting exactness",
        max_ulp as f64,
        1.0,
        pass,
        detail,
        start,
    ))
}

/// Moment estimator on Pareto (`gamma = 1`) and uniform (`gamma = -1`)
/// samples: median absolute error over replications.
pub fn check_estimator(scale: Scale, rng: &RandomStream) -> Result<CheckOutcome> {
    let start = Instant::now();
    let reps = scale.pick(50, 10);
    let (n, k) = (10_000, 500);
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (label, truth) in [("pareto", 1.0), ("uniform", -1.0)] {
        let mut errs = Vec::with_capacity(reps);
        for r in 0..reps {
            let mut stream = rng.fork((truth as i64 + 1) as u64 * 1000 + r as u64);
            let xs: Vec<f64> = (0..n)
                .map(|_| {
                    let u = stream.uniform_open0();
                    if truth > 0.0 {
                        1.0 / u
                    } else {
                        u
                    }
                })
                .collect();
            errs.push((estimate_site(&xs, k, 0)?.gamma - truth).abs());
        }
        let m = median(&errs);
        worst = worst.max(m);
        parts.push(format!("{label} median |err|={m:.4}"));
    }
    let detail = format!("{reps} reps, n={n}, k={k}; {}", parts.join(", "));
    Ok(finish(
        8,
        "estimator sanity",
        worst,
        0.15,
        worst < 0.15,
        detail,
        start,
    ))
}

/// The moving-maximum lifting example, repeated; optionally writes the
/// figure data of the first run to `figures`.
pub fn check_scenario(
    scale: Scale,
    rng: &RandomStream,
    figures: Option<&Path>,
) -> Result<CheckOutcome> {
    let start = Instant::now();
    let reps = scale.pick(200, 20);
    let sc = Scenario43::new(ScenarioConfig::default())?;
    let t0 = sc.config.t0;
    let mut counts = Vec::with_capacity(reps);
    let mut all_exceed = true;
    for r in 0..reps {
        let out = sc.run(&mut rng.fork(r as u64))?;
        if r == 0 {
            if let Some(dir) = figures {
                out.write_figures(dir)?;
            }
        }
        for f in &out.report.lifted {
            all_exceed &= apply_t(f, &out.report.norming)?.field.sup().0 > t0;
        }
        counts.push(out.report.selected_ids.len() as f64);
    }
    let mean = counts.iter().sum::<f64>() / reps as f64;
    let secs = start.elapsed().as_secs_f64();
    let pass = mean > 1.0 && mean < 19.0 && all_exceed && secs < 60.0;
    let detail = format!(
        "{reps} runs of n=20, t0={t0}; mean selected {mean:.2}, min {}, max {}, all lifted exceed: {all_exceed}",
        counts.iter().copied().fold(f64::INFINITY, f64::min),
        counts.iter().copied().fold(0.0, f64::max)
    );
    Ok(finish(
        9,
        "lifting scenario end-to-end",
        mean,
        19.0,
        pass,
        detail,
        start,
    ))
}

/// Runs every check with streams forked from `seed`.
pub fn run_all(scale: Scale, seed: u64, figures: Option<&Path>) -> Result<Vec<CheckOutcome>> {
    let root = RandomStream::new(seed);
    Ok(vec![
        check_sup_pareto(scale, &root.fork(1))?,
        check_pot_stability(scale, &root.fork(2))?,
        check_bivariate_closed_form(scale, &root.fork(3))?,
        check_formula_oracle(scale, &root.fork(4))?,
        check_generalized_stability(scale, &root.fork(5))?,
        check_max_stable(scale, &root.fork(6))?,
        check_lifting_exactness(scale, &root.fork(7))?,
        check_estimator(scale, &root.fork(8))?,
        check_scenario(scale, &root.fork(9), figures)?,
    ])
}
