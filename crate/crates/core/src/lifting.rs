//! Lifting moderately extreme fields to a much higher threshold.
//!
//! Given i.i.d. fields `X_1..X_n`:
//!
//! 1. estimate per-site `gamma`, `a` and `b` at `t = n/k` from the top `k`
//!    order statistics;
//! 2. select the fields whose normalization `T_t X` exceeds 1 somewhere;
//! 3. return `T_t^{<-}(t0 T_t X)` for each selected field.
//!
//! The composite in step 3 is affine on the sites where `T_t X > 0`:
//! `T^{<-}(t0 T x) = t0^gamma x + c (a - gamma b)` with
//! `c = (t0^gamma - 1) / gamma`, which is how it is evaluated. At sites
//! where `T_t X` was clamped to 0 the field value is kept unchanged.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{apply_t, box_cox, NormingFunctions};
use crate::grid::{Field, Grid};
use crate::maxstable::{MaxStableSampler, PenroseConfig};
use crate::rng::RandomStream;
use crate::spectral::SpectralProfileSpec;

/// `n` i.i.d. fields on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub fields: Vec<Field>,
    pub label: String,
    pub seed: Option<u64>,
}

impl FieldSample {
    pub fn new(fields: Vec<Field>, label: impl Into<String>, seed: Option<u64>) -> Result<Self> {
        if fields.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "need at least 2 fields, got {}",
                fields.len()
            )));
        }
        for f in &fields[1..] {
            fields[0].check_grid(f)?;
        }
        Ok(Self {
            fields,
            label: label.into(),
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.fields[0].grid()
    }

    /// Values of all fields at one site.
    pub fn column(&self, site: usize) -> Vec<f64> {
        self.fields.iter().map(|f| f.get(site)).collect()
    }

    /// Rows `sample_id,site_index,value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(out);
        wr.write_record(["sample_id", "site_index", "value"])?;
        for (id, f) in self.fields.iter().enumerate() {
            for (i, v) in f.values().iter().enumerate() {
                wr.write_record([id.to_string(), i.to_string(), v.to_string()])?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads rows `sample_id,site_index,value` in any order. Every sample
    /// must cover the same sites `0..m`. Without `grid` the sites are
    /// labeled by their index.
    pub fn read_csv<R: Read>(
        input: R,
        grid: Option<Arc<Grid>>,
        label: impl Into<String>,
    ) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            sample_id: usize,
            site_index: usize,
            value: f64,
        }
        let mut rows: Vec<Row> = csv::Reader::from_reader(input)
            .deserialize()
            .collect::<std::result::Result<_, _>>()?;
        if rows.is_empty() {
            return Err(Error::InsufficientData("no rows".into()));
        }
        rows.sort_by_key(|r| (r.sample_id, r.site_index));
        let n_sites = rows.iter().map(|r| r.site_index).max().unwrap_or(0) + 1;
        let grid = match grid {
            Some(g) if g.len() == n_sites => g,
            Some(g) => {
                return Err(Error::InvalidField(format!(
                    "data has {n_sites} sites, grid has {}",
                    g.len()
                )))
            }
            None => Arc::new(Grid::indexed(n_sites)?),
        };
        let mut fields = Vec::new();
        for chunk in rows.chunk_by(|a, b| a.sample_id == b.sample_id) {
            let id = chunk[0].sample_id;
            if chunk.len() != n_sites || chunk.iter().enumerate().any(|(i, r)| r.site_index != i) {
                return Err(Error::InvalidField(format!(
                    "sample {id} does not cover sites 0..{n_sites} exactly once"
                )));
            }
            fields.push(Field::new(
                grid.clone(),
                chunk.iter().map(|r| r.value).collect(),
            )?);
        }
        Self::new(fields, label, None)
    }
}

/// Per-site tail estimates from one column of data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteEstimate {
    pub gamma: f64,
    pub a: f64,
    pub b: f64,
}

/// Moment estimator and norming at `t = n/k` for one site.
///
/// With `X_(1) <= ... <= X_(n)`, `b = X_(n-k)` and, using the log spacings
/// `L_i = ln X_(n-i+1) - ln X_(n-k)`, `i = 1..k`,
///
/// ```text
/// M1 = mean L_i,  M2 = mean L_i^2
/// gamma = M1 + 1 - 1 / (2 (1 - M1^2 / M2))
/// a = gamma (b_2t - b) / (2^gamma - 1),  b_2t = X_(n - floor(k/2))
/// ```
///
/// `site` is only used in error messages.
pub fn estimate_site(values: &[f64], k: usize, site: usize) -> Result<SiteEstimate> {
    let n = values.len();
    if k < 2 || 2 * k > n {
        return Err(Error::InsufficientData(format!(
            "need 2 <= k <= n/2, got k = {k}, n = {n}"
        )));
    }
    let mut x = values.to_vec();
    x.sort_by(f64::total_cmp);
    let b = x[n - k - 1];
    let b2 = x[n - k / 2 - 1];
    if !(b > 0.0) {
        return Err(Error::DegenerateTail {
            site,
            reason: format!("threshold order statistic {b} is not positive"),
        });
    }
    if x[n - 1] == b {
        return Err(Error::DegenerateTail {
            site,
            reason: "top order statistics are all equal".into(),
        });
    }
    let lb = b.ln();
    let (mut m1, mut m2) = (0.0, 0.0);
    for &xi in &x[n - k..] {
        let l = xi.ln() - lb;
        m1 += l;
        m2 += l * l;
    }
    m1 /= k as f64;
    m2 /= k as f64;
    let gamma = m1 + 1.0 - 0.5 / (1.0 - m1 * m1 / m2);
    // (2^gamma - 1) / gamma
    let denom = box_cox(2.0, gamma);
    let a = (b2 - b) / denom;
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::DegenerateTail {
            site,
            reason: format!("scale estimate {a} is not positive"),
        });
    }
    Ok(SiteEstimate { gamma, a, b })
}

/// Estimates `gamma`, `a_t` and `b_t` at every site with `t = n/k`.
pub fn estimate_norming(data: &FieldSample, k: usize) -> Result<NormingFunctions> {
    let n = data.len();
    if k < 2 || 2 * k > n {
        return Err(Error::InsufficientData(format!(
            "need 2 <= k <= n/2, got k = {k}, n = {n}"
        )));
    }
    let grid = data.grid().clone();
    let est = (0..grid.len())
        .into_par_iter()
        .map(|s| estimate_site(&data.column(s), k, s))
        .collect::<Result<Vec<_>>>()?;
    NormingFunctions::new(
        Field::new(grid.clone(), est.iter().map(|e| e.gamma).collect())?,
        Field::new(grid.clone(), est.iter().map(|e| e.a).collect())?,
        Field::new(grid, est.iter().map(|e| e.b).collect())?,
        n as f64 / k as f64,
        Some(k),
    )
}

/// Centred moving average of `gamma`, `a_t` and `b_t` over `window` sites
/// in index order, shrinking the window at the ends.
pub fn smooth_norming(nf: &NormingFunctions, window: usize) -> Result<NormingFunctions> {
    if window == 0 {
        return Err(Error::InvalidParameter("window must be at least 1".into()));
    }
    let half = window / 2;
    let avg = |f: &Field| -> Result<Field> {
        let v = f.values();
        let n = v.len();
        let out = (0..n)
            .map(|i| {
                let (lo, hi) = (i.saturating_sub(half), (i + half).min(n - 1));
                v[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
            })
            .collect();
        Field::new(f.grid().clone(), out)
    };
    NormingFunctions::new(avg(&nf.gamma)?, avg(&nf.a_t)?, avg(&nf.b_t)?, nf.t, nf.k)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionPolicy {
    /// `T_t X > 1` at some site.
    SupAnywhere,
    /// `T_t X > 1` at every listed site.
    Sites(Vec<usize>),
}

fn exceeds(normalized: &Field, policy: &SelectionPolicy) -> bool {
    match policy {
        SelectionPolicy::SupAnywhere => normalized.sup().0 > 1.0,
        SelectionPolicy::Sites(sites) => sites.iter().all(|&s| normalized.get(s) > 1.0),
    }
}

fn check_policy(policy: &SelectionPolicy, n_sites: usize) -> Result<()> {
    if let SelectionPolicy::Sites(sites) = policy {
        if sites.is_empty() {
            return Err(Error::InvalidParameter(
                "site policy needs at least one site".into(),
            ));
        }
        if let Some(s) = sites.iter().find(|&&s| s >= n_sites) {
            return Err(Error::InvalidParameter(format!("site {s} out of range")));
        }
    }
    Ok(())
}

/// Indices of the fields selected by `policy`, in increasing order.
pub fn select_exceedances(
    data: &FieldSample,
    nf: &NormingFunctions,
    policy: &SelectionPolicy,
) -> Result<Vec<usize>> {
    check_policy(policy, data.grid().len())?;
    let keep = data
        .fields
        .par_iter()
        .map(|x| Ok(exceeds(&apply_t(x, nf)?.field, policy)))
        .collect::<Result<Vec<bool>>>()?;
    Ok(keep
        .iter()
        .enumerate()
        .filter(|(_, &k)| k)
        .map(|(i, _)| i)
        .collect())
}

/// `T_t^{<-}(t0 T_t x)` for one field; sites listed in `clamped` keep `x`.
pub fn lift_field(x: &Field, nf: &NormingFunctions, t0: f64, clamped: &[usize]) -> Result<Field> {
    x.check_grid(&nf.gamma)?;
    let vals = (0..x.len())
        .map(|i| {
            if clamped.contains(&i) {
                return x.get(i);
            }
            let g = nf.gamma.get(i);
            let c = box_cox(t0, g);
            let scale = if g.abs() < crate::gp::GAMMA_ZERO_TOL {
                1.0
            } else {
                t0.powf(g)
            };
            scale * x.get(i) + c * (nf.a_t.get(i) - g * nf.b_t.get(i))
        })
        .collect();
    Field::new(x.grid().clone(), vals)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiftReport {
    pub selected_ids: Vec<usize>,
    pub t0: f64,
    pub norming: NormingFunctions,
    pub policy: SelectionPolicy,
    /// `T_t X_i` for each selected field.
    pub normalized: Vec<Field>,
    pub lifted: Vec<Field>,
    /// Sites where `T_t X_i` was clamped to 0, per selected field.
    pub clamped: Vec<Vec<usize>>,
}

/// Selects the exceeding fields and lifts each by the factor `t0 >= 1`.
pub fn lift(
    data: &FieldSample,
    nf: &NormingFunctions,
    t0: f64,
    policy: &SelectionPolicy,
) -> Result<LiftReport> {
    if !(t0 >= 1.0 && t0.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "t0 must be at least 1, got {t0}"
        )));
    }
    check_policy(policy, data.grid().len())?;
    let per_field = data
        .fields
        .par_iter()
        .map(|x| {
            let c = apply_t(x, nf)?;
            if !exceeds(&c.field, policy) {
                return Ok(None);
            }
            let lifted = lift_field(x, nf, t0, &c.out_of_support)?;
            Ok(Some((c, lifted)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = LiftReport {
        selected_ids: Vec::new(),
        t0,
        norming: nf.clone(),
        policy: policy.clone(),
        normalized: Vec::new(),
        lifted: Vec::new(),
        clamped: Vec::new(),
    };
    for (id, item) in per_field.into_iter().enumerate() {
        if let Some((c, lifted)) = item {
            report.selected_ids.push(id);
            report.normalized.push(c.field);
            report.clamped.push(c.out_of_support);
            report.lifted.push(lifted);
        }
    }
    Ok(report)
}

impl LiftReport {
    /// Writes `norming.json`, `selected.csv`, `lifted.csv` and
    /// `manifest.json` into `dir`. `manifest` is extended with `k`, `t0`,
    /// the policy and the selected ids.
    pub fn write_dir(
        &self,
        data: &FieldSample,
        dir: &Path,
        mut manifest: serde_json::Value,
    ) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(
            dir.join("norming.json"),
            serde_json::to_string_pretty(&self.norming.to_json())?,
        )?;

        let mut wr = csv::Writer::from_path(dir.join("selected.csv"))?;
        wr.write_record(["sample_id", "site_index", "value", "normalized"])?;
        for (id, t) in self.selected_ids.iter().zip(&self.normalized) {
            for (i, (x, tx)) in data.fields[*id].values().iter().zip(t.values()).enumerate() {
                wr.write_record([id.to_string(), i.to_string(), x.to_string(), tx.to_string()])?;
            }
        }
        wr.flush()?;

        let mut wr = csv::Writer::from_path(dir.join("lifted.csv"))?;
        wr.write_record(["sample_id", "site_index", "value", "clamped"])?;
        for ((id, f), cl) in self
            .selected_ids
            .iter()
            .zip(&self.lifted)
            .zip(&self.clamped)
        {
            for (i, v) in f.values().iter().enumerate() {
                wr.write_record([
                    id.to_string(),
                    i.to_string(),
                    v.to_string(),
                    cl.contains(&i).to_string(),
                ])?;
            }
        }
        wr.flush()?;

        if let Some(obj) = manifest.as_object_mut() {
            obj.insert("k".into(), serde_json::json!(self.norming.k));
            obj.insert("t".into(), serde_json::json!(self.norming.t));
            obj.insert("t0".into(), serde_json::json!(self.t0));
            obj.insert("policy".into(), serde_json::to_value(&self.policy)?);
            obj.insert("n_fields".into(), serde_json::json!(data.len()));
            obj.insert("selected_ids".into(), serde_json::json!(self.selected_ids));
            if let Some(seed) = data.seed {
                obj.entry("data_seed").or_insert(serde_json::json!(seed));
            }
        }
        fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(&manifest)?,
        )?;
        Ok(())
    }
}

/// Settings of the moving-maximum example `X(s) = Z(s)^{gamma(s)}` with
/// `gamma(s) = 1 - s (1 - s)^2` on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub n: usize,
    pub k: usize,
    pub t0: f64,
    pub sites: usize,
    /// Standard deviation of the Gaussian kernel of the moving maximum.
    pub bandwidth: f64,
    pub truncation: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n: 20,
            k: 5,
            t0: 10.0,
            sites: 101,
            bandwidth: 1.0,
            truncation: crate::maxstable::DEFAULT_TRUNCATION,
        }
    }
}

/// Index function of the example.
pub fn scenario_gamma(s: f64) -> f64 {
    1.0 - s * (1.0 - s) * (1.0 - s)
}

/// The example with its max-stable sampler built once, for repeated runs.
#[derive(Debug, Clone)]
pub struct Scenario43 {
    pub config: ScenarioConfig,
    sampler: MaxStableSampler,
    gamma: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub data: FieldSample,
    pub report: LiftReport,
}

impl Scenario43 {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        if config.n < 20 {
            return Err(Error::InvalidParameter(format!(
                "n must be at least 20, got {}",
                config.n
            )));
        }
        let grid = Arc::new(Grid::uniform_1d(0.0, 1.0, config.sites)?);
        let spec = SpectralProfileSpec::gaussian_moving_max(1.0, config.bandwidth);
        let sampler = MaxStableSampler::new(
            &PenroseConfig::new(spec, grid.clone()).with_truncation(config.truncation),
        )?;
        let gamma = grid.sites().iter().map(|s| scenario_gamma(s[0])).collect();
        Ok(Self {
            config,
            sampler,
            gamma,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.sampler.grid()
    }

    /// `n` draws of `X = Z^gamma`.
    pub fn sample(&self, rng: &mut RandomStream) -> Result<FieldSample> {
        let fields = self
            .sampler
            .sample_batch(self.config.n, rng)
            .into_iter()
            .map(|z| {
                let v = z
                    .values()
                    .iter()
                    .zip(&self.gamma)
                    .map(|(z, g)| z.powf(*g))
                    .collect();
                Field::new(z.grid().clone(), v)
            })
            .collect::<Result<Vec<_>>>()?;
        FieldSample::new(fields, "moving_max_power", None)
    }

    pub fn run(&self, rng: &mut RandomStream) -> Result<ScenarioOutput> {
        let data = self.sample(rng)?;
        let nf = estimate_norming(&data, self.config.k)?;
        let report = lift(&data, &nf, self.config.t0, &SelectionPolicy::SupAnywhere)?;
        Ok(ScenarioOutput { data, report })
    }
}

pub fn scenario_4_3(config: ScenarioConfig, rng: &mut RandomStream) -> Result<ScenarioOutput> {
    Scenario43::new(config)?.run(rng)
}

/// Rows `sample_id,site_index,s,value`, one curve per field.
pub fn write_curves_csv<W: Write>(ids: &[usize], curves: &[Field], out: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(out);
    wr.write_record(["sample_id", "site_index", "s", "value"])?;
    for (id, f) in ids.iter().zip(curves) {
        for (i, v) in f.values().iter().enumerate() {
            wr.write_record([
                id.to_string(),
                i.to_string(),
                f.grid().site(i)[0].to_string(),
                v.to_string(),
            ])?;
        }
    }
    wr.flush()?;
    Ok(())
}

impl ScenarioOutput {
    /// The two figure data sets: the normalized exceeding fields and their
    /// lifted versions.
    pub fn write_figures(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let r = &self.report;
        write_curves_csv(
            &r.selected_ids,
            &r.normalized,
            fs::File::create(dir.join("figure_normalized.csv"))?,
        )?;
        write_curves_csv(
            &r.selected_ids,
            &r.lifted,
            fs::File::create(dir.join("figure_lifted.csv"))?,
        )?;
        Ok(())
    }
}
