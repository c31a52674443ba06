//! Discretized compact domain and real-valued functions on it.
//!
//! A [`Grid`] is an ordered list of distinct sites in R^d. The site index is
//! the identity used everywhere downstream; coordinates are kept only for
//! labeling and export. A [`Field`] carries one finite value per site.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    sites: Vec<Vec<f64>>,
}

impl Grid {
    pub fn new(sites: Vec<Vec<f64>>) -> Result<Self> {
        if sites.len() < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 sites, got {}",
                sites.len()
            )));
        }
        let dim = sites[0].len();
        if dim == 0 {
            return Err(Error::InvalidGrid("sites must have dimension >= 1".into()));
        }
        for (i, s) in sites.iter().enumerate() {
            if s.len() != dim {
                return Err(Error::InvalidGrid(format!(
                    "site {i} has dimension {}, expected {dim}",
                    s.len()
                )));
            }
            if s.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidGrid(format!(
                    "site {i} has a non-finite coordinate"
                )));
            }
        }
        let mut order: Vec<usize> = (0..sites.len()).collect();
        order.sort_by(|&a, &b| {
            sites[a]
                .iter()
                .zip(&sites[b])
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        for w in order.windows(2) {
            if sites[w[0]] == sites[w[1]] {
                return Err(Error::InvalidGrid(format!(
                    "sites {} and {} coincide",
                    w[0].min(w[1]),
                    w[0].max(w[1])
                )));
            }
        }
        Ok(Self { sites })
    }

    /// `n` equally spaced sites on `[lower, upper]`.
    pub fn uniform_1d(lower: f64, upper: f64, n: usize) -> Result<Self> {
        if !(upper > lower) {
            return Err(Error::InvalidGrid(format!(
                "empty interval [{lower}, {upper}]"
            )));
        }
        if n < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 sites, got {n}"
            )));
        }
        let step = (upper - lower) / (n - 1) as f64;
        let sites = (0..n)
            .map(|i| {
                if i == n - 1 {
                    vec![upper]
                } else {
                    vec![lower + step * i as f64]
                }
            })
            .collect();
        Self::new(sites)
    }

    /// Tensor grid with `per_axis` equally spaced points along each axis of
    /// the box `[lower, upper]`. Sites are ordered with the last axis fastest.
    pub fn regular(lower: &[f64], upper: &[f64], per_axis: usize) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidGrid(
                "bounds must have equal, nonzero length".into(),
            ));
        }
        let axes = lower
            .iter()
            .zip(upper)
            .map(|(&a, &b)| Self::uniform_1d(a, b, per_axis).map(|g| g.sites))
            .collect::<Result<Vec<_>>>()?;
        let mut sites = vec![Vec::new()];
        for axis in &axes {
            sites = sites
                .into_iter()
                .flat_map(|prefix| {
                    axis.iter().map(move |c| {
                        let mut s = prefix.clone();
                        s.push(c[0]);
                        s
                    })
                })
                .collect();
        }
        Self::new(sites)
    }

    /// Sites labeled by their index, `0, 1, ..., n-1`, on the real line.
    pub fn indexed(n: usize) -> Result<Self> {
        Self::new((0..n).map(|i| vec![i as f64]).collect())
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.sites[0].len()
    }

    pub fn site(&self, i: usize) -> &[f64] {
        &self.sites[i]
    }

    pub fn sites(&self) -> &[Vec<f64>] {
        &self.sites
    }

    /// Componentwise bounding box `(lower, upper)` of the sites.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for s in &self.sites {
            for j in 0..d {
                lo[j] = lo[j].min(s[j]);
                hi[j] = hi[j].max(s[j]);
            }
        }
        (lo, hi)
    }

    pub fn squared_distance(&self, i: usize, j: usize) -> f64 {
        self.sites[i]
            .iter()
            .zip(&self.sites[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

/// Componentwise binary operation for [`Field::combine`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldOp {
    Add,
    Sub,
    Mul,
    Div,
    Min,
    Max,
    Pow,
}

#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        self.same_grid(other) && self.values == other.values
    }
}

impl Field {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidField(format!(
                "{} values for a grid of {} sites",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidField(format!(
                "non-finite value {} at site {i}",
                values[i]
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Arc<Grid>, value: f64) -> Result<Self> {
        let n = grid.len();
        Self::new(grid, vec![value; n])
    }

    /// Evaluate `f` at every site's coordinates.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = grid.sites().iter().map(|s| f(s)).collect();
        Self::new(grid, values)
    }

    /// Caller guarantees length and finiteness.
    pub(crate) fn from_raw(grid: Arc<Grid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, site: usize) -> f64 {
        self.values[site]
    }

    pub fn same_grid(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn check_grid(&self, other: &Field) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Maximum value and the smallest site index attaining it.
    pub fn sup(&self) -> (f64, usize) {
        extremum(&self.values, |a, b| a > b)
    }

    /// Minimum value and the smallest site index attaining it.
    pub fn inf(&self) -> (f64, usize) {
        extremum(&self.values, |a, b| a < b)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    pub fn scale(&self, c: f64) -> Result<Field> {
        Field::new(
            self.grid.clone(),
            self.values.iter().map(|v| v * c).collect(),
        )
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Field> {
        Field::new(
            self.grid.clone(),
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn combine(&self, other: &Field, op: FieldOp) -> Result<Field> {
        self.check_grid(other)?;
        let mut out = Vec::with_capacity(self.len());
        for (i, (&a, &b)) in self.values.iter().zip(&other.values).enumerate() {
            let r = match op {
                FieldOp::Add => a + b,
                FieldOp::Sub => a - b,
                FieldOp::Mul => a * b,
                FieldOp::Div => {
                    if b == 0.0 {
                        return Err(Error::DomainError {
                            site: i,
                            reason: "division by zero".into(),
                        });
                    }
                    a / b
                }
                FieldOp::Min => a.min(b),
                FieldOp::Max => a.max(b),
                FieldOp::Pow => {
                    if a < 0.0 && b.fract() != 0.0 {
                        return Err(Error::DomainError {
                            site: i,
                            reason: format!("negative base {a} with fractional exponent {b}"),
                        });
                    }
                    a.powf(b)
                }
            };
            if !r.is_finite() {
                return Err(Error::DomainError {
                    site: i,
                    reason: format!("{op:?} produced a non-finite value"),
                });
            }
            out.push(r);
        }
        Ok(Field::from_raw(self.grid.clone(), out))
    }

    /// CSV with header `site_index,coord_1,...,coord_d,value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let d = self.grid.dim();
        let mut header = vec!["site_index".to_string()];
        header.extend((1..=d).map(|j| format!("coord_{j}")));
        header.push("value".into());
        w.write_record(&header)?;
        for (i, v) in self.values.iter().enumerate() {
            let mut row = vec![i.to_string()];
            row.extend(self.grid.site(i).iter().map(|c| c.to_string()));
            row.push(v.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format written by [`Field::write_csv`].
    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Field> {
        let mut r = csv::Reader::from_reader(input);
        let ncols = r.headers()?.len();
        if ncols < 3 {
            return Err(Error::InvalidField(
                "expected site_index, coordinates and value".into(),
            ));
        }
        let mut rows: Vec<(usize, Vec<f64>, f64)> = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let idx: usize = rec[0]
                .trim()
                .parse()
                .map_err(|e| Error::InvalidField(format!("bad site_index: {e}")))?;
            let nums = (1..ncols)
                .map(|j| {
                    rec[j]
                        .trim()
                        .parse::<f64>()
                        .map_err(|e| Error::InvalidField(format!("bad number: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            let (coords, value) = nums.split_at(ncols - 2);
            rows.push((idx, coords.to_vec(), value[0]));
        }
        rows.sort_by_key(|r| r.0);
        if rows.iter().enumerate().any(|(i, r)| r.0 != i) {
            return Err(Error::InvalidField(
                "site indices must be 0..n without gaps".into(),
            ));
        }
        let (sites, values): (Vec<_>, Vec<_>) = rows.into_iter().map(|(_, c, v)| (c, v)).unzip();
        Field::new(Arc::new(Grid::new(sites)?), values)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "sites": self.grid.sites(), "values": self.values })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Field> {
        #[derive(Deserialize)]
        struct Doc {
            sites: Vec<Vec<f64>>,
            values: Vec<f64>,
        }
        let doc: Doc = serde_json::from_value(value.clone())?;
        Field::new(Arc::new(Grid::new(doc.sites)?), doc.values)
    }
}

fn extremum(values: &[f64], better: impl Fn(f64, f64) -> bool) -> (f64, usize) {
    let mut best = (values[0], 0);
    for (i, &v) in values.iter().enumerate().skip(1) {
        if better(v, best.0) {
            best = (v, i);
        }
    }
    best
}

/// Maximum and smallest attaining index of `f`.
pub fn sup_field(f: &Field) -> (f64, usize) {
    f.sup()
}

/// Minimum and smallest attaining index of `f`.
pub fn inf_field(f: &Field) -> (f64, usize) {
    f.inf()
}

pub fn combine(f: &Field, g: &Field, op: FieldOp) -> Result<Field> {
    f.combine(g, op)
}
