//! Spectral profile generators.
//!
//! Every sampled profile `V` is nonnegative with `sup V == omega0` exactly:
//! raw values are divided by their own maximum and multiplied by `omega0`,
//! and the maximizing site is then pinned to `omega0`.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use rayon::prelude::*;

use crate::rng::{RandomStream, CHUNK};
use crate::stats::Accumulator;

/// Default kernel width for [`ProfileKind::GaussianMovingMax`].
pub const DEFAULT_BANDWIDTH: f64 = 0.25;
/// Default correlation length for [`ProfileKind::RescaledPositiveField`].
pub const DEFAULT_CORR_LENGTH: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileKind {
    /// `V == omega0`: complete dependence.
    Constant,
    /// Gaussian kernel centred at a uniform point of the grid's bounding box.
    GaussianMovingMax {
        #[serde(default = "default_bandwidth")]
        bandwidth: f64,
    },
    /// `exp(G)` for a unit-variance Gaussian field with squared-exponential
    /// covariance of length `corr_length`.
    RescaledPositiveField {
        #[serde(default = "default_corr_length")]
        corr_length: f64,
    },
    /// `(omega0 B, omega0 (1 - B))` with `B ~ Bernoulli(1/2)`; two sites only.
    BernoulliPair,
}

fn default_bandwidth() -> f64 {
    DEFAULT_BANDWIDTH
}

fn default_corr_length() -> f64 {
    DEFAULT_CORR_LENGTH
}

impl ProfileKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProfileKind::Constant => "constant",
            ProfileKind::GaussianMovingMax { .. } => "gaussian_moving_max",
            ProfileKind::RescaledPositiveField { .. } => "rescaled_positive_field",
            ProfileKind::BernoulliPair => "bernoulli_pair",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralProfileSpec {
    #[serde(flatten)]
    pub kind: ProfileKind,
    pub omega0: f64,
}

impl SpectralProfileSpec {
    pub fn new(kind: ProfileKind, omega0: f64) -> Result<Self> {
        let spec = Self { kind, omega0 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn constant(omega0: f64) -> Self {
        Self {
            kind: ProfileKind::Constant,
            omega0,
        }
    }

    pub fn gaussian_moving_max(omega0: f64, bandwidth: f64) -> Self {
        Self {
            kind: ProfileKind::GaussianMovingMax { bandwidth },
            omega0,
        }
    }

    pub fn rescaled_positive_field(omega0: f64, corr_length: f64) -> Self {
        Self {
            kind: ProfileKind::RescaledPositiveField { corr_length },
            omega0,
        }
    }

    pub fn bernoulli_pair(omega0: f64) -> Self {
        Self {
            kind: ProfileKind::BernoulliPair,
            omega0,
        }
    }

    /// Parse a kind name as used on the command line and in config files.
    pub fn from_name(name: &str, omega0: f64, bandwidth: f64, corr_length: f64) -> Result<Self> {
        let kind = match name {
            "constant" => ProfileKind::Constant,
            "gaussian_moving_max" | "gaussian" => ProfileKind::GaussianMovingMax { bandwidth },
            "rescaled_positive_field" | "positive_field" => {
                ProfileKind::RescaledPositiveField { corr_length }
            }
            "bernoulli_pair" | "bernoulli" => ProfileKind::BernoulliPair,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown profile kind {other:?}"
                )))
            }
        };
        Self::new(kind, omega0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega0 > 0.0 && self.omega0.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "omega0 must be positive, got {}",
                self.omega0
            )));
        }
        match self.kind {
            ProfileKind::GaussianMovingMax { bandwidth }
                if !(bandwidth > 0.0 && bandwidth.is_finite()) =>
            {
                Err(Error::InvalidParameter(format!(
                    "bandwidth must be positive, got {bandwidth}"
                )))
            }
            ProfileKind::RescaledPositiveField { corr_length }
                if !(corr_length > 0.0 && corr_length.is_finite()) =>
            {
                Err(Error::InvalidParameter(format!(
                    "corr_length must be positive, got {corr_length}"
                )))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
enum Prepared {
    Constant,
    Gaussian {
        inv_two_bw2: f64,
        lower: Vec<f64>,
        width: Vec<f64>,
    },
    PositiveField {
        /// `n x r` factor with `factor * factor^T` = covariance.
        factor: DMatrix<f64>,
    },
    Bernoulli,
}

/// Profile generator bound to a grid, with per-grid setup done once.
#[derive(Debug, Clone)]
pub struct ProfileSampler {
    spec: SpectralProfileSpec,
    grid: Arc<Grid>,
    prepared: Prepared,
}

impl ProfileSampler {
    pub fn new(spec: &SpectralProfileSpec, grid: Arc<Grid>) -> Result<Self> {
        spec.validate()?;
        let prepared = match spec.kind {
            ProfileKind::Constant => Prepared::Constant,
            ProfileKind::BernoulliPair => {
                if grid.len() != 2 {
                    return Err(Error::SpecGridMismatch {
                        kind: spec.kind.name(),
                        expected: 2,
                        actual: grid.len(),
                    });
                }
                Prepared::Bernoulli
            }
            ProfileKind::GaussianMovingMax { bandwidth } => {
                let (lower, upper) = grid.bounding_box();
                let width = upper.iter().zip(&lower).map(|(u, l)| u - l).collect();
                Prepared::Gaussian {
                    inv_two_bw2: 1.0 / (2.0 * bandwidth * bandwidth),
                    lower,
                    width,
                }
            }
            ProfileKind::RescaledPositiveField { corr_length } => Prepared::PositiveField {
                factor: covariance_factor(&grid, corr_length),
            },
        };
        Ok(Self {
            spec: spec.clone(),
            grid,
            prepared,
        })
    }

    pub fn spec(&self) -> &SpectralProfileSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn omega0(&self) -> f64 {
        self.spec.omega0
    }

    /// Fill `out` (length = number of sites) with one profile draw.
    pub fn sample_into(&self, rng: &mut RandomStream, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.grid.len());
        let omega0 = self.spec.omega0;
        match &self.prepared {
            Prepared::Constant => out.fill(omega0),
            Prepared::Bernoulli => {
                if rng.uniform() < 0.5 {
                    out.copy_from_slice(&[omega0, 0.0]);
                } else {
                    out.copy_from_slice(&[0.0, omega0]);
                }
            }
            Prepared::Gaussian {
                inv_two_bw2,
                lower,
                width,
            } => {
                let centre: Vec<f64> = lower
                    .iter()
                    .zip(width)
                    .map(|(l, w)| l + rng.uniform() * w)
                    .collect();
                for (o, s) in out.iter_mut().zip(self.grid.sites()) {
                    *o = s.iter().zip(&centre).map(|(a, c)| (a - c) * (a - c)).sum();
                }
                let dmin = out.iter().copied().fold(f64::INFINITY, f64::min);
                for o in out.iter_mut() {
                    *o = (-(*o - dmin) * inv_two_bw2).exp();
                }
                normalize_sup(out, omega0);
            }
            Prepared::PositiveField { factor } => {
                let z: Vec<f64> = (0..factor.ncols())
                    .map(|_| StandardNormal.sample(rng))
                    .collect();
                for (i, o) in out.iter_mut().enumerate() {
                    *o = factor.row(i).iter().zip(&z).map(|(a, b)| a * b).sum();
                }
                let gmax = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                for o in out.iter_mut() {
                    *o = (*o - gmax).exp();
                }
                normalize_sup(out, omega0);
            }
        }
    }

    pub fn sample(&self, rng: &mut RandomStream) -> Field {
        let mut v = vec![0.0; self.grid.len()];
        self.sample_into(rng, &mut v);
        Field::from_raw(self.grid.clone(), v)
    }

    /// Closed-form `E V(s)` when the profile is degenerate enough to have one.
    pub fn exact_mean(&self) -> Option<Vec<f64>> {
        let n = self.grid.len();
        match self.prepared {
            Prepared::Constant => Some(vec![self.spec.omega0; n]),
            Prepared::Bernoulli => Some(vec![self.spec.omega0 / 2.0; n]),
            _ => None,
        }
    }

    /// Per-site Monte Carlo mean and standard error over `n` draws.
    pub fn mean_with_se(&self, n: usize, rng: &mut RandomStream) -> (Vec<f64>, Vec<f64>) {
        let sites = self.grid.len();
        let root = rng.split();
        let parts: Vec<Vec<Accumulator>> = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut stream = root.fork(c as u64);
                let mut acc = vec![Accumulator::default(); sites];
                let mut buf = vec![0.0; sites];
                for _ in 0..CHUNK.min(n - c * CHUNK) {
                    self.sample_into(&mut stream, &mut buf);
                    for (a, &v) in acc.iter_mut().zip(&buf) {
                        a.push(v);
                    }
                }
                acc
            })
            .collect();
        let mut total = vec![Accumulator::default(); sites];
        for part in &parts {
            for (t, a) in total.iter_mut().zip(part) {
                t.merge(a);
            }
        }
        total
            .iter()
            .map(|a| {
                let m = a.finish();
                (m.mean, m.std_error)
            })
            .unzip()
    }
}

/// Divide by the maximum, scale by `omega0`, and pin the argmax to `omega0`.
fn normalize_sup(values: &mut [f64], omega0: f64) {
    let (mut imax, mut vmax) = (0, values[0]);
    for (i, &v) in values.iter().enumerate() {
        if v > vmax {
            imax = i;
            vmax = v;
        }
    }
    for v in values.iter_mut() {
        *v = omega0 * (*v / vmax);
    }
    values[imax] = omega0;
}

/// Low-rank square root of the squared-exponential covariance on `grid`.
fn covariance_factor(grid: &Grid, corr_length: f64) -> DMatrix<f64> {
    let n = grid.len();
    let denom = 2.0 * corr_length * corr_length;
    let cov = DMatrix::from_fn(n, n, |i, j| (-grid.squared_distance(i, j) / denom).exp());
    let eig = SymmetricEigen::new(cov);
    let lmax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..n)
        .filter(|&k| eig.eigenvalues[k] > 1e-12 * lmax)
        .collect();
    DMatrix::from_fn(n, keep.len(), |i, c| {
        let k = keep[c];
        eig.eigenvectors[(i, k)] * eig.eigenvalues[k].sqrt()
    })
}

/// One profile draw on `grid`.
pub fn sample_profile(
    spec: &SpectralProfileSpec,
    grid: &Arc<Grid>,
    rng: &mut RandomStream,
) -> Result<Field> {
    Ok(ProfileSampler::new(spec, grid.clone())?.sample(rng))
}

/// Per-site Monte Carlo mean of `n` independent profiles.
pub fn profile_mean(
    spec: &SpectralProfileSpec,
    grid: &Arc<Grid>,
    n: usize,
    rng: &mut RandomStream,
) -> Result<Field> {
    if n == 0 {
        return Err(Error::InvalidParameter("profile_mean needs n >= 1".into()));
    }
    let sampler = ProfileSampler::new(spec, grid.clone())?;
    let (mean, _) = sampler.mean_with_se(n, rng);
    Field::new(grid.clone(), mean)
}
