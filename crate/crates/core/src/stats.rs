//! Goodness-of-fit and Monte Carlo summary helpers.

use serde::Serialize;

/// Result of a Kolmogorov-Smirnov test.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    /// Asymptotic p-value (Kolmogorov distribution with Stephens' correction).
    pub p_value: f64,
    /// Effective sample size used for the critical value.
    pub n_eff: f64,
}

impl KsResult {
    /// Asymptotic critical value of the statistic at level `alpha`.
    pub fn critical_value(&self, alpha: f64) -> f64 {
        ks_critical_value(self.n_eff, alpha)
    }

    pub fn rejects(&self, alpha: f64) -> bool {
        self.statistic >= self.critical_value(alpha)
    }
}

/// `sqrt(-ln(alpha/2) / 2) / sqrt(n)`; about `1.628 / sqrt(n)` at 1%.
pub fn ks_critical_value(n_eff: f64, alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / n_eff.sqrt()
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    // the alternating series converges slowly below 0.2, where P(K > lambda) = 1 to double precision
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-17 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn p_value(d: f64, n_eff: f64) -> f64 {
    let sq = n_eff.sqrt();
    kolmogorov_survival((sq + 0.12 + 0.11 / sq) * d)
}

fn sorted(data: &[f64]) -> Vec<f64> {
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// One-sample KS test of `data` against the continuous cdf `cdf`.
pub fn ks_one_sample(data: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let xs = sorted(data);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    KsResult {
        statistic: d,
        p_value: p_value(d, n),
        n_eff: n,
    }
}

/// Two-sample KS test. Ties are handled by advancing both samples past equal values.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let xs = sorted(a);
    let ys = sorted(b);
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = xs[i].min(ys[j]);
        while i < n && xs[i] <= x {
            i += 1;
        }
        while j < m && ys[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let n_eff = (n * m) as f64 / (n + m) as f64;
    KsResult {
        statistic: d,
        p_value: p_value(d, n_eff),
        n_eff,
    }
}

/// Standard Pareto cdf `1 - 1/x` for `x >= 1`.
pub fn standard_pareto_cdf(x: f64) -> f64 {
    if x <= 1.0 {
        0.0
    } else {
        1.0 - 1.0 / x
    }
}

/// Standard Frechet cdf `exp(-1/x)` for `x > 0`.
pub fn standard_frechet_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-1.0 / x).exp()
    }
}

/// One named pass/fail check in a validation report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    /// Passes when `statistic < threshold` (distances, z-scores).
    pub fn below(name: impl Into<String>, statistic: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            statistic,
            threshold,
            pass: statistic < threshold,
        }
    }

    /// Passes when `statistic > threshold` (p-values).
    pub fn above(name: impl Into<String>, statistic: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            statistic,
            threshold,
            pass: statistic > threshold,
        }
    }
}

/// `|a - b|` in units of `se`; 0 when both agree exactly.
pub fn z_score(a: f64, b: f64, se: f64) -> f64 {
    let d = (a - b).abs();
    if d <= 1e-12 {
        0.0
    } else if se > 0.0 {
        d / se
    } else {
        f64::INFINITY
    }
}

/// Sample mean and standard error of the mean.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct MeanSe {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

/// Streaming mean/variance (Welford).
#[derive(Debug, Clone, Copy, Default)]
pub struct Accumulator {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Accumulator) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        self.mean += delta * other.n as f64 / n as f64;
        self.m2 += other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn finish(&self) -> MeanSe {
        let var = if self.n > 1 {
            self.m2 / (self.n - 1) as f64
        } else {
            0.0
        };
        MeanSe {
            mean: self.mean,
            std_error: (var / self.n.max(1) as f64).sqrt(),
            n: self.n,
        }
    }
}

pub fn mean_se(xs: impl IntoIterator<Item = f64>) -> MeanSe {
    let mut acc = Accumulator::default();
    xs.into_iter().for_each(|x| acc.push(x));
    acc.finish()
}

/// Binomial standard error `sqrt(p(1-p)/n)`.
pub fn binomial_se(p: f64, n: usize) -> f64 {
    let p = p.clamp(0.0, 1.0);
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Sample Pearson correlation.
pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

pub fn median(xs: &[f64]) -> f64 {
    let v = sorted(xs);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
