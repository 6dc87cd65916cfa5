//! Estimators shared by the verification suites: sample moments with
//! standard errors, Kolmogorov–Smirnov distances, histograms and a
//! method-of-moments Beta fit.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

/// Equality checks pass when the discrepancy is within this many standard errors.
pub const EQUALITY_SIGMAS: f64 = 3.0;
/// "Distinctly nonzero" checks require this many standard errors.
pub const DISTINCT_SIGMAS: f64 = 5.0;

/// Asymptotic 99% critical value of the one-sample KS statistic.
pub fn ks_critical_99(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub estimate: f64,
    pub stderr: f64,
}

impl Estimate {
    /// Number of standard errors separating the estimate from `target`.
    /// Infinite when the estimate has zero spread and misses the target.
    pub fn z_score(&self, target: f64) -> f64 {
        let diff = (self.estimate - target).abs();
        if diff == 0.0 {
            0.0
        } else {
            diff / self.stderr
        }
    }

    pub fn within(&self, target: f64, sigmas: f64) -> bool {
        (self.estimate - target).abs() <= sigmas * self.stderr
    }
}

/// Running sums for one scalar statistic; batches merge by adding counts.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MeanAccumulator {
    count: u64,
    mean: f64,
    m2: f64,
}

impl MeanAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, value: f64) {
        self.count += 1;
        let delta = value - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (value - self.mean);
    }

    /// Chan et al. pairwise merge.
    pub fn merge(&mut self, other: &Self) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    pub fn estimate(&self) -> Estimate {
        let stderr = if self.count == 0 {
            f64::NAN
        } else {
            (self.variance() / self.count as f64).sqrt()
        };
        Estimate {
            estimate: self.mean,
            stderr,
        }
    }
}

impl FromIterator<f64> for MeanAccumulator {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Self::new();
        for v in iter {
            acc.push(v);
        }
        acc
    }
}

/// Mean of `values` with the standard error `sd / √n`.
pub fn mean_estimate(values: &[f64]) -> Estimate {
    values.iter().copied().collect::<MeanAccumulator>().estimate()
}

/// Raw moments `E[X^k]` for each requested order, with the standard error
/// computed directly from the spread of the k-th powers.
pub fn empirical_moments(samples: &[f64], orders: &[u32]) -> BTreeMap<u32, Estimate> {
    orders
        .iter()
        .map(|&k| {
            let acc: MeanAccumulator = samples.iter().map(|x| x.powi(k as i32)).collect();
            (k, acc.estimate())
        })
        .collect()
}

/// Sample summary with moments and the sorted sample.
#[derive(Debug, Clone)]
pub struct EmpiricalSummary {
    pub n: usize,
    pub moments: BTreeMap<u32, Estimate>,
    pub ecdf: Vec<f64>,
    pub ks_vs: Option<(String, f64)>,
}

impl EmpiricalSummary {
    pub fn new(samples: &[f64], orders: &[u32]) -> Self {
        Self {
            n: samples.len(),
            moments: empirical_moments(samples, orders),
            ecdf: sorted(samples),
            ks_vs: None,
        }
    }

    pub fn with_ks<F: Fn(f64) -> f64>(mut self, name: &str, cdf: F) -> Self {
        let d = ks_sorted(&self.ecdf, cdf);
        self.ks_vs = Some((name.to_string(), d));
        self
    }

    /// Empirical CDF at `x`.
    pub fn ecdf_at(&self, x: f64) -> f64 {
        let k = self.ecdf.partition_point(|&v| v <= x);
        k as f64 / self.n as f64
    }
}

fn sorted(samples: &[f64]) -> Vec<f64> {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Two-sided one-sample Kolmogorov–Smirnov distance `sup |F̂ − F|`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], reference_cdf: F) -> f64 {
    ks_sorted(&sorted(samples), reference_cdf)
}

fn ks_sorted<F: Fn(f64) -> f64>(sorted: &[f64], cdf: F) -> f64 {
    let n = sorted.len() as f64;
    if sorted.is_empty() {
        return 0.0;
    }
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        // ties: the ECDF jumps once over the whole block
        let x = sorted[i];
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == x {
            j += 1;
        }
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((j + 1) as f64 / n - f);
        i = j + 1;
    }
    d
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let a = sorted(a);
    let b = sorted(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Method-of-moments Beta parameters from a mean and variance.
pub fn beta_from_moments(mean: f64, variance: f64) -> Result<(f64, f64)> {
    if !(mean > 0.0 && mean < 1.0) || variance <= 0.0 || variance >= mean * (1.0 - mean) {
        return Err(Error::DegenerateVariance { mean, variance });
    }
    let common = mean * (1.0 - mean) / variance - 1.0;
    Ok((mean * common, (1.0 - mean) * common))
}

/// Method-of-moments Beta fit using the sample mean and unbiased variance.
pub fn fit_beta_by_moments(samples: &[f64]) -> Result<(f64, f64)> {
    let acc: MeanAccumulator = samples.iter().copied().collect();
    beta_from_moments(acc.estimate().estimate, acc.variance())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }

    pub fn bin_edges(&self, bin: usize) -> (f64, f64) {
        let w = (self.hi - self.lo) / self.counts.len() as f64;
        (self.lo + bin as f64 * w, self.lo + (bin + 1) as f64 * w)
    }
}

/// Equal-width histogram on `[lo, hi)`; the upper edge `hi` itself lands in
/// the last bin. Samples outside the range go to the under/overflow counters.
pub fn histogram(samples: &[f64], bins: usize, range: (f64, f64)) -> Result<Histogram> {
    let (lo, hi) = range;
    if bins == 0 {
        return Err(crate::error::invalid("bins", "must be positive"));
    }
    if !(hi > lo) {
        return Err(crate::error::invalid("range", "upper edge must exceed lower edge"));
    }
    let mut h = Histogram {
        lo,
        hi,
        counts: vec![0; bins],
        underflow: 0,
        overflow: 0,
    };
    let width = (hi - lo) / bins as f64;
    for &x in samples {
        if x < lo {
            h.underflow += 1;
        } else if x > hi {
            h.overflow += 1;
        } else {
            let k = (((x - lo) / width) as usize).min(bins - 1);
            h.counts[k] += 1;
        }
    }
    Ok(h)
}
