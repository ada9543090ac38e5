//! Bias and distribution statistics over a normalized-moment series:
//! running averages, the rank statistic, variance traces, histograms,
//! truncated-normal fits, KS statistics, and residue-class partitions.

use crate::apstore::ApDatabase;
use crate::families::{moment_series, Family, FamilyError};
use statrs::function::erf;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("series is empty")]
    EmptySeries,
    #[error("sample needs at least {0} values")]
    SampleTooSmall(usize),
    #[error("sample variance is zero")]
    ZeroVariance,
    #[error("bucket_count must be at least 1")]
    NoBuckets,
    #[error("rank statistic needs X >= 3, got {0}")]
    BoundTooSmall(u64),
    #[error("truncated-moment fit did not converge")]
    FitDiverged,
    #[error(transparent)]
    Family(#[from] FamilyError),
}

/// Prefix running averages of a (p, B₂) series.
#[derive(Debug, Clone, Copy)]
pub struct BiasPoint {
    pub p: u64,
    pub b2: f64,
    pub run_avg: f64,
    pub log_avg: f64,
}

#[derive(Debug, Clone)]
pub struct BiasReport {
    pub points: Vec<BiasPoint>,
}

impl BiasReport {
    pub fn final_point(&self) -> BiasPoint {
        *self.points.last().expect("report is nonempty by construction")
    }

    /// CSV emission: header `p,B2,run_avg,log_avg`.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "p,B2,run_avg,log_avg")?;
        for pt in &self.points {
            writeln!(w, "{},{},{},{}", pt.p, pt.b2, pt.run_avg, pt.log_avg)?;
        }
        Ok(())
    }
}

/// Unweighted and log-weighted (natural log) running averages at every
/// prefix of the series. Primes must be ascending.
pub fn running_averages(series: &[(u64, f64)]) -> Result<BiasReport, StatsError> {
    if series.is_empty() {
        return Err(StatsError::EmptySeries);
    }
    let mut sum = 0.0;
    let mut wsum = 0.0;
    let mut wtot = 0.0;
    let points = series
        .iter()
        .enumerate()
        .map(|(i, &(p, b2))| {
            sum += b2;
            let w = (p as f64).ln();
            wsum += b2 * w;
            wtot += w;
            BiasPoint { p, b2, run_avg: sum / (i + 1) as f64, log_avg: wsum / wtot }
        })
        .collect();
    Ok(BiasReport { points })
}

/// The first-moment rank statistic -(1/X) Σ_{3<=p<=X} A₁(p) log(p) / p,
/// an estimator of the family's rank over Q(T).
pub fn rank_statistic(db: &ApDatabase, f: &Family, x: u64) -> Result<f64, StatsError> {
    if x < 3 {
        return Err(StatsError::BoundTooSmall(x));
    }
    let series = moment_series(db, f, &[1], 3, x, 0)?;
    let firsts = series.first_moments().expect("order 1 requested");
    let sum: f64 = firsts
        .iter()
        .map(|&(p, a1)| (a1 as f64) * (p as f64).ln() / p as f64)
        .sum();
    Ok(-sum / x as f64)
}

/// Population variance (divide by N) of every prefix. A length-1 prefix
/// reports 0.
pub fn variance_trace(series: &[(u64, f64)]) -> Vec<(u64, f64)> {
    let mut mean = 0.0;
    let mut m2 = 0.0;
    series
        .iter()
        .enumerate()
        .map(|(i, &(p, v))| {
            let n = (i + 1) as f64;
            let delta = v - mean;
            mean += delta / n;
            m2 += delta * (v - mean);
            (p, m2 / n)
        })
        .collect()
}

/// CSV emission: header `p,variance`.
pub fn write_variance_csv(trace: &[(u64, f64)], w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "p,variance")?;
    for &(p, v) in trace {
        writeln!(w, "{p},{v}")?;
    }
    Ok(())
}

/// Equal-width histogram. Values equal to the upper bound land in the last
/// bucket; values outside explicit bounds are tallied in `below`/`above`.
/// Degenerate bounds (lo == hi) put every in-range value in the last bucket.
#[derive(Debug, Clone)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub below: u64,
    pub above: u64,
}

impl Histogram {
    pub fn bucket_bounds(&self, i: usize) -> (f64, f64) {
        let width = (self.hi - self.lo) / self.counts.len() as f64;
        (self.lo + i as f64 * width, self.lo + (i + 1) as f64 * width)
    }

    /// CSV emission: header `bucket_low,bucket_high,count`.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "bucket_low,bucket_high,count")?;
        for (i, &c) in self.counts.iter().enumerate() {
            let (lo, hi) = self.bucket_bounds(i);
            writeln!(w, "{lo},{hi},{c}")?;
        }
        Ok(())
    }
}

pub fn histogram(
    sample: &[f64],
    bucket_count: usize,
    bounds: Option<(f64, f64)>,
) -> Result<Histogram, StatsError> {
    if sample.is_empty() {
        return Err(StatsError::EmptySeries);
    }
    if bucket_count == 0 {
        return Err(StatsError::NoBuckets);
    }
    let (lo, hi) = bounds.unwrap_or_else(|| {
        sample.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
    });
    let width = (hi - lo) / bucket_count as f64;
    let mut counts = vec![0u64; bucket_count];
    let mut below = 0;
    let mut above = 0;
    for &v in sample {
        if v < lo {
            below += 1;
        } else if v > hi {
            above += 1;
        } else if v == hi || width == 0.0 {
            counts[bucket_count - 1] += 1;
        } else {
            let idx = ((v - lo) / width) as usize;
            counts[idx.min(bucket_count - 1)] += 1;
        }
    }
    Ok(Histogram { lo, hi, counts, below, above })
}

/// Standard normal density.
fn phi(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF via the complementary error function.
fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erf::erfc(-z / std::f64::consts::SQRT_2)
}

/// A normal(μ, σ) restricted to [lower, upper] and renormalized.
#[derive(Debug, Clone, Copy)]
pub struct TruncatedNormalFit {
    pub mu: f64,
    pub sigma: f64,
    pub lower: f64,
    pub upper: f64,
}

impl TruncatedNormalFit {
    fn normalizer(&self) -> f64 {
        std_normal_cdf((self.upper - self.mu) / self.sigma)
            - std_normal_cdf((self.lower - self.mu) / self.sigma)
    }

    /// Density, normalized to integrate to 1 over [lower, upper].
    pub fn pdf(&self, x: f64) -> f64 {
        if x < self.lower || x > self.upper {
            return 0.0;
        }
        phi((x - self.mu) / self.sigma) / (self.sigma * self.normalizer())
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lower {
            return 0.0;
        }
        if x >= self.upper {
            return 1.0;
        }
        let base = std_normal_cdf((self.lower - self.mu) / self.sigma);
        ((std_normal_cdf((x - self.mu) / self.sigma) - base) / self.normalizer()).clamp(0.0, 1.0)
    }
}

/// How "same mean and variance" is matched when fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FitMode {
    /// The parent normal takes the sample mean and (population) standard
    /// deviation before truncation. Closed-form and stable.
    #[default]
    Parent,
    /// Solve for parent (μ, σ) so the truncated law itself matches the
    /// sample mean and variance.
    TruncatedMoments,
}

/// Fits a truncated normal with lower/upper at the sample min/max.
pub fn truncated_normal_fit(
    sample: &[f64],
    mode: FitMode,
) -> Result<TruncatedNormalFit, StatsError> {
    if sample.len() < 2 {
        return Err(StatsError::SampleTooSmall(2));
    }
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let var = sample.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var <= 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let lower = sample.iter().cloned().fold(f64::INFINITY, f64::min);
    let upper = sample.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    match mode {
        FitMode::Parent => Ok(TruncatedNormalFit { mu: mean, sigma: var.sqrt(), lower, upper }),
        FitMode::TruncatedMoments => {
            let mut mu = mean;
            let mut sigma = var.sqrt();
            for _ in 0..500 {
                let alpha = (lower - mu) / sigma;
                let beta = (upper - mu) / sigma;
                let z = std_normal_cdf(beta) - std_normal_cdf(alpha);
                if z <= 0.0 {
                    return Err(StatsError::FitDiverged);
                }
                let r1 = (phi(alpha) - phi(beta)) / z;
                let t_mean = mu + sigma * r1;
                let t_var =
                    sigma * sigma * (1.0 + (alpha * phi(alpha) - beta * phi(beta)) / z - r1 * r1);
                if t_var <= 0.0 {
                    return Err(StatsError::FitDiverged);
                }
                let mean_err = mean - t_mean;
                let ratio = (var / t_var).sqrt().clamp(0.5, 2.0);
                mu += mean_err;
                sigma *= ratio;
                if mean_err.abs() <= 1e-12 * (1.0 + mean.abs()) && (ratio - 1.0).abs() <= 1e-12 {
                    return Ok(TruncatedNormalFit { mu, sigma, lower, upper });
                }
            }
            Err(StatsError::FitDiverged)
        }
    }
}

/// Asymptotic Kolmogorov survival function Q(λ) = 2 Σ (-1)^{k-1} e^{-2k²λ²},
/// truncated once terms drop below 1e-12.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..10_000u32 {
        let term = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-12 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sided KS statistic of a sample against a continuous CDF, with the
/// asymptotic p-value of sqrt(n)·D.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    assert!(!sample.is_empty(), "KS statistic of an empty sample");
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("sample contains NaN"));
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    (d, kolmogorov_q(n.sqrt() * d))
}

/// Splits a series by p mod m, preserving order inside each class.
pub fn partition_by_residue(series: &[(u64, f64)], m: u64) -> BTreeMap<u64, Vec<(u64, f64)>> {
    assert!(m >= 2, "residue modulus must be at least 2");
    let mut map: BTreeMap<u64, Vec<(u64, f64)>> = BTreeMap::new();
    for &(p, v) in series {
        map.entry(p % m).or_default().push((p, v));
    }
    map
}
