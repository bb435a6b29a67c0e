//! Error analysis for correlated Monte Carlo series: running moments,
//! integrated autocorrelation times with automatic windowing, streaming
//! binning, jackknife resampling and weighted linear fits.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Version tag carried by every serialized measurement record.
pub const SCHEMA_VERSION: u32 = 1;

/// One named scalar result with its statistical error and effective sample count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub schema_version: u32,
    pub config_hash: String,
    pub observable: String,
    pub sweep: u64,
    pub value: f64,
    pub error: f64,
    pub n_eff: f64,
}

impl MeasurementRecord {
    pub fn new(
        observable: impl Into<String>,
        sweep: u64,
        value: f64,
        error: f64,
        n_eff: f64,
    ) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            config_hash: String::new(),
            observable: observable.into(),
            sweep,
            value,
            error,
            n_eff,
        }
    }

    pub fn with_hash(mut self, hash: &str) -> Self {
        self.config_hash = hash.to_string();
        self
    }
}

/// Welford accumulator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &RunningStats) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.mean += delta * other.count as f64 / n;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Standard error of the mean for independent samples.
    pub fn std_error(&self) -> f64 {
        if self.count < 2 {
            f64::INFINITY
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Autocorrelation {
    pub tau_int: f64,
    /// Madras–Sokal error of τ_int.
    pub tau_error: f64,
    pub window: usize,
    pub n_eff: f64,
}

/// Integrated autocorrelation time τ_int = ½ + Σ_{t=1}^{W} ρ(t), with the
/// window W the smallest t satisfying t ≥ c·τ_int(t) (Sokal, c = 6).
/// Uncorrelated data give τ_int ≈ ½ and n_eff ≈ n.
pub fn integrated_autocorrelation(series: &[f64]) -> Autocorrelation {
    integrated_autocorrelation_with(series, 6.0)
}

pub fn integrated_autocorrelation_with(series: &[f64], c: f64) -> Autocorrelation {
    let n = series.len();
    if n < 4 {
        return Autocorrelation {
            tau_int: 0.5,
            tau_error: 0.0,
            window: 0,
            n_eff: n as f64,
        };
    }
    let m = mean(series);
    let centered: Vec<f64> = series.iter().map(|x| x - m).collect();
    let gamma = |t: usize| -> f64 {
        centered[..n - t]
            .iter()
            .zip(&centered[t..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / (n - t) as f64
    };
    let g0 = gamma(0);
    if g0 <= 0.0 {
        return Autocorrelation {
            tau_int: 0.5,
            tau_error: 0.0,
            window: 0,
            n_eff: n as f64,
        };
    }
    let mut tau = 0.5;
    let mut window = n / 2;
    for t in 1..n / 2 {
        tau += gamma(t) / g0;
        if t as f64 >= c * tau {
            window = t;
            break;
        }
    }
    let tau = tau.max(0.5);
    let tau_error = tau * (2.0 * (2 * window + 1) as f64 / n as f64).sqrt();
    Autocorrelation {
        tau_int: tau,
        tau_error,
        window,
        n_eff: n as f64 / (2.0 * tau),
    }
}

/// Mean and error of a correlated series, corrected by τ_int.
pub fn correlated_mean(series: &[f64]) -> (f64, f64, Autocorrelation) {
    let ac = integrated_autocorrelation(series);
    let m = mean(series);
    let err = if series.len() > 1 {
        (variance(series) * 2.0 * ac.tau_int / series.len() as f64).sqrt()
    } else {
        f64::INFINITY
    };
    (m, err, ac)
}

/// Fixed-memory binning accumulator. Bins double in size whenever the bin
/// count would exceed `max_bins`, so arbitrarily long streams cost O(max_bins).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedSeries {
    bin_size: usize,
    max_bins: usize,
    bins: Vec<f64>,
    current_sum: f64,
    current_count: usize,
    total: RunningStats,
}

impl BinnedSeries {
    pub fn new(max_bins: usize) -> Self {
        assert!(
            max_bins >= 4 && max_bins % 2 == 0,
            "max_bins must be even and >= 4"
        );
        Self {
            bin_size: 1,
            max_bins,
            bins: Vec::new(),
            current_sum: 0.0,
            current_count: 0,
            total: RunningStats::new(),
        }
    }

    pub fn push(&mut self, x: f64) {
        self.total.push(x);
        self.current_sum += x;
        self.current_count += 1;
        if self.current_count == self.bin_size {
            self.bins.push(self.current_sum / self.bin_size as f64);
            self.current_sum = 0.0;
            self.current_count = 0;
            if self.bins.len() == self.max_bins {
                self.bins = self.bins.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect();
                self.bin_size *= 2;
            }
        }
    }

    pub fn count(&self) -> u64 {
        self.total.count()
    }

    pub fn mean(&self) -> f64 {
        self.total.mean()
    }

    pub fn sample_variance(&self) -> f64 {
        self.total.variance()
    }

    pub fn bin_size(&self) -> usize {
        self.bin_size
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    /// Error of the mean from the spread of completed bins, with τ_int of the
    /// bin means folded in when bins are still correlated.
    pub fn std_error(&self) -> f64 {
        if self.bins.len() < 4 {
            return f64::INFINITY;
        }
        let (_, err, _) = correlated_mean(&self.bins);
        err
    }

    /// Effective number of independent samples implied by the binned error.
    pub fn n_eff(&self) -> f64 {
        let se = self.std_error();
        if !se.is_finite() || se == 0.0 {
            return self.total.count() as f64;
        }
        (self.sample_variance() / (se * se)).min(self.total.count() as f64)
    }
}

/// Delete-one jackknife over blocks. `blocks[b][j]` is the block average of
/// primary observable j; `estimator` maps a vector of primary means to the
/// derived quantity. Returns (estimate on the full means, jackknife error).
pub fn jackknife<F: Fn(&[f64]) -> f64>(blocks: &[Vec<f64>], estimator: F) -> Result<(f64, f64)> {
    let nb = blocks.len();
    if nb < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: nb });
    }
    let dim = blocks[0].len();
    if let Some(b) = blocks.iter().find(|b| b.len() != dim) {
        return Err(Error::Dimension {
            expected: dim,
            found: b.len(),
        });
    }
    let mut sums = vec![0.0; dim];
    for b in blocks {
        for (s, v) in sums.iter_mut().zip(b) {
            *s += v;
        }
    }
    let full: Vec<f64> = sums.iter().map(|s| s / nb as f64).collect();
    let value = estimator(&full);
    let mut loo = vec![0.0; dim];
    let mut reps = Vec::with_capacity(nb);
    for b in blocks {
        for j in 0..dim {
            loo[j] = (sums[j] - b[j]) / (nb - 1) as f64;
        }
        reps.push(estimator(&loo));
    }
    let rm = mean(&reps);
    let var = reps.iter().map(|r| (r - rm) * (r - rm)).sum::<f64>() * (nb - 1) as f64 / nb as f64;
    Ok((value, var.sqrt()))
}

/// Average consecutive rows of per-sample primary observables into `n_blocks` blocks.
pub fn block_means(samples: &[Vec<f64>], n_blocks: usize) -> Vec<Vec<f64>> {
    let n = samples.len();
    let n_blocks = n_blocks.min(n).max(1);
    let size = n / n_blocks;
    let dim = samples.first().map_or(0, |s| s.len());
    (0..n_blocks)
        .map(|b| {
            let mut acc = vec![0.0; dim];
            for s in &samples[b * size..(b + 1) * size] {
                for (a, v) in acc.iter_mut().zip(s) {
                    *a += v;
                }
            }
            acc.iter().map(|a| a / size as f64).collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_error: f64,
    pub intercept_error: f64,
    pub chi2: f64,
}

/// Weighted least squares y ≈ a + b x. With `sigma = None` all weights are 1
/// and parameter errors come from the residual scatter.
pub fn linear_fit(x: &[f64], y: &[f64], sigma: Option<&[f64]>) -> Result<LinearFit> {
    let n = x.len();
    if y.len() != n {
        return Err(Error::Dimension {
            expected: n,
            found: y.len(),
        });
    }
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let w: Vec<f64> = match sigma {
        Some(s) => {
            if s.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    found: s.len(),
                });
            }
            s.iter().map(|v| 1.0 / (v * v)).collect()
        }
        None => vec![1.0; n],
    };
    let sw: f64 = w.iter().sum();
    let sx: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum();
    let sy: f64 = w.iter().zip(y).map(|(w, y)| w * y).sum();
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * x * x).sum();
    let sxy: f64 = w.iter().zip(x).zip(y).map(|((w, x), y)| w * x * y).sum();
    let det = sw * sxx - sx * sx;
    if det.abs() <= f64::EPSILON * sw * sxx {
        return Err(Error::Numerical(
            "degenerate abscissae in linear fit".into(),
        ));
    }
    let slope = (sw * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    let chi2: f64 = w
        .iter()
        .zip(x)
        .zip(y)
        .map(|((w, x), y)| w * (y - intercept - slope * x).powi(2))
        .sum();
    let scale = if sigma.is_none() && n > 2 {
        chi2 / (n - 2) as f64
    } else {
        1.0
    };
    Ok(LinearFit {
        slope,
        intercept,
        slope_error: (scale * sw / det).sqrt(),
        intercept_error: (scale * sxx / det).sqrt(),
        chi2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn ar1(n: usize, rho: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = 0.0;
        let s = (1.0 - rho * rho).sqrt();
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                x = rho * x + s * z;
                x
            })
            .collect()
    }

    #[test]
    fn running_stats_match_two_pass() {
        let xs = ar1(1000, 0.0, 1);
        let mut rs = RunningStats::new();
        xs.iter().for_each(|&x| rs.push(x));
        assert_relative_eq!(rs.mean(), mean(&xs), epsilon = 1e-12);
        assert_relative_eq!(rs.variance(), variance(&xs), max_relative = 1e-12);
        let mut a = RunningStats::new();
        let mut b = RunningStats::new();
        xs[..300].iter().for_each(|&x| a.push(x));
        xs[300..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        assert_relative_eq!(a.variance(), rs.variance(), max_relative = 1e-12);
    }

    #[test]
    fn tau_of_ar1_process() {
        // τ_int = ½ (1+ρ)/(1−ρ) for AR(1).
        let rho: f64 = 0.8;
        let xs = ar1(200_000, rho, 7);
        let ac = integrated_autocorrelation(&xs);
        let exact = 0.5 * (1.0 + rho) / (1.0 - rho);
        assert!(
            (ac.tau_int - exact).abs() < 4.0 * ac.tau_error + 0.05 * exact,
            "{ac:?} vs {exact}"
        );
        let white = integrated_autocorrelation(&ar1(50_000, 0.0, 3));
        assert!((white.tau_int - 0.5).abs() < 0.1);
    }

    #[test]
    fn binned_error_tracks_autocorrelation() {
        let rho: f64 = 0.9;
        let xs = ar1(400_000, rho, 11);
        let mut bs = BinnedSeries::new(256);
        xs.iter().for_each(|&x| bs.push(x));
        let exact_se = (2.0 * 0.5 * (1.0 + rho) / (1.0 - rho) / xs.len() as f64).sqrt();
        assert!(bs.bins().len() <= 256);
        assert!(
            (bs.std_error() / exact_se - 1.0).abs() < 0.3,
            "{} vs {}",
            bs.std_error(),
            exact_se
        );
        assert_relative_eq!(bs.mean(), mean(&xs), epsilon = 1e-10);
    }

    #[test]
    fn jackknife_of_mean_is_standard_error() {
        let xs = ar1(1000, 0.0, 5);
        let blocks: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        let (v, e) = jackknife(&blocks, |m| m[0]).unwrap();
        assert_relative_eq!(v, mean(&xs), epsilon = 1e-12);
        assert_relative_eq!(e, (variance(&xs) / 1000.0).sqrt(), max_relative = 1e-9);
        assert!(jackknife(&blocks[..1], |m| m[0]).is_err());
    }

    #[test]
    fn block_means_average_rows() {
        let samples: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 1.0]).collect();
        let b = block_means(&samples, 5);
        assert_eq!(b.len(), 5);
        assert_eq!(b[0], vec![0.5, 1.0]);
        assert_eq!(b[4], vec![8.5, 1.0]);
    }

    #[test]
    fn linear_fit_recovers_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|x| 2.0 - 3.0 * x).collect();
        let f = linear_fit(&x, &y, None).unwrap();
        assert_relative_eq!(f.slope, -3.0, epsilon = 1e-12);
        assert_relative_eq!(f.intercept, 2.0, epsilon = 1e-12);
        let s = vec![0.1; 10];
        let f = linear_fit(&x, &y, Some(&s)).unwrap();
        assert_relative_eq!(f.slope, -3.0, epsilon = 1e-12);
        assert!(f.slope_error > 0.0);
        assert!(linear_fit(&[1.0, 1.0], &[0.0, 1.0], None).is_err());
    }

    #[test]
    fn record_serializes_all_fields() {
        let r = MeasurementRecord::new("action", 10, 1.5, 0.1, 100.0).with_hash("abc");
        let js = serde_json::to_string(&r).unwrap();
        for key in [
            "schema_version",
            "config_hash",
            "observable",
            "sweep",
            "value",
            "error",
            "n_eff",
        ] {
            assert!(js.contains(key));
        }
    }
}
