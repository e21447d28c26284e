//! Small statistical helpers shared by the estimators and diagnostics.

use statrs::distribution::{ContinuousCDF, Normal};

/// Neumaier-compensated running sum; summation order is the call order, so
/// results are bit-reproducible.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// `Φ(x)`.
pub fn normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

/// `1 − Φ(x)`, accurate in the upper tail.
pub fn normal_sf(x: f64) -> f64 {
    std_normal().sf(x)
}

/// `Φ⁻¹(p)`.
pub fn normal_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// Sample mean and unbiased variance.
pub fn mean_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mut s = CompensatedSum::new();
    xs.iter().for_each(|&x| s.add(x));
    let mean = s.value() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let mut ss = CompensatedSum::new();
    xs.iter().for_each(|&x| ss.add((x - mean) * (x - mean)));
    (mean, ss.value() / (n - 1.0))
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Ordinary least squares `y ≈ intercept + slope·x`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Slope of `log y` against `log x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly).0
}

/// Wilson score interval for `k` successes out of `n` at normal quantile `z`.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Mean and its standard error from `batches` contiguous batch means.
pub fn batch_means(xs: &[f64], batches: usize) -> (f64, f64) {
    let size = xs.len() / batches.max(1);
    if size == 0 || batches < 2 {
        let (m, v) = mean_variance(xs);
        return (m, (v / xs.len() as f64).sqrt());
    }
    let means: Vec<f64> = xs
        .chunks_exact(size)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    let (m, v) = mean_variance(&means);
    (m, (v / batches as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_beats_naive() {
        let mut s = CompensatedSum::new();
        s.add(1.0);
        for _ in 0..10 {
            s.add(1e-16);
        }
        s.add(-1.0);
        assert!((s.value() - 1e-15).abs() < 1e-30);
    }

    #[test]
    fn normal_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_sf(2.0) / 0.022_750_131_948_179_195 - 1.0).abs() < 1e-9);
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-9);
    }

    #[test]
    fn fits() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(0.5)).collect();
        assert!((log_log_slope(&xs, &ys) - 0.5).abs() < 1e-12);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn wilson_contains_estimate() {
        for (k, n) in [(0u64, 10u64), (5, 10), (10, 10), (37, 1000)] {
            let (lo, hi) = wilson_interval(k, n, 1.96);
            let p = k as f64 / n as f64;
            assert!(lo <= p && p <= hi);
        }
    }
}
