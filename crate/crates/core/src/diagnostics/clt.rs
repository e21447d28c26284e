//! One-sample Kolmogorov–Smirnov check against a centered Gaussian.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::stats::{mean_variance, normal_cdf};

pub const MIN_SAMPLES: usize = 100;

/// Asymptotic KS critical constant `c(α)`; only the two tabulated levels.
pub fn ks_critical_constant(alpha: f64) -> Result<f64> {
    if alpha == 0.01 {
        Ok(1.628)
    } else if alpha == 0.05 {
        Ok(1.358)
    } else {
        Err(Error::InvalidParams(format!("KS level must be 0.01 or 0.05, got {alpha}")))
    }
}

/// `sup_x |F_N(x) − F(x)|` for `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        let above = (i + 1) as f64 / n - f;
        let below = f - i as f64 / n;
        d.max(above).max(below)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CltReport {
    pub n: usize,
    pub ks_statistic: f64,
    pub mean: f64,
    pub variance: f64,
    pub target_variance: f64,
    pub alpha: f64,
    pub critical_value: f64,
    pub pass: bool,
}

/// KS test of the finite entries of `samples` against `N(0, target_variance)`.
pub fn clt_check(samples: &[f64], target_variance: f64, alpha: f64) -> Result<CltReport> {
    let c = ks_critical_constant(alpha)?;
    if !(target_variance > 0.0 && target_variance.is_finite()) {
        return Err(Error::InvalidParams(format!("target variance {target_variance}")));
    }
    let finite: Vec<f64> = samples.iter().copied().filter(|x| x.is_finite()).collect();
    if finite.len() < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_SAMPLES,
            got: finite.len(),
        });
    }
    let sd = target_variance.sqrt();
    let ks = ks_statistic(&finite, |x| normal_cdf(x / sd));
    let (mean, variance) = mean_variance(&finite);
    let critical_value = c / (finite.len() as f64).sqrt();
    Ok(CltReport {
        n: finite.len(),
        ks_statistic: ks,
        mean,
        variance,
        target_variance,
        alpha,
        critical_value,
        pass: ks < critical_value,
    })
}
