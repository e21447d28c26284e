//! Empirical tail curves of the auxiliary chain functionals with a rough
//! shape fit. Only qualitative properties are asserted.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::montecarlo::ReplicaSampleSet;
use crate::stats::{linear_fit, mean_variance};

pub const MIN_HITS: u64 = 50;

/// Values at or below this are treated as exactly zero.
pub const DEGENERATE_SCALE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConcentrationStatistic {
    /// `|𝒴_η − mean 𝒴_η|`.
    YDev,
    /// `|𝒱_η − 𝒴_η|`.
    VyDev,
    /// `|ℛ_η|`.
    RRem,
    /// `η Σ |b(θ_k)|²`.
    BEnergy,
}

impl ConcentrationStatistic {
    pub const ALL: [Self; 4] = [Self::YDev, Self::VyDev, Self::RRem, Self::BEnergy];

    pub fn label(self) -> &'static str {
        match self {
            Self::YDev => "y_dev",
            Self::VyDev => "vy_dev",
            Self::RRem => "r_rem",
            Self::BEnergy => "b_energy",
        }
    }

    /// The statistic for every successful replica.
    pub fn extract(self, set: &ReplicaSampleSet) -> Vec<f64> {
        match self {
            Self::YDev => {
                let ys: Vec<f64> = set.successes().map(|c| c.y).collect();
                let (mean, _) = mean_variance(&ys);
                ys.iter().map(|y| (y - mean).abs()).collect()
            }
            Self::VyDev => set.successes().map(|c| (c.v - c.y).abs()).collect(),
            Self::RRem => set.successes().map(|c| c.r_eta.abs()).collect(),
            Self::BEnergy => set.successes().map(|c| c.b_energy).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationCurve {
    pub statistic: ConcentrationStatistic,
    pub n: usize,
    pub ys: Vec<f64>,
    pub hits: Vec<u64>,
    pub tail: Vec<f64>,
    /// Every sample is (numerically) zero; no fit is attempted.
    pub degenerate: bool,
    pub strictly_decreasing: bool,
    /// Slope of `−log P` against `y`.
    pub linear_rate: f64,
    /// Slope of `−log P` against `y²`.
    pub quadratic_rate: f64,
    /// Which of the two fits has the smaller residual: "exponential" or
    /// "gaussian".
    pub dominant: &'static str,
}

impl ConcentrationCurve {
    pub const CSV_HEADER: &'static str = "statistic,y,hits,tail,neg_log_tail";

    /// Decreasing tail and positive fitted rates; degenerate curves never pass.
    pub fn shape_ok(&self) -> bool {
        !self.degenerate && self.strictly_decreasing && self.linear_rate > 0.0 && self.quadratic_rate > 0.0
    }

    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for i in 0..self.ys.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                self.statistic.label(),
                self.ys[i],
                self.hits[i],
                self.tail[i],
                -self.tail[i].ln()
            ));
        }
        out
    }
}

/// Grid from the median up to the quantile that still leaves
/// [`MIN_HITS`] exceedances, evenly spaced.
pub fn resolvable_grid(values: &[f64], points: usize) -> Vec<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() || points == 0 {
        return Vec::new();
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let lo = v[n / 2];
    let top = n.saturating_sub(MIN_HITS as usize + 1);
    let hi = v[top.max(n / 2)];
    if points == 1 || hi <= lo {
        return vec![lo];
    }
    (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect()
}

fn rss(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let (slope, intercept) = linear_fit(xs, ys);
    let r = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    (slope, r)
}

/// `P(value > y)` over `ys` with fits of `−log P` against `y` and `y²`.
pub fn concentration_curve(
    statistic: ConcentrationStatistic,
    values: &[f64],
    ys: &[f64],
) -> Result<ConcentrationCurve> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return Err(Error::EmptyReplicaSet);
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mut ys = ys.to_vec();
    ys.sort_by(f64::total_cmp);
    ys.dedup();
    let hits: Vec<u64> = ys.iter().map(|&y| (n - v.partition_point(|&x| x <= y)) as u64).collect();
    let tail: Vec<f64> = hits.iter().map(|&h| h as f64 / n as f64).collect();
    let degenerate = v.iter().all(|x| x.abs() <= DEGENERATE_SCALE);
    if degenerate {
        return Ok(ConcentrationCurve {
            statistic,
            n,
            ys,
            hits,
            tail,
            degenerate,
            strictly_decreasing: false,
            linear_rate: f64::NAN,
            quadratic_rate: f64::NAN,
            dominant: "degenerate",
        });
    }
    if let Some((i, &h)) = hits.iter().enumerate().find(|(_, &h)| h < MIN_HITS) {
        return Err(Error::InsufficientResolution {
            x: ys[i],
            expected: h as f64,
            needed: MIN_HITS as f64,
        });
    }
    let strictly_decreasing = hits.windows(2).all(|w| w[1] < w[0]);
    let neg_log: Vec<f64> = tail.iter().map(|p| -p.ln()).collect();
    let sq: Vec<f64> = ys.iter().map(|y| y * y).collect();
    let (linear_rate, rss_lin) = rss(&ys, &neg_log);
    let (quadratic_rate, rss_quad) = rss(&sq, &neg_log);
    Ok(ConcentrationCurve {
        statistic,
        n,
        ys,
        hits,
        tail,
        degenerate,
        strictly_decreasing,
        linear_rate,
        quadratic_rate,
        dominant: if rss_lin <= rss_quad { "exponential" } else { "gaussian" },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseStream;

    #[test]
    fn gaussian_magnitudes_look_gaussian() {
        let mut noise = NoiseStream::new(8, 0);
        let v: Vec<f64> = (0..200_000).map(|_| noise.next_scalar().abs()).collect();
        let c = concentration_curve(ConcentrationStatistic::RRem, &v, &[0.5, 1.0, 1.5, 2.0, 2.5, 3.0]).unwrap();
        assert!(c.shape_ok());
        assert_eq!(c.dominant, "gaussian");
    }

    #[test]
    fn exponential_samples_look_exponential() {
        let mut noise = NoiseStream::new(8, 1);
        let v: Vec<f64> = (0..200_000)
            .map(|_| -(crate::stats::normal_cdf(noise.next_scalar())).ln())
            .collect();
        let ys = resolvable_grid(&v, 8);
        let c = concentration_curve(ConcentrationStatistic::BEnergy, &v, &ys).unwrap();
        assert!(c.shape_ok());
        assert_eq!(c.dominant, "exponential");
        assert!((c.linear_rate - 1.0).abs() < 0.1, "{}", c.linear_rate);
    }

    #[test]
    fn zero_statistic_is_degenerate() {
        let c = concentration_curve(ConcentrationStatistic::YDev, &[0.0; 500], &[0.01, 0.02]).unwrap();
        assert!(c.degenerate);
        assert!(c.tail.iter().all(|&p| p == 0.0));
        assert!(!c.shape_ok());
    }

    #[test]
    fn too_few_hits() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let err = concentration_curve(ConcentrationStatistic::RRem, &v, &[500.0, 990.0]).unwrap_err();
        assert!(matches!(err, Error::InsufficientResolution { .. }));
        let grid = resolvable_grid(&v, 5);
        assert!(concentration_curve(ConcentrationStatistic::RRem, &v, &grid).is_ok());
    }
}
