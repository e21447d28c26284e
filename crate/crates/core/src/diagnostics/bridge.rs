//! Gap between the continuous and discrete stationary averages of
//! `|σ f_h'|²`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::check_eta_grid;
use crate::model::Sde;
use crate::montecarlo::par_map;
use crate::noise::NoiseStream;
use crate::quadrature::SteinSolution;
use crate::scheme::{step_1d, InitialState, Scheme};
use crate::stats::{log_log_slope, CompensatedSum};

pub const BURN_IN_FRACTION: f64 = 0.1;
pub const BATCHES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BridgeRow {
    pub eta: f64,
    pub chain_len: u64,
    pub pi_eta: f64,
    /// Batch-means standard error of `pi_eta`.
    pub stderr: f64,
    /// `π_η − π`.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BridgeReport {
    /// `π(|σ f_h'|²)` from quadrature.
    pub pi_value: f64,
    pub rows: Vec<BridgeRow>,
    /// `|gap|` non-increasing as `η` decreases.
    pub monotone: bool,
    /// As `monotone`, but an increase smaller than two combined standard
    /// errors is not counted.
    pub monotone_within_noise: bool,
    pub slope: Option<f64>,
    pub slope_skipped: Option<String>,
}

impl BridgeReport {
    pub const CSV_HEADER: &'static str = "eta,chain_len,pi_eta,pi,gap,stderr";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.eta, r.chain_len, r.pi_eta, self.pi_value, r.gap, r.stderr
            ));
        }
        out
    }
}

fn chain_average<M: Sde + ?Sized>(
    model: &M,
    stein: &SteinSolution,
    eta: f64,
    chain_len: u64,
    start: f64,
    noise: &mut NoiseStream,
) -> Result<(f64, f64)> {
    let burn = (BURN_IN_FRACTION * chain_len as f64).round() as u64;
    let kept = chain_len - burn;
    let batch = kept / BATCHES as u64;
    if batch == 0 {
        return Err(Error::TooFewSamples {
            needed: BATCHES,
            got: kept as usize,
        });
    }
    let mut x = start;
    for k in 0..burn {
        x = step_1d(model, Scheme::Milstein, x, noise.next_scalar(), eta).0;
        if !x.is_finite() {
            return Err(Error::NonFiniteEvaluation {
                what: "bridge chain".into(),
                step: Some(k),
            });
        }
    }
    let mut means = Vec::with_capacity(BATCHES);
    for b in 0..BATCHES as u64 {
        let mut acc = CompensatedSum::new();
        for k in 0..batch {
            let sg = model.diffusion_1d(x) * stein.gradient(x).0;
            acc.add(sg * sg);
            x = step_1d(model, Scheme::Milstein, x, noise.next_scalar(), eta).0;
            if !x.is_finite() {
                return Err(Error::NonFiniteEvaluation {
                    what: "bridge chain".into(),
                    step: Some(burn + b * batch + k),
                });
            }
        }
        means.push(acc.value() / batch as f64);
    }
    let (mean, var) = crate::stats::mean_variance(&means);
    Ok((mean, (var / BATCHES as f64).sqrt()))
}

/// One long chain per step size; the stationary average of `|σ f_h'|²`
/// after a 10% burn-in, with batch-means error bars.
///
/// The slope of `log |gap|` against `log η` is skipped when every gap is
/// within three standard errors (plus the quadrature tolerance) of zero.
pub fn variance_bridge<M: Sde + ?Sized>(
    model: &M,
    stein: &SteinSolution,
    etas: &[f64],
    chain_len: u64,
    initial: &InitialState,
    seed: u64,
    workers: usize,
) -> Result<BridgeReport> {
    if model.dim() != 1 {
        return Err(Error::NotOneDimensional(model.dim()));
    }
    check_eta_grid(etas, 3, 1.0)?;
    let pi_value = stein.asymptotic_variance();
    let rows = par_map(etas.len(), workers, |i| -> Result<BridgeRow> {
        let mut noise = NoiseStream::new(seed, i as u64);
        let start = initial.draw(&noise)[0];
        let (pi_eta, stderr) = chain_average(model, stein, etas[i], chain_len, start, &mut noise)?;
        Ok(BridgeRow {
            eta: etas[i],
            chain_len,
            pi_eta,
            stderr,
            gap: pi_eta - pi_value,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut order: Vec<&BridgeRow> = rows.iter().collect();
    order.sort_by(|a, b| b.eta.total_cmp(&a.eta));
    let monotone = order.windows(2).all(|w| w[1].gap.abs() <= w[0].gap.abs());
    let monotone_within_noise = order.windows(2).all(|w| {
        let noise = 2.0 * w[0].stderr.hypot(w[1].stderr);
        w[1].gap.abs() <= w[0].gap.abs() + noise
    });
    let floor = |r: &BridgeRow| 3.0 * r.stderr + 1e-6 * pi_value.abs();
    let (slope, slope_skipped) = if rows.iter().all(|r| r.gap.abs() <= floor(r)) {
        (None, Some("all gaps within Monte Carlo error".to_string()))
    } else {
        let gaps: Vec<f64> = rows.iter().map(|r| r.gap.abs().max(f64::MIN_POSITIVE)).collect();
        (Some(log_log_slope(etas, &gaps)), None)
    };
    Ok(BridgeReport {
        pi_value,
        rows,
        monotone,
        monotone_within_noise,
        slope,
        slope_skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{OrnsteinUhlenbeck, TanhDiffusion, TestFunction};
    use crate::quadrature::{stein_oracle, SteinSettings};

    #[test]
    fn constant_observable_skips_slope() {
        let model = OrnsteinUhlenbeck::new(1.0, 1.0, 1).unwrap();
        let (_, stein) = stein_oracle(&model, &TestFunction::identity(), &SteinSettings::default()).unwrap();
        let r = variance_bridge(&model, &stein, &[0.2, 0.1, 0.05], 100_000, &InitialState::origin(1), 1, 0)
            .unwrap();
        assert!(r.slope.is_none());
        assert!(r.slope_skipped.is_some());
        assert!(r.rows.iter().all(|row| row.gap.abs() < 1e-6));
    }

    #[test]
    fn needs_three_step_sizes() {
        let model = OrnsteinUhlenbeck::new(1.0, 1.0, 1).unwrap();
        let (_, stein) = stein_oracle(&model, &TestFunction::identity(), &SteinSettings::default()).unwrap();
        let err = variance_bridge(&model, &stein, &[0.2, 0.1], 1000, &InitialState::origin(1), 1, 0).unwrap_err();
        assert!(matches!(err, Error::InsufficientEtaGrid { .. }));
    }

    #[test]
    fn gap_shrinks_with_step() {
        let model = TanhDiffusion::new(1.0, 0.5, 1.0, 0.5, 1).unwrap();
        let (_, stein) = stein_oracle(&model, &TestFunction::gauss_bump(), &SteinSettings::default()).unwrap();
        let r = variance_bridge(&model, &stein, &[0.4, 0.2, 0.05], 1_000_000, &InitialState::origin(1), 2, 0)
            .unwrap();
        assert!(r.rows[0].gap.abs() > r.rows[2].gap.abs(), "{r:?}");
    }
}
