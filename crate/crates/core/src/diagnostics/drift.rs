//! One-step Monte Carlo check of the Lyapunov drift inequality for
//! `V(x) = 1 + ‖x‖²`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ModelConstants, Sde};
use crate::montecarlo::par_map;
use crate::noise::NoiseStream;
use crate::scheme::{step_1d, Scheme, StepBuffers};
use crate::stats::CompensatedSum;

/// Constants of the drift bound derived from the declared model constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovConstants {
    pub c2: f64,
    pub c3: f64,
    /// `B = {‖x‖² ≤ b_radius_sq}`.
    pub b_radius_sq: f64,
    pub contraction: f64,
}

pub fn lyapunov_constants(c: &ModelConstants, eta: f64) -> Result<LyapunovConstants> {
    c.check()?;
    let b0 = c.b0_norm * c.b0_norm;
    let s2 = c.sigma_sup * c.sigma_sup;
    let c2 = c.k1 + 2.0 * c.k2 + b0 / c.k1 + s2;
    let c3 = c2 + 2.0 * b0 + 0.5 * s2 * c.grad_sigma_sup * c.grad_sigma_sup;
    Ok(LyapunovConstants {
        c2,
        c3,
        b_radius_sq: 4.0 * c3 / c.k1 - 1.0,
        contraction: 1.0 - c.k1 * eta / 4.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftRow {
    pub state: Vec<f64>,
    pub v: f64,
    pub lhs: f64,
    pub stderr: f64,
    pub rhs: f64,
    pub in_b: bool,
    /// `rhs − lhs`.
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftReport {
    pub eta: f64,
    pub inner: usize,
    pub constants: LyapunovConstants,
    pub rows: Vec<DriftRow>,
}

impl DriftReport {
    pub const CSV_HEADER: &'static str = "eta,state,v,lhs,stderr,rhs,in_b,margin,pass";

    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            let state: Vec<String> = r.state.iter().map(|v| v.to_string()).collect();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                self.eta,
                state.join(";"),
                r.v,
                r.lhs,
                r.stderr,
                r.rhs,
                r.in_b,
                r.margin,
                r.pass
            ));
        }
        out
    }
}

fn lyapunov(x: &[f64]) -> f64 {
    1.0 + x.iter().map(|v| v * v).sum::<f64>()
}

/// Probe states `t·(1, …, 1)` for `count` values of `t` evenly spaced in
/// `[lo, hi]`.
pub fn probe_grid(dim: usize, lo: f64, hi: f64, count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|i| {
            let t = if count == 1 { lo } else { lo + (hi - lo) * i as f64 / (count - 1) as f64 };
            vec![t; dim]
        })
        .collect()
}

/// Estimates `E[V(θ₁) | θ₀ = x]` from `inner` Milstein steps per probe and
/// compares with `(1 − K₁η/4)V(x) + C₃η·1_B(x)`; a probe passes when the
/// estimate is within three standard errors of the bound or below it.
pub fn drift_condition_check<M: Sde + ?Sized>(
    model: &M,
    eta: f64,
    states: &[Vec<f64>],
    inner: usize,
    seed: u64,
    workers: usize,
) -> Result<DriftReport> {
    let constants = lyapunov_constants(model.constants(), eta)
        .map_err(|e| Error::ConstantsMissing(format!("{}: {e}", model.name())))?;
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidParams(format!("eta = {eta} outside (0, 1)")));
    }
    if inner < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: inner });
    }
    let d = model.dim();
    if let Some(bad) = states.iter().find(|s| s.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: bad.len(),
        });
    }
    let rows = par_map(states.len(), workers, |p| -> Result<DriftRow> {
        let x = &states[p];
        let mut noise = NoiseStream::new(seed, p as u64);
        let mut sum = CompensatedSum::new();
        let mut sum_sq = CompensatedSum::new();
        let mut buf = StepBuffers::new(d);
        let mut xi = vec![0.0; d];
        let mut next = vec![0.0; d];
        for _ in 0..inner {
            let v = if d == 1 {
                let (n, _) = step_1d(model, Scheme::Milstein, x[0], noise.next_scalar(), eta);
                1.0 + n * n
            } else {
                noise.fill(&mut xi);
                buf.step(model, Scheme::Milstein, x, &xi, eta, &mut next)?;
                lyapunov(&next)
            };
            if !v.is_finite() {
                return Err(crate::error::non_finite("one-step Lyapunov sample"));
            }
            sum.add(v);
            sum_sq.add(v * v);
        }
        let n = inner as f64;
        let lhs = sum.value() / n;
        let var = ((sum_sq.value() - n * lhs * lhs) / (n - 1.0)).max(0.0);
        let stderr = (var / n).sqrt();
        let v = lyapunov(x);
        let in_b = v - 1.0 <= constants.b_radius_sq;
        let rhs = constants.contraction * v + if in_b { constants.c3 * eta } else { 0.0 };
        Ok(DriftRow {
            state: x.clone(),
            v,
            lhs,
            stderr,
            rhs,
            in_b,
            margin: rhs - lhs,
            pass: lhs <= rhs + 3.0 * stderr,
        })
    });
    Ok(DriftReport {
        eta,
        inner,
        constants,
        rows: rows.into_iter().collect::<Result<_>>()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_model, OrnsteinUhlenbeck, BUILTIN_MODELS};

    #[test]
    fn ou_origin_matches_closed_form() {
        let model = OrnsteinUhlenbeck::new(1.0, 1.0, 1).unwrap();
        let r = drift_condition_check(&model, 0.01, &[vec![0.0]], 100_000, 3, 1).unwrap();
        let row = &r.rows[0];
        assert_eq!(r.constants.c2, 2.0);
        assert_eq!(r.constants.c3, 2.0);
        assert!((row.rhs - 1.0175).abs() < 1e-12);
        assert!((row.lhs - 1.01).abs() < 3.0 * row.stderr);
        assert!(row.pass && row.in_b);
    }

    #[test]
    fn builtin_models_pass_far_out() {
        for id in BUILTIN_MODELS {
            let model = builtin_model(id, &serde_json::json!({})).unwrap();
            let states = probe_grid(model.dim(), -10.0, 10.0, 5);
            let r = drift_condition_check(model.as_ref(), 0.01, &states, 20_000, 9, 0).unwrap();
            assert!(r.all_pass(), "{id}: {:?}", r.rows);
            assert!(r.rows[0].margin > 0.0 && r.rows[4].margin > 0.0);
        }
    }

    struct Degenerate(OrnsteinUhlenbeck, ModelConstants);

    impl Sde for Degenerate {
        fn dim(&self) -> usize {
            1
        }
        fn drift(&self, x: &[f64], out: &mut [f64]) {
            self.0.drift(x, out)
        }
        fn diffusion(&self, x: &[f64], out: &mut [f64]) {
            self.0.diffusion(x, out)
        }
        fn diffusion_gradient(&self, x: &[f64], out: &mut [f64]) {
            self.0.diffusion_gradient(x, out)
        }
        fn constants(&self) -> &ModelConstants {
            &self.1
        }
    }

    #[test]
    fn zero_dissipativity_is_rejected() {
        let ou = OrnsteinUhlenbeck::new(1.0, 1.0, 1).unwrap();
        let constants = ModelConstants {
            k1: 0.0,
            ..*ou.constants()
        };
        let model = Degenerate(ou, constants);
        let err = drift_condition_check(&model, 0.01, &[vec![0.0]], 100, 0, 1).unwrap_err();
        assert!(matches!(err, Error::ConstantsMissing(_)));
    }
}
