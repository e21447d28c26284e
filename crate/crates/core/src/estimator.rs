//! Per-chain statistics of the empirical measure and the martingale
//! decomposition, accumulated in one streaming pass.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Sde;
use crate::montecarlo::run_replicas;
use crate::noise::NoiseStream;
use crate::quadrature::SteinSolution;
use crate::scheme::{step_1d_parts, ChainConfig};
use crate::stats::{log_log_slope, median, CompensatedSum};

/// Fraction of clamped gradient lookups above which a chain is rejected.
pub const MAX_CLAMPED_FRACTION: f64 = 1e-3;

/// Everything one chain contributes to the diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub eta: f64,
    pub m: u64,
    pub replica: u64,
    /// `Π_η(h)`.
    pub pi_hat: f64,
    /// `𝒴_η`, model-based variance estimate.
    pub y: f64,
    /// `𝒱_η`, computed from the realized increments.
    pub v: f64,
    /// `𝒱_η` computed directly from the noise; equal to `v` up to rounding.
    pub v_noise: f64,
    /// Martingale part `ℋ_η`.
    pub h_eta: f64,
    /// Remainder `ℛ_η`.
    pub r_eta: f64,
    pub w: f64,
    pub s: f64,
    pub clamped_steps: u64,
    /// `η Σ |b(θ_k)|²`.
    pub b_energy: f64,
    /// The `π(h)` the chain was centered at.
    pub pi_h: f64,
}

impl ChainStats {
    pub const CSV_HEADER: &'static str = "eta,m,replica,pi_hat,y,v,h_eta,r_eta,w,s,clamped_steps,b_energy";

    /// `η^{-1/2}(Π_η(h) − π(h))`.
    pub fn scaled_error(&self) -> f64 {
        (self.pi_hat - self.pi_h) / self.eta.sqrt()
    }

    /// Relative gap between the increment-based and noise-based `𝒱_η`.
    pub fn v_identity_gap(&self) -> f64 {
        let scale = self.v.abs().max(self.v_noise.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.v - self.v_noise).abs() / scale
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.eta,
            self.m,
            self.replica,
            self.pi_hat,
            self.y,
            self.v,
            self.h_eta,
            self.r_eta,
            self.w,
            self.s,
            self.clamped_steps,
            self.b_energy
        )
    }
}

/// Runs one chain and accumulates all statistics on the fly.
///
/// `∇f_h` is read off the Stein grid by monotone-cubic interpolation; states
/// outside the grid use the end value and are counted.
pub fn run_chain_stats<M: Sde + ?Sized>(
    model: &M,
    stein: &SteinSolution,
    config: &ChainConfig,
    noise: &mut NoiseStream,
) -> Result<ChainStats> {
    if model.dim() != 1 {
        return Err(Error::NotOneDimensional(model.dim()));
    }
    config.validate(1)?;
    let h = *stein.test_function();
    let pi_h = stein.pi_h();
    let eta = config.eta;
    let m = config.steps;
    let replica = noise.replica();

    let mut x = config.initial.draw(noise)[0];
    let mut sum_h = CompensatedSum::new();
    let mut sum_y = CompensatedSum::new();
    let mut sum_v = CompensatedSum::new();
    let mut sum_vn = CompensatedSum::new();
    let mut sum_mart = CompensatedSum::new();
    let mut sum_b = CompensatedSum::new();
    let mut clamped = 0u64;

    for k in 0..m {
        let xi = noise.next_scalar();
        let st = step_1d_parts(model, config.scheme, x, xi, eta);
        if !st.next.is_finite() {
            return Err(Error::NonFiniteEvaluation {
                what: "chain state".into(),
                step: Some(k),
            });
        }
        let (g, out) = stein.gradient(x);
        clamped += out as u64;

        sum_h.add(h.value(x));
        let sg = st.sigma * g;
        sum_y.add(sg * sg);
        let incr = st.next - x - eta * st.drift - 0.5 * eta * st.correction;
        let vi = incr * g;
        sum_v.add(vi * vi);
        let ni = sg * xi;
        sum_vn.add(ni * ni);
        sum_mart.add(ni);
        sum_b.add(st.drift * st.drift);
        x = st.next;
    }

    if clamped as f64 > MAX_CLAMPED_FRACTION * m as f64 {
        return Err(Error::StateOutsideGrid { clamped, steps: m });
    }
    let mf = m as f64;
    let pi_hat = sum_h.value() / mf;
    let y = sum_y.value() / mf;
    let v = sum_v.value() / (eta * mf);
    let v_noise = sum_vn.value() / mf;
    let h_eta = -eta * sum_mart.value();
    let scaled = (pi_hat - pi_h) / eta.sqrt();
    if !(y > 0.0) {
        return Err(Error::ZeroNormalization("y"));
    }
    if !(v > 0.0) {
        return Err(Error::ZeroNormalization("v"));
    }
    Ok(ChainStats {
        eta,
        m,
        replica,
        pi_hat,
        y,
        v,
        v_noise,
        h_eta,
        r_eta: scaled - h_eta,
        w: scaled / y.sqrt(),
        s: scaled / v.sqrt(),
        clamped_steps: clamped,
        b_energy: eta * sum_b.value(),
        pi_h,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionScaling {
    pub etas: Vec<f64>,
    pub median_abs_remainder: Vec<f64>,
    pub slope: f64,
}

/// Median `|ℛ_η|` across replicas for each step size, and the log-log slope
/// against `η`. All step sizes share the master seed.
pub fn decomposition_residual_scaling<M: Sde + ?Sized>(
    model: &M,
    stein: &SteinSolution,
    template: &ChainConfig,
    etas: &[f64],
    replicas: usize,
    seed: u64,
    workers: usize,
) -> Result<DecompositionScaling> {
    check_eta_grid(etas, 3, 4.0)?;
    if replicas == 0 {
        return Err(Error::EmptyReplicaSet);
    }
    let mut medians = Vec::with_capacity(etas.len());
    for &eta in etas {
        let config = ChainConfig {
            eta,
            steps: crate::scheme::default_steps(eta),
            ..template.clone()
        };
        let set = run_replicas(model, stein, &config, replicas, seed, workers)?;
        if let Some(err) = set.first_failure() {
            return Err(err.clone());
        }
        let r: Vec<f64> = set.successes().map(|c| c.r_eta.abs()).collect();
        medians.push(median(&r));
    }
    let slope = log_log_slope(etas, &medians);
    Ok(DecompositionScaling {
        etas: etas.to_vec(),
        median_abs_remainder: medians,
        slope,
    })
}

/// At least `needed` distinct step sizes in `(0, 1)` whose largest/smallest
/// ratio is at least `min_spread`.
pub fn check_eta_grid(etas: &[f64], needed: usize, min_spread: f64) -> Result<()> {
    let mut sorted: Vec<f64> = etas.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let ok_values = sorted.iter().all(|&e| e > 0.0 && e < 1.0);
    let spread = sorted.last().zip(sorted.first()).map(|(hi, lo)| hi / lo).unwrap_or(1.0);
    if sorted.len() < needed || !ok_values || spread < min_spread {
        return Err(Error::InsufficientEtaGrid {
            needed,
            got: sorted.len(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{OrnsteinUhlenbeck, TanhDiffusion, TestFunction, TestFunctionKind};
    use crate::quadrature::{stein_oracle, SteinSettings};
    use crate::scheme::InitialState;
    use crate::stats::mean_variance;

    fn ou_setup() -> (OrnsteinUhlenbeck, SteinSolution) {
        let model = OrnsteinUhlenbeck::new(1.0, 1.0, 1).unwrap();
        let (_, stein) = stein_oracle(&model, &TestFunction::identity(), &SteinSettings::default()).unwrap();
        (model, stein)
    }

    #[test]
    fn v_identity_holds_on_multiplicative_noise() {
        let model = TanhDiffusion::new(1.0, 0.5, 1.0, 0.5, 1).unwrap();
        let (_, stein) = stein_oracle(&model, &TestFunction::gauss_bump(), &SteinSettings::default()).unwrap();
        for r in 0..5 {
            let cfg = ChainConfig::new(0.05, 1);
            let st = run_chain_stats(&model, &stein, &cfg, &mut NoiseStream::new(3, r)).unwrap();
            assert!(st.v_identity_gap() < 1e-12, "gap {}", st.v_identity_gap());
        }
    }

    #[test]
    fn martingale_term_is_noise_sum_for_ou_identity() {
        let (model, stein) = ou_setup();
        let cfg = ChainConfig::new(0.05, 1);
        let st = run_chain_stats(&model, &stein, &cfg, &mut NoiseStream::new(11, 2)).unwrap();
        let mut noise = NoiseStream::new(11, 2);
        let mut direct = CompensatedSum::new();
        for _ in 0..cfg.steps {
            direct.add(noise.next_scalar());
        }
        let expected = cfg.eta * direct.value();
        assert!((st.h_eta - expected).abs() <= 1e-12 * expected.abs().max(1.0));
    }

    #[test]
    fn remainder_is_boundary_term_for_ou_identity() {
        // f = −x, so the decomposition telescopes to √η (θ₀ − θ_m)
        let (model, stein) = ou_setup();
        let cfg = ChainConfig::new(0.05, 1);
        let st = run_chain_stats(&model, &stein, &cfg, &mut NoiseStream::new(5, 0)).unwrap();
        let end = crate::scheme::simulate_chain(&model, &cfg, &mut NoiseStream::new(5, 0), |_| {}).unwrap()[0];
        assert!((st.r_eta - 0.05f64.sqrt() * (0.0 - end)).abs() < 1e-8);
    }

    #[test]
    fn normalized_statistics_are_scale_free() {
        let model = TanhDiffusion::new(1.0, 0.5, 1.0, 0.5, 1).unwrap();
        let settings = SteinSettings::default();
        let h = TestFunction::gauss_bump();
        let (_, s1) = stein_oracle(&model, &h, &settings).unwrap();
        let (_, s2) = stein_oracle(&model, &h.scaled(7.5), &settings).unwrap();
        let cfg = ChainConfig::new(0.05, 1);
        let a = run_chain_stats(&model, &s1, &cfg, &mut NoiseStream::new(9, 4)).unwrap();
        let b = run_chain_stats(&model, &s2, &cfg, &mut NoiseStream::new(9, 4)).unwrap();
        assert!((a.w - b.w).abs() < 1e-10);
        assert!((a.s - b.s).abs() < 1e-10);
        assert!((b.y / a.y - 7.5 * 7.5).abs() < 1e-8);
    }

    #[test]
    fn constant_test_function_cannot_be_normalized() {
        let model = OrnsteinUhlenbeck::new(1.0, 1.0, 1).unwrap();
        let h = TestFunction::new(TestFunctionKind::Constant { value: 2.0 });
        let (_, stein) = stein_oracle(&model, &h, &SteinSettings::default()).unwrap();
        let cfg = ChainConfig::new(0.1, 1);
        let err = run_chain_stats(&model, &stein, &cfg, &mut NoiseStream::new(0, 0)).unwrap_err();
        assert!(matches!(err, Error::ZeroNormalization(_)));
    }

    #[test]
    fn far_start_is_rejected() {
        let (model, stein) = ou_setup();
        let cfg = ChainConfig::new(0.1, 1).with_initial(InitialState::Fixed { state: vec![40.0] });
        let err = run_chain_stats(&model, &stein, &cfg, &mut NoiseStream::new(0, 0)).unwrap_err();
        assert!(matches!(err, Error::StateOutsideGrid { .. }));
    }

    #[test]
    fn normalized_statistic_is_standard_at_small_step() {
        let (model, stein) = ou_setup();
        let cfg = ChainConfig::new(0.02, 1);
        let ws: Vec<f64> = (0..2000)
            .map(|r| run_chain_stats(&model, &stein, &cfg, &mut NoiseStream::new(2024, r)).unwrap().w)
            .collect();
        let (mean, var) = mean_variance(&ws);
        assert!(mean.abs() <= 0.07, "mean {mean}");
        assert!((0.9..=1.1).contains(&var), "var {var}");
    }

    #[test]
    fn eta_grid_checks() {
        assert!(matches!(check_eta_grid(&[0.1], 3, 4.0), Err(Error::InsufficientEtaGrid { .. })));
        assert!(check_eta_grid(&[0.1, 0.09, 0.08], 3, 4.0).is_err());
        assert!(check_eta_grid(&[0.1, 0.05, 0.025], 3, 4.0).is_ok());
        let (model, stein) = ou_setup();
        let cfg = ChainConfig::new(0.1, 1);
        let err = decomposition_residual_scaling(&model, &stein, &cfg, &[0.1, 0.05, 0.025], 0, 1, 1).unwrap_err();
        assert!(matches!(err, Error::EmptyReplicaSet));
    }

    #[test]
    fn csv_row_matches_header() {
        let (model, stein) = ou_setup();
        let st = run_chain_stats(&model, &stein, &ChainConfig::new(0.1, 1), &mut NoiseStream::new(1, 1)).unwrap();
        let cols = ChainStats::CSV_HEADER.split(',').count();
        assert_eq!(st.csv_row().split(',').count(), cols);
    }
}
