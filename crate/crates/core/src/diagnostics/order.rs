//! Strong convergence order from coupled Brownian paths.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Sde;
use crate::montecarlo::par_map;
use crate::noise::NoiseStream;
use crate::scheme::{Scheme, StepBuffers};
use crate::stats::log_log_slope;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrongOrderSettings {
    pub etas: Vec<f64>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_eta_ref")]
    pub eta_ref: f64,
    /// Starting point; the origin when absent.
    #[serde(default)]
    pub initial: Option<Vec<f64>>,
}

fn default_horizon() -> f64 {
    1.0
}

fn default_paths() -> usize {
    512
}

fn default_eta_ref() -> f64 {
    (2.0f64).powi(-14)
}

impl StrongOrderSettings {
    pub fn dyadic(lo: i32, hi: i32) -> Self {
        Self {
            etas: (lo..=hi).map(|k| (2.0f64).powi(-k)).collect(),
            horizon: default_horizon(),
            paths: default_paths(),
            eta_ref: default_eta_ref(),
            initial: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrongOrderReport {
    pub etas: Vec<f64>,
    pub error_em: Vec<f64>,
    pub error_milstein: Vec<f64>,
    pub slope_em: f64,
    pub slope_milstein: f64,
    /// Every per-path error agreed bitwise between the two schemes.
    pub schemes_coincide: bool,
}

impl StrongOrderReport {
    pub const CSV_HEADER: &'static str = "eta,error_em,error_milstein";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for i in 0..self.etas.len() {
            out.push_str(&format!("{},{},{}\n", self.etas[i], self.error_em[i], self.error_milstein[i]));
        }
        out
    }
}

fn is_power_of_two_fraction(x: f64) -> bool {
    x > 0.0 && x <= 1.0 && {
        let k = -x.log2();
        k.fract() == 0.0 && (2.0f64).powi(-(k as i32)) == x
    }
}

fn integrate<M: Sde + ?Sized>(
    model: &M,
    scheme: Scheme,
    start: &[f64],
    increments: &[f64],
    ratio: usize,
    eta: f64,
    buf: &mut StepBuffers,
) -> Result<Vec<f64>> {
    let d = start.len();
    let steps = increments.len() / d / ratio;
    let scale = 1.0 / eta.sqrt();
    let mut theta = start.to_vec();
    let mut next = vec![0.0; d];
    let mut xi = vec![0.0; d];
    for k in 0..steps {
        xi.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..ratio {
            let row = &increments[(k * ratio + j) * d..(k * ratio + j + 1) * d];
            xi.iter_mut().zip(row).for_each(|(a, b)| *a += b);
        }
        xi.iter_mut().for_each(|v| *v *= scale);
        buf.step(model, scheme, &theta, &xi, eta, &mut next)
            .map_err(|_| Error::NonFiniteEvaluation {
                what: format!("{scheme:?} path at eta={eta}"),
                step: Some(k as u64),
            })?;
        std::mem::swap(&mut theta, &mut next);
    }
    Ok(theta)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean terminal error of EM and Milstein against a fine Milstein reference
/// driven by the same Brownian path, and the log-log slopes.
pub fn strong_order_regression<M: Sde + ?Sized>(
    model: &M,
    settings: &StrongOrderSettings,
    seed: u64,
    workers: usize,
) -> Result<StrongOrderReport> {
    let d = model.dim();
    let etas = &settings.etas;
    if etas.len() < 2 {
        return Err(Error::InsufficientEtaGrid {
            needed: 2,
            got: etas.len(),
        });
    }
    if settings.paths == 0 {
        return Err(Error::EmptyReplicaSet);
    }
    let min_eta = etas.iter().copied().fold(f64::INFINITY, f64::min);
    if !etas.iter().chain([&settings.eta_ref]).all(|&e| is_power_of_two_fraction(e)) {
        return Err(Error::InvalidParams("step sizes must be dyadic".into()));
    }
    if settings.eta_ref > min_eta / 16.0 {
        return Err(Error::InvalidParams(format!(
            "reference step {} must be at most min(eta)/16 = {}",
            settings.eta_ref,
            min_eta / 16.0
        )));
    }
    let fine_steps = settings.horizon / settings.eta_ref;
    if !(settings.horizon > 0.0) || fine_steps.fract() != 0.0 || settings.horizon / etas[0] < 1.0 {
        return Err(Error::InvalidParams(format!(
            "horizon {} must be a positive multiple of every step size",
            settings.horizon
        )));
    }
    let start = settings.initial.clone().unwrap_or_else(|| vec![0.0; d]);
    if start.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: start.len(),
        });
    }
    let fine_steps = fine_steps as usize;
    let ratios: Vec<usize> = etas.iter().map(|e| (e / settings.eta_ref).round() as usize).collect();
    let sqrt_ref = settings.eta_ref.sqrt();

    let per_path = par_map(settings.paths, workers, |p| -> Result<Vec<(f64, f64)>> {
        let mut noise = NoiseStream::new(seed, p as u64);
        let mut dw = vec![0.0; fine_steps * d];
        noise.fill(&mut dw);
        dw.iter_mut().for_each(|v| *v *= sqrt_ref);
        let mut buf = StepBuffers::new(d);
        let reference = integrate(model, Scheme::Milstein, &start, &dw, 1, settings.eta_ref, &mut buf)?;
        ratios
            .iter()
            .zip(etas)
            .map(|(&r, &eta)| {
                let em = integrate(model, Scheme::EulerMaruyama, &start, &dw, r, eta, &mut buf)?;
                let mil = integrate(model, Scheme::Milstein, &start, &dw, r, eta, &mut buf)?;
                Ok((distance(&reference, &em), distance(&reference, &mil)))
            })
            .collect()
    });

    let mut error_em = vec![0.0; etas.len()];
    let mut error_milstein = vec![0.0; etas.len()];
    let mut coincide = true;
    for path in per_path {
        for (i, (e, m)) in path?.into_iter().enumerate() {
            error_em[i] += e;
            error_milstein[i] += m;
            coincide &= e.to_bits() == m.to_bits();
        }
    }
    let n = settings.paths as f64;
    error_em.iter_mut().for_each(|v| *v /= n);
    error_milstein.iter_mut().for_each(|v| *v /= n);
    Ok(StrongOrderReport {
        slope_em: log_log_slope(etas, &error_em),
        slope_milstein: log_log_slope(etas, &error_milstein),
        etas: etas.clone(),
        error_em,
        error_milstein,
        schemes_coincide: coincide,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{OrnsteinUhlenbeck, TanhDiffusion};

    #[test]
    fn additive_noise_makes_schemes_coincide() {
        let model = OrnsteinUhlenbeck::new(1.0, 1.0, 1).unwrap();
        let mut s = StrongOrderSettings::dyadic(3, 6);
        s.paths = 32;
        s.eta_ref = (2.0f64).powi(-10);
        let r = strong_order_regression(&model, &s, 1, 2).unwrap();
        assert!(r.schemes_coincide);
        assert_eq!(r.slope_em, r.slope_milstein);
    }

    #[test]
    fn milstein_beats_em_on_multiplicative_noise() {
        let model = TanhDiffusion::new(1.0, 0.0, 1.0, 0.5, 1).unwrap();
        let mut s = StrongOrderSettings::dyadic(4, 7);
        s.paths = 128;
        s.eta_ref = (2.0f64).powi(-11);
        let r = strong_order_regression(&model, &s, 5, 0).unwrap();
        assert!(!r.schemes_coincide);
        assert!(r.slope_milstein > r.slope_em + 0.2, "{r:?}");
        assert!(r.error_milstein.last() < r.error_em.last());
    }

    #[test]
    fn settings_are_checked() {
        let model = OrnsteinUhlenbeck::new(1.0, 1.0, 1).unwrap();
        let mut s = StrongOrderSettings::dyadic(3, 6);
        s.etas[1] = 0.1;
        assert!(strong_order_regression(&model, &s, 0, 1).is_err());
        let mut s = StrongOrderSettings::dyadic(3, 12);
        s.eta_ref = (2.0f64).powi(-14);
        assert!(strong_order_regression(&model, &s, 0, 1).is_err());
        let mut s = StrongOrderSettings::dyadic(3, 6);
        s.initial = Some(vec![0.0, 0.0]);
        assert!(matches!(
            strong_order_regression(&model, &s, 0, 1),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
