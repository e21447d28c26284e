//! Euler–Maruyama and Milstein one-step maps and streaming trajectories.
//!
//! Milstein step:
//!
//! ```text
//! θ_{k+1} = θ_k + η b(θ_k) + √η σ(θ_k) ξ_{k+1} + (η/2) ℛ(θ_k, ξ_{k+1})
//! ℛ(θ, ξ)_i = Σ_{j₁,j₂,l} σ_{l,j₁} ∂_l σ_{i,j₂} ξ^{j₁} ξ^{j₂} − Σ_{j,l} σ_{l,j} ∂_l σ_{i,j}
//! ```
//!
//! In one dimension `ℛ(θ, ξ) = σ(θ) σ'(θ) (ξ² − 1)`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{non_finite, Error, Result};
use crate::model::Sde;
use crate::noise::NoiseStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    Milstein,
    EulerMaruyama,
}

/// `m = [η⁻²]`, guarding against `1/η²` landing a hair below an integer.
pub fn default_steps(eta: f64) -> u64 {
    let r = 1.0 / (eta * eta);
    let nearest = r.round();
    if (r - nearest).abs() <= 1e-9 * r {
        nearest as u64
    } else {
        r.floor() as u64
    }
}

/// Law of `θ₀`. Both variants are sub-Gaussian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialState {
    Fixed { state: Vec<f64> },
    /// `θ₀ ~ N(mean, std² I)`, drawn from the replica's auxiliary stream.
    Gaussian { mean: Vec<f64>, std: f64 },
}

impl InitialState {
    pub fn origin(dim: usize) -> Self {
        Self::Fixed {
            state: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Fixed { state } => state.len(),
            Self::Gaussian { mean, .. } => mean.len(),
        }
    }

    pub fn draw(&self, noise: &NoiseStream) -> Vec<f64> {
        match self {
            Self::Fixed { state } => state.clone(),
            Self::Gaussian { mean, std } => {
                let mut rng = noise.auxiliary_rng();
                mean.iter()
                    .map(|m| {
                        let z: f64 = rng.sample(StandardNormal);
                        m + std * z
                    })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub eta: f64,
    pub steps: u64,
    pub initial: InitialState,
    #[serde(default)]
    pub scheme: Scheme,
}

impl ChainConfig {
    /// `m = [η⁻²]` steps from the origin with the Milstein scheme.
    pub fn new(eta: f64, dim: usize) -> Self {
        Self {
            eta,
            steps: default_steps(eta),
            initial: InitialState::origin(dim),
            scheme: Scheme::Milstein,
        }
    }

    pub fn with_steps(mut self, steps: u64) -> Self {
        self.steps = steps;
        self
    }

    pub fn with_initial(mut self, initial: InitialState) -> Self {
        self.initial = initial;
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "eta = {} must lie in (0, 1)",
                self.eta
            )));
        }
        if let InitialState::Gaussian { std, .. } = self.initial {
            if !(std >= 0.0 && std.is_finite()) {
                return Err(Error::InvalidConfig(format!("initial std = {std} invalid")));
            }
        }
        if self.initial.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: self.initial.dim(),
            });
        }
        Ok(())
    }
}

fn check_dims(d: usize, got: usize) -> Result<()> {
    if d == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected: d, got })
    }
}

fn finite_or(v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|a| a.is_finite()) {
        Ok(())
    } else {
        Err(non_finite(what))
    }
}

/// Reusable coefficient buffers for the d-dimensional step maps.
#[derive(Debug, Clone)]
pub struct StepBuffers {
    d: usize,
    drift: Vec<f64>,
    sigma: Vec<f64>,
    grad: Vec<f64>,
    sigma_xi: Vec<f64>,
    correction: Vec<f64>,
}

impl StepBuffers {
    pub fn new(d: usize) -> Self {
        Self {
            d,
            drift: vec![0.0; d],
            sigma: vec![0.0; d * d],
            grad: vec![0.0; d * d * d],
            sigma_xi: vec![0.0; d],
            correction: vec![0.0; d],
        }
    }

    /// `b(θ)` from the last call to [`StepBuffers::step`].
    pub fn drift(&self) -> &[f64] {
        &self.drift
    }

    /// `σ(θ)` (row-major) from the last step.
    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// `σ(θ) ξ` from the last step.
    pub fn sigma_xi(&self) -> &[f64] {
        &self.sigma_xi
    }

    /// `ℛ(θ, ξ)` from the last step (zeros for EM or additive noise).
    pub fn correction(&self) -> &[f64] {
        &self.correction
    }

    fn correction_into<M: Sde + ?Sized>(&mut self, model: &M, theta: &[f64], xi: &[f64]) {
        let d = self.d;
        model.diffusion_gradient(theta, &mut self.grad);
        let (sigma, grad) = (&self.sigma, &self.grad);
        // v = σξ is already in sigma_xi
        for i in 0..d {
            let mut quad = 0.0;
            let mut mean = 0.0;
            for j in 0..d {
                let mut dir = 0.0;
                for l in 0..d {
                    let g = grad[(i * d + j) * d + l];
                    dir += self.sigma_xi[l] * g;
                    mean += sigma[l * d + j] * g;
                }
                quad += dir * xi[j];
            }
            self.correction[i] = quad - mean;
        }
    }

    /// Advances `theta` by one step of `scheme` into `out`.
    pub fn step<M: Sde + ?Sized>(
        &mut self,
        model: &M,
        scheme: Scheme,
        theta: &[f64],
        xi: &[f64],
        eta: f64,
        out: &mut [f64],
    ) -> Result<()> {
        let d = self.d;
        model.drift(theta, &mut self.drift);
        model.diffusion(theta, &mut self.sigma);
        for i in 0..d {
            self.sigma_xi[i] = (0..d).map(|j| self.sigma[i * d + j] * xi[j]).sum();
        }
        let milstein = scheme == Scheme::Milstein && !model.is_additive();
        if milstein {
            self.correction_into(model, theta, xi);
        } else {
            self.correction.fill(0.0);
        }
        let root = eta.sqrt();
        for i in 0..d {
            let mut next = theta[i] + eta * self.drift[i] + root * self.sigma_xi[i];
            if milstein {
                next += 0.5 * eta * self.correction[i];
            }
            out[i] = next;
        }
        finite_or(out, "step")
    }
}

/// `θ + η b(θ) + √η σ(θ) ξ`.
pub fn em_step<M: Sde + ?Sized>(model: &M, theta: &[f64], xi: &[f64], eta: f64) -> Result<Vec<f64>> {
    let d = model.dim();
    check_dims(d, theta.len())?;
    check_dims(d, xi.len())?;
    let mut out = vec![0.0; d];
    StepBuffers::new(d).step(model, Scheme::EulerMaruyama, theta, xi, eta, &mut out)?;
    Ok(out)
}

/// The centred Milstein correction `ℛ(θ, ξ)`.
pub fn milstein_correction<M: Sde + ?Sized>(model: &M, theta: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
    let d = model.dim();
    check_dims(d, theta.len())?;
    check_dims(d, xi.len())?;
    let mut buf = StepBuffers::new(d);
    model.diffusion(theta, &mut buf.sigma);
    for i in 0..d {
        buf.sigma_xi[i] = (0..d).map(|j| buf.sigma[i * d + j] * xi[j]).sum();
    }
    buf.correction_into(model, theta, xi);
    finite_or(&buf.correction, "milstein_correction")?;
    Ok(buf.correction)
}

/// `θ + η b(θ) + √η σ(θ) ξ + (η/2) ℛ(θ, ξ)`.
pub fn milstein_step<M: Sde + ?Sized>(
    model: &M,
    theta: &[f64],
    xi: &[f64],
    eta: f64,
) -> Result<Vec<f64>> {
    let d = model.dim();
    check_dims(d, theta.len())?;
    check_dims(d, xi.len())?;
    let mut out = vec![0.0; d];
    StepBuffers::new(d).step(model, Scheme::Milstein, theta, xi, eta, &mut out)?;
    Ok(out)
}

/// Pieces of one scalar step: the next state plus the drift, diffusion and
/// correction evaluated at the current state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step1d {
    pub next: f64,
    pub drift: f64,
    pub sigma: f64,
    pub correction: f64,
}

#[inline]
pub fn step_1d_parts<M: Sde + ?Sized>(model: &M, scheme: Scheme, theta: f64, xi: f64, eta: f64) -> Step1d {
    let b = model.drift_1d(theta);
    let s = model.diffusion_1d(theta);
    let next = theta + eta * b + eta.sqrt() * s * xi;
    if scheme == Scheme::Milstein && !model.is_additive() {
        let corr = s * model.diffusion_derivative_1d(theta) * (xi * xi - 1.0);
        Step1d {
            next: next + 0.5 * eta * corr,
            drift: b,
            sigma: s,
            correction: corr,
        }
    } else {
        Step1d {
            next,
            drift: b,
            sigma: s,
            correction: 0.0,
        }
    }
}

/// Scalar step used by the one-dimensional hot loops. Returns the new state
/// and the correction `ℛ(θ, ξ)` that was applied.
#[inline]
pub fn step_1d<M: Sde + ?Sized>(model: &M, scheme: Scheme, theta: f64, xi: f64, eta: f64) -> (f64, f64) {
    let st = step_1d_parts(model, scheme, theta, xi, eta);
    (st.next, st.correction)
}

/// What the observer sees at step `k`: `θ_k`, `ξ_{k+1}` and `θ_{k+1}`.
#[derive(Debug)]
pub struct StepView<'a> {
    pub k: u64,
    pub theta: &'a [f64],
    pub xi: &'a [f64],
    pub next: &'a [f64],
}

/// Runs `config.steps` steps from `θ₀` drawn per `config.initial`, calling
/// `observer` after each step, and returns the final state. Nothing is
/// stored; a non-finite state aborts with the failing step index.
pub fn simulate_chain<M, F>(
    model: &M,
    config: &ChainConfig,
    noise: &mut NoiseStream,
    mut observer: F,
) -> Result<Vec<f64>>
where
    M: Sde + ?Sized,
    F: FnMut(StepView<'_>),
{
    let d = model.dim();
    config.validate(d)?;
    let mut theta = config.initial.draw(noise);
    let eta = config.eta;
    if d == 1 {
        let mut x = theta[0];
        for k in 0..config.steps {
            let xi = noise.next_scalar();
            let (next, _) = step_1d(model, config.scheme, x, xi, eta);
            if !next.is_finite() {
                return Err(Error::NonFiniteEvaluation {
                    what: "chain state".into(),
                    step: Some(k),
                });
            }
            observer(StepView {
                k,
                theta: &[x],
                xi: &[xi],
                next: &[next],
            });
            x = next;
        }
        theta[0] = x;
        return Ok(theta);
    }
    let mut buf = StepBuffers::new(d);
    let mut xi = vec![0.0; d];
    let mut next = vec![0.0; d];
    for k in 0..config.steps {
        noise.fill(&mut xi);
        buf.step(model, config.scheme, &theta, &xi, eta, &mut next)
            .map_err(|_| Error::NonFiniteEvaluation {
                what: "chain state".into(),
                step: Some(k),
            })?;
        observer(StepView {
            k,
            theta: &theta,
            xi: &xi,
            next: &next,
        });
        std::mem::swap(&mut theta, &mut next);
    }
    Ok(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_model, ModelConstants, OrnsteinUhlenbeck, TanhDiffusion};
    use serde_json::json;

    fn tanh_demo() -> TanhDiffusion {
        TanhDiffusion::new(1.0, 0.0, 1.0, 0.5, 1).unwrap()
    }

    #[test]
    fn em_step_examples() {
        let ou = OrnsteinUhlenbeck::new(1.0, 1.0, 1).unwrap();
        let next = em_step(&ou, &[1.0], &[0.0], 0.01).unwrap();
        assert!((next[0] - 0.99).abs() < 1e-15);
        assert_eq!(em_step(&ou, &[0.0], &[0.0], 0.01).unwrap(), vec![0.0]);

        // b ≡ 0, σ = I in d = 2: an OU with κ → 0 is not allowed, so use a
        // zero-drift model directly.
        struct Flat(ModelConstants);
        impl Sde for Flat {
            fn dim(&self) -> usize {
                2
            }
            fn drift(&self, _x: &[f64], out: &mut [f64]) {
                out.fill(0.0);
            }
            fn diffusion(&self, _x: &[f64], out: &mut [f64]) {
                out.copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
            }
            fn diffusion_gradient(&self, _x: &[f64], out: &mut [f64]) {
                out.fill(0.0);
            }
            fn constants(&self) -> &ModelConstants {
                &self.0
            }
        }
        let flat = Flat(*ou.constants());
        let next = em_step(&flat, &[0.5, -1.0], &[1.0, 1.0], 0.04).unwrap();
        assert!((next[0] - 0.7).abs() < 1e-15 && (next[1] + 0.8).abs() < 1e-15);
    }

    #[test]
    fn correction_examples() {
        let ou = OrnsteinUhlenbeck::new(1.0, 1.0, 1).unwrap();
        assert_eq!(milstein_correction(&ou, &[0.3], &[1.7]).unwrap(), vec![0.0]);
        let m = tanh_demo();
        let c = milstein_correction(&m, &[0.0], &[2.0]).unwrap();
        assert!((c[0] - 1.5).abs() < 1e-15);
        assert_eq!(milstein_correction(&m, &[0.0], &[1.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn milstein_step_examples() {
        let m = tanh_demo();
        let a = milstein_step(&m, &[0.0], &[1.0], 0.01).unwrap();
        assert!((a[0] - 0.1).abs() < 1e-15);
        let b = milstein_step(&m, &[0.0], &[2.0], 0.01).unwrap();
        assert!((b[0] - 0.2075).abs() < 1e-15);
        // scalar path agrees with the general path
        let (s, corr) = step_1d(&m, Scheme::Milstein, 0.0, 2.0, 0.01);
        assert_eq!(s.to_bits(), b[0].to_bits());
        assert_eq!(corr, 1.5);
    }

    #[test]
    fn dimension_mismatch() {
        let m = builtin_model("tanhNd", &json!({"dim": 2})).unwrap();
        assert!(matches!(
            milstein_step(m.as_ref(), &[0.0], &[0.0, 0.0], 0.1),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn multi_d_diagonal_matches_scalar_coordinates() {
        let m = builtin_model("tanhNd", &json!({"dim": 3})).unwrap();
        let theta = [0.2, -0.7, 1.3];
        let xi = [0.4, -1.9, 2.2];
        let next = milstein_step(m.as_ref(), &theta, &xi, 0.05).unwrap();
        let scalar = TanhDiffusion::new(1.0, 0.5, 1.0, 0.5, 1).unwrap();
        for i in 0..3 {
            let (s, _) = step_1d(&scalar, Scheme::Milstein, theta[i], xi[i], 0.05);
            assert!((s - next[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_steps_returns_initial() {
        let m = tanh_demo();
        let cfg = ChainConfig::new(0.1, 1)
            .with_steps(0)
            .with_initial(InitialState::Fixed { state: vec![0.25] });
        let out = simulate_chain(&m, &cfg, &mut NoiseStream::new(1, 0), |_| {}).unwrap();
        assert_eq!(out, vec![0.25]);
    }

    #[test]
    fn simulate_is_deterministic() {
        let m = tanh_demo();
        let cfg = ChainConfig::new(0.05, 1);
        let a = simulate_chain(&m, &cfg, &mut NoiseStream::new(9, 4), |_| {}).unwrap();
        let b = simulate_chain(&m, &cfg, &mut NoiseStream::new(9, 4), |_| {}).unwrap();
        assert_eq!(a[0].to_bits(), b[0].to_bits());
        let c = simulate_chain(&m, &cfg, &mut NoiseStream::new(9, 5), |_| {}).unwrap();
        assert_ne!(a[0].to_bits(), c[0].to_bits());
    }

    #[test]
    fn observer_sees_consistent_steps() {
        let m = tanh_demo();
        let cfg = ChainConfig::new(0.1, 1);
        let mut last = 0.0;
        let mut count = 0;
        simulate_chain(&m, &cfg, &mut NoiseStream::new(3, 0), |v| {
            assert_eq!(v.theta[0], last);
            let (next, _) = step_1d(&m, Scheme::Milstein, v.theta[0], v.xi[0], 0.1);
            assert_eq!(next, v.next[0]);
            last = v.next[0];
            count += 1;
        })
        .unwrap();
        assert_eq!(count, 100);
    }

    #[test]
    fn divergence_is_reported_with_step() {
        struct Blowup(ModelConstants);
        impl Sde for Blowup {
            fn dim(&self) -> usize {
                1
            }
            fn drift(&self, x: &[f64], out: &mut [f64]) {
                out[0] = x[0] * x[0] * 1e200 + 1e300;
            }
            fn diffusion(&self, _x: &[f64], out: &mut [f64]) {
                out[0] = 1.0;
            }
            fn diffusion_gradient(&self, _x: &[f64], out: &mut [f64]) {
                out[0] = 0.0;
            }
            fn constants(&self) -> &ModelConstants {
                &self.0
            }
        }
        let c = *OrnsteinUhlenbeck::new(1.0, 1.0, 1).unwrap().constants();
        let err = simulate_chain(&Blowup(c), &ChainConfig::new(0.5, 1), &mut NoiseStream::new(0, 0), |_| {})
            .unwrap_err();
        assert!(matches!(err, Error::NonFiniteEvaluation { step: Some(_), .. }));
    }

    #[test]
    fn default_steps_handles_rounding() {
        assert_eq!(default_steps(0.02), 2500);
        assert_eq!(default_steps(0.05), 400);
        assert_eq!(default_steps(0.0125), 6400);
        assert_eq!(default_steps(0.03), 1111);
    }

    #[test]
    fn eta_out_of_range() {
        let m = tanh_demo();
        let cfg = ChainConfig::new(1.5, 1);
        assert!(matches!(
            simulate_chain(&m, &cfg, &mut NoiseStream::new(0, 0), |_| {}),
            Err(Error::InvalidConfig(_))
        ));
    }
}
