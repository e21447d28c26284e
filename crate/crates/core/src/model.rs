//! SDE models `dX = b(X) dt + σ(X) dW` and sampling-based checks of the
//! standing assumptions (global Lipschitz, dissipativity, uniformly
//! positive definite diffusion).
//!
//! Models expose their coefficients through slice-based callbacks so that a
//! single trait covers every dimension; the `*_1d` helpers are the hot path
//! used by the scalar chain code and are overridden by the builtin models.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{non_finite, Error, Result};

/// Constants declared by the model author. They are never inferred from
/// samples; `validate_assumptions` only checks them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConstants {
    /// Lipschitz bound `L` shared by drift and diffusion.
    pub lipschitz: f64,
    /// Dissipativity rate `K₁`.
    pub k1: f64,
    /// Dissipativity offset `K₂`.
    pub k2: f64,
    /// `sup ‖σ(x)‖` (Frobenius).
    pub sigma_sup: f64,
    /// `sup ‖∇σ(x)‖` (Frobenius over all three indices).
    pub grad_sigma_sup: f64,
    /// `‖b(0)‖₂`.
    pub b0_norm: f64,
}

impl ModelConstants {
    pub fn check(&self) -> Result<()> {
        let all = [
            self.lipschitz,
            self.k1,
            self.k2,
            self.sigma_sup,
            self.grad_sigma_sup,
            self.b0_norm,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::ConstantsMissing("non-finite constant".into()));
        }
        if self.k1 <= 0.0 {
            return Err(Error::ConstantsMissing(format!("K1 = {} must be > 0", self.k1)));
        }
        if self.lipschitz <= 0.0 {
            return Err(Error::ConstantsMissing(format!(
                "L = {} must be > 0",
                self.lipschitz
            )));
        }
        if self.k2 < 0.0 {
            return Err(Error::ConstantsMissing(format!("K2 = {} must be >= 0", self.k2)));
        }
        Ok(())
    }
}

/// A time-homogeneous SDE on `ℝ^d`.
///
/// Matrices are row-major: `diffusion` writes `σ[i][j]` at `i * d + j`,
/// `diffusion_gradient` writes `∂σ[i][j]/∂x^l` at `(i * d + j) * d + l`.
/// Implementations must be pure; they are called concurrently from many
/// chains.
pub trait Sde: Send + Sync {
    fn dim(&self) -> usize;
    fn drift(&self, x: &[f64], out: &mut [f64]);
    fn diffusion(&self, x: &[f64], out: &mut [f64]);
    fn diffusion_gradient(&self, x: &[f64], out: &mut [f64]);
    fn constants(&self) -> &ModelConstants;

    fn name(&self) -> &str {
        "custom"
    }

    /// `true` when σ is constant, so that the Milstein correction vanishes.
    fn is_additive(&self) -> bool {
        false
    }

    fn drift_1d(&self, x: f64) -> f64 {
        let mut out = [0.0];
        self.drift(&[x], &mut out);
        out[0]
    }

    fn diffusion_1d(&self, x: f64) -> f64 {
        let mut out = [0.0];
        self.diffusion(&[x], &mut out);
        out[0]
    }

    fn diffusion_derivative_1d(&self, x: f64) -> f64 {
        let mut out = [0.0];
        self.diffusion_gradient(&[x], &mut out);
        out[0]
    }
}

impl std::fmt::Debug for dyn Sde {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Sde")
            .field("name", &self.name())
            .field("dim", &self.dim())
            .finish()
    }
}

/// Ornstein–Uhlenbeck: `b(x) = −κx`, `σ = s·I`.
#[derive(Debug, Clone)]
pub struct OrnsteinUhlenbeck {
    kappa: f64,
    scale: f64,
    dim: usize,
    constants: ModelConstants,
}

impl OrnsteinUhlenbeck {
    pub fn new(kappa: f64, scale: f64, dim: usize) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidParams(format!("ou: kappa = {kappa} must be > 0")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParams(format!("ou: s = {scale} must be > 0")));
        }
        if dim == 0 {
            return Err(Error::InvalidParams("ou: dim must be >= 1".into()));
        }
        let constants = ModelConstants {
            lipschitz: kappa,
            k1: kappa,
            k2: 0.0,
            sigma_sup: scale * (dim as f64).sqrt(),
            grad_sigma_sup: 0.0,
            b0_norm: 0.0,
        };
        Ok(Self {
            kappa,
            scale,
            dim,
            constants,
        })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Stationary variance `s² / (2κ)` of each coordinate.
    pub fn stationary_variance(&self) -> f64 {
        self.scale * self.scale / (2.0 * self.kappa)
    }
}

impl Sde for OrnsteinUhlenbeck {
    fn dim(&self) -> usize {
        self.dim
    }

    fn drift(&self, x: &[f64], out: &mut [f64]) {
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = -self.kappa * xi;
        }
    }

    fn diffusion(&self, _x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        out.fill(0.0);
        for i in 0..d {
            out[i * d + i] = self.scale;
        }
    }

    fn diffusion_gradient(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn constants(&self) -> &ModelConstants {
        &self.constants
    }

    fn name(&self) -> &str {
        "ou"
    }

    fn is_additive(&self) -> bool {
        true
    }

    #[inline]
    fn drift_1d(&self, x: f64) -> f64 {
        -self.kappa * x
    }

    #[inline]
    fn diffusion_1d(&self, _x: f64) -> f64 {
        self.scale
    }

    #[inline]
    fn diffusion_derivative_1d(&self, _x: f64) -> f64 {
        0.0
    }
}

/// Diagonal tanh model: per coordinate `b(x) = −κx + c·sin x` and
/// `σ(x) = s₀ + s₁·tanh x`. With `dim = 1` this is the `tanh1d` builtin.
#[derive(Debug, Clone)]
pub struct TanhDiffusion {
    kappa: f64,
    c: f64,
    s0: f64,
    s1: f64,
    dim: usize,
    constants: ModelConstants,
}

impl TanhDiffusion {
    pub fn new(kappa: f64, c: f64, s0: f64, s1: f64, dim: usize) -> Result<Self> {
        let params = [kappa, c, s0, s1];
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("tanh: non-finite parameter".into()));
        }
        if kappa <= 0.0 {
            return Err(Error::InvalidParams(format!("tanh: kappa = {kappa} must be > 0")));
        }
        // (sin x − sin y)(x − y) ≤ (x − y)², so K₁ = κ − |c|.
        if c.abs() >= kappa {
            return Err(Error::InvalidParams(format!(
                "tanh: |c| = {} must be < kappa = {kappa} for dissipativity",
                c.abs()
            )));
        }
        if s0 <= s1.abs() {
            return Err(Error::InvalidParams(format!(
                "tanh: s0 = {s0} must exceed |s1| = {} for positivity",
                s1.abs()
            )));
        }
        if dim == 0 {
            return Err(Error::InvalidParams("tanh: dim must be >= 1".into()));
        }
        let root_d = (dim as f64).sqrt();
        let constants = ModelConstants {
            lipschitz: (kappa + c.abs()).max(s1.abs()),
            k1: kappa - c.abs(),
            k2: 0.0,
            sigma_sup: root_d * (s0 + s1.abs()),
            grad_sigma_sup: root_d * s1.abs(),
            b0_norm: 0.0,
        };
        Ok(Self {
            kappa,
            c,
            s0,
            s1,
            dim,
            constants,
        })
    }

    /// Lower bound `s₀ − |s₁|` on the eigenvalues of σ.
    pub fn sigma_floor(&self) -> f64 {
        self.s0 - self.s1.abs()
    }
}

impl Sde for TanhDiffusion {
    fn dim(&self) -> usize {
        self.dim
    }

    fn drift(&self, x: &[f64], out: &mut [f64]) {
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = self.drift_1d(xi);
        }
    }

    fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        out.fill(0.0);
        for i in 0..d {
            out[i * d + i] = self.diffusion_1d(x[i]);
        }
    }

    fn diffusion_gradient(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        out.fill(0.0);
        for i in 0..d {
            out[(i * d + i) * d + i] = self.diffusion_derivative_1d(x[i]);
        }
    }

    fn constants(&self) -> &ModelConstants {
        &self.constants
    }

    fn name(&self) -> &str {
        if self.dim == 1 {
            "tanh1d"
        } else {
            "tanhNd"
        }
    }

    fn is_additive(&self) -> bool {
        self.s1 == 0.0
    }

    #[inline]
    fn drift_1d(&self, x: f64) -> f64 {
        -self.kappa * x + self.c * x.sin()
    }

    #[inline]
    fn diffusion_1d(&self, x: f64) -> f64 {
        self.s0 + self.s1 * x.tanh()
    }

    #[inline]
    fn diffusion_derivative_1d(&self, x: f64) -> f64 {
        let t = x.tanh();
        self.s1 * (1.0 - t * t)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OuParams {
    #[serde(default = "one")]
    kappa: f64,
    #[serde(default = "one")]
    s: f64,
    #[serde(default = "one_usize")]
    dim: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TanhParams {
    #[serde(default = "one")]
    kappa: f64,
    #[serde(default = "half")]
    c: f64,
    #[serde(default = "one")]
    s0: f64,
    #[serde(default = "half")]
    s1: f64,
    dim: Option<usize>,
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

fn one_usize() -> usize {
    1
}

fn parse_params<T: serde::de::DeserializeOwned>(id: &str, params: &Value) -> Result<T> {
    let params = if params.is_null() {
        Value::Object(Default::default())
    } else {
        params.clone()
    };
    serde_json::from_value(params).map_err(|e| Error::InvalidParams(format!("{id}: {e}")))
}

/// Ids accepted by [`builtin_model`].
pub const BUILTIN_MODELS: [&str; 3] = ["ou", "tanh1d", "tanhNd"];

/// Looks up a builtin model by id. `params` is a JSON object (or `null` for
/// defaults); unknown keys are rejected.
pub fn builtin_model(id: &str, params: &Value) -> Result<Box<dyn Sde>> {
    match id {
        "ou" => {
            let p: OuParams = parse_params(id, params)?;
            Ok(Box::new(OrnsteinUhlenbeck::new(p.kappa, p.s, p.dim)?))
        }
        "tanh1d" => {
            let p: TanhParams = parse_params(id, params)?;
            if p.dim.is_some_and(|d| d != 1) {
                return Err(Error::InvalidParams("tanh1d: dim must be 1".into()));
            }
            Ok(Box::new(TanhDiffusion::new(p.kappa, p.c, p.s0, p.s1, 1)?))
        }
        "tanhNd" => {
            let p: TanhParams = parse_params(id, params)?;
            Ok(Box::new(TanhDiffusion::new(
                p.kappa,
                p.c,
                p.s0,
                p.s1,
                p.dim.unwrap_or(2),
            )?))
        }
        other => Err(Error::UnknownModelId(other.to_string())),
    }
}

/// Scalar observable `h: ℝ → ℝ` with analytic first and second derivatives.
/// The value is `amplitude · base(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub kind: TestFunctionKind,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "kebab-case")]
pub enum TestFunctionKind {
    /// `h(x) = x`; unbounded, so outside `C_b²`.
    Identity,
    /// `exp(−(x − center)² / (2 width²))`.
    GaussBump { center: f64, width: f64 },
    /// `tanh(x / scale)`.
    Tanh { scale: f64 },
    /// `cos(freq · x)`.
    Cos { freq: f64 },
    Constant { value: f64 },
}

impl TestFunction {
    pub fn new(kind: TestFunctionKind) -> Self {
        Self {
            kind,
            amplitude: 1.0,
        }
    }

    pub fn identity() -> Self {
        Self::new(TestFunctionKind::Identity)
    }

    pub fn gauss_bump() -> Self {
        Self::new(TestFunctionKind::GaussBump {
            center: 0.0,
            width: 1.0,
        })
    }

    pub fn scaled(self, factor: f64) -> Self {
        Self {
            amplitude: self.amplitude * factor,
            ..self
        }
    }

    pub fn id(&self) -> &'static str {
        match self.kind {
            TestFunctionKind::Identity => "identity",
            TestFunctionKind::GaussBump { .. } => "gauss-bump",
            TestFunctionKind::Tanh { .. } => "tanh",
            TestFunctionKind::Cos { .. } => "cos",
            TestFunctionKind::Constant { .. } => "constant",
        }
    }

    /// Whether `h ∈ C_b²` (bounded with bounded derivatives).
    pub fn is_bounded(&self) -> bool {
        !matches!(self.kind, TestFunctionKind::Identity)
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        self.amplitude
            * match self.kind {
                TestFunctionKind::Identity => x,
                TestFunctionKind::GaussBump { center, width } => {
                    let z = (x - center) / width;
                    (-0.5 * z * z).exp()
                }
                TestFunctionKind::Tanh { scale } => (x / scale).tanh(),
                TestFunctionKind::Cos { freq } => (freq * x).cos(),
                TestFunctionKind::Constant { value } => value,
            }
    }

    pub fn first(&self, x: f64) -> f64 {
        self.amplitude
            * match self.kind {
                TestFunctionKind::Identity => 1.0,
                TestFunctionKind::GaussBump { center, width } => {
                    let z = (x - center) / width;
                    -z / width * (-0.5 * z * z).exp()
                }
                TestFunctionKind::Tanh { scale } => {
                    let t = (x / scale).tanh();
                    (1.0 - t * t) / scale
                }
                TestFunctionKind::Cos { freq } => -freq * (freq * x).sin(),
                TestFunctionKind::Constant { .. } => 0.0,
            }
    }

    pub fn second(&self, x: f64) -> f64 {
        self.amplitude
            * match self.kind {
                TestFunctionKind::Identity => 0.0,
                TestFunctionKind::GaussBump { center, width } => {
                    let z = (x - center) / width;
                    (z * z - 1.0) / (width * width) * (-0.5 * z * z).exp()
                }
                TestFunctionKind::Tanh { scale } => {
                    let t = (x / scale).tanh();
                    -2.0 * t * (1.0 - t * t) / (scale * scale)
                }
                TestFunctionKind::Cos { freq } => -freq * freq * (freq * x).cos(),
                TestFunctionKind::Constant { .. } => 0.0,
            }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TestFunctionParams {
    #[serde(default = "one")]
    amplitude: f64,
    center: Option<f64>,
    width: Option<f64>,
    scale: Option<f64>,
    freq: Option<f64>,
    value: Option<f64>,
}

/// Ids accepted by [`builtin_test_function`].
pub const BUILTIN_TEST_FUNCTIONS: [&str; 5] = ["identity", "gauss-bump", "tanh", "cos", "constant"];

/// Looks up a builtin test function. `"x"` is accepted as an alias of
/// `"identity"`.
pub fn builtin_test_function(id: &str, params: &Value) -> Result<TestFunction> {
    let p: TestFunctionParams = parse_params(id, params)?;
    let positive = |name: &str, v: f64| -> Result<f64> {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(Error::InvalidParams(format!("{id}: {name} = {v} must be > 0")))
        }
    };
    let kind = match id {
        "identity" | "x" => TestFunctionKind::Identity,
        "gauss-bump" => TestFunctionKind::GaussBump {
            center: p.center.unwrap_or(0.0),
            width: positive("width", p.width.unwrap_or(1.0))?,
        },
        "tanh" => TestFunctionKind::Tanh {
            scale: positive("scale", p.scale.unwrap_or(1.0))?,
        },
        "cos" => TestFunctionKind::Cos {
            freq: p.freq.unwrap_or(1.0),
        },
        "constant" => TestFunctionKind::Constant {
            value: p.value.unwrap_or(1.0),
        },
        other => return Err(Error::UnknownTestFunction(other.to_string())),
    };
    if !p.amplitude.is_finite() {
        return Err(Error::InvalidParams(format!("{id}: amplitude must be finite")));
    }
    Ok(TestFunction {
        kind,
        amplitude: p.amplitude,
    })
}

/// Box `[lower, upper]^d` sampled uniformly with a fixed seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingGrid {
    pub lower: f64,
    pub upper: f64,
    pub points: usize,
    pub pairs: usize,
    pub seed: u64,
}

impl Default for SamplingGrid {
    fn default() -> Self {
        Self {
            lower: -10.0,
            upper: 10.0,
            points: 10_000,
            pairs: 10_000,
            seed: 0,
        }
    }
}

/// The worst sample seen by one check; `excess` is `lhs − rhs` (positive
/// means violated).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Offender {
    pub excess: f64,
    pub x: Vec<f64>,
    pub y: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub lipschitz_ok: bool,
    pub dissipativity_ok: bool,
    /// One-point bound `⟨x, b(x)⟩ ≤ −(K₁/2)‖x‖² + K₂ + ‖b(0)‖²/(2K₁)`.
    pub one_point_ok: bool,
    pub positivity_ok: bool,
    pub worst_lipschitz: Offender,
    pub worst_dissipativity: Offender,
    pub worst_one_point: Offender,
    /// Smallest eigenvalue of the symmetric part of σ over all points.
    pub min_eigenvalue: f64,
    pub min_eigenvalue_at: Vec<f64>,
    /// Largest `‖∇σ‖` seen; zero means the additive-noise regime where
    /// Milstein reduces to Euler–Maruyama.
    pub max_grad_sigma: f64,
    pub additive_noise: bool,
    /// Sample estimates, reported only; declared constants are not touched.
    pub estimated_lipschitz: f64,
    pub estimated_k1: f64,
}

impl ValidationReport {
    pub fn all_ok(&self) -> bool {
        self.lipschitz_ok && self.dissipativity_ok && self.one_point_ok && self.positivity_ok
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn ensure_finite(what: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|a| a.is_finite()) {
        Ok(())
    } else {
        Err(non_finite(what))
    }
}

fn min_eigenvalue(sigma: &[f64], d: usize) -> f64 {
    let m = DMatrix::from_row_slice(d, d, sigma);
    let sym = (&m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

struct Worst {
    excess: f64,
    x: Vec<f64>,
    y: Option<Vec<f64>>,
}

impl Worst {
    fn new() -> Self {
        Self {
            excess: f64::NEG_INFINITY,
            x: Vec::new(),
            y: None,
        }
    }

    fn offer(&mut self, excess: f64, x: &[f64], y: Option<&[f64]>) {
        if excess > self.excess {
            self.excess = excess;
            self.x = x.to_vec();
            self.y = y.map(<[f64]>::to_vec);
        }
    }

    fn into_offender(self) -> Offender {
        Offender {
            excess: self.excess,
            x: self.x,
            y: self.y,
        }
    }
}

/// Checks the declared constants of `model` on uniformly sampled points and
/// pairs of the box. Inequalities are accepted with a relative slack of
/// `1e-10` to absorb rounding.
pub fn validate_assumptions<M: Sde + ?Sized>(
    model: &M,
    grid: &SamplingGrid,
) -> Result<ValidationReport> {
    if grid.points == 0 || grid.pairs == 0 || !(grid.upper > grid.lower) {
        return Err(Error::EmptyGrid);
    }
    let c = *model.constants();
    c.check()?;
    let d = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(grid.seed);
    let sample = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..d).map(|_| rng.random_range(grid.lower..grid.upper)).collect()
    };
    let slack = |scale: f64| 1e-10 * scale.max(1.0);

    let mut bx = vec![0.0; d];
    let mut by = vec![0.0; d];
    let mut sx = vec![0.0; d * d];
    let mut sy = vec![0.0; d * d];
    let mut gx = vec![0.0; d * d * d];

    let mut worst_lip = Worst::new();
    let mut worst_dis = Worst::new();
    let mut est_l: f64 = 0.0;
    let mut est_k1 = f64::INFINITY;
    for _ in 0..grid.pairs {
        let x = sample(&mut rng);
        let y = sample(&mut rng);
        let dxy = diff_norm(&x, &y);
        if dxy == 0.0 {
            continue;
        }
        model.drift(&x, &mut bx);
        model.drift(&y, &mut by);
        model.diffusion(&x, &mut sx);
        model.diffusion(&y, &mut sy);
        ensure_finite("drift", &bx)?;
        ensure_finite("drift", &by)?;
        ensure_finite("diffusion", &sx)?;
        ensure_finite("diffusion", &sy)?;

        let lip = diff_norm(&bx, &by).max(diff_norm(&sx, &sy));
        est_l = est_l.max(lip / dxy);
        let rhs = c.lipschitz * dxy;
        worst_lip.offer(lip - rhs - slack(rhs), &x, Some(&y));

        let db: Vec<f64> = bx.iter().zip(&by).map(|(a, b)| a - b).collect();
        let dv: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let inner = dot(&db, &dv);
        est_k1 = est_k1.min(-inner / (dxy * dxy));
        let rhs = -c.k1 * dxy * dxy + c.k2;
        worst_dis.offer(inner - rhs - slack(rhs.abs()), &x, Some(&y));
    }

    let mut worst_one = Worst::new();
    let mut min_eig = f64::INFINITY;
    let mut min_eig_at = Vec::new();
    let mut max_grad: f64 = 0.0;
    for _ in 0..grid.points {
        let x = sample(&mut rng);
        model.drift(&x, &mut bx);
        model.diffusion(&x, &mut sx);
        model.diffusion_gradient(&x, &mut gx);
        ensure_finite("drift", &bx)?;
        ensure_finite("diffusion", &sx)?;
        ensure_finite("diffusion_gradient", &gx)?;

        let nx = norm(&x);
        let rhs = -0.5 * c.k1 * nx * nx + c.k2 + c.b0_norm * c.b0_norm / (2.0 * c.k1);
        worst_one.offer(dot(&x, &bx) - rhs - slack(rhs.abs()), &x, None);

        let eig = if d == 1 { sx[0] } else { min_eigenvalue(&sx, d) };
        if eig < min_eig {
            min_eig = eig;
            min_eig_at = x.clone();
        }
        max_grad = max_grad.max(norm(&gx));
    }

    Ok(ValidationReport {
        lipschitz_ok: worst_lip.excess <= 0.0,
        dissipativity_ok: worst_dis.excess <= 0.0,
        one_point_ok: worst_one.excess <= 0.0,
        positivity_ok: min_eig > 0.0,
        worst_lipschitz: worst_lip.into_offender(),
        worst_dissipativity: worst_dis.into_offender(),
        worst_one_point: worst_one.into_offender(),
        min_eigenvalue: min_eig,
        min_eigenvalue_at: min_eig_at,
        max_grad_sigma: max_grad,
        additive_noise: max_grad == 0.0,
        estimated_lipschitz: est_l,
        estimated_k1: est_k1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    /// `b(x) = +x`: anti-dissipative, declared as if it were OU.
    struct Expanding(ModelConstants);

    impl Sde for Expanding {
        fn dim(&self) -> usize {
            1
        }
        fn drift(&self, x: &[f64], out: &mut [f64]) {
            out[0] = x[0];
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

    struct NanDrift(ModelConstants);

    impl Sde for NanDrift {
        fn dim(&self) -> usize {
            1
        }
        fn drift(&self, x: &[f64], out: &mut [f64]) {
            out[0] = if x[0] > 0.0 { f64::NAN } else { -x[0] };
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

    fn ou_constants() -> ModelConstants {
        *OrnsteinUhlenbeck::new(1.0, 1.0, 1).unwrap().constants()
    }

    #[test]
    fn ou_passes_its_own_constants() {
        let model = builtin_model("ou", &json!({"kappa": 1.0, "s": 1.0})).unwrap();
        let c = model.constants();
        assert_eq!((c.k1, c.k2, c.lipschitz, c.grad_sigma_sup), (1.0, 0.0, 1.0, 0.0));
        let report = validate_assumptions(model.as_ref(), &SamplingGrid::default()).unwrap();
        assert!(report.all_ok(), "{report:?}");
        assert!(report.additive_noise);
    }

    #[test]
    fn expanding_drift_fails_dissipativity() {
        let model = Expanding(ou_constants());
        let report = validate_assumptions(&model, &SamplingGrid::default()).unwrap();
        assert!(!report.dissipativity_ok);
        assert!(report.worst_dissipativity.excess > 0.0);
        assert!(report.worst_dissipativity.y.is_some());
        assert!(report.lipschitz_ok);
    }

    #[test]
    fn tanh_positivity_floor() {
        let model = TanhDiffusion::new(1.0, 0.5, 1.0, 0.5, 1).unwrap();
        let grid = SamplingGrid {
            lower: -5.0,
            upper: 5.0,
            ..SamplingGrid::default()
        };
        let report = validate_assumptions(&model, &grid).unwrap();
        assert!(report.positivity_ok);
        assert!(report.min_eigenvalue >= 0.5);
        // tanh(−5) ≈ −0.99991, so the grid minimum sits just above 0.5.
        assert!(report.min_eigenvalue < 0.501);
        assert!(!report.additive_noise);
    }

    #[test]
    fn tanh1d_constants() {
        let model = builtin_model(
            "tanh1d",
            &json!({"kappa": 1.0, "c": 0.5, "s0": 1.0, "s1": 0.5}),
        )
        .unwrap();
        assert_eq!(model.constants().k1, 0.5);
        assert_eq!(model.constants().sigma_sup, 1.5);
        assert_eq!(model.diffusion_1d(0.0), 1.0);
    }

    #[test]
    fn invalid_params_rejected() {
        let err = builtin_model("tanh1d", &json!({"kappa": 1.0, "c": 1.5})).unwrap_err();
        assert!(matches!(err, Error::InvalidParams(_)));
        let err = builtin_model("tanh1d", &json!({"s0": 0.5, "s1": 0.5})).unwrap_err();
        assert!(matches!(err, Error::InvalidParams(_)));
        let err = builtin_model("ou", &json!({"sigma": 1.0})).unwrap_err();
        assert!(matches!(err, Error::InvalidParams(_)));
        assert!(matches!(
            builtin_model("gbm", &Value::Null),
            Err(Error::UnknownModelId(_))
        ));
    }

    #[test]
    fn empty_grid_and_non_finite() {
        let model = OrnsteinUhlenbeck::new(1.0, 1.0, 1).unwrap();
        let grid = SamplingGrid {
            points: 0,
            ..SamplingGrid::default()
        };
        assert_eq!(validate_assumptions(&model, &grid), Err(Error::EmptyGrid));
        let bad = NanDrift(ou_constants());
        assert!(matches!(
            validate_assumptions(&bad, &SamplingGrid::default()),
            Err(Error::NonFiniteEvaluation { .. })
        ));
    }

    #[test]
    fn declared_k1_zero_is_rejected() {
        let mut c = ou_constants();
        c.k1 = 0.0;
        let model = Expanding(c);
        assert!(matches!(
            validate_assumptions(&model, &SamplingGrid::default()),
            Err(Error::ConstantsMissing(_))
        ));
    }

    #[test]
    fn test_function_derivatives_match_finite_differences() {
        let fns = BUILTIN_TEST_FUNCTIONS
            .iter()
            .map(|id| builtin_test_function(id, &Value::Null).unwrap());
        let h = 1e-4;
        for f in fns {
            for i in 0..41 {
                let x = -4.0 + 0.2 * i as f64;
                let d1 = (f.value(x + h) - f.value(x - h)) / (2.0 * h);
                let d2 = (f.first(x + h) - f.first(x - h)) / (2.0 * h);
                let tol = |exact: f64| 1e-5 * exact.abs().max(1e-3);
                assert!((d1 - f.first(x)).abs() <= tol(f.first(x)), "{} h' at {x}", f.id());
                assert!((d2 - f.second(x)).abs() <= tol(f.second(x)), "{} h'' at {x}", f.id());
            }
        }
    }

    #[test]
    fn tanh_nd_is_diagonal() {
        let model = builtin_model("tanhNd", &json!({"dim": 3})).unwrap();
        assert_eq!(model.dim(), 3);
        let x = [0.3, -1.0, 2.0];
        let mut s = vec![0.0; 9];
        model.diffusion(&x, &mut s);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert_eq!(s[i * 3 + j], 0.0);
                }
            }
        }
        assert_eq!(s[4], model.diffusion_1d(-1.0));
    }
}
