//! Browser bindings. Every entry point takes plain numbers and strings and
//! returns a JSON document for the page to plot.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use milstein_mdp::diagnostics::{strong_order_regression, tail_ratio_table, StrongOrderSettings};
use milstein_mdp::model::{builtin_model, builtin_test_function, Sde};
use milstein_mdp::montecarlo::run_replicas;
use milstein_mdp::quadrature::{stein_oracle, SteinSettings};
use milstein_mdp::scheme::{ChainConfig, InitialState};

/// Points sent to the page per curve.
const PLOT_POINTS: usize = 400;

fn parse_params(text: &str) -> Result<Value, String> {
    if text.trim().is_empty() {
        return Ok(json!({}));
    }
    serde_json::from_str(text).map_err(|e| format!("params: {e}"))
}

fn model_from(id: &str, params: &str) -> Result<Box<dyn Sde>, String> {
    builtin_model(id, &parse_params(params)?).map_err(|e| e.to_string())
}

fn thin(xs: &[f64], ys: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let stride = (xs.len() / PLOT_POINTS).max(1);
    let idx = (0..xs.len()).step_by(stride);
    (idx.clone().map(|i| xs[i]).collect(), idx.map(|i| ys[i]).collect())
}

pub fn stein_json(model: &str, params: &str, h: &str, intervals: usize) -> Result<String, String> {
    let model = model_from(model, params)?;
    let h = builtin_test_function(h, &json!({})).map_err(|e| e.to_string())?;
    let settings = SteinSettings {
        intervals,
        tolerance: f64::INFINITY,
        ..SteinSettings::default()
    };
    let (density, sol) = stein_oracle(model.as_ref(), &h, &settings).map_err(|e| e.to_string())?;
    let scale = density.normalization();
    let pdf: Vec<f64> = density.values().iter().map(|v| v / scale).collect();
    let (dx, dy) = thin(density.xs(), &pdf);
    let (x, f) = thin(sol.xs(), sol.f());
    let (_, fp) = thin(sol.xs(), sol.f_prime());
    let (_, res) = thin(sol.xs(), sol.residual());
    Ok(json!({
        "density": {"x": dx, "y": dy},
        "x": x,
        "f": f,
        "f_prime": fp,
        "residual": res,
        "pi_h": sol.pi_h(),
        "asymptotic_variance": sol.asymptotic_variance(),
        "residual_sup": sol.residual_sup(),
    })
    .to_string())
}

pub fn tails_json(model: &str, params: &str, h: &str, eta: f64, replicas: usize, seed: u64) -> Result<String, String> {
    let model = model_from(model, params)?;
    let h = builtin_test_function(h, &json!({})).map_err(|e| e.to_string())?;
    let (density, stein) = stein_oracle(model.as_ref(), &h, &SteinSettings::default()).map_err(|e| e.to_string())?;
    if !(eta > 0.0 && eta < 1.0) {
        return Err(format!("eta = {eta} must lie in (0, 1)"));
    }
    let initial = InitialState::Gaussian {
        mean: vec![density.mean()],
        std: density.std_dev(),
    };
    let config = ChainConfig::new(eta, 1).with_initial(initial);
    let set = run_replicas(model.as_ref(), &stein, &config, replicas, seed, 1).map_err(|e| e.to_string())?;
    // Only thresholds the sample can resolve.
    let xs: Vec<f64> = (0..=8)
        .map(|k| 0.25 * k as f64)
        .filter(|&x| milstein_mdp::stats::normal_sf(x) * replicas as f64 >= 100.0)
        .collect();
    let table = tail_ratio_table(&set, &xs).map_err(|e| e.to_string())?;
    let rows: Vec<Value> = table
        .rows
        .iter()
        .map(|r| json!({"statistic": r.statistic.label(), "x": r.x, "ratio": r.ratio, "lo": r.ci_lo, "hi": r.ci_hi}))
        .collect();
    Ok(json!({"steps": config.steps, "failures": set.failure_count(), "rows": rows}).to_string())
}

pub fn order_json(model: &str, params: &str, x0: f64, paths: usize, seed: u64) -> Result<String, String> {
    let model = model_from(model, params)?;
    let settings = StrongOrderSettings {
        paths,
        initial: Some(vec![x0; model.dim()]),
        ..StrongOrderSettings::dyadic(4, 8)
    };
    let r = strong_order_regression(model.as_ref(), &settings, seed, 1).map_err(|e| e.to_string())?;
    Ok(json!({
        "eta": r.etas,
        "error_em": r.error_em,
        "error_milstein": r.error_milstein,
        "slope_em": r.slope_em,
        "slope_milstein": r.slope_milstein,
        "schemes_coincide": r.schemes_coincide,
    })
    .to_string())
}

/// Invariant density, Stein solution `f`, `f'` and residual.
#[wasm_bindgen]
pub fn stein(model: &str, params: &str, h: &str, intervals: usize) -> Result<String, JsError> {
    stein_json(model, params, h, intervals).map_err(|e| JsError::new(&e))
}

/// Empirical over Gaussian tail ratios of `±W` and `±S`.
#[wasm_bindgen]
pub fn tails(model: &str, params: &str, h: &str, eta: f64, replicas: usize, seed: u64) -> Result<String, JsError> {
    tails_json(model, params, h, eta, replicas, seed).map_err(|e| JsError::new(&e))
}

/// Strong error of Euler-Maruyama and Milstein against step size.
#[wasm_bindgen]
pub fn order(model: &str, params: &str, x0: f64, paths: usize, seed: u64) -> Result<String, JsError> {
    order_json(model, params, x0, paths, seed).map_err(|e| JsError::new(&e))
}
