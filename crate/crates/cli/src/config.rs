//! Experiment configuration: JSON schema, `--set` overrides and validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use milstein_mdp::model::{builtin_model, builtin_test_function, SamplingGrid, Sde, TestFunction};
use milstein_mdp::quadrature::SteinSettings;
use milstein_mdp::scheme::{default_steps, ChainConfig, InitialState, Scheme};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component {
    pub id: String,
    #[serde(default = "empty_object")]
    pub params: Value,
}

fn empty_object() -> Value {
    Value::Object(Map::new())
}

/// A single step size or a list of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EtaSpec {
    One(f64),
    Many(Vec<f64>),
}

impl EtaSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            EtaSpec::One(e) => vec![*e],
            EtaSpec::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        Self {
            lo: -10.0,
            hi: 10.0,
            count: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: Component,
    #[serde(default = "default_h")]
    pub h: Component,
    pub eta: EtaSpec,
    #[serde(default)]
    pub steps_override: Option<u64>,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub stein: SteinSettings,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Worker hint; 0 uses every core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub scheme: Scheme,
    /// Law of `θ₀`; the origin when absent.
    #[serde(default)]
    pub initial: Option<InitialState>,

    // validate
    #[serde(default)]
    pub sampling: SamplingGrid,
    // clt
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_variance_band")]
    pub variance_band: [f64; 2],
    // tails
    #[serde(default = "default_xs")]
    pub xs: Vec<f64>,
    #[serde(default = "default_ratio_band")]
    pub ratio_band: [f64; 2],
    // order
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_eta_ref")]
    pub eta_ref: f64,
    #[serde(default = "default_milstein_band")]
    pub milstein_band: [f64; 2],
    #[serde(default = "default_em_band")]
    pub em_band: [f64; 2],
    // drift
    #[serde(default)]
    pub probes: ProbeSpec,
    #[serde(default = "default_inner")]
    pub inner: usize,
    // bridge
    #[serde(default = "default_chain_len")]
    pub chain_len: u64,
    #[serde(default = "default_min_slope")]
    pub min_slope: f64,
    // curves
    #[serde(default)]
    pub ys: Option<Vec<f64>>,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
}

fn default_h() -> Component {
    Component {
        id: "identity".into(),
        params: empty_object(),
    }
}

fn default_replicas() -> usize {
    1000
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_alpha() -> f64 {
    0.01
}

fn default_variance_band() -> [f64; 2] {
    [0.85, 1.15]
}

fn default_xs() -> Vec<f64> {
    vec![0.0, 0.5, 1.0, 1.5, 2.0]
}

fn default_ratio_band() -> [f64; 2] {
    [0.85, 1.18]
}

fn default_paths() -> usize {
    512
}

fn default_horizon() -> f64 {
    1.0
}

fn default_eta_ref() -> f64 {
    (2.0f64).powi(-14)
}

fn default_milstein_band() -> [f64; 2] {
    [0.85, 1.15]
}

fn default_em_band() -> [f64; 2] {
    [0.4, 0.65]
}

fn default_inner() -> usize {
    100_000
}

fn default_chain_len() -> u64 {
    10_000_000
}

fn default_min_slope() -> f64 {
    0.6
}

fn default_grid_points() -> usize {
    8
}

/// Model and test function built from a validated config.
pub struct Resolved {
    pub model: Box<dyn Sde>,
    pub h: TestFunction,
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(CliError::Config(format!("--set: empty path segment in `{key}`")));
        }
        let obj = match node {
            Value::Object(m) => m,
            Value::Null => {
                *node = Value::Object(Map::new());
                node.as_object_mut().expect("just created")
            }
            _ => return Err(CliError::Config(format!("--set {key}: `{part}` is not inside an object"))),
        };
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    Ok(())
}

/// `key=value` with a dotted key; the value is parsed as JSON and falls back
/// to a plain string.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set expects key=value, got `{assignment}`")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    set_path(root, key.trim(), value)
}

impl ExperimentConfig {
    pub fn from_json(text: &str, origin: &str, overrides: &[String]) -> Result<Self, CliError> {
        let parsed: Self =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("{origin}: {e}")))?;
        if overrides.is_empty() {
            return Ok(parsed);
        }
        let mut value = serde_json::to_value(&parsed).expect("config serializes");
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        serde_json::from_value(value).map_err(|e| CliError::Config(format!("after --set: {e}")))
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text, &path.display().to_string(), overrides)
    }

    /// Checks value ranges, builds the model and test function and fills in
    /// the initial state.
    pub fn resolve(&mut self) -> Result<Resolved, CliError> {
        let model = builtin_model(&self.model.id, &self.model.params).map_err(|e| CliError::Config(format!("model: {e}")))?;
        let h = builtin_test_function(&self.h.id, &self.h.params).map_err(|e| CliError::Config(format!("h: {e}")))?;
        let etas = self.eta.values();
        if etas.is_empty() {
            return Err(CliError::Config("eta: empty list".into()));
        }
        if let Some(bad) = etas.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
            return Err(CliError::Config(format!("eta: {bad} must lie in (0, 1)")));
        }
        if self.replicas == 0 {
            return Err(CliError::Config("replicas: must be at least 1".into()));
        }
        if self.steps_override == Some(0) {
            return Err(CliError::Config("steps_override: must be at least 1".into()));
        }
        if !(self.stein.tolerance > 0.0) || self.stein.intervals < 16 {
            return Err(CliError::Config("stein: need tolerance > 0 and at least 16 intervals".into()));
        }
        let initial = self.initial.clone().unwrap_or_else(|| InitialState::origin(model.dim()));
        if initial.dim() != model.dim() {
            return Err(CliError::Config(format!(
                "initial: dimension {} but model has dimension {}",
                initial.dim(),
                model.dim()
            )));
        }
        self.initial = Some(initial);
        Ok(Resolved { model, h })
    }

    pub fn single_eta(&self, command: &str) -> Result<f64, CliError> {
        match &self.eta {
            EtaSpec::One(e) => Ok(*e),
            EtaSpec::Many(v) if v.len() == 1 => Ok(v[0]),
            EtaSpec::Many(_) => Err(CliError::Config(format!("eta: `{command}` takes a single step size"))),
        }
    }

    pub fn chain_config(&self, eta: f64) -> ChainConfig {
        ChainConfig {
            eta,
            steps: self.steps_override.unwrap_or_else(|| default_steps(eta)),
            initial: self.initial.clone().expect("resolved"),
            scheme: self.scheme,
        }
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"model": {"id": "ou"}, "eta": 0.1}"#;

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::from_json(MINIMAL, "t", &[]).unwrap();
        assert_eq!(c.h.id, "identity");
        assert_eq!(c.replicas, 1000);
        assert_eq!(c.stein.intervals, 1 << 16);
        assert_eq!(c.eta.values(), vec![0.1]);
    }

    #[test]
    fn unknown_key_reports_name_and_line() {
        let text = "{\n  \"model\": {\"id\": \"ou\"},\n  \"eta\": 0.1,\n  \"replica\": 5\n}";
        let err = ExperimentConfig::from_json(text, "cfg.json", &[]).unwrap_err().to_string();
        assert!(err.contains("replica") && err.contains("line 4"), "{err}");
    }

    #[test]
    fn overrides_apply_by_path() {
        let sets = vec![
            "stein.intervals=4096".to_string(),
            "eta=[0.1,0.05]".to_string(),
            "model.params.kappa=2".to_string(),
            "output_dir=elsewhere".to_string(),
        ];
        let c = ExperimentConfig::from_json(MINIMAL, "t", &sets).unwrap();
        assert_eq!(c.stein.intervals, 4096);
        assert_eq!(c.eta, EtaSpec::Many(vec![0.1, 0.05]));
        assert_eq!(c.model.params["kappa"], 2);
        assert_eq!(c.output_dir, PathBuf::from("elsewhere"));
        let bad = ExperimentConfig::from_json(MINIMAL, "t", &["nope=1".to_string()]).unwrap_err();
        assert!(bad.to_string().contains("nope"));
        assert!(ExperimentConfig::from_json(MINIMAL, "t", &["novalue".to_string()]).is_err());
    }

    #[test]
    fn resolve_checks_ranges() {
        let mut c = ExperimentConfig::from_json(MINIMAL, "t", &["eta=1.5".to_string()]).unwrap();
        assert!(c.resolve().is_err());
        let mut c = ExperimentConfig::from_json(MINIMAL, "t", &["replicas=0".to_string()]).unwrap();
        assert!(c.resolve().is_err());
        let mut c = ExperimentConfig::from_json(MINIMAL, "t", &["model.id=\"nope\"".to_string()]).unwrap();
        assert!(c.resolve().is_err());
        let mut c = ExperimentConfig::from_json(MINIMAL, "t", &[]).unwrap();
        c.resolve().unwrap();
        assert_eq!(c.initial, Some(InitialState::origin(1)));
    }
}
