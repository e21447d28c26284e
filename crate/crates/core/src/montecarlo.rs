//! Replica orchestration.
//!
//! Replica `i` always draws from `NoiseStream(master_seed, i)` and results
//! are collected by index, so a sample set depends only on its inputs and
//! never on how many workers ran it.

use std::time::Duration;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use web_time::Instant;

use crate::error::{Error, Result};
use crate::estimator::{run_chain_stats, ChainStats};
use crate::model::Sde;
use crate::noise::NoiseStream;
use crate::quadrature::SteinSolution;
use crate::scheme::ChainConfig;

/// Maps `f` over `0..n`, in order, on up to `workers` threads (`0` means
/// all available cores).
pub fn par_map<T, F>(n: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if workers != 1 {
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
                return pool.install(|| (0..n).into_par_iter().map(&f).collect());
            }
        }
    }
    let _ = workers;
    (0..n).map(f).collect()
}

/// Hex SHA-256 of the compact JSON form of `config`.
pub fn config_hash(config: &Value) -> String {
    let digest = Sha256::digest(config.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Results of `N` independent chains at one step size.
#[derive(Debug, Clone)]
pub struct ReplicaSampleSet {
    pub experiment: String,
    pub eta: f64,
    pub m: u64,
    pub master_seed: u64,
    /// Entry `i` belongs to replica `i`; failed chains keep their error.
    pub records: Vec<std::result::Result<ChainStats, Error>>,
    pub wall_time: Duration,
}

impl ReplicaSampleSet {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn named(mut self, experiment: impl Into<String>) -> Self {
        self.experiment = experiment.into();
        self
    }

    pub fn successes(&self) -> impl Iterator<Item = &ChainStats> + '_ {
        self.records.iter().filter_map(|r| r.as_ref().ok())
    }

    pub fn success_count(&self) -> usize {
        self.successes().count()
    }

    pub fn failures(&self) -> impl Iterator<Item = (usize, &Error)> + '_ {
        self.records.iter().enumerate().filter_map(|(i, r)| r.as_ref().err().map(|e| (i, e)))
    }

    pub fn failure_count(&self) -> usize {
        self.failures().count()
    }

    pub fn first_failure(&self) -> Option<&Error> {
        self.failures().next().map(|(_, e)| e)
    }

    pub fn w_values(&self) -> Vec<f64> {
        self.successes().map(|c| c.w).collect()
    }

    pub fn s_values(&self) -> Vec<f64> {
        self.successes().map(|c| c.s).collect()
    }

    /// Successful replicas as ChainStats rows, in replica order.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(160 * (self.len() + 1));
        out.push_str(ChainStats::CSV_HEADER);
        out.push('\n');
        for c in self.successes() {
            out.push_str(&c.csv_row());
            out.push('\n');
        }
        out
    }

    pub fn manifest(&self, config: &Value) -> Value {
        let failures: Vec<Value> = self
            .failures()
            .map(|(i, e)| json!({ "replica": i, "error": e.to_string() }))
            .collect();
        json!({
            "experiment": self.experiment,
            "eta": self.eta,
            "m": self.m,
            "master_seed": self.master_seed,
            "replicas": self.len(),
            "succeeded": self.success_count(),
            "failures": failures,
            "config_hash": config_hash(config),
            "wall_time_secs": self.wall_time.as_secs_f64(),
        })
    }
}

/// Runs `replicas` chains with `config` and collects them by index.
pub fn run_replicas<M: Sde + ?Sized>(
    model: &M,
    stein: &SteinSolution,
    config: &ChainConfig,
    replicas: usize,
    master_seed: u64,
    workers: usize,
) -> Result<ReplicaSampleSet> {
    if replicas == 0 {
        return Err(Error::EmptyReplicaSet);
    }
    config.validate(model.dim())?;
    let start = Instant::now();
    let records = par_map(replicas, workers, |i| {
        run_chain_stats(model, stein, config, &mut NoiseStream::new(master_seed, i as u64))
    });
    let set = ReplicaSampleSet {
        experiment: String::new(),
        eta: config.eta,
        m: config.steps,
        master_seed,
        records,
        wall_time: start.elapsed(),
    };
    if set.success_count() == 0 {
        return Err(Error::AllReplicasFailed(replicas));
    }
    Ok(set)
}
