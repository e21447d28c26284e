//! One handler per subcommand. Each returns the CSV body, a results object
//! and the list of asserted checks.

use serde::Serialize;
use serde_json::{json, Value};

use milstein_mdp::diagnostics::curves::resolvable_grid;
use milstein_mdp::diagnostics::drift::probe_grid;
use milstein_mdp::diagnostics::*;
use milstein_mdp::estimator::{check_eta_grid, ChainStats};
use milstein_mdp::model::{validate_assumptions, Offender};
use milstein_mdp::montecarlo::{run_replicas, ReplicaSampleSet};
use milstein_mdp::quadrature::{density_for, solve_stein_1d, SteinSolution};
use milstein_mdp::scheme::{default_steps, InitialState};
use milstein_mdp::stats::{log_log_slope, mean_variance, median, normal_sf};
use milstein_mdp::Error;

use crate::config::{ExperimentConfig, Resolved};
use crate::CliError;

/// Largest tolerated relative gap between the two `𝒱_η` computations.
const V_IDENTITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub value: Value,
    pub tolerance: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn check(name: impl Into<String>, pass: bool, value: impl Serialize, tolerance: impl Serialize) -> Check {
    Check {
        name: name.into(),
        pass,
        value: json!(value),
        tolerance: json!(tolerance),
        note: None,
    }
}

pub struct CommandOutput {
    pub csv: String,
    pub results: Value,
    pub checks: Vec<Check>,
}

/// Core errors caused by the configuration rather than the computation.
pub fn classify(e: Error) -> CliError {
    match e {
        Error::UnknownModelId(_)
        | Error::UnknownTestFunction(_)
        | Error::InvalidParams(_)
        | Error::InvalidConfig(_)
        | Error::DimensionMismatch { .. }
        | Error::NotOneDimensional(_)
        | Error::InsufficientEtaGrid { .. }
        | Error::InsufficientResolution { .. }
        | Error::TooFewSamples { .. }
        | Error::EmptyReplicaSet
        | Error::EmptyGrid
        | Error::ConstantsMissing(_) => CliError::Config(e.to_string()),
        other => CliError::Runtime(other),
    }
}

fn require_1d(r: &Resolved, command: &str) -> Result<(), CliError> {
    if r.model.dim() == 1 {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "`{command}` needs a one-dimensional model, `{}` has d = {}",
            r.model.name(),
            r.model.dim()
        )))
    }
}

fn oracle(cfg: &ExperimentConfig, r: &Resolved) -> Result<SteinSolution, CliError> {
    let density = density_for(r.model.as_ref(), &cfg.stein).map_err(classify)?;
    solve_stein_1d(r.model.as_ref(), &r.h, &density, cfg.stein.tolerance).map_err(classify)
}

fn h_note(stein: &SteinSolution) -> Option<String> {
    (!stein.h_bounded()).then(|| "test function is unbounded (outside C_b^2); limit theorems do not formally apply".into())
}

fn replicas(cfg: &ExperimentConfig, r: &Resolved, stein: &SteinSolution, eta: f64) -> Result<ReplicaSampleSet, CliError> {
    let set = run_replicas(r.model.as_ref(), stein, &cfg.chain_config(eta), cfg.replicas, cfg.master_seed, cfg.workers)
        .map_err(classify)?;
    Ok(set.named(format!("{}/{}/eta={eta}", cfg.model.id, cfg.h.id)))
}

fn worst_v_gap(set: &ReplicaSampleSet) -> f64 {
    set.successes().map(ChainStats::v_identity_gap).fold(0.0, f64::max)
}

fn set_summary(set: &ReplicaSampleSet, config: &Value) -> Value {
    let w = set.w_values();
    let s = set.s_values();
    let (mw, vw) = mean_variance(&w);
    let (ms, vs) = mean_variance(&s);
    json!({
        "eta": set.eta,
        "m": set.m,
        "mean_w": mw,
        "var_w": vw,
        "mean_s": ms,
        "var_s": vs,
        "worst_v_identity_gap": worst_v_gap(set),
        "manifest": set.manifest(config),
    })
}

pub fn validate(cfg: &ExperimentConfig, r: &Resolved) -> Result<CommandOutput, CliError> {
    let report = validate_assumptions(r.model.as_ref(), &cfg.sampling).map_err(classify)?;
    let row = |name: &str, ok: bool, o: &Offender| {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
        format!(
            "{name},{ok},{},{},{}\n",
            o.excess,
            join(&o.x),
            o.y.as_deref().map(join).unwrap_or_default()
        )
    };
    let mut csv = String::from("check,ok,worst_excess,x,y\n");
    csv += &row("lipschitz", report.lipschitz_ok, &report.worst_lipschitz);
    csv += &row("dissipativity", report.dissipativity_ok, &report.worst_dissipativity);
    csv += &row("one_point", report.one_point_ok, &report.worst_one_point);
    csv += &format!(
        "positivity,{},{},{},\n",
        report.positivity_ok,
        -report.min_eigenvalue,
        report.min_eigenvalue_at.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
    );
    let checks = vec![
        check("lipschitz_ok", report.lipschitz_ok, report.worst_lipschitz.excess, 0.0),
        check("dissipativity_ok", report.dissipativity_ok, report.worst_dissipativity.excess, 0.0),
        check("one_point_ok", report.one_point_ok, report.worst_one_point.excess, 0.0),
        check("positivity_ok", report.positivity_ok, report.min_eigenvalue, 0.0),
    ];
    let results = json!({
        "lipschitz_ok": report.lipschitz_ok,
        "dissipativity_ok": report.dissipativity_ok,
        "one_point_ok": report.one_point_ok,
        "positivity_ok": report.positivity_ok,
        "report": report,
        "constants": r.model.constants(),
    });
    Ok(CommandOutput { csv, results, checks })
}

pub fn stein(cfg: &ExperimentConfig, r: &Resolved) -> Result<CommandOutput, CliError> {
    require_1d(r, "stein")?;
    let density = density_for(r.model.as_ref(), &cfg.stein).map_err(classify)?;
    let sol = solve_stein_1d(r.model.as_ref(), &r.h, &density, f64::INFINITY).map_err(classify)?;
    let mut csv = String::with_capacity(100 * sol.xs().len());
    csv.push_str("x,f,f_prime,f_second,residual\n");
    for i in 0..sol.xs().len() {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            sol.xs()[i],
            sol.f()[i],
            sol.f_prime()[i],
            sol.f_second()[i],
            sol.residual()[i]
        ));
    }
    let mut residual = check(
        "residual_sup",
        sol.residual_sup() <= cfg.stein.tolerance,
        sol.residual_sup(),
        cfg.stein.tolerance,
    );
    residual.note = h_note(&sol);
    let results = json!({
        "pi_h": sol.pi_h(),
        "asymptotic_variance": sol.asymptotic_variance(),
        "residual_sup": sol.residual_sup(),
        "derivative_sups": sol.derivative_sups(),
        "h_bounded": sol.h_bounded(),
        "half_width": density.half_width(),
        "intervals": sol.xs().len() - 1,
        "density_mean": density.mean(),
        "density_std": density.std_dev(),
    });
    Ok(CommandOutput {
        csv,
        results,
        checks: vec![residual],
    })
}

pub fn simulate(cfg: &ExperimentConfig, r: &Resolved) -> Result<CommandOutput, CliError> {
    require_1d(r, "simulate")?;
    let stein = oracle(cfg, r)?;
    let config_value = cfg.to_value();
    let etas = cfg.eta.values();
    let mut csv = format!("{}\n", ChainStats::CSV_HEADER);
    let mut per_eta = Vec::new();
    let mut worst = 0.0f64;
    let mut medians = Vec::new();
    for &eta in &etas {
        let set = replicas(cfg, r, &stein, eta)?;
        for line in set.to_csv().lines().skip(1) {
            csv.push_str(line);
            csv.push('\n');
        }
        worst = worst.max(worst_v_gap(&set));
        let rem: Vec<f64> = set.successes().map(|c| c.r_eta.abs()).collect();
        medians.push(median(&rem));
        per_eta.push(set_summary(&set, &config_value));
    }
    let decomposition = (check_eta_grid(&etas, 3, 4.0).is_ok()).then(|| {
        json!({
            "median_abs_remainder": medians,
            "slope": log_log_slope(&etas, &medians),
        })
    });
    let mut v = check("v_identity", worst <= V_IDENTITY_TOL, worst, V_IDENTITY_TOL);
    v.note = h_note(&stein);
    Ok(CommandOutput {
        csv,
        results: json!({
            "pi_h": stein.pi_h(),
            "asymptotic_variance": stein.asymptotic_variance(),
            "runs": per_eta,
            "decomposition": decomposition,
        }),
        checks: vec![v],
    })
}

pub fn clt(cfg: &ExperimentConfig, r: &Resolved) -> Result<CommandOutput, CliError> {
    require_1d(r, "clt")?;
    let eta = cfg.single_eta("clt")?;
    let stein = oracle(cfg, r)?;
    let set = replicas(cfg, r, &stein, eta)?;
    let report = clt_check(&set.w_values(), 1.0, cfg.alpha).map_err(classify)?;
    let scaled: Vec<f64> = set.successes().map(ChainStats::scaled_error).collect();
    let (_, var) = mean_variance(&scaled);
    let ratio = var / stein.asymptotic_variance();
    let [lo, hi] = cfg.variance_band;
    let mut ks = check("ks", report.pass, report.ks_statistic, report.critical_value);
    ks.note = h_note(&stein);
    Ok(CommandOutput {
        csv: set.to_csv(),
        results: json!({
            "ks": report,
            "scaled_error_variance": var,
            "oracle_variance": stein.asymptotic_variance(),
            "variance_ratio": ratio,
            "run": set_summary(&set, &cfg.to_value()),
        }),
        checks: vec![
            ks,
            check("variance_ratio", (lo..=hi).contains(&ratio), ratio, cfg.variance_band),
            check("v_identity", worst_v_gap(&set) <= V_IDENTITY_TOL, worst_v_gap(&set), V_IDENTITY_TOL),
        ],
    })
}

/// The resolution rule for the tails grid, applied before any simulation.
pub fn tails_precondition(cfg: &ExperimentConfig) -> Result<(), CliError> {
    check_resolution(&cfg.xs, cfg.replicas).map_err(classify)
}

pub fn tails(cfg: &ExperimentConfig, r: &Resolved) -> Result<CommandOutput, CliError> {
    require_1d(r, "tails")?;
    let eta = cfg.single_eta("tails")?;
    tails_precondition(cfg)?;
    let stein = oracle(cfg, r)?;
    let set = replicas(cfg, r, &stein, eta)?;
    let table = tail_ratio_table(&set, &cfg.xs).map_err(classify)?;
    let [lo, hi] = cfg.ratio_band;
    let outside: Vec<Value> = table
        .outside(lo, hi)
        .iter()
        .map(|r| json!({"statistic": r.statistic, "x": r.x, "ratio": r.ratio}))
        .collect();
    let mut band = check("ratio_band", outside.is_empty(), outside, cfg.ratio_band);
    band.note = h_note(&stein);
    Ok(CommandOutput {
        csv: table.to_csv(),
        results: json!({
            "table": table,
            "run": set_summary(&set, &cfg.to_value()),
        }),
        checks: vec![
            band,
            check("table_invariants", table.invariants_hold(), table.invariants_hold(), true),
            check("v_identity", worst_v_gap(&set) <= V_IDENTITY_TOL, worst_v_gap(&set), V_IDENTITY_TOL),
        ],
    })
}

pub fn order(cfg: &ExperimentConfig, r: &Resolved) -> Result<CommandOutput, CliError> {
    let initial = match cfg.initial.as_ref().expect("resolved") {
        InitialState::Fixed { state } => state.clone(),
        InitialState::Gaussian { .. } => {
            return Err(CliError::Config("initial: `order` needs a fixed starting point".into()))
        }
    };
    let settings = StrongOrderSettings {
        etas: cfg.eta.values(),
        horizon: cfg.horizon,
        paths: cfg.paths,
        eta_ref: cfg.eta_ref,
        initial: Some(initial),
    };
    let report = strong_order_regression(r.model.as_ref(), &settings, cfg.master_seed, cfg.workers).map_err(classify)?;
    let checks = if r.model.is_additive() {
        vec![check("schemes_coincide", report.schemes_coincide, report.schemes_coincide, true)]
    } else {
        let [ml, mh] = cfg.milstein_band;
        let [el, eh] = cfg.em_band;
        vec![
            check("slope_milstein", (ml..=mh).contains(&report.slope_milstein), report.slope_milstein, cfg.milstein_band),
            check("slope_em", (el..=eh).contains(&report.slope_em), report.slope_em, cfg.em_band),
        ]
    };
    Ok(CommandOutput {
        csv: report.to_csv(),
        results: json!(report),
        checks,
    })
}

pub fn drift(cfg: &ExperimentConfig, r: &Resolved) -> Result<CommandOutput, CliError> {
    let states = probe_grid(r.model.dim(), cfg.probes.lo, cfg.probes.hi, cfg.probes.count);
    let mut csv = format!("{}\n", DriftReport::CSV_HEADER);
    let mut checks = Vec::new();
    let mut reports = Vec::new();
    for eta in cfg.eta.values() {
        let report = drift_condition_check(r.model.as_ref(), eta, &states, cfg.inner, cfg.master_seed, cfg.workers)
            .map_err(classify)?;
        csv.extend(report.to_csv().lines().skip(1).map(|l| format!("{l}\n")));
        let failing = report.rows.iter().filter(|row| !row.pass).count();
        checks.push(check(format!("drift_eta={eta}"), failing == 0, failing, "0 failing probes (3 se slack)"));
        reports.push(json!({"eta": eta, "constants": report.constants, "failing": failing}));
    }
    Ok(CommandOutput {
        csv,
        results: json!({ "runs": reports }),
        checks,
    })
}

pub fn bridge(cfg: &ExperimentConfig, r: &Resolved) -> Result<CommandOutput, CliError> {
    require_1d(r, "bridge")?;
    let stein = oracle(cfg, r)?;
    let report = variance_bridge(
        r.model.as_ref(),
        &stein,
        &cfg.eta.values(),
        cfg.chain_len,
        cfg.initial.as_ref().expect("resolved"),
        cfg.master_seed,
        cfg.workers,
    )
    .map_err(classify)?;
    let mut slope = match report.slope {
        Some(s) => check("slope", s >= cfg.min_slope, s, cfg.min_slope),
        None => check("slope", true, Value::Null, cfg.min_slope),
    };
    slope.note = report.slope_skipped.clone();
    Ok(CommandOutput {
        csv: report.to_csv(),
        results: json!(report),
        checks: vec![
            check(
                "monotone_within_noise",
                report.monotone_within_noise,
                report.monotone_within_noise,
                "2 combined se",
            ),
            slope,
        ],
    })
}

pub fn curves(cfg: &ExperimentConfig, r: &Resolved) -> Result<CommandOutput, CliError> {
    require_1d(r, "curves")?;
    let eta = cfg.single_eta("curves")?;
    let stein = oracle(cfg, r)?;
    let set = replicas(cfg, r, &stein, eta)?;
    let mut csv = format!("{}\n", ConcentrationCurve::CSV_HEADER);
    let mut checks = Vec::new();
    let mut curves = Vec::new();
    for stat in ConcentrationStatistic::ALL {
        let values = stat.extract(&set);
        let ys = cfg.ys.clone().unwrap_or_else(|| resolvable_grid(&values, cfg.grid_points));
        let curve = concentration_curve(stat, &values, &ys).map_err(classify)?;
        csv.push_str(&curve.csv_rows());
        let mut c = check(
            stat.label(),
            curve.degenerate || curve.shape_ok(),
            json!({"linear_rate": curve.linear_rate, "quadratic_rate": curve.quadratic_rate}),
            "strictly decreasing tail, positive rates",
        );
        if curve.degenerate {
            c.note = Some("statistic is identically zero; curve degenerate".into());
        }
        checks.push(c);
        curves.push(curve);
    }
    Ok(CommandOutput {
        csv,
        results: json!({ "curves": curves, "run": set_summary(&set, &cfg.to_value()) }),
        checks,
    })
}

/// What a command would do, without running it.
pub fn plan(command: &str, cfg: &ExperimentConfig, r: &Resolved) -> Value {
    let etas = cfg.eta.values();
    let steps: Vec<u64> = etas.iter().map(|&e| cfg.steps_override.unwrap_or_else(|| default_steps(e))).collect();
    let chain_steps: u64 = steps.iter().sum::<u64>() * cfg.replicas as u64;
    let work = match command {
        "validate" => json!({ "points": cfg.sampling.points, "pairs": cfg.sampling.pairs }),
        "stein" => json!({ "intervals": cfg.stein.intervals }),
        "order" => json!({
            "paths": cfg.paths,
            "reference_steps": (cfg.horizon / cfg.eta_ref).round(),
        }),
        "drift" => json!({
            "probes": cfg.probes.count,
            "one_step_samples": cfg.probes.count * cfg.inner * etas.len(),
        }),
        "bridge" => json!({ "total_steps": cfg.chain_len * etas.len() as u64 }),
        "tails" => {
            let expected: Vec<Value> = cfg
                .xs
                .iter()
                .map(|&x| json!({"x": x, "expected_gaussian_hits": normal_sf(x) * cfg.replicas as f64}))
                .collect();
            json!({ "total_steps": chain_steps, "resolution": expected })
        }
        _ => json!({ "total_steps": chain_steps }),
    };
    json!({
        "command": command,
        "model": r.model.name(),
        "dim": r.model.dim(),
        "h": cfg.h.id,
        "etas": etas,
        "steps": steps,
        "replicas": cfg.replicas,
        "workers": cfg.workers,
        "work": work,
        "outputs": [
            cfg.output_dir.join(format!("{command}.csv")),
            cfg.output_dir.join(format!("{command}.summary.json")),
        ],
    })
}
