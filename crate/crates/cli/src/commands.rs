use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use etlqg::model::InfoPattern;
use etlqg::policies::scalar_dp_value;
use etlqg::riccati::{backward_riccati, RiccatiSolution};
use etlqg::simulate::{
    lambda_sweep, monte_carlo, ControlPolicy, Estimate, RunSummary, Simulator, TrajectoryRecord, TriggerPolicy,
};
use etlqg::Vector;

use crate::config::{Experiment, ExperimentConfig, PolicyName, TriggerChoice};
use crate::error::CliError;

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub policy: Option<(PolicyName, Option<(usize, usize)>)>,
}

/// Parse `NAME`, `periodic:PERIOD` or `periodic:PERIOD:OFFSET`.
pub fn parse_policy(text: &str) -> Result<(PolicyName, Option<(usize, usize)>), CliError> {
    let mut parts = text.split(':');
    let name = parts.next().unwrap_or_default();
    let policy = PolicyName::parse(name).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown policy {name:?}; expected voi, periodic, always, never or exact_scalar_dp"
        ))
    })?;
    let numbers = parts
        .map(|p| p.parse::<usize>().map_err(|_| CliError::Usage(format!("bad policy parameter {p:?}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let schedule = match (policy, numbers.as_slice()) {
        (_, []) => None,
        (PolicyName::Periodic, [p]) => Some((*p, 0)),
        (PolicyName::Periodic, [p, o]) => Some((*p, *o)),
        _ => return Err(CliError::Usage(format!("policy {text:?} takes no parameters in this form"))),
    };
    Ok((policy, schedule))
}

/// Load a config and apply overrides. The hash covers the result.
pub fn load(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = overrides.seed {
        cfg.experiment.base_seed = seed;
    }
    if let Some(runs) = overrides.runs {
        cfg.experiment.n_runs = runs;
    }
    if let Some((policy, schedule)) = overrides.policy {
        cfg.set_policy(policy, schedule);
    }
    Ok(cfg)
}

/// Print diagnostics to `err`. Returns whether the config is free of errors.
pub fn validate(cfg: &ExperimentConfig, err: &mut dyn Write) -> Result<bool, CliError> {
    let exp = cfg.build()?;
    let diags = exp.diagnostics();
    for d in &diags {
        writeln!(err, "{d}").map_err(io)?;
    }
    Ok(!diags.iter().any(|d| d.is_error()))
}

fn io(e: std::io::Error) -> CliError {
    CliError::Io(e.to_string())
}

/// Build and validate, failing with every error diagnostic.
fn prepare(cfg: &ExperimentConfig) -> Result<(Experiment, RiccatiSolution), CliError> {
    let exp = cfg.build()?;
    let errors: Vec<String> = exp.diagnostics().iter().filter(|d| d.is_error()).map(|d| d.to_string()).collect();
    if !errors.is_empty() {
        return Err(CliError::Config(errors.join("\n")));
    }
    let ric = backward_riccati(&exp.sys, &exp.cost)?;
    Ok((exp, ric))
}

fn trigger_policy(exp: &Experiment, ric: &RiccatiSolution) -> Result<TriggerPolicy, CliError> {
    Ok(match &exp.trigger {
        TriggerChoice::Voi => TriggerPolicy::Voi,
        TriggerChoice::Periodic(spec) => TriggerPolicy::Periodic(*spec),
        TriggerChoice::Always => TriggerPolicy::Always,
        TriggerChoice::Never => TriggerPolicy::Never,
        TriggerChoice::ExactScalarDp { grid, quadrature_order } => {
            let table = scalar_dp_value(&exp.sys, &exp.cost, ric, *grid, *quadrature_order).map_err(|e| match e {
                etlqg::Error::UnsupportedDimension { .. } | etlqg::Error::Pattern { .. } | etlqg::Error::InvalidInput(_) => {
                    CliError::Config(format!("trigger: {e}"))
                }
                other => CliError::Numerical(other),
            })?;
            TriggerPolicy::ExactScalarDp(Arc::new(table))
        }
    })
}

fn num(x: f64) -> String {
    ryu::Buffer::new().format(x).to_string()
}

fn metadata_line(hash: &str, seed: u64, extra: &str) -> String {
    format!("# config_hash={hash} seed={seed}{extra}\n")
}

fn trajectory_csv(traj: &TrajectoryRecord, imperfect: bool, hash: &str) -> Result<Vec<u8>, CliError> {
    let first = &traj.steps[0];
    let (m, n) = (first.u.len(), first.x.len());
    let p = first.y.as_ref().map_or(0, |y| y.len());
    let mut header = vec!["k".to_string(), "delta".into(), "voi".into()];
    let names = |prefix: &'static str, len: usize| (0..len).map(move |i| format!("{prefix}{i}"));
    header.extend(names("u", m));
    header.extend(names("x", n));
    header.extend(names("xhat", n));
    if imperfect {
        header.extend(names("y", p));
        header.extend(names("eps", n));
        header.extend(names("nu", p));
    }

    let mut out = metadata_line(hash, traj.seed, &format!(" stream={} rng={}", traj.stream_index, traj.rng_algorithm)).into_bytes();
    let mut w = csv::Writer::from_writer(&mut out);
    let csv_err = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(&header).map_err(csv_err)?;

    let vec_cells = |v: Option<&Vector>, len: usize| -> Vec<String> {
        match v {
            Some(v) => v.iter().map(|x| num(*x)).collect(),
            None => vec![String::new(); len],
        }
    };
    for s in &traj.steps {
        let mut row = vec![s.k.to_string(), u8::from(s.delta).to_string(), s.voi.map(num).unwrap_or_default()];
        row.extend(vec_cells(Some(&s.u), m));
        row.extend(vec_cells(Some(&s.x), n));
        row.extend(vec_cells(Some(&s.xhat), n));
        if imperfect {
            row.extend(vec_cells(s.y.as_ref(), p));
            row.extend(vec_cells(s.eps.as_ref(), n));
            row.extend(vec_cells(s.nu.as_ref(), p));
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    // Terminal state x_{N+1}: no decision or input is taken there.
    let mut row = vec![(traj.horizon() + 1).to_string(), String::new(), String::new()];
    row.extend(vec_cells(None, m));
    row.extend(vec_cells(Some(&traj.x_terminal), n));
    row.extend(vec_cells(Some(&traj.xhat_terminal), n));
    if imperfect {
        row.extend(vec_cells(None, 2 * p + n));
    }
    w.write_record(&row).map_err(csv_err)?;
    w.flush().map_err(io)?;
    drop(w);
    Ok(out)
}

#[derive(Serialize)]
struct EstimateJson {
    mean: f64,
    stderr: f64,
}

impl From<Estimate> for EstimateJson {
    fn from(e: Estimate) -> Self {
        Self {
            mean: e.mean,
            stderr: e.stderr,
        }
    }
}

#[derive(Serialize)]
struct TrajectoryJson {
    stream_index: u64,
    #[serde(rename = "J")]
    j: f64,
    #[serde(rename = "R")]
    r: f64,
    psi: f64,
    transmissions: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    communication_cost: Option<f64>,
    x_terminal: Vec<f64>,
}

#[derive(Serialize)]
struct MonteCarloJson {
    n_runs: usize,
    #[serde(rename = "J")]
    j: EstimateJson,
    #[serde(rename = "R")]
    r: EstimateJson,
    psi: EstimateJson,
    transmissions: EstimateJson,
    transmissions_min: usize,
    transmissions_max: usize,
    runs: Vec<TrajectoryJson>,
}

#[derive(Serialize)]
struct SummaryJson<'a> {
    config_hash: &'a str,
    base_seed: u64,
    rng_algorithm: &'a str,
    policy: &'a str,
    info_pattern: &'a str,
    horizon: usize,
    lambda: f64,
    trajectory: TrajectoryJson,
    #[serde(skip_serializing_if = "Option::is_none")]
    monte_carlo: Option<MonteCarloJson>,
}

fn trajectory_json(t: &TrajectoryRecord) -> TrajectoryJson {
    let o = t.outcome();
    TrajectoryJson {
        stream_index: o.stream_index,
        j: o.j,
        r: o.r,
        psi: o.psi,
        transmissions: o.transmissions,
        communication_cost: Some(t.communication_cost()),
        x_terminal: o.x_terminal.iter().copied().collect(),
    }
}

fn monte_carlo_json(s: RunSummary) -> MonteCarloJson {
    MonteCarloJson {
        n_runs: s.n_runs,
        j: s.j.into(),
        r: s.r.into(),
        psi: s.psi.into(),
        transmissions: s.transmissions.into(),
        transmissions_min: s.transmissions_min,
        transmissions_max: s.transmissions_max,
        runs: s
            .outcomes
            .into_iter()
            .map(|o| TrajectoryJson {
                stream_index: o.stream_index,
                j: o.j,
                r: o.r,
                psi: o.psi,
                transmissions: o.transmissions,
                communication_cost: None,
                x_terminal: o.x_terminal.iter().copied().collect(),
            })
            .collect(),
    }
}

/// Files written by `simulate`.
#[derive(Debug, Clone)]
pub struct SimulateOutput {
    pub trajectory_csv: PathBuf,
    pub summary_json: PathBuf,
}

/// Simulate stream 0 of the base seed and write its trajectory. With
/// `n_runs ≥ 2` the summary also carries Monte-Carlo statistics over streams
/// `0..n_runs`.
pub fn simulate(cfg: &ExperimentConfig, out_dir: &Path) -> Result<SimulateOutput, CliError> {
    let (exp, ric) = prepare(cfg)?;
    let trigger = trigger_policy(&exp, &ric)?;
    let control = ControlPolicy::CertaintyEquivalence;
    let hash = cfg.hash();
    let imperfect = exp.sys.info_pattern() == InfoPattern::Imperfect;

    let sim = Simulator::new(&exp.sys, &exp.cost, &ric)?;
    let traj = sim.run(&sim.noise_for(exp.base_seed, 0), &trigger, &control)?;
    let csv = trajectory_csv(&traj, imperfect, &hash)?;

    let monte_carlo = if exp.n_runs >= 2 {
        let s = monte_carlo(&exp.sys, &exp.cost, &ric, &trigger, &control, exp.n_runs, exp.base_seed)?;
        Some(monte_carlo_json(s))
    } else {
        None
    };
    let summary = SummaryJson {
        config_hash: &hash,
        base_seed: exp.base_seed,
        rng_algorithm: traj.rng_algorithm,
        policy: trigger.name(),
        info_pattern: exp.sys.info_pattern().name(),
        horizon: exp.sys.horizon,
        lambda: exp.cost.lambda,
        trajectory: trajectory_json(&traj),
        monte_carlo,
    };
    let mut json = serde_json::to_vec_pretty(&summary).map_err(|e| CliError::Io(e.to_string()))?;
    json.push(b'\n');

    fs::create_dir_all(out_dir).map_err(io)?;
    let output = SimulateOutput {
        trajectory_csv: out_dir.join("trajectory.csv"),
        summary_json: out_dir.join("summary.json"),
    };
    fs::write(&output.trajectory_csv, csv).map_err(io)?;
    fs::write(&output.summary_json, json).map_err(io)?;
    Ok(output)
}

/// Parse a comma-separated `λ` list.
pub fn parse_lambdas(text: &str) -> Result<Vec<f64>, CliError> {
    let values = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| CliError::Usage(format!("bad lambda value {s:?}"))))
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err(CliError::Usage("empty lambda list".into()));
    }
    if let Some(bad) = values.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
        return Err(CliError::Usage(format!("lambda must be finite and non-negative, got {bad}")));
    }
    Ok(values)
}

/// Trade-off table of the value-of-information trigger, one row per `λ`
/// in ascending order. The trigger in the config is ignored.
pub fn sweep(cfg: &ExperimentConfig, lambdas: &[f64]) -> Result<Vec<u8>, CliError> {
    if lambdas.is_empty() {
        return Err(CliError::Usage("empty lambda list".into()));
    }
    if cfg.experiment.n_runs < 2 {
        return Err(CliError::Usage(format!("sweep needs n_runs ≥ 2, got {}", cfg.experiment.n_runs)));
    }
    let (exp, ric) = prepare(cfg)?;
    let mut sorted = lambdas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let points = lambda_sweep(&exp.sys, &exp.cost, &ric, &sorted, exp.n_runs, exp.base_seed)?;

    let list: Vec<String> = sorted.iter().map(|l| num(*l)).collect();
    let mut out = metadata_line(&cfg.hash(), exp.base_seed, &format!(" lambdas={}", list.join(";"))).into_bytes();
    let mut w = csv::Writer::from_writer(&mut out);
    let csv_err = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(["lambda", "rate_mean", "rate_stderr", "J_mean", "J_stderr", "n_runs"]).map_err(csv_err)?;
    for p in &points {
        w.write_record([
            num(p.lambda),
            num(p.rate.mean),
            num(p.rate.stderr),
            num(p.j.mean),
            num(p.j.stderr),
            p.n_runs.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io)?;
    drop(w);
    Ok(out)
}
