//! Experiment runner: configs and presets, single runs with artifacts,
//! parameter sweeps, flow classification and the self-test suite.

mod config;
mod scenarios;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{
    C2Spec, DynamicsSpec, Expectation, ExperimentConfig, FlowGridSpec, InitialSpec, LambdaSpec, ObserverSpec,
    Prepared, ProcessSource, ProcessSpec,
};
pub use scenarios::{scenario, scenario_names, ScenarioInfo, SCENARIOS};

use crate::diagnostics::{DiagnosticsInput, DiagnosticsReport};
use crate::dynamics::{predicted_spps_rate, DynamicsKind};
use crate::error::{Error, Result};
use crate::flowcore::{ergodicity_report, ErgodicityReport, FlowGrid};
use crate::graphnet::LaplacianProcess;
use crate::linalg::distance;
use crate::objectives::Optimum;
use crate::simulate::{estimate_limit, integrate, LimitEstimate, Trajectory};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "FLOWTRACKER_OUT";
pub const DEFAULT_OUT_DIR: &str = "flowtracker-out";

/// Output directory: explicit flag, then the config, then the environment.
pub fn resolve_out_dir(flag: Option<&Path>, cfg: Option<&ExperimentConfig>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = cfg.and_then(|c| c.output_dir.clone()) {
        return p;
    }
    std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSummary {
    pub lambda: Option<f64>,
    pub r_squared: Option<f64>,
    pub p_star: f64,
    pub ergodic: bool,
}

impl From<&ErgodicityReport> for FlowSummary {
    fn from(r: &ErgodicityReport) -> Self {
        Self { lambda: r.lambda, r_squared: r.r_squared, p_star: r.p_star, ergodic: r.is_weakly_exponentially_ergodic() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub system: String,
    pub config_digest: String,
    pub seed: u64,
    pub t_end: f64,
    pub final_output: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<LimitEstimate>,
    pub optimum: Optimum,
    pub consensus_error: f64,
    pub optimality_gap: f64,
    /// `max_i ||y_i(t_end) - x*||`
    pub distance_to_optimum: f64,
    pub checks: BTreeMap<String, bool>,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_window_cut: Option<f64>,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub report: DiagnosticsReport,
    pub trajectory: Trajectory,
    pub flow: Option<ErgodicityReport>,
}

/// Classifies the flow of `process` on a grid of `(s, t)` pairs.
pub fn check_flow(process: &LaplacianProcess, h: f64, grid: &FlowGridSpec) -> Result<ErgodicityReport> {
    let g = FlowGrid::uniform(process, h, grid.starts, grid.lag_step, grid.max_lag);
    ergodicity_report(process, h, &g)
}

fn needs_flow(cfg: &ExperimentConfig) -> bool {
    use crate::diagnostics::CheckKind::{HBounded, ObserverBound};
    let uses_rate = cfg.checks.iter().any(|c| matches!(c, ObserverBound | HBounded));
    (uses_rate && cfg.observer.lambda == LambdaSpec::FlowFit) || cfg.observer.c2 == Some(C2Spec::ThreeOverPStar)
}

/// Integrates one config and runs its requested diagnostics and expectations.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let started = Instant::now();
    let prepared = cfg.prepare()?;
    let Prepared { system, family, schedule, law, init, options } = &prepared;
    let process = system.process();

    let flow = if needs_flow(cfg) { Some(check_flow(process, cfg.h, &cfg.observer.grid)?) } else { None };
    let window_cut = match system.kind() {
        DynamicsKind::SaddlePoint | DynamicsKind::Spps => process.min_window_cut(1.0f64.min(process.horizon())).ok(),
        _ => None,
    };
    let lambda = match cfg.observer.lambda {
        LambdaSpec::FlowFit => flow.as_ref().and_then(|f| f.lambda).filter(|l| *l > 0.0 && *l < 1.0),
        LambdaSpec::Value(v) => Some(v),
        LambdaSpec::SppsFormula { window } => {
            let pi = process
                .common_stationary_distribution()
                .ok_or_else(|| Error::invalid("spps rate needs a common stationary distribution"))?;
            let pi_min = pi.iter().copied().fold(f64::INFINITY, f64::min);
            let gamma = process.min_window_cut(window)? / window;
            Some(predicted_spps_rate(system.gain(), pi_min, gamma, system.n())?)
        }
    };
    let c2_declared = match cfg.observer.c2 {
        None => None,
        Some(C2Spec::Value(v)) => Some(v),
        Some(C2Spec::ThreeOverPStar) => {
            let p_star = flow.as_ref().map(|f| f.p_star).unwrap_or(0.0);
            if !(p_star > 0.0) {
                return Err(Error::invalid("c2 = 3/p_star needs a flow with p_star > 0"));
            }
            Some(3.0 / p_star)
        }
    };

    let mut trajectory = integrate(system, law, init, options)?;
    trajectory.meta.seed = Some(cfg.seed);
    trajectory.meta.schedule = serde_json::to_value(schedule).ok();
    trajectory.meta.family = serde_json::to_value(&cfg.objective).ok();
    trajectory.meta.process = Some(match &cfg.process.source {
        ProcessSource::Inline(_) => "inline".to_string(),
        ProcessSource::File { path } => path.display().to_string(),
        ProcessSource::Random { model, .. } => format!("random:{}", serde_json::to_value(model).map(|v| v["model"].to_string()).unwrap_or_default()),
    });

    let input = DiagnosticsInput {
        family: Some(family),
        schedule: Some(schedule),
        c1: system.c1(),
        lambda,
        c2_declared,
        norm: cfg.observer.norm,
    };
    let mut report = DiagnosticsReport::assemble(&trajectory, &input, &cfg.checks)?;
    if matches!(system.kind(), DynamicsKind::Averaging | DynamicsKind::PushSum | DynamicsKind::SaddlePoint | DynamicsKind::Spps) {
        report.notes.push(format!("c1 = 1/n = {}", system.c1()));
    }

    let optimum = family.optimizer_oracle()?;
    let last = trajectory.last();
    let d = system.d();
    let distance_to_optimum = last.y.chunks(d).map(|yi| distance(yi, &optimum.x_star)).fold(0.0, f64::max);
    if let Some(exp) = &cfg.expect {
        let mut push = |name: &str, passed: bool, value: f64, note: String| {
            report.checks.push(crate::diagnostics::CheckResult {
                name: name.into(),
                passed,
                value,
                tolerance: exp.tolerance,
                note,
            })
        };
        if let Some(target) = &exp.final_output {
            let err = if target.len() == last.y.len() {
                target.iter().zip(&last.y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
            } else {
                f64::INFINITY
            };
            push("expect-final-output", err <= exp.tolerance, err, format!("target {target:?}"));
        }
        if exp.near_optimum {
            push("expect-near-optimum", distance_to_optimum <= exp.tolerance, distance_to_optimum, String::new());
        }
        if let Some(gap) = exp.away_from_optimum {
            push(
                "expect-away-from-optimum",
                distance_to_optimum >= gap,
                distance_to_optimum,
                format!("must stay at least {gap} from the minimizer"),
            );
        }
    }

    let checks: BTreeMap<String, bool> = report.checks.iter().map(|c| (c.name.clone(), c.passed)).collect();
    let summary = RunSummary {
        name: cfg.name.clone(),
        system: system.name().to_string(),
        config_digest: cfg.digest(),
        seed: cfg.seed,
        t_end: cfg.t_end,
        final_output: last.y.clone(),
        limit: estimate_limit(&trajectory, 0.1).ok(),
        consensus_error: *report.series.consensus_error.last().unwrap(),
        optimality_gap: family.global_objective(&last.xbar)? - optimum.f_star,
        optimum,
        distance_to_optimum,
        passed: checks.values().all(|&p| p),
        checks,
        warnings: system.warnings().to_vec(),
        flow: flow.as_ref().map(FlowSummary::from),
        min_window_cut: window_cut,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    Ok(RunOutcome { summary, report, trajectory, flow })
}

/// Writes trajectory.csv, trajectory.jsonl, report.json, summary.json and
/// per-series CSVs into `dir`.
pub fn write_artifacts(outcome: &RunOutcome, cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let file = |name: &str| -> Result<std::io::BufWriter<std::fs::File>> {
        Ok(std::io::BufWriter::new(std::fs::File::create(dir.join(name))?))
    };
    outcome.trajectory.write_csv(file("trajectory.csv")?)?;
    outcome.trajectory.write_jsonl(file("trajectory.jsonl")?)?;
    serde_json::to_writer_pretty(file("report.json")?, &outcome.report)?;
    serde_json::to_writer_pretty(file("summary.json")?, &outcome.summary)?;
    std::fs::write(dir.join("config.json"), cfg.to_json_pretty())?;
    if let Some(flow) = &outcome.flow {
        serde_json::to_writer_pretty(file("flow.json")?, flow)?;
    }
    outcome.report.write_series_csv(dir)?;
    Ok(())
}

/// Machine-readable error record.
pub fn error_json(err: &Error) -> serde_json::Value {
    let mut v = serde_json::json!({"error": {"kind": err.kind(), "message": err.to_string()}});
    match err {
        Error::NumericalFailure { t, .. } | Error::DegenerateWeights { t, .. } | Error::OutsideValidityBox { t, .. } => {
            v["error"]["t"] = serde_json::json!(t);
        }
        Error::UnknownScenario { available, .. } => {
            v["error"]["available"] = serde_json::json!(available);
        }
        _ => {}
    }
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<RunSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<serde_json::Value>,
}

/// Runs `base` once per value of the numeric field at `path`, in parallel.
pub fn sweep(base: &ExperimentConfig, path: &str, values: &[f64]) -> Result<Vec<SweepRow>> {
    // Validate the path even when there is nothing to run.
    base.with_param(path, 1.0)?;
    let configs = values.iter().map(|&v| Ok((v, base.with_param(path, v)?))).collect::<Result<Vec<_>>>()?;
    Ok(configs
        .par_iter()
        .map(|(value, cfg)| match run(cfg) {
            Ok(out) => SweepRow { value: *value, summary: Some(out.summary), error: None },
            Err(e) => SweepRow { value: *value, summary: None, error: Some(error_json(&e)) },
        })
        .collect())
}

pub fn write_sweep_csv(rows: &[SweepRow], mut w: impl Write) -> std::io::Result<()> {
    let width = rows.iter().filter_map(|r| r.summary.as_ref()).map(|s| s.final_output.len()).max().unwrap_or(0);
    let mut header = vec!["value".to_string(), "passed".into(), "consensus_error".into(), "optimality_gap".into()];
    header.extend((1..=width).map(|k| format!("y_{k}")));
    header.extend(["warnings".to_string(), "error".to_string()]);
    writeln!(w, "{}", header.join(","))?;
    for r in rows {
        let mut cells = vec![format!("{:.16e}", r.value)];
        match &r.summary {
            Some(s) => {
                cells.push(s.passed.to_string());
                cells.push(format!("{:.16e}", s.consensus_error));
                cells.push(format!("{:.16e}", s.optimality_gap));
                cells.extend((0..width).map(|k| s.final_output.get(k).map(|v| format!("{v:.16e}")).unwrap_or_default()));
                cells.push(s.warnings.len().to_string());
                cells.push(String::new());
            }
            None => {
                cells.extend(["false".to_string(), String::new(), String::new()]);
                cells.extend((0..width).map(|_| String::new()));
                cells.push("0".into());
                let kind = r.error.as_ref().and_then(|e| e["error"]["kind"].as_str()).unwrap_or("error");
                cells.push(kind.to_string());
            }
        }
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelftestLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Runs every preset plus a few standalone invariants.
pub fn selftest() -> Vec<SelftestLine> {
    let mut lines: Vec<SelftestLine> = SCENARIOS
        .par_iter()
        .map(|info| {
            let cfg = scenario(info.name).expect("preset exists");
            match run(&cfg) {
                Ok(out) => {
                    let failed: Vec<&String> = out.summary.checks.iter().filter(|(_, p)| !**p).map(|(k, _)| k).collect();
                    SelftestLine {
                        name: format!("scenario {}", info.name),
                        passed: out.summary.passed,
                        detail: if failed.is_empty() {
                            format!("{} checks passed", out.summary.checks.len())
                        } else {
                            format!("failed: {failed:?}")
                        },
                    }
                }
                Err(e) => SelftestLine { name: format!("scenario {}", info.name), passed: false, detail: e.to_string() },
            }
        })
        .collect();

    let mut rng_state = 0x2545_f491_4f6c_dd1du64;
    let mut next = || {
        rng_state ^= rng_state << 13;
        rng_state ^= rng_state >> 7;
        rng_state ^= rng_state << 17;
        (rng_state >> 11) as f64 / (1u64 << 53) as f64 * 20.0 - 10.0
    };
    let norm_ok = (0..100).all(|k| {
        let (r, c) = (1 + k % 5, 1 + k % 3);
        let x = nalgebra::DMatrix::from_fn(r, c, |_, _| next());
        crate::diagnostics::matrix_norm_bound_check(&x).2
    });
    lines.push(SelftestLine { name: "matrix norm bound".into(), passed: norm_ok, detail: "100 random blocks".into() });

    let l = crate::graphnet::make_laplacian_from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).expect("static");
    let flow = LaplacianProcess::constant(l, 30.0)
        .and_then(|p| check_flow(&p, 1e-3, &FlowGridSpec { starts: 4, lag_step: 1.0, max_lag: 10.0 }));
    let (passed, detail) = match flow {
        Ok(r) => {
            let lam = r.lambda.unwrap_or(f64::NAN);
            ((lam - (-2f64).exp()).abs() < 1e-3 && r.p_star == 1.0, format!("lambda = {lam:.6}"))
        }
        Err(e) => (false, e.to_string()),
    };
    lines.push(SelftestLine { name: "pair flow rate".into(), passed, detail });
    lines
}
