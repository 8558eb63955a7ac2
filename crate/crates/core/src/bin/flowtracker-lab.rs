//! `flowtracker-lab`: run experiments, presets, sweeps and flow checks.
//!
//! Exit codes: 0 when every requested check passes, 1 when a check fails,
//! 2 on configuration or numerical errors (reported as JSON on stdout).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use flowtracker::graphnet::LaplacianProcess;
use flowtracker::harness::{self, ExperimentConfig, FlowGridSpec};
use flowtracker::schedules::StepSchedule;
use flowtracker::{Error, Result};

#[derive(Parser)]
#[command(name = "flowtracker-lab", version, about = "Distributed flow-tracker experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one experiment and write its artifacts.
    Run {
        #[command(flatten)]
        source: ConfigSource,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Inspect the built-in presets.
    Scenario {
        #[command(subcommand)]
        action: ScenarioAction,
    },
    /// Run one experiment per value of a numeric config field.
    Sweep {
        #[command(flatten)]
        source: ConfigSource,
        #[command(flatten)]
        overrides: Overrides,
        /// Dotted path of the field, e.g. `schedule.a0`.
        #[arg(long)]
        param: String,
        /// Comma-separated values; may be empty.
        #[arg(long, default_value = "")]
        values: String,
    },
    /// Classify the flow of a process; exit 0 iff weakly exponentially ergodic.
    CheckFlow {
        /// Process JSON file (`n`, `pieces`, `horizon`).
        #[arg(long, conflicts_with_all = ["config", "scenario"])]
        process: Option<PathBuf>,
        #[command(flatten)]
        source: ConfigSource,
        #[arg(long, default_value_t = 1e-3)]
        h: f64,
        #[arg(long)]
        starts: Option<usize>,
        #[arg(long)]
        lag_step: Option<f64>,
        #[arg(long)]
        max_lag: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a step-size schedule; exit 0 iff it is admissible.
    CheckSchedule {
        /// Schedule as inline JSON, e.g. `{"kind":"power-law","a0":1,"p":1}`.
        #[arg(long, conflicts_with_all = ["config", "scenario"])]
        schedule: Option<String>,
        #[command(flatten)]
        source: ConfigSource,
    },
    /// Run every preset and the built-in invariant checks.
    Selftest,
}

#[derive(Subcommand)]
enum ScenarioAction {
    List,
    /// Print a preset's config as JSON.
    Show { name: String },
}

#[derive(Args)]
struct ConfigSource {
    #[arg(long, conflicts_with = "scenario")]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Record every integration step.
    #[arg(long)]
    full_resolution: bool,
}

impl ConfigSource {
    fn load(&self) -> Result<Option<ExperimentConfig>> {
        match (&self.config, &self.scenario) {
            (Some(path), _) => ExperimentConfig::load(path).map(Some),
            (None, Some(name)) => harness::scenario(name).map(Some),
            (None, None) => Ok(None),
        }
    }

    fn require(&self) -> Result<ExperimentConfig> {
        self.load()?.ok_or_else(|| Error::InvalidInput("pass --config PATH or --scenario NAME".into()))
    }
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if self.full_resolution {
            cfg.full_resolution = true;
        }
    }
}

fn print_json(v: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(v)?)?;
    Ok(())
}

fn verdict(passed: bool) -> ExitCode {
    if passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn run_cmd(source: &ConfigSource, overrides: &Overrides) -> Result<ExitCode> {
    let mut cfg = source.require()?;
    overrides.apply(&mut cfg);
    let out = harness::resolve_out_dir(overrides.out.as_deref(), Some(&cfg));
    match harness::run(&cfg) {
        Ok(outcome) => {
            harness::write_artifacts(&outcome, &cfg, &out)?;
            print_json(&outcome.summary);
            Ok(verdict(outcome.summary.passed))
        }
        Err(e) => {
            // Best effort: the error itself is what gets reported.
            let _ = write_json(&out.join("error.json"), &harness::error_json(&e));
            Err(e)
        }
    }
}

fn parse_values(list: &str) -> Result<Vec<f64>> {
    list.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse().map_err(|_| Error::InvalidInput(format!("not a number: '{v}'"))))
        .collect()
}

fn sweep_cmd(source: &ConfigSource, overrides: &Overrides, param: &str, values: &str) -> Result<ExitCode> {
    let values = parse_values(values)?;
    let mut cfg = source.require()?;
    overrides.apply(&mut cfg);
    let out = harness::resolve_out_dir(overrides.out.as_deref(), Some(&cfg));
    let rows = harness::sweep(&cfg, param, &values)?;
    std::fs::create_dir_all(&out)?;
    harness::write_sweep_csv(&rows, std::io::BufWriter::new(std::fs::File::create(out.join("sweep.csv"))?))?;
    write_json(&out.join("sweep.json"), &rows)?;
    print_json(&rows);
    Ok(verdict(rows.iter().all(|r| r.summary.as_ref().is_some_and(|s| s.passed))))
}

#[allow(clippy::too_many_arguments)]
fn check_flow_cmd(
    process: Option<&Path>,
    source: &ConfigSource,
    h: f64,
    starts: Option<usize>,
    lag_step: Option<f64>,
    max_lag: Option<f64>,
    out: Option<&Path>,
) -> Result<ExitCode> {
    let cfg = source.load()?;
    let (proc_, mut grid, h) = match (process, &cfg) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)?;
            let p: LaplacianProcess = serde_json::from_str(&text)
                .map_err(|e| Error::InvalidInput(format!("process file {}: {e}", path.display())))?;
            (p, FlowGridSpec::default(), h)
        }
        (None, Some(c)) => (c.build_process()?, c.observer.grid, c.h),
        (None, None) => return Err(Error::InvalidInput("pass --process FILE, --config PATH or --scenario NAME".into())),
    };
    grid.starts = starts.unwrap_or(grid.starts);
    grid.lag_step = lag_step.unwrap_or(grid.lag_step);
    grid.max_lag = max_lag.unwrap_or(grid.max_lag);
    let report = harness::check_flow(&proc_, h, &grid)?;
    let out = harness::resolve_out_dir(out, cfg.as_ref());
    write_json(&out.join("flow.json"), &report)?;
    report.write_csv(std::io::BufWriter::new(std::fs::File::create(out.join("flow_samples.csv"))?))?;
    let mut v = serde_json::to_value(harness::FlowSummary::from(&report))?;
    v["fit_note"] = serde_json::json!(report.fit_note);
    v["weight_balanced"] = serde_json::json!(report.weight_balanced);
    print_json(&v);
    Ok(verdict(report.is_weakly_exponentially_ergodic()))
}

fn check_schedule_cmd(schedule: Option<&str>, source: &ConfigSource) -> Result<ExitCode> {
    let sched = match schedule {
        Some(text) => {
            let s: StepSchedule =
                serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("schedule: {e}")))?;
            s.validate()?;
            s
        }
        None => source.require()?.schedule,
    };
    let report = sched.check_assumption2();
    print_json(&report);
    Ok(verdict(report.valid))
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { source, overrides } => run_cmd(&source, &overrides),
        Command::Scenario { action: ScenarioAction::List } => {
            for info in &harness::SCENARIOS {
                println!("{:<28} {}", info.name, info.summary);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Scenario { action: ScenarioAction::Show { name } } => {
            println!("{}", harness::scenario(&name)?.to_json_pretty());
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { source, overrides, param, values } => sweep_cmd(&source, &overrides, &param, &values),
        Command::CheckFlow { process, source, h, starts, lag_step, max_lag, out } => {
            check_flow_cmd(process.as_deref(), &source, h, starts, lag_step, max_lag, out.as_deref())
        }
        Command::CheckSchedule { schedule, source } => check_schedule_cmd(schedule.as_deref(), &source),
        Command::Selftest => {
            let lines = harness::selftest();
            for l in &lines {
                println!("{} {:<32} {}", if l.passed { "PASS" } else { "FAIL" }, l.name, l.detail);
            }
            Ok(verdict(lines.iter().all(|l| l.passed)))
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            println!("{}", serde_json::to_string(&harness::error_json(&e)).expect("serializable"));
            ExitCode::from(2)
        }
    }
}
