//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::{CheckKind, EnvelopeNorm};
use crate::dynamics::{DynamicsKind, FlowTrackerSystem, GradientFeedback, SystemState};
use crate::error::{Error, Result};
use crate::graphnet::{is_multiple, random_process, LaplacianProcess, ProcessFile, RandomModel};
use crate::objectives::{FamilySpec, ObjectiveFamily};
use crate::schedules::StepSchedule;
use crate::simulate::{IntegrateOptions, DEFAULT_RECORD_INTERVAL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum ProcessSource {
    Inline(ProcessFile),
    /// Path to a process JSON file, relative to the config file.
    File { path: PathBuf },
    /// Seeded random process on `[0, t_end]`; the seed defaults to the run seed.
    Random {
        n: usize,
        #[serde(flatten)]
        model: RandomModel,
        dwell: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessSpec {
    #[serde(flatten)]
    pub source: ProcessSource,
    /// Rescale weight-balanced pieces to share this stationary distribution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stationary: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSpec {
    pub name: DynamicsKind,
    /// Gain of the saddle-point variants.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialSpec {
    /// `x` row-major `n x d`; `aux` defaults to unit weights and zero duals.
    Explicit {
        x: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        aux: Option<Vec<f64>>,
    },
    /// `x` uniform in `[-spread, spread]`, drawn from the run seed.
    Random { spread: f64 },
}

/// Where the observer check takes its contraction rate from.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaSpec {
    /// Fit on the run's own process (see [`FlowGridSpec`]).
    #[default]
    FlowFit,
    /// `exp(-2 a pi_min gamma / n^2)` with `gamma` the per-unit-time
    /// integrated min-cut over windows of the given length.
    SppsFormula { window: f64 },
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum C2Spec {
    /// `3 / p_star` from the flow classification.
    ThreeOverPStar,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowGridSpec {
    pub starts: usize,
    pub lag_step: f64,
    pub max_lag: f64,
}

impl Default for FlowGridSpec {
    fn default() -> Self {
        Self { starts: 16, lag_step: 1.0, max_lag: 20.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverSpec {
    #[serde(default)]
    pub lambda: LambdaSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<C2Spec>,
    #[serde(default)]
    pub norm: EnvelopeNorm,
    #[serde(default)]
    pub grid: FlowGridSpec,
}

/// Outcome a preset is expected to reproduce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    /// Expected final `y`, row-major.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_output: Option<Vec<f64>>,
    /// Every `y_i(t_end)` within `tolerance` of the oracle minimizer.
    #[serde(default)]
    pub near_optimum: bool,
    /// Some `y_i(t_end)` at least this far from the oracle minimizer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub away_from_optimum: Option<f64>,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub process: ProcessSpec,
    pub dynamics: DynamicsSpec,
    pub objective: FamilySpec,
    pub schedule: StepSchedule,
    pub initial: InitialSpec,
    pub t_end: f64,
    pub h: f64,
    #[serde(default = "default_record")]
    pub record_every: f64,
    #[serde(default)]
    pub full_resolution: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<CheckKind>,
    #[serde(default)]
    pub observer: ObserverSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<Expectation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn default_record() -> f64 {
    DEFAULT_RECORD_INTERVAL
}

/// Everything needed to integrate one run.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub system: FlowTrackerSystem,
    pub family: ObjectiveFamily,
    pub schedule: StepSchedule,
    pub law: GradientFeedback,
    pub init: SystemState,
    pub options: IntegrateOptions,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))
    }

    /// Loads a config file; relative process paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_json(&text)?;
        if let ProcessSource::File { path: p } = &mut cfg.process.source {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical (key-sorted) JSON form, ignoring the output directory.
    pub fn digest(&self) -> String {
        let mut cfg = self.clone();
        cfg.output_dir = None;
        let value = serde_json::to_value(&cfg).expect("config serializes");
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }

    pub fn record_interval(&self) -> f64 {
        if self.full_resolution {
            self.h
        } else {
            self.record_every
        }
    }

    pub fn build_process(&self) -> Result<LaplacianProcess> {
        if !(self.h > 0.0 && self.t_end > 0.0) {
            return Err(Error::invalid("t_end and h must be positive"));
        }
        let process = match &self.process.source {
            ProcessSource::Inline(file) => LaplacianProcess::try_from(file.clone())?,
            ProcessSource::File { path } => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::invalid(format!("process file {}: {e}", path.display())))?;
                serde_json::from_str::<LaplacianProcess>(&text)
                    .map_err(|e| Error::invalid(format!("process file {}: {e}", path.display())))?
            }
            ProcessSource::Random { n, model, dwell, seed } => {
                random_process(*n, *model, *dwell, self.t_end, seed.unwrap_or(self.seed), self.h)?
            }
        };
        let process = match &self.process.stationary {
            Some(pi) => process.with_stationary_distribution(pi)?,
            None => process,
        };
        process.check_aligned(self.h)?;
        if self.t_end > process.horizon() * (1.0 + 1e-12) {
            return Err(Error::invalid(format!(
                "t_end {} exceeds the process horizon {}",
                self.t_end,
                process.horizon()
            )));
        }
        Ok(process)
    }

    /// Validates the config and builds system, law and initial state.
    pub fn prepare(&self) -> Result<Prepared> {
        let process = self.build_process()?;
        let family = ObjectiveFamily::from_spec(&self.objective)?;
        if family.n() != process.n() {
            return Err(Error::invalid(format!(
                "objective has {} agents, process has {}",
                family.n(),
                process.n()
            )));
        }
        let system = FlowTrackerSystem::new(self.dynamics.name, process, family.d(), self.dynamics.a)?;
        let law = GradientFeedback::new(family.clone(), self.schedule.clone())?;
        let record = self.record_interval();
        if !is_multiple(record, self.h) || record < self.h {
            return Err(Error::invalid(format!("record interval {record} is not a multiple of h = {}", self.h)));
        }
        if !is_multiple(self.t_end, self.h) {
            return Err(Error::invalid(format!("t_end {} is not a multiple of h = {}", self.t_end, self.h)));
        }
        let nd = system.n() * system.d();
        let init = match &self.initial {
            InitialSpec::Explicit { x, aux } => system.initial_state(x, aux.as_deref())?,
            InitialSpec::Random { spread } => {
                if !(*spread >= 0.0) {
                    return Err(Error::invalid("initial spread must be nonnegative"));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_1417);
                let x: Vec<f64> = (0..nd).map(|_| rng.gen_range(-spread..=*spread)).collect();
                system.initial_state(&x, None)?
            }
        };
        let options = IntegrateOptions { t_end: self.t_end, h: self.h, record_every: record };
        Ok(Prepared { system, family, schedule: self.schedule.clone(), law, init, options })
    }

    /// Replaces the numeric field at a dotted path (e.g. `schedule.a0`).
    /// An unset optional number such as `dynamics.a` may be filled in.
    pub fn with_param(&self, path: &str, value: f64) -> Result<Self> {
        let missing = || Error::invalid(format!("config has no field '{path}'"));
        let mut json = serde_json::to_value(self)?;
        let keys: Vec<&str> = path.split('.').collect();
        let (last, parents) = keys.split_last().ok_or_else(missing)?;
        let mut slot = &mut json;
        for key in parents {
            slot = step_into(slot, key).ok_or_else(missing)?;
        }
        let inserted = match slot {
            serde_json::Value::Object(map) if !map.contains_key(*last) => {
                map.insert(last.to_string(), serde_json::Value::Null);
                true
            }
            _ => false,
        };
        let slot = step_into(slot, last).ok_or_else(missing)?;
        if !inserted && !slot.is_number() {
            return Err(Error::invalid(format!("config field '{path}' is not numeric")));
        }
        *slot = if value.fract() == 0.0 && slot.is_u64() && value >= 0.0 {
            serde_json::Value::from(value as u64)
        } else {
            serde_json::Value::from(value)
        };
        let cfg: Self =
            serde_json::from_value(json).map_err(|e| Error::invalid(format!("config after setting '{path}': {e}")))?;
        // Fields unknown to a lenient struct would deserialize and vanish.
        let mut check = serde_json::to_value(&cfg)?;
        let mut probe = Some(&mut check);
        for key in &keys {
            probe = probe.and_then(|v| step_into(v, key));
        }
        match probe.and_then(|v| v.as_f64()) {
            Some(_) => Ok(cfg),
            None => Err(missing()),
        }
    }
}

fn step_into<'a>(v: &'a mut serde_json::Value, key: &str) -> Option<&'a mut serde_json::Value> {
    match v {
        serde_json::Value::Object(map) => map.get_mut(key),
        serde_json::Value::Array(items) => key.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
        _ => None,
    }
}
