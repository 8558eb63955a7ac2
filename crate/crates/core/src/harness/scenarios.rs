//! Preset experiments, each carrying its expected outcome.

use crate::diagnostics::{CheckKind, EnvelopeNorm};
use crate::dynamics::DynamicsKind;
use crate::error::{Error, Result};
use crate::graphnet::{PieceFile, ProcessFile, RandomModel};
use crate::objectives::{FamilyKind, FamilySpec};
use crate::schedules::StepSchedule;

use super::config::{
    C2Spec, DynamicsSpec, Expectation, ExperimentConfig, FlowGridSpec, InitialSpec, LambdaSpec, ObserverSpec, ProcessSource,
    ProcessSpec,
};

pub struct ScenarioInfo {
    pub name: &'static str,
    pub summary: &'static str,
}

pub const SCENARIOS: [ScenarioInfo; 6] = [
    ScenarioInfo {
        name: "counterexample",
        summary: "two agents, constant step 0.5: outputs settle at (0.2, -0.2), not at the minimizer 0",
    },
    ScenarioInfo {
        name: "counterexample-diminishing",
        summary: "same pair with alpha(t) = 1/(1+t): both outputs reach the minimizer",
    },
    ScenarioInfo {
        name: "averaging-ergodic",
        summary: "averaging tracker on a switching symmetric complete graph",
    },
    ScenarioInfo {
        name: "pushsum-directed",
        summary: "push-sum tracker on a rotating directed ring (not weight-balanced)",
    },
    ScenarioInfo {
        name: "saddlepoint-mincut",
        summary: "saddle-point tracker (a = 5) on a weight-balanced process with positive windowed min-cut",
    },
    ScenarioInfo {
        name: "spps-stationary",
        summary: "saddle-point/push-sum tracker (a = 5) on a process with a common non-uniform stationary distribution",
    },
];

pub fn scenario_names() -> Vec<String> {
    SCENARIOS.iter().map(|s| s.name.to_string()).collect()
}

fn pair_process(horizon: f64) -> ProcessSpec {
    ProcessSpec {
        source: ProcessSource::Inline(ProcessFile {
            n: 2,
            horizon,
            pieces: vec![PieceFile { t: 0.0, weights: vec![vec![0.0, 1.0], vec![1.0, 0.0]] }],
        }),
        stationary: None,
    }
}

fn random_process(n: usize, model: RandomModel) -> ProcessSpec {
    ProcessSpec { source: ProcessSource::Random { n, model, dwell: 0.5, seed: None }, stationary: None }
}

fn huberized(n: usize, d: usize, seed: u64) -> FamilySpec {
    FamilySpec {
        kind: FamilyKind::HuberizedQuadratic,
        n: Some(n),
        d: Some(d),
        params: serde_json::json!({"random": {"seed": seed, "spread": 1.0}, "curvature": 1.0, "radius": 1.5}),
    }
}

fn base(name: &str, process: ProcessSpec, dynamics: DynamicsKind, objective: FamilySpec, t_end: f64) -> ExperimentConfig {
    ExperimentConfig {
        name: Some(name.to_string()),
        process,
        dynamics: DynamicsSpec { name: dynamics, a: None },
        objective,
        schedule: StepSchedule::PowerLaw { a0: 1.0, p: 1.0 },
        initial: InitialSpec::Random { spread: 1.0 },
        t_end,
        h: 1e-3,
        record_every: 0.1,
        full_resolution: false,
        seed: 11,
        checks: vec![],
        observer: ObserverSpec::default(),
        expect: None,
        output_dir: None,
    }
}

fn near_optimum(tolerance: f64) -> Option<Expectation> {
    Some(Expectation { final_output: None, near_optimum: true, away_from_optimum: None, tolerance })
}

pub fn scenario(name: &str) -> Result<ExperimentConfig> {
    let paper_pair = FamilySpec { kind: FamilyKind::TwoAgentPaperPair, n: None, d: None, params: serde_json::Value::Null };
    let cfg = match name {
        "counterexample" => {
            let mut c = base(name, pair_process(50.0), DynamicsKind::Averaging, paper_pair, 50.0);
            c.schedule = StepSchedule::Constant { a0: 0.5 };
            c.initial = InitialSpec::Explicit { x: vec![0.0, 0.0], aux: None };
            c.expect = Some(Expectation {
                final_output: Some(vec![0.2, -0.2]),
                near_optimum: false,
                away_from_optimum: Some(0.1),
                tolerance: 1e-4,
            });
            c
        }
        "counterexample-diminishing" => {
            let mut c = base(name, pair_process(2000.0), DynamicsKind::Averaging, paper_pair, 2000.0);
            c.initial = InitialSpec::Explicit { x: vec![0.0, 0.0], aux: None };
            c.checks = vec![CheckKind::Consensus, CheckKind::GapIntegral, CheckKind::VDominatedByH];
            c.expect = near_optimum(0.05);
            c
        }
        "averaging-ergodic" => {
            let mut c = base(name, random_process(5, RandomModel::SwitchingComplete), DynamicsKind::Averaging, huberized(5, 2, 3), 200.0);
            c.checks = vec![CheckKind::Consensus, CheckKind::ObserverBound, CheckKind::VDominatedByH, CheckKind::HBounded];
            // This process mixes within a few time units; longer lags only sample rounding noise.
            c.observer.grid = FlowGridSpec { starts: 16, lag_step: 0.5, max_lag: 6.0 };
            c.expect = near_optimum(0.02);
            c
        }
        "pushsum-directed" => {
            let mut c = base(name, random_process(5, RandomModel::DirectedRingRotate), DynamicsKind::PushSum, huberized(5, 2, 11), 1000.0);
            c.checks = vec![CheckKind::Consensus, CheckKind::ObserverBound, CheckKind::WeightConservation];
            c.observer = ObserverSpec { c2: Some(C2Spec::ThreeOverPStar), ..ObserverSpec::default() };
            c.expect = near_optimum(1e-2);
            c
        }
        "saddlepoint-mincut" => {
            let mut c = base(name, random_process(5, RandomModel::SwitchingComplete), DynamicsKind::SaddlePoint, huberized(5, 2, 5), 200.0);
            c.dynamics.a = Some(5.0);
            c.checks = vec![CheckKind::Consensus, CheckKind::VDominatedByH];
            c.expect = near_optimum(0.02);
            c
        }
        "spps-stationary" => {
            let mut process = random_process(5, RandomModel::SwitchingComplete);
            process.stationary = Some(vec![0.3, 0.25, 0.2, 0.15, 0.1]);
            let mut c = base(name, process, DynamicsKind::Spps, huberized(5, 1, 7), 200.0);
            c.dynamics.a = Some(5.0);
            c.checks = vec![CheckKind::Consensus, CheckKind::ObserverBound, CheckKind::WeightConservation];
            c.observer = ObserverSpec {
                lambda: LambdaSpec::SppsFormula { window: 1.0 },
                c2: None,
                norm: EnvelopeNorm::MaxRow,
                grid: Default::default(),
            };
            c.expect = near_optimum(0.02);
            c
        }
        _ => return Err(Error::UnknownScenario { name: name.to_string(), available: scenario_names() }),
    };
    Ok(cfg)
}
