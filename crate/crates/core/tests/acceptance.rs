//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use flowtracker::diagnostics::{observer_bound_fit, CheckKind, EnvelopeNorm, GAP_CAUCHY_TOL};
use flowtracker::dynamics::{DynamicsKind, FlowTrackerSystem, GradientFeedback, ZeroInput};
use flowtracker::graphnet::{make_laplacian_from_rows, random_process, LaplacianProcess, RandomModel};
use flowtracker::harness::{
    self, scenario, DynamicsSpec, ExperimentConfig, FlowGridSpec, ObserverSpec, ProcessSource, ProcessSpec, RunOutcome,
};
use flowtracker::objectives::{FamilyKind, FamilySpec, LocalObjective, ObjectiveFamily};
use flowtracker::schedules::{lemma_aux_check, SampledFunction, StepSchedule};
use flowtracker::simulate::{closed_form_two_agent, integrate, IntegrateOptions, Trajectory};

type Verdict = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn pair_laplacian_process(horizon: f64) -> LaplacianProcess {
    let l = make_laplacian_from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
    LaplacianProcess::constant(l, horizon).unwrap()
}

fn pair_run(alpha: f64, x0: [f64; 2], t_end: f64, h: f64) -> Trajectory {
    let sys = FlowTrackerSystem::averaging(pair_laplacian_process(t_end), 1).unwrap();
    let law = GradientFeedback::new(ObjectiveFamily::paper_pair(), StepSchedule::constant(alpha).unwrap()).unwrap();
    let init = sys.initial_state(&x0, None).unwrap();
    integrate(&sys, &law, &init, &IntegrateOptions::new(t_end, h).recording(0.1)).unwrap()
}

fn criterion_1() -> Verdict {
    let cfg = scenario("counterexample").map_err(|e| e.to_string())?;
    let out = harness::run(&cfg).map_err(|e| e.to_string())?;
    let y = &out.summary.final_output;
    let err = (y[0] - 0.2).abs().max((y[1] + 0.2).abs());
    ensure(err < 1e-4, || format!("final output {y:?} is {err:e} from (0.2, -0.2)"))?;

    let mut base = cfg.clone();
    base.expect = None;
    let alphas = [0.25, 0.5, 1.0];
    let rows = harness::sweep(&base, "schedule.a0", &alphas).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for row in &rows {
        let s = row.summary.as_ref().ok_or_else(|| format!("sweep point {} failed", row.value))?;
        let limit = row.value / (2.0 + row.value);
        worst = worst.max((s.final_output[0] - limit).abs()).max((s.final_output[1] + limit).abs());
    }
    ensure(rows.len() == alphas.len() && worst < 1e-4, || format!("sweep deviates from a/(2+a) by {worst:e}"))?;
    Ok(format!("final error {err:.1e}, sweep error {worst:.1e}"))
}

fn criterion_2() -> Verdict {
    let x0 = [0.9, -0.4];
    let alpha = 0.5;
    let traj = pair_run(alpha, x0, 10.0, 1e-3);
    let max_err = |traj: &Trajectory| {
        traj.samples
            .iter()
            .skip(1)
            .map(|s| {
                let exact = closed_form_two_agent(alpha, x0, s.t).unwrap();
                (s.state[0] - exact[0]).abs().max((s.state[1] - exact[1]).abs())
            })
            .fold(0.0, f64::max)
    };
    let samples = traj.len() - 1;
    ensure(samples >= 100, || format!("only {samples} sample times"))?;
    let err = max_err(&traj);
    ensure(err < 1e-8, || format!("max error {err:e} at h = 1e-3"))?;

    // Oracle for the closed form itself: eigen-decomposition of -(L + aI).
    let t = 1.7;
    let mean = alpha / (2.0 + alpha);
    let (s0, d0) = ((x0[0] + x0[1]) / 2.0, (x0[0] - x0[1]) / 2.0 - mean);
    let s_t = s0 * (-alpha * t).exp();
    let d_t = d0 * (-(2.0 + alpha) * t).exp() + mean;
    let exact = closed_form_two_agent(alpha, x0, t).unwrap();
    ensure((exact[0] - (s_t + d_t)).abs() < 1e-14 && (exact[1] - (s_t - d_t)).abs() < 1e-14, || {
        "closed form disagrees with the modal solution".into()
    })?;

    let coarse = max_err(&pair_run(alpha, x0, 10.0, 0.1));
    let fine = max_err(&pair_run(alpha, x0, 10.0, 0.05));
    let ratio = coarse / fine;
    ensure((8.0..=32.0).contains(&ratio), || format!("step-halving ratio {ratio:.2}"))?;
    Ok(format!("max error {err:.1e} over {samples} times, halving ratio {ratio:.2}"))
}

fn criterion_3() -> Verdict {
    let cfg = scenario("counterexample-diminishing").map_err(|e| e.to_string())?;
    ensure(cfg.t_end == 2000.0, || "horizon is not 2000".into())?;
    let out = harness::run(&cfg).map_err(|e| e.to_string())?;
    let y = &out.summary.final_output;
    ensure(y.iter().all(|v| v.abs() < 0.05), || format!("final outputs {y:?}"))?;
    let t = &out.report.series.t;
    let gap = &out.report.series.optimality_gap;
    let t_end = *t.last().unwrap();
    let tail: Vec<f64> = t.iter().zip(gap).filter(|(tk, _)| **tk >= 0.9 * t_end).map(|(_, g)| *g).collect();
    let hi = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
    ensure(hi - lo < GAP_CAUCHY_TOL, || format!("gap varies by {:e} over the final tenth", hi - lo))?;
    let rise = tail.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    ensure(rise <= 1e-12, || format!("gap increases by {rise:e} late in the run"))?;
    Ok(format!("|y| <= {:.2e}, tail gap spread {:.1e}", y.iter().map(|v| v.abs()).fold(0.0, f64::max), hi - lo))
}

fn pushsum_outcome() -> &'static Result<RunOutcome, String> {
    static OUT: OnceLock<Result<RunOutcome, String>> = OnceLock::new();
    OUT.get_or_init(|| harness::run(&scenario("pushsum-directed").unwrap()).map_err(|e| e.to_string()))
}

/// Gradient of a huberized quadratic sum, written out independently of the library.
fn huber_gradient(agents: &[LocalObjective], x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    for a in agents {
        let LocalObjective::Huber { center, curvature, radius } = a else { panic!("not huberized") };
        let r: Vec<f64> = x.iter().zip(center).map(|(xi, ci)| xi - ci).collect();
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = if norm <= *radius { *curvature } else { curvature * radius / norm };
        g.iter_mut().zip(&r).for_each(|(gi, ri)| *gi += scale * ri);
    }
    g
}

fn criterion_4() -> Verdict {
    let cfg = scenario("pushsum-directed").map_err(|e| e.to_string())?;
    let ProcessSource::Random { n, model, dwell, .. } = &cfg.process.source else {
        return Err("preset does not use a random process".into());
    };
    ensure(*n == 5 && *model == RandomModel::DirectedRingRotate && *dwell == 0.5, || "unexpected process".into())?;
    let process = cfg.build_process().map_err(|e| e.to_string())?;
    ensure(!process.is_weight_balanced(), || "process is weight-balanced".into())?;
    let flow = harness::check_flow(&process, cfg.h, &cfg.observer.grid).map_err(|e| e.to_string())?;
    ensure(flow.is_weakly_exponentially_ergodic() && flow.p_star > 0.0, || {
        format!("check_flow fails: lambda {:?}, R2 {:?}, p* {}", flow.lambda, flow.r_squared, flow.p_star)
    })?;

    let family = ObjectiveFamily::from_spec(&cfg.objective).map_err(|e| e.to_string())?;
    ensure(family.kind() == FamilyKind::HuberizedQuadratic, || "family is not huberized".into())?;
    let opt = family.optimizer_oracle().map_err(|e| e.to_string())?;
    let g = huber_gradient(family.agents(), &opt.x_star);
    let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    ensure(gnorm < 1e-10, || format!("oracle gradient norm {gnorm:e}"))?;

    let out = pushsum_outcome().as_ref().map_err(|e| e.clone())?;
    let dist = out.summary.distance_to_optimum;
    ensure(out.summary.t_end == 1000.0 && dist < 1e-2, || format!("outputs are {dist:e} from x*"))?;
    Ok(format!(
        "lambda {:.3}, R2 {:.4}, p* {:.3}, |grad F(x*)| {gnorm:.1e}, max |y_i - x*| {dist:.1e}",
        flow.lambda.unwrap(),
        flow.r_squared.unwrap(),
        flow.p_star
    ))
}

fn criterion_5() -> Verdict {
    let out = pushsum_outcome().as_ref().map_err(|e| e.clone())?;
    let flow = out.flow.as_ref().ok_or("no flow report")?;
    let lambda = flow.lambda.ok_or("no fitted rate")?;
    let c2 = 3.0 / flow.p_star;
    let fit = observer_bound_fit(&out.trajectory, lambda, Some(c2), EnvelopeNorm::MaxRow).map_err(|e| e.to_string())?;
    ensure(fit.violations == Some(0), || format!("{:?} violations with c2 = {c2:.3}", fit.violations))?;

    let t_end = 5.0;
    let sys = FlowTrackerSystem::averaging(pair_laplacian_process(t_end), 1).map_err(|e| e.to_string())?;
    let init = sys.initial_state(&[1.0, -1.0], None).map_err(|e| e.to_string())?;
    let free = integrate(&sys, &ZeroInput, &init, &IntegrateOptions::new(t_end, 1e-3).recording(0.01))
        .map_err(|e| e.to_string())?;
    let decay = observer_bound_fit(&free, (-2f64).exp(), None, EnvelopeNorm::MaxRow).map_err(|e| e.to_string())?;
    ensure((0.9..=1.1).contains(&decay.c2_min), || format!("free-decay c2_min {}", decay.c2_min))?;
    Ok(format!("0 violations (c2 = {c2:.3}, c2_min {:.3}); free-decay c2_min {:.4}", fit.c2_min, decay.c2_min))
}

fn random_scenario(seed: u64) -> ExperimentConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kind = [DynamicsKind::Averaging, DynamicsKind::PushSum, DynamicsKind::SaddlePoint, DynamicsKind::Spps]
        [seed as usize % 4];
    let n = rng.gen_range(3..=6);
    let d = if kind == DynamicsKind::Spps { 1 } else { rng.gen_range(1..=2) };
    let model = if kind == DynamicsKind::PushSum && rng.gen_bool(0.5) {
        RandomModel::DirectedRingRotate
    } else {
        RandomModel::SwitchingComplete
    };
    let mut cfg = scenario("averaging-ergodic").unwrap();
    cfg.name = Some(format!("random-{seed}"));
    cfg.process = ProcessSpec { source: ProcessSource::Random { n, model, dwell: 0.5, seed: None }, stationary: None };
    if kind == DynamicsKind::Spps {
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
        let total: f64 = raw.iter().sum();
        cfg.process.stationary = Some(raw.iter().map(|r| r / total).collect());
    }
    let gain = matches!(kind, DynamicsKind::SaddlePoint | DynamicsKind::Spps).then_some(5.0);
    cfg.dynamics = DynamicsSpec { name: kind, a: gain };
    cfg.objective = FamilySpec {
        kind: FamilyKind::HuberizedQuadratic,
        n: Some(n),
        d: Some(d),
        params: serde_json::json!({"random": {"seed": seed, "spread": 1.0}, "curvature": 1.0, "radius": 1.5}),
    };
    cfg.schedule = StepSchedule::PowerLaw { a0: rng.gen_range(0.3..=1.0), p: rng.gen_range(0.55..=1.0) };
    cfg.t_end = 400.0;
    cfg.seed = seed;
    cfg.full_resolution = true;
    cfg.checks = vec![CheckKind::VDominatedByH, CheckKind::LyapunovDerivative, CheckKind::GapIntegral, CheckKind::InputTracking];
    if matches!(kind, DynamicsKind::PushSum | DynamicsKind::Spps) {
        cfg.checks.push(CheckKind::WeightConservation);
    }
    cfg.observer = ObserverSpec::default();
    cfg.expect = None;
    cfg
}

fn criterion_6() -> Verdict {
    let results: Vec<(u64, Result<Vec<String>, String>)> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let cfg = random_scenario(seed);
            let r = harness::run(&cfg).map_err(|e| e.to_string()).map(|out| {
                out.report.checks.iter().filter(|c| !c.passed).map(|c| format!("{} ({:e})", c.name, c.value)).collect()
            });
            (seed, r)
        })
        .collect();
    let kinds: std::collections::BTreeSet<_> = (0..20).map(|s| random_scenario(s).dynamics.name.name()).collect();
    ensure(kinds.len() == 4, || "not every dynamics appears".into())?;
    let failures: Vec<String> = results
        .iter()
        .filter_map(|(seed, r)| match r {
            Ok(f) if f.is_empty() => None,
            Ok(f) => Some(format!("seed {seed}: {}", f.join(", "))),
            Err(e) => Some(format!("seed {seed}: {e}")),
        })
        .collect();
    ensure(failures.is_empty(), || failures.join("; "))?;
    Ok("20 scenarios over 4 dynamics, every check passed".into())
}

fn criterion_7() -> Verdict {
    let ln2 = 2f64.ln();
    let lhs_exact = (1.0 / (1.0 + ln2) - 0.5) / (1.0 - ln2);
    let rhs_exact = 0.5 / ln2 * 0.5;
    let knots: Vec<(f64, f64)> = (0..=4000).map(|k| (k as f64 * 0.01, (-(k as f64) * 0.01).exp())).collect();
    let alpha = StepSchedule::CustomPiecewise { knots, tail_p: 0.0 };
    let beta = SampledFunction::sample(|t| (-t).exp(), 0.005, 40.0).map_err(|e| e.to_string())?;
    let worked = lemma_aux_check(&alpha, &beta, 0.5, 40.0, 1e-2).map_err(|e| e.to_string())?;
    ensure(worked.holds && (worked.lhs - lhs_exact).abs() < 1e-3 && (worked.rhs - rhs_exact).abs() < 1e-3, || {
        format!("worked example lhs {:.4} rhs {:.4}", worked.lhs, worked.rhs)
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let t_max = 1000.0;
    let mut holds = 0;
    let mut holds_tonelli = 0;
    let mut worst_ratio: f64 = 0.0;
    for _ in 0..50 {
        let alpha = StepSchedule::PowerLaw { a0: rng.gen_range(0.1..=1.0), p: rng.gen_range(0.55..=1.0) };
        let (scale, rate) = (rng.gen_range(0.1..2.0), rng.gen_range(0.05..1.0));
        let beta = if rng.gen_bool(0.5) {
            SampledFunction::sample(|t| scale * (-rate * t).exp(), 0.01, t_max)
        } else {
            let q = 1.0 + rate;
            SampledFunction::sample(|t| scale / (1.0 + t).powf(q), 0.01, t_max)
        }
        .map_err(|e| e.to_string())?;
        let lambda = rng.gen_range(0.05..0.95);
        let r = lemma_aux_check(&alpha, &beta, lambda, t_max, 1e-2).map_err(|e| e.to_string())?;
        holds += r.holds as usize;
        holds_tonelli += r.holds_tonelli as usize;
        worst_ratio = worst_ratio.max(r.lhs / r.rhs);
    }
    ensure(holds == 50, || {
        format!(
            "worked example holds (lhs {:.4} <= rhs {:.4}), but only {holds}/50 random triples satisfy \
             lhs <= (1-lambda)/|ln lambda| <alpha,beta> (worst lhs/rhs {worst_ratio:.2}); \
             {holds_tonelli}/50 satisfy the bound <alpha,beta>/|ln lambda|",
            worked.lhs, worked.rhs
        )
    })?;
    Ok(format!("worked lhs {:.4} rhs {:.4}; 50/50 random triples hold", worked.lhs, worked.rhs))
}

fn criterion_8() -> Verdict {
    let grid = FlowGridSpec { starts: 4, lag_step: 0.5, max_lag: 5.0 };
    let pair = harness::check_flow(&pair_laplacian_process(20.0), 1e-3, &grid).map_err(|e| e.to_string())?;
    let lambda = pair.lambda.ok_or("no rate for the pair flow")?;
    ensure((lambda - (-2f64).exp()).abs() < 1e-3 && pair.is_weakly_exponentially_ergodic(), || {
        format!("pair rate {lambda}")
    })?;

    let balanced = random_process(5, RandomModel::SwitchingComplete, 0.5, 20.0, 3, 1e-3).map_err(|e| e.to_string())?;
    ensure(balanced.is_weight_balanced(), || "switching complete process is not balanced".into())?;
    let report = harness::check_flow(&balanced, 1e-3, &grid).map_err(|e| e.to_string())?;
    ensure(pair.p_star == 1.0 && report.p_star == 1.0, || format!("p_star {} / {}", pair.p_star, report.p_star))?;

    let split = make_laplacian_from_rows(&[
        vec![0.0, 1.0, 0.0, 0.0],
        vec![1.0, 0.0, 0.0, 0.0],
        vec![0.0, 0.0, 0.0, 1.0],
        vec![0.0, 0.0, 1.0, 0.0],
    ])
    .unwrap();
    let disconnected = LaplacianProcess::constant(split, 20.0).unwrap();
    let report = harness::check_flow(&disconnected, 1e-3, &grid).map_err(|e| e.to_string())?;
    ensure(!report.is_weakly_exponentially_ergodic(), || "disconnected flow classified ergodic".into())?;
    Ok(format!("pair lambda {lambda:.6}, p_star exactly 1, disconnected flow rejected"))
}

fn criterion_9() -> Verdict {
    let constant = StepSchedule::constant(0.5).map_err(|e| e.to_string())?.check_assumption2();
    ensure(!constant.valid, || "constant step accepted".into())?;
    let out = harness::run(&scenario("counterexample").unwrap()).map_err(|e| e.to_string())?;
    let limit = out.summary.limit.as_ref().ok_or("no limit estimate")?;
    let closest = limit.y.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
    ensure(closest >= 0.1, || format!("limit {:?} within 0.1 of the minimizer", limit.y))?;
    Ok(format!("constant step rejected; limit {:?} stays {closest:.3} from 0", limit.y))
}

type Criterion = (&'static str, fn() -> Verdict, Option<Duration>);

fn main() {
    let criteria: [Criterion; 9] = [
        ("constant-step limit and sweep", criterion_1, Some(Duration::from_secs(5))),
        ("closed-form agreement", criterion_2, Some(Duration::from_secs(5))),
        ("diminishing-step convergence", criterion_3, Some(Duration::from_secs(30))),
        ("push-sum on a directed process", criterion_4, Some(Duration::from_secs(60))),
        ("observer bounds", criterion_5, None),
        ("proof-inequality suite", criterion_6, Some(Duration::from_secs(180))),
        ("auxiliary integral lemma", criterion_7, None),
        ("flow classification", criterion_8, None),
        ("constant-step negative control", criterion_9, None),
    ];
    let mut failed = 0;
    for (k, (name, check, budget)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = started.elapsed();
        let verdict = match (verdict, budget) {
            (Ok(_), Some(b)) if elapsed > *b => Err(format!("took {elapsed:.1?}, budget {b:?}")),
            (v, _) => v,
        };
        let (tag, detail) = match &verdict {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {} {tag} {name} [{elapsed:.2?}]: {detail}", k + 1);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
