//! Checks of the flow-tracker properties and of the convergence-proof
//! inequalities on recorded trajectories.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowcore::TAU_FLOW;
use crate::linalg::{block_spectral_norm, distance, max_row_norm, row_norm};
use crate::objectives::ObjectiveFamily;
use crate::schedules::StepSchedule;
use crate::simulate::Trajectory;

/// Base slack for integral inequalities, on top of quadrature estimates.
pub const TOL_INEQ: f64 = 1e-6;
/// Base slack for pointwise derivative inequalities.
pub const TOL_DERIV: f64 = 1e-9;
/// Coarsest recording interval accepted by the derivative-based checks.
pub const FULL_RESOLUTION_MAX_INTERVAL: f64 = 1e-2;
/// Consensus error required at the end of a converging run.
pub const CONSENSUS_TOL: f64 = 1e-2;
/// Largest tail variation of the gap integral counted as bounded.
pub const GAP_CAUCHY_TOL: f64 = 1e-3;

/// Norm applied to `x(0)` and `u(s)` in the observer envelope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvelopeNorm {
    /// `max_i ||row_i||`
    #[default]
    MaxRow,
    Spectral,
}

impl EnvelopeNorm {
    fn apply(self, block: &[f64], n: usize, d: usize) -> f64 {
        match self {
            Self::MaxRow => max_row_norm(block, n, d),
            Self::Spectral => block_spectral_norm(block, n, d),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Measured quantity (worst margin, max residual, ...).
    pub value: f64,
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

/// `e(t_k) = max_i ||y_i(t_k) - x_bar(t_k)||`.
pub fn consensus_error(traj: &Trajectory) -> Vec<f64> {
    let d = traj.meta.d;
    traj.samples
        .iter()
        .map(|s| s.y.chunks(d).map(|yi| distance(yi, &s.xbar)).fold(0.0, f64::max))
        .collect()
}

fn require_fine(traj: &Trajectory, what: &str) -> Result<f64> {
    let dt = traj.interval();
    if dt > FULL_RESOLUTION_MAX_INTERVAL * (1.0 + 1e-12) {
        return Err(Error::capability(format!(
            "{what} needs recording at most every {FULL_RESOLUTION_MAX_INTERVAL}, trajectory records every {dt}"
        )));
    }
    if traj.len() < 5 {
        return Err(Error::invalid(format!("{what} needs at least 5 samples")));
    }
    Ok(dt)
}

fn column_sums(u: &[f64], d: usize) -> Vec<f64> {
    let mut s = vec![0.0; d];
    for row in u.chunks(d) {
        s.iter_mut().zip(row).for_each(|(a, v)| *a += v);
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingCheck {
    /// Residual at interior samples (first and last entries are zero).
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Least-squares gain relating the measured `x_bar'` to `sum_i u_i`.
    pub c1_estimate: Option<f64>,
}

/// Central-difference check of `x_bar' = c1 * sum_i u_i`.
pub fn input_tracking_check(traj: &Trajectory, c1: f64) -> Result<TrackingCheck> {
    let dt = require_fine(traj, "input tracking")?;
    let d = traj.meta.d;
    let s = &traj.samples;
    let sums: Vec<Vec<f64>> = s.iter().map(|x| column_sums(&x.u, d)).collect();
    let mut residuals = vec![0.0; s.len()];
    let mut second = 0.0f64;
    let (mut num, mut den) = (0.0, 0.0);
    for k in 1..s.len() - 1 {
        let rate: Vec<f64> = (0..d).map(|j| (s[k + 1].xbar[j] - s[k - 1].xbar[j]) / (2.0 * dt)).collect();
        let diff: Vec<f64> = (0..d).map(|j| rate[j] - c1 * sums[k][j]).collect();
        residuals[k] = row_norm(&diff);
        let dd: Vec<f64> = (0..d).map(|j| sums[k + 1][j] - 2.0 * sums[k][j] + sums[k - 1][j]).collect();
        second = second.max(c1.abs() * row_norm(&dd) / (dt * dt));
        num += rate.iter().zip(&sums[k]).map(|(a, b)| a * b).sum::<f64>();
        den += sums[k].iter().map(|b| b * b).sum::<f64>();
    }
    let max_residual = residuals.iter().copied().fold(0.0, f64::max);
    // Second derivative of c1 * sum u bounds the third derivative of x_bar.
    let tolerance = 10.0 * dt * dt * second + TOL_DERIV;
    Ok(TrackingCheck {
        residuals,
        max_residual,
        tolerance,
        passed: max_residual <= tolerance,
        c1_estimate: (den > 0.0).then(|| num / den),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverFit {
    pub lambda: f64,
    pub norm: EnvelopeNorm,
    /// `max_k e(t_k) / B(t_k)`; infinite when the bound is infeasible.
    pub c2_min: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2_declared: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violations: Option<usize>,
    /// False when some sample has `B = 0` but `e > 0`.
    pub feasible: bool,
    pub envelope: Vec<f64>,
}

/// Fits the smallest `c2` with `e(t) <= c2 (lambda^t ||x(0)|| + int lambda^(t-s) ||u(s)|| ds)`.
pub fn observer_bound_fit(
    traj: &Trajectory,
    lambda: f64,
    c2_declared: Option<f64>,
    norm: EnvelopeNorm,
) -> Result<ObserverFit> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::invalid(format!("lambda must lie in (0, 1), got {lambda}")));
    }
    let (n, d) = (traj.meta.n, traj.meta.d);
    let e = consensus_error(traj);
    let s = &traj.samples;
    let x0 = norm.apply(s[0].x(n, d), n, d);
    let unorm: Vec<f64> = s.iter().map(|x| norm.apply(&x.u, n, d)).collect();
    let mut envelope = Vec::with_capacity(s.len());
    let mut integral = 0.0;
    for k in 0..s.len() {
        if k > 0 {
            let dt = s[k].t - s[k - 1].t;
            let decay = lambda.powf(dt);
            integral = decay * integral + 0.5 * dt * (decay * unorm[k - 1] + unorm[k]);
        }
        envelope.push(lambda.powf(s[k].t) * x0 + integral);
    }
    let mut c2_min: f64 = 0.0;
    let mut feasible = true;
    for (ek, bk) in e.iter().zip(&envelope) {
        if *bk > 0.0 {
            c2_min = c2_min.max(ek / bk);
        } else if *ek > 1e-14 {
            feasible = false;
        }
    }
    if !feasible {
        c2_min = f64::INFINITY;
    }
    let violations = c2_declared.map(|c2| e.iter().zip(&envelope).filter(|(ek, bk)| **ek > c2 * **bk).count());
    Ok(ObserverFit { lambda, norm, c2_min, c2_declared, violations, feasible, envelope })
}

/// `V(t_k) = ||x_bar(t_k) - x*||^2 / 2`.
pub fn lyapunov_series(traj: &Trajectory, x_star: &[f64]) -> Vec<f64> {
    traj.samples.iter().map(|s| 0.5 * distance(&s.xbar, x_star).powi(2)).collect()
}

fn weighted_disagreement(traj: &Trajectory, k_bound: f64, schedule: &StepSchedule) -> Vec<f64> {
    let d = traj.meta.d;
    traj.samples
        .iter()
        .map(|s| {
            let spread: f64 = s.y.chunks(d).map(|yi| distance(yi, &s.xbar)).sum();
            2.0 * k_bound * schedule.at(s.t) * spread
        })
        .collect()
}

fn cumulative_trapezoid(t: &[f64], g: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(g.len());
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..g.len() {
        acc += 0.5 * (t[k] - t[k - 1]) * (g[k] + g[k - 1]);
        out.push(acc);
    }
    out
}

/// `h(t) = 2K sum_i int_0^t alpha(s) ||x_bar(s) - y_i(s)|| ds` by the trapezoid rule.
pub fn h_function(traj: &Trajectory, k_bound: f64, schedule: &StepSchedule) -> Vec<f64> {
    cumulative_trapezoid(&traj.times(), &weighted_disagreement(traj, k_bound, schedule))
}

/// Upper bound on `sup_t h(t)` from the observer estimate with constants
/// `(c2, lambda)` and `||u_i|| <= K alpha`:
/// `2 n K c2 (alpha(0) ||x(0)|| + K int alpha^2) / |log lambda|`.
pub fn h_function_bound(n: usize, k_bound: f64, c2: f64, lambda: f64, alpha0: f64, x0_norm: f64, alpha_sq_integral: f64) -> f64 {
    2.0 * n as f64 * k_bound * c2 * (alpha0 * x0_norm + k_bound * alpha_sq_integral) / lambda.ln().abs()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub passed: bool,
    /// Smallest `rhs - lhs + tolerance` seen; negative means a violation.
    pub worst_margin: f64,
    pub worst_time: f64,
    pub checked: usize,
}

/// `V(t_{k+1}) - V(t_k) <= h(t_{k+1}) - h(t_k)` on adjacent samples.
pub fn v_dominated_by_h_check(traj: &Trajectory, x_star: &[f64], k_bound: f64, schedule: &StepSchedule) -> InequalityCheck {
    let t = traj.times();
    let v = lyapunov_series(traj, x_star);
    let g = weighted_disagreement(traj, k_bound, schedule);
    let h = cumulative_trapezoid(&t, &g);
    let mut worst = (f64::INFINITY, 0.0);
    for k in 0..t.len().saturating_sub(1) {
        let dt = t[k + 1] - t[k];
        // Trapezoid error dt^3/12 |g''|, with g'' from neighbouring second differences.
        let curv = [k.checked_sub(1), Some(k)]
            .iter()
            .flatten()
            .filter(|&&j| j + 2 < g.len())
            .map(|&j| (g[j + 2] - 2.0 * g[j + 1] + g[j]).abs() / (dt * dt))
            .fold(0.0, f64::max);
        let tol = TOL_INEQ + dt.powi(3) / 12.0 * 2.0 * curv;
        let margin = (h[k + 1] - h[k]) - (v[k + 1] - v[k]) + tol;
        if margin < worst.0 {
            worst = (margin, t[k + 1]);
        }
    }
    InequalityCheck { passed: worst.0 >= 0.0, worst_margin: worst.0, worst_time: worst.1, checked: t.len().saturating_sub(1) }
}

/// Pointwise bound `V' <= c1 alpha (2K sum_i ||x_bar - y_i|| - (F(x_bar) - F*))`
/// with `V'` from central differences.
pub fn lyapunov_derivative_check(
    traj: &Trajectory,
    family: &ObjectiveFamily,
    x_star: &[f64],
    f_star: f64,
    k_bound: f64,
    schedule: &StepSchedule,
    c1: f64,
) -> Result<InequalityCheck> {
    let dt = require_fine(traj, "the Lyapunov derivative bound")?;
    let v = lyapunov_series(traj, x_star);
    let t = traj.times();
    let g = weighted_disagreement(traj, k_bound, schedule);
    let m = v.len();
    let third = (1..m - 2)
        .map(|k| (v[k + 2] - 3.0 * v[k + 1] + 3.0 * v[k] - v[k - 1]).abs())
        .fold(0.0, f64::max)
        / dt.powi(3);
    let tol = TOL_DERIV + dt * dt * third;
    let mut worst = (f64::INFINITY, 0.0);
    for k in 1..m - 1 {
        let s = &traj.samples[k];
        let vdot = (v[k + 1] - v[k - 1]) / (2.0 * dt);
        let gap = family.global_objective(&s.xbar)? - f_star;
        let rhs = c1 * (g[k] - schedule.at(s.t) * gap);
        let margin = rhs - vdot + tol;
        if margin < worst.0 {
            worst = (margin, t[k]);
        }
    }
    Ok(InequalityCheck { passed: worst.0 >= 0.0, worst_margin: worst.0, worst_time: worst.1, checked: m - 2 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapIntegral {
    /// Cumulative `int_0^t alpha(s) (F(x_bar(s)) - F*) ds`.
    pub series: Vec<f64>,
    pub integral: f64,
    pub min_integrand: f64,
    /// `max |G(T) - G(t)|` over the final tenth of the run.
    pub tail_variation: f64,
    pub bounded: bool,
    pub passed: bool,
}

pub fn gap_integral_check(traj: &Trajectory, family: &ObjectiveFamily, schedule: &StepSchedule, f_star: f64) -> Result<GapIntegral> {
    let t = traj.times();
    let integrand = traj
        .samples
        .iter()
        .map(|s| Ok(schedule.at(s.t) * (family.global_objective(&s.xbar)? - f_star)))
        .collect::<Result<Vec<f64>>>()?;
    let series = cumulative_trapezoid(&t, &integrand);
    let integral = *series.last().unwrap();
    let min_integrand = integrand.iter().copied().fold(f64::INFINITY, f64::min);
    let t_end = *t.last().unwrap();
    let tail_variation = t
        .iter()
        .zip(&series)
        .filter(|(tk, _)| **tk >= 0.9 * t_end)
        .map(|(_, g)| (integral - g).abs())
        .fold(0.0, f64::max);
    let bounded = tail_variation < GAP_CAUCHY_TOL;
    Ok(GapIntegral {
        series,
        integral,
        min_integrand,
        tail_variation,
        bounded,
        passed: bounded && min_integrand >= -TOL_INEQ,
    })
}

/// Compares the spectral norm of an `n x d` block with `sqrt(n) max_i ||x_i||`.
pub fn matrix_norm_bound_check(x: &DMatrix<f64>) -> (f64, f64, bool) {
    let lhs = crate::linalg::spectral_norm(x);
    let rhs = (x.nrows() as f64).sqrt() * x.row_iter().map(|r| r.norm()).fold(0.0, f64::max);
    (lhs, rhs, lhs <= rhs * (1.0 + 1e-12) + 1e-300)
}

/// `|sum_i w_i(t) - n|` stays below the flow tolerance; `None` without weights.
pub fn weight_conservation_check(traj: &Trajectory) -> Option<CheckResult> {
    let (n, d) = (traj.meta.n, traj.meta.d);
    let offset = match traj.meta.layout {
        crate::dynamics::AuxLayout::Weights => n * d,
        crate::dynamics::AuxLayout::DualWeights => 2 * n * d,
        _ => return None,
    };
    let worst = traj
        .samples
        .iter()
        .map(|s| (s.state[offset..offset + n].iter().sum::<f64>() - n as f64).abs())
        .fold(0.0, f64::max);
    Some(CheckResult {
        name: "weight-conservation".into(),
        passed: worst <= TAU_FLOW,
        value: worst,
        tolerance: TAU_FLOW,
        note: String::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    Consensus,
    InputTracking,
    ObserverBound,
    VDominatedByH,
    LyapunovDerivative,
    GapIntegral,
    WeightConservation,
    HBounded,
}

impl CheckKind {
    pub const ALL: [CheckKind; 8] = [
        Self::Consensus,
        Self::InputTracking,
        Self::ObserverBound,
        Self::VDominatedByH,
        Self::LyapunovDerivative,
        Self::GapIntegral,
        Self::WeightConservation,
        Self::HBounded,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Consensus => "consensus",
            Self::InputTracking => "input-tracking",
            Self::ObserverBound => "observer-bound",
            Self::VDominatedByH => "v-dominated-by-h",
            Self::LyapunovDerivative => "lyapunov-derivative",
            Self::GapIntegral => "gap-integral",
            Self::WeightConservation => "weight-conservation",
            Self::HBounded => "h-bounded",
        }
    }
}

/// Everything the report needs beyond the trajectory itself.
#[derive(Debug, Clone)]
pub struct DiagnosticsInput<'a> {
    pub family: Option<&'a ObjectiveFamily>,
    pub schedule: Option<&'a StepSchedule>,
    pub c1: f64,
    /// Contraction rate from the flow classification (or the spps formula).
    pub lambda: Option<f64>,
    pub c2_declared: Option<f64>,
    pub norm: EnvelopeNorm,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportSeries {
    pub t: Vec<f64>,
    pub consensus_error: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lyapunov: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub h: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub optimality_gap: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tracking_residual: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub series: ReportSeries,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observer: Option<ObserverSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1_estimate: Option<f64>,
    pub checks: Vec<CheckResult>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Observer fit without the envelope series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverSummary {
    pub lambda: f64,
    pub norm: EnvelopeNorm,
    pub c2_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2_declared: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violations: Option<usize>,
    pub feasible: bool,
}

impl DiagnosticsReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Runs the requested checks. Checks whose inputs are missing are
    /// reported as failed with an explanatory note.
    pub fn assemble(traj: &Trajectory, input: &DiagnosticsInput<'_>, checks: &[CheckKind]) -> Result<Self> {
        let mut series = ReportSeries { t: traj.times(), consensus_error: consensus_error(traj), ..Default::default() };
        let mut report = Self { series: ReportSeries::default(), observer: None, c1_estimate: None, checks: vec![], notes: vec![] };
        let (n, d) = (traj.meta.n, traj.meta.d);

        let optimum = match input.family {
            Some(f) => Some(f.optimizer_oracle()?),
            None => None,
        };
        let k_bound = input.family.map(|f| f.declared_gradient_bound()).transpose().ok().flatten();
        if let (Some(opt), Some(fam)) = (&optimum, input.family) {
            series.lyapunov = lyapunov_series(traj, &opt.x_star);
            series.optimality_gap = traj
                .samples
                .iter()
                .map(|s| fam.global_objective(&s.xbar).map(|f| f - opt.f_star))
                .collect::<Result<_>>()?;
        }
        if let (Some(k), Some(sched)) = (k_bound, input.schedule) {
            series.h = h_function(traj, k, sched);
        }

        let missing = |name: &str, what: &str| CheckResult {
            name: name.into(),
            passed: false,
            value: f64::NAN,
            tolerance: f64::NAN,
            note: format!("not applicable: {what}"),
        };

        let mut observer_fit = None;
        for &kind in checks {
            let name = kind.name();
            let result = match kind {
                CheckKind::Consensus => {
                    let e = *series.consensus_error.last().unwrap();
                    CheckResult { name: name.into(), passed: e < CONSENSUS_TOL, value: e, tolerance: CONSENSUS_TOL, note: String::new() }
                }
                CheckKind::InputTracking => match input_tracking_check(traj, input.c1) {
                    Ok(tc) => {
                        report.c1_estimate = tc.c1_estimate;
                        let r = CheckResult {
                            name: name.into(),
                            passed: tc.passed,
                            value: tc.max_residual,
                            tolerance: tc.tolerance,
                            note: String::new(),
                        };
                        series.tracking_residual = tc.residuals;
                        r
                    }
                    Err(Error::Capability(m)) => missing(name, &m),
                    Err(e) => return Err(e),
                },
                CheckKind::ObserverBound => match input.lambda {
                    Some(lambda) => {
                        let fit = observer_bound_fit(traj, lambda, input.c2_declared, input.norm)?;
                        let passed = fit.feasible && fit.violations.unwrap_or(0) == 0;
                        let r = CheckResult {
                            name: name.into(),
                            passed,
                            value: fit.violations.map_or(fit.c2_min, |v| v as f64),
                            tolerance: fit.c2_declared.unwrap_or(f64::INFINITY),
                            note: format!("c2_min = {:e}", fit.c2_min),
                        };
                        observer_fit = Some(fit);
                        r
                    }
                    None => missing(name, "no contraction rate"),
                },
                CheckKind::VDominatedByH => match (&optimum, k_bound, input.schedule) {
                    (Some(opt), Some(k), Some(sched)) => {
                        let c = v_dominated_by_h_check(traj, &opt.x_star, k, sched);
                        CheckResult { name: name.into(), passed: c.passed, value: c.worst_margin, tolerance: 0.0, note: format!("worst at t = {}", c.worst_time) }
                    }
                    _ => missing(name, "needs an objective family, gradient bound and schedule"),
                },
                CheckKind::LyapunovDerivative => match (&optimum, k_bound, input.schedule, input.family) {
                    (Some(opt), Some(k), Some(sched), Some(fam)) => {
                        match lyapunov_derivative_check(traj, fam, &opt.x_star, opt.f_star, k, sched, input.c1) {
                            Ok(c) => CheckResult {
                                name: name.into(),
                                passed: c.passed,
                                value: c.worst_margin,
                                tolerance: 0.0,
                                note: format!("worst at t = {}", c.worst_time),
                            },
                            Err(Error::Capability(m)) => missing(name, &m),
                            Err(e) => return Err(e),
                        }
                    }
                    _ => missing(name, "needs an objective family, gradient bound and schedule"),
                },
                CheckKind::GapIntegral => match (&optimum, input.schedule, input.family) {
                    (Some(opt), Some(sched), Some(fam)) => {
                        let g = gap_integral_check(traj, fam, sched, opt.f_star)?;
                        CheckResult {
                            name: name.into(),
                            passed: g.passed,
                            value: g.tail_variation,
                            tolerance: GAP_CAUCHY_TOL,
                            note: format!("integral = {:e}, min integrand = {:e}", g.integral, g.min_integrand),
                        }
                    }
                    _ => missing(name, "needs an objective family and schedule"),
                },
                CheckKind::WeightConservation => match weight_conservation_check(traj) {
                    Some(c) => c,
                    None => CheckResult {
                        name: name.into(),
                        passed: true,
                        value: 0.0,
                        tolerance: TAU_FLOW,
                        note: "no weights in this system".into(),
                    },
                },
                CheckKind::HBounded => match (k_bound, input.schedule, input.lambda) {
                    (Some(k), Some(sched), Some(lambda)) => {
                        let fit = match &observer_fit {
                            Some(f) => f.clone(),
                            None => observer_bound_fit(traj, lambda, input.c2_declared, input.norm)?,
                        };
                        let c2 = input.c2_declared.unwrap_or(fit.c2_min);
                        let t_end = traj.last().t;
                        let x0 = input.norm.apply(traj.samples[0].x(n, d), n, d);
                        let bound = h_function_bound(n, k, c2, lambda, sched.at(0.0), x0, sched.square_integral(0.0, t_end, 1e-2));
                        let h_end = series.h.last().copied().unwrap_or(0.0);
                        CheckResult {
                            name: name.into(),
                            passed: h_end <= bound * (1.0 + 1e-9) + TOL_INEQ,
                            value: h_end,
                            tolerance: bound,
                            note: "bound uses c1 = 1/n dynamics with unscaled step sizes".into(),
                        }
                    }
                    _ => missing(name, "needs a gradient bound, schedule and contraction rate"),
                },
            };
            report.checks.push(result);
        }
        if let Some(fit) = observer_fit {
            report.observer = Some(ObserverSummary {
                lambda: fit.lambda,
                norm: fit.norm,
                c2_min: fit.c2_min.is_finite().then_some(fit.c2_min),
                c2_declared: fit.c2_declared,
                violations: fit.violations,
                feasible: fit.feasible,
            });
        }
        report.series = series;
        Ok(report)
    }

    /// Writes one `(t, value)` CSV per nonempty series into `dir`.
    pub fn write_series_csv(&self, dir: &std::path::Path) -> std::io::Result<Vec<std::path::PathBuf>> {
        let named: [(&str, &Vec<f64>); 5] = [
            ("consensus_error", &self.series.consensus_error),
            ("lyapunov", &self.series.lyapunov),
            ("h_function", &self.series.h),
            ("optimality_gap", &self.series.optimality_gap),
            ("tracking_residual", &self.series.tracking_residual),
        ];
        let mut written = vec![];
        for (name, values) in named {
            if values.is_empty() {
                continue;
            }
            let path = dir.join(format!("{name}.csv"));
            let mut w = std::io::BufWriter::new(std::fs::File::create(&path)?);
            writeln!(w, "t,value")?;
            for (t, v) in self.series.t.iter().zip(values) {
                writeln!(w, "{t:.16e},{v:.16e}")?;
            }
            written.push(path);
        }
        Ok(written)
    }
}
