//! Transition-matrix flows `Phi(t, s)` of `dPhi/dt = -L(t) Phi`, `Phi(s, s) = I`,
//! and the ergodicity metrics used to classify them.
//!
//! Distances to the rank-one stochastic set are measured in the spectral norm
//! against the surrogate projection `pi_hat 1^T` with `pi_hat = M 1 / n`.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphnet::{is_multiple, Laplacian, LaplacianProcess};
use crate::linalg::spectral_norm;

/// Tolerance on stochasticity of computed flows.
pub const TAU_FLOW: f64 = 1e-8;

/// Default RK4 step for flow integration.
pub const DEFAULT_FLOW_STEP: f64 = 1e-3;

/// Samples with a distance at or below this are dropped from the rate fit.
const FIT_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowMatrix {
    pub s: f64,
    pub t: f64,
    pub phi: DMatrix<f64>,
}

impl FlowMatrix {
    pub fn identity(n: usize, s: f64) -> Self {
        Self { s, t: s, phi: DMatrix::identity(n, n) }
    }

    /// Largest deviation of a column sum from one.
    pub fn column_sum_defect(&self) -> f64 {
        self.phi.column_iter().map(|c| (c.sum() - 1.0).abs()).fold(0.0, f64::max)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.phi.row_iter().map(|r| r.sum()).collect()
    }

    pub fn min_entry(&self) -> f64 {
        self.phi.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// One classical RK4 step of the linear ODE `X' = -L X` is multiplication by
/// the degree-4 Taylor polynomial of `exp(-hL)`.
fn rk4_propagator(l: &Laplacian, h: f64) -> DMatrix<f64> {
    let n = l.n();
    let a = l.entries() * (-h);
    let mut term = DMatrix::identity(n, n);
    let mut acc = term.clone();
    for k in 1..=4 {
        term = &term * &a / k as f64;
        acc += &term;
    }
    acc
}

fn check_grid_time(t: f64, h: f64, what: &str) -> Result<()> {
    if !is_multiple(t, h) {
        return Err(Error::invalid(format!("{what} {t} is not aligned to step {h}")));
    }
    Ok(())
}

fn step_count(span: f64, h: f64) -> usize {
    (span / h).round() as usize
}

/// Advances `phi` from `from` to `to` under the process.
fn propagate(
    process: &LaplacianProcess,
    phi: &mut DMatrix<f64>,
    from: f64,
    to: f64,
    h: f64,
) -> Result<()> {
    for (a, b, l) in process.segments(from, to) {
        let steps = step_count(b - a, h);
        if steps == 0 {
            continue;
        }
        if l.max_abs_entry() == 0.0 {
            continue;
        }
        let m = rk4_propagator(l, h);
        for _ in 0..steps {
            *phi = &m * &*phi;
        }
    }
    Ok(())
}

fn validate_flow(flow: &FlowMatrix) -> Result<()> {
    let bad = flow.phi.iter().any(|v| !v.is_finite())
        || flow.min_entry() < -100.0 * TAU_FLOW
        || flow.column_sum_defect() > 100.0 * TAU_FLOW;
    if bad {
        return Err(Error::NumericalFailure {
            t: flow.t,
            reason: format!(
                "flow Phi({}, {}) left the stochastic set (min entry {:e}, column defect {:e})",
                flow.t,
                flow.s,
                flow.min_entry(),
                flow.column_sum_defect()
            ),
        });
    }
    Ok(())
}

fn check_span(process: &LaplacianProcess, s: f64, t: f64, h: f64) -> Result<()> {
    if !(h > 0.0) {
        return Err(Error::invalid("step must be positive"));
    }
    if s < 0.0 || t < s || t > process.horizon() * (1.0 + 1e-12) {
        return Err(Error::invalid(format!(
            "need 0 <= s <= t <= horizon, got s={s}, t={t}, horizon={}",
            process.horizon()
        )));
    }
    process.check_aligned(h)?;
    check_grid_time(s, h, "start time")?;
    check_grid_time(t, h, "end time")
}

/// `Phi(t, s)` by piecewise RK4 with step `h`.
pub fn transition_matrix(process: &LaplacianProcess, s: f64, t: f64, h: f64) -> Result<FlowMatrix> {
    check_span(process, s, t, h)?;
    let mut flow = FlowMatrix::identity(process.n(), s);
    propagate(process, &mut flow.phi, s, t, h)?;
    flow.t = t;
    validate_flow(&flow)?;
    Ok(flow)
}

fn is_column_stochastic(m: &DMatrix<f64>) -> bool {
    m.iter().all(|&v| v >= -TAU_FLOW && v.is_finite())
        && m.column_iter().all(|c| (c.sum() - 1.0).abs() <= TAU_FLOW)
}

/// `||M - pi_hat 1^T||_2` with `pi_hat = M 1 / n`; zero iff `M` is rank-one stochastic.
pub fn distance_to_rank_one(m: &DMatrix<f64>) -> Result<f64> {
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return Err(Error::invalid("distance_to_rank_one needs a square matrix"));
    }
    if !is_column_stochastic(m) {
        return Err(Error::invalid("matrix is not column-stochastic"));
    }
    Ok(spectral_norm(&rank_one_residual(m)))
}

/// `M - pi_hat 1^T`.
pub fn rank_one_residual(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let pi_hat: Vec<f64> = m.row_iter().map(|r| r.sum() / n as f64).collect();
    DMatrix::from_fn(n, n, |i, j| m[(i, j)] - pi_hat[i])
}

/// Which `(s, t)` pairs an ergodicity report samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowGrid {
    pub starts: Vec<f64>,
    /// Lags `t - s`; pairs with `t` past the horizon are skipped.
    pub lags: Vec<f64>,
}

impl FlowGrid {
    /// `count` starts spread over the first half of the horizon and lags
    /// `lag_step, 2 lag_step, ..., max_lag`.
    pub fn uniform(process: &LaplacianProcess, h: f64, count: usize, lag_step: f64, max_lag: f64) -> Self {
        let half = process.horizon() / 2.0;
        let starts = (0..count.max(1))
            .map(|k| {
                let raw = half * k as f64 / count.max(1) as f64;
                (raw / h).floor() * h
            })
            .collect();
        let lags = (1..)
            .map(|k| k as f64 * lag_step)
            .take_while(|&l| l <= max_lag * (1.0 + 1e-12))
            .collect();
        Self { starts, lags }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowSample {
    pub s: f64,
    pub t: f64,
    pub distance: f64,
    pub min_row_sum: f64,
    pub max_row_sum_defect: f64,
    pub column_sum_defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicityReport {
    pub norm: String,
    pub step: f64,
    pub samples: Vec<FlowSample>,
    /// Fitted per-unit-time contraction `lambda` in `d <= a lambda^(t-s)`.
    pub lambda: Option<f64>,
    pub prefactor: Option<f64>,
    pub r_squared: Option<f64>,
    pub fit_note: Option<String>,
    /// `min` over samples of `min_i (Phi(t, s) 1)_i`.
    pub p_star: f64,
    pub weight_balanced: bool,
    pub max_column_sum_defect: f64,
}

/// Minimum `R^2` for a flow to count as weakly exponentially ergodic.
pub const ERGODIC_MIN_R2: f64 = 0.99;

impl ErgodicityReport {
    /// Fitted `lambda < 1` with a good log-linear fit and positive `p_star`.
    pub fn is_weakly_exponentially_ergodic(&self) -> bool {
        matches!((self.lambda, self.r_squared), (Some(l), Some(r2)) if l < 1.0 && r2 >= ERGODIC_MIN_R2)
            && self.p_star > 0.0
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "s,t,distance")?;
        for s in &self.samples {
            writeln!(w, "{:.16e},{:.16e},{:.16e}", s.s, s.t, s.distance)?;
        }
        Ok(())
    }
}

/// Least-squares fit of `log y = log a + x log lambda`.
pub(crate) struct ExpFit {
    pub lambda: f64,
    pub prefactor: f64,
    pub r_squared: f64,
}

pub(crate) fn fit_exponential(points: &[(f64, f64)]) -> Option<ExpFit> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, y)| *y > FIT_FLOOR)
        .map(|&(x, y)| (x, y.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let ss_res: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    // A flat series carries no rate information.
    let r_squared = if ss_tot <= 1e-20 * m { 0.0 } else { 1.0 - ss_res / ss_tot };
    Some(ExpFit { lambda: slope.exp(), prefactor: intercept.exp(), r_squared })
}

pub fn ergodicity_report(process: &LaplacianProcess, h: f64, grid: &FlowGrid) -> Result<ErgodicityReport> {
    if grid.starts.is_empty() || grid.lags.is_empty() {
        return Err(Error::invalid("flow grid needs at least one start and one lag"));
    }
    let n = process.n();
    let per_start: Vec<Result<Vec<FlowSample>>> = grid
        .starts
        .par_iter()
        .map(|&s| {
            check_span(process, s, s, h)?;
            let mut lags = grid.lags.clone();
            lags.sort_by(f64::total_cmp);
            let mut phi = DMatrix::identity(n, n);
            let mut now = s;
            let mut out = Vec::new();
            for lag in lags {
                let t = s + lag;
                if t > process.horizon() * (1.0 + 1e-12) {
                    break;
                }
                check_grid_time(t, h, "sample time")?;
                propagate(process, &mut phi, now, t, h)?;
                now = t;
                let flow = FlowMatrix { s, t, phi: phi.clone() };
                validate_flow(&flow)?;
                let rows = flow.row_sums();
                out.push(FlowSample {
                    s,
                    t,
                    distance: spectral_norm(&rank_one_residual(&flow.phi)),
                    min_row_sum: rows.iter().copied().fold(f64::INFINITY, f64::min),
                    max_row_sum_defect: rows.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max),
                    column_sum_defect: flow.column_sum_defect(),
                });
            }
            Ok(out)
        })
        .collect();
    let mut samples = Vec::new();
    for r in per_start {
        samples.extend(r?);
    }
    if samples.is_empty() {
        return Err(Error::invalid("no grid pair fits inside the horizon"));
    }
    let weight_balanced = process.is_weight_balanced();
    // Phi 1 = 1 exactly for weight-balanced flows; the integrator only
    // reproduces it up to rounding.
    let p_star = if weight_balanced {
        1.0
    } else {
        samples.iter().map(|s| s.min_row_sum).fold(f64::INFINITY, f64::min)
    };
    let points: Vec<(f64, f64)> = samples.iter().map(|s| (s.t - s.s, s.distance)).collect();
    let fit = fit_exponential(&points);
    let fit_note = match &fit {
        None => Some("fewer than 3 samples above the fit floor".to_string()),
        Some(f) if f.lambda >= 1.0 => Some("distances do not decay; flow is not ergodic".to_string()),
        _ => None,
    };
    let max_column_sum_defect = samples.iter().map(|s| s.column_sum_defect).fold(0.0, f64::max);
    Ok(ErgodicityReport {
        norm: "spectral".to_string(),
        step: h,
        lambda: fit.as_ref().map(|f| f.lambda),
        prefactor: fit.as_ref().map(|f| f.prefactor),
        r_squared: fit.as_ref().map(|f| f.r_squared),
        fit_note,
        p_star,
        weight_balanced,
        max_column_sum_defect,
        samples,
    })
}

/// `||Phi(t, r) Phi(r, s) - Phi(t, s)||_2`.
pub fn semigroup_defect(process: &LaplacianProcess, s: f64, r: f64, t: f64, h: f64) -> Result<f64> {
    if !(s <= r && r <= t) {
        return Err(Error::invalid(format!("need s <= r <= t, got {s}, {r}, {t}")));
    }
    let tr = transition_matrix(process, r, t, h)?;
    let rs = transition_matrix(process, s, r, h)?;
    let ts = transition_matrix(process, s, t, h)?;
    Ok(spectral_norm(&(&tr.phi * &rs.phi - &ts.phi)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphnet::{make_laplacian_from_rows, random_process, RandomModel};

    fn pair_process(horizon: f64) -> LaplacianProcess {
        let l = make_laplacian_from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        LaplacianProcess::constant(l, horizon).unwrap()
    }

    /// exp(-tL) for L = [[1,-1],[-1,1]].
    fn pair_exact(t: f64) -> DMatrix<f64> {
        let e = (-2.0 * t).exp();
        DMatrix::from_row_slice(2, 2, &[(1.0 + e) / 2.0, (1.0 - e) / 2.0, (1.0 - e) / 2.0, (1.0 + e) / 2.0])
    }

    #[test]
    fn pair_flow_matches_matrix_exponential() {
        let p = pair_process(10.0);
        let f = transition_matrix(&p, 0.0, 1.0, 1e-3).unwrap();
        assert!((f.phi.clone() - pair_exact(1.0)).abs().max() < 1e-12);
        assert!((f.phi[(0, 0)] - 0.56767).abs() < 1e-5);
        assert!((f.phi[(0, 1)] - 0.43233).abs() < 1e-5);
    }

    #[test]
    fn trivial_flows_are_identity() {
        let p = pair_process(10.0);
        let f = transition_matrix(&p, 2.0, 2.0, 1e-3).unwrap();
        assert_eq!(f.phi, DMatrix::identity(2, 2));
        let z = LaplacianProcess::constant(Laplacian::zeros(3), 5.0).unwrap();
        let f = transition_matrix(&z, 0.0, 4.0, 1e-3).unwrap();
        assert_eq!(f.phi, DMatrix::identity(3, 3));
    }

    #[test]
    fn transition_matrix_rejects_bad_spans() {
        let p = pair_process(1.0);
        assert!(transition_matrix(&p, 0.5, 0.2, 1e-3).is_err());
        assert!(transition_matrix(&p, 0.0, 2.0, 1e-3).is_err());
        assert!(transition_matrix(&p, 0.0, 0.00015, 1e-3).is_err());
    }

    #[test]
    fn unstable_step_is_a_numerical_failure() {
        let l = make_laplacian_from_rows(&[vec![0.0, 50.0], vec![50.0, 0.0]]).unwrap();
        let p = LaplacianProcess::constant(l, 10.0).unwrap();
        assert!(matches!(
            transition_matrix(&p, 0.0, 10.0, 0.5),
            Err(Error::NumericalFailure { .. })
        ));
    }

    #[test]
    fn distance_examples() {
        let d = distance_to_rank_one(&pair_exact(1.0)).unwrap();
        assert!((d - (-2.0f64).exp()).abs() < 1e-12);
        let rank_one = DMatrix::from_row_slice(2, 2, &[0.3, 0.3, 0.7, 0.7]);
        assert!(distance_to_rank_one(&rank_one).unwrap() < 1e-15);
        assert!((distance_to_rank_one(&DMatrix::identity(2, 2)).unwrap() - 1.0).abs() < 1e-12);
        assert!(distance_to_rank_one(&DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0])).is_err());
    }

    #[test]
    fn pair_distance_decays_as_exp_minus_2t() {
        let p = pair_process(5.0);
        let mut prev = f64::INFINITY;
        for k in 0..=50 {
            let t = k as f64 * 0.1;
            let t = (t / 1e-3).round() * 1e-3;
            let f = transition_matrix(&p, 0.0, t, 1e-3).unwrap();
            let d = distance_to_rank_one(&f.phi).unwrap();
            assert!((d - (-2.0 * t).exp()).abs() < 1e-8, "t={t}");
            assert!(d <= prev + 1e-15);
            prev = d;
        }
    }

    #[test]
    fn pair_report_recovers_rate() {
        let p = pair_process(20.0);
        let grid = FlowGrid { starts: vec![0.0, 3.0], lags: (1..=10).map(|k| k as f64).collect() };
        let r = ergodicity_report(&p, 1e-3, &grid).unwrap();
        assert!((r.lambda.unwrap() - (-2.0f64).exp()).abs() < 1e-6);
        assert!((r.prefactor.unwrap() - 1.0).abs() < 1e-6);
        assert_eq!(r.p_star, 1.0);
        assert!(r.is_weakly_exponentially_ergodic());
    }

    #[test]
    fn disconnected_report_is_not_ergodic() {
        let l = make_laplacian_from_rows(&[
            vec![0.0, 1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ])
        .unwrap();
        let p = LaplacianProcess::constant(l, 30.0).unwrap();
        let grid = FlowGrid { starts: vec![0.0], lags: (1..=20).map(|k| k as f64).collect() };
        let r = ergodicity_report(&p, 1e-2, &grid).unwrap();
        assert!(!r.is_weakly_exponentially_ergodic());
    }

    #[test]
    fn fit_needs_three_points() {
        let p = pair_process(3.0);
        let grid = FlowGrid { starts: vec![0.0], lags: vec![1.0, 2.0] };
        let r = ergodicity_report(&p, 1e-3, &grid).unwrap();
        assert!(r.lambda.is_none());
        assert!(!r.is_weakly_exponentially_ergodic());
    }

    #[test]
    fn semigroup_examples() {
        let p = pair_process(2.0);
        assert!(semigroup_defect(&p, 0.0, 0.0, 1.0, 1e-3).unwrap() < 1e-14);
        assert!(semigroup_defect(&p, 0.0, 0.5, 1.0, 1e-3).unwrap() < 1e-10);
        let z = LaplacianProcess::constant(Laplacian::zeros(2), 2.0).unwrap();
        assert_eq!(semigroup_defect(&z, 0.0, 0.5, 1.0, 1e-3).unwrap(), 0.0);
        let sw = random_process(4, RandomModel::BWindow { b: 2 }, 0.25, 3.0, 9, 1e-3).unwrap();
        assert!(semigroup_defect(&sw, 0.1, 1.3, 2.9, 1e-3).unwrap() < 1e-10);
    }

    #[test]
    fn balanced_flows_are_doubly_stochastic() {
        let p = random_process(5, RandomModel::SwitchingComplete, 0.5, 4.0, 2, 1e-3).unwrap();
        let f = transition_matrix(&p, 0.0, 3.5, 1e-3).unwrap();
        assert!(f.column_sum_defect() <= TAU_FLOW);
        assert!(f.row_sums().iter().all(|r| (r - 1.0).abs() <= TAU_FLOW));
    }
}
