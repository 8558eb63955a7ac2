//! Flow-tracker systems `x' = p(t, x, aux, u)`, `y = q(x, aux)` and the
//! gradient feedback law `u_i = -alpha(t) grad f_i(y_i)`.
//!
//! A state is one flat vector: the `n x d` block `x` first, then the
//! auxiliary block (if any) in the layout of [`AuxLayout`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphnet::{Laplacian, LaplacianProcess};
use crate::objectives::ObjectiveFamily;
use crate::schedules::StepSchedule;

/// Floor below which push-sum weights are considered degenerate.
pub const W_FLOOR: f64 = 1e-9;

/// Gain above which the saddle-point variants are known to converge.
pub const SADDLE_GAIN_THRESHOLD: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DynamicsKind {
    Averaging,
    PushSum,
    SaddlePoint,
    Spps,
}

impl DynamicsKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Averaging => "averaging",
            Self::PushSum => "push-sum",
            Self::SaddlePoint => "saddle-point",
            Self::Spps => "spps",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuxLayout {
    None,
    /// `w`: one positive weight per agent.
    Weights,
    /// `w`: an `n x d` dual block.
    Dual,
    /// `z` (`n x d`) followed by `v` (`n` weights).
    DualWeights,
}

impl AuxLayout {
    pub fn len(self, n: usize, d: usize) -> usize {
        match self {
            Self::None => 0,
            Self::Weights => n,
            Self::Dual => n * d,
            Self::DualWeights => n * d + n,
        }
    }

    /// Column labels of the auxiliary block.
    pub fn labels(self, n: usize, d: usize) -> Vec<String> {
        let block = |name: &str, len: usize| -> Vec<String> { (1..=len).map(|k| format!("{name}_{k}")).collect() };
        match self {
            Self::None => vec![],
            Self::Weights => block("w", n),
            Self::Dual => block("w", n * d),
            Self::DualWeights => [block("z", n * d), block("v", n)].concat(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub n: usize,
    pub d: usize,
    pub layout: AuxLayout,
    pub data: Vec<f64>,
}

impl SystemState {
    pub fn x(&self) -> &[f64] {
        &self.data[..self.n * self.d]
    }

    pub fn aux(&self) -> &[f64] {
        &self.data[self.n * self.d..]
    }

    /// Push-sum weights `w` or `v`, when the layout carries them.
    pub fn weights(&self) -> Option<&[f64]> {
        weights_of(self.layout, self.n, self.d, &self.data)
    }

    /// `x_bar = (1/n) sum_i x_i`.
    pub fn average(&self) -> Vec<f64> {
        crate::linalg::row_average(self.x(), self.n, self.d)
    }
}

fn weights_of(layout: AuxLayout, n: usize, d: usize, data: &[f64]) -> Option<&[f64]> {
    match layout {
        AuxLayout::Weights => Some(&data[n * d..n * d + n]),
        AuxLayout::DualWeights => Some(&data[2 * n * d..2 * n * d + n]),
        _ => None,
    }
}

#[derive(Debug, Clone)]
pub struct FlowTrackerSystem {
    kind: DynamicsKind,
    process: LaplacianProcess,
    d: usize,
    gain: f64,
    warnings: Vec<String>,
}

impl FlowTrackerSystem {
    /// `x' = -L x + u`, `y = x`.
    pub fn averaging(process: LaplacianProcess, d: usize) -> Result<Self> {
        check_d(d)?;
        let mut warnings = vec![];
        if !process.is_weight_balanced() {
            warnings.push("process is not weight-balanced: input-tracking not guaranteed".to_string());
        }
        Ok(Self { kind: DynamicsKind::Averaging, process, d, gain: 1.0, warnings })
    }

    /// `x' = -L x + u`, `w' = -L w`, `y_i = x_i / w_i`.
    pub fn push_sum(process: LaplacianProcess, d: usize) -> Result<Self> {
        check_d(d)?;
        Ok(Self { kind: DynamicsKind::PushSum, process, d, gain: 1.0, warnings: vec![] })
    }

    /// `x' = -a L x - L w + u`, `w' = L x`, `y = x`.
    pub fn saddle_point(process: LaplacianProcess, d: usize, a: f64) -> Result<Self> {
        check_d(d)?;
        check_gain(a)?;
        if !process.is_weight_balanced() {
            return Err(Error::invalid("saddle-point dynamics need weight-balanced pieces"));
        }
        Ok(Self { kind: DynamicsKind::SaddlePoint, process, d, gain: a, warnings: gain_warning(a) })
    }

    /// `x' = -a L x - L z + u`, `z' = L x`, `v' = -L v`, `y_i = x_i / v_i`; scalar states only.
    pub fn spps(process: LaplacianProcess, d: usize, a: f64) -> Result<Self> {
        if d != 1 {
            return Err(Error::capability(format!("spps dynamics are defined for d = 1 only, got d = {d}")));
        }
        check_gain(a)?;
        Ok(Self { kind: DynamicsKind::Spps, process, d, gain: a, warnings: gain_warning(a) })
    }

    pub fn new(kind: DynamicsKind, process: LaplacianProcess, d: usize, a: Option<f64>) -> Result<Self> {
        let a = a.unwrap_or(SADDLE_GAIN_THRESHOLD);
        match kind {
            DynamicsKind::Averaging => Self::averaging(process, d),
            DynamicsKind::PushSum => Self::push_sum(process, d),
            DynamicsKind::SaddlePoint => Self::saddle_point(process, d, a),
            DynamicsKind::Spps => Self::spps(process, d, a),
        }
    }

    pub fn kind(&self) -> DynamicsKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn n(&self) -> usize {
        self.process.n()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn process(&self) -> &LaplacianProcess {
        &self.process
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Average-input gain: `x_bar' = c1 * sum_i u_i`.
    pub fn c1(&self) -> f64 {
        1.0 / self.n() as f64
    }

    pub fn layout(&self) -> AuxLayout {
        match self.kind {
            DynamicsKind::Averaging => AuxLayout::None,
            DynamicsKind::PushSum => AuxLayout::Weights,
            DynamicsKind::SaddlePoint => AuxLayout::Dual,
            DynamicsKind::Spps => AuxLayout::DualWeights,
        }
    }

    pub fn state_len(&self) -> usize {
        let (n, d) = (self.n(), self.d);
        n * d + self.layout().len(n, d)
    }

    /// Builds an initial state from `x(0)` and an optional auxiliary block,
    /// checking membership in the admissible initial set. Missing weights
    /// default to ones and missing dual blocks to zeros.
    pub fn initial_state(&self, x0: &[f64], aux: Option<&[f64]>) -> Result<SystemState> {
        let (n, d) = (self.n(), self.d);
        if x0.len() != n * d {
            return Err(Error::invalid(format!("x(0) has {} entries, expected {}", x0.len(), n * d)));
        }
        let layout = self.layout();
        let aux = match aux {
            Some(a) => a.to_vec(),
            None => match layout {
                AuxLayout::None => vec![],
                AuxLayout::Weights => vec![1.0; n],
                AuxLayout::Dual => vec![0.0; n * d],
                AuxLayout::DualWeights => [vec![0.0; n * d], vec![1.0; n]].concat(),
            },
        };
        if aux.len() != layout.len(n, d) {
            return Err(Error::invalid(format!(
                "auxiliary block has {} entries, expected {}",
                aux.len(),
                layout.len(n, d)
            )));
        }
        let data = [x0, &aux[..]].concat();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("initial state must be finite"));
        }
        if let Some(w) = weights_of(layout, n, d, &data) {
            if w.iter().any(|&wi| wi != 1.0) {
                return Err(Error::invalid(format!("{} dynamics require unit initial weights", self.name())));
            }
        }
        Ok(SystemState { n, d, layout, data })
    }

    /// Writes the derivative at a state with controls `u` under Laplacian `lap`.
    /// Each agent's row reads only the rows of its in-neighbours.
    pub fn derivative(&self, lap: &Laplacian, state: &[f64], u: &[f64], out: &mut [f64]) {
        let (n, d) = (self.n(), self.d);
        let nd = n * d;
        let x = &state[..nd];
        match self.kind {
            DynamicsKind::Averaging => {
                laplacian_rows(lap, x, d, -1.0, &mut out[..nd]);
                add(&mut out[..nd], u);
            }
            DynamicsKind::PushSum => {
                laplacian_rows(lap, x, d, -1.0, &mut out[..nd]);
                add(&mut out[..nd], u);
                laplacian_rows(lap, &state[nd..nd + n], 1, -1.0, &mut out[nd..nd + n]);
            }
            DynamicsKind::SaddlePoint | DynamicsKind::Spps => {
                let z = &state[nd..2 * nd];
                let (ox, rest) = out.split_at_mut(nd);
                // z' = L x, then x' = -a L x - L z + u = -a z' - L z + u.
                laplacian_rows(lap, x, d, 1.0, &mut rest[..nd]);
                laplacian_rows(lap, z, d, -1.0, ox);
                for ((o, lz), ui) in ox.iter_mut().zip(&rest[..nd]).zip(u) {
                    *o += -self.gain * lz + ui;
                }
                if self.kind == DynamicsKind::Spps {
                    laplacian_rows(lap, &state[2 * nd..2 * nd + n], 1, -1.0, &mut rest[nd..nd + n]);
                }
            }
        }
    }

    /// Output `y` of a state.
    pub fn output(&self, state: &[f64], y: &mut [f64]) {
        let (n, d) = (self.n(), self.d);
        let x = &state[..n * d];
        match weights_of(self.layout(), n, d, state) {
            None => y.copy_from_slice(x),
            Some(w) => {
                for i in 0..n {
                    for k in 0..d {
                        y[i * d + k] = x[i * d + k] / w[i];
                    }
                }
            }
        }
    }

    pub fn output_vec(&self, state: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n() * self.d];
        self.output(state, &mut y);
        y
    }

    /// Rejects non-finite states and weights at or below the floor.
    pub fn check_state(&self, t: f64, state: &[f64]) -> Result<()> {
        if let Some(w) = weights_of(self.layout(), self.n(), self.d, state) {
            if let Some((agent, &value)) = w.iter().enumerate().find(|(_, wi)| !(**wi > W_FLOOR)) {
                if value.is_finite() {
                    return Err(Error::DegenerateWeights { t, agent, value });
                }
            }
        }
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure { t, reason: "state became non-finite".into() });
        }
        Ok(())
    }
}

fn check_d(d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::invalid("decision dimension must be positive"));
    }
    Ok(())
}

fn check_gain(a: f64) -> Result<()> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::invalid(format!("gain must be positive, got {a}")));
    }
    Ok(())
}

fn gain_warning(a: f64) -> Vec<String> {
    if a < SADDLE_GAIN_THRESHOLD {
        vec![format!("gain a = {a} is below {SADDLE_GAIN_THRESHOLD}; convergence is not guaranteed")]
    } else {
        vec![]
    }
}

/// `out = scale * L x` over the sparse rows of `L`.
fn laplacian_rows(lap: &Laplacian, x: &[f64], d: usize, scale: f64, out: &mut [f64]) {
    lap.apply(x, d, scale, out);
}

fn add(out: &mut [f64], u: &[f64]) {
    out.iter_mut().zip(u).for_each(|(o, ui)| *o += ui);
}

/// Feedback map `(t, y) -> u`.
pub trait ControlLaw: Send + Sync {
    fn control(&self, t: f64, y: &[f64], u: &mut [f64]) -> Result<()>;

    /// `(n, d)` the law was built for, if it is dimension-specific.
    fn dims(&self) -> Option<(usize, usize)> {
        None
    }

    /// Bound on every row norm of `u(t)`, when known.
    fn row_bound(&self, _t: f64) -> Option<f64> {
        None
    }

    fn describe(&self) -> String;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroInput;

impl ControlLaw for ZeroInput {
    fn control(&self, _t: f64, _y: &[f64], u: &mut [f64]) -> Result<()> {
        u.iter_mut().for_each(|v| *v = 0.0);
        Ok(())
    }

    fn row_bound(&self, _t: f64) -> Option<f64> {
        Some(0.0)
    }

    fn describe(&self) -> String {
        "zero".into()
    }
}

/// Time-invariant open-loop input.
#[derive(Debug, Clone)]
pub struct ConstantInput(pub Vec<f64>);

impl ControlLaw for ConstantInput {
    fn control(&self, _t: f64, _y: &[f64], u: &mut [f64]) -> Result<()> {
        if u.len() != self.0.len() {
            return Err(Error::invalid("constant input has the wrong size"));
        }
        u.copy_from_slice(&self.0);
        Ok(())
    }

    fn describe(&self) -> String {
        "constant".into()
    }
}

/// `u_i(t) = -alpha(t) grad f_i(y_i(t))`.
#[derive(Debug, Clone)]
pub struct GradientFeedback {
    family: ObjectiveFamily,
    schedule: StepSchedule,
    bound: Option<f64>,
    enforce_box: bool,
}

impl GradientFeedback {
    pub fn new(family: ObjectiveFamily, schedule: StepSchedule) -> Result<Self> {
        schedule.validate()?;
        let bound = family.declared_gradient_bound().ok();
        Ok(Self { family, schedule, bound, enforce_box: true })
    }

    /// Skip the validity-box check on outputs.
    pub fn without_box_check(mut self) -> Self {
        self.enforce_box = false;
        self
    }

    pub fn family(&self) -> &ObjectiveFamily {
        &self.family
    }

    pub fn schedule(&self) -> &StepSchedule {
        &self.schedule
    }

    /// Declared gradient bound `K` over the validity box.
    pub fn gradient_bound(&self) -> Option<f64> {
        self.bound
    }
}

impl ControlLaw for GradientFeedback {
    fn control(&self, t: f64, y: &[f64], u: &mut [f64]) -> Result<()> {
        let (n, d) = (self.family.n(), self.family.d());
        if y.len() != n * d || u.len() != n * d {
            return Err(Error::invalid(format!(
                "feedback built for {n}x{d} outputs, got {} entries",
                y.len()
            )));
        }
        if self.enforce_box {
            let region = self.family.validity_box();
            if let Some(agent) = (0..n).find(|&i| !region.contains(&y[i * d..(i + 1) * d])) {
                return Err(Error::OutsideValidityBox { t, agent });
            }
        }
        self.family.stacked_gradient_into(y, u)?;
        let a = self.schedule.at(t);
        u.iter_mut().for_each(|v| *v *= -a);
        Ok(())
    }

    fn dims(&self) -> Option<(usize, usize)> {
        Some((self.family.n(), self.family.d()))
    }

    fn row_bound(&self, t: f64) -> Option<f64> {
        self.bound.map(|k| self.schedule.at(t) * k)
    }

    fn describe(&self) -> String {
        format!("gradient-feedback({:?})", self.family.kind())
    }
}

/// `lambda = exp(-2 a pi_min gamma / n^2)`.
pub fn predicted_spps_rate(a: f64, pi_min: f64, gamma: f64, n: usize) -> Result<f64> {
    if !(a >= SADDLE_GAIN_THRESHOLD) || !(pi_min > 0.0 && pi_min <= 1.0) || !(gamma > 0.0) || n == 0 {
        return Err(Error::invalid(format!(
            "rate needs a >= 5, pi_min in (0, 1], gamma > 0, n >= 1; got a={a}, pi_min={pi_min}, gamma={gamma}, n={n}"
        )));
    }
    Ok((-2.0 * a * pi_min * gamma / (n * n) as f64).exp())
}
