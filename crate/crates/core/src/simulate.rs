//! Fixed-step RK4 integration of a flow-tracker system under a feedback law,
//! and the closed-form solution of the two-agent example.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dynamics::{AuxLayout, ControlLaw, FlowTrackerSystem, SystemState};
use crate::error::{Error, Result};
use crate::graphnet::is_multiple;
use crate::linalg::row_average;

pub const DEFAULT_RECORD_INTERVAL: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrateOptions {
    pub t_end: f64,
    pub h: f64,
    /// Time between recorded samples; must be a multiple of `h`.
    pub record_every: f64,
}

impl IntegrateOptions {
    pub fn new(t_end: f64, h: f64) -> Self {
        Self { t_end, h, record_every: DEFAULT_RECORD_INTERVAL.max(h) }
    }

    /// Record every step.
    pub fn full_resolution(mut self) -> Self {
        self.record_every = self.h;
        self
    }

    pub fn recording(mut self, record_every: f64) -> Self {
        self.record_every = record_every;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub system: String,
    pub n: usize,
    pub d: usize,
    pub layout: AuxLayout,
    pub h: f64,
    pub record_every: f64,
    pub t_end: f64,
    pub control: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub process: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub state: Vec<f64>,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub xbar: Vec<f64>,
}

impl Sample {
    pub fn x(&self, n: usize, d: usize) -> &[f64] {
        &self.state[..n * d]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub meta: TrajectoryMeta,
    pub samples: Vec<Sample>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectories hold at least the initial sample")
    }

    /// Spacing of the recorded grid.
    pub fn interval(&self) -> f64 {
        self.meta.record_every
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        let (n, d) = (self.meta.n, self.meta.d);
        let nd = n * d;
        let mut header = vec!["t".to_string()];
        header.extend((1..=nd).map(|k| format!("x_{k}")));
        header.extend(self.meta.layout.labels(n, d));
        header.extend((1..=nd).map(|k| format!("y_{k}")));
        header.extend((1..=nd).map(|k| format!("u_{k}")));
        header.extend((1..=d).map(|k| format!("xbar_{k}")));
        writeln!(w, "{}", header.join(","))?;
        let mut line = String::new();
        for s in &self.samples {
            line.clear();
            line.push_str(&format!("{:.16e}", s.t));
            for v in s.state.iter().chain(&s.y).chain(&s.u).chain(&s.xbar) {
                line.push_str(&format!(",{v:.16e}"));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// One JSON object per sample, preceded by a metadata line.
    pub fn write_jsonl(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{}", serde_json::to_string(&self.meta)?)?;
        for s in &self.samples {
            writeln!(w, "{}", serde_json::to_string(s)?)?;
        }
        Ok(())
    }
}

/// Integrates `sys` from `init` with classical RK4, evaluating the control
/// law at every stage. The Laplacian used for a step is the piece active on
/// that step, so switching times must sit on the step grid.
pub fn integrate(
    sys: &FlowTrackerSystem,
    law: &dyn ControlLaw,
    init: &SystemState,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    let (n, d) = (sys.n(), sys.d());
    let IntegrateOptions { t_end, h, record_every } = *opts;
    if !(h > 0.0 && h.is_finite()) || !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::invalid("t_end and h must be positive"));
    }
    let process = sys.process();
    if t_end > process.horizon() * (1.0 + 1e-12) {
        return Err(Error::invalid(format!(
            "t_end {t_end} exceeds the process horizon {}",
            process.horizon()
        )));
    }
    process.check_aligned(h)?;
    if !(record_every >= h) || !is_multiple(record_every, h) {
        return Err(Error::invalid(format!("record interval {record_every} is not a multiple of h = {h}")));
    }
    if !is_multiple(t_end, h) {
        return Err(Error::invalid(format!("t_end {t_end} is not a multiple of h = {h}")));
    }
    if let Some(dims) = law.dims() {
        if dims != (n, d) {
            return Err(Error::invalid(format!("control law built for {dims:?}, system is {:?}", (n, d))));
        }
    }
    // Re-run the admissibility check on the supplied state.
    let init = sys.initial_state(&init.data[..init.data.len().min(n * d)], Some(init.aux()))
        .map_err(|e| match e {
            Error::InvalidInput(m) => Error::invalid(format!("initial condition not admissible: {m}")),
            other => other,
        })?;
    if init.layout != sys.layout() {
        return Err(Error::invalid("initial state layout does not match the system"));
    }

    let steps = (t_end / h).round() as usize;
    let stride = (record_every / h).round() as usize;
    let len = sys.state_len();
    let nd = n * d;
    let mut state = init.data.clone();
    let mut stage = vec![0.0; len];
    let mut k = [vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len]];
    let mut y = vec![0.0; nd];
    let mut u = vec![0.0; nd];

    let mut samples = Vec::with_capacity(steps / stride + 2);
    let record = |t: f64, state: &[f64], samples: &mut Vec<Sample>| -> Result<()> {
        let y = sys.output_vec(state);
        let mut u = vec![0.0; nd];
        law.control(t, &y, &mut u)?;
        samples.push(Sample { t, state: state.to_vec(), y, u, xbar: row_average(&state[..nd], n, d) });
        Ok(())
    };
    sys.check_state(0.0, &state)?;
    record(0.0, &state, &mut samples)?;

    for step in 0..steps {
        let t = step as f64 * h;
        let lap = process.at(t + 0.5 * h);
        let offsets = [0.0, 0.5 * h, 0.5 * h, h];
        for s in 0..4 {
            let ts = t + offsets[s];
            let src: &[f64] = if s == 0 {
                &state
            } else {
                for ((st, x), kp) in stage.iter_mut().zip(&state).zip(&k[s - 1]) {
                    *st = x + offsets[s] * kp;
                }
                sys.check_state(ts, &stage)?;
                &stage
            };
            sys.output(src, &mut y);
            law.control(ts, &y, &mut u)?;
            sys.derivative(lap, src, &u, &mut k[s]);
        }
        for (i, x) in state.iter_mut().enumerate() {
            *x += h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
        }
        let t_next = (step + 1) as f64 * h;
        sys.check_state(t_next, &state)?;
        if (step + 1) % stride == 0 || step + 1 == steps {
            record(t_next, &state, &mut samples)?;
        }
    }

    Ok(Trajectory {
        meta: TrajectoryMeta {
            system: sys.name().to_string(),
            n,
            d,
            layout: sys.layout(),
            h,
            record_every,
            t_end,
            control: law.describe(),
            seed: None,
            schedule: None,
            family: None,
            process: None,
        },
        samples,
    })
}

/// Exact solution of `x' = -L x - alpha (x - c)` with `L = [[1, -1], [-1, 1]]`
/// and `c = (1, -1)`: the averaging dynamics of the two-agent pair under a
/// constant step.
pub fn closed_form_two_agent(alpha: f64, x0: [f64; 2], t: f64) -> Result<[f64; 2]> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
    }
    let limit = alpha / (2.0 + alpha);
    let x_inf = [limit, -limit];
    // Coordinates along (1, 1) and (1, -1), eigenvalues -alpha and -2-alpha.
    let e0 = [x0[0] - x_inf[0], x0[1] - x_inf[1]];
    let sum = 0.5 * (e0[0] + e0[1]) * (-alpha * t).exp();
    let diff = 0.5 * (e0[0] - e0[1]) * (-(2.0 + alpha) * t).exp();
    Ok([x_inf[0] + sum + diff, x_inf[1] + sum - diff])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitEstimate {
    pub y: Vec<f64>,
    pub xbar: Vec<f64>,
    /// Largest deviation of a tail sample from the tail mean.
    pub residual: f64,
    pub tail_samples: usize,
}

/// Averages `y` and `x_bar` over the final `tail_fraction` of the run.
pub fn estimate_limit(traj: &Trajectory, tail_fraction: f64) -> Result<LimitEstimate> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::invalid("tail fraction must lie in (0, 1]"));
    }
    let t_last = traj.last().t;
    let cutoff = t_last * (1.0 - tail_fraction);
    let tail: Vec<&Sample> = traj.samples.iter().filter(|s| s.t >= cutoff - 1e-12).collect();
    if tail.len() < 10 {
        return Err(Error::invalid(format!("need at least 10 tail samples, have {}", tail.len())));
    }
    let mean = |pick: fn(&Sample) -> &[f64]| -> Vec<f64> {
        let mut m = vec![0.0; pick(tail[0]).len()];
        for s in &tail {
            m.iter_mut().zip(pick(s)).for_each(|(a, v)| *a += v);
        }
        m.iter_mut().for_each(|a| *a /= tail.len() as f64);
        m
    };
    let y = mean(|s| &s.y);
    let xbar = mean(|s| &s.xbar);
    let residual = tail
        .iter()
        .flat_map(|s| {
            s.y.iter().zip(&y).chain(s.xbar.iter().zip(&xbar)).map(|(a, b)| (a - b).abs())
        })
        .fold(0.0, f64::max);
    Ok(LimitEstimate { y, xbar, residual, tail_samples: tail.len() })
}
