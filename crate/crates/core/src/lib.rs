//! Continuous-time distributed optimization over time-varying directed graphs.
//!
//! Agents run a distributed input-output system whose state average integrates
//! the average control input and whose outputs track that average; closing
//! the loop with `u_i = -alpha(t) grad f_i(y_i)` drives every output to a
//! minimizer of `sum_i f_i`.
//!
//! - [`graphnet`]: directed graphs and piecewise-constant Laplacian processes
//! - [`flowcore`]: transition matrices and ergodicity classification
//! - [`objectives`]: per-agent convex objectives and optimizer oracles
//! - [`schedules`]: step-size schedules
//! - [`dynamics`]: averaging, push-sum, saddle-point and saddle-point/push-sum trackers
//! - [`simulate`]: RK4 trajectory integration and the two-agent closed form
//! - [`diagnostics`]: numerical checks of the convergence inequalities
//! - [`harness`]: experiment configs, scenario presets, sweeps and artifacts

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod flowcore;
pub mod graphnet;
pub mod harness;
pub mod linalg;
pub mod objectives;
pub mod schedules;
pub mod simulate;

pub use error::{Error, Result};
