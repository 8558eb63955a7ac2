//! Step-size schedules `alpha(t)` and their integrability checks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default truncation horizon for integral checks.
pub const DEFAULT_T_MAX: f64 = 1e3;
/// Default composite-Simpson step.
pub const DEFAULT_QUAD_STEP: f64 = 1e-2;
/// Absolute slack in [`lemma_aux_check`].
pub const LEMMA_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StepSchedule {
    /// `a0 / (1 + t)^p`
    PowerLaw { a0: f64, p: f64 },
    Constant { a0: f64 },
    /// Linear interpolation between `(t, value)` knots, then
    /// `value_last * ((1 + t_last) / (1 + t))^tail_p`.
    CustomPiecewise {
        knots: Vec<(f64, f64)>,
        #[serde(default)]
        tail_p: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assumption2Report {
    pub nonincreasing: bool,
    pub integral_divergent: bool,
    pub square_integrable: bool,
    pub valid: bool,
    /// Flags were estimated numerically rather than derived.
    pub heuristic: bool,
    /// `int_{T_max}^inf alpha^2`, when known in closed form.
    pub square_tail_bound: Option<f64>,
}

impl StepSchedule {
    pub fn power_law(a0: f64, p: f64) -> Result<Self> {
        let s = Self::PowerLaw { a0, p };
        s.validate()?;
        Ok(s)
    }

    pub fn constant(a0: f64) -> Result<Self> {
        let s = Self::Constant { a0 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let in_range = |a: f64| a > 0.0 && a <= 1.0;
        match self {
            Self::PowerLaw { a0, p } => {
                if !in_range(*a0) || !(*p >= 0.0 && p.is_finite()) {
                    return Err(Error::invalid(format!("power law needs a0 in (0, 1] and p >= 0, got a0={a0}, p={p}")));
                }
            }
            Self::Constant { a0 } => {
                if !in_range(*a0) {
                    return Err(Error::invalid(format!("constant step must lie in (0, 1], got {a0}")));
                }
            }
            Self::CustomPiecewise { knots, tail_p } => {
                if knots.is_empty() || knots[0].0 != 0.0 {
                    return Err(Error::invalid("piecewise schedule needs a first knot at t=0"));
                }
                if knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                    return Err(Error::invalid("knot times must be strictly increasing"));
                }
                if knots.iter().any(|k| !in_range(k.1)) {
                    return Err(Error::invalid("knot values must lie in (0, 1]"));
                }
                if !(*tail_p >= 0.0 && tail_p.is_finite()) {
                    return Err(Error::invalid("tail exponent must be nonnegative"));
                }
            }
        }
        Ok(())
    }

    /// `alpha(t)`; errors for negative `t`.
    pub fn evaluate(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::invalid(format!("step size queried at negative time {t}")));
        }
        Ok(self.at(t))
    }

    /// `alpha(t)` for `t >= 0` without the range check (used in hot loops).
    pub fn at(&self, t: f64) -> f64 {
        match self {
            Self::PowerLaw { a0, p } => {
                if *p == 0.0 {
                    *a0
                } else {
                    a0 / (1.0 + t).powf(*p)
                }
            }
            Self::Constant { a0 } => *a0,
            Self::CustomPiecewise { knots, tail_p } => {
                let k = knots.partition_point(|k| k.0 <= t);
                if k >= knots.len() {
                    let (tl, vl) = knots[knots.len() - 1];
                    return vl * ((1.0 + tl) / (1.0 + t)).powf(*tail_p);
                }
                let (t0, v0) = knots[k - 1];
                let (t1, v1) = knots[k];
                v0 + (v1 - v0) * (t - t0) / (t1 - t0)
            }
        }
    }

    pub fn check_assumption2(&self) -> Assumption2Report {
        match self {
            Self::PowerLaw { a0, p } => {
                let square_integrable = *p > 0.5;
                Assumption2Report {
                    nonincreasing: true,
                    integral_divergent: *p <= 1.0,
                    square_integrable,
                    valid: *p > 0.5 && *p <= 1.0,
                    heuristic: false,
                    square_tail_bound: square_integrable
                        .then(|| a0 * a0 * (1.0 + DEFAULT_T_MAX).powf(1.0 - 2.0 * p) / (2.0 * p - 1.0)),
                }
            }
            Self::Constant { .. } => Assumption2Report {
                nonincreasing: true,
                integral_divergent: true,
                square_integrable: false,
                valid: false,
                heuristic: false,
                square_tail_bound: None,
            },
            Self::CustomPiecewise { knots, .. } => {
                let nonincreasing = knots.windows(2).all(|w| w[1].1 <= w[0].1);
                // Integrals over dyadic blocks [2^k, 2^(k+1)]: a convergent
                // tail shows geometrically shrinking block contributions.
                let blocks = |square: bool| -> Vec<f64> {
                    (0..30)
                        .map(|k| {
                            let a = 2f64.powi(k);
                            let f = |t: f64| if square { self.at(t).powi(2) } else { self.at(t) };
                            simpson(f, a, 2.0 * a, 512)
                        })
                        .collect()
                };
                let converges = |b: &[f64]| {
                    let n = b.len();
                    b[n - 1] < 1e-6 && b[n - 1] / b[n - 2] < 0.95
                };
                let integral_divergent = !converges(&blocks(false));
                let square_integrable = converges(&blocks(true));
                Assumption2Report {
                    nonincreasing,
                    integral_divergent,
                    square_integrable,
                    valid: nonincreasing && integral_divergent && square_integrable,
                    heuristic: true,
                    square_tail_bound: None,
                }
            }
        }
    }

    /// `int_a^b alpha(t)^2 dt` by composite Simpson.
    pub fn square_integral(&self, a: f64, b: f64, step: f64) -> f64 {
        let panels = (((b - a) / step).ceil() as usize).max(2);
        simpson(|t| self.at(t).powi(2), a, b, panels)
    }
}

/// Composite Simpson over `[a, b]` with `panels` subintervals (rounded up to even).
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let m = panels.max(2) + panels % 2;
    let h = (b - a) / m as f64;
    let mut acc = f(a) + f(b);
    for k in 1..m {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + k as f64 * h);
    }
    acc * h / 3.0
}

/// Composite Simpson over uniformly spaced samples (odd count; a trailing
/// interval left over by an even count is closed with the trapezoid rule).
pub fn simpson_samples(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let last = if n % 2 == 1 { n - 1 } else { n - 2 };
    let mut acc = 0.0;
    if last >= 2 {
        acc += values[0] + values[last];
        for (k, v) in values.iter().enumerate().take(last).skip(1) {
            acc += if k % 2 == 1 { 4.0 } else { 2.0 } * v;
        }
        acc *= h / 3.0;
    }
    if last < n - 1 {
        acc += 0.5 * h * (values[n - 2] + values[n - 1]);
    }
    acc
}

/// Nonnegative function tabulated on a uniform grid from `t = 0`, evaluated
/// by linear interpolation (held constant past the end).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledFunction {
    pub step: f64,
    pub values: Vec<f64>,
}

impl SampledFunction {
    pub fn new(step: f64, values: Vec<f64>) -> Result<Self> {
        if !(step > 0.0) || values.is_empty() {
            return Err(Error::invalid("sampled function needs a positive step and samples"));
        }
        if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::invalid("sampled function must be finite and nonnegative"));
        }
        Ok(Self { step, values })
    }

    pub fn sample(f: impl Fn(f64) -> f64, step: f64, t_max: f64) -> Result<Self> {
        let count = (t_max / step).round() as usize + 1;
        Self::new(step, (0..count).map(|k| f(k as f64 * step)).collect())
    }

    pub fn zero(step: f64, t_max: f64) -> Self {
        Self::sample(|_| 0.0, step, t_max).expect("zero is a valid table")
    }

    pub fn at(&self, t: f64) -> f64 {
        let x = t / self.step;
        let k = x.floor();
        if k < 0.0 {
            return self.values[0];
        }
        let k = k as usize;
        if k + 1 >= self.values.len() {
            return *self.values.last().unwrap();
        }
        let frac = x - k as f64;
        self.values[k] * (1.0 - frac) + self.values[k + 1] * frac
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaAuxCheck {
    /// `int_0^T alpha(t) int_0^t lambda^(t-s) beta(s) ds dt`
    pub lhs: f64,
    /// `(1 - lambda) / |log lambda| * int_0^T alpha beta`
    pub rhs: f64,
    pub holds: bool,
    /// `int_0^T alpha beta / |log lambda|`, the bound Tonelli's theorem gives
    /// after exchanging the integrals.
    pub tonelli_rhs: f64,
    pub holds_tonelli: bool,
    pub tolerance: f64,
}

pub fn lemma_aux_check(
    alpha: &StepSchedule,
    beta: &SampledFunction,
    lambda: f64,
    t_max: f64,
    step: f64,
) -> Result<LemmaAuxCheck> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::invalid(format!("lambda must lie in (0, 1), got {lambda}")));
    }
    if !(t_max > 0.0 && step > 0.0) {
        return Err(Error::invalid("t_max and step must be positive"));
    }
    let count = ((t_max / step).round() as usize).max(2);
    let h = t_max / count as f64;
    let decay = lambda.powf(h);
    let half_decay = lambda.powf(h / 2.0);
    // inner(t) = int_0^t lambda^(t-s) beta(s) ds, advanced one cell at a time
    // with Simpson on each cell.
    let mut inner = vec![0.0; count + 1];
    for k in 1..=count {
        let a = (k - 1) as f64 * h;
        let cell = h / 6.0 * (decay * beta.at(a) + 4.0 * half_decay * beta.at(a + h / 2.0) + beta.at(a + h));
        inner[k] = decay * inner[k - 1] + cell;
    }
    let outer: Vec<f64> = (0..=count).map(|k| alpha.at(k as f64 * h) * inner[k]).collect();
    let cross: Vec<f64> = (0..=count).map(|k| {
        let t = k as f64 * h;
        alpha.at(t) * beta.at(t)
    }).collect();
    let lhs = simpson_samples(&outer, h);
    let inner_product = simpson_samples(&cross, h);
    let log_l = lambda.ln().abs();
    let rhs = (1.0 - lambda) / log_l * inner_product;
    let tonelli_rhs = inner_product / log_l;
    Ok(LemmaAuxCheck {
        lhs,
        rhs,
        holds: lhs <= rhs + LEMMA_TOL,
        tonelli_rhs,
        holds_tonelli: lhs <= tonelli_rhs + LEMMA_TOL,
        tolerance: LEMMA_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn evaluate_examples() {
        let p = StepSchedule::power_law(1.0, 1.0).unwrap();
        assert_eq!(p.evaluate(0.0).unwrap(), 1.0);
        assert!((p.evaluate(9.0).unwrap() - 0.1).abs() < 1e-15);
        let c = StepSchedule::constant(0.5).unwrap();
        assert_eq!(c.evaluate(123.0).unwrap(), 0.5);
        assert!(c.evaluate(-1.0).is_err());
        assert!(StepSchedule::constant(1.5).is_err());
        assert!(StepSchedule::power_law(0.0, 1.0).is_err());
    }

    #[test]
    fn piecewise_interpolates_and_decays() {
        let s = StepSchedule::CustomPiecewise { knots: vec![(0.0, 1.0), (2.0, 0.5)], tail_p: 1.0 };
        s.validate().unwrap();
        assert_eq!(s.at(1.0), 0.75);
        assert!((s.at(8.0) - 0.5 * 3.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn assumption2_flags() {
        assert!(StepSchedule::power_law(1.0, 1.0).unwrap().check_assumption2().valid);
        let r = StepSchedule::power_law(1.0, 0.4).unwrap().check_assumption2();
        assert!(!r.valid && !r.square_integrable && r.integral_divergent);
        let r = StepSchedule::power_law(1.0, 1.5).unwrap().check_assumption2();
        assert!(!r.valid && !r.integral_divergent);
        let r = StepSchedule::constant(0.5).unwrap().check_assumption2();
        assert!(r.integral_divergent && !r.square_integrable && !r.valid && !r.heuristic);
    }

    #[test]
    fn piecewise_flags_are_heuristic() {
        let good = StepSchedule::CustomPiecewise { knots: vec![(0.0, 1.0), (4.0, 0.5)], tail_p: 1.0 };
        let r = good.check_assumption2();
        assert!(r.heuristic && r.valid, "{r:?}");
        let held = StepSchedule::CustomPiecewise { knots: vec![(0.0, 1.0), (4.0, 0.5)], tail_p: 0.0 };
        assert!(!held.check_assumption2().square_integrable);
        let fast = StepSchedule::CustomPiecewise { knots: vec![(0.0, 1.0)], tail_p: 2.0 };
        let r = fast.check_assumption2();
        assert!(!r.integral_divergent && r.square_integrable);
        let rising = StepSchedule::CustomPiecewise { knots: vec![(0.0, 0.5), (1.0, 0.8)], tail_p: 1.0 };
        assert!(!rising.check_assumption2().nonincreasing);
    }

    /// Closed forms for alpha = beta = e^{-t}, lambda = 1/2 on [0, inf):
    /// lhs = (1/(1+ln 2) - 1/2) / (1 - ln 2), rhs = (1/2)/ln 2 * 1/2.
    #[test]
    fn lemma_worked_example() {
        let ln2 = 2f64.ln();
        let lhs_exact = (1.0 / (1.0 + ln2) - 0.5) / (1.0 - ln2);
        let rhs_exact = 0.5 / ln2 * 0.5;
        // e^{-t} as a fine piecewise-linear table.
        let knots: Vec<(f64, f64)> = (0..=4000).map(|k| {
            let t = k as f64 * 0.01;
            (t, (-t).exp())
        }).collect();
        let alpha = StepSchedule::CustomPiecewise { knots, tail_p: 0.0 };
        let beta = SampledFunction::sample(|t| (-t).exp(), 0.005, 40.0).unwrap();
        let r = lemma_aux_check(&alpha, &beta, 0.5, 40.0, 1e-2).unwrap();
        assert!((r.lhs - lhs_exact).abs() < 1e-3, "{}", r.lhs);
        assert!((r.rhs - rhs_exact).abs() < 1e-3, "{}", r.rhs);
        assert!(r.holds);
    }

    #[test]
    fn lemma_zero_beta() {
        let alpha = StepSchedule::power_law(1.0, 1.0).unwrap();
        let r = lemma_aux_check(&alpha, &SampledFunction::zero(0.01, 10.0), 0.3, 10.0, 1e-2).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
        assert!(r.holds);
        assert!(lemma_aux_check(&alpha, &SampledFunction::zero(0.01, 10.0), 1.0, 10.0, 1e-2).is_err());
    }

    /// alpha = 1, beta = e^{-t}, lambda = 1/2: exchanging the integrals gives
    /// lhs -> 1/ln 2 while the stated bound is (1/2)/ln 2, so the stated
    /// inequality fails by a factor 1/(1 - lambda); the Tonelli bound holds.
    #[test]
    fn lemma_constant_alpha() {
        let alpha = StepSchedule::constant(1.0).unwrap();
        let beta = SampledFunction::sample(|t| (-t).exp(), 0.005, 40.0).unwrap();
        let r = lemma_aux_check(&alpha, &beta, 0.5, 40.0, 1e-2).unwrap();
        assert!((r.lhs - 1.0 / 2f64.ln()).abs() < 1e-3);
        assert!((r.rhs - 0.5 / 2f64.ln()).abs() < 1e-3);
        assert!(!r.holds);
        assert!(r.holds_tonelli);
    }

    #[test]
    fn simpson_rules() {
        assert!((simpson(|t| t * t, 0.0, 3.0, 6) - 9.0).abs() < 1e-12);
        let v: Vec<f64> = (0..=10).map(|k| (k as f64 * 0.1).powi(3)).collect();
        assert!((simpson_samples(&v, 0.1) - 0.25).abs() < 1e-12);
        let v: Vec<f64> = (0..=9).map(|k| k as f64 * 0.1).collect();
        assert!((simpson_samples(&v, 0.1) - 0.405).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn valid_schedules_are_nonincreasing(a0 in 0.01f64..=1.0, p in 0.5f64..=1.0, t1 in 0.0f64..1e3, dt in 0.0f64..1e3) {
            let s = StepSchedule::power_law(a0, p).unwrap();
            let (x, y) = (s.evaluate(t1).unwrap(), s.evaluate(t1 + dt).unwrap());
            prop_assert!(x >= y);
            prop_assert!(y > 0.0 && x <= 1.0);
        }

        #[test]
        fn square_integral_cauchy_matches_flag(p in 0.05f64..1.5) {
            let s = StepSchedule::power_law(1.0, p).unwrap();
            let flag = s.check_assumption2().square_integrable;
            // Closed-form integral of alpha^2 over [T, 10T]; it shrinks
            // from decade to decade exactly when the full integral converges.
            let q = 2.0 * p;
            let decade = |t: f64| {
                if (q - 1.0).abs() < 1e-12 {
                    ((1.0 + 10.0 * t) / (1.0 + t)).ln()
                } else {
                    ((1.0 + 10.0 * t).powf(1.0 - q) - (1.0 + t).powf(1.0 - q)) / (1.0 - q)
                }
            };
            let shrinking = decade(1e7) < decade(1e6);
            prop_assert_eq!(flag, shrinking);
        }
    }
}
