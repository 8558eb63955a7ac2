//! Per-agent convex objectives `f_i`, the global objective `F = sum_i f_i`,
//! gradient bounds and optimizer oracles.
//!
//! Points are row vectors in `R^d`; stacked points are row-major `n x d` slices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::row_norm;

/// Gradient-norm tolerance of the centralized descent oracle.
pub const ORACLE_TOL: f64 = 1e-12;

const ORACLE_MAX_ITERS: usize = 5_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum LocalObjective {
    /// `curvature / 2 * ||x - center||^2`
    Quadratic { center: Vec<f64>, curvature: f64 },
    /// Quadratic inside `||x - center|| <= radius`, linear outside, so the
    /// gradient norm saturates at `curvature * radius`.
    Huber { center: Vec<f64>, curvature: f64, radius: f64 },
    /// Scalar `log(1 + exp(slope * (x - offset)))`.
    Logistic { slope: f64, offset: f64 },
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LocalObjective {
    pub fn dim(&self) -> usize {
        match self {
            Self::Quadratic { center, .. } | Self::Huber { center, .. } => center.len(),
            Self::Logistic { .. } => 1,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            Self::Quadratic { center, curvature } => {
                *curvature > 0.0 && !center.is_empty() && center.iter().all(|c| c.is_finite())
            }
            Self::Huber { center, curvature, radius } => {
                *curvature > 0.0
                    && *radius > 0.0
                    && !center.is_empty()
                    && center.iter().all(|c| c.is_finite())
            }
            Self::Logistic { slope, offset } => *slope != 0.0 && slope.is_finite() && offset.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid local objective {self:?}")))
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Self::Quadratic { center, curvature } => {
                0.5 * curvature * x.iter().zip(center).map(|(a, c)| (a - c).powi(2)).sum::<f64>()
            }
            Self::Huber { center, curvature, radius } => {
                let r = x.iter().zip(center).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt();
                if r <= *radius {
                    0.5 * curvature * r * r
                } else {
                    curvature * radius * (r - 0.5 * radius)
                }
            }
            Self::Logistic { slope, offset } => softplus(slope * (x[0] - offset)),
        }
    }

    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Self::Quadratic { center, curvature } => {
                for ((o, a), c) in out.iter_mut().zip(x).zip(center) {
                    *o = curvature * (a - c);
                }
            }
            Self::Huber { center, curvature, radius } => {
                let r = x.iter().zip(center).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt();
                let scale = if r <= *radius { *curvature } else { curvature * radius / r };
                for ((o, a), c) in out.iter_mut().zip(x).zip(center) {
                    *o = scale * (a - c);
                }
            }
            Self::Logistic { slope, offset } => {
                out[0] = slope * sigmoid(slope * (x[0] - offset));
            }
        }
    }

    /// Global bound on `||grad f||`, when one exists.
    pub fn global_gradient_bound(&self) -> Option<f64> {
        match self {
            Self::Quadratic { .. } => None,
            Self::Huber { curvature, radius, .. } => Some(curvature * radius),
            Self::Logistic { slope, .. } => Some(slope.abs()),
        }
    }

    /// Lipschitz constant of the gradient.
    fn smoothness(&self) -> f64 {
        match self {
            Self::Quadratic { curvature, .. } | Self::Huber { curvature, .. } => *curvature,
            Self::Logistic { slope, .. } => slope * slope / 4.0,
        }
    }
}

/// Axis-aligned box `[lo, hi]`; infinite bounds allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxRegion {
    pub fn cube(d: usize, half_width: f64) -> Self {
        Self { lo: vec![-half_width; d], hi: vec![half_width; d] }
    }

    pub fn unbounded(d: usize) -> Self {
        Self { lo: vec![f64::NEG_INFINITY; d], hi: vec![f64::INFINITY; d] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.iter().chain(&self.hi).all(|v| v.is_finite())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.lo).zip(&self.hi).all(|((v, lo), hi)| *v >= *lo && *v <= *hi)
    }

    fn validate(&self, d: usize) -> Result<()> {
        if self.lo.len() != d || self.hi.len() != d {
            return Err(Error::invalid(format!("box must have dimension {d}")));
        }
        if self.lo.iter().zip(&self.hi).any(|(lo, hi)| !(lo <= hi)) {
            return Err(Error::invalid("box is empty"));
        }
        Ok(())
    }

    /// Largest distance from `c` to a point of the box (attained at a corner).
    fn farthest_distance(&self, c: &[f64]) -> f64 {
        c.iter()
            .zip(&self.lo)
            .zip(&self.hi)
            .map(|((ck, lo), hi)| (ck - lo).abs().max((hi - ck).abs()).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    TwoAgentPaperPair,
    HuberizedQuadratic,
    LogisticScalar,
    CustomTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveFamily {
    kind: FamilyKind,
    d: usize,
    agents: Vec<LocalObjective>,
    validity_box: BoxRegion,
    /// Supplied minimizer for custom tables.
    oracle: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub x_star: Vec<f64>,
    pub f_star: f64,
}

impl ObjectiveFamily {
    fn build(kind: FamilyKind, agents: Vec<LocalObjective>, validity_box: Option<BoxRegion>) -> Result<Self> {
        if agents.is_empty() {
            return Err(Error::invalid("family needs at least one agent"));
        }
        let d = agents[0].dim();
        for a in &agents {
            a.validate()?;
            if a.dim() != d {
                return Err(Error::invalid("all agents must share the decision dimension"));
            }
        }
        let validity_box = validity_box.unwrap_or_else(|| BoxRegion::unbounded(d));
        validity_box.validate(d)?;
        Ok(Self { kind, d, agents, validity_box, oracle: None })
    }

    /// `f_1 = (x - 1)^2 / 2`, `f_2 = (x + 1)^2 / 2` on the box `[-2, 2]`.
    pub fn paper_pair() -> Self {
        let q = |c: f64| LocalObjective::Quadratic { center: vec![c], curvature: 1.0 };
        Self::build(FamilyKind::TwoAgentPaperPair, vec![q(1.0), q(-1.0)], Some(BoxRegion::cube(1, 2.0)))
            .expect("static family")
    }

    pub fn huberized(centers: Vec<Vec<f64>>, curvature: f64, radius: f64) -> Result<Self> {
        let agents = centers
            .into_iter()
            .map(|center| LocalObjective::Huber { center, curvature, radius })
            .collect();
        Self::build(FamilyKind::HuberizedQuadratic, agents, None)
    }

    /// Centers drawn uniformly from `[-spread, spread]^d`.
    pub fn random_huberized(n: usize, d: usize, spread: f64, curvature: f64, radius: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-spread..=spread)).collect())
            .collect();
        Self::huberized(centers, curvature, radius)
    }

    pub fn logistic(slopes: &[f64], offsets: &[f64]) -> Result<Self> {
        if slopes.len() != offsets.len() {
            return Err(Error::invalid("slopes and offsets must have equal length"));
        }
        if !(slopes.iter().any(|&s| s > 0.0) && slopes.iter().any(|&s| s < 0.0)) {
            return Err(Error::invalid("logistic family needs slopes of both signs to have a minimizer"));
        }
        let agents = slopes
            .iter()
            .zip(offsets)
            .map(|(&slope, &offset)| LocalObjective::Logistic { slope, offset })
            .collect();
        Self::build(FamilyKind::LogisticScalar, agents, None)
    }

    pub fn custom(agents: Vec<LocalObjective>, validity_box: Option<BoxRegion>, oracle: Option<Vec<f64>>) -> Result<Self> {
        let mut fam = Self::build(FamilyKind::CustomTable, agents, validity_box)?;
        if let Some(x) = &oracle {
            if x.len() != fam.d {
                return Err(Error::invalid("oracle point has the wrong dimension"));
            }
        }
        fam.oracle = oracle;
        Ok(fam)
    }

    pub fn with_box(mut self, validity_box: BoxRegion) -> Result<Self> {
        validity_box.validate(self.d)?;
        self.validity_box = validity_box;
        Ok(self)
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn agents(&self) -> &[LocalObjective] {
        &self.agents
    }

    pub fn validity_box(&self) -> &BoxRegion {
        &self.validity_box
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::invalid(format!("point has dimension {}, expected {}", x.len(), self.d)));
        }
        Ok(())
    }

    /// `F(x) = sum_i f_i(x)`.
    pub fn global_objective(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        Ok(self.agents.iter().map(|a| a.value(x)).sum())
    }

    pub fn global_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let mut g = vec![0.0; self.d];
        let mut buf = vec![0.0; self.d];
        for a in &self.agents {
            a.gradient(x, &mut buf);
            g.iter_mut().zip(&buf).for_each(|(gi, b)| *gi += b);
        }
        Ok(g)
    }

    pub fn local_value(&self, i: usize, x: &[f64]) -> f64 {
        self.agents[i].value(x)
    }

    /// `sum_i f_i(x_i)` for a stacked point.
    pub fn stacked_value(&self, points: &[f64]) -> Result<f64> {
        self.check_stacked(points)?;
        Ok(self
            .agents
            .iter()
            .enumerate()
            .map(|(i, a)| a.value(&points[i * self.d..(i + 1) * self.d]))
            .sum())
    }

    fn check_stacked(&self, points: &[f64]) -> Result<()> {
        if points.len() != self.n() * self.d {
            return Err(Error::invalid(format!(
                "stacked point has {} entries, expected {}x{}",
                points.len(),
                self.n(),
                self.d
            )));
        }
        Ok(())
    }

    /// Row `i` of `out` becomes `grad f_i(row i of points)`.
    pub fn stacked_gradient_into(&self, points: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_stacked(points)?;
        let d = self.d;
        for (i, a) in self.agents.iter().enumerate() {
            a.gradient(&points[i * d..(i + 1) * d], &mut out[i * d..(i + 1) * d]);
        }
        Ok(())
    }

    pub fn stacked_gradient(&self, points: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; points.len()];
        self.stacked_gradient_into(points, &mut out)?;
        Ok(out)
    }

    /// `K` with `||grad f_i(x)|| <= K` for every agent and every `x` in `region`.
    pub fn gradient_bound(&self, region: &BoxRegion) -> Result<f64> {
        region.validate(self.d)?;
        let mut k: f64 = 0.0;
        for a in &self.agents {
            let bound = match (a.global_gradient_bound(), a) {
                (Some(b), _) => b,
                (None, LocalObjective::Quadratic { center, curvature }) => {
                    if !region.is_bounded() {
                        return Err(Error::capability(
                            "quadratic objectives have no gradient bound on an unbounded box",
                        ));
                    }
                    curvature * region.farthest_distance(center)
                }
                (None, _) => unreachable!("only quadratics lack a global bound"),
            };
            k = k.max(bound);
        }
        Ok(k)
    }

    /// Gradient bound over the family's own validity box.
    pub fn declared_gradient_bound(&self) -> Result<f64> {
        self.gradient_bound(&self.validity_box)
    }

    /// A minimizer of `F` and the optimal value.
    pub fn optimizer_oracle(&self) -> Result<Optimum> {
        match self.kind {
            FamilyKind::TwoAgentPaperPair => Ok(Optimum { x_star: vec![0.0], f_star: 1.0 }),
            FamilyKind::CustomTable => {
                let x = self.oracle.clone().ok_or_else(|| {
                    Error::capability("custom-table family carries no oracle point")
                })?;
                let g = row_norm(&self.global_gradient(&x)?);
                if g > 1e-8 {
                    return Err(Error::invalid(format!("supplied oracle point has gradient norm {g:e}")));
                }
                let f_star = self.global_objective(&x)?;
                Ok(Optimum { x_star: x, f_star })
            }
            _ => self.descent_oracle(),
        }
    }

    /// Centralized gradient descent with step `1 / sum_i L_i`.
    fn descent_oracle(&self) -> Result<Optimum> {
        let smooth: f64 = self.agents.iter().map(|a| a.smoothness()).sum();
        let step = 1.0 / smooth;
        let mut x = self.starting_point();
        for _ in 0..ORACLE_MAX_ITERS {
            let g = self.global_gradient(&x)?;
            if row_norm(&g) < ORACLE_TOL {
                let f_star = self.global_objective(&x)?;
                return Ok(Optimum { x_star: x, f_star });
            }
            x.iter_mut().zip(&g).for_each(|(xi, gi)| *xi -= step * gi);
        }
        Err(Error::NumericalFailure {
            t: 0.0,
            reason: format!("descent oracle did not reach gradient norm {ORACLE_TOL:e}"),
        })
    }

    fn starting_point(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.d];
        for a in &self.agents {
            match a {
                LocalObjective::Quadratic { center, .. } | LocalObjective::Huber { center, .. } => {
                    x.iter_mut().zip(center).for_each(|(xi, c)| *xi += c);
                }
                LocalObjective::Logistic { offset, .. } => x[0] += offset,
            }
        }
        x.iter_mut().for_each(|xi| *xi /= self.agents.len() as f64);
        x
    }

    pub fn from_spec(spec: &FamilySpec) -> Result<Self> {
        let fam = match spec.kind {
            FamilyKind::TwoAgentPaperPair => {
                let p: PairParams = params(&spec.params)?;
                let fam = Self::paper_pair();
                match p.validity_box {
                    Some(b) => fam.with_box(b)?,
                    None => fam,
                }
            }
            FamilyKind::HuberizedQuadratic => {
                let p: HuberParams = params(&spec.params)?;
                match (p.centers, p.random) {
                    (Some(c), None) => Self::huberized(c, p.curvature, p.radius)?,
                    (None, Some(r)) => {
                        let (n, d) = spec
                            .n
                            .zip(spec.d)
                            .ok_or_else(|| Error::invalid("random huberized family needs n and d"))?;
                        Self::random_huberized(n, d, r.spread, p.curvature, p.radius, r.seed)?
                    }
                    _ => return Err(Error::invalid("huberized family needs exactly one of centers or random")),
                }
            }
            FamilyKind::LogisticScalar => {
                let p: LogisticParams = params(&spec.params)?;
                Self::logistic(&p.slopes, &p.offsets)?
            }
            FamilyKind::CustomTable => {
                let p: CustomParams = params(&spec.params)?;
                Self::custom(p.agents, p.validity_box, p.oracle)?
            }
        };
        if spec.n.is_some_and(|n| n != fam.n()) || spec.d.is_some_and(|d| d != fam.d()) {
            return Err(Error::invalid(format!(
                "family spec declares n={:?}, d={:?} but parameters give n={}, d={}",
                spec.n,
                spec.d,
                fam.n(),
                fam.d()
            )));
        }
        Ok(fam)
    }
}

fn params<T: serde::de::DeserializeOwned>(v: &serde_json::Value) -> Result<T> {
    let v = if v.is_null() { serde_json::json!({}) } else { v.clone() };
    serde_json::from_value(v).map_err(|e| Error::invalid(format!("objective params: {e}")))
}

/// JSON family spec: `{"kind": ..., "n": ..., "d": ..., "params": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub kind: FamilyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub params: serde_json::Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PairParams {
    #[serde(rename = "box")]
    validity_box: Option<BoxRegion>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HuberParams {
    centers: Option<Vec<Vec<f64>>>,
    random: Option<RandomCenters>,
    #[serde(default = "one")]
    curvature: f64,
    radius: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RandomCenters {
    seed: u64,
    spread: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LogisticParams {
    slopes: Vec<f64>,
    offsets: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CustomParams {
    agents: Vec<LocalObjective>,
    #[serde(rename = "box")]
    validity_box: Option<BoxRegion>,
    oracle: Option<Vec<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_families() -> Vec<ObjectiveFamily> {
        vec![
            ObjectiveFamily::paper_pair(),
            ObjectiveFamily::random_huberized(4, 2, 1.5, 1.3, 0.8, 5).unwrap(),
            ObjectiveFamily::logistic(&[1.0, -2.0, 0.5], &[0.3, -0.4, 1.0]).unwrap(),
        ]
    }

    #[test]
    fn global_objective_examples() {
        let f = ObjectiveFamily::paper_pair();
        assert_eq!(f.global_objective(&[0.0]).unwrap(), 1.0);
        assert_eq!(f.global_objective(&[1.0]).unwrap(), 2.0);
        assert!(f.global_objective(&[0.0, 1.0]).is_err());
        let same = ObjectiveFamily::custom(
            vec![LocalObjective::Quadratic { center: vec![0.0, 0.0], curvature: 1.0 }; 3],
            None,
            None,
        )
        .unwrap();
        assert_eq!(same.global_objective(&[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn stacked_gradient_examples() {
        let f = ObjectiveFamily::paper_pair();
        assert_eq!(f.stacked_gradient(&[0.0, 0.0]).unwrap(), vec![-1.0, 1.0]);
        assert!(f.stacked_gradient(&[0.0]).is_err());

        let c = vec![0.4, -0.2];
        let shared = ObjectiveFamily::huberized(vec![c.clone(); 3], 1.0, 1.0).unwrap();
        let pts: Vec<f64> = c.iter().cycle().take(6).copied().collect();
        assert!(shared.stacked_gradient(&pts).unwrap().iter().all(|&g| g == 0.0));

        let h = ObjectiveFamily::huberized(vec![vec![0.0, 0.0], vec![1.0, 1.0]], 1.0, 0.7).unwrap();
        let g = h.stacked_gradient(&[3.0, -4.0, 10.0, 1.0]).unwrap();
        assert!((row_norm(&g[0..2]) - 0.7).abs() < 1e-15);
        assert!((row_norm(&g[2..4]) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn oracle_examples() {
        let o = ObjectiveFamily::paper_pair().optimizer_oracle().unwrap();
        assert_eq!(o, Optimum { x_star: vec![0.0], f_star: 1.0 });

        let c = vec![0.25, -1.5];
        let shared = ObjectiveFamily::huberized(vec![c.clone(); 4], 1.0, 2.0).unwrap();
        let o = shared.optimizer_oracle().unwrap();
        assert!(crate::linalg::distance(&o.x_star, &c) < 1e-12);

        let h = ObjectiveFamily::random_huberized(5, 2, 2.0, 1.0, 1.0, 17).unwrap();
        let o = h.optimizer_oracle().unwrap();
        assert!(row_norm(&h.global_gradient(&o.x_star).unwrap()) < 1e-10);

        let l = ObjectiveFamily::logistic(&[1.0, -1.0], &[0.0, 0.0]).unwrap();
        let o = l.optimizer_oracle().unwrap();
        assert!(o.x_star[0].abs() < 1e-10);

        let no_oracle = ObjectiveFamily::custom(
            vec![LocalObjective::Quadratic { center: vec![1.0], curvature: 1.0 }],
            None,
            None,
        )
        .unwrap();
        assert!(matches!(no_oracle.optimizer_oracle(), Err(Error::Capability(_))));
    }

    #[test]
    fn gradient_bound_examples() {
        let l = ObjectiveFamily::logistic(&[1.0, -1.0], &[0.0, 0.0]).unwrap();
        assert_eq!(l.gradient_bound(&BoxRegion::unbounded(1)).unwrap(), 1.0);
        let h = ObjectiveFamily::huberized(vec![vec![0.0], vec![2.0]], 1.0, 0.6).unwrap();
        assert_eq!(h.gradient_bound(&BoxRegion::unbounded(1)).unwrap(), 0.6);
        let p = ObjectiveFamily::paper_pair();
        assert_eq!(p.gradient_bound(&BoxRegion::cube(1, 2.0)).unwrap(), 3.0);
        assert!(matches!(
            p.gradient_bound(&BoxRegion::unbounded(1)),
            Err(Error::Capability(_))
        ));
    }

    #[test]
    fn spec_parsing() {
        let spec: FamilySpec = serde_json::from_str(
            r#"{"kind":"huberized-quadratic","n":3,"d":2,"params":{"random":{"seed":4,"spread":1.0},"radius":1.5}}"#,
        )
        .unwrap();
        let f = ObjectiveFamily::from_spec(&spec).unwrap();
        assert_eq!((f.n(), f.d()), (3, 2));

        let spec: FamilySpec = serde_json::from_str(
            r#"{"kind":"custom-table","params":{"agents":[
                {"type":"quadratic","center":[1.0],"curvature":1.0},
                {"type":"huber","center":[-1.0],"curvature":1.0,"radius":0.5}],
                "box":{"lo":[-3.0],"hi":[3.0]},"oracle":[0.5]}}"#,
        )
        .unwrap();
        let f = ObjectiveFamily::from_spec(&spec).unwrap();
        assert_eq!(f.optimizer_oracle().unwrap().x_star, vec![0.5]);
        assert_eq!(f.declared_gradient_bound().unwrap(), 4.0);

        let bad: FamilySpec =
            serde_json::from_str(r#"{"kind":"logistic-scalar","params":{"slopes":[1.0],"offsets":[0.0]}}"#).unwrap();
        assert!(ObjectiveFamily::from_spec(&bad).is_err());
    }

    fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-3.0f64..3.0, d)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn gradients_match_central_differences(which in 0usize..3, x in point(2)) {
            let fam = &sample_families()[which];
            let d = fam.d();
            let x = &x[..d];
            for a in fam.agents() {
                let mut g = vec![0.0; d];
                a.gradient(x, &mut g);
                for k in 0..d {
                    let step = 1e-6;
                    let mut xp = x.to_vec();
                    let mut xm = x.to_vec();
                    xp[k] += step;
                    xm[k] -= step;
                    let fd = (a.value(&xp) - a.value(&xm)) / (2.0 * step);
                    prop_assert!((fd - g[k]).abs() <= 1e-6 * g[k].abs().max(1.0));
                }
            }
        }

        #[test]
        fn midpoint_convexity(which in 0usize..3, a in point(2), b in point(2)) {
            let fam = &sample_families()[which];
            let d = fam.d();
            let mid: Vec<f64> = a[..d].iter().zip(&b[..d]).map(|(p, q)| 0.5 * (p + q)).collect();
            for f in fam.agents() {
                prop_assert!(f.value(&mid) <= 0.5 * f.value(&a[..d]) + 0.5 * f.value(&b[..d]) + 1e-12);
            }
        }

        #[test]
        fn first_order_lower_bound(which in 0usize..3, y in point(2), z in point(2)) {
            let fam = &sample_families()[which];
            let d = fam.d();
            let (y, z) = (&y[..d], &z[..d]);
            for f in fam.agents() {
                let mut g = vec![0.0; d];
                f.gradient(y, &mut g);
                let lin: f64 = g.iter().zip(z).zip(y).map(|((gk, zk), yk)| gk * (zk - yk)).sum();
                prop_assert!(f.value(y) + lin <= f.value(z) + 1e-10);
            }
        }

        #[test]
        fn values_are_k_lipschitz_on_the_box(which in 0usize..3, y in point(2), z in point(2)) {
            let fam = &sample_families()[which];
            let d = fam.d();
            let region = BoxRegion::cube(d, 3.0);
            let k = fam.gradient_bound(&region).unwrap();
            let (y, z) = (&y[..d], &z[..d]);
            let dist = crate::linalg::distance(y, z);
            for f in fam.agents() {
                prop_assert!((f.value(y) - f.value(z)).abs() <= k * dist + 1e-12);
            }
        }
    }
}
