//! Time-varying directed graphs and their generalized Laplacian processes.
//!
//! Conventions:
//! - an edge `(i, j)` means agent `i` reads agent `j`'s state, with weight `w_ij > 0`;
//! - the Laplacian has `L_ij = -w_ij` off the diagonal and columns summing to
//!   zero, so `L_jj = sum_{i != j} w_ij` and the flow of `dPhi/dt = -L Phi`
//!   is column-stochastic.
//!
//! Processes are piecewise constant: a list of `(start, L)` pieces on `[0, horizon]`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for structural predicates (weight balance, stationarity).
pub const TAU_STRUCT: f64 = 1e-10;

/// Largest agent count accepted by the exhaustive min-cut.
pub const MIN_CUT_MAX_AGENTS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    /// Agent that receives information.
    pub reader: usize,
    /// Agent whose state is read.
    pub source: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectedGraph {
    pub n: usize,
    pub edges: Vec<Edge>,
}

impl DirectedGraph {
    pub fn new(n: usize, edges: Vec<Edge>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("graph needs at least one agent"));
        }
        for e in &edges {
            if e.reader >= n || e.source >= n {
                return Err(Error::invalid(format!(
                    "edge ({}, {}) out of range for n={n}",
                    e.reader, e.source
                )));
            }
            if e.reader == e.source {
                return Err(Error::invalid(format!("self-loop at agent {}", e.reader)));
            }
            if !(e.weight > 0.0 && e.weight.is_finite()) {
                return Err(Error::invalid(format!(
                    "edge ({}, {}) has non-positive weight {}",
                    e.reader, e.source, e.weight
                )));
            }
        }
        Ok(Self { n, edges })
    }

    /// Dense weight matrix; parallel edges accumulate.
    pub fn weights(&self) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(self.n, self.n);
        for e in &self.edges {
            w[(e.reader, e.source)] += e.weight;
        }
        w
    }

    pub fn laplacian(&self) -> Laplacian {
        make_laplacian(&self.weights()).expect("validated graph always yields a Laplacian")
    }
}

/// Generalized Laplacian: non-positive off-diagonal entries, zero column sums.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    entries: DMatrix<f64>,
    /// Nonzero entries of each row, diagonal included.
    rows: Vec<Vec<(usize, f64)>>,
}

/// Builds `L` from a nonnegative weight matrix with zero diagonal.
pub fn make_laplacian(weights: &DMatrix<f64>) -> Result<Laplacian> {
    let n = weights.nrows();
    if n == 0 || weights.ncols() != n {
        return Err(Error::invalid(format!(
            "weights must be square and nonempty, got {}x{}",
            weights.nrows(),
            weights.ncols()
        )));
    }
    let mut entries = DMatrix::zeros(n, n);
    for j in 0..n {
        if weights[(j, j)] != 0.0 {
            return Err(Error::invalid(format!("nonzero diagonal weight at ({j}, {j})")));
        }
        let mut col = 0.0;
        for i in 0..n {
            let w = weights[(i, j)];
            if !w.is_finite() || w < 0.0 {
                return Err(Error::invalid(format!("invalid weight {w} at ({i}, {j})")));
            }
            if i != j {
                entries[(i, j)] = -w;
                col += w;
            }
        }
        entries[(j, j)] = col;
    }
    Ok(Laplacian::from_entries_unchecked(entries))
}

pub fn make_laplacian_from_rows(weights: &[Vec<f64>]) -> Result<Laplacian> {
    let n = weights.len();
    if weights.iter().any(|r| r.len() != n) {
        return Err(Error::invalid("weight rows must form a square matrix"));
    }
    make_laplacian(&DMatrix::from_fn(n, n, |i, j| weights[i][j]))
}

impl Laplacian {
    fn from_entries_unchecked(entries: DMatrix<f64>) -> Self {
        let n = entries.nrows();
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| entries[(i, j)] != 0.0)
                    .map(|j| (j, entries[(i, j)]))
                    .collect()
            })
            .collect();
        Self { entries, rows }
    }

    pub fn zeros(n: usize) -> Self {
        Self::from_entries_unchecked(DMatrix::zeros(n, n))
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    /// Nonzero `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// Edge weights `A_ij = -L_ij` (zero diagonal).
    pub fn weights(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { -self.entries[(i, j)] })
    }

    /// `true` when `(i, j)` is an edge, i.e. row `i` depends on agent `j`.
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i != j && self.entries[(i, j)] != 0.0
    }

    /// `out = scale * L * x` for a row-major `n x d` block `x`.
    pub fn apply(&self, x: &[f64], d: usize, scale: f64, out: &mut [f64]) {
        for (i, row) in self.rows.iter().enumerate() {
            let o = &mut out[i * d..(i + 1) * d];
            o.iter_mut().for_each(|v| *v = 0.0);
            for &(j, lij) in row {
                let xj = &x[j * d..(j + 1) * d];
                for (ok, xk) in o.iter_mut().zip(xj) {
                    *ok += lij * xk;
                }
            }
            if scale != 1.0 {
                o.iter_mut().for_each(|v| *v *= scale);
            }
        }
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_row_sum_abs(&self) -> f64 {
        self.entries
            .row_iter()
            .map(|r| r.sum().abs())
            .fold(0.0, f64::max)
    }

    pub fn max_column_sum_abs(&self) -> f64 {
        self.entries
            .column_iter()
            .map(|c| c.sum().abs())
            .fold(0.0, f64::max)
    }

    /// Rows also sum to zero (within [`TAU_STRUCT`]).
    pub fn is_weight_balanced(&self) -> bool {
        self.max_row_sum_abs() <= TAU_STRUCT
    }

    /// `sum_{i in s1} sum_{j in s2} L_ij`, exactly as written (no sign flip).
    pub fn cut_value(&self, s1: &[usize], s2: &[usize]) -> Result<f64> {
        if s1.is_empty() {
            return Err(Error::invalid("cut_value needs a nonempty first subset"));
        }
        let n = self.n();
        if let Some(&bad) = s1.iter().chain(s2).find(|&&i| i >= n) {
            return Err(Error::invalid(format!("index {bad} out of range for n={n}")));
        }
        Ok(s1
            .iter()
            .map(|&i| s2.iter().map(|&j| self.entries[(i, j)]).sum::<f64>())
            .sum())
    }

    /// Minimum over nonempty proper `S` of the weight leaving `S`,
    /// `sum_{i in S, j notin S} A_ij` with `A = -offdiag(L)`.
    pub fn min_cut(&self) -> Result<f64> {
        let n = self.n();
        if n < 2 {
            return Err(Error::invalid("min-cut needs at least two agents"));
        }
        if n > MIN_CUT_MAX_AGENTS {
            return Err(Error::capability(format!(
                "exhaustive min-cut supports n <= {MIN_CUT_MAX_AGENTS}, got {n}"
            )));
        }
        let a = self.weights();
        let cut_of = |mask: u32| -> f64 {
            let mut c = 0.0;
            for i in (0..n).filter(|i| mask & (1 << i) != 0) {
                for j in (0..n).filter(|j| mask & (1 << j) == 0) {
                    c += a[(i, j)];
                }
            }
            c
        };
        let full: u32 = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
        if n <= 12 {
            return Ok((1..full).map(cut_of).fold(f64::INFINITY, f64::min));
        }
        // Gray-code walk: one vertex moves per step, O(n) update.
        let mut mask = 0u32;
        let mut cut = 0.0;
        let mut best = (f64::INFINITY, 0u32);
        for g in 1..=full {
            let v = g.trailing_zeros() as usize;
            let bit = 1u32 << v;
            let outside = |j: usize, m: u32| m & (1 << j) == 0 && j != v;
            if mask & bit == 0 {
                cut += (0..n).filter(|&j| outside(j, mask)).map(|j| a[(v, j)]).sum::<f64>();
                cut -= (0..n).filter(|&i| mask & (1 << i) != 0).map(|i| a[(i, v)]).sum::<f64>();
                mask |= bit;
            } else {
                mask &= !bit;
                cut -= (0..n).filter(|&j| outside(j, mask)).map(|j| a[(v, j)]).sum::<f64>();
                cut += (0..n).filter(|&i| mask & (1 << i) != 0).map(|i| a[(i, v)]).sum::<f64>();
            }
            if mask != 0 && mask != full && cut < best.0 {
                best = (cut, mask);
            }
        }
        Ok(cut_of(best.1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub start: f64,
    pub laplacian: Laplacian,
}

/// Piecewise-constant Laplacian process on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProcessFile", into = "ProcessFile")]
pub struct LaplacianProcess {
    pieces: Vec<Piece>,
    horizon: f64,
    max_abs_entry: f64,
}

impl LaplacianProcess {
    pub fn new(pieces: Vec<(f64, Laplacian)>, horizon: f64) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::invalid("process needs at least one piece"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
        }
        if pieces[0].0 != 0.0 {
            return Err(Error::invalid("first piece must start at t=0"));
        }
        let n = pieces[0].1.n();
        for w in pieces.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::invalid("piece start times must be strictly increasing"));
            }
        }
        for (t, l) in &pieces {
            if *t >= horizon {
                return Err(Error::invalid(format!("piece start {t} is not before horizon {horizon}")));
            }
            if l.n() != n {
                return Err(Error::invalid("all pieces must have the same agent count"));
            }
        }
        let max_abs_entry = pieces.iter().map(|(_, l)| l.max_abs_entry()).fold(0.0, f64::max);
        Ok(Self {
            pieces: pieces
                .into_iter()
                .map(|(start, laplacian)| Piece { start, laplacian })
                .collect(),
            horizon,
            max_abs_entry,
        })
    }

    pub fn constant(laplacian: Laplacian, horizon: f64) -> Result<Self> {
        Self::new(vec![(0.0, laplacian)], horizon)
    }

    pub fn n(&self) -> usize {
        self.pieces[0].laplacian.n()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.max_abs_entry
    }

    /// Index of the piece active at `t` (right-continuous; clamps to the ends).
    pub fn piece_index_at(&self, t: f64) -> usize {
        self.pieces.partition_point(|p| p.start <= t).saturating_sub(1)
    }

    pub fn at(&self, t: f64) -> &Laplacian {
        &self.pieces[self.piece_index_at(t)].laplacian
    }

    /// End of piece `k` (next start, or the horizon).
    pub fn piece_end(&self, k: usize) -> f64 {
        self.pieces.get(k + 1).map_or(self.horizon, |p| p.start)
    }

    /// Sub-intervals `(a, b, L)` of `[t0, t1]` on which the process is constant.
    pub fn segments(&self, t0: f64, t1: f64) -> Vec<(f64, f64, &Laplacian)> {
        let mut out = Vec::new();
        if t1 <= t0 {
            return out;
        }
        let mut k = self.piece_index_at(t0);
        let mut a = t0;
        while a < t1 {
            let b = self.piece_end(k).min(t1);
            let b = if k + 1 >= self.pieces.len() { t1 } else { b };
            out.push((a, b, &self.pieces[k].laplacian));
            a = b;
            k += 1;
        }
        out
    }

    pub fn is_weight_balanced(&self) -> bool {
        self.pieces.iter().all(|p| p.laplacian.is_weight_balanced())
    }

    /// All switching times and the horizon are integer multiples of `h`.
    pub fn check_aligned(&self, h: f64) -> Result<()> {
        for p in &self.pieces {
            if !is_multiple(p.start, h) {
                return Err(Error::invalid(format!(
                    "switching time {} is not a multiple of step {h}",
                    p.start
                )));
            }
        }
        Ok(())
    }

    /// Exact integral of `min_cut(L(tau))` over `[t, t + window]`.
    pub fn integrated_min_cut(&self, t: f64, window: f64) -> Result<f64> {
        if t < 0.0 || window < 0.0 {
            return Err(Error::invalid("window start and length must be nonnegative"));
        }
        if t + window > self.horizon * (1.0 + 1e-12) {
            return Err(Error::invalid(format!(
                "window [{t}, {}] exceeds horizon {}",
                t + window,
                self.horizon
            )));
        }
        let mut total = 0.0;
        for (a, b, l) in self.segments(t, t + window) {
            total += (b - a) * l.min_cut()?;
        }
        Ok(total)
    }

    /// Smallest `integrated_min_cut(t, window)` over all windows starting at
    /// a switching time or at `0` (the minimum of a piecewise-linear function
    /// of `t` is attained at a breakpoint, which is a start or end alignment).
    pub fn min_window_cut(&self, window: f64) -> Result<f64> {
        let last = self.horizon - window;
        if last < 0.0 {
            return Err(Error::invalid("window longer than the horizon"));
        }
        let mut candidates: Vec<f64> = self
            .pieces
            .iter()
            .flat_map(|p| [p.start, p.start - window])
            .chain([0.0, last])
            .filter(|&t| t >= 0.0 && t <= last)
            .collect();
        candidates.sort_by(f64::total_cmp);
        candidates.dedup();
        let mut best = f64::INFINITY;
        for t in candidates {
            best = best.min(self.integrated_min_cut(t, window)?);
        }
        Ok(best)
    }

    /// Positive stochastic `pi` with `L_k pi = 0` for every piece, if one exists.
    pub fn common_stationary_distribution(&self) -> Option<Vec<f64>> {
        let n = self.n();
        if self.is_weight_balanced() {
            return Some(vec![1.0 / n as f64; n]);
        }
        let mut distinct: Vec<&Laplacian> = Vec::new();
        for p in &self.pieces {
            if !distinct.iter().any(|l| **l == p.laplacian) {
                distinct.push(&p.laplacian);
            }
        }
        let stacked = DMatrix::from_fn(distinct.len() * n, n, |r, c| distinct[r / n].get(r % n, c));
        let scale = self.max_abs_entry.max(1.0);
        let svd = stacked.svd(false, true);
        let v_t = svd.v_t.as_ref()?;
        let null: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&k| svd.singular_values[k] <= 1e-9 * scale)
            .collect();
        // Tall stacks return n singular values; rank deficiency shows as small ones.
        if null.is_empty() {
            return None;
        }
        // Project the uniform vector onto the null space.
        let mut pi = vec![0.0; n];
        for &k in &null {
            let v = v_t.row(k);
            let coeff: f64 = v.iter().sum::<f64>() / n as f64;
            for (p, vi) in pi.iter_mut().zip(v.iter()) {
                *p += coeff * vi;
            }
        }
        let total: f64 = pi.iter().sum();
        if total.abs() < 1e-12 {
            return None;
        }
        pi.iter_mut().for_each(|p| *p /= total);
        if pi.iter().any(|&p| p <= 1e-12) {
            return None;
        }
        let residual = distinct
            .iter()
            .map(|l| {
                (0..n)
                    .map(|i| l.row(i).iter().map(|&(j, v)| v * pi[j]).sum::<f64>().abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        (residual <= TAU_STRUCT * scale).then_some(pi)
    }

    /// Rescales each weight-balanced piece so that `pi` becomes its
    /// stationary distribution: `L_k diag(1 / (n pi))`.
    pub fn with_stationary_distribution(&self, pi: &[f64]) -> Result<Self> {
        let n = self.n();
        if pi.len() != n || pi.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::invalid("stationary distribution must be positive with n entries"));
        }
        let total: f64 = pi.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("stationary distribution sums to {total}, not 1")));
        }
        if !self.is_weight_balanced() {
            return Err(Error::invalid("rescaling to a stationary distribution needs weight-balanced pieces"));
        }
        let pieces = self
            .pieces
            .iter()
            .map(|p| {
                let w = p.laplacian.weights();
                let scaled = DMatrix::from_fn(n, n, |i, j| w[(i, j)] / (n as f64 * pi[j]));
                Ok((p.start, make_laplacian(&scaled)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(pieces, self.horizon)
    }
}

pub(crate) fn is_multiple(t: f64, h: f64) -> bool {
    let r = t / h;
    (r - r.round()).abs() <= 1e-9 * r.abs().max(1.0)
}

/// On-disk representation: weights, not Laplacians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessFile {
    pub n: usize,
    pub pieces: Vec<PieceFile>,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieceFile {
    pub t: f64,
    pub weights: Vec<Vec<f64>>,
}

impl TryFrom<ProcessFile> for LaplacianProcess {
    type Error = Error;

    fn try_from(f: ProcessFile) -> Result<Self> {
        let pieces = f
            .pieces
            .iter()
            .map(|p| {
                if p.weights.len() != f.n {
                    return Err(Error::invalid(format!(
                        "piece at t={} has {} weight rows, expected n={}",
                        p.t,
                        p.weights.len(),
                        f.n
                    )));
                }
                Ok((p.t, make_laplacian_from_rows(&p.weights)?))
            })
            .collect::<Result<Vec<_>>>()?;
        LaplacianProcess::new(pieces, f.horizon)
    }
}

impl From<LaplacianProcess> for ProcessFile {
    fn from(p: LaplacianProcess) -> Self {
        let n = p.n();
        ProcessFile {
            n,
            horizon: p.horizon,
            pieces: p
                .pieces
                .iter()
                .map(|piece| {
                    let w = piece.laplacian.weights();
                    PieceFile {
                        t: piece.start,
                        weights: (0..n).map(|i| (0..n).map(|j| w[(i, j)]).collect()).collect(),
                    }
                })
                .collect(),
        }
    }
}

/// Random test-instance families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum RandomModel {
    /// Complete graph, symmetric weights redrawn in `[0.5, 1.5]` every piece.
    SwitchingComplete,
    /// Agent `i` reads `i + s_k (mod n)` with shift `s_k = 1 + k mod (n-1)`,
    /// weights drawn in `[0.5, 2.0]` (generally not weight-balanced).
    DirectedRingRotate,
    /// Sparse random digraphs; ring edge `e` is present in piece `k` iff
    /// `e = k (mod b)`, so any `b` consecutive pieces have a strongly
    /// connected union.
    #[serde(rename = "b-window-strongly-connected")]
    BWindow { b: usize },
}

pub fn random_process(
    n: usize,
    model: RandomModel,
    dwell: f64,
    horizon: f64,
    seed: u64,
    h: f64,
) -> Result<LaplacianProcess> {
    if n == 0 {
        return Err(Error::invalid("random process needs n >= 1"));
    }
    if !(h > 0.0) || !(dwell > 0.0) || !is_multiple(dwell, h) {
        return Err(Error::invalid(format!(
            "dwell {dwell} must be a positive multiple of step {h}"
        )));
    }
    if !(horizon > 0.0) {
        return Err(Error::invalid("horizon must be positive"));
    }
    if let RandomModel::BWindow { b } = model {
        if b == 0 {
            return Err(Error::invalid("window length b must be positive"));
        }
    }
    let count = ((horizon / dwell) - 1e-9).ceil().max(1.0) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pieces = Vec::with_capacity(count);
    for k in 0..count {
        let mut w = DMatrix::zeros(n, n);
        match model {
            RandomModel::SwitchingComplete => {
                for i in 0..n {
                    for j in i + 1..n {
                        let v = rng.gen_range(0.5..1.5);
                        w[(i, j)] = v;
                        w[(j, i)] = v;
                    }
                }
            }
            RandomModel::DirectedRingRotate => {
                if n > 1 {
                    let shift = 1 + k % (n - 1);
                    for i in 0..n {
                        w[(i, (i + shift) % n)] = rng.gen_range(0.5..2.0);
                    }
                }
            }
            RandomModel::BWindow { b } => {
                for i in 0..n {
                    for j in 0..n {
                        if i == j {
                            continue;
                        }
                        let ring = n > 1 && j == (i + 1) % n && i % b == k % b;
                        let extra = rng.gen_bool(0.15);
                        if ring || extra {
                            w[(i, j)] = rng.gen_range(0.5..1.5);
                        }
                    }
                }
            }
        }
        pieces.push((k as f64 * dwell, make_laplacian(&w)?));
    }
    LaplacianProcess::new(pieces, horizon)
}
