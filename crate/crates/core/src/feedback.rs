//! Fixed random feedback matrices with prescribed rank and sparsity.
//!
//! A feedback matrix `B` has one row per hidden neuron and one column per
//! output error. Its rows are built from `R` linearly independent base rows,
//! each with `k = round((1 - S) * M)` nonzeros; every other row is a nonzero
//! multiple of one base row, so it shares that row's zero pattern and the
//! rank stays at `R`. Base-row supports are drawn from a shuffled column pool
//! that is exhausted before any column repeats, which covers every error
//! column whenever `R * k >= M`.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_traits::Float;

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng, Scalar};

/// Redraw budget for linearly independent base rows.
pub const MAX_REDRAWS: usize = 100;

/// Slack on the rank-connectivity product so that e.g. `10 * (1 - 0.9)`
/// counts as 1.
const PRODUCT_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Violation {
    #[error("rank {rank} outside 1..={max}")]
    RankOutOfRange { rank: usize, max: usize },
    #[error("sparsity {0} outside [0, 1)")]
    SparsityOutOfRange(f64),
    #[error("rank x connectivity = {rank} x (1 - {sparsity}) = {product} is below 1")]
    RankConnectivity { rank: usize, sparsity: f64, product: f64 },
    #[error("sparsity {sparsity} leaves no nonzero per row for {cols} errors")]
    EmptyRows { sparsity: f64, cols: usize },
    #[error("{rank} base rows x {per_row} nonzeros cannot cover {cols} error columns")]
    Coverage { rank: usize, per_row: usize, cols: usize },
    #[error("single-connection feedback needs at least as many neurons ({neurons}) as errors ({errors})")]
    TooFewNeurons { neurons: usize, errors: usize },
}

impl Violation {
    /// Short machine-friendly rule name, used in sweep output.
    pub fn rule(&self) -> &'static str {
        match self {
            Violation::RankOutOfRange { .. } => "rank_range",
            Violation::SparsityOutOfRange(_) => "sparsity_range",
            Violation::RankConnectivity { .. } => "rank_connectivity",
            Violation::EmptyRows { .. } => "empty_rows",
            Violation::Coverage { .. } => "coverage",
            Violation::TooFewNeurons { .. } => "too_few_neurons",
        }
    }
}

/// Nonzeros per row for `m` error columns at sparsity `sparsity`.
pub fn nonzeros_per_row(m: usize, sparsity: f64) -> usize {
    Float::round((1.0 - sparsity) * m as f64) as usize
}

/// Checks whether an `n x m` feedback matrix of rank `rank` and sparsity
/// `sparsity` can be built with every error column connected.
pub fn validate_constraints(n: usize, m: usize, rank: usize, sparsity: f64) -> core::result::Result<(), Violation> {
    let max = n.min(m);
    if rank == 0 || rank > max {
        return Err(Violation::RankOutOfRange { rank, max });
    }
    if !(0.0..1.0).contains(&sparsity) {
        return Err(Violation::SparsityOutOfRange(sparsity));
    }
    let product = rank as f64 * (1.0 - sparsity);
    if product < 1.0 - PRODUCT_SLACK {
        return Err(Violation::RankConnectivity { rank, sparsity, product });
    }
    let k = nonzeros_per_row(m, sparsity);
    if k == 0 {
        return Err(Violation::EmptyRows { sparsity, cols: m });
    }
    if rank * k < m {
        return Err(Violation::Coverage { rank, per_row: k, cols: m });
    }
    Ok(())
}

/// Compressed rows of a feedback matrix: for each row the `(column, weight)`
/// pairs of its nonzeros in ascending column order.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows<T> {
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
}

impl<T: Scalar> SparseRows<T> {
    fn from_dense(mat: &Matrix<T>) -> Self {
        let mut offsets = Vec::with_capacity(mat.rows() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        offsets.push(0);
        for i in 0..mat.rows() {
            for (j, &v) in mat.row(i).iter().enumerate() {
                if v != T::zero() {
                    cols.push(j);
                    vals.push(v);
                }
            }
            offsets.push(cols.len());
        }
        SparseRows { offsets, cols, vals }
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let span = self.offsets[i]..self.offsets[i + 1];
        (&self.cols[span.clone()], &self.vals[span])
    }

    pub fn rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn iter_row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let (c, v) = self.row(i);
        c.iter().copied().zip(v.iter().copied())
    }
}

/// A fixed feedback matrix plus its sparse view and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackMatrix<T = f64> {
    mat: Matrix<T>,
    sparse: SparseRows<T>,
    target_rank: usize,
    sparsity: f64,
    seed: u64,
}

impl<T: Scalar> FeedbackMatrix<T> {
    /// Wraps an existing dense matrix. `target_rank` and `sparsity` are
    /// recorded as given; use [`measure`] to check them.
    pub fn from_dense(mat: Matrix<T>, target_rank: usize, sparsity: f64, seed: u64) -> Self {
        let sparse = SparseRows::from_dense(&mat);
        FeedbackMatrix { mat, sparse, target_rank, sparsity, seed }
    }

    pub fn mat(&self) -> &Matrix<T> {
        &self.mat
    }

    pub fn sparse(&self) -> &SparseRows<T> {
        &self.sparse
    }

    /// Hidden neurons (rows).
    pub fn neurons(&self) -> usize {
        self.mat.rows()
    }

    /// Output errors (columns).
    pub fn errors(&self) -> usize {
        self.mat.cols()
    }

    pub fn target_rank(&self) -> usize {
        self.target_rank
    }

    /// Requested sparsity.
    pub fn sparsity(&self) -> f64 {
        self.sparsity
    }

    /// Fraction of exactly-zero entries.
    pub fn measured_sparsity(&self) -> f64 {
        let total = self.mat.len();
        if total == 0 {
            return 0.0;
        }
        (total - self.sparse.nnz()) as f64 / total as f64
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn nnz(&self) -> usize {
        self.sparse.nnz()
    }

    pub fn cast<U: Scalar>(&self) -> FeedbackMatrix<U> {
        FeedbackMatrix::from_dense(self.mat.cast(), self.target_rank, self.sparsity, self.seed)
    }

    /// Multiplies every entry by `factor`.
    pub fn scaled(&self, factor: T) -> Self {
        FeedbackMatrix::from_dense(self.mat.map(|v| v * factor), self.target_rank, self.sparsity, self.seed)
    }
}

fn nonzero_draw(rng: &mut Rng, scale: f64) -> f64 {
    loop {
        let v = rng.symmetric(scale);
        if v != 0.0 {
            return v;
        }
    }
}

/// Builds an `n x m` feedback matrix of rank `rank` and sparsity `sparsity`
/// with nonzero values uniform in `[-scale, scale]`.
pub fn build_feedback(n: usize, m: usize, rank: usize, sparsity: f64, scale: f64, seed: u64) -> Result<FeedbackMatrix> {
    validate_constraints(n, m, rank, sparsity)?;
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Config(alloc::format!("feedback scale must be positive, got {scale}")));
    }
    let k = nonzeros_per_row(m, sparsity);
    let mut rng = Rng::new(seed);

    let mut base = None;
    for _ in 0..MAX_REDRAWS {
        let candidate = draw_base_rows(rank, m, k, scale, &mut rng);
        if measure(&candidate).0 == rank {
            base = Some(candidate);
            break;
        }
    }
    let base = base.ok_or_else(|| {
        Error::Generation(alloc::format!(
            "no {rank} independent rows with {k} nonzeros out of {m} after {MAX_REDRAWS} draws"
        ))
    })?;

    let mut rows: Vec<Vec<f64>> = (0..rank).map(|r| base.row(r).to_vec()).collect();
    for _ in rank..n {
        let src = rng.below(rank);
        let factor = loop {
            let c = rng.symmetric(1.0);
            if c.abs() >= 0.1 {
                break c;
            }
        };
        rows.push(base.row(src).iter().map(|&v| v * factor).collect());
    }
    rng.shuffle(&mut rows);

    let data = rows.into_iter().flatten().collect();
    let mat = Matrix::new(n, m, data)?;
    Ok(FeedbackMatrix::from_dense(mat, rank, sparsity, seed))
}

fn draw_base_rows(rank: usize, m: usize, k: usize, scale: f64, rng: &mut Rng) -> Matrix<f64> {
    let mut pool: Vec<usize> = (0..m).collect();
    rng.shuffle(&mut pool);
    let mut next = 0;
    let mut out = Matrix::zeros(rank, m);
    let mut support = Vec::with_capacity(k);
    for r in 0..rank {
        support.clear();
        while support.len() < k {
            if next == m {
                rng.shuffle(&mut pool);
                next = 0;
            }
            let c = pool[next];
            next += 1;
            if !support.contains(&c) {
                support.push(c);
            }
        }
        support.sort_unstable();
        for &c in &support {
            out[(r, c)] = nonzero_draw(rng, scale);
        }
    }
    out
}

/// Single-connection feedback: every row has exactly one nonzero, and the
/// error indices are a shuffled round-robin over all `m` columns.
pub fn build_ssdfa(n: usize, m: usize, scale: f64, seed: u64) -> Result<FeedbackMatrix> {
    if m == 0 || n < m {
        return Err(Violation::TooFewNeurons { neurons: n, errors: m }.into());
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Config(alloc::format!("feedback scale must be positive, got {scale}")));
    }
    let mut rng = Rng::new(seed);
    let mut assignment: Vec<usize> = (0..n).map(|i| i % m).collect();
    rng.shuffle(&mut assignment);
    let mut mat = Matrix::zeros(n, m);
    for (i, &j) in assignment.iter().enumerate() {
        mat[(i, j)] = nonzero_draw(&mut rng, scale);
    }
    let sparsity = 1.0 - 1.0 / m as f64;
    Ok(FeedbackMatrix::from_dense(mat, m, sparsity, seed))
}

/// Numerical rank and sparsity of `mat`, computed in double precision.
///
/// Rank comes from Gaussian elimination with complete pivoting; a pivot
/// counts when its magnitude exceeds `max(rows, cols) * eps * ||A||_F`.
/// The Frobenius norm bounds the largest singular value, so elimination
/// round-off on exactly dependent rows stays below the threshold.
pub fn measure<T: Scalar>(mat: &Matrix<T>) -> (usize, f64) {
    let (rows, cols) = mat.shape();
    let total = rows * cols;
    if total == 0 {
        return (0, 0.0);
    }
    let zeros = mat.as_slice().iter().filter(|&&v| v == T::zero()).count();
    let sparsity = zeros as f64 / total as f64;

    // eliminate along the shorter side
    let mut a = if rows > cols { mat.cast::<f64>().transpose() } else { mat.cast::<f64>() };
    let (r, c) = a.shape();
    let norm = a.frobenius_norm();
    if norm == 0.0 {
        return (0, sparsity);
    }
    let tol = rows.max(cols) as f64 * f64::EPSILON * norm;
    for k in 0..r {
        let mut best = (k, k, -1.0);
        for i in k..r {
            for (j, v) in a.row(i).iter().enumerate().skip(k) {
                if v.abs() > best.2 {
                    best = (i, j, v.abs());
                }
            }
        }
        let (pi, pj, pivot_abs) = best;
        if pivot_abs <= tol {
            return (k, sparsity);
        }
        if pi != k {
            for j in 0..c {
                let tmp = a[(k, j)];
                a[(k, j)] = a[(pi, j)];
                a[(pi, j)] = tmp;
            }
        }
        if pj != k {
            for i in 0..r {
                let tmp = a[(i, k)];
                a[(i, k)] = a[(i, pj)];
                a[(i, pj)] = tmp;
            }
        }
        let p = a[(k, k)];
        for i in k + 1..r {
            let f = a[(i, k)] / p;
            if f != 0.0 {
                for j in k..c {
                    let v = a[(k, j)];
                    a[(i, j)] -= f * v;
                }
            }
        }
    }
    (r, sparsity)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleReport {
    pub layer: usize,
    pub angle_degrees: f64,
}

impl fmt::Display for AngleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "layer {}: {:.3} deg", self.layer, self.angle_degrees)
    }
}

/// Angle in degrees between `feedback` (`N_l x M`) and `Pᵀ`, where
/// `P = W_n · … · W_{l+1}` and `chain` lists `W_{l+1}, …, W_n` in forward
/// order.
pub fn angle(feedback: &Matrix<f64>, chain: &[Matrix<f64>]) -> Result<f64> {
    let (first, rest) = chain
        .split_first()
        .ok_or_else(|| Error::Input("angle needs at least one forward weight matrix".into()))?;
    let mut product = first.clone();
    for w in rest {
        product = w.matmul(&product)?;
    }
    if feedback.rows() != product.cols() || feedback.cols() != product.rows() {
        return Err(Error::shape("angle", feedback.shape(), (product.cols(), product.rows())));
    }
    let mut dot = 0.0;
    let mut norm_b = 0.0;
    let mut norm_p = 0.0;
    for i in 0..feedback.rows() {
        for j in 0..feedback.cols() {
            let b = feedback[(i, j)];
            let p = product[(j, i)];
            dot += b * p;
            norm_b += b * b;
            norm_p += p * p;
        }
    }
    if norm_b == 0.0 || norm_p == 0.0 {
        return Err(Error::UndefinedAngle);
    }
    let cos = (dot / (Float::sqrt(norm_b) * Float::sqrt(norm_p))).clamp(-1.0, 1.0);
    Ok(Float::acos(cos).to_degrees())
}

/// Row-count summary of a feedback matrix: `(min, max)` nonzeros per row.
pub fn row_nonzero_range<T: Scalar>(fb: &FeedbackMatrix<T>) -> (usize, usize) {
    let s = fb.sparse();
    (0..s.rows()).map(|i| s.row(i).0.len()).fold((usize::MAX, 0), |(lo, hi), c| (lo.min(c), hi.max(c)))
}

/// Columns of `fb` with no nonzero entry.
pub fn empty_columns<T: Scalar>(fb: &FeedbackMatrix<T>) -> Vec<usize> {
    let mut seen = vec![false; fb.errors()];
    let s = fb.sparse();
    for i in 0..s.rows() {
        for &c in s.row(i).0 {
            seen[c] = true;
        }
    }
    seen.iter().enumerate().filter(|(_, &s)| !s).map(|(j, _)| j).collect()
}
