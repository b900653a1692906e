//! Vectorized constraint matrices on `vec(H) ∈ ℝ^{n³}` and a direct linear
//! solve for the skew-block representative.
//!
//! `vec` is column-major over the `n × n²` storage, so `h(i, j, k)` sits at
//! position `i·n² + k·n + j` (see [`vec_index`]). Three matrices act on it:
//!
//! * `A`: coefficient of `x_i x_j` in row `k`, for every row `k` and unordered
//!   pair `{i, j}` except `i = j = k`. `A vec(H) = A vec(G)` together with
//!   energy preservation of both is operator equivalence.
//! * `B`: the energy-preservation conditions, one per multiset `{i, j, k}`
//!   with not all indices equal. Each row is a sum of rows of `A`.
//! * `C`: skew-symmetry of every sub-matrix, including the diagonals.
//!
//! Dense throughout, intended as an oracle for `n ≤ 12`.

use nalgebra::{DMatrix, DVector};

use crate::error::{EpqError, Result};
use crate::quadop::QuadOp;
use crate::skewrep::free_entry_count;

/// Largest dimension accepted by [`build_system`].
pub const MAX_N: usize = 12;

/// Relative singular-value cutoff for numerical rank.
pub const RANK_RTOL: f64 = 1e-10;

const SPAN_RTOL: f64 = 1e-8;

/// Position of `h(i, j, k)` in `vec(H)`.
#[inline]
pub fn vec_index(n: usize, i: usize, j: usize, k: usize) -> usize {
    i * n * n + k * n + j
}

/// Inverse of [`vec_index`].
#[inline]
pub fn vec_entry(n: usize, pos: usize) -> (usize, usize, usize) {
    (pos / (n * n), pos % n, (pos / n) % n)
}

pub fn vectorize(h: &QuadOp) -> DVector<f64> {
    DVector::from_column_slice(h.entries().as_slice())
}

pub fn unvectorize(n: usize, v: &DVector<f64>) -> Result<QuadOp> {
    if v.len() != n * n * n {
        return Err(EpqError::DimensionMismatch {
            expected: n * n * n,
            actual: v.len(),
            context: "vectorized operator length",
        });
    }
    QuadOp::new(DMatrix::from_column_slice(n, n * n, v.as_slice()))
}

/// The three constraint matrices for dimension `n`.
#[derive(Clone, Debug)]
pub struct ConstraintSystem {
    pub n: usize,
    pub a_mat: DMatrix<f64>,
    pub b_mat: DMatrix<f64>,
    pub c_mat: DMatrix<f64>,
}

/// Coefficient row of `x_i x_j` in output row `k`.
fn pair_row(n: usize, i: usize, j: usize, k: usize) -> DVector<f64> {
    let mut row = DVector::zeros(n * n * n);
    row[vec_index(n, i, k, j)] += 1.0;
    row[vec_index(n, j, k, i)] += 1.0;
    row
}

fn stack(n: usize, rows: &[DVector<f64>]) -> DMatrix<f64> {
    let cols = n * n * n;
    let mut m = DMatrix::zeros(rows.len(), cols);
    for (r, row) in rows.iter().enumerate() {
        m.row_mut(r).copy_from(&row.transpose());
    }
    m
}

/// Builds `A`, `B` and `C`. Rows run over the output/sub-matrix index
/// outermost, then unordered pairs in lexicographic order.
pub fn build_system(n: usize) -> Result<ConstraintSystem> {
    if n == 0 || n > MAX_N {
        return Err(EpqError::InvalidArgument(format!(
            "constraint system supports 1 <= n <= {MAX_N}, got {n}"
        )));
    }
    let mut a_rows = Vec::new();
    for k in 0..n {
        for i in 0..n {
            for j in i..n {
                if !(i == j && j == k) {
                    a_rows.push(pair_row(n, i, j, k));
                }
            }
        }
    }

    let mut b_rows = Vec::new();
    for i in 0..n {
        for j in i..n {
            for k in j..n {
                if !(i == j && j == k) {
                    b_rows.push(pair_row(n, i, j, k) + pair_row(n, i, k, j) + pair_row(n, j, k, i));
                }
            }
        }
    }

    let mut c_rows = Vec::new();
    for k in 0..n {
        for i in 0..n {
            for j in i..n {
                let mut row = DVector::zeros(n * n * n);
                row[vec_index(n, k, j, i)] += 1.0;
                row[vec_index(n, k, i, j)] += 1.0;
                c_rows.push(row);
            }
        }
    }

    Ok(ConstraintSystem {
        n,
        a_mat: stack(n, &a_rows),
        b_mat: stack(n, &b_rows),
        c_mat: stack(n, &c_rows),
    })
}

/// Expected row counts and ranks for dimension `n`.
pub mod formulas {
    pub fn a_rows(n: usize) -> usize {
        n * n * (n + 1) / 2 - n
    }

    pub fn b_rows(n: usize) -> usize {
        n * (n - 1) + n * (n - 1) * n.saturating_sub(2) / 6
    }

    pub fn c_rows(n: usize) -> usize {
        n * n * (n + 1) / 2
    }

    pub fn a1_rows(n: usize) -> usize {
        n * (n + 1) * (n - 1) / 3
    }

    /// Rank of `[A1; C]`, `n²(n+1)/2 + n(n+1)(n−1)/3`.
    pub fn stacked_rank(n: usize) -> usize {
        c_rows(n) + a1_rows(n)
    }

    /// `5n³/6 + n²/2 − n/3`, evaluated in integers.
    pub fn independent_constraints(n: usize) -> usize {
        (5 * n * n * n + 3 * n * n - 2 * n) / 6
    }
}

/// Gram–Schmidt basis used for greedy row selection.
struct SpanBasis {
    vectors: Vec<DVector<f64>>,
}

impl SpanBasis {
    fn new() -> Self {
        Self { vectors: Vec::new() }
    }

    /// Adds `row` if it leaves the current span; returns whether it did.
    fn try_push(&mut self, row: &DVector<f64>) -> bool {
        let scale = row.norm();
        if scale == 0.0 {
            return false;
        }
        let mut r = row.clone();
        for _ in 0..2 {
            for q in &self.vectors {
                let c = q.dot(&r);
                r.axpy(-c, q, 1.0);
            }
        }
        let norm = r.norm();
        if norm > SPAN_RTOL * scale {
            self.vectors.push(r / norm);
            true
        } else {
            false
        }
    }

    fn residual(&self, row: &DVector<f64>) -> f64 {
        let mut r = row.clone();
        for _ in 0..2 {
            for q in &self.vectors {
                let c = q.dot(&r);
                r.axpy(-c, q, 1.0);
            }
        }
        r.norm()
    }
}

/// Selected rows of `A` completing `row-space(B)` to `row-space(A)`.
#[derive(Clone, Debug)]
pub struct A1Selection {
    pub matrix: DMatrix<f64>,
    /// Row indices into `A`, ascending.
    pub rows: Vec<usize>,
}

/// Picks rows of `A` greedily in canonical order, keeping those not already
/// in the span of `B` and the rows picked so far.
pub fn extract_a1(sys: &ConstraintSystem) -> Result<A1Selection> {
    let n = sys.n;
    let mut basis = SpanBasis::new();
    for r in 0..sys.b_mat.nrows() {
        let row = sys.b_mat.row(r).transpose();
        if !basis.try_push(&row) {
            return Err(EpqError::InternalConsistency(format!(
                "row {r} of the energy-preservation matrix is linearly dependent"
            )));
        }
    }
    let mut rows = Vec::new();
    for r in 0..sys.a_mat.nrows() {
        if basis.try_push(&sys.a_mat.row(r).transpose()) {
            rows.push(r);
        }
    }
    if rows.len() != formulas::a1_rows(n) {
        return Err(EpqError::InternalConsistency(format!(
            "selected {} rows for A1, expected {} at n = {n}",
            rows.len(),
            formulas::a1_rows(n)
        )));
    }
    Ok(A1Selection {
        matrix: sys.a_mat.select_rows(rows.iter()),
        rows,
    })
}

/// Largest distance of a row of `B` from `row-space(A)`.
pub fn b_rows_outside_a(sys: &ConstraintSystem) -> f64 {
    let mut basis = SpanBasis::new();
    for r in 0..sys.a_mat.nrows() {
        basis.try_push(&sys.a_mat.row(r).transpose());
    }
    (0..sys.b_mat.nrows())
        .map(|r| basis.residual(&sys.b_mat.row(r).transpose()))
        .fold(0.0, f64::max)
}

/// Number of singular values above `RANK_RTOL · σ_max`.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_RTOL * smax).count()
}

pub fn vstack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    m.rows_mut(0, top.nrows()).copy_from(top);
    m.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    m
}

/// Minimum-norm skew-block operator equivalent to `h`, from
/// `[A1; C] vec(H̃) = [A1 vec(H); 0]`.
pub fn solve_equivalent(h: &QuadOp) -> Result<QuadOp> {
    h.require_energy_preserving(crate::skewrep::PRECONDITION_TOL)?;
    let n = h.n();
    let sys = build_system(n)?;
    let a1 = extract_a1(&sys)?;
    let lhs = vstack(&a1.matrix, &sys.c_mat);
    let mut rhs = DVector::zeros(lhs.nrows());
    rhs.rows_mut(0, a1.matrix.nrows())
        .copy_from(&(&a1.matrix * vectorize(h)));

    let svd = lhs.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let v = svd
        .solve(&rhs, RANK_RTOL * smax.max(1.0))
        .map_err(|e| EpqError::InternalConsistency(e.to_string()))?;
    let residual = (&lhs * &v - &rhs).norm();
    if residual > 1e-8 * h.frobenius_norm().max(1.0) {
        return Err(EpqError::InternalConsistency(format!(
            "skew-block system residual {residual:.3e} is not consistent"
        )));
    }
    unvectorize(n, &v)
}

/// Constraint rows of the echelon construction: fixed `x_i²` coefficients
/// and their mirrored diagonal-row entries, two pair-sum equations per
/// distinct triple, and sub-matrix skew-symmetry.
pub fn echelon_system(n: usize) -> Result<DMatrix<f64>> {
    if n == 0 || n > MAX_N {
        return Err(EpqError::InvalidArgument(format!(
            "constraint system supports 1 <= n <= {MAX_N}, got {n}"
        )));
    }
    let len = n * n * n;
    let unit = |pos: usize| {
        let mut r = DVector::zeros(len);
        r[pos] = 1.0;
        r
    };
    let mut rows = Vec::new();
    for i in 0..n {
        for k in i + 1..n {
            rows.push(unit(vec_index(n, i, k, i)));
            rows.push(unit(vec_index(n, k, k, i)));
        }
    }
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                // rows b and c of the triple; row a follows from energy preservation
                rows.push(pair_row(n, a, c, b));
                rows.push(pair_row(n, a, b, c));
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            for k in j..n {
                let mut r = DVector::zeros(len);
                r[vec_index(n, i, j, k)] += 1.0;
                r[vec_index(n, i, k, j)] += 1.0;
                rows.push(r);
            }
        }
    }
    Ok(stack(n, &rows))
}

/// `5n³/6 + n²/2 − n/3`; for `n ≤ 8` also confirmed against the numerical
/// rank of [`echelon_system`].
pub fn count_independent_constraints(n: usize) -> Result<usize> {
    if n == 0 {
        return Err(EpqError::InvalidArgument("n must be >= 1".into()));
    }
    let expected = formulas::independent_constraints(n);
    if n <= 8 {
        let rank = numerical_rank(&echelon_system(n)?);
        if rank != expected {
            return Err(EpqError::InternalConsistency(format!(
                "echelon system rank {rank} differs from {expected} at n = {n}"
            )));
        }
    }
    Ok(expected)
}

/// Row counts, ranks, and their closed forms for one dimension.
#[derive(Clone, Debug, serde::Serialize)]
pub struct CountTable {
    pub n: usize,
    pub a_rows: (usize, usize),
    pub b_rows: (usize, usize),
    pub c_rows: (usize, usize),
    pub a1_rows: (usize, usize),
    pub rank_a: (usize, usize),
    pub rank_b: (usize, usize),
    pub rank_a1_c: (usize, usize),
    pub independent_constraints: (usize, usize),
    pub nullity: (usize, usize),
}

impl CountTable {
    /// Pairs of `(computed, formula)`.
    pub fn entries(&self) -> [(&'static str, (usize, usize)); 9] {
        [
            ("rows(A)", self.a_rows),
            ("rows(B)", self.b_rows),
            ("rows(C)", self.c_rows),
            ("rows(A1)", self.a1_rows),
            ("rank(A)", self.rank_a),
            ("rank(B)", self.rank_b),
            ("rank([A1; C])", self.rank_a1_c),
            ("independent constraints", self.independent_constraints),
            ("nullity (free entries)", self.nullity),
        ]
    }

    pub fn all_match(&self) -> bool {
        self.entries().iter().all(|(_, (got, want))| got == want)
    }
}

/// Computes every count for dimension `n` numerically.
pub fn verify_counts(n: usize) -> Result<CountTable> {
    let sys = build_system(n)?;
    let a1 = extract_a1(&sys)?;
    let stacked = vstack(&a1.matrix, &sys.c_mat);
    let rank_stacked = numerical_rank(&stacked);
    let echelon_rank = numerical_rank(&echelon_system(n)?);
    Ok(CountTable {
        n,
        a_rows: (sys.a_mat.nrows(), formulas::a_rows(n)),
        b_rows: (sys.b_mat.nrows(), formulas::b_rows(n)),
        c_rows: (sys.c_mat.nrows(), formulas::c_rows(n)),
        a1_rows: (a1.rows.len(), formulas::a1_rows(n)),
        rank_a: (numerical_rank(&sys.a_mat), formulas::a_rows(n)),
        rank_b: (numerical_rank(&sys.b_mat), formulas::b_rows(n)),
        rank_a1_c: (rank_stacked, formulas::stacked_rank(n)),
        independent_constraints: (echelon_rank, formulas::independent_constraints(n)),
        nullity: (n * n * n - rank_stacked, free_entry_count(n)),
    })
}
