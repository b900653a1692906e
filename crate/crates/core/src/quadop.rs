//! Quadratic operators `H ∈ ℝ^{n×n²}` acting on `x ⊗ x`.
//!
//! Storage is a dense `n × n²` matrix. The entry addressed as `h(i, j, k)`
//! lives in sub-matrix `H_i` at row `j` and column `k`, i.e. at matrix
//! position `(j, i·n + k)`. With 1-based indices this is column
//! `(i−1)·n + k`, matching the position of `x_i·x_k` inside `x ⊗ x`.
//! All methods take 0-based indices; reports and error messages are 1-based.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DMatrixView, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{EpqError, Result};

/// Seed for the random probe in [`QuadOp::equivalent_to`].
const PROBE_SEED: u64 = 0x05ee_d0e9;

/// Dense quadratic operator with three-index sub-matrix addressing.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadOp {
    n: usize,
    entries: DMatrix<f64>,
}

/// Outcome of the entrywise energy-preservation test.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyReport {
    pub preserving: bool,
    /// Worst triple, 1-based, sorted ascending.
    pub worst_triple: (usize, usize, usize),
    /// Six-entry sum at the worst triple.
    pub worst_residual: f64,
    /// Absolute threshold the residuals were compared against.
    pub threshold: f64,
    /// Number of index multisets `{i, j, k}` evaluated.
    pub conditions_checked: usize,
}

impl QuadOp {
    /// Wraps an `n × n²` matrix. Rejects `n = 0` and non-conforming shapes.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let n = entries.nrows();
        if n == 0 {
            return Err(EpqError::InvalidArgument(
                "quadratic operator needs n >= 1".into(),
            ));
        }
        if entries.ncols() != n * n {
            return Err(EpqError::DimensionMismatch {
                expected: n * n,
                actual: entries.ncols(),
                context: "quadratic operator column count (n²)",
            });
        }
        Ok(Self { n, entries })
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::new(DMatrix::zeros(n, n * n))
    }

    /// Builds an operator from a closure over 0-based `(i, j, k)`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let mut op = Self::zeros(n)?;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    op.set(i, j, k, f(i, j, k));
                }
            }
        }
        Ok(op)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    /// `h(i, j, k)`: sub-matrix `i`, row `j`, column `k`.
    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.entries[(j, i * self.n + k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        self.entries[(j, i * self.n + k)] = value;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, k: usize, value: f64) {
        self.entries[(j, i * self.n + k)] += value;
    }

    /// Sub-matrix `H_i`.
    pub fn submatrix(&self, i: usize) -> DMatrixView<'_, f64> {
        self.entries.columns(i * self.n, self.n)
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.entries.amax()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.norm()
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.n {
            return Err(EpqError::DimensionMismatch {
                expected: self.n,
                actual: x.len(),
                context: "state vector length",
            });
        }
        Ok(())
    }

    /// Evaluates `H (x ⊗ x)` one sub-matrix at a time, `Σ_i x_i·(H_i x)`.
    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        Ok(self.apply_unchecked(x))
    }

    pub(crate) fn apply_unchecked(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.n);
        for i in 0..self.n {
            let xi = x[i];
            if xi != 0.0 {
                y.gemv(xi, &self.submatrix(i), x, 1.0);
            }
        }
        y
    }

    /// `xᵀ H (x ⊗ x)`, the energy injected by the quadratic term at `x`.
    pub fn energy_residual(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x)?;
        Ok(x.dot(&self.apply_unchecked(x)))
    }

    /// Largest `|H_i + H_iᵀ|` entry over all sub-matrices.
    pub fn skew_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.n {
            for j in 0..self.n {
                for k in j..self.n {
                    worst = worst.max((self.get(i, j, k) + self.get(i, k, j)).abs());
                }
            }
        }
        worst
    }

    /// Largest `|g_{i_{k,j}} + g_{k_{i,j}}|`, the defect of the row-wise skew structure.
    pub fn row_skew_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.n {
            for k in i..self.n {
                for j in 0..self.n {
                    worst = worst.max((self.get(i, k, j) + self.get(k, i, j)).abs());
                }
            }
        }
        worst
    }

    /// Six-entry sum over all permutations of `(i, j, k)`.
    pub fn triple_sum(&self, i: usize, j: usize, k: usize) -> f64 {
        triple_sum_with(|a, b, c| self.get(a, b, c), i, j, k)
    }

    /// Evaluates the six-entry energy condition on every multiset
    /// `i ≤ j ≤ k`, with threshold `tol·max(1, ‖H‖_max)`.
    pub fn energy_check(&self, tol: f64) -> EnergyReport {
        let threshold = tol * self.max_abs().max(1.0);
        let mut worst = ((0, 0, 0), 0.0_f64);
        let mut count = 0;
        for i in 0..self.n {
            for j in i..self.n {
                for k in j..self.n {
                    count += 1;
                    let s = self.triple_sum(i, j, k);
                    if s.abs() > worst.1.abs() || count == 1 {
                        worst = ((i, j, k), s);
                    }
                }
            }
        }
        let ((i, j, k), residual) = worst;
        EnergyReport {
            preserving: residual.abs() <= threshold,
            worst_triple: (i + 1, j + 1, k + 1),
            worst_residual: residual,
            threshold,
            conditions_checked: count,
        }
    }

    pub fn is_energy_preserving(&self, tol: f64) -> bool {
        self.energy_check(tol).preserving
    }

    /// Errors with [`EpqError::NotEnergyPreserving`] unless the check passes.
    pub fn require_energy_preserving(&self, tol: f64) -> Result<()> {
        let report = self.energy_check(tol);
        if report.preserving {
            Ok(())
        } else {
            Err(EpqError::NotEnergyPreserving {
                triple: report.worst_triple,
                residual: report.worst_residual,
                tolerance: report.threshold,
            })
        }
    }

    /// `h_{i_{j,k}} + h_{k_{j,i}}`: the coefficient of `x_i x_k` in row `j`
    /// (counted once per ordering, so the `i = k` case yields `2·h_{i_{j,i}}`).
    #[inline]
    pub fn pair_sum(&self, i: usize, j: usize, k: usize) -> f64 {
        self.get(i, j, k) + self.get(k, j, i)
    }

    /// Largest pair-sum difference between `self` and `other` over every row
    /// and unordered column pair.
    pub fn pair_sum_defect(&self, other: &QuadOp) -> Result<f64> {
        if other.n != self.n {
            return Err(EpqError::DimensionMismatch {
                expected: self.n,
                actual: other.n,
                context: "operator dimension for equivalence",
            });
        }
        let mut worst = 0.0_f64;
        for j in 0..self.n {
            for i in 0..self.n {
                for k in i..self.n {
                    let d = self.pair_sum(i, j, k) - other.pair_sum(i, j, k);
                    worst = worst.max(d.abs());
                }
            }
        }
        Ok(worst)
    }

    /// True when both operators induce the same quadratic map.
    ///
    /// The deterministic pair-sum comparison is the primary test; `trials`
    /// random unit vectors additionally probe `‖H(x⊗x) − G(x⊗x)‖`. Both are
    /// compared against `tol·max(1, ‖H‖_max, ‖G‖_max)`.
    pub fn equivalent_to(&self, other: &QuadOp, trials: usize, tol: f64) -> Result<bool> {
        if trials == 0 {
            return Err(EpqError::InvalidArgument("trials must be >= 1".into()));
        }
        let scale = self.max_abs().max(other.max_abs()).max(1.0);
        let threshold = tol * scale;
        if self.pair_sum_defect(other)? > threshold {
            return Ok(false);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
        for _ in 0..trials {
            let x = random_unit_vector(&mut rng, self.n);
            let diff = self.apply_unchecked(&x) - other.apply_unchecked(&x);
            if diff.norm() > threshold {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// `operators_equivalent(H, G, trials, tol)`.
pub fn operators_equivalent(h: &QuadOp, g: &QuadOp, trials: usize, tol: f64) -> Result<bool> {
    h.equivalent_to(g, trials, tol)
}

pub(crate) fn random_unit_vector(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

fn triple_sum_with(get: impl Fn(usize, usize, usize) -> f64, i: usize, j: usize, k: usize) -> f64 {
    get(i, j, k) + get(i, k, j) + get(j, i, k) + get(j, k, i) + get(k, i, j) + get(k, j, i)
}

/// Quadratic system `ẋ = A x + H (x ⊗ x) + B u + c`.
#[derive(Clone, Debug)]
pub struct QuadSystem {
    pub a: DMatrix<f64>,
    pub h: QuadOp,
    pub b: DMatrix<f64>,
    pub c: DVector<f64>,
}

impl QuadSystem {
    pub fn new(a: DMatrix<f64>, h: QuadOp, b: DMatrix<f64>, c: DVector<f64>) -> Result<Self> {
        let n = h.n();
        if a.nrows() != n || a.ncols() != n {
            return Err(EpqError::DimensionMismatch {
                expected: n,
                actual: if a.nrows() != n { a.nrows() } else { a.ncols() },
                context: "linear operator A",
            });
        }
        if b.nrows() != n {
            return Err(EpqError::DimensionMismatch {
                expected: n,
                actual: b.nrows(),
                context: "input operator B rows",
            });
        }
        if c.len() != n {
            return Err(EpqError::DimensionMismatch {
                expected: n,
                actual: c.len(),
                context: "constant term c",
            });
        }
        Ok(Self { a, h, b, c })
    }

    pub fn n(&self) -> usize {
        self.h.n()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    /// Right-hand side at state `x` and input `u` (ignored when `k = 0`).
    pub fn rhs(&self, x: &DVector<f64>, u: Option<&DVector<f64>>) -> DVector<f64> {
        let mut dx = &self.a * x + self.h.apply_unchecked(x) + &self.c;
        if let Some(u) = u {
            if self.b.ncols() > 0 {
                dx.gemv(1.0, &self.b, u, 1.0);
            }
        }
        dx
    }
}

/// Sparse quadratic operator, used where `n²` columns cannot be stored
/// (the full-order Burgers' advection term).
#[derive(Clone, Debug, Default)]
pub struct SparseQuadOp {
    n: usize,
    entries: BTreeMap<(usize, usize, usize), f64>,
}

impl SparseQuadOp {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            entries: BTreeMap::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.entries.get(&(i, j, k)).copied().unwrap_or(0.0)
    }

    pub fn add(&mut self, i: usize, j: usize, k: usize, value: f64) {
        *self.entries.entry((i, j, k)).or_insert(0.0) += value;
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize, usize), f64)> + '_ {
        self.entries.iter().map(|(&idx, &v)| (idx, v))
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.values().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.n {
            return Err(EpqError::DimensionMismatch {
                expected: self.n,
                actual: x.len(),
                context: "state vector length",
            });
        }
        let mut y = DVector::zeros(self.n);
        for (&(i, j, k), &v) in &self.entries {
            y[j] += v * x[i] * x[k];
        }
        Ok(y)
    }

    /// Same test as [`QuadOp::energy_check`], restricted to the multisets
    /// touched by a stored entry (all others sum to zero trivially).
    pub fn energy_check(&self, tol: f64) -> EnergyReport {
        let threshold = tol * self.max_abs().max(1.0);
        let mut seen = std::collections::BTreeSet::new();
        for &(i, j, k) in self.entries.keys() {
            let mut t = [i, j, k];
            t.sort_unstable();
            seen.insert((t[0], t[1], t[2]));
        }
        let mut worst = ((0, 0, 0), 0.0_f64);
        for &(i, j, k) in &seen {
            let s = triple_sum_with(|a, b, c| self.get(a, b, c), i, j, k);
            if s.abs() > worst.1.abs() {
                worst = ((i, j, k), s);
            }
        }
        let ((i, j, k), residual) = worst;
        EnergyReport {
            preserving: residual.abs() <= threshold,
            worst_triple: (i + 1, j + 1, k + 1),
            worst_residual: residual,
            threshold,
            conditions_checked: seen.len(),
        }
    }

    pub fn to_dense(&self) -> Result<QuadOp> {
        let mut op = QuadOp::zeros(self.n)?;
        for (&(i, j, k), &v) in &self.entries {
            op.add(i, j, k, v);
        }
        Ok(op)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_op(n: usize, seed: u64) -> QuadOp {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        QuadOp::from_fn(n, |_, _, _| rng.sample(StandardNormal)).unwrap()
    }

    fn random_vec(n: usize, seed: u64) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
    }

    fn skew_block(n: usize, seed: u64) -> QuadOp {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut op = QuadOp::zeros(n).unwrap();
        for i in 0..n {
            for j in 0..n {
                for k in j + 1..n {
                    let v: f64 = rng.sample(StandardNormal);
                    op.set(i, j, k, v);
                    op.set(i, k, j, -v);
                }
            }
        }
        op
    }

    #[test]
    fn rejects_degenerate_shapes() {
        assert!(QuadOp::zeros(0).is_err());
        assert!(QuadOp::new(DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn column_layout_matches_kronecker_position() {
        // x ⊗ x has x_i x_k at column i·n + k
        let n = 3;
        let mut op = QuadOp::zeros(n).unwrap();
        op.set(2, 1, 0, 1.0);
        assert_eq!(op.entries()[(1, 2 * n)], 1.0);
        let x = DVector::from_vec(vec![2.0, 3.0, 5.0]);
        let y = op.apply(&x).unwrap();
        assert_eq!(y, DVector::from_vec(vec![0.0, 10.0, 0.0]));
    }

    #[test]
    fn apply_zero_and_scalar() {
        let x = random_vec(5, 1);
        assert_eq!(QuadOp::zeros(5).unwrap().apply(&x).unwrap().amax(), 0.0);
        let op = QuadOp::new(DMatrix::from_element(1, 1, 1.5)).unwrap();
        let y = op.apply(&DVector::from_element(1, 3.0)).unwrap();
        assert_eq!(y[0], 1.5 * 9.0);
        assert_eq!(op.energy_residual(&DVector::from_element(1, 3.0)).unwrap(), 1.5 * 27.0);
    }

    #[test]
    fn apply_matches_triple_loop() {
        let op = random_op(3, 42);
        let x = random_vec(3, 43);
        let y = op.apply(&x).unwrap();
        for j in 0..3 {
            let mut brute = 0.0;
            for i in 0..3 {
                for k in 0..3 {
                    brute += op.get(i, j, k) * x[i] * x[k];
                }
            }
            assert!((y[j] - brute).abs() <= 1e-13 * brute.abs().max(1.0));
        }
        let mut e = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    e += op.get(i, j, k) * x[j] * x[i] * x[k];
                }
            }
        }
        let r = op.energy_residual(&x).unwrap();
        assert!((r - e).abs() <= 1e-13 * e.abs().max(1.0));
    }

    #[test]
    fn apply_rejects_wrong_length() {
        let op = QuadOp::zeros(3).unwrap();
        assert!(matches!(
            op.apply(&DVector::zeros(2)),
            Err(EpqError::DimensionMismatch { .. })
        ));
        assert!(op.energy_residual(&DVector::zeros(4)).is_err());
    }

    #[test]
    fn skew_blocks_preserve_energy() {
        for n in 1..7 {
            let op = skew_block(n, n as u64);
            let report = op.energy_check(1e-12);
            assert!(report.preserving, "{report:?}");
            assert_eq!(report.conditions_checked, n * (n + 1) * (n + 2) / 6);
            let x = random_vec(n, 99);
            let r = op.energy_residual(&x).unwrap();
            assert!(r.abs() <= 1e-12 * op.max_abs() * x.norm().powi(3));
        }
    }

    #[test]
    fn single_cubic_entry_fails_with_residual_six() {
        let mut op = QuadOp::zeros(2).unwrap();
        op.set(0, 0, 0, 1.0);
        let report = op.energy_check(1e-12);
        assert!(!report.preserving);
        assert_eq!(report.worst_triple, (1, 1, 1));
        assert_eq!(report.worst_residual, 6.0);
        assert!(matches!(
            op.require_energy_preserving(1e-9),
            Err(EpqError::NotEnergyPreserving { triple: (1, 1, 1), .. })
        ));
    }

    #[test]
    fn one_dimensional_operator_preserves_energy_only_when_zero() {
        assert!(QuadOp::zeros(1).unwrap().is_energy_preserving(0.0));
        let op = QuadOp::new(DMatrix::from_element(1, 1, 1e-3)).unwrap();
        assert!(!op.is_energy_preserving(1e-9));
    }

    #[test]
    fn equivalence_examples() {
        let h = random_op(4, 5);
        assert!(h.equivalent_to(&h, 10, 1e-12).unwrap());

        // shift mass between the two orderings of one product
        let mut g = h.clone();
        g.add(0, 2, 3, 1.0);
        g.add(3, 2, 0, -1.0);
        assert!(h.equivalent_to(&g, 10, 1e-12).unwrap());

        // x_i² terms have no partner
        let mut g = h.clone();
        g.add(1, 2, 1, 1e-3);
        assert!(!h.equivalent_to(&g, 10, 1e-6).unwrap());

        assert!(h.equivalent_to(&QuadOp::zeros(3).unwrap(), 1, 1e-6).is_err());
        assert!(h.equivalent_to(&h, 0, 1e-6).is_err());
    }

    #[test]
    fn sparse_matches_dense() {
        let mut s = SparseQuadOp::new(4);
        s.add(0, 1, 2, 1.0);
        s.add(0, 2, 1, -1.0);
        s.add(3, 3, 1, 2.0);
        s.add(3, 1, 3, -2.0);
        let d = s.to_dense().unwrap();
        let x = random_vec(4, 7);
        assert!((s.apply(&x).unwrap() - d.apply(&x).unwrap()).amax() < 1e-14);
        assert_eq!(s.energy_check(1e-12).preserving, d.energy_check(1e-12).preserving);
        s.add(2, 2, 2, 0.5);
        let r = s.energy_check(1e-12);
        assert!(!r.preserving);
        assert_eq!(r.worst_triple, (3, 3, 3));
    }

    #[test]
    fn quad_system_rhs() {
        let h = skew_block(2, 3);
        let sys = QuadSystem::new(
            DMatrix::identity(2, 2),
            h.clone(),
            DMatrix::from_element(2, 1, 1.0),
            DVector::from_element(2, 0.5),
        )
        .unwrap();
        let x = DVector::from_vec(vec![1.0, -2.0]);
        let u = DVector::from_element(1, 3.0);
        let expect = &x + h.apply(&x).unwrap() + DVector::from_element(2, 3.5);
        assert!((sys.rhs(&x, Some(&u)) - expect).amax() < 1e-14);
        assert!(QuadSystem::new(DMatrix::identity(3, 3), h, DMatrix::zeros(2, 0), DVector::zeros(2)).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn energy_residual_is_dot_of_apply(n in 1usize..8, seed in 0u64..1000) {
                let op = random_op(n, seed);
                let x = random_vec(n, seed + 1);
                let lhs = op.energy_residual(&x).unwrap();
                let rhs = x.dot(&op.apply(&x).unwrap());
                prop_assert!((lhs - rhs).abs() <= 1e-13 * lhs.abs().max(1.0));
            }

            #[test]
            fn apply_is_homogeneous_of_degree_two(n in 1usize..8, seed in 0u64..1000, alpha in -5.0f64..5.0) {
                let op = random_op(n, seed);
                let x = random_vec(n, seed + 2);
                let lhs = op.apply(&(&x * alpha)).unwrap();
                let rhs = op.apply(&x).unwrap() * (alpha * alpha);
                prop_assert!((lhs - &rhs).amax() <= 1e-13 * rhs.amax().max(1.0));
            }

            #[test]
            fn entrywise_condition_implies_zero_energy(n in 1usize..7, seed in 0u64..1000) {
                let op = skew_block(n, seed);
                prop_assert!(op.is_energy_preserving(1e-14));
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for _ in 0..100 {
                    let x = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                    let r = op.energy_residual(&x).unwrap();
                    prop_assert!(r.abs() <= 1e-10 * op.frobenius_norm() * x.norm().powi(3));
                }
            }

            #[test]
            fn equivalent_operators_agree_on_vectors(n in 2usize..7, seed in 0u64..1000) {
                let h = random_op(n, seed);
                let mut g = h.clone();
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xff);
                for j in 0..n {
                    for i in 0..n {
                        for k in i + 1..n {
                            let d: f64 = rng.sample(StandardNormal);
                            g.add(i, j, k, d);
                            g.add(k, j, i, -d);
                        }
                    }
                }
                prop_assert!(h.equivalent_to(&g, 5, 1e-11).unwrap());
                for _ in 0..100 {
                    let x = random_unit_vector(&mut rng, n);
                    let a = h.apply(&x).unwrap();
                    let b = g.apply(&x).unwrap();
                    prop_assert!((&a - &b).norm() <= 1e-11 * a.norm().max(1.0));
                }
            }
        }
    }
}
