//! Equivalent representations of energy-preserving quadratic operators.
//!
//! Every energy-preserving `H` admits an equivalent `H̃` whose sub-matrices
//! are all skew-symmetric ([`to_skew_block`]), as well as one that is
//! skew-symmetric between rows of different sub-matrices
//! ([`to_row_skew`]). Both are assembled entry by entry in echelon order:
//!
//! * entries with a repeated index are fixed by the data (the `x_i²`
//!   coefficients `h_{i_{j,i}}` and their mirrors),
//! * for each triple of distinct indices `{a, b, c}` the six entries are
//!   linked by three pair-sum equations of rank two, leaving one free value.
//!   That value is taken from a [`FreeEntrySpec`] (default 0) and the
//!   remaining entries follow by alternating the pair-sum and skew relations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{EpqError, Result};
use crate::quadop::QuadOp;

/// Relative tolerance of the energy-preservation precondition.
pub const PRECONDITION_TOL: f64 = 1e-9;

/// Number of freely selectable entries, `n³/6 − n²/2 + n/3 = C(n, 3)`.
pub fn free_entry_count(n: usize) -> usize {
    if n < 3 {
        0
    } else {
        n * (n - 1) * (n - 2) / 6
    }
}

/// Values for the free entries of the distinct-index triples.
///
/// Each assignment pins entry `h̃(i, j, k)` (sub-matrix `i`, row `j`,
/// column `k`, all distinct, 0-based). At most one assignment per unordered
/// triple; unlisted triples default to 0 in their canonical slot.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FreeEntrySpec {
    assignments: BTreeMap<(usize, usize, usize), ((usize, usize, usize), f64)>,
}

impl FreeEntrySpec {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an assignment with 0-based indices.
    pub fn assign(&mut self, slot: (usize, usize, usize), value: f64) -> Result<()> {
        let (i, j, k) = slot;
        if i == j || j == k || i == k {
            return Err(EpqError::InvalidArgument(format!(
                "free entry ({}, {}, {}) must have three distinct indices",
                i + 1,
                j + 1,
                k + 1
            )));
        }
        if !value.is_finite() {
            return Err(EpqError::InvalidArgument(format!(
                "free entry ({}, {}, {}) has non-finite value",
                i + 1,
                j + 1,
                k + 1
            )));
        }
        let key = sorted_triple(i, j, k);
        if self.assignments.contains_key(&key) {
            return Err(EpqError::InvalidArgument(format!(
                "triple {{{}, {}, {}}} assigned more than once",
                key.0 + 1,
                key.1 + 1,
                key.2 + 1
            )));
        }
        self.assignments.insert(key, (slot, value));
        Ok(())
    }

    /// Builder form of [`assign`](Self::assign) taking 1-based indices.
    pub fn with(mut self, i: usize, j: usize, k: usize, value: f64) -> Result<Self> {
        if i == 0 || j == 0 || k == 0 {
            return Err(EpqError::InvalidArgument("indices are 1-based".into()));
        }
        self.assign((i - 1, j - 1, k - 1), value)?;
        Ok(self)
    }

    /// Reads the canonical slot of every triple off `h`. Feeding the result
    /// back into [`to_skew_block`] reproduces a skew-block `h` exactly.
    pub fn from_operator(h: &QuadOp) -> Self {
        let mut spec = Self::new();
        for_each_distinct_triple(h.n(), |a, b, c| {
            let slot = canonical_slot(a, b, c);
            spec.assignments
                .insert((a, b, c), (slot, h.get(slot.0, slot.1, slot.2)));
        });
        spec
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    /// Assignments as `((i, j, k), value)` with 0-based indices.
    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize, usize), f64)> + '_ {
        self.assignments.values().copied()
    }

    fn validate(&self, n: usize) -> Result<()> {
        for ((i, j, k), _) in self.iter() {
            if i >= n || j >= n || k >= n {
                return Err(EpqError::InvalidArgument(format!(
                    "free entry ({}, {}, {}) out of range for n = {n}",
                    i + 1,
                    j + 1,
                    k + 1
                )));
            }
        }
        Ok(())
    }

    fn lookup(&self, a: usize, b: usize, c: usize) -> ((usize, usize, usize), f64) {
        self.assignments
            .get(&(a, b, c))
            .copied()
            .unwrap_or((canonical_slot(a, b, c), 0.0))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        text.parse().map_err(|e: EpqError| match e {
            EpqError::Parse { message, .. } => EpqError::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }
}

/// Text form: one `i j k value` line per assignment (1-based), `#` comments.
impl FromStr for FreeEntrySpec {
    type Err = EpqError;

    fn from_str(s: &str) -> Result<Self> {
        let mut spec = Self::new();
        for (lineno, raw) in s.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| EpqError::Parse {
                path: "<free-entry spec>".into(),
                message: format!("line {}: {message}", lineno + 1),
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(parse_err(format!("expected `i j k value`, got `{line}`")));
            }
            let mut idx = [0usize; 3];
            for (slot, field) in idx.iter_mut().zip(&fields[..3]) {
                *slot = field
                    .parse()
                    .map_err(|_| parse_err(format!("bad index `{field}`")))?;
            }
            let value: f64 = fields[3]
                .parse()
                .map_err(|_| parse_err(format!("bad value `{}`", fields[3])))?;
            spec = spec.with(idx[0], idx[1], idx[2], value)?;
        }
        Ok(spec)
    }
}

impl fmt::Display for FreeEntrySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for ((i, j, k), v) in self.iter() {
            writeln!(f, "{} {} {} {:.17e}", i + 1, j + 1, k + 1, v)?;
        }
        Ok(())
    }
}

fn sorted_triple(i: usize, j: usize, k: usize) -> (usize, usize, usize) {
    let mut t = [i, j, k];
    t.sort_unstable();
    (t[0], t[1], t[2])
}

/// Seed slot for `a < b < c`: sub-matrix `b`, row `c`, column `a`.
fn canonical_slot(a: usize, b: usize, c: usize) -> (usize, usize, usize) {
    (b, c, a)
}

fn for_each_distinct_triple(n: usize, mut f: impl FnMut(usize, usize, usize)) {
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                f(a, b, c);
            }
        }
    }
}

/// Transforms an energy-preserving `h` into an equivalent operator with
/// skew-symmetric sub-matrices.
pub fn to_skew_block(h: &QuadOp, free: &FreeEntrySpec) -> Result<QuadOp> {
    h.require_energy_preserving(PRECONDITION_TOL)?;
    free.validate(h.n())?;
    let n = h.n();
    let mut out = QuadOp::zeros(n)?;

    // Sub-matrix diagonals stay zero. x_i² coefficients carry over unchanged,
    // their mirrors take the opposite sign.
    for i in 0..n {
        for j in 0..n {
            if j != i {
                let v = h.get(i, j, i);
                out.set(i, j, i, v);
                out.set(i, i, j, -v);
            }
        }
    }

    for_each_distinct_triple(n, |a, b, c| {
        let ((i, j, k), value) = free.lookup(a, b, c);
        out.set(i, j, k, value);
        out.set(i, k, j, -value);
        // row j pairs {i, k}; then skew in sub-matrix k
        let v = h.pair_sum(i, j, k) - value;
        out.set(k, j, i, v);
        out.set(k, i, j, -v);
        // row i pairs {k, j}; then skew in sub-matrix j
        let w = h.pair_sum(k, i, j) + v;
        out.set(j, i, k, w);
        out.set(j, k, i, -w);
    });
    Ok(out)
}

/// Transforms an energy-preserving `h` into an equivalent operator `g`
/// with `g_{i_{k,j}} = −g_{k_{i,j}}`, using default (zero) free values.
pub fn to_row_skew(h: &QuadOp) -> Result<QuadOp> {
    to_row_skew_with(h, &FreeEntrySpec::new())
}

/// [`to_row_skew`] with explicit free values.
pub fn to_row_skew_with(h: &QuadOp, free: &FreeEntrySpec) -> Result<QuadOp> {
    h.require_energy_preserving(PRECONDITION_TOL)?;
    free.validate(h.n())?;
    let n = h.n();
    let mut out = QuadOp::zeros(n)?;

    // g(i, i, ·) = 0 by row skew; x_i² coefficients unchanged.
    for i in 0..n {
        for j in 0..n {
            if j != i {
                let v = h.get(i, j, i);
                out.set(i, j, i, v);
                out.set(j, i, i, -v);
            }
        }
    }

    for_each_distinct_triple(n, |a, b, c| {
        let ((i, j, k), value) = free.lookup(a, b, c);
        out.set(i, j, k, value);
        out.set(j, i, k, -value);
        // row j pairs {i, k}; then row skew between sub-matrices k and j
        let v = h.pair_sum(i, j, k) - value;
        out.set(k, j, i, v);
        out.set(j, k, i, -v);
        // row k pairs {j, i}; then row skew between sub-matrices i and k
        let w = h.pair_sum(j, k, i) + v;
        out.set(i, k, j, w);
        out.set(k, i, j, -w);
    });
    Ok(out)
}

/// Random energy-preserving operator without skew-symmetric blocks.
///
/// Draws a skew-block operator with standard-normal entries, then moves a
/// random amount between the two orderings `h_{i_{j,k}}`, `h_{k_{j,i}}` of
/// every product `x_i x_k` (`i ≠ k`), so all pair sums are preserved.
pub fn random_energy_preserving(n: usize, seed: u64) -> Result<QuadOp> {
    if n == 0 {
        return Err(EpqError::InvalidArgument("n must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = random_skew_block(n, &mut rng)?;
    for j in 0..n {
        for i in 0..n {
            for k in i + 1..n {
                let shift: f64 = rng.sample(StandardNormal);
                h.add(i, j, k, shift);
                h.add(k, j, i, -shift);
            }
        }
    }
    Ok(h)
}

/// Alias of [`random_energy_preserving`].
pub fn scramble_equivalent(n: usize, seed: u64) -> Result<QuadOp> {
    random_energy_preserving(n, seed)
}

/// Operator with skew-symmetric sub-matrices and standard-normal entries.
pub fn random_skew_block(n: usize, rng: &mut impl Rng) -> Result<QuadOp> {
    let mut h = QuadOp::zeros(n)?;
    for i in 0..n {
        for j in 0..n {
            for k in j + 1..n {
                let v: f64 = rng.sample(StandardNormal);
                h.set(i, j, k, v);
                h.set(i, k, j, -v);
            }
        }
    }
    Ok(h)
}

/// Distinct unordered triples of `{0, …, n−1}`, ascending.
pub fn distinct_triples(n: usize) -> BTreeSet<(usize, usize, usize)> {
    let mut out = BTreeSet::new();
    for_each_distinct_triple(n, |a, b, c| {
        out.insert((a, b, c));
    });
    out
}
