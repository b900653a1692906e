//! POD reduction, reduced-model integration and energy diagnostics.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{EpqError, Result};
use crate::ode;
use crate::opinf::ReducedModel;

/// A trajectory is declared divergent once its norm exceeds this multiple of
/// `max(1, ‖x̂₀‖)`.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

/// Left singular vectors of a snapshot matrix, column signs fixed so that
/// each column's largest-magnitude entry is positive.
#[derive(Clone, Debug)]
pub struct PodBasis {
    pub v: DMatrix<f64>,
    pub singular_values: DVector<f64>,
}

/// Full thin SVD of the snapshots, truncated on demand.
#[derive(Clone, Debug)]
pub struct PodDecomposition {
    u: DMatrix<f64>,
    sigma: DVector<f64>,
}

impl PodDecomposition {
    pub fn new(x: &DMatrix<f64>) -> Result<Self> {
        if x.is_empty() {
            return Err(EpqError::InvalidArgument("empty snapshot matrix".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(EpqError::InvalidArgument("non-finite snapshot entries".into()));
        }
        let svd = x.clone().svd(true, false);
        let mut u = svd
            .u
            .ok_or_else(|| EpqError::InternalConsistency("SVD returned no U".into()))?;
        let mut sigma = svd.singular_values;
        // nalgebra does not promise an ordering
        let mut order: Vec<usize> = (0..sigma.len()).collect();
        order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]).then(a.cmp(&b)));
        u = DMatrix::from_fn(u.nrows(), order.len(), |i, c| u[(i, order[c])]);
        sigma = DVector::from_fn(order.len(), |c, _| sigma[order[c]]);
        for mut col in u.column_iter_mut() {
            let pivot = col.iter().copied().fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
            if pivot < 0.0 {
                col.neg_mut();
            }
        }
        Ok(Self { u, sigma })
    }

    pub fn max_rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn singular_values(&self) -> &DVector<f64> {
        &self.sigma
    }

    /// Numerical rank at `1e-10 · σ₁`.
    pub fn numerical_rank(&self) -> usize {
        let tol = 1e-10 * self.sigma.get(0).copied().unwrap_or(0.0);
        self.sigma.iter().filter(|&&s| s > tol).count()
    }

    pub fn basis(&self, r: usize) -> Result<PodBasis> {
        if r == 0 || r > self.max_rank() {
            return Err(EpqError::InvalidArgument(format!(
                "r = {r} outside 1..={}",
                self.max_rank()
            )));
        }
        Ok(PodBasis {
            v: self.u.columns(0, r).into_owned(),
            singular_values: self.sigma.rows(0, r).into_owned(),
        })
    }
}

impl PodBasis {
    pub fn r(&self) -> usize {
        self.v.ncols()
    }

    pub fn project(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.v.tr_mul(x)
    }

    pub fn lift(&self, xhat: &DMatrix<f64>) -> DMatrix<f64> {
        &self.v * xhat
    }

    /// `V Vᵀ X`.
    pub fn reproject(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.lift(&self.project(x))
    }

    pub fn orthonormality_defect(&self) -> f64 {
        (self.v.tr_mul(&self.v) - DMatrix::identity(self.r(), self.r())).amax()
    }
}

/// Output of [`pod_reduce`].
#[derive(Clone, Debug)]
pub struct Reduction {
    pub basis: PodBasis,
    pub xhat: DMatrix<f64>,
    pub xdot_hat: DMatrix<f64>,
    pub warnings: Vec<String>,
}

pub fn pod_reduce(x: &DMatrix<f64>, xdot: &DMatrix<f64>, r: usize) -> Result<Reduction> {
    let pod = PodDecomposition::new(x)?;
    reduce_with(&pod, x, xdot, r)
}

/// [`pod_reduce`] reusing an existing decomposition of `x`.
pub fn reduce_with(pod: &PodDecomposition, x: &DMatrix<f64>, xdot: &DMatrix<f64>, r: usize) -> Result<Reduction> {
    if xdot.shape() != x.shape() {
        return Err(EpqError::DimensionMismatch {
            expected: x.ncols(),
            actual: xdot.ncols(),
            context: "derivative snapshots",
        });
    }
    let basis = pod.basis(r)?;
    let mut warnings = Vec::new();
    let rank = pod.numerical_rank();
    if rank < r {
        warnings.push(format!(
            "snapshot rank {rank} < r = {r}; trailing modes carry no energy"
        ));
    }
    Ok(Reduction {
        xhat: basis.project(x),
        xdot_hat: basis.project(xdot),
        basis,
        warnings,
    })
}

/// RK4 trajectory of the reduced model with no input, `steps + 1` columns.
pub fn integrate_rom(model: &ReducedModel, x0: &DVector<f64>, dt: f64, steps: usize) -> Result<DMatrix<f64>> {
    integrate_rom_with_input(model, x0, dt, steps, |_| None)
}

pub fn integrate_rom_with_input(
    model: &ReducedModel,
    x0: &DVector<f64>,
    dt: f64,
    steps: usize,
    input: impl Fn(f64) -> Option<DVector<f64>>,
) -> Result<DMatrix<f64>> {
    if x0.len() != model.r() {
        return Err(EpqError::DimensionMismatch {
            expected: model.r(),
            actual: x0.len(),
            context: "reduced initial state",
        });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(EpqError::InvalidArgument("non-finite initial state".into()));
    }
    let limit = DIVERGENCE_FACTOR * x0.norm().max(1.0);
    let traj = ode::rk4(
        |t, x| {
            if x.norm() > limit {
                // poison the step so the integrator reports the time
                return DVector::from_element(x.len(), f64::NAN);
            }
            model.rhs(x, input(t).as_ref())
        },
        x0,
        dt,
        steps,
    )
    .map_err(|e| EpqError::UnstableModel { time: e.time })?;
    if let Some(s) = (0..traj.ncols()).find(|&s| traj.column(s).norm() > limit) {
        return Err(EpqError::UnstableModel { time: s as f64 * dt });
    }
    Ok(traj)
}

/// Instantaneous contributions to `d/dt ½‖x̂‖²` and their running integrals.
#[derive(Clone, Debug, Serialize)]
pub struct EnergyTrace {
    pub times: Vec<f64>,
    pub linear: Vec<f64>,
    pub quadratic: Vec<f64>,
    pub constant: Vec<f64>,
    pub input: Vec<f64>,
    pub cumulative_linear: Vec<f64>,
    pub cumulative_quadratic: Vec<f64>,
}

impl EnergyTrace {
    pub fn total(&self, s: usize) -> f64 {
        self.linear[s] + self.quadratic[s] + self.constant[s] + self.input[s]
    }

    pub fn cumulative_total(&self) -> f64 {
        self.cumulative_linear.last().copied().unwrap_or(0.0)
            + self.cumulative_quadratic.last().copied().unwrap_or(0.0)
    }
}

pub fn trapezoid_cumulative(times: &[f64], values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for s in 0..values.len() {
        if s > 0 {
            acc += 0.5 * (times[s] - times[s - 1]) * (values[s] + values[s - 1]);
        }
        out.push(acc);
    }
    out
}

/// `inputs`, when given, holds one column per time.
pub fn energy_trace(
    model: &ReducedModel,
    traj: &DMatrix<f64>,
    times: &[f64],
    inputs: Option<&DMatrix<f64>>,
) -> Result<EnergyTrace> {
    if traj.nrows() != model.r() || traj.ncols() != times.len() {
        return Err(EpqError::DimensionMismatch {
            expected: times.len(),
            actual: traj.ncols(),
            context: "trajectory columns vs times",
        });
    }
    let m = times.len();
    let (mut linear, mut quadratic, mut constant, mut input) =
        (Vec::with_capacity(m), Vec::with_capacity(m), Vec::with_capacity(m), Vec::with_capacity(m));
    for s in 0..m {
        let x = traj.column(s).into_owned();
        linear.push(x.dot(&(&model.a_hat * &x)));
        quadratic.push(x.dot(&model.h_hat.apply(&x)?));
        constant.push(x.dot(&model.c_hat));
        input.push(match inputs {
            Some(u) if model.n_inputs() > 0 => x.dot(&(&model.b_hat * u.column(s))),
            _ => 0.0,
        });
    }
    Ok(EnergyTrace {
        cumulative_linear: trapezoid_cumulative(times, &linear),
        cumulative_quadratic: trapezoid_cumulative(times, &quadratic),
        times: times.to_vec(),
        linear,
        quadratic,
        constant,
        input,
    })
}
