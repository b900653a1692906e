//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use epquad::opinf::{InferenceMode, ReducedModel, TrainingData};
use epquad::{rom, skewrep, QuadOp};

/// `x_i x_k` coefficient of row `j`: the pair sum, or the single entry on
/// the diagonal.
pub fn product_coefficient(h: &QuadOp, j: usize, i: usize, k: usize) -> f64 {
    if i == k {
        h.get(i, j, i)
    } else {
        h.get(i, j, k) + h.get(k, j, i)
    }
}

/// Joint Tikhonov problem `min ‖O D − Ẋ‖_F² + λ Σ_t w_t ‖O_{:,t}‖²` over
/// `[x; unique products]`, solved through its normal equations.
/// Returns `(A, Q)` with `Q[(j, t)]` the coefficient of product `t`.
pub fn joint_frobenius(x: &DMatrix<f64>, xdot: &DMatrix<f64>, lambda: f64, quad_weight: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (r, m) = x.shape();
    let pairs: Vec<(usize, usize)> = (0..r).flat_map(|i| (i..r).map(move |k| (i, k))).collect();
    let p = r + pairs.len();
    let d = DMatrix::from_fn(p, m, |t, s| {
        if t < r {
            x[(t, s)]
        } else {
            let (i, k) = pairs[t - r];
            x[(i, s)] * x[(k, s)]
        }
    });
    let mut normal = &d * d.transpose();
    for t in 0..p {
        normal[(t, t)] += lambda * if t < r { 1.0 } else { quad_weight };
    }
    let rhs = &d * xdot.transpose();
    let o = normal.cholesky().expect("normal matrix is SPD").solve(&rhs).transpose();
    (o.columns(0, r).into_owned(), o.columns(r, pairs.len()).into_owned())
}

pub fn skew_model(r: usize, seed: u64) -> ReducedModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ReducedModel {
        c_hat: DVector::from_fn(r, |_, _| 0.1 * rng.sample::<f64, _>(StandardNormal)),
        a_hat: DMatrix::from_fn(r, r, |i, j| if i == j { -0.5 } else { 0.3 * rng.sample::<f64, _>(StandardNormal) }),
        h_hat: skewrep::random_skew_block(r, &mut rng).unwrap(),
        b_hat: DMatrix::zeros(r, 0),
        mode: InferenceMode::EnergyPreserving,
        lambdas: vec![0.0; r],
    }
}

/// `trajectories` RK4 runs of `steps + 1` states each from random initial
/// conditions, with exact derivatives. Also returns the initial states.
pub fn trajectory_data(model: &ReducedModel, trajectories: usize, dt: f64, steps: usize, seed: u64) -> (TrainingData, Vec<DVector<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = model.r();
    let mut states = Vec::new();
    let mut starts = Vec::new();
    for _ in 0..trajectories {
        let x0 = DVector::from_fn(r, |_, _| rng.random_range(-1.0..1.0));
        let traj = rom::integrate_rom(model, &x0, dt, steps).unwrap();
        states.extend(traj.column_iter().map(|c| c.into_owned()));
        starts.push(x0);
    }
    let x = DMatrix::from_columns(&states);
    let xdot = DMatrix::from_columns(&states.iter().map(|s| model.rhs(s, None)).collect::<Vec<_>>());
    (TrainingData::new(x, xdot, None, model.c_hat.amax() > 0.0).unwrap(), starts)
}

/// Energy residual by explicit triple loop.
pub fn energy_by_loops(h: &QuadOp, x: &DVector<f64>) -> f64 {
    let n = h.n();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                acc += x[j] * h.get(i, j, k) * x[i] * x[k];
            }
        }
    }
    acc
}
