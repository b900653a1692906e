//! Operator inference on data from a known quadratic model whose
//! sub-matrices are skew-symmetric: standard versus energy-preserving fits.
//!
//! ```text
//! cargo run --example synthetic_opinf
//! ```

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use epquad::opinf::{self, InferenceMode, ReducedModel, SweepConfig, TrainingData};
use epquad::{rom, skewrep};

fn main() -> epquad::Result<()> {
    let r = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let truth = ReducedModel {
        c_hat: DVector::zeros(r),
        a_hat: DMatrix::from_fn(r, r, |i, j| if i == j { -1.0 } else { rng.random_range(-0.3..0.3) }),
        h_hat: skewrep::random_skew_block(r, &mut rng)?,
        b_hat: DMatrix::zeros(r, 0),
        mode: InferenceMode::EnergyPreserving,
        lambdas: vec![0.0; r],
    };

    // Several short trajectories from random initial states.
    let (dt, steps) = (0.01, 99);
    let mut states = Vec::new();
    for _ in 0..5 {
        let x0 = DVector::from_fn(r, |_, _| rng.random_range(-1.0..1.0));
        let traj = rom::integrate_rom(&truth, &x0, dt, steps)?;
        states.extend(traj.column_iter().map(|c| c.into_owned()));
    }
    let x = DMatrix::from_columns(&states);
    let xdot = DMatrix::from_columns(&states.iter().map(|s| truth.rhs(s, None)).collect::<Vec<_>>());
    let data = TrainingData::new(x, xdot, None, false)?;

    let x0 = DVector::from_vec(vec![0.5, -0.4, 0.3]);
    let reference = rom::integrate_rom(&truth, &x0, dt, 400)?;
    for mode in [InferenceMode::Standard, InferenceMode::EnergyPreserving] {
        let fit = opinf::infer(&data, mode, &SweepConfig::fixed(1e-10))?;
        let traj = rom::integrate_rom(&fit.model, &x0, dt, 400)?;
        let rel = (&traj - &reference).norm() / reference.norm();
        println!(
            "{mode:>9}: quadratic unknowns {:3}, skew defect {:.1e}, energy-preserving {}, trajectory error {rel:.2e}",
            fit.total_quadratic_unknowns(),
            fit.model.h_hat.skew_defect(),
            fit.model.h_hat.is_energy_preserving(1e-12),
        );
    }
    Ok(())
}
