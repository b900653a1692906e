//! Library results checked against independently written oracles.

mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use epquad::burgers2d::{self, BurgersConfig};
use epquad::constraints::{self, build_system, vectorize};
use epquad::opinf::{self, select_lcurve, InferenceMode, SweepConfig, TrainingData};
use epquad::skewrep::{self, FreeEntrySpec};
use epquad::QuadOp;

#[test]
fn energy_residual_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in 1..=6 {
        let h = QuadOp::from_fn(n, |_, _, _| rng.random_range(-1.0..1.0)).unwrap();
        let x = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let got = h.energy_residual(&x).unwrap();
        assert!((got - common::energy_by_loops(&h, &x)).abs() < 1e-12);
    }
}

#[test]
fn galerkin_projection_of_advection_is_energy_preserving() {
    let cfg = BurgersConfig { dx: 0.125, horizon: 0.5, ..Default::default() };
    let ops = burgers2d::build_operators(&cfg).unwrap();
    let h = ops.advection_dense().unwrap();
    let snaps = burgers2d::simulate(&cfg).unwrap();
    let pod = epquad::rom::pod_reduce(&snaps.x, &snaps.xdot, 4).unwrap();
    let v = &pod.basis.v;
    let r = v.ncols();
    // Ĥ(i,j,k) = Σ v_{pj} h(q,p,s) v_{qi} v_{sk}
    let hr = QuadOp::from_fn(r, |i, j, k| {
        let mut acc = 0.0;
        for q in 0..h.n() {
            for p in 0..h.n() {
                for s in 0..h.n() {
                    let e = h.get(q, p, s);
                    if e != 0.0 {
                        acc += v[(p, j)] * e * v[(q, i)] * v[(s, k)];
                    }
                }
            }
        }
        acc
    })
    .unwrap();
    assert!(hr.is_energy_preserving(1e-12));
    let skew = skewrep::to_skew_block(&hr, &FreeEntrySpec::new()).unwrap();
    assert!(skew.equivalent_to(&hr, 20, 1e-10).unwrap());
}

#[test]
fn ep_inference_satisfies_skew_constraints() {
    let truth = common::skew_model(4, 3);
    let (mut data, _) = common::trajectory_data(&truth, 4, 0.02, 60, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    data.xdot_hat += DMatrix::from_fn(data.r(), data.m(), |_, _| 0.01 * rng.random_range(-1.0..1.0));
    let fit = opinf::infer_energy_preserving(&data, &SweepConfig::default()).unwrap();
    let sys = build_system(4).unwrap();
    let c = &sys.c_mat * vectorize(&fit.model.h_hat);
    assert!(c.amax() <= 1e-13);
    assert_eq!(fit.total_quadratic_unknowns(), 4 * 4 * 3 / 2);
}

#[test]
fn shared_lambda_standard_equals_joint_problem() {
    for (r, seed) in [(2, 10u64), (3, 11), (4, 12)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = 120;
        let x = DMatrix::from_fn(r, m, |_, _| rng.random_range(-1.0..1.0));
        let xdot = DMatrix::from_fn(r, m, |_, _| rng.random_range(-1.0..1.0));
        let data = TrainingData::new(x.clone(), xdot.clone(), None, false).unwrap();
        let sweep = SweepConfig { shared_lambda: true, ..SweepConfig::default() };
        let fit = opinf::infer_standard(&data, &sweep).unwrap();
        let lambda = fit.model.lambdas[0];
        let (a, q) = common::joint_frobenius(&x, &xdot, lambda, r as f64);
        assert!((&fit.model.a_hat - &a).amax() <= 1e-9 * a.amax());
        let mut t = 0;
        for i in 0..r {
            for k in i..r {
                for j in 0..r {
                    let got = common::product_coefficient(&fit.model.h_hat, j, i, k);
                    assert!((got - q[(j, t)]).abs() <= 1e-9 * q.amax());
                }
                t += 1;
            }
        }
    }
}

#[test]
fn ep_fit_trajectories_match_training_data() {
    let truth = common::skew_model(3, 21);
    let (data, starts) = common::trajectory_data(&truth, 5, 0.01, 99, 22);
    let fit = opinf::infer(&data, InferenceMode::EnergyPreserving, &SweepConfig::fixed(1e-10)).unwrap();
    for x0 in starts {
        let want = epquad::rom::integrate_rom(&truth, &x0, 0.01, 99).unwrap();
        let got = epquad::rom::integrate_rom(&fit.model, &x0, 0.01, 99).unwrap();
        assert!((&got - &want).norm() <= 1e-6 * want.norm());
    }
}

#[test]
fn kron_unique_against_pair_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let x = DMatrix::from_fn(4, 7, |_, _| rng.random_range(-2.0..2.0));
    let k = opinf::kron_unique(&x);
    let mut rows = Vec::new();
    for i in 0..4 {
        for j in 0..4 {
            if i <= j {
                rows.push((i, j));
            }
        }
    }
    for (t, (i, j)) in rows.iter().enumerate() {
        for s in 0..7 {
            assert_eq!(k[(t, s)], x[(*i, s)] * x[(*j, s)]);
        }
    }
}

#[test]
fn lcurve_picks_corner_of_tikhonov_problem() {
    // Diagonal problem with a clear noise floor: the corner sits where the
    // filter factor turns off the noise-dominated modes.
    let sigma: Vec<f64> = (0..30).map(|i| 10f64.powf(-(i as f64) / 5.0)).collect();
    let beta: Vec<f64> = sigma.iter().map(|s| s + 1e-3).collect();
    let lambdas: Vec<f64> = (0..50).map(|i| 10f64.powf(-8.0 + 8.0 * i as f64 / 49.0)).collect();
    let (mut rho, mut eta) = (Vec::new(), Vec::new());
    for &l in &lambdas {
        let (mut r2, mut e2) = (0.0, 0.0);
        for (s, b) in sigma.iter().zip(&beta) {
            let f = s * s / (s * s + l);
            r2 += ((1.0 - f) * b).powi(2);
            e2 += (f * b / s).powi(2);
        }
        rho.push(r2.sqrt());
        eta.push(e2.sqrt());
    }
    let choice = select_lcurve(&lambdas, &rho, &eta).unwrap();
    assert!(!choice.fallback);
    let picked = lambdas[choice.index];
    assert!(picked > 1e-7 && picked < 1e-4, "picked {picked}");
}

#[test]
fn row_skew_and_block_forms_through_files() {
    let dir = std::env::temp_dir().join(format!("epquad-oracle-files-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let h = skewrep::random_energy_preserving(4, 77).unwrap();
    let path = dir.join("h.txt");
    epquad::io::write_quadop(&path, &h).unwrap();
    let back = epquad::io::read_quadop(&path).unwrap();
    assert_eq!(back, h);
    let spec: FreeEntrySpec = "# free entries\n2 3 1 0.5\n1 4 2 -1.25\n".parse().unwrap();
    let s = skewrep::to_skew_block(&back, &spec).unwrap();
    assert_eq!(s.get(1, 2, 0), 0.5);
    assert!(s.equivalent_to(&h, 20, 1e-10).unwrap());
    let lsq = constraints::solve_equivalent(&h).unwrap();
    assert!(lsq.equivalent_to(&s, 20, 1e-9).unwrap());
    std::fs::remove_dir_all(&dir).ok();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn skew_block_transform_is_equivalent_and_skew(n in 1usize..8, seed in any::<u64>()) {
        let h = skewrep::random_energy_preserving(n, seed).unwrap();
        let s = skewrep::to_skew_block(&h, &FreeEntrySpec::new()).unwrap();
        prop_assert!(s.skew_defect() <= 1e-12 * s.max_abs().max(1.0));
        prop_assert!(s.pair_sum_defect(&h).unwrap() <= 1e-10 * h.max_abs().max(1.0));
        prop_assert!(s.is_energy_preserving(1e-10));
    }

    #[test]
    fn free_entries_are_honored(n in 3usize..7, seed in any::<u64>(), value in -5.0f64..5.0) {
        let h = skewrep::random_energy_preserving(n, seed).unwrap();
        let free = FreeEntrySpec::new().with(2, 3, 1, value).unwrap();
        let s = skewrep::to_skew_block(&h, &free).unwrap();
        prop_assert_eq!(s.get(1, 2, 0), value);
        prop_assert!(s.equivalent_to(&h, 5, 1e-9).unwrap());
    }

    #[test]
    fn energy_preserving_inference_never_breaks_structure(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = 3;
        let x = DMatrix::from_fn(r, 40, |_, _| rng.random_range(-1.0..1.0));
        let xdot = DMatrix::from_fn(r, 40, |_, _| rng.random_range(-1.0..1.0));
        let data = TrainingData::new(x, xdot, None, true).unwrap();
        let fit = opinf::infer_energy_preserving(&data, &SweepConfig::default()).unwrap();
        prop_assert_eq!(fit.model.h_hat.skew_defect(), 0.0);
        for _ in 0..5 {
            let v = DVector::from_fn(r, |_, _| rng.random_range(-1.0..1.0));
            let e = fit.model.h_hat.energy_residual(&v).unwrap();
            prop_assert!(e.abs() <= 1e-12 * fit.model.h_hat.frobenius_norm().max(1.0) * v.norm().powi(3));
        }
    }
}
