//! Viscous 2D Burgers' full-order model on a periodic unit square.
//!
//! `du/dt = ν Δu + c u (u_x + u_y)`, discretized with second-order central
//! differences on `N × N` nodes `x_p = p Δx`. The advection term uses the
//! split form `c/3 [u ∘ (D u) + D (u ∘ u)]` with `D = D_x + D_y`. Since `D` is
//! skew-symmetric, `uᵀ H_a (u ⊗ u) = 0` holds exactly for the discrete
//! operator.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{EpqError, Result};
use crate::io;
use crate::ode;
use crate::quadop::{QuadOp, SparseQuadOp};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialCondition {
    /// `cos(2πx) cos(2πy)`
    ProductCosine,
    /// `sin(2πx) + sin(2πy)`
    SineSum,
}

impl InitialCondition {
    pub fn eval(self, x: f64, y: f64) -> f64 {
        use std::f64::consts::TAU;
        match self {
            Self::ProductCosine => (TAU * x).cos() * (TAU * y).cos(),
            Self::SineSum => (TAU * x).sin() + (TAU * y).sin(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BurgersConfig {
    #[serde(rename = "L")]
    pub length: f64,
    pub dx: f64,
    pub c: f64,
    pub nu: f64,
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub ic: InitialCondition,
    /// Record central-difference time derivatives instead of the exact RHS.
    pub fd_derivatives: bool,
}

impl Default for BurgersConfig {
    fn default() -> Self {
        Self {
            length: 1.0,
            dx: 0.02,
            c: 0.2,
            nu: 2e-3,
            dt: 0.01,
            horizon: 4.0,
            ic: InitialCondition::ProductCosine,
            fd_derivatives: false,
        }
    }
}

impl BurgersConfig {
    pub fn validate(&self) -> Result<Grid> {
        if !(self.c.is_finite() && self.nu.is_finite() && self.nu >= 0.0) {
            return Err(EpqError::Config(format!(
                "invalid coefficients c = {}, nu = {}",
                self.c, self.nu
            )));
        }
        self.steps()?;
        Grid::new(self.length, self.dx)
    }

    pub fn steps(&self) -> Result<usize> {
        ode::step_count(self.horizon, self.dt).ok_or_else(|| {
            EpqError::Config(format!(
                "T = {} must be a non-negative integer multiple of dt = {}",
                self.horizon, self.dt
            ))
        })
    }

    /// `(c Δt / Δx, ν Δt / Δx²)`.
    pub fn cfl_numbers(&self) -> (f64, f64) {
        (
            self.c.abs() * self.dt / self.dx,
            self.nu * self.dt / (self.dx * self.dx),
        )
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| EpqError::Config(format!("{}: {e}", path.display())))
    }
}

/// Periodic node layout; node `(ix, iy)` has index `iy·N + ix`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub side: usize,
    pub dx: f64,
    pub length: f64,
}

impl Grid {
    pub fn new(length: f64, dx: f64) -> Result<Self> {
        if !(length > 0.0 && dx > 0.0 && length.is_finite() && dx.is_finite()) {
            return Err(EpqError::Config(format!("invalid grid L = {length}, dx = {dx}")));
        }
        let ratio = length / dx;
        let side = ratio.round();
        if (ratio - side).abs() > 1e-9 * ratio || side < 3.0 {
            return Err(EpqError::Config(format!(
                "L/dx = {ratio} must be an integer of at least 3"
            )));
        }
        Ok(Self {
            side: side as usize,
            dx,
            length,
        })
    }

    pub fn n(&self) -> usize {
        self.side * self.side
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.side + ix
    }

    pub fn coords(&self, p: usize) -> (f64, f64) {
        ((p % self.side) as f64 * self.dx, (p / self.side) as f64 * self.dx)
    }

    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> DVector<f64> {
        DVector::from_fn(self.n(), |p, _| {
            let (x, y) = self.coords(p);
            f(x, y)
        })
    }

    /// Indices of `(east, west, north, south)` neighbours.
    fn neighbours(&self, p: usize) -> [usize; 4] {
        let n = self.side;
        let (ix, iy) = (p % n, p / n);
        [
            self.index((ix + 1) % n, iy),
            self.index((ix + n - 1) % n, iy),
            self.index(ix, (iy + 1) % n),
            self.index(ix, (iy + n - 1) % n),
        ]
    }
}

/// Semi-discrete operators `A_v` and `H_a`, applied matrix-free.
#[derive(Clone, Debug)]
pub struct FomOperators {
    pub grid: Grid,
    pub nu: f64,
    pub c: f64,
}

pub fn build_operators(cfg: &BurgersConfig) -> Result<FomOperators> {
    Ok(FomOperators {
        grid: cfg.validate()?,
        nu: cfg.nu,
        c: cfg.c,
    })
}

impl FomOperators {
    pub fn n(&self) -> usize {
        self.grid.n()
    }

    /// `(D u)` with `D = D_x + D_y`.
    pub fn gradient_sum(&self, u: &DVector<f64>) -> DVector<f64> {
        let s = 0.5 / self.grid.dx;
        DVector::from_fn(self.n(), |p, _| {
            let [e, w, nn, ss] = self.grid.neighbours(p);
            s * (u[e] - u[w] + u[nn] - u[ss])
        })
    }

    pub fn apply_diffusion(&self, u: &DVector<f64>) -> DVector<f64> {
        let s = self.nu / (self.grid.dx * self.grid.dx);
        DVector::from_fn(self.n(), |p, _| {
            let [e, w, nn, ss] = self.grid.neighbours(p);
            s * (u[e] + u[w] + u[nn] + u[ss] - 4.0 * u[p])
        })
    }

    pub fn apply_advection(&self, u: &DVector<f64>) -> DVector<f64> {
        let du = self.gradient_sum(u);
        let dsq = self.gradient_sum(&u.component_mul(u));
        (u.component_mul(&du) + dsq) * (self.c / 3.0)
    }

    pub fn rhs(&self, u: &DVector<f64>) -> DVector<f64> {
        self.apply_diffusion(u) + self.apply_advection(u)
    }

    /// `A_v` as a dense matrix; intended for small grids.
    pub fn diffusion_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let s = self.nu / (self.grid.dx * self.grid.dx);
        let mut a = DMatrix::zeros(n, n);
        for p in 0..n {
            a[(p, p)] -= 4.0 * s;
            for q in self.grid.neighbours(p) {
                a[(p, q)] += s;
            }
        }
        a
    }

    /// `H_a` with entries `h(p,p,q) = h(q,p,q) = c/3 · D_pq`.
    pub fn advection_sparse(&self) -> SparseQuadOp {
        let mut h = SparseQuadOp::new(self.n());
        let w = self.c / 3.0 * 0.5 / self.grid.dx;
        for p in 0..self.n() {
            let [e, west, nn, ss] = self.grid.neighbours(p);
            for (q, sign) in [(e, 1.0), (west, -1.0), (nn, 1.0), (ss, -1.0)] {
                h.add(p, p, q, sign * w);
                h.add(q, p, q, sign * w);
            }
        }
        h
    }

    /// Dense `H_a`; `n × n²` storage, so only for small grids.
    pub fn advection_dense(&self) -> Result<QuadOp> {
        if self.n() > 900 {
            return Err(EpqError::InvalidArgument(format!(
                "dense advection operator for n = {} would need {} entries",
                self.n(),
                self.n().pow(3)
            )));
        }
        self.advection_sparse().to_dense()
    }
}

/// Snapshots (columns) with their time derivatives.
#[derive(Clone, Debug)]
pub struct SnapshotSet {
    pub times: Vec<f64>,
    pub x: DMatrix<f64>,
    pub xdot: DMatrix<f64>,
    pub config: BurgersConfig,
    pub warnings: Vec<String>,
}

impl SnapshotSet {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn m(&self) -> usize {
        self.x.ncols()
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        io::write_matrix(&dir.join("X.txt"), &self.x)?;
        io::write_matrix(&dir.join("Xdot.txt"), &self.xdot)?;
        io::write_vector(&dir.join("times.txt"), &DVector::from_column_slice(&self.times))?;
        fs::write(dir.join("config.json"), serde_json::to_string_pretty(&self.config)?)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let x = io::read_matrix(&dir.join("X.txt"))?;
        let xdot = io::read_matrix(&dir.join("Xdot.txt"))?;
        let times = io::read_vector(&dir.join("times.txt"))?;
        let config = BurgersConfig::read(&dir.join("config.json"))?;
        if xdot.shape() != x.shape() || times.len() != x.ncols() {
            return Err(EpqError::Parse {
                path: dir.to_path_buf(),
                message: format!(
                    "inconsistent archive: X {:?}, Xdot {:?}, {} times",
                    x.shape(),
                    xdot.shape(),
                    times.len()
                ),
            });
        }
        Ok(Self {
            times: times.iter().copied().collect(),
            x,
            xdot,
            config,
            warnings: Vec::new(),
        })
    }
}

pub fn initial_state(cfg: &BurgersConfig, grid: &Grid) -> DVector<f64> {
    grid.sample(|x, y| cfg.ic.eval(x, y))
}

pub fn simulate(cfg: &BurgersConfig) -> Result<SnapshotSet> {
    let ops = build_operators(cfg)?;
    let steps = cfg.steps()?;
    let mut warnings = Vec::new();
    let (adv, diff) = cfg.cfl_numbers();
    if adv > 1.0 || diff > 0.5 {
        warnings.push(format!(
            "CFL check: c·dt/dx = {adv:.3}, nu·dt/dx² = {diff:.3} (limits 1 and 0.5)"
        ));
    }
    if cfg.fd_derivatives && steps < 2 {
        return Err(EpqError::Config(
            "finite-difference derivatives need at least 3 snapshots".into(),
        ));
    }
    let u0 = initial_state(cfg, &ops.grid);
    let x = ode::rk4(|_, u| ops.rhs(u), &u0, cfg.dt, steps)
        .map_err(|e| EpqError::BlowUp { time: e.time })?;
    let xdot = if cfg.fd_derivatives {
        time_derivatives_fd(&x, cfg.dt)
    } else {
        let mut d = DMatrix::zeros(x.nrows(), x.ncols());
        for s in 0..x.ncols() {
            d.set_column(s, &ops.rhs(&x.column(s).into_owned()));
        }
        d
    };
    Ok(SnapshotSet {
        times: (0..=steps).map(|s| s as f64 * cfg.dt).collect(),
        x,
        xdot,
        config: cfg.clone(),
        warnings,
    })
}

/// Second-order central differences in time, one-sided at the ends.
pub fn time_derivatives_fd(x: &DMatrix<f64>, dt: f64) -> DMatrix<f64> {
    let m = x.ncols();
    assert!(m >= 3, "need at least 3 snapshots");
    let mut d = DMatrix::zeros(x.nrows(), m);
    let h = 0.5 / dt;
    for s in 1..m - 1 {
        d.set_column(s, &((x.column(s + 1) - x.column(s - 1)) * h));
    }
    d.set_column(0, &((x.column(0) * -3.0 + x.column(1) * 4.0 - x.column(2)) * h));
    d.set_column(
        m - 1,
        &((x.column(m - 1) * 3.0 - x.column(m - 2) * 4.0 + x.column(m - 3)) * h),
    );
    d
}

pub fn kinetic_energy(u: &DVector<f64>) -> f64 {
    0.5 * u.norm_squared()
}

/// `mean |truth − pred| / max |truth|` over all entries.
pub fn mean_maxnorm_error(truth: &DMatrix<f64>, pred: &DMatrix<f64>) -> Result<f64> {
    if truth.shape() != pred.shape() {
        return Err(EpqError::DimensionMismatch {
            expected: truth.len(),
            actual: pred.len(),
            context: "mean_maxnorm_error shapes",
        });
    }
    let scale = truth.amax();
    if scale == 0.0 || truth.is_empty() {
        return Err(EpqError::InvalidArgument(
            "truth is identically zero; normalized error undefined".into(),
        ));
    }
    let total: f64 = truth.iter().zip(pred.iter()).map(|(a, b)| (a - b).abs()).sum();
    Ok(total / truth.len() as f64 / scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{PI, TAU};

    fn ops_for(side: usize, c: f64, nu: f64) -> FomOperators {
        build_operators(&BurgersConfig {
            dx: 1.0 / side as f64,
            c,
            nu,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn default_grid() {
        let g = BurgersConfig::default().validate().unwrap();
        assert_eq!(g.side, 50);
        assert_eq!(g.n(), 2500);
        assert_eq!(g.coords(g.index(3, 7)), (3.0 * 0.02, 7.0 * 0.02));
        let (a, d) = BurgersConfig::default().cfl_numbers();
        assert!((a - 0.1).abs() < 1e-12 && (d - 0.05).abs() < 1e-12);
        assert!(Grid::new(1.0, 0.03).is_err());
        assert!(BurgersConfig { horizon: 1.005, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn constant_field_is_steady() {
        let ops = ops_for(8, 0.2, 2e-3);
        let u = DVector::from_element(64, 1.7);
        assert!(ops.rhs(&u).amax() < 1e-12);
    }

    #[test]
    fn advection_is_energy_preserving() {
        let ops = ops_for(10, 0.2, 0.0);
        let h = ops.advection_dense().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let u = DVector::from_fn(100, |_, _| rng.random_range(-1.0..1.0));
            let e = h.energy_residual(&u).unwrap();
            assert!(e.abs() <= 1e-12 * h.max_abs() * u.norm().powi(3));
        }
        assert!(ops.advection_sparse().energy_check(1e-12).preserving);
        assert!(h.is_energy_preserving(1e-12));
    }

    #[test]
    fn matrix_free_matches_materialized() {
        let ops = ops_for(6, 0.7, 0.0);
        let h = ops.advection_dense().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let u = DVector::from_fn(36, |_, _| rng.random_range(-2.0..2.0));
            let a = ops.apply_advection(&u);
            let b = h.apply(&u).unwrap();
            assert!((a - b).amax() <= 1e-12);
        }
    }

    #[test]
    fn diffusion_is_negative_semidefinite() {
        let ops = ops_for(6, 0.0, 0.1);
        let a = ops.diffusion_dense();
        assert_eq!(a.clone(), a.transpose());
        let eig = a.clone().symmetric_eigen();
        let max = eig.eigenvalues.max();
        assert!(eig.eigenvalues.iter().all(|&l| l <= 1e-12));
        assert!(max.abs() < 1e-12);
        assert!((a * DVector::from_element(36, 1.0)).amax() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let u = DVector::from_fn(36, |_, _| rng.random_range(-1.0..1.0));
            assert!(u.dot(&ops.apply_diffusion(&u)) <= 0.0);
        }
    }

    fn advection_error(side: usize) -> f64 {
        let ops = ops_for(side, 1.0, 0.0);
        let f = |x: f64, y: f64| (TAU * x).sin() * (TAU * y).cos() + 0.5 * (TAU * y).sin();
        let fx = |x: f64, y: f64| TAU * (TAU * x).cos() * (TAU * y).cos();
        let fy = |x: f64, y: f64| -TAU * (TAU * x).sin() * (TAU * y).sin() + 0.5 * TAU * (TAU * y).cos();
        let u = ops.grid.sample(f);
        let exact = ops.grid.sample(|x, y| f(x, y) * (fx(x, y) + fy(x, y)));
        (ops.apply_advection(&u) - exact).amax()
    }

    #[test]
    fn advection_converges_second_order() {
        for side in [32, 64] {
            let ratio = advection_error(side) / advection_error(2 * side);
            assert!((3.4..=4.6).contains(&ratio), "ratio {ratio} at N = {side}");
        }
    }

    #[test]
    fn no_dynamics_keeps_initial_state() {
        let cfg = BurgersConfig { c: 0.0, nu: 0.0, horizon: 0.5, ..Default::default() };
        let snaps = simulate(&cfg).unwrap();
        let u0 = snaps.x.column(0).into_owned();
        for s in 0..snaps.m() {
            assert_eq!(snaps.x.column(s), u0);
        }
        assert_eq!(snaps.xdot.amax(), 0.0);
    }

    #[test]
    fn pure_diffusion_matches_discrete_symbol() {
        let cfg = BurgersConfig { c: 0.0, horizon: 1.0, ..Default::default() };
        let snaps = simulate(&cfg).unwrap();
        let dx = cfg.dx;
        let lambda_h = -4.0 * cfg.nu * (1.0 - (TAU * dx).cos()) / (dx * dx);
        let grid = cfg.validate().unwrap();
        let exact = initial_state(&cfg, &grid) * (lambda_h * 1.0).exp();
        let got = snaps.x.column(100);
        assert!((got - &exact).norm() / exact.norm() <= 1e-3);
        // the continuous decay rate is close but not identical
        assert!((lambda_h + 8.0 * PI * PI * cfg.nu).abs() < 1e-3);
    }

    #[test]
    fn default_run_dissipates_energy_and_records_rhs() {
        let cfg = BurgersConfig::default();
        let snaps = simulate(&cfg).unwrap();
        assert_eq!(snaps.x.shape(), (2500, 401));
        assert!(snaps.warnings.is_empty());
        let energy: Vec<f64> = (0..snaps.m()).map(|s| kinetic_energy(&snaps.x.column(s).into_owned())).collect();
        for s in 0..energy.len() - 1 {
            assert!(energy[s + 1] <= energy[s] + 1e-10 * energy[0]);
        }
        let ops = build_operators(&cfg).unwrap();
        for s in [0, 200, 400] {
            let u = snaps.x.column(s).into_owned();
            assert!((ops.rhs(&u) - snaps.xdot.column(s)).amax() <= 1e-13);
        }
    }

    #[test]
    fn fd_derivatives_are_close_to_exact() {
        let base = BurgersConfig { dx: 0.05, horizon: 0.5, ..Default::default() };
        let exact = simulate(&base).unwrap();
        let fd = simulate(&BurgersConfig { fd_derivatives: true, ..base }).unwrap();
        let scale = exact.xdot.amax();
        assert!((&fd.xdot - &exact.xdot).amax() / scale < 1e-3);
        assert_eq!(fd.x, exact.x);
    }

    #[test]
    fn zero_horizon_single_snapshot() {
        let snaps = simulate(&BurgersConfig { horizon: 0.0, ..Default::default() }).unwrap();
        assert_eq!(snaps.m(), 1);
        assert_eq!(snaps.times, vec![0.0]);
    }

    #[test]
    fn archive_round_trip() {
        let snaps = simulate(&BurgersConfig { dx: 0.1, horizon: 0.05, ..Default::default() }).unwrap();
        let dir = std::env::temp_dir().join(format!("epquad-burgers-{}", std::process::id()));
        snaps.write(&dir).unwrap();
        let back = SnapshotSet::read(&dir).unwrap();
        assert_eq!(back.x, snaps.x);
        assert_eq!(back.xdot, snaps.xdot);
        assert_eq!(back.times, snaps.times);
        assert_eq!(back.config, snaps.config);
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn maxnorm_error_definition() {
        let truth = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 0.0]);
        assert_eq!(mean_maxnorm_error(&truth, &truth).unwrap(), 0.0);
        let shifted = truth.add_scalar(0.1);
        assert!((mean_maxnorm_error(&truth, &shifted).unwrap() - 0.05).abs() < 1e-15);
        assert!(mean_maxnorm_error(&DMatrix::zeros(2, 2), &truth).is_err());
        assert!(mean_maxnorm_error(&truth, &DMatrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn config_json_uses_short_names() {
        let cfg: BurgersConfig = serde_json::from_str(r#"{"T": 2.0, "ic": "sine-sum"}"#).unwrap();
        assert_eq!(cfg.horizon, 2.0);
        assert_eq!(cfg.ic, InitialCondition::SineSum);
        assert_eq!(cfg.dx, 0.02);
        let text = serde_json::to_string(&BurgersConfig::default()).unwrap();
        assert!(text.contains("\"L\":1.0") && text.contains("\"ic\":\"product-cosine\""));
    }
}
