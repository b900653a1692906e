//! Sequential Operator Inference.
//!
//! Fits `ẋ̂ = ĉ + Â x̂ + Ĥ (x̂ ⊗ x̂) + B̂ u` to reduced snapshot data one row at
//! a time. Each row is a Tikhonov-regularized least-squares problem
//!
//! ```text
//! min_o ‖oᵀ D − f‖² + λ Σ_t w_t o_t²
//! ```
//!
//! with `w_t = quad_weight_factor` (default `r`) on quadratic coefficients and
//! 1 elsewhere, solved for a whole λ grid from one SVD of the weight-scaled
//! data matrix. λ is picked per row (or shared) at the L-curve corner.
//!
//! [`InferenceMode::Standard`] uses the `r(r+1)/2` unique products.
//! [`InferenceMode::EnergyPreserving`] keeps the full Kronecker products and
//! solves rows in order: in row `j` the sub-matrix diagonal entries are zero,
//! entries with column `k < j` are fixed by skew-symmetry from earlier rows
//! and moved to the right-hand side, and only columns `k > j` are inferred.
//! The result has exactly skew-symmetric sub-matrices.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{EpqError, Result};
use crate::quadop::{QuadOp, QuadSystem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InferenceMode {
    #[serde(rename = "standard")]
    Standard,
    #[serde(rename = "ep")]
    EnergyPreserving,
}

impl std::fmt::Display for InferenceMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(match self {
            Self::Standard => "standard",
            Self::EnergyPreserving => "ep",
        })
    }
}

impl std::str::FromStr for InferenceMode {
    type Err = EpqError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Self::Standard),
            "ep" | "energy-preserving" => Ok(Self::EnergyPreserving),
            other => Err(EpqError::Config(format!(
                "unknown inference mode `{other}` (expected `standard` or `ep`)"
            ))),
        }
    }
}

/// Regularization grid and selection policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lambda_count: usize,
    /// One λ for all rows instead of one per row.
    pub shared_lambda: bool,
    /// Penalty factor on quadratic coefficients; `None` means `r`.
    pub quad_weight_factor: Option<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            lambda_min: 1e-5,
            lambda_max: 1e3,
            lambda_count: 50,
            shared_lambda: false,
            quad_weight_factor: None,
        }
    }
}

impl SweepConfig {
    /// A single fixed λ, no L-curve selection.
    pub fn fixed(lambda: f64) -> Self {
        Self {
            lambda_min: lambda,
            lambda_max: lambda,
            lambda_count: 1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok_range = self.lambda_min > 0.0
            && self.lambda_min.is_finite()
            && self.lambda_max.is_finite()
            && self.lambda_min <= self.lambda_max;
        if !ok_range {
            return Err(EpqError::Config(format!(
                "invalid λ range [{}, {}]",
                self.lambda_min, self.lambda_max
            )));
        }
        match self.lambda_count {
            0 | 2 => Err(EpqError::Config(
                "lambda_count must be 1 (fixed) or at least 3 (L-curve)".into(),
            )),
            1 => Ok(()),
            _ if self.lambda_min == self.lambda_max => {
                Err(EpqError::Config("L-curve sweep needs lambda_min < lambda_max".into()))
            }
            _ => Ok(()),
        }
        .and_then(|_| match self.quad_weight_factor {
            Some(w) if !(w > 0.0 && w.is_finite()) => Err(EpqError::Config(format!(
                "quad_weight_factor must be positive, got {w}"
            ))),
            _ => Ok(()),
        })
    }

    /// Logarithmically spaced grid, strictly increasing.
    pub fn lambdas(&self) -> Vec<f64> {
        if self.lambda_count == 1 {
            return vec![self.lambda_min];
        }
        let (a, b) = (self.lambda_min.log10(), self.lambda_max.log10());
        let steps = (self.lambda_count - 1) as f64;
        (0..self.lambda_count)
            .map(|i| 10f64.powf(a + (b - a) * i as f64 / steps))
            .collect()
    }
}

/// Inference configuration file contents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    pub mode: InferenceMode,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lambda_count: usize,
    pub shared_lambda: bool,
    pub include_constant: bool,
    pub quad_weight_factor: Option<f64>,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        let s = SweepConfig::default();
        Self {
            mode: InferenceMode::EnergyPreserving,
            lambda_min: s.lambda_min,
            lambda_max: s.lambda_max,
            lambda_count: s.lambda_count,
            shared_lambda: s.shared_lambda,
            include_constant: false,
            quad_weight_factor: None,
        }
    }
}

impl InferenceConfig {
    pub fn sweep(&self) -> SweepConfig {
        SweepConfig {
            lambda_min: self.lambda_min,
            lambda_max: self.lambda_max,
            lambda_count: self.lambda_count,
            shared_lambda: self.shared_lambda,
            quad_weight_factor: self.quad_weight_factor,
        }
    }
}

/// Reduced snapshots, derivatives, and inputs (`k × m`, `k` may be 0).
#[derive(Clone, Debug)]
pub struct TrainingData {
    pub xhat: DMatrix<f64>,
    pub xdot_hat: DMatrix<f64>,
    pub inputs: DMatrix<f64>,
    pub include_constant: bool,
}

impl TrainingData {
    pub fn new(
        xhat: DMatrix<f64>,
        xdot_hat: DMatrix<f64>,
        inputs: Option<DMatrix<f64>>,
        include_constant: bool,
    ) -> Result<Self> {
        let m = xhat.ncols();
        let inputs = inputs.unwrap_or_else(|| DMatrix::zeros(0, m));
        if xhat.nrows() == 0 || m == 0 {
            return Err(EpqError::InvalidArgument("empty training snapshots".into()));
        }
        if xdot_hat.shape() != xhat.shape() {
            return Err(EpqError::DimensionMismatch {
                expected: m,
                actual: xdot_hat.ncols(),
                context: "derivative snapshot shape",
            });
        }
        if inputs.ncols() != m {
            return Err(EpqError::DimensionMismatch {
                expected: m,
                actual: inputs.ncols(),
                context: "input snapshot count",
            });
        }
        Ok(Self {
            xhat,
            xdot_hat,
            inputs,
            include_constant,
        })
    }

    pub fn r(&self) -> usize {
        self.xhat.nrows()
    }

    pub fn m(&self) -> usize {
        self.xhat.ncols()
    }

    pub fn k(&self) -> usize {
        self.inputs.nrows()
    }
}

/// Inferred reduced operators.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedModel {
    pub c_hat: DVector<f64>,
    pub a_hat: DMatrix<f64>,
    pub h_hat: QuadOp,
    pub b_hat: DMatrix<f64>,
    pub mode: InferenceMode,
    /// Selected λ per row.
    pub lambdas: Vec<f64>,
}

impl ReducedModel {
    pub fn r(&self) -> usize {
        self.a_hat.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b_hat.ncols()
    }

    pub fn system(&self) -> QuadSystem {
        QuadSystem {
            a: self.a_hat.clone(),
            h: self.h_hat.clone(),
            b: self.b_hat.clone(),
            c: self.c_hat.clone(),
        }
    }

    pub fn rhs(&self, x: &DVector<f64>, u: Option<&DVector<f64>>) -> DVector<f64> {
        let mut dx = &self.a_hat * x + self.h_hat.apply_unchecked(x) + &self.c_hat;
        if let Some(u) = u {
            if self.b_hat.ncols() > 0 {
                dx.gemv(1.0, &self.b_hat, u, 1.0);
            }
        }
        dx
    }
}

/// Residual and solution norms over a λ grid, with the chosen index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularizationSweep {
    pub lambdas: Vec<f64>,
    pub residual_norms: Vec<f64>,
    /// Penalty-weighted norm `sqrt(Σ w_t o_t²)`.
    pub solution_norms: Vec<f64>,
    pub selected: usize,
    /// Selection fell back from the curvature criterion.
    pub fallback: bool,
    pub shared: bool,
}

impl RegularizationSweep {
    pub fn selected_lambda(&self) -> f64 {
        self.lambdas[self.selected]
    }
}

/// Outcome of [`select_lcurve`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LCurveChoice {
    pub index: usize,
    pub fallback: bool,
}

/// Index of maximum curvature of `(ln ρ, ln η)` parameterized by `ln λ`.
///
/// Derivatives are three-point finite differences on the (possibly
/// non-uniform) `ln λ` grid, so only interior points are candidates. Ties go
/// to the smaller λ. When no interior point has a finite positive curvature
/// the λ minimizing `ρ·η` is returned with `fallback` set.
pub fn select_lcurve(lambdas: &[f64], residual_norms: &[f64], solution_norms: &[f64]) -> Result<LCurveChoice> {
    let n = lambdas.len();
    if n < 3 || residual_norms.len() != n || solution_norms.len() != n {
        return Err(EpqError::InvalidArgument(
            "L-curve needs at least 3 points with matching lengths".into(),
        ));
    }
    let t: Vec<f64> = lambdas.iter().map(|l| l.ln()).collect();
    let x: Vec<f64> = residual_norms.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = solution_norms.iter().map(|v| v.ln()).collect();

    let mut best: Option<(usize, f64)> = None;
    for i in 1..n - 1 {
        let (h0, h1) = (t[i] - t[i - 1], t[i + 1] - t[i]);
        let d1 = |f: &[f64]| {
            (-h1 / (h0 * (h0 + h1))) * f[i - 1]
                + ((h1 - h0) / (h0 * h1)) * f[i]
                + (h0 / (h1 * (h0 + h1))) * f[i + 1]
        };
        let d2 = |f: &[f64]| 2.0 * (f[i - 1] / (h0 * (h0 + h1)) - f[i] / (h0 * h1) + f[i + 1] / (h1 * (h0 + h1)));
        let (xp, yp, xpp, ypp) = (d1(&x), d1(&y), d2(&x), d2(&y));
        let scale = x[i - 1..=i + 1].iter().chain(&y[i - 1..=i + 1]).fold(1.0f64, |a, v| a.max(v.abs()));
        if xp.hypot(yp) <= 1e-10 * scale {
            continue;
        }
        let kappa = (xp * ypp - yp * xpp) / (xp * xp + yp * yp).powf(1.5);
        if kappa.is_finite() && kappa > 0.0 && best.is_none_or(|(_, b)| kappa > b) {
            best = Some((i, kappa));
        }
    }
    if let Some((index, _)) = best {
        return Ok(LCurveChoice {
            index,
            fallback: false,
        });
    }
    let mut index = 0;
    let mut best_product = f64::INFINITY;
    for i in 0..n {
        let p = residual_norms[i] * solution_norms[i];
        if p < best_product {
            best_product = p;
            index = i;
        }
    }
    Ok(LCurveChoice {
        index,
        fallback: true,
    })
}

/// Unique quadratic products `x̂_i x̂_j`, `i ≤ j`, `i` outer.
pub fn kron_unique(xhat: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, m) = xhat.shape();
    let mut out = DMatrix::zeros(r * (r + 1) / 2, m);
    for s in 0..m {
        let mut row = 0;
        for i in 0..r {
            for j in i..r {
                out[(row, s)] = xhat[(i, s)] * xhat[(j, s)];
                row += 1;
            }
        }
    }
    out
}

/// Per-row diagnostics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RowFit {
    pub row: usize,
    pub unknowns: usize,
    pub quadratic_unknowns: usize,
    pub underdetermined: bool,
    pub sweep: RegularizationSweep,
}

#[derive(Clone, Debug)]
pub struct InferenceResult {
    pub model: ReducedModel,
    pub rows: Vec<RowFit>,
    pub warnings: Vec<String>,
}

impl InferenceResult {
    pub fn total_quadratic_unknowns(&self) -> usize {
        self.rows.iter().map(|r| r.quadratic_unknowns).sum()
    }
}

/// Weighted Tikhonov problem sharing one design matrix across right-hand
/// sides: `min ‖G o − f‖² + λ ‖W^{1/2} o‖²` with `G` of size `m × p`.
struct TikhonovSolver {
    u: DMatrix<f64>,
    sigma: DVector<f64>,
    v_t: DMatrix<f64>,
    scaled: DMatrix<f64>,
    inv_sqrt_w: DVector<f64>,
}

struct TikhonovSolution {
    coeffs: DVector<f64>,
    residual: f64,
    penalty_norm: f64,
}

impl TikhonovSolver {
    fn new(design: &DMatrix<f64>, weights: &DVector<f64>) -> Result<Self> {
        let inv_sqrt_w = weights.map(|w| 1.0 / w.sqrt());
        let mut scaled = design.clone();
        for (c, s) in inv_sqrt_w.iter().enumerate() {
            scaled.column_mut(c).scale_mut(*s);
        }
        let svd = scaled.clone().svd(true, true);
        match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) => Ok(Self {
                u,
                sigma: svd.singular_values,
                v_t,
                scaled,
                inv_sqrt_w,
            }),
            _ => Err(EpqError::InferenceFailure("SVD of the data matrix failed".into())),
        }
    }

    fn solve(&self, rhs: &DVector<f64>, lambda: f64) -> TikhonovSolution {
        let beta = self.u.tr_mul(rhs);
        let filtered = DVector::from_fn(self.sigma.len(), |i, _| {
            let s = self.sigma[i];
            s * beta[i] / (s * s + lambda)
        });
        let z = self.v_t.tr_mul(&filtered);
        let residual = (&self.scaled * &z - rhs).norm();
        TikhonovSolution {
            coeffs: z.component_mul(&self.inv_sqrt_w),
            residual,
            penalty_norm: z.norm(),
        }
    }

    fn sweep(&self, rhs: &DVector<f64>, lambdas: &[f64]) -> Vec<TikhonovSolution> {
        lambdas.iter().map(|&l| self.solve(rhs, l)).collect()
    }
}

fn choose(lambdas: &[f64], residuals: Vec<f64>, norms: Vec<f64>, shared: bool) -> Result<RegularizationSweep> {
    let (selected, fallback) = if lambdas.len() == 1 {
        (0, false)
    } else {
        let c = select_lcurve(lambdas, &residuals, &norms)?;
        (c.index, c.fallback)
    };
    Ok(RegularizationSweep {
        lambdas: lambdas.to_vec(),
        residual_norms: residuals,
        solution_norms: norms,
        selected,
        fallback,
        shared,
    })
}

fn all_finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Column layout of one row's unknowns.
struct Layout {
    constant: bool,
    r: usize,
    quad: usize,
    k: usize,
}

impl Layout {
    fn len(&self) -> usize {
        self.constant as usize + self.r + self.quad + self.k
    }

    fn weights(&self, quad_weight: f64) -> DVector<f64> {
        let q0 = self.constant as usize + self.r;
        DVector::from_fn(self.len(), |t, _| {
            if t >= q0 && t < q0 + self.quad {
                quad_weight
            } else {
                1.0
            }
        })
    }

    /// Assembles the `m × p` design with a caller-supplied quadratic block.
    fn design(&self, data: &TrainingData, mut quad: impl FnMut(usize, usize) -> f64) -> DMatrix<f64> {
        let m = data.m();
        let mut g = DMatrix::zeros(m, self.len());
        let mut col = 0;
        if self.constant {
            g.column_mut(0).fill(1.0);
            col = 1;
        }
        for i in 0..self.r {
            g.column_mut(col + i).copy_from(&data.xhat.row(i).transpose());
        }
        col += self.r;
        for q in 0..self.quad {
            for s in 0..m {
                g[(s, col + q)] = quad(q, s);
            }
        }
        col += self.quad;
        for i in 0..self.k {
            g.column_mut(col + i).copy_from(&data.inputs.row(i).transpose());
        }
        g
    }

    /// Writes the non-quadratic parts of `coeffs` into the model row `j`.
    fn scatter(&self, coeffs: &DVector<f64>, j: usize, model: &mut ReducedModel) {
        let mut t = 0;
        if self.constant {
            model.c_hat[j] = coeffs[0];
            t = 1;
        }
        for i in 0..self.r {
            model.a_hat[(j, i)] = coeffs[t + i];
        }
        t += self.r + self.quad;
        for i in 0..self.k {
            model.b_hat[(j, i)] = coeffs[t + i];
        }
    }

    fn quad_offset(&self) -> usize {
        self.constant as usize + self.r
    }
}

fn empty_model(r: usize, k: usize, mode: InferenceMode) -> Result<ReducedModel> {
    Ok(ReducedModel {
        c_hat: DVector::zeros(r),
        a_hat: DMatrix::zeros(r, r),
        h_hat: QuadOp::zeros(r)?,
        b_hat: DMatrix::zeros(r, k),
        mode,
        lambdas: vec![0.0; r],
    })
}

fn underdetermined_warning(row: usize, m: usize, p: usize) -> String {
    format!("row {}: {m} snapshots for {p} unknowns (underdetermined, regularized)", row + 1)
}

/// Dispatches on `mode`.
pub fn infer(data: &TrainingData, mode: InferenceMode, sweep: &SweepConfig) -> Result<InferenceResult> {
    match mode {
        InferenceMode::Standard => infer_standard(data, sweep),
        InferenceMode::EnergyPreserving => infer_energy_preserving(data, sweep),
    }
}

/// Row-wise OpInf over unique quadratic products.
pub fn infer_standard(data: &TrainingData, sweep: &SweepConfig) -> Result<InferenceResult> {
    sweep.validate()?;
    let (r, m, k) = (data.r(), data.m(), data.k());
    let layout = Layout {
        constant: data.include_constant,
        r,
        quad: r * (r + 1) / 2,
        k,
    };
    let kron = kron_unique(&data.xhat);
    let design = layout.design(data, |q, s| kron[(q, s)]);
    let quad_weight = sweep.quad_weight_factor.unwrap_or(r as f64);
    let solver = TikhonovSolver::new(&design, &layout.weights(quad_weight))?;
    let lambdas = sweep.lambdas();
    let p = layout.len();

    let per_row: Vec<Vec<TikhonovSolution>> = (0..r)
        .into_par_iter()
        .map(|j| solver.sweep(&data.xdot_hat.row(j).transpose(), &lambdas))
        .collect();

    let sweeps: Vec<RegularizationSweep> = if sweep.shared_lambda {
        let shared = shared_sweep(&lambdas, &per_row)?;
        vec![shared; r]
    } else {
        per_row
            .iter()
            .map(|sols| {
                choose(
                    &lambdas,
                    sols.iter().map(|s| s.residual).collect(),
                    sols.iter().map(|s| s.penalty_norm).collect(),
                    false,
                )
            })
            .collect::<Result<_>>()?
    };

    let mut model = empty_model(r, k, InferenceMode::Standard)?;
    let mut rows = Vec::with_capacity(r);
    let mut warnings = Vec::new();
    let q0 = layout.quad_offset();
    for (j, sw) in sweeps.into_iter().enumerate() {
        let coeffs = pick_finite(&per_row[j], sw.selected, j)?;
        layout.scatter(coeffs, j, &mut model);
        let mut q = 0;
        for i in 0..r {
            for l in i..r {
                let theta = coeffs[q0 + q];
                if i == l {
                    model.h_hat.set(i, j, i, theta);
                } else {
                    model.h_hat.set(i, j, l, 0.5 * theta);
                    model.h_hat.set(l, j, i, 0.5 * theta);
                }
                q += 1;
            }
        }
        model.lambdas[j] = sw.selected_lambda();
        if sw.fallback {
            warnings.push(format!("row {}: L-curve fell back to min ρ·η", j + 1));
        }
        if m < p {
            warnings.push(underdetermined_warning(j, m, p));
        }
        rows.push(RowFit {
            row: j,
            unknowns: p,
            quadratic_unknowns: layout.quad,
            underdetermined: m < p,
            sweep: sw,
        });
    }
    Ok(InferenceResult {
        model,
        rows,
        warnings,
    })
}

fn pick_finite(sols: &[TikhonovSolution], selected: usize, row: usize) -> Result<&DVector<f64>> {
    if sols.iter().all(|s| !all_finite(&s.coeffs)) {
        return Err(EpqError::InferenceFailure(format!(
            "row {}: no finite solution for any λ",
            row + 1
        )));
    }
    let c = &sols[selected].coeffs;
    if !all_finite(c) {
        return Err(EpqError::InferenceFailure(format!(
            "row {}: selected λ gives a non-finite solution",
            row + 1
        )));
    }
    Ok(c)
}

/// Aggregates `Σ_j ρ_j²`, `Σ_j η_j²` across rows and selects one λ.
fn shared_sweep(lambdas: &[f64], per_row: &[Vec<TikhonovSolution>]) -> Result<RegularizationSweep> {
    let agg = |f: &dyn Fn(&TikhonovSolution) -> f64| -> Vec<f64> {
        (0..lambdas.len())
            .map(|l| per_row.iter().map(|sols| f(&sols[l]).powi(2)).sum::<f64>().sqrt())
            .collect()
    };
    let residuals = agg(&|s| s.residual);
    let norms = agg(&|s| s.penalty_norm);
    choose(lambdas, residuals, norms, true)
}

/// Row-sequential OpInf with skew-symmetric sub-matrices enforced.
pub fn infer_energy_preserving(data: &TrainingData, sweep: &SweepConfig) -> Result<InferenceResult> {
    sweep.validate()?;
    let (r, m, k) = (data.r(), data.m(), data.k());
    let quad_weight = sweep.quad_weight_factor.unwrap_or(r as f64);
    let lambdas = sweep.lambdas();

    // The design of row j does not depend on earlier solutions, only the
    // right-hand side does.
    let rows_setup: Vec<(Layout, TikhonovSolver, Vec<(usize, usize)>)> = (0..r)
        .into_par_iter()
        .map(|j| {
            let free: Vec<(usize, usize)> = (0..r)
                .flat_map(|i| (j + 1..r).map(move |l| (i, l)))
                .collect();
            let layout = Layout {
                constant: data.include_constant,
                r,
                quad: free.len(),
                k,
            };
            let design = layout.design(data, |q, s| {
                let (i, l) = free[q];
                data.xhat[(i, s)] * data.xhat[(l, s)]
            });
            let solver = TikhonovSolver::new(&design, &layout.weights(quad_weight))?;
            Ok((layout, solver, free))
        })
        .collect::<Result<_>>()?;

    let mut warnings = Vec::new();
    if sweep.shared_lambda && lambdas.len() > 1 {
        let mut residuals = vec![0.0; lambdas.len()];
        let mut norms = vec![0.0; lambdas.len()];
        for (li, &lambda) in lambdas.iter().enumerate() {
            let single = vec![lambda];
            let (_, fits) = ep_chain(data, &rows_setup, |_, _, _| Ok(0), &single)?;
            residuals[li] = fits.iter().map(|f| f.0.powi(2)).sum::<f64>().sqrt();
            norms[li] = fits.iter().map(|f| f.1.powi(2)).sum::<f64>().sqrt();
        }
        let shared = choose(&lambdas, residuals, norms, true)?;
        let chosen = vec![shared.selected_lambda()];
        let (model, _) = ep_chain(data, &rows_setup, |_, _, _| Ok(0), &chosen)?;
        if shared.fallback {
            warnings.push("shared λ: L-curve fell back to min ρ·η".into());
        }
        let rows = rows_setup
            .iter()
            .enumerate()
            .map(|(j, (layout, _, _))| RowFit {
                row: j,
                unknowns: layout.len(),
                quadratic_unknowns: layout.quad,
                underdetermined: m < layout.len(),
                sweep: shared.clone(),
            })
            .collect::<Vec<_>>();
        for row in &rows {
            if row.underdetermined {
                warnings.push(underdetermined_warning(row.row, m, row.unknowns));
            }
        }
        return Ok(InferenceResult {
            model: ReducedModel {
                lambdas: vec![shared.selected_lambda(); r],
                ..model
            },
            rows,
            warnings,
        });
    }

    let mut sweeps = Vec::with_capacity(r);
    let (model, _) = ep_chain(
        data,
        &rows_setup,
        |_j, sols: &[TikhonovSolution], lambdas: &[f64]| {
            let sw = choose(
                lambdas,
                sols.iter().map(|s| s.residual).collect(),
                sols.iter().map(|s| s.penalty_norm).collect(),
                false,
            )?;
            let idx = sw.selected;
            sweeps.push(sw);
            Ok(idx)
        },
        &lambdas,
    )?;
    let rows = rows_setup
        .iter()
        .zip(sweeps)
        .enumerate()
        .map(|(j, ((layout, _, _), sw))| {
            if sw.fallback {
                warnings.push(format!("row {}: L-curve fell back to min ρ·η", j + 1));
            }
            if m < layout.len() {
                warnings.push(underdetermined_warning(j, m, layout.len()));
            }
            RowFit {
                row: j,
                unknowns: layout.len(),
                quadratic_unknowns: layout.quad,
                underdetermined: m < layout.len(),
                sweep: sw,
            }
        })
        .collect();
    Ok(InferenceResult {
        model,
        rows,
        warnings,
    })
}

/// Solves rows `0..r` in order. `select` picks the λ index for each row
/// from its sweep; returns the model and per-row `(ρ, η)` at the choice.
fn ep_chain(
    data: &TrainingData,
    setup: &[(Layout, TikhonovSolver, Vec<(usize, usize)>)],
    mut select: impl FnMut(usize, &[TikhonovSolution], &[f64]) -> Result<usize>,
    lambdas: &[f64],
) -> Result<(ReducedModel, Vec<(f64, f64)>)> {
    let (r, m) = (data.r(), data.m());
    let mut model = empty_model(r, data.k(), InferenceMode::EnergyPreserving)?;
    let mut fits = Vec::with_capacity(r);
    for (j, (layout, solver, free)) in setup.iter().enumerate() {
        // fixed entries h(i, j, l), l < j, were mirrored in by earlier rows
        let mut rhs = data.xdot_hat.row(j).transpose();
        for s in 0..m {
            let mut acc = 0.0;
            for i in 0..r {
                let xi = data.xhat[(i, s)];
                for l in 0..j {
                    acc += model.h_hat.get(i, j, l) * xi * data.xhat[(l, s)];
                }
            }
            rhs[s] -= acc;
        }
        let sols = solver.sweep(&rhs, lambdas);
        let idx = select(j, &sols, lambdas)?;
        let coeffs = pick_finite(&sols, idx, j).map_err(|e| {
            EpqError::InferenceFailure(format!("{e}; rows {}..{r} not attempted", j + 2))
        })?;
        layout.scatter(coeffs, j, &mut model);
        let q0 = layout.quad_offset();
        for (q, &(i, l)) in free.iter().enumerate() {
            let theta = coeffs[q0 + q];
            model.h_hat.set(i, j, l, theta);
            model.h_hat.set(i, l, j, -theta);
        }
        model.lambdas[j] = lambdas[idx];
        fits.push((sols[idx].residual, sols[idx].penalty_norm));
    }
    Ok((model, fits))
}
