//! File-based workflow: model artifacts, prediction, and the Burgers'
//! benchmark sweep over reduced dimensions.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::burgers2d::{self, BurgersConfig, SnapshotSet};
use crate::error::{EpqError, Result};
use crate::io;
use crate::opinf::{self, InferenceConfig, InferenceMode, InferenceResult, ReducedModel};
use crate::rom::{self, EnergyTrace, PodBasis, PodDecomposition};

pub const THREADS_ENV: &str = "EPQUAD_THREADS";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Tolerance for the energy-preservation checks recorded in artifacts.
pub const EP_TOL: f64 = 1e-12;

/// Builds the global rayon pool from `EPQUAD_THREADS` if it is set.
/// Returns the cap that was applied.
pub fn init_threads_from_env() -> Result<Option<usize>> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(None);
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| EpqError::Config(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
    // a pool that already exists keeps its size
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(Some(threads))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub burgers: BurgersConfig,
    pub r_list: Vec<usize>,
    pub inference: InferenceConfig,
    pub output_dir: Option<String>,
    /// Recorded for provenance; the pipeline itself draws no random numbers.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            burgers: BurgersConfig::default(),
            r_list: vec![5, 7, 9, 11, 13, 15],
            inference: InferenceConfig::default(),
            output_dir: None,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r_list.is_empty() || self.r_list.contains(&0) {
            return Err(EpqError::Config("r_list must be non-empty with entries ≥ 1".into()));
        }
        if self.r_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(EpqError::Config("r_list must be strictly ascending".into()));
        }
        self.burgers.validate()?;
        self.inference.sweep().validate()
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| EpqError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Contents of `meta.json` in a model directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub mode: InferenceMode,
    pub r: usize,
    pub n_inputs: usize,
    pub lambdas: Vec<f64>,
    pub lcurve_fallback_rows: Vec<usize>,
    pub include_constant: bool,
    pub energy_preserving: bool,
    pub training: Option<BurgersConfig>,
    pub warnings: Vec<String>,
    pub version: String,
}

/// A reduced model with the basis it lives in.
#[derive(Clone, Debug)]
pub struct ModelArtifact {
    pub model: ReducedModel,
    pub basis: DMatrix<f64>,
    pub meta: ModelMeta,
}

impl ModelArtifact {
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        io::write_vector(&dir.join("c.txt"), &self.model.c_hat)?;
        io::write_matrix(&dir.join("A.txt"), &self.model.a_hat)?;
        io::write_quadop(&dir.join("H.txt"), &self.model.h_hat)?;
        io::write_matrix(&dir.join("B.txt"), &self.model.b_hat)?;
        io::write_matrix(&dir.join("V.txt"), &self.basis)?;
        fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&self.meta)?)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let meta_path = dir.join("meta.json");
        let meta: ModelMeta = serde_json::from_str(&fs::read_to_string(&meta_path)?)
            .map_err(|e| EpqError::Parse { path: meta_path.clone(), message: e.to_string() })?;
        let model = ReducedModel {
            c_hat: io::read_vector(&dir.join("c.txt"))?,
            a_hat: io::read_matrix(&dir.join("A.txt"))?,
            h_hat: io::read_quadop(&dir.join("H.txt"))?,
            b_hat: io::read_matrix(&dir.join("B.txt"))?,
            mode: meta.mode,
            lambdas: meta.lambdas.clone(),
        };
        let basis = io::read_matrix(&dir.join("V.txt"))?;
        let r = meta.r;
        let consistent = model.c_hat.len() == r
            && model.a_hat.shape() == (r, r)
            && model.h_hat.n() == r
            && model.b_hat.nrows() == r
            && basis.ncols() == r;
        if !consistent {
            return Err(EpqError::Parse {
                path: dir.to_path_buf(),
                message: format!("operator shapes disagree with r = {r}"),
            });
        }
        Ok(Self { model, basis, meta })
    }
}

/// POD-reduce a snapshot set and infer one model.
pub fn infer_from_snapshots(
    snaps: &SnapshotSet,
    pod: &PodDecomposition,
    r: usize,
    cfg: &InferenceConfig,
) -> Result<(ModelArtifact, InferenceResult)> {
    if r == 0 || r > snaps.m().min(snaps.n()) {
        return Err(EpqError::Config(format!(
            "r = {r} must lie in 1..={} (snapshots {}×{})",
            snaps.m().min(snaps.n()),
            snaps.n(),
            snaps.m()
        )));
    }
    let red = rom::reduce_with(pod, &snaps.x, &snaps.xdot, r)?;
    let data = opinf::TrainingData::new(red.xhat, red.xdot_hat, None, cfg.include_constant)?;
    let result = opinf::infer(&data, cfg.mode, &cfg.sweep())?;
    let mut warnings = red.warnings;
    warnings.extend(result.warnings.iter().cloned());
    let meta = ModelMeta {
        mode: cfg.mode,
        r,
        n_inputs: 0,
        lambdas: result.model.lambdas.clone(),
        lcurve_fallback_rows: result.rows.iter().filter(|f| f.sweep.fallback).map(|f| f.row + 1).collect(),
        include_constant: cfg.include_constant,
        energy_preserving: result.model.h_hat.is_energy_preserving(EP_TOL),
        training: Some(snaps.config.clone()),
        warnings,
        version: VERSION.to_string(),
    };
    Ok((
        ModelArtifact {
            model: result.model.clone(),
            basis: red.basis.v,
            meta,
        },
        result,
    ))
}

/// Reduced and lifted trajectories from the full initial state `u0`.
pub fn predict(art: &ModelArtifact, u0: &DVector<f64>, dt: f64, steps: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if u0.len() != art.basis.nrows() {
        return Err(EpqError::DimensionMismatch {
            expected: art.basis.nrows(),
            actual: u0.len(),
            context: "initial state vs basis rows",
        });
    }
    let x0 = art.basis.tr_mul(u0);
    let xhat = rom::integrate_rom(&art.model, &x0, dt, steps)?;
    let full = &art.basis * &xhat;
    Ok((xhat, full))
}

/// Outcome of one mode at one `r`.
#[derive(Clone, Debug, Serialize)]
pub struct ModeResult {
    pub error: Option<f64>,
    pub unstable: bool,
    pub unstable_time: Option<f64>,
    pub lambdas: Vec<f64>,
    pub lcurve_fallback_rows: Vec<usize>,
    pub energy_preserving: bool,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub trajectory: Option<DMatrix<f64>>,
    #[serde(skip)]
    pub model: ReducedModel,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunResult {
    pub r: usize,
    pub error_reprojection: f64,
    pub standard: ModeResult,
    pub ep: ModeResult,
    #[serde(skip)]
    pub basis: PodBasis,
}

#[derive(Clone, Debug, Serialize)]
pub struct FomSummary {
    pub n: usize,
    pub m: usize,
    pub advection_ep_check: bool,
    pub advection_worst_residual: f64,
    pub advection_threshold: f64,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchmarkSummary {
    pub version: String,
    pub config: PipelineConfig,
    pub fom: FomSummary,
    pub runs: Vec<RunResult>,
    pub energy_trace_r: usize,
    pub wall_time_seconds: f64,
}

/// Everything the benchmark computes, including data kept out of the JSON.
pub struct BenchmarkOutput {
    pub summary: BenchmarkSummary,
    pub snapshots: SnapshotSet,
    pub traces: Option<(Option<EnergyTrace>, Option<EnergyTrace>)>,
}

fn run_mode(
    snaps: &SnapshotSet,
    pod: &PodDecomposition,
    r: usize,
    cfg: &InferenceConfig,
    mode: InferenceMode,
    steps: usize,
) -> Result<ModeResult> {
    let cfg = InferenceConfig { mode, ..cfg.clone() };
    let (art, _) = infer_from_snapshots(snaps, pod, r, &cfg)?;
    let u0 = snaps.x.column(0).into_owned();
    let (error, unstable_time, trajectory) = match predict(&art, &u0, snaps.config.dt, steps) {
        Ok((xhat, full)) => (Some(burgers2d::mean_maxnorm_error(&snaps.x, &full)?), None, Some(xhat)),
        Err(EpqError::UnstableModel { time }) => (None, Some(time), None),
        Err(e) => return Err(e),
    };
    Ok(ModeResult {
        error,
        unstable: unstable_time.is_some(),
        unstable_time,
        lambdas: art.meta.lambdas,
        lcurve_fallback_rows: art.meta.lcurve_fallback_rows,
        energy_preserving: art.meta.energy_preserving,
        warnings: art.meta.warnings,
        trajectory,
        model: art.model,
    })
}

/// Simulate, reduce and infer both modes for every `r`, and score.
pub fn run_benchmark(cfg: &PipelineConfig) -> Result<BenchmarkOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let snaps = burgers2d::simulate(&cfg.burgers)?;
    let ops = burgers2d::build_operators(&cfg.burgers)?;
    let check = ops.advection_sparse().energy_check(EP_TOL);
    let steps = cfg.burgers.steps()?;
    let pod = PodDecomposition::new(&snaps.x)?;

    let runs: Vec<RunResult> = cfg
        .r_list
        .par_iter()
        .map(|&r| {
            let basis = pod.basis(r)?;
            let error_reprojection = burgers2d::mean_maxnorm_error(&snaps.x, &basis.reproject(&snaps.x))?;
            let standard = run_mode(&snaps, &pod, r, &cfg.inference, InferenceMode::Standard, steps)?;
            let ep = run_mode(&snaps, &pod, r, &cfg.inference, InferenceMode::EnergyPreserving, steps)?;
            Ok(RunResult { r, error_reprojection, standard, ep, basis })
        })
        .collect::<Result<_>>()?;

    let last = runs.last().expect("r_list validated non-empty");
    let trace = |m: &ModeResult| -> Result<Option<EnergyTrace>> {
        m.trajectory
            .as_ref()
            .map(|t| rom::energy_trace(&m.model, t, &snaps.times, None))
            .transpose()
    };
    let traces = Some((trace(&last.standard)?, trace(&last.ep)?));

    let summary = BenchmarkSummary {
        version: VERSION.to_string(),
        config: cfg.clone(),
        fom: FomSummary {
            n: snaps.n(),
            m: snaps.m(),
            advection_ep_check: check.preserving,
            advection_worst_residual: check.worst_residual,
            advection_threshold: check.threshold,
            warnings: snaps.warnings.clone(),
        },
        energy_trace_r: last.r,
        runs,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    Ok(BenchmarkOutput { summary, snapshots: snaps, traces })
}

fn csv_num(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |v| v.to_string())
}

pub fn error_vs_r_csv(summary: &BenchmarkSummary) -> String {
    let mut out = String::from("r,error_standard,error_ep,error_reprojection,unstable_standard,unstable_ep\n");
    for run in &summary.runs {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            run.r,
            csv_num(run.standard.error),
            csv_num(run.ep.error),
            run.error_reprojection,
            run.standard.unstable,
            run.ep.unstable
        )
        .unwrap();
    }
    out
}

pub fn energy_trace_csv(times: &[f64], standard: Option<&EnergyTrace>, ep: Option<&EnergyTrace>) -> String {
    let mut out = String::from(
        "t,lin_std,quad_std,lin_ep,quad_ep,cum_lin_std,cum_quad_std,cum_lin_ep,cum_quad_ep\n",
    );
    let pick = |tr: Option<&EnergyTrace>, f: fn(&EnergyTrace) -> &Vec<f64>, s: usize| csv_num(tr.map(|t| f(t)[s]));
    for (s, t) in times.iter().enumerate() {
        writeln!(
            out,
            "{t},{},{},{},{},{},{},{},{}",
            pick(standard, |t| &t.linear, s),
            pick(standard, |t| &t.quadratic, s),
            pick(ep, |t| &t.linear, s),
            pick(ep, |t| &t.quadratic, s),
            pick(standard, |t| &t.cumulative_linear, s),
            pick(standard, |t| &t.cumulative_quadratic, s),
            pick(ep, |t| &t.cumulative_linear, s),
            pick(ep, |t| &t.cumulative_quadratic, s),
        )
        .unwrap();
    }
    out
}

/// Final-time field on the grid: FOM and both lifted ROM predictions.
pub fn prediction_csv(out: &BenchmarkOutput) -> Result<String> {
    let grid = out.snapshots.config.validate()?;
    let run = out.summary.runs.last().expect("non-empty runs");
    let last = out.snapshots.m() - 1;
    let lift = |m: &ModeResult| {
        m.trajectory
            .as_ref()
            .map(|t| &run.basis.v * t.column(last))
    };
    let (ep, std) = (lift(&run.ep), lift(&run.standard));
    let mut csv = String::from("x,y,u_fom,u_rom,u_rom_standard\n");
    for p in 0..grid.n() {
        let (x, y) = grid.coords(p);
        writeln!(
            csv,
            "{x},{y},{},{},{}",
            out.snapshots.x[(p, last)],
            csv_num(ep.as_ref().map(|v| v[p])),
            csv_num(std.as_ref().map(|v| v[p]))
        )
        .unwrap();
    }
    Ok(csv)
}

/// Writes the three CSV files and `summary.json`.
pub fn write_benchmark(out: &BenchmarkOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("error_vs_r.csv"), error_vs_r_csv(&out.summary))?;
    let (std, ep) = out.traces.as_ref().map_or((None, None), |(s, e)| (s.as_ref(), e.as_ref()));
    fs::write(dir.join("energy_trace.csv"), energy_trace_csv(&out.snapshots.times, std, ep))?;
    fs::write(dir.join("prediction_t4.csv"), prediction_csv(out)?)?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&out.summary)?)?;
    Ok(())
}
