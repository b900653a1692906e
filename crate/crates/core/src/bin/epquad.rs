//! `epquad` command-line interface.
//!
//! Exit codes: 0 success, 1 check failed, 2 usage or configuration error,
//! 3 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use epquad::burgers2d::{self, BurgersConfig, SnapshotSet};
use epquad::opinf::{InferenceConfig, InferenceMode};
use epquad::pipeline::{self, ModelArtifact, PipelineConfig};
use epquad::rom::PodDecomposition;
use epquad::skewrep::{self, FreeEntrySpec};
use epquad::{constraints, io, EpqError};

#[derive(Parser)]
#[command(name = "epquad", version, about = "Energy-preserving quadratic operators and operator inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the 2D Burgers' full-order model and write a snapshot archive.
    Simulate {
        /// BurgersConfig JSON; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Record central-difference time derivatives instead of the exact RHS.
        #[arg(long)]
        fd_derivatives: bool,
    },
    /// POD-reduce a snapshot archive and infer a quadratic reduced model.
    Infer {
        #[arg(long)]
        snapshots: PathBuf,
        #[arg(long, default_value = "ep")]
        mode: InferenceMode,
        #[arg(long)]
        r: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        inference: InferenceArgs,
    },
    /// Rewrite an energy-preserving operator with skew-symmetric sub-matrices.
    Transform {
        /// Operator file (n × n² matrix text).
        #[arg(long = "h")]
        h: PathBuf,
        /// Free entries, one `i j k value` line each (1-based).
        #[arg(long)]
        free: Option<PathBuf>,
        /// Produce the row-skew form `g(i,k,j) = -g(k,i,j)` instead.
        #[arg(long)]
        row_skew: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the energy-preservation condition of an operator file.
    CheckEp {
        #[arg(long = "h")]
        h: PathBuf,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
    /// Compare constraint-matrix row counts and ranks with closed forms.
    VerifyCounts {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        json: bool,
    },
    /// Integrate a model artifact and lift the trajectory to full state.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Snapshot archive providing the initial state and the reference.
        #[arg(long)]
        snapshots: Option<PathBuf>,
        /// BurgersConfig JSON for the initial state and time grid.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full benchmark: simulate, sweep r, infer both modes, write CSVs.
    Benchmark {
        /// PipelineConfig JSON; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated reduced dimensions, overriding the config.
        #[arg(long, value_delimiter = ',')]
        r_list: Option<Vec<usize>>,
    },
}

#[derive(Args)]
struct InferenceArgs {
    /// InferenceConfig JSON; command-line flags override it.
    #[arg(long = "config")]
    config: Option<PathBuf>,
    #[arg(long)]
    shared_lambda: bool,
    #[arg(long)]
    include_constant: bool,
    #[arg(long)]
    lambda_min: Option<f64>,
    #[arg(long)]
    lambda_max: Option<f64>,
    #[arg(long)]
    lambda_count: Option<usize>,
}

impl InferenceArgs {
    fn resolve(&self, mode: InferenceMode) -> epquad::Result<InferenceConfig> {
        let mut cfg = match &self.config {
            Some(p) => read_json::<InferenceConfig>(p)?,
            None => InferenceConfig::default(),
        };
        cfg.mode = mode;
        cfg.shared_lambda |= self.shared_lambda;
        cfg.include_constant |= self.include_constant;
        if let Some(v) = self.lambda_min {
            cfg.lambda_min = v;
        }
        if let Some(v) = self.lambda_max {
            cfg.lambda_max = v;
        }
        if let Some(v) = self.lambda_count {
            cfg.lambda_count = v;
        }
        cfg.sweep().validate()?;
        Ok(cfg)
    }
}

/// Outcome of a command that ran to completion.
enum Status {
    Ok,
    CheckFailed,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> epquad::Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| EpqError::Config(format!("{}: {e}", path.display())))
}

fn exit_code(e: &EpqError) -> u8 {
    match e {
        EpqError::NotEnergyPreserving { .. } => 1,
        EpqError::InternalConsistency(_)
        | EpqError::InferenceFailure(_)
        | EpqError::BlowUp { .. }
        | EpqError::UnstableModel { .. } => 3,
        _ => 2,
    }
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn simulate(config: Option<&Path>, out: &Path, fd: bool) -> epquad::Result<Status> {
    let mut cfg = match config {
        Some(p) => read_json::<BurgersConfig>(p)?,
        None => BurgersConfig::default(),
    };
    cfg.fd_derivatives |= fd;
    let snaps = burgers2d::simulate(&cfg)?;
    warn_all(&snaps.warnings);
    snaps.write(out)?;
    println!("wrote {} snapshots of dimension {} to {}", snaps.m(), snaps.n(), out.display());
    Ok(Status::Ok)
}

fn infer(snapshots: &Path, mode: InferenceMode, r: usize, out: &Path, args: &InferenceArgs) -> epquad::Result<Status> {
    let cfg = args.resolve(mode)?;
    let snaps = SnapshotSet::read(snapshots)?;
    let pod = PodDecomposition::new(&snaps.x)?;
    let (art, _) = pipeline::infer_from_snapshots(&snaps, &pod, r, &cfg)?;
    warn_all(&art.meta.warnings);
    art.write(out)?;
    println!(
        "{} model, r = {r}, energy-preserving: {}, λ per row: {:?}",
        cfg.mode, art.meta.energy_preserving, art.meta.lambdas
    );
    Ok(Status::Ok)
}

fn transform(h: &Path, free: Option<&Path>, row_skew: bool, out: &Path) -> epquad::Result<Status> {
    let op = io::read_quadop(h)?;
    let free = match free {
        Some(p) => FreeEntrySpec::read(p)?,
        None => FreeEntrySpec::new(),
    };
    let result = if row_skew {
        skewrep::to_row_skew_with(&op, &free)?
    } else {
        skewrep::to_skew_block(&op, &free)?
    };
    io::write_quadop(out, &result)?;
    let report = result.energy_check(1e-12);
    println!(
        "wrote {} (n = {}), worst residual {:.3e}",
        out.display(),
        result.n(),
        report.worst_residual
    );
    Ok(Status::Ok)
}

fn check_ep(h: &Path, tol: f64) -> epquad::Result<Status> {
    let op = io::read_quadop(h)?;
    let report = op.energy_check(tol);
    let (i, j, k) = report.worst_triple;
    println!(
        "n = {}, conditions checked: {}, worst triple ({i}, {j}, {k}), residual {:.3e}, threshold {:.3e}",
        op.n(),
        report.conditions_checked,
        report.worst_residual,
        report.threshold
    );
    if report.preserving {
        println!("energy-preserving");
        Ok(Status::Ok)
    } else {
        println!("NOT energy-preserving");
        Ok(Status::CheckFailed)
    }
}

fn verify_counts(n: usize, json: bool) -> epquad::Result<Status> {
    let table = constraints::verify_counts(n)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&table)?);
    } else {
        println!("n = {n}");
        println!("{:<26} {:>9} {:>9}", "quantity", "computed", "formula");
        for (name, (got, want)) in table.entries() {
            let flag = if got == want { "" } else { "  MISMATCH" };
            println!("{name:<26} {got:>9} {want:>9}{flag}");
        }
    }
    Ok(if table.all_match() { Status::Ok } else { Status::CheckFailed })
}

fn predict(model: &Path, snapshots: Option<&Path>, config: Option<&Path>, out: &Path) -> epquad::Result<Status> {
    let art = ModelArtifact::read(model)?;
    let truth = snapshots.map(SnapshotSet::read).transpose()?;
    let cfg = match (config, &truth, &art.meta.training) {
        (Some(p), _, _) => read_json::<BurgersConfig>(p)?,
        (None, Some(t), _) => t.config.clone(),
        (None, None, Some(c)) => c.clone(),
        (None, None, None) => {
            return Err(EpqError::Config(
                "no time grid: pass --config or --snapshots".into(),
            ))
        }
    };
    let steps = cfg.steps()?;
    let u0 = match &truth {
        Some(t) => t.x.column(0).into_owned(),
        None => burgers2d::initial_state(&cfg, &cfg.validate()?),
    };
    let (xhat, full) = pipeline::predict(&art, &u0, cfg.dt, steps)?;
    fs::create_dir_all(out)?;
    io::write_matrix(&out.join("Xhat.txt"), &xhat)?;
    io::write_matrix(&out.join("X.txt"), &full)?;
    let times: Vec<f64> = (0..=steps).map(|s| s as f64 * cfg.dt).collect();
    io::write_vector(&out.join("times.txt"), &nalgebra::DVector::from_vec(times))?;
    println!("wrote {} predicted snapshots to {}", full.ncols(), out.display());
    if let Some(t) = truth {
        if t.x.shape() == full.shape() {
            println!("mean max-normalized error: {:.6e}", burgers2d::mean_maxnorm_error(&t.x, &full)?);
        }
    }
    Ok(Status::Ok)
}

fn benchmark(config: Option<&Path>, out: Option<&Path>, r_list: Option<Vec<usize>>) -> epquad::Result<Status> {
    let mut cfg = match config {
        Some(p) => PipelineConfig::read(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(r) = r_list {
        cfg.r_list = r;
    }
    let out = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .ok_or_else(|| EpqError::Config("no output directory: pass --out or set output_dir".into()))?;
    let result = pipeline::run_benchmark(&cfg)?;
    pipeline::write_benchmark(&result, &out)?;
    let s = &result.summary;
    warn_all(&s.fom.warnings);
    println!("r, error_standard, error_ep, error_reprojection");
    let fmt = |e: Option<f64>| e.map_or("unstable".into(), |e| format!("{e:.4e}"));
    for run in &s.runs {
        println!("{}, {}, {}, {:.4e}", run.r, fmt(run.standard.error), fmt(run.ep.error), run.error_reprojection);
    }
    println!("wall time {:.1} s; artifacts in {}", s.wall_time_seconds, out.display());
    Ok(Status::Ok)
}

fn run(cli: Cli) -> epquad::Result<Status> {
    pipeline::init_threads_from_env()?;
    match cli.command {
        Command::Simulate { config, out, fd_derivatives } => simulate(config.as_deref(), &out, fd_derivatives),
        Command::Infer { snapshots, mode, r, out, inference } => infer(&snapshots, mode, r, &out, &inference),
        Command::Transform { h, free, row_skew, out } => transform(&h, free.as_deref(), row_skew, &out),
        Command::CheckEp { h, tol } => check_ep(&h, tol),
        Command::VerifyCounts { n, json } => verify_counts(n, json),
        Command::Predict { model, snapshots, config, out } => {
            predict(&model, snapshots.as_deref(), config.as_deref(), &out)
        }
        Command::Benchmark { config, out, r_list } => benchmark(config.as_deref(), out.as_deref(), r_list),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::CheckFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
