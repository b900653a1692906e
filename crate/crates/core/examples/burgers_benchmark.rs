//! Full Burgers' benchmark: simulate, sweep r, infer both model forms,
//! and write the diagnostic CSVs.
//!
//! ```text
//! cargo run --release --example burgers_benchmark -- [out_dir] [r ...]
//! ```

use std::path::PathBuf;

use epquad::pipeline::{self, PipelineConfig};

fn main() -> epquad::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "benchmark-out".into()));
    let mut cfg = PipelineConfig::default();
    let r_list: Vec<usize> = args.filter_map(|a| a.parse().ok()).collect();
    if !r_list.is_empty() {
        cfg.r_list = r_list;
    }
    pipeline::init_threads_from_env()?;

    let result = pipeline::run_benchmark(&cfg)?;
    pipeline::write_benchmark(&result, &out)?;

    let s = &result.summary;
    println!("FOM: n = {}, m = {}, advection EP check: {}", s.fom.n, s.fom.m, s.fom.advection_ep_check);
    println!("{:>3}  {:>12}  {:>12}  {:>12}", "r", "standard", "ep", "reprojection");
    let fmt = |e: Option<f64>| e.map_or("unstable".to_string(), |e| format!("{e:.3e}"));
    for run in &s.runs {
        println!(
            "{:>3}  {:>12}  {:>12}  {:>12.3e}",
            run.r,
            fmt(run.standard.error),
            fmt(run.ep.error),
            run.error_reprojection
        );
    }
    println!("wall time {:.1} s, artifacts in {}", s.wall_time_seconds, out.display());
    Ok(())
}
