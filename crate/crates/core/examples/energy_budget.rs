//! POD-reduce Burgers' snapshots, infer both model forms at one r, and
//! split the rate of change of reduced kinetic energy into linear and
//! quadratic contributions.
//!
//! ```text
//! cargo run --release --example energy_budget -- [r]
//! ```

use epquad::burgers2d::{self, BurgersConfig};
use epquad::opinf::{InferenceConfig, InferenceMode};
use epquad::pipeline;
use epquad::rom::{self, PodDecomposition};

fn main() -> epquad::Result<()> {
    let r: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(15);
    let cfg = BurgersConfig::default();
    let snaps = burgers2d::simulate(&cfg)?;
    let pod = PodDecomposition::new(&snaps.x)?;
    let sigma = pod.singular_values();
    println!("σ_{r}/σ_1 = {:.3e}", sigma[r - 1] / sigma[0]);

    let u0 = snaps.x.column(0).into_owned();
    for mode in [InferenceMode::Standard, InferenceMode::EnergyPreserving] {
        let inference = InferenceConfig { mode, ..Default::default() };
        let (art, _) = pipeline::infer_from_snapshots(&snaps, &pod, r, &inference)?;
        let (xhat, full) = pipeline::predict(&art, &u0, cfg.dt, cfg.steps()?)?;
        let trace = rom::energy_trace(&art.model, &xhat, &snaps.times, None)?;
        let last = trace.times.len() - 1;
        println!(
            "{mode:>9}: error {:.3e}, cumulative linear {:9.3}, cumulative quadratic {:9.3e}",
            burgers2d::mean_maxnorm_error(&snaps.x, &full)?,
            trace.cumulative_linear[last],
            trace.cumulative_quadratic[last],
        );
    }
    Ok(())
}
