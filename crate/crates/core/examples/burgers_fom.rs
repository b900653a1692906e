//! Simulate the 2D viscous Burgers' equation and check the discrete
//! advection operator and kinetic-energy decay.
//!
//! ```text
//! cargo run --release --example burgers_fom -- [out_dir]
//! ```

use std::path::PathBuf;

use epquad::burgers2d::{self, BurgersConfig};

fn main() -> epquad::Result<()> {
    let cfg = BurgersConfig::default();
    let ops = burgers2d::build_operators(&cfg)?;
    let check = ops.advection_sparse().energy_check(1e-12);
    println!(
        "grid {0}x{0}, n = {1}; advection energy check: {2} (worst {3:.2e})",
        ops.grid.side,
        ops.n(),
        check.preserving,
        check.worst_residual
    );

    let snaps = burgers2d::simulate(&cfg)?;
    for s in (0..snaps.m()).step_by(50) {
        let u = snaps.x.column(s).into_owned();
        println!(
            "t = {:4.2}  E = {:.6}  max|u| = {:.4}",
            snaps.times[s],
            burgers2d::kinetic_energy(&u),
            u.amax()
        );
    }

    if let Some(dir) = std::env::args().nth(1).map(PathBuf::from) {
        snaps.write(&dir)?;
        println!("archive written to {}", dir.display());
    }
    Ok(())
}
