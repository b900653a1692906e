//! Rewrite an energy-preserving quadratic operator so that every sub-matrix
//! is skew-symmetric, choosing the free entry by hand.
//!
//! ```text
//! cargo run --example skew_transform
//! ```

use epquad::skewrep::{self, FreeEntrySpec};
use epquad::QuadOp;

fn show(label: &str, h: &QuadOp) {
    println!("{label}");
    for i in 0..h.n() {
        println!("  H_{} = {:.4}", i + 1, h.submatrix(i));
    }
}

fn main() -> epquad::Result<()> {
    // Energy-preserving but with no visible structure.
    let h = skewrep::random_energy_preserving(3, 7)?;
    let report = h.energy_check(1e-12);
    println!(
        "input: {} conditions, worst residual {:.2e}, skew defect {:.3}",
        report.conditions_checked,
        report.worst_residual,
        h.skew_defect()
    );
    show("input operator", &h);

    // n = 3 has a single free value; pin h(2,3,1) (sub-matrix 2, row 3, column 1).
    let free = FreeEntrySpec::new().with(2, 3, 1, 3.1)?;
    let skew = skewrep::to_skew_block(&h, &free)?;
    show("skew-symmetric representation", &skew);

    println!("h~(2,3,1) = {}", skew.get(1, 2, 0));
    println!("skew defect {:.2e}", skew.skew_defect());
    println!("equivalent to input: {}", skew.equivalent_to(&h, 100, 1e-10)?);
    Ok(())
}
