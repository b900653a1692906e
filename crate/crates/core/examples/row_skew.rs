//! The row-skew alternative `g(i,k,j) = -g(k,i,j)` and the least-squares
//! route through the constraint system, both compared with the skew-block
//! form.
//!
//! ```text
//! cargo run --example row_skew
//! ```

use epquad::constraints;
use epquad::skewrep::{self, FreeEntrySpec};

fn main() -> epquad::Result<()> {
    for n in 2..=6 {
        let h = skewrep::random_energy_preserving(n, 100 + n as u64)?;
        let block = skewrep::to_skew_block(&h, &FreeEntrySpec::new())?;
        let row = skewrep::to_row_skew(&h)?;
        let lsq = constraints::solve_equivalent(&h)?;
        println!(
            "n = {n}: block skew defect {:.1e}, row skew defect {:.1e}, \
             block~row {}, block~lsq {}, lsq skew defect {:.1e}",
            block.skew_defect(),
            row.row_skew_defect(),
            block.equivalent_to(&row, 20, 1e-9)?,
            block.equivalent_to(&lsq, 20, 1e-9)?,
            lsq.skew_defect(),
        );
    }
    Ok(())
}
