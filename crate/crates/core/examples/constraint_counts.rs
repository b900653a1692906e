//! Row counts and numerical ranks of the equivalence, energy and skew
//! constraint matrices against their closed forms.
//!
//! ```text
//! cargo run --example constraint_counts [max_n]
//! ```

use epquad::constraints;

fn main() -> epquad::Result<()> {
    let max_n: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(6);
    println!("{:>3} {:>8} {:>10} {:>12} {:>12} {:>8}", "n", "rank(B)", "rank(A1;C)", "independent", "free", "ok");
    for n in 1..=max_n {
        let t = constraints::verify_counts(n)?;
        println!(
            "{n:>3} {:>8} {:>10} {:>12} {:>12} {:>8}",
            t.rank_b.0,
            t.rank_a1_c.0,
            t.independent_constraints.0,
            t.nullity.0,
            t.all_match()
        );
    }
    Ok(())
}
