//! Log-gamma, digamma, trigamma and the log Beta function.
//!
//! ```text
//! cargo run --example special_functions
//! ```

use plkt::diffcore::{digamma, lgamma, ln_beta, trigamma, EULER_GAMMA};

fn main() -> plkt::Result<()> {
    println!("{:>6} {:>14} {:>14} {:>14}", "x", "lgamma", "digamma", "trigamma");
    for x in [0.1, 0.5, 1.0, 2.5, 10.0, 100.0] {
        println!(
            "{x:>6} {:>14.9} {:>14.9} {:>14.9}",
            lgamma(x)?,
            digamma(x)?,
            trigamma(x)?
        );
    }
    println!("digamma(1) = {:.12} (−γ = {:.12})", digamma(1.0)?, -EULER_GAMMA);
    println!(
        "ln B(2, 3) = {:.12} (ln 1/12 = {:.12})",
        ln_beta(2.0, 3.0)?,
        (1.0f64 / 12.0).ln()
    );
    match lgamma(-1.0) {
        Err(e) => println!("lgamma(−1) → {e}"),
        Ok(v) => println!("lgamma(−1) = {v}"),
    }
    Ok(())
}
