//! The multiplier threshold for several grading widths, and the infrared
//! integral bound that feeds the constant `C`.

use msaw::fock::gsc::{gsc_integral_bound, gsc_threshold, GscParams, LEVELS, Q_GRID};
use msaw::Error;

fn main() -> msaw::Result<()> {
    for r in 1..=4 {
        let p = GscParams::new(r, 2.0, 0.0)?;
        let (a, b) = p.plateau_limits();
        match gsc_threshold(&p, 10_000_000) {
            Ok(th) => println!(
                "r = {r}: n1 = {:>4}, budget {:.6}, plateau ({a:.6}, {b:.6})",
                th.n1, th.budget
            ),
            Err(Error::Infeasible { limit, budget }) => {
                println!("r = {r}: infeasible, plateau {limit:.6} reaches the budget {budget:.6}")
            }
            Err(e) => return Err(e),
        }
    }

    let bound = gsc_integral_bound(3, &LEVELS, Q_GRID)?;
    println!(
        "sup_q I(q): {:?} on grids {:?}, relative change {:.4}, C² = {:.6}",
        bound.sup_per_level, bound.levels, bound.relative_change, bound.c_squared
    );
    let with_c = GscParams::new(2, 2.0, bound.c_squared.sqrt())?;
    println!("r = 2 with that C: n1 = {}", gsc_threshold(&with_c, 10_000_000)?.n1);
    Ok(())
}
