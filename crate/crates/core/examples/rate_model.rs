//! Validates a few rate functions against the model conditions and prints
//! the jump rate `w(u)` and stationary potential `R(u)` along a grid.

use msaw::{validate, RateSpec};

fn main() -> msaw::Result<()> {
    let candidates = [
        ("quartic example", RateSpec::quartic_example()),
        ("interaction free", RateSpec::interaction_free(1.0)),
        (
            "linear w (not elliptic)",
            RateSpec::new(1.0, 1.0, vec![0.0, 1.0], vec![])?,
        ),
        (
            "even r (parity fails)",
            RateSpec::new(1.0, 1.0, vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 0.0, 0.0, 1.0])?,
        ),
    ];
    for (name, spec) in &candidates {
        let report = validate(spec);
        println!("{name}: {}", if report.passed { "valid" } else { "rejected" });
        for c in &report.conditions {
            println!("  {:<18} {:<5} {}", c.name, c.passed, c.detail);
        }
    }

    let q = RateSpec::quartic_example();
    println!("\n{:>6} {:>12} {:>12}", "u", "w(u)", "R(u)");
    for i in -4..=4 {
        let u = i as f64 * 0.5;
        println!("{u:>6.2} {:>12.6} {:>12.6}", q.eval_w(u), q.potential_r(u));
    }
    Ok(())
}
