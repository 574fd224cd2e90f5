//! Operator norms on truncated Fock sectors of a small torus: creation and
//! annihilation against their closed forms, and the `|Δ|^{-1/2}∇_e`
//! multiplier maximum on a finer grid.

use msaw::fock::norm::{annihilation_norm, creation_norm, multiplier_norm};
use msaw::fock::FockSpace;
use msaw::Torus;

fn main() -> msaw::Result<()> {
    let (d, l) = (3, 4);
    let space = FockSpace::new(Torus::new(d, l)?, 3);
    let drop = (1.0 - (l as f64).powi(-(d as i32))) / (2.0 * d as f64);
    for n in 0..=2 {
        println!("sector {n}: dimension {}", space.dim(n)?);
        let c = creation_norm(&space, 0, n, 5)?;
        println!(
            "  ‖a*‖ = {:.12} (closed form {:.12}, {} iterations)",
            c.value,
            (drop * (n + 1) as f64).sqrt(),
            c.iterations
        );
        if n > 0 {
            let a = annihilation_norm(&space, 0, n, 6)?;
            println!(
                "  ‖a‖  = {:.12} (closed form {:.12})",
                a.value,
                (drop * n as f64).sqrt()
            );
        }
    }

    let fine = FockSpace::new(Torus::new(d, 32)?, 1);
    let max = multiplier_norm(&fine, 1, |t| fine.delta_inv_sqrt_nabla_multiplier(t, 0))?;
    println!("max |(e^(ip·e) - 1)/√(2D̂(p))| on L = 32: {max:.12}");
    Ok(())
}
