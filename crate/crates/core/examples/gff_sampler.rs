//! Draws Gaussian free fields by FFT and compares the empirical two-point
//! function with the torus Green function. The last draw is written as a
//! binary dump and a CSV next to the system temp directory.

use msaw::estimators::{default_covariance_points, gff_covariance_check};
use msaw::gibbs::sample_gff;
use msaw::{SpectralCache, Torus};

fn main() -> msaw::Result<()> {
    let cache = SpectralCache::new(Torus::new(3, 12)?);
    let green = cache.torus_green();
    println!(
        "b(0) = {:.6}, b(0) - b(e) = {:.6}",
        green.at_index(0),
        green.nearest_neighbor_drop()
    );

    let points = default_covariance_points(3, 12);
    let report = gff_covariance_check(&cache, 2000, 7, &points)?;
    println!("{:>14} {:>11} {:>11} {:>8}", "x", "empirical", "b(x)", "z");
    for p in &report.points {
        println!(
            "{:>14} {:>11.5} {:>11.5} {:>8.2}",
            format!("{:?}", p.x),
            p.empirical.value,
            p.green,
            p.empirical.z(p.green)
        );
    }
    println!(
        "Σ_e (b(0) - b(e)) = {:.15} (exact {:.15})",
        report.drop_sum, report.drop_sum_exact
    );

    let field = sample_gff(&cache, 7);
    let dir = std::env::temp_dir();
    field.write_binary(std::fs::File::create(dir.join("gff.bin"))?)?;
    field.write_csv(std::fs::File::create(dir.join("gff.csv"))?)?;
    println!(
        "wrote {} and {}",
        dir.join("gff.bin").display(),
        dir.join("gff.csv").display()
    );
    Ok(())
}
