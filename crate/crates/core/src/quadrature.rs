//! Midpoint quadrature over `[-π, π]^d` on shifted grids.
//!
//! Nodes sit at `(k + ½)·2π/n - π`, so an integrable singularity at
//! `p = 0` is never evaluated when `n` is even.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::stats::NeumaierSum;

/// Relative disagreement between the two finest levels above which the
/// result is flagged as not converged.
pub const CONVERGENCE_TOL: f64 = 0.05;

#[derive(Clone, Debug, Serialize)]
pub struct QuadratureResult {
    /// Value on the finest grid.
    pub value: f64,
    /// Value on the next-coarser grid.
    pub coarse: f64,
    /// `|value - coarse|`.
    pub error_estimate: f64,
    /// Richardson extrapolation assuming error `O(h^order)`.
    pub extrapolated: f64,
    pub converged: bool,
    pub levels: Vec<usize>,
}

/// Shifted-midpoint node coordinate `i` on an `n`-point axis.
pub fn node(i: usize, n: usize) -> f64 {
    (i as f64 + 0.5) * 2.0 * PI / n as f64 - PI
}

/// Midpoint rule with `n^d` nodes; returns `∫_{[-π,π]^d} f`.
///
/// Work is split over the first axis and partial sums are combined in
/// index order, so the result does not depend on the thread count.
pub fn midpoint<F>(d: usize, n: usize, f: F) -> f64
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    assert!(d >= 1 && n >= 1);
    let inner = n.pow(d as u32 - 1);
    let partials: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i0| {
            let mut p = vec![0.0; d];
            p[0] = node(i0, n);
            let mut acc = NeumaierSum::default();
            for rest in 0..inner {
                let mut r = rest;
                for a in (1..d).rev() {
                    p[a] = node(r % n, n);
                    r /= n;
                }
                acc.add(f(&p));
            }
            acc.sum()
        })
        .collect();
    let mut total = NeumaierSum::default();
    partials.into_iter().for_each(|x| total.add(x));
    let cell = (2.0 * PI / n as f64).powi(d as i32);
    total.sum() * cell
}

/// Runs the midpoint rule on each refinement level (nodes per axis) and
/// reports the finest value with a Richardson estimate from the two
/// finest levels.
pub fn quadrature<F>(d: usize, levels: &[usize], order: f64, f: F) -> QuadratureResult
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    assert!(levels.len() >= 2, "need at least two refinement levels");
    let values: Vec<f64> = levels.iter().map(|&n| midpoint(d, n, &f)).collect();
    let fine = values[values.len() - 1];
    let coarse = values[values.len() - 2];
    let nf = levels[levels.len() - 1] as f64;
    let nc = levels[levels.len() - 2] as f64;
    let ratio = (nf / nc).powf(order);
    let extrapolated = fine + (fine - coarse) / (ratio - 1.0);
    let error_estimate = (fine - coarse).abs();
    QuadratureResult {
        value: fine,
        coarse,
        error_estimate,
        extrapolated,
        converged: error_estimate <= CONVERGENCE_TOL * fine.abs().max(f64::MIN_POSITIVE),
        levels: levels.to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{dhat, gamma_kernel_hat};

    #[test]
    fn constant_integrand() {
        let r = quadrature(3, &[8, 16], 2.0, |_| 1.0);
        assert!((r.value - (2.0 * PI).powi(3)).abs() < 1e-9);
        assert!(r.converged);
    }

    #[test]
    fn gamma_kernel_integrates_to_one_over_d() {
        for d in [2usize, 3, 4] {
            let v = midpoint(d, 16, gamma_kernel_hat) / (2.0 * PI).powi(d as i32);
            assert!((v - 1.0 / d as f64).abs() < 1e-10, "d={d}: {v}");
        }
    }

    #[test]
    fn thread_count_does_not_change_result() {
        let f = |p: &[f64]| 1.0 / dhat(p);
        let a = midpoint(3, 24, f);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| midpoint(3, 24, f));
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
