//! Infrared integral bound and the graded-sector-condition threshold.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::lattice::dhat;
use crate::quadrature::{midpoint, node, CONVERGENCE_TOL};
use crate::stats::NeumaierSum;

/// Default coarse `q` grid (points per axis, includes `q = 0`).
pub const Q_GRID: usize = 8;
/// Default quadrature levels.
pub const LEVELS: [usize; 2] = [32, 64];
/// Slack used when comparing a condition against its budget.
pub const SLACK: f64 = 1e-12;
/// `n` at which the plateau limits are evaluated numerically.
const PLATEAU_N: f64 = 1e12;

#[derive(Clone, Debug, Serialize)]
pub struct IntegralBound {
    pub d: usize,
    pub levels: Vec<usize>,
    pub q_grid: usize,
    /// `sup_q I(q)` per level.
    pub sup_per_level: Vec<f64>,
    pub argmax: Vec<f64>,
    pub relative_change: f64,
    pub converged: bool,
    /// `C² = sup I / 8`, so that `‖|Δ|^{-1/2} a*_e↾H_n‖ ≤ C√(n+1)`.
    /// The factor `1/8` collects the one-particle weight `1/(4D̂)` and the
    /// `1/(2D̂)` of `|Δ|^{-1}`.
    pub c_squared: f64,
}

/// `I(q) = (2π)^{-d} ∫ |e^{ip·e₁} - 1|² / (D̂(p) D̂(p+q)) dp` on an `n^d`
/// shifted midpoint grid.
pub fn infrared_integral(q: &[f64], n: usize) -> f64 {
    let d = q.len();
    let f = |p: &[f64]| {
        let pq: Vec<f64> = p.iter().zip(q).map(|(a, b)| a + b).collect();
        2.0 * (1.0 - p[0].cos()) / (dhat(p) * dhat(&pq))
    };
    midpoint(d, n, f) / (2.0 * PI).powi(d as i32)
}

/// `|e^{ip₁} - 1|²/D̂(p)` and `1/D̂(p)` tabulated on a shifted grid, so a
/// grid-aligned `q` becomes an index shift.
struct ShiftedTable {
    d: usize,
    n: usize,
    num: Vec<f64>,
    inv: Vec<f64>,
}

impl ShiftedTable {
    fn new(d: usize, n: usize) -> Self {
        let cos: Vec<f64> = (0..n).map(|i| node(i, n).cos()).collect();
        let size = n.pow(d as u32);
        let mut num = Vec::with_capacity(size);
        let mut inv = Vec::with_capacity(size);
        for k in 0..size {
            let (mut r, mut dh, mut first) = (k, 0.0, 0.0);
            for a in (0..d).rev() {
                let c = cos[r % n];
                dh += 1.0 - c;
                if a == 0 {
                    first = 1.0 - c;
                }
                r /= n;
            }
            num.push(2.0 * first / dh);
            inv.push(1.0 / dh);
        }
        ShiftedTable { d, n, num, inv }
    }

    /// `(2π)^{-d} ∫` of `num(p)·inv(p + shift)` by the midpoint rule.
    fn correlate(&self, shift: &[usize]) -> f64 {
        let (d, n) = (self.d, self.n);
        let mut acc = NeumaierSum::default();
        let mut idx = vec![0usize; d];
        for k in 0..self.num.len() {
            let mut r = k;
            for a in (0..d).rev() {
                idx[a] = r % n;
                r /= n;
            }
            let j = idx.iter().zip(shift).fold(0, |j, (&i, &s)| j * n + (i + s) % n);
            acc.add(self.num[k] * self.inv[j]);
        }
        acc.sum() / self.num.len() as f64
    }
}

/// Point `k` of the unshifted coarse grid `2πk/m - π`.
fn coarse(k: usize, m: usize) -> f64 {
    2.0 * PI * k as f64 / m as f64 - PI
}

/// `sup_q I(q)` over a coarse `q` grid for each quadrature level.
///
/// Each level must be a multiple of `q_grid` so `p + q` stays on the
/// shifted grid and never hits the singularity.
pub fn gsc_integral_bound(d: usize, levels: &[usize], q_grid: usize) -> Result<IntegralBound> {
    if d < 3 {
        return invalid("the infrared integral diverges for d < 3");
    }
    if levels.len() < 2 || q_grid == 0 || levels.iter().any(|&n| n % q_grid != 0 || n % 2 != 0) {
        return invalid("need at least two even levels, each a multiple of the q grid");
    }
    let qs: Vec<Vec<f64>> = (0..q_grid.pow(d as u32))
        .map(|mut k| {
            let mut q = vec![0.0; d];
            for a in (0..d).rev() {
                q[a] = coarse(k % q_grid, q_grid);
                k /= q_grid;
            }
            q
        })
        .collect();
    let mut sup_per_level = Vec::new();
    let mut argmax = Vec::new();
    for &n in levels {
        let table = ShiftedTable::new(d, n);
        let vals: Vec<f64> = (0..qs.len())
            .into_par_iter()
            .map(|k| {
                let mut shift = vec![0usize; d];
                let mut r = k;
                for a in (0..d).rev() {
                    // q = 2πc/m - π moves node i to i + n·c/m - n/2
                    let c = r % q_grid;
                    shift[a] = (n * c / q_grid + n / 2) % n;
                    r /= q_grid;
                }
                table.correlate(&shift)
            })
            .collect();
        let (i, v) = vals.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
        );
        sup_per_level.push(v);
        argmax = qs[i].clone();
    }
    let fine = sup_per_level[sup_per_level.len() - 1];
    let prev = sup_per_level[sup_per_level.len() - 2];
    let relative_change = (fine - prev).abs() / fine;
    Ok(IntegralBound {
        d,
        levels: levels.to_vec(),
        q_grid,
        sup_per_level,
        argmax,
        relative_change,
        converged: relative_change <= CONVERGENCE_TOL,
        c_squared: fine / 8.0,
    })
}

/// Parameters of the multiplier `t(n)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GscParams {
    pub r: usize,
    pub kappa: f64,
    pub c: f64,
}

impl GscParams {
    pub fn new(r: usize, kappa: f64, c: f64) -> Result<Self> {
        if r < 1 {
            return invalid("grading width r must be at least 1");
        }
        if !(kappa >= 2.0) || !kappa.is_finite() {
            return invalid("kappa must be finite and at least 2");
        }
        if !(c >= 0.0) || !c.is_finite() {
            return invalid("C must be finite and non-negative");
        }
        Ok(GscParams { r, kappa, c })
    }

    /// `1/(2(2r+1))`.
    pub fn budget(&self) -> f64 {
        1.0 / (2.0 * (2 * self.r + 1) as f64)
    }

    /// `n/(12r²κ) + C`.
    pub fn odd_coefficient(&self, n: f64) -> f64 {
        let r = self.r as f64;
        n / (12.0 * r * r * self.kappa) + self.c
    }

    /// `n²/(6r³κ²) + C`.
    pub fn even_coefficient(&self, n: f64) -> f64 {
        let r = self.r as f64;
        n * n / (6.0 * r * r * r * self.kappa * self.kappa) + self.c
    }

    /// Upper bounds on both conditions valid for every `n ≥ n₁`; both are
    /// decreasing in `n`.
    fn tail_bounds(&self, n: f64) -> (f64, f64) {
        let x = (self.r as f64 / n).ln_1p();
        let a = (2.0 * self.kappa * x).exp_m1() * self.odd_coefficient(n);
        let b = (self.kappa * x).exp_m1().powi(2) * self.even_coefficient(n);
        (a, b)
    }

    /// Large-`n` limits of the two conditions, both `1/(6r)` whatever `C`.
    pub fn plateau_limits(&self) -> (f64, f64) {
        self.tail_bounds(PLATEAU_N)
    }
}

/// `t(n) = n₁^κ` below `n₁`, `n^κ` on `[n₁, n₂]` and `n₂^κ` above.
pub fn t_multiplier(n: usize, n1: usize, n2: Option<usize>, kappa: f64) -> f64 {
    let m = match n2 {
        Some(n2) => n.clamp(n1, n2),
        None => n.max(n1),
    };
    (m as f64).powf(kappa)
}

/// The two left-hand sides at a given `n`, maximised over `|j| ≤ r` with
/// `n + j ≥ 0`.
pub fn conditions_at(p: &GscParams, n1: usize, n: usize) -> (f64, f64) {
    let tn = t_multiplier(n, n1, None, p.kappa);
    let (mut a, mut b) = (0.0f64, 0.0f64);
    let lo = n.saturating_sub(p.r);
    for m in lo..=n + p.r {
        let tm = t_multiplier(m, n1, None, p.kappa);
        a = a.max((tn * tn - tm * tm).abs() / (tn * tn));
        b = b.max((tn - tm).powi(2) / (tn * tn));
    }
    let nf = n as f64;
    (a * p.odd_coefficient(nf), b * p.even_coefficient(nf))
}

#[derive(Clone, Debug, Serialize)]
pub struct Threshold {
    pub params: GscParams,
    pub n1: usize,
    pub budget: f64,
    /// Beyond this `n` both conditions hold for any `n₁ ≤ n`.
    pub tail_start: usize,
    pub plateau_limits: (f64, f64),
    /// Largest left-hand side found in the exact scan.
    pub worst: (f64, f64),
}

/// Smallest `n₁` for which both conditions hold for all `n ≥ 0` (with
/// `n₂ = ∞`).
///
/// The tail bounds decrease to the plateau limits, so the first `n*` from
/// which they stay within budget is found by bisection. Candidates `n₁`
/// are then scanned upward, checking every `n < max(n₁ + r, n*)` exactly.
pub fn gsc_threshold(p: &GscParams, max_n1: usize) -> Result<Threshold> {
    let budget = p.budget();
    let limits = p.plateau_limits();
    let limit = limits.0.max(limits.1);
    // The excess over the plateau is positive and of order 1/n, so a limit
    // equal to the budget cannot be met at any finite n.
    if limit >= budget - SLACK {
        return Err(Error::Infeasible { limit, budget });
    }
    let ok = |n: f64| {
        let (a, b) = p.tail_bounds(n);
        a <= budget + SLACK && b <= budget + SLACK
    };
    let mut hi = 1usize;
    while !ok(hi as f64) {
        hi = hi
            .checked_mul(2)
            .ok_or(Error::Numeric("tail bound never settles".into()))?;
    }
    let mut lo = 0usize;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if mid > 0 && ok(mid as f64) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let tail_start = hi;
    for n1 in 1..=max_n1 {
        let top = (n1 + p.r).max(tail_start);
        let mut worst = (0.0f64, 0.0f64);
        let mut good = true;
        for n in 0..top {
            let (a, b) = conditions_at(p, n1, n);
            worst = (worst.0.max(a), worst.1.max(b));
            if a > budget + SLACK || b > budget + SLACK {
                good = false;
                break;
            }
        }
        if good {
            return Ok(Threshold {
                params: *p,
                n1,
                budget,
                tail_start,
                plateau_limits: limits,
                worst,
            });
        }
    }
    Err(Error::Numeric(format!(
        "no n1 up to {max_n1} satisfies both conditions"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integral_is_finite_at_zero() {
        let v16 = infrared_integral(&[0.0, 0.0, 0.0], 16);
        let v32 = infrared_integral(&[0.0, 0.0, 0.0], 32);
        assert!(v16.is_finite() && v32.is_finite());
        assert!((v16 - v32).abs() / v32 < 0.1);
    }

    #[test]
    fn table_agrees_with_direct_quadrature() {
        let q = [coarse(1, 4), coarse(2, 4), coarse(3, 4)];
        let table = ShiftedTable::new(3, 16);
        let shift: Vec<usize> = [1usize, 2, 3].iter().map(|&c| (16 * c / 4 + 8) % 16).collect();
        let a = table.correlate(&shift);
        let b = infrared_integral(&q, 16);
        assert!((a - b).abs() < 1e-12 * b, "{a} {b}");
    }

    #[test]
    fn rejects_low_dimension_and_bad_levels() {
        assert!(gsc_integral_bound(2, &[16, 32], 8).is_err());
        assert!(gsc_integral_bound(3, &[12, 32], 8).is_err());
    }

    #[test]
    fn plateau_limits_match_closed_forms() {
        for r in 1..=5 {
            let p = GscParams::new(r, 2.0, 0.0).unwrap();
            let (a, b) = p.plateau_limits();
            let want = 1.0 / (6.0 * r as f64);
            assert!((a - want).abs() < 1e-12 && (b - want).abs() < 1e-12);
        }
    }

    #[test]
    fn threshold_for_r2_is_valid_and_minimal() {
        let p = GscParams::new(2, 2.0, 0.0).unwrap();
        let t = gsc_threshold(&p, 100_000).unwrap();
        for n in 0..=10 * t.n1 {
            let (a, b) = conditions_at(&p, t.n1, n);
            assert!(a <= p.budget() + SLACK && b <= p.budget() + SLACK, "n={n}");
        }
        let before = t.n1 - 1;
        if before > 0 {
            let bad = (0..10 * t.n1).any(|n| {
                let (a, b) = conditions_at(&p, before, n);
                a > p.budget() + SLACK || b > p.budget() + SLACK
            });
            assert!(bad);
        }
    }

    #[test]
    fn r1_is_reported_infeasible() {
        let p = GscParams::new(1, 2.0, 0.0).unwrap();
        match gsc_threshold(&p, 1000) {
            Err(Error::Infeasible { limit, budget }) => {
                assert!((limit - 1.0 / 6.0).abs() < 1e-12 && (budget - 1.0 / 6.0).abs() < 1e-15);
            }
            other => panic!("{other:?}"),
        }
        // C only affects finite n: it raises n1 but never the plateau
        let small = gsc_threshold(&GscParams::new(3, 2.0, 0.0).unwrap(), 100_000).unwrap();
        let large = gsc_threshold(&GscParams::new(3, 2.0, 1.0).unwrap(), 100_000).unwrap();
        assert!(large.n1 > small.n1);
    }

    #[test]
    fn multiplier_shape() {
        let t: Vec<f64> = (0..20).map(|n| t_multiplier(n, 5, Some(12), 2.0)).collect();
        assert!(t.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(t[0], 25.0);
        assert_eq!(t[4], 25.0);
        assert_eq!(t[19], 144.0);
    }
}
