//! Operator-norm estimates on Fock sectors.
//!
//! Norms of `B: H_n → ⊕ H_m` are obtained by power iteration on the
//! positive operator `B*B` restricted to `H_n`; the reported residual is
//! `‖B*Bx - λx‖/λ` at the final iterate.

use num_complex::Complex64;
use serde::Serialize;

use super::{FockSpace, GradedVector};
use crate::error::{invalid, Error, Result};
use crate::poly::Poly;

pub const POWER_MAX_ITER: usize = 2000;
pub const POWER_TOL: f64 = 1e-13;

#[derive(Clone, Debug, Serialize)]
pub struct NormEstimate {
    pub value: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Power iteration for the largest eigenvalue of a positive operator on
/// sector `n`; returns its square root.
pub fn power_norm<F>(space: &FockSpace, n: usize, seed: u64, apply: F) -> Result<NormEstimate>
where
    F: Fn(&GradedVector) -> Result<GradedVector>,
{
    let mut x = space.random(n, seed)?;
    let nx = space.norm(&x)?;
    x.scale(1.0 / nx);
    let mut lambda = 0.0;
    let mut residual = f64::INFINITY;
    for it in 1..=POWER_MAX_ITER {
        let y = apply(&x)?;
        if y.n != n {
            return Err(Error::InvalidSector(y.n as i64));
        }
        let new_lambda = space.inner(&x, &y)?.re;
        let mut r = y.clone();
        r.axpy(Complex64::new(-new_lambda, 0.0), &x);
        let ny = space.norm(&y)?;
        if ny == 0.0 {
            return Ok(NormEstimate {
                value: 0.0,
                residual: 0.0,
                iterations: it,
            });
        }
        residual = space.norm(&r)? / new_lambda.abs().max(f64::MIN_POSITIVE);
        let settled = (new_lambda - lambda).abs() <= POWER_TOL * new_lambda.abs();
        lambda = new_lambda;
        x = y;
        x.scale(1.0 / ny);
        if settled && residual < 1e-7 {
            return Ok(NormEstimate {
                value: lambda.max(0.0).sqrt(),
                residual,
                iterations: it,
            });
        }
    }
    log::warn!("power iteration on sector {n} stopped at {POWER_MAX_ITER} iterations, residual {residual:.2e}");
    Ok(NormEstimate {
        value: lambda.max(0.0).sqrt(),
        residual,
        iterations: POWER_MAX_ITER,
    })
}

/// `‖a*_e↾H_n‖` (via `a_e a*_e`).
pub fn creation_norm(space: &FockSpace, dir: usize, n: usize, seed: u64) -> Result<NormEstimate> {
    power_norm(space, n, seed, |x| {
        space.apply_annihilation(dir, &space.apply_creation(dir, x)?)
    })
}

/// `‖a_e↾H_n‖` (via `a*_e a_e`), `n ≥ 1`.
pub fn annihilation_norm(space: &FockSpace, dir: usize, n: usize, seed: u64) -> Result<NormEstimate> {
    if n == 0 {
        return Err(Error::InvalidSector(-1));
    }
    power_norm(space, n, seed, |x| {
        space.apply_creation(dir, &space.apply_annihilation(dir, x)?)
    })
}

/// `‖|Δ|^{-1/2}∇_e a*_e↾H_n‖`-type norms: `‖|Δ|^{-1/2} a*_e↾H_n‖`, where
/// `|Δ|^{-1/2}` is the multiplier `1/√(2D̂(Σp))` (0 at `Σp ≡ 0`).
pub fn inv_sqrt_laplacian_creation_norm(space: &FockSpace, dir: usize, n: usize, seed: u64) -> Result<NormEstimate> {
    let l = space.torus.l as f64;
    let inv_lap = move |total: &[i64]| {
        let p: Vec<f64> = total
            .iter()
            .map(|&c| 2.0 * std::f64::consts::PI * c as f64 / l)
            .collect();
        let dh = crate::lattice::dhat(&p);
        Complex64::new(if dh > 0.0 { 1.0 / (2.0 * dh) } else { 0.0 }, 0.0)
    };
    power_norm(space, n, seed, |x| {
        let up = space.apply_creation(dir, x)?;
        let up = space.apply_total_multiplier(&up, inv_lap)?;
        space.apply_annihilation(dir, &up)
    })
}

/// Largest modulus of a total-momentum multiplier over the tuples of
/// sector `n` (its exact operator norm).
pub fn multiplier_norm<F>(space: &FockSpace, n: usize, m: F) -> Result<f64>
where
    F: Fn(&[i64]) -> Complex64 + Sync,
{
    let ones = GradedVector {
        n,
        coeffs: vec![Complex64::new(1.0, 0.0); space.dim(n)?],
    };
    let out = space.apply_total_multiplier(&ones, m)?;
    Ok(out.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max))
}

/// Element of `⊕_k H_k`, one optional component per sector.
#[derive(Clone, Debug, Default)]
pub struct GradedSum {
    pub parts: Vec<Option<GradedVector>>,
}

impl GradedSum {
    pub fn single(v: GradedVector) -> Self {
        let mut parts = vec![None; v.n + 1];
        let n = v.n;
        parts[n] = Some(v);
        GradedSum { parts }
    }

    pub fn add(&mut self, a: Complex64, v: &GradedVector) {
        if self.parts.len() <= v.n {
            self.parts.resize(v.n + 1, None);
        }
        match &mut self.parts[v.n] {
            Some(x) => x.axpy(a, v),
            slot @ None => {
                let mut c = v.clone();
                c.coeffs.iter_mut().for_each(|z| *z *= a);
                *slot = Some(c);
            }
        }
    }

    pub fn sector(&self, n: usize) -> Option<&GradedVector> {
        self.parts.get(n).and_then(|p| p.as_ref())
    }

    pub fn norm_sq(&self, space: &FockSpace) -> Result<f64> {
        let mut s = 0.0;
        for v in self.parts.iter().flatten() {
            s += space.inner(v, v)?.re;
        }
        Ok(s)
    }
}

/// `N_e = a*_e + a_e` on a graded sum.
pub fn apply_field_sum(space: &FockSpace, dir: usize, x: &GradedSum) -> Result<GradedSum> {
    apply_field_sum_capped(space, dir, x, usize::MAX)
}

/// `N_e x` with output components above sector `cap` skipped.
fn apply_field_sum_capped(space: &FockSpace, dir: usize, x: &GradedSum, cap: usize) -> Result<GradedSum> {
    let one = Complex64::new(1.0, 0.0);
    let mut out = GradedSum::default();
    for v in x.parts.iter().flatten() {
        if v.n < cap {
            out.add(one, &space.apply_creation(dir, v)?);
        }
        if v.n > 0 && v.n - 1 <= cap {
            out.add(one, &space.apply_annihilation(dir, v)?);
        }
    }
    Ok(out)
}

/// `s(N_e) x` by Horner's scheme.
pub fn apply_poly_field(space: &FockSpace, s: &Poly, dir: usize, x: &GradedSum) -> Result<GradedSum> {
    apply_poly_field_onto(space, s, dir, x, None)
}

/// `s(N_e) x`, keeping only what can still reach sector `target` (when
/// given) so intermediate sectors stay below `target + deg`.
pub fn apply_poly_field_onto(
    space: &FockSpace,
    s: &Poly,
    dir: usize,
    x: &GradedSum,
    target: Option<usize>,
) -> Result<GradedSum> {
    let cap = |remaining: usize| target.map_or(usize::MAX, |t| t + remaining);
    let c = s.coeffs();
    let one = Complex64::new(1.0, 0.0);
    let mut acc = GradedSum::default();
    for v in x.parts.iter().flatten() {
        acc.add(Complex64::new(c[c.len() - 1], 0.0), v);
    }
    for (k, &ck) in c[..c.len() - 1].iter().enumerate().rev() {
        let mut next = apply_field_sum_capped(space, dir, &acc, cap(k))?;
        for v in x.parts.iter().flatten() {
            next.add(Complex64::new(ck, 0.0) * one, v);
        }
        acc = next;
    }
    if let Some(t) = target {
        acc.parts.truncate(t + 1);
    }
    Ok(acc)
}

/// `√drop·(A + A†)` on the single-mode oscillator basis `|0⟩…|size-1⟩`.
fn oscillator_apply(v: &[f64], scale: f64) -> Vec<f64> {
    let size = v.len();
    let mut out = vec![0.0; size];
    for k in 0..size {
        if k + 1 < size {
            out[k + 1] += ((k + 1) as f64).sqrt() * v[k];
        }
        if k > 0 {
            out[k - 1] += (k as f64).sqrt() * v[k];
        }
    }
    out.iter_mut().for_each(|x| *x *= scale);
    out
}

/// `‖p(√v·X)|k⟩‖` for the oscillator position `X = A + A†`.
pub fn oscillator_norm(p: &Poly, v: f64, k: usize) -> f64 {
    let size = k + p.degree() + 2;
    let mut basis = vec![0.0; size];
    basis[k] = 1.0;
    let c = p.coeffs();
    let mut acc: Vec<f64> = basis.iter().map(|b| b * c[c.len() - 1]).collect();
    for &ck in c[..c.len() - 1].iter().rev() {
        acc = oscillator_apply(&acc, v.sqrt());
        acc.iter_mut().zip(&basis).for_each(|(a, b)| *a += ck * b);
    }
    acc.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Clone, Debug, Serialize)]
pub struct S1SectorReport {
    pub l: usize,
    pub d: usize,
    pub n: usize,
    pub dir: usize,
    /// `b(0) - b(e)` on the torus.
    pub variance: f64,
    /// Power-iteration estimate of `‖s(N_e)↾H_n‖`.
    pub estimate: NormEstimate,
    /// `max_{k≤n} ‖s(√v X)|k⟩‖`: the exact value, since `N_e` only
    /// excites the one-particle vector `e^{ip·e} - 1`.
    pub oscillator: f64,
    /// `Σ_k |s_k| v^{k/2} max_{j≤n} ‖X^k|j⟩‖`.
    pub ceiling: f64,
    pub ratio_to_ceiling: f64,
    /// `√70·v²`, the large-`n` constant of `‖X⁴|n⟩‖/n²` scaled by `v²`.
    pub kappa4: f64,
    /// `s₄·κ₄·n²`.
    pub leading: f64,
}

/// Norm of `s(a_e + a*_e)` restricted to sector `n`, by power iteration on
/// `P_n s(N_e)² P_n`.
pub fn s1_sector_norm_bound(space: &FockSpace, s: &Poly, dir: usize, n: usize, seed: u64) -> Result<S1SectorReport> {
    let deg = s.degree();
    if n + deg > space.max_n() {
        return invalid(format!(
            "sector {n} with degree {deg} needs sectors up to {}, space holds {}",
            n + deg,
            space.max_n()
        ));
    }
    for k in n.saturating_sub(deg)..=n + deg {
        space.dim(k)?;
    }
    let estimate = power_norm(space, n, seed, |x| {
        let y = apply_poly_field(space, s, dir, &GradedSum::single(x.clone()))?;
        let z = apply_poly_field_onto(space, s, dir, &y, Some(n))?;
        Ok(z.sector(n).cloned().unwrap_or(space.zeros(n)?))
    })?;
    let torus = space.torus;
    let v = (1.0 - 1.0 / torus.volume() as f64) / (2.0 * torus.d as f64);
    let oscillator = (0..=n).map(|k| oscillator_norm(s, v, k)).fold(0.0, f64::max);
    let c = s.coeffs();
    let ceiling: f64 = c
        .iter()
        .enumerate()
        .map(|(k, ck)| {
            let mut mono = vec![0.0; k + 1];
            mono[k] = 1.0;
            let mono = Poly::new(mono);
            ck.abs() * (0..=n).map(|j| oscillator_norm(&mono, v, j)).fold(0.0, f64::max)
        })
        .sum();
    let kappa4 = 70f64.sqrt() * v * v;
    Ok(S1SectorReport {
        l: torus.l,
        d: torus.d,
        n,
        dir,
        variance: v,
        ratio_to_ceiling: if ceiling > 0.0 { estimate.value / ceiling } else { 0.0 },
        estimate,
        oscillator,
        ceiling,
        kappa4,
        leading: s.coeff(4) * kappa4 * (n * n) as f64,
    })
}
