//! Gaussian Fock space over the torus momentum grid.
//!
//! The one-particle weight is the covariance of the stationary field for
//! `r(u) = u`, `b̂_π(p) = 1/(4D̂(p))` (half the Green function `b̂`). The
//! inner product of sector `n` is
//! `⟨u, v⟩ = L^{-dn} Σ_{p ∈ (grid∖0)^n} ū(p) v(p) Π_m b̂_π(p_m)`,
//! and with this weight `b_π(0) - b_π(e)` equals `b(0) - b(e)`.

pub mod gsc;
pub mod norm;
pub mod sector;

use std::sync::OnceLock;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::lattice::{dhat, Torus};
use crate::seed::rng_from_seed;
pub use sector::{sector_dim, Sector, MAX_SECTOR_DIM};

const I: Complex64 = Complex64::new(0.0, 1.0);
const CHUNK: usize = 4096;

/// Coefficients of a symmetric function in sector `n`, one per sorted
/// multi-index (see [`Sector`]).
#[derive(Clone, Debug, PartialEq)]
pub struct GradedVector {
    pub n: usize,
    pub coeffs: Vec<Complex64>,
}

impl GradedVector {
    pub fn zeros(n: usize, dim: usize) -> Self {
        GradedVector {
            n,
            coeffs: vec![Complex64::new(0.0, 0.0); dim],
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.coeffs.iter_mut().for_each(|c| *c *= a);
    }

    pub fn axpy(&mut self, a: Complex64, other: &GradedVector) {
        debug_assert_eq!(self.n, other.n);
        for (x, y) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *x += a * y;
        }
    }
}

/// Momentum grid, weights and the lazily built sectors.
pub struct FockSpace {
    pub torus: Torus,
    /// `b̂_π` per Fourier index (0 at the zero mode).
    pub weight: Vec<f64>,
    coords: Vec<Vec<i64>>,
    sectors: Vec<OnceLock<Sector>>,
    sector_weights: Vec<OnceLock<Vec<f64>>>,
}

impl FockSpace {
    /// Space with sectors `0..=max_n` available.
    pub fn new(torus: Torus, max_n: usize) -> Self {
        let weight = torus
            .sites()
            .map(|k| {
                if k == 0 {
                    0.0
                } else {
                    1.0 / (4.0 * dhat(&torus.momentum(k)))
                }
            })
            .collect();
        let coords = torus
            .sites()
            .map(|k| torus.coords(k).into_iter().map(|c| c as i64).collect())
            .collect();
        FockSpace {
            torus,
            weight,
            coords,
            sectors: (0..=max_n).map(|_| OnceLock::new()).collect(),
            sector_weights: (0..=max_n).map(|_| OnceLock::new()).collect(),
        }
    }

    pub fn max_n(&self) -> usize {
        self.sectors.len() - 1
    }

    pub fn sector(&self, n: usize) -> Result<&Sector> {
        let cell = self.sectors.get(n).ok_or(Error::InvalidSector(n as i64))?;
        if let Some(s) = cell.get() {
            return Ok(s);
        }
        let s = Sector::new(self.torus, n)?;
        Ok(cell.get_or_init(|| s))
    }

    pub fn dim(&self, n: usize) -> Result<usize> {
        Ok(self.sector(n)?.dim())
    }

    /// Inner-product weight of every basis element of sector `n`:
    /// multiplicity × `Π b̂_π` × `L^{-dn}`.
    pub fn sector_weights(&self, n: usize) -> Result<&[f64]> {
        let sector = self.sector(n)?;
        let cell = &self.sector_weights[n];
        if let Some(w) = cell.get() {
            return Ok(w);
        }
        let cell_vol = (self.torus.volume() as f64).powi(-(n as i32));
        let w: Vec<f64> = (0..sector.dim())
            .into_par_iter()
            .map(|r| {
                let t = if n == 0 { &[][..] } else { sector.tuple(r) };
                sector.multiplicity(r) * t.iter().map(|&m| self.weight[m as usize + 1]).product::<f64>() * cell_vol
            })
            .collect();
        Ok(cell.get_or_init(|| w))
    }

    pub fn zeros(&self, n: usize) -> Result<GradedVector> {
        Ok(GradedVector::zeros(n, self.dim(n)?))
    }

    /// The constant function in sector 0.
    pub fn vacuum(&self) -> GradedVector {
        GradedVector {
            n: 0,
            coeffs: vec![Complex64::new(1.0, 0.0)],
        }
    }

    /// Deterministic pseudo-random vector with i.i.d. complex normal
    /// coefficients.
    pub fn random(&self, n: usize, seed: u64) -> Result<GradedVector> {
        let mut rng = rng_from_seed(seed);
        let dim = self.dim(n)?;
        Ok(GradedVector {
            n,
            coeffs: (0..dim)
                .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
                .collect(),
        })
    }

    pub fn inner(&self, u: &GradedVector, v: &GradedVector) -> Result<Complex64> {
        if u.n != v.n {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let w = self.sector_weights(u.n)?;
        // fixed chunks summed in order: independent of the thread count
        let partial: Vec<Complex64> = u
            .coeffs
            .par_chunks(CHUNK)
            .zip(v.coeffs.par_chunks(CHUNK))
            .zip(w.par_chunks(CHUNK))
            .map(|((a, b), w)| a.iter().zip(b).zip(w).map(|((a, b), &w)| a.conj() * b * w).sum())
            .collect();
        Ok(partial.into_iter().sum())
    }

    pub fn norm(&self, u: &GradedVector) -> Result<f64> {
        Ok(self.inner(u, u)?.re.max(0.0).sqrt())
    }

    fn mode_coords(&self, mode: u32) -> &[i64] {
        &self.coords[mode as usize + 1]
    }

    /// `p·e` for the momentum of `mode`.
    fn phase(&self, mode: u32, dir: usize) -> f64 {
        let l = self.torus.l as f64;
        let c = self.mode_coords(mode)[dir / 2] as f64;
        let sign = if dir.is_multiple_of(2) { 1.0 } else { -1.0 };
        sign * 2.0 * std::f64::consts::PI * c / l
    }

    /// `e^{ip·e} - 1`.
    pub fn one_particle(&self, mode: u32, dir: usize) -> Complex64 {
        (I * self.phase(mode, dir)).exp() - 1.0
    }

    /// Total momentum of a tuple as integer grid coordinates mod `L`.
    fn total_coords(&self, t: &[u32]) -> Vec<i64> {
        let l = self.torus.l as i64;
        let mut s = vec![0i64; self.torus.d];
        for &m in t {
            for (a, c) in self.mode_coords(m).iter().enumerate() {
                s[a] += c;
            }
        }
        s.iter_mut().for_each(|c| *c = c.rem_euclid(l));
        s
    }

    fn check_dir(&self, dir: usize) -> Result<()> {
        if dir >= self.torus.directions() {
            invalid(format!("direction {dir} out of range"))
        } else {
            Ok(())
        }
    }

    /// Applies the multiplier `m(Σp)` (a function of the total momentum's
    /// grid coordinates) on sector `u.n`.
    pub fn apply_total_multiplier<F>(&self, u: &GradedVector, m: F) -> Result<GradedVector>
    where
        F: Fn(&[i64]) -> Complex64 + Sync,
    {
        let sector = self.sector(u.n)?;
        let coeffs = u
            .coeffs
            .par_iter()
            .enumerate()
            .map(|(r, c)| {
                let t = if u.n == 0 { &[][..] } else { sector.tuple(r) };
                c * m(&self.total_coords(t))
            })
            .collect();
        Ok(GradedVector { n: u.n, coeffs })
    }

    fn total_phase(&self, total: &[i64], dir: usize) -> f64 {
        let sign = if dir.is_multiple_of(2) { 1.0 } else { -1.0 };
        sign * 2.0 * std::f64::consts::PI * total[dir / 2] as f64 / self.torus.l as f64
    }

    /// `e^{iΣp·e} - 1`.
    pub fn nabla_multiplier(&self, total: &[i64], dir: usize) -> Complex64 {
        (I * self.total_phase(total, dir)).exp() - 1.0
    }

    /// `(e^{iΣp·e} - 1)/√(2D̂(Σp))`, and 0 when `Σp ≡ 0`.
    pub fn delta_inv_sqrt_nabla_multiplier(&self, total: &[i64], dir: usize) -> Complex64 {
        let l = self.torus.l as f64;
        let p: Vec<f64> = total
            .iter()
            .map(|&c| 2.0 * std::f64::consts::PI * c as f64 / l)
            .collect();
        let dh = dhat(&p);
        if total.iter().all(|&c| c == 0) {
            Complex64::new(0.0, 0.0)
        } else {
            self.nabla_multiplier(total, dir) / (2.0 * dh).sqrt()
        }
    }

    pub fn apply_nabla(&self, dir: usize, u: &GradedVector) -> Result<GradedVector> {
        self.check_dir(dir)?;
        self.apply_total_multiplier(u, |t| self.nabla_multiplier(t, dir))
    }

    /// Shift `T_e`: multiplication by `e^{iΣp·e}`.
    pub fn apply_shift(&self, dir: usize, u: &GradedVector) -> Result<GradedVector> {
        self.check_dir(dir)?;
        self.apply_total_multiplier(u, |t| (I * self.total_phase(t, dir)).exp())
    }

    pub fn apply_delta_inv_sqrt_nabla(&self, dir: usize, u: &GradedVector) -> Result<GradedVector> {
        self.check_dir(dir)?;
        self.apply_total_multiplier(u, |t| self.delta_inv_sqrt_nabla_multiplier(t, dir))
    }

    /// `a*_e`: sector `n` to `n+1`,
    /// `(a*u)(p₁..p_{n+1}) = (n+1)^{-1/2} Σ_m (e^{ip_m·e} - 1) u(p without p_m)`.
    pub fn apply_creation(&self, dir: usize, u: &GradedVector) -> Result<GradedVector> {
        self.check_dir(dir)?;
        let n = u.n;
        let from = self.sector(n)?;
        let to = self.sector(n + 1)?;
        let pref = 1.0 / ((n + 1) as f64).sqrt();
        let coeffs = (0..to.dim())
            .into_par_iter()
            .map_init(
                || Vec::with_capacity(n),
                |buf, r| {
                    let t = to.tuple(r);
                    let mut acc = Complex64::new(0.0, 0.0);
                    for m in 0..=n {
                        buf.clear();
                        buf.extend_from_slice(&t[..m]);
                        buf.extend_from_slice(&t[m + 1..]);
                        let src = if n == 0 { 0 } else { from.rank(buf) };
                        acc += self.one_particle(t[m], dir) * u.coeffs[src];
                    }
                    acc * pref
                },
            )
            .collect();
        Ok(GradedVector { n: n + 1, coeffs })
    }

    /// `a_e`: sector `n ≥ 1` to `n-1`,
    /// `(a u)(p) = √n L^{-d} Σ_{q≠0} (e^{-iq·e} - 1) b̂_π(q) u(p, q)`.
    pub fn apply_annihilation(&self, dir: usize, u: &GradedVector) -> Result<GradedVector> {
        self.check_dir(dir)?;
        let n = u.n;
        if n == 0 {
            return Err(Error::InvalidSector(-1));
        }
        let from = self.sector(n)?;
        let to = self.sector(n - 1)?;
        let pref = (n as f64).sqrt() / self.torus.volume() as f64;
        let kernel: Vec<Complex64> = (0..from.modes as u32)
            .map(|q| self.one_particle(q, dir).conj() * self.weight[q as usize + 1])
            .collect();
        let coeffs = (0..to.dim())
            .into_par_iter()
            .map_init(
                || vec![0u32; n],
                |buf, r| {
                    let t = if n == 1 { &[][..] } else { to.tuple(r) };
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (q, k) in kernel.iter().enumerate() {
                        // sorted insertion of q into t
                        let pos = t.partition_point(|&x| x < q as u32);
                        buf[..pos].copy_from_slice(&t[..pos]);
                        buf[pos] = q as u32;
                        buf[pos + 1..].copy_from_slice(&t[pos..]);
                        acc += k * u.coeffs[from.rank(buf)];
                    }
                    acc * pref
                },
            )
            .collect();
        Ok(GradedVector { n: n - 1, coeffs })
    }

    /// `N_e = a*_e + a_e` applied to one sector; returns the parts in
    /// sectors `n-1` (if `n ≥ 1`) and `n+1`.
    pub fn apply_field(&self, dir: usize, u: &GradedVector) -> Result<(Option<GradedVector>, GradedVector)> {
        let up = self.apply_creation(dir, u)?;
        let down = if u.n > 0 {
            Some(self.apply_annihilation(dir, u)?)
        } else {
            None
        };
        Ok((down, up))
    }

    /// `∂ = 2 Σ_e a_e`: the derivative in `ω(0)` in this representation.
    /// (The inverse one-particle weight `4D̂` maps `δ₀` to `2Σ_e (δ₀ - δ_e)`.)
    pub fn apply_partial(&self, u: &GradedVector) -> Result<GradedVector> {
        let mut out = self.zeros(u.n.checked_sub(1).ok_or(Error::InvalidSector(-1))?)?;
        for dir in 0..self.torus.directions() {
            out.axpy(Complex64::new(2.0, 0.0), &self.apply_annihilation(dir, u)?);
        }
        Ok(out)
    }

    pub fn apply_partial_adjoint(&self, u: &GradedVector) -> Result<GradedVector> {
        let mut out = self.zeros(u.n + 1)?;
        for dir in 0..self.torus.directions() {
            out.axpy(Complex64::new(2.0, 0.0), &self.apply_creation(dir, u)?);
        }
        Ok(out)
    }
}
