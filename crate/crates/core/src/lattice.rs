//! Torus geometry, discrete Fourier transforms and the lattice Green
//! function.
//!
//! Sites of `Z_L^d` are stored row-major (last coordinate fastest). The
//! Fourier convention is `û(p) = Σ_x e^{ip·x} u(x)` with inverse
//! `u(x) = L^{-d} Σ_k e^{-ip_k·x} û(k)`, `p_k = 2πk/L`.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Torus {
    pub d: usize,
    pub l: usize,
}

impl Torus {
    pub fn new(d: usize, l: usize) -> Result<Self> {
        if d == 0 {
            return invalid("dimension must be at least 1");
        }
        if l < 2 {
            return invalid("side length must be at least 2");
        }
        if (l as f64).powi(d as i32) > 1e9 {
            return invalid("torus too large");
        }
        Ok(Torus { d, l })
    }

    pub fn volume(&self) -> usize {
        self.l.pow(self.d as u32)
    }

    /// Number of unit vectors, `2d`.
    pub fn directions(&self) -> usize {
        2 * self.d
    }

    pub fn coords(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.d];
        for a in (0..self.d).rev() {
            out[a] = idx % self.l;
            idx /= self.l;
        }
        out
    }

    /// Index of a site given (possibly negative or out-of-range) integer
    /// coordinates, reduced modulo `L`.
    pub fn index_of(&self, x: &[i64]) -> usize {
        debug_assert_eq!(x.len(), self.d);
        let l = self.l as i64;
        x.iter().fold(0usize, |acc, &c| acc * self.l + c.rem_euclid(l) as usize)
    }

    fn stride(&self, axis: usize) -> usize {
        self.l.pow((self.d - 1 - axis) as u32)
    }

    /// Unit vector for direction `dir ∈ 0..2d`: `dir = 2a` is `+e_a`,
    /// `dir = 2a + 1` is `-e_a`.
    pub fn unit(&self, dir: usize) -> Vec<i64> {
        let mut e = vec![0i64; self.d];
        e[dir / 2] = if dir.is_multiple_of(2) { 1 } else { -1 };
        e
    }

    pub fn opposite(dir: usize) -> usize {
        dir ^ 1
    }

    /// Site reached from `idx` by one step in direction `dir`.
    pub fn neighbor(&self, idx: usize, dir: usize) -> usize {
        let axis = dir / 2;
        let stride = self.stride(axis);
        let c = (idx / stride) % self.l;
        let nc = if dir.is_multiple_of(2) {
            (c + 1) % self.l
        } else {
            (c + self.l - 1) % self.l
        };
        idx + nc * stride - c * stride
    }

    /// `x + y` on the torus.
    pub fn add(&self, x: usize, y: usize) -> usize {
        let mut out = 0;
        let (cx, cy) = (self.coords(x), self.coords(y));
        for a in 0..self.d {
            out = out * self.l + (cx[a] + cy[a]) % self.l;
        }
        out
    }

    /// Momentum of Fourier index `k`, each component in `(-π, π]`.
    pub fn momentum(&self, k: usize) -> Vec<f64> {
        self.coords(k)
            .into_iter()
            .map(|c| {
                let c = if 2 * c > self.l {
                    c as f64 - self.l as f64
                } else {
                    c as f64
                };
                2.0 * PI * c / self.l as f64
            })
            .collect()
    }

    pub fn sites(&self) -> std::ops::Range<usize> {
        0..self.volume()
    }
}

/// `D̂(p) = Σ_l (1 - cos p_l)`.
pub fn dhat(p: &[f64]) -> f64 {
    p.iter().map(|x| 1.0 - x.cos()).sum()
}

/// `Γ̂(p) = (1 - cos p₁)/D̂(p)`, with the angular average `1/d` at `p = 0`.
pub fn gamma_kernel_hat(p: &[f64]) -> f64 {
    let dh = dhat(p);
    if dh == 0.0 {
        1.0 / p.len() as f64
    } else {
        (1.0 - p[0].cos()) / dh
    }
}

/// Multi-dimensional FFT on a torus built from one-dimensional plans.
#[derive(Clone)]
pub struct TorusFft {
    torus: Torus,
    plus: Arc<dyn Fft<f64>>,
    minus: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for TorusFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TorusFft").field("torus", &self.torus).finish()
    }
}

impl TorusFft {
    pub fn new(torus: Torus) -> Self {
        let mut planner = FftPlanner::new();
        // rustfft's inverse uses e^{+i…}, which is our forward sign
        let plus = planner.plan_fft_inverse(torus.l);
        let minus = planner.plan_fft_forward(torus.l);
        TorusFft { torus, plus, minus }
    }

    fn transform(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let t = self.torus;
        assert_eq!(buf.len(), t.volume());
        let mut line = vec![Complex64::new(0.0, 0.0); t.l];
        for axis in 0..t.d {
            let stride = t.stride(axis);
            let block = stride * t.l;
            for base in (0..buf.len()).step_by(block) {
                for off in 0..stride {
                    for (j, slot) in line.iter_mut().enumerate() {
                        *slot = buf[base + off + j * stride];
                    }
                    plan.process(&mut line);
                    for (j, v) in line.iter().enumerate() {
                        buf[base + off + j * stride] = *v;
                    }
                }
            }
        }
    }

    /// `û(k) = Σ_x e^{ip_k·x} u(x)`, in place.
    pub fn forward(&self, buf: &mut [Complex64]) {
        self.transform(buf, &self.plus);
    }

    /// `u(x) = L^{-d} Σ_k e^{-ip_k·x} û(k)`, in place.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.transform(buf, &self.minus);
        let scale = 1.0 / self.torus.volume() as f64;
        buf.iter_mut().for_each(|z| *z *= scale);
    }

    pub fn forward_real(&self, field: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = field.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }
}

/// Precomputed symbols on the torus momentum grid.
///
/// `bhat` is the Fourier transform of `(-Δ)^{-1}` for the lattice
/// Laplacian `Δu(x) = Σ_e (u(x+e) - u(x))`, i.e. `1/(2D̂)`, with the zero
/// mode set to 0.
#[derive(Clone, Debug)]
pub struct SpectralCache {
    pub torus: Torus,
    pub dhat: Vec<f64>,
    pub bhat: Vec<f64>,
    pub fft: TorusFft,
}

impl SpectralCache {
    pub fn new(torus: Torus) -> Self {
        let dhat: Vec<f64> = torus.sites().map(|k| dhat(&torus.momentum(k))).collect();
        let bhat = dhat
            .iter()
            .enumerate()
            .map(|(k, &dh)| if k == 0 { 0.0 } else { 1.0 / (2.0 * dh) })
            .collect();
        SpectralCache {
            torus,
            dhat,
            bhat,
            fft: TorusFft::new(torus),
        }
    }

    /// `b(x) = L^{-d} Σ_{k≠0} e^{-ip_k·x} b̂(k)`; satisfies
    /// `(-Δb)(x) = δ₀(x) - L^{-d}`.
    pub fn torus_green(&self) -> GreenFunction {
        let mut buf: Vec<Complex64> = self.bhat.iter().map(|&b| Complex64::new(b, 0.0)).collect();
        self.fft.inverse(&mut buf);
        GreenFunction {
            torus: self.torus,
            values: buf.into_iter().map(|z| z.re).collect(),
        }
    }

    /// Writes `k, p_1..p_d, dhat, bhat` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header: Vec<String> = (1..=self.torus.d).map(|a| format!("p{a}")).collect();
        writeln!(out, "k,{},dhat,bhat", header.join(","))?;
        for k in self.torus.sites() {
            let p: Vec<String> = self.torus.momentum(k).iter().map(|x| format!("{x:.17e}")).collect();
            writeln!(out, "{k},{},{:.17e},{:.17e}", p.join(","), self.dhat[k], self.bhat[k])?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct GreenFunction {
    pub torus: Torus,
    pub values: Vec<f64>,
}

impl GreenFunction {
    pub fn at(&self, x: &[i64]) -> f64 {
        self.values[self.torus.index_of(x)]
    }

    pub fn at_index(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    /// `b(0) - b(e)` for the first unit vector; equal for all `e` by symmetry.
    pub fn nearest_neighbor_drop(&self) -> f64 {
        self.values[0] - self.values[self.torus.neighbor(0, 0)]
    }

    /// `(-Δb)(x) = Σ_e (b(x) - b(x+e))`.
    pub fn minus_laplacian_at(&self, idx: usize) -> f64 {
        (0..self.torus.directions())
            .map(|dir| self.values[idx] - self.values[self.torus.neighbor(idx, dir)])
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dhat_examples() {
        assert_eq!(dhat(&[0.0, 0.0, 0.0]), 0.0);
        assert!((dhat(&[PI, PI, PI]) - 6.0).abs() < 1e-15);
        assert!((dhat(&[PI / 2.0, 0.0, 0.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gamma_kernel_examples() {
        assert!((gamma_kernel_hat(&[PI, 0.0, 0.0]) - 1.0).abs() < 1e-15);
        assert_eq!(gamma_kernel_hat(&[0.0, PI, 0.0]), 0.0);
        assert!((gamma_kernel_hat(&[0.0, 0.0, 0.0]) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn neighbors_are_bijective_shifts() {
        let t = Torus::new(3, 4).unwrap();
        for dir in 0..t.directions() {
            let mut seen = vec![false; t.volume()];
            for x in t.sites() {
                let y = t.neighbor(x, dir);
                assert!(!seen[y]);
                seen[y] = true;
                assert_eq!(t.neighbor(y, Torus::opposite(dir)), x);
                let mut cx: Vec<i64> = t.coords(x).iter().map(|&c| c as i64).collect();
                for (c, e) in cx.iter_mut().zip(t.unit(dir)) {
                    *c += e;
                }
                assert_eq!(t.index_of(&cx), y);
            }
        }
    }

    #[test]
    fn green_identities() {
        for (d, l) in [(3, 8), (2, 6), (1, 5)] {
            let t = Torus::new(d, l).unwrap();
            let cache = SpectralCache::new(t);
            let g = cache.torus_green();
            let vol = t.volume() as f64;
            let lap0 = g.minus_laplacian_at(0);
            assert!((lap0 - (1.0 - 1.0 / vol)).abs() < 1e-12, "{lap0}");
            for x in 1..t.volume() {
                assert!((g.minus_laplacian_at(x) + 1.0 / vol).abs() < 1e-12);
            }
            for dir in 0..t.directions() {
                let drop = g.at_index(0) - g.at_index(t.neighbor(0, dir));
                assert!((drop - (1.0 - 1.0 / vol) / (2 * d) as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn green_symmetries() {
        let t = Torus::new(3, 6).unwrap();
        let g = SpectralCache::new(t).torus_green();
        for x in t.sites() {
            let c: Vec<i64> = t.coords(x).iter().map(|&v| v as i64).collect();
            let neg: Vec<i64> = c.iter().map(|v| -v).collect();
            assert!((g.at(&c) - g.at(&neg)).abs() < 1e-13);
            let perm = vec![c[2], c[0], c[1]];
            assert!((g.at(&c) - g.at(&perm)).abs() < 1e-13);
            let flip = vec![-c[0], c[1], c[2]];
            assert!((g.at(&c) - g.at(&flip)).abs() < 1e-13);
        }
    }

    #[test]
    fn bhat_inverts_dhat() {
        let cache = SpectralCache::new(Torus::new(3, 4).unwrap());
        assert_eq!(cache.dhat[0], 0.0);
        assert_eq!(cache.bhat[0], 0.0);
        for k in 1..cache.dhat.len() {
            assert!(cache.dhat[k] > 0.0);
            assert!((2.0 * cache.bhat[k] * cache.dhat[k] - 1.0).abs() < 1e-14);
            let p = cache.torus.momentum(k);
            let neg: Vec<i64> = cache.torus.coords(k).iter().map(|&c| -(c as i64)).collect();
            let kn = cache.torus.index_of(&neg);
            assert_eq!(cache.bhat[k], cache.bhat[kn]);
            assert!(p.iter().all(|x| x.abs() <= PI + 1e-12));
        }
    }

    proptest! {
        #[test]
        fn fft_round_trip(values in proptest::collection::vec(-10.0f64..10.0, 64)) {
            let fft = TorusFft::new(Torus::new(3, 4).unwrap());
            let mut buf = fft.forward_real(&values);
            fft.inverse(&mut buf);
            for (a, b) in values.iter().zip(&buf) {
                prop_assert!((a - b.re).abs() < 1e-12 && b.im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_matches_direct_sum() {
        let t = Torus::new(2, 3).unwrap();
        let fft = TorusFft::new(t);
        let u: Vec<f64> = (0..9).map(|i| (i as f64).sin()).collect();
        let hat = fft.forward_real(&u);
        for k in t.sites() {
            let p = t.momentum(k);
            let mut z = Complex64::new(0.0, 0.0);
            for x in t.sites() {
                let c = t.coords(x);
                let phase: f64 = p.iter().zip(&c).map(|(a, &b)| a * b as f64).sum();
                z += Complex64::from_polar(1.0, phase) * u[x];
            }
            assert!((z - hat[k]).norm() < 1e-12);
        }
    }
}
