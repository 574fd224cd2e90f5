//! Symmetric `n`-particle sectors on the torus momentum grid.
//!
//! A sector holds functions of `n` nonzero momenta that are invariant under
//! permutations, stored once per sorted multi-index. Multi-indices are
//! ranked with the combinatorial number system: a sorted tuple
//! `a₀ ≤ … ≤ a_{n-1}` maps to the strictly increasing `bᵢ = aᵢ + i` and
//! then to `Σ C(bᵢ, i+1)`.

use crate::error::{Error, Result};
use crate::lattice::Torus;

/// Largest sector dimension built explicitly.
pub const MAX_SECTOR_DIM: usize = 3_000_000;

pub(crate) fn binomial_table(rows: usize, cols: usize) -> Vec<Vec<u64>> {
    let mut c = vec![vec![0u64; cols + 1]; rows + 1];
    for (i, row) in c.iter_mut().enumerate() {
        row[0] = 1;
        if i <= cols {
            row[i] = 1;
        }
    }
    for i in 1..=rows {
        for j in 1..=cols.min(i) {
            c[i][j] = c[i - 1][j - 1].saturating_add(c[i - 1][j]);
        }
    }
    c
}

/// Number of multisets of size `n` from `modes` elements.
pub fn sector_dim(modes: usize, n: usize) -> u64 {
    if n == 0 {
        return 1;
    }
    if modes == 0 {
        return 0;
    }
    let mut acc: u128 = 1;
    for i in 0..n as u128 {
        acc = acc * (modes as u128 + i) / (i + 1);
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

#[derive(Clone, Debug)]
pub struct Sector {
    pub torus: Torus,
    pub n: usize,
    /// Number of nonzero momenta, `L^d - 1`; mode `m` is Fourier index `m+1`.
    pub modes: usize,
    tuples: Vec<u32>,
    binom: Vec<Vec<u64>>,
}

impl Sector {
    pub fn new(torus: Torus, n: usize) -> Result<Self> {
        let modes = torus.volume() - 1;
        let dim = sector_dim(modes, n);
        if dim > MAX_SECTOR_DIM as u64 {
            return Err(Error::TooLarge {
                dim: dim as usize,
                cap: MAX_SECTOR_DIM,
            });
        }
        let dim = dim as usize;
        let binom = binomial_table(modes + n, n.max(1));
        let mut tuples = vec![0u32; dim * n];
        let mut cur = vec![0u32; n];
        let mut s = Sector {
            torus,
            n,
            modes,
            tuples: Vec::new(),
            binom,
        };
        if n > 0 {
            loop {
                let r = s.rank(&cur);
                tuples[r * n..(r + 1) * n].copy_from_slice(&cur);
                // next nondecreasing tuple
                let mut i = n;
                while i > 0 && cur[i - 1] as usize == modes - 1 {
                    i -= 1;
                }
                if i == 0 {
                    break;
                }
                let v = cur[i - 1] + 1;
                for c in &mut cur[i - 1..] {
                    *c = v;
                }
            }
        }
        s.tuples = tuples;
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        if self.n == 0 {
            1
        } else {
            self.tuples.len() / self.n
        }
    }

    /// Sorted modes of basis element `r`.
    pub fn tuple(&self, r: usize) -> &[u32] {
        &self.tuples[r * self.n..(r + 1) * self.n]
    }

    /// Rank of a sorted tuple of modes.
    pub fn rank(&self, sorted: &[u32]) -> usize {
        debug_assert!(sorted.windows(2).all(|w| w[0] <= w[1]));
        sorted
            .iter()
            .enumerate()
            .map(|(i, &a)| self.binom[a as usize + i][i + 1])
            .sum::<u64>() as usize
    }

    /// `n! / Π(count!)`: number of ordered tuples per sorted one.
    pub fn multiplicity(&self, r: usize) -> f64 {
        let t = self.tuple(r);
        let mut m = 1.0;
        let mut run = 1.0;
        for i in 1..t.len() {
            if t[i] == t[i - 1] {
                run += 1.0;
                m *= run;
            } else {
                run = 1.0;
            }
        }
        (1..=t.len()).map(|k| k as f64).product::<f64>() / m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_are_a_bijection() {
        let t = Torus::new(2, 3).unwrap();
        for n in 0..4 {
            let s = Sector::new(t, n).unwrap();
            assert_eq!(s.dim() as u64, sector_dim(8, n));
            for r in 0..s.dim() {
                if n > 0 {
                    assert_eq!(s.rank(s.tuple(r)), r);
                    assert!(s.tuple(r).windows(2).all(|w| w[0] <= w[1]));
                }
            }
        }
    }

    #[test]
    fn multiplicities_sum_to_ordered_count() {
        let t = Torus::new(1, 5).unwrap();
        let s = Sector::new(t, 3).unwrap();
        let total: f64 = (0..s.dim()).map(|r| s.multiplicity(r)).sum();
        assert_eq!(total, 64.0);
    }

    #[test]
    fn oversize_sector_is_refused() {
        let t = Torus::new(3, 8).unwrap();
        assert!(matches!(Sector::new(t, 3), Err(Error::TooLarge { .. })));
    }
}
