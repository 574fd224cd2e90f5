//! Dense real polynomials in monomial form, `p(u) = Σ c[k] u^k`.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Poly {
    coeffs: Vec<f64>,
}

impl Poly {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        Poly { coeffs }
    }

    pub fn zero() -> Self {
        Poly { coeffs: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        Poly::new(vec![c])
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree; the zero polynomial reports 0.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval(&self, u: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * u + c)
    }

    pub fn derivative(&self) -> Poly {
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect(),
        )
    }

    /// Antiderivative vanishing at 0.
    pub fn antiderivative(&self) -> Poly {
        let mut out = Vec::with_capacity(self.coeffs.len() + 1);
        out.push(0.0);
        out.extend(self.coeffs.iter().enumerate().map(|(k, &c)| c / (k + 1) as f64));
        Poly::new(out)
    }

    /// Coefficients of `τ ↦ p(u + τ)`, written into `out` (resized to len).
    pub fn shifted_into(&self, u: f64, out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.coeffs);
        let n = out.len();
        // repeated synthetic division (Taylor shift)
        for i in 0..n {
            for j in (i..n - 1).rev() {
                out[j] += u * out[j + 1];
            }
        }
    }

    pub fn shifted(&self, u: f64) -> Poly {
        let mut out = Vec::new();
        self.shifted_into(u, &mut out);
        Poly::new(out)
    }

    /// Even part `(p(u) + p(-u)) / 2`.
    pub fn even_part(&self) -> Poly {
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .map(|(k, &c)| if k % 2 == 0 { c } else { 0.0 })
                .collect(),
        )
    }

    /// Odd part `(p(u) - p(-u)) / 2`.
    pub fn odd_part(&self) -> Poly {
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .map(|(k, &c)| if k % 2 == 1 { c } else { 0.0 })
                .collect(),
        )
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.coeffs.len().max(other.coeffs.len());
        Poly::new((0..n).map(|k| self.coeff(k) + other.coeff(k)).collect())
    }

    pub fn scale(&self, a: f64) -> Poly {
        Poly::new(self.coeffs.iter().map(|c| c * a).collect())
    }
}

/// Evaluates a coefficient slice (lowest degree first) at `x`.
pub(crate) fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn antiderivative_of_linear() {
        let r = Poly::new(vec![0.0, 1.0]);
        assert_eq!(r.antiderivative().eval(2.0), 2.0);
        assert_eq!(r.antiderivative().eval(-2.0), 2.0);
    }

    #[test]
    fn trailing_zeros_trimmed() {
        let p = Poly::new(vec![1.0, 0.0, 0.0]);
        assert_eq!(p.degree(), 0);
        assert!(Poly::new(vec![0.0, 0.0]).is_zero());
    }

    proptest! {
        #[test]
        fn taylor_shift_matches_evaluation(
            c in proptest::collection::vec(-3.0f64..3.0, 1..7),
            u in -2.0f64..2.0,
            t in -2.0f64..2.0,
        ) {
            let p = Poly::new(c);
            let q = p.shifted(u);
            let lhs = q.eval(t);
            let rhs = p.eval(u + t);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
        }
    }
}
