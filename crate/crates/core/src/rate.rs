//! The jump-rate function `w = γ + s + r` with `s` even and `r` odd.
//!
//! Both parts are polynomials given by coefficient lists (lowest degree
//! first). `R(u) = ∫₀ᵘ r` is the nearest-neighbour potential of the
//! stationary environment measure.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::poly::Poly;

/// Half-width of the grid on which the standing conditions are checked.
pub const CHECK_HALF_WIDTH: f64 = 50.0;
/// Step of the condition-check grid.
pub const CHECK_STEP: f64 = 1e-3;
/// Tolerance for the inequalities in [`validate`].
pub const CONDITION_TOL: f64 = 1e-9;
/// Allowed mismatch between the stored `γ` and the numerical `inf w`.
pub const GAMMA_MATCH_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateSpec {
    pub gamma: f64,
    pub c: f64,
    pub r_coeffs: Vec<f64>,
    pub s_coeffs: Vec<f64>,
    #[serde(skip)]
    cache: Option<Polys>,
}

#[derive(Clone, Debug, PartialEq)]
struct Polys {
    r: Poly,
    s: Poly,
    w: Poly,
    w_int: Poly,
    s_int: Poly,
    r_int: Poly,
}

impl RateSpec {
    pub fn new(gamma: f64, c: f64, r_coeffs: Vec<f64>, s_coeffs: Vec<f64>) -> Result<Self> {
        let all_finite = gamma.is_finite() && c.is_finite() && r_coeffs.iter().chain(&s_coeffs).all(|x| x.is_finite());
        if !all_finite {
            return invalid("rate coefficients must be finite");
        }
        let mut spec = RateSpec {
            gamma,
            c,
            r_coeffs,
            s_coeffs,
            cache: None,
        };
        spec.cache = Some(spec.build_polys());
        Ok(spec)
    }

    /// `w ≡ γ`: the walk reduces to a simple random walk with rate `γ`
    /// per direction.
    pub fn interaction_free(gamma: f64) -> Self {
        RateSpec::new(gamma, 1.0, Vec::new(), Vec::new()).expect("finite gamma")
    }

    /// `γ = 1`, `r(u) = u`, `s(u) = u⁴ + s₀` with `s₀ = -min(u⁴ + u)` so
    /// that `inf w = γ` holds exactly.
    pub fn quartic_example() -> Self {
        let s0 = 3.0 * 4f64.powf(-4.0 / 3.0);
        RateSpec::new(1.0, 1.0, vec![0.0, 1.0], vec![s0, 0.0, 0.0, 0.0, 1.0]).unwrap()
    }

    /// Rebuilds the cached polynomials (needed after deserialisation or
    /// direct field edits).
    pub fn refreshed(mut self) -> Result<Self> {
        let s = RateSpec::new(
            self.gamma,
            self.c,
            std::mem::take(&mut self.r_coeffs),
            std::mem::take(&mut self.s_coeffs),
        )?;
        Ok(s)
    }

    fn build_polys(&self) -> Polys {
        let r = Poly::new(self.r_coeffs.clone());
        let s = Poly::new(self.s_coeffs.clone());
        let w = Poly::constant(self.gamma).add(&s).add(&r);
        Polys {
            w_int: w.antiderivative(),
            s_int: s.antiderivative(),
            r_int: r.antiderivative(),
            r,
            s,
            w,
        }
    }

    fn polys(&self) -> &Polys {
        self.cache.as_ref().expect("RateSpec must be built with RateSpec::new")
    }

    pub fn r_poly(&self) -> &Poly {
        &self.polys().r
    }
    pub fn s_poly(&self) -> &Poly {
        &self.polys().s
    }
    pub fn w_poly(&self) -> &Poly {
        &self.polys().w
    }
    /// Antiderivative of `w` vanishing at 0.
    pub fn w_antiderivative(&self) -> &Poly {
        &self.polys().w_int
    }
    pub fn s_antiderivative(&self) -> &Poly {
        &self.polys().s_int
    }
    pub fn r_antiderivative(&self) -> &Poly {
        &self.polys().r_int
    }

    pub fn is_interaction_free(&self) -> bool {
        self.r_poly().is_zero() && self.s_poly().is_zero()
    }

    /// `r(u) = a·u` for some `a > 0`: the stationary measure is Gaussian.
    pub fn gaussian_slope(&self) -> Option<f64> {
        let r = self.r_poly();
        (r.degree() == 1 && r.coeff(0) == 0.0 && r.coeff(1) > 0.0).then(|| r.coeff(1))
    }

    pub fn r(&self, u: f64) -> f64 {
        self.r_poly().eval(u)
    }

    pub fn s(&self, u: f64) -> f64 {
        self.s_poly().eval(u)
    }

    pub fn eval_w(&self, u: f64) -> f64 {
        self.w_poly().eval(u)
    }

    /// `R(u) = ∫₀ᵘ r(v) dv`, integrated term by term.
    pub fn potential_r(&self, u: f64) -> f64 {
        self.r_antiderivative().eval(u)
    }
}

/// Outcome of one standing condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub conditions: Vec<Condition>,
    /// Numerical `inf w`.
    pub inf_w: f64,
    pub argmin_w: f64,
    /// Numerical `inf r′`.
    pub inf_r_prime: f64,
    /// `Σₙ (2/c)^{n/2} |r⁽ⁿ⁾(0)|`.
    pub r_entire_series: f64,
    /// Leading quartic coefficient relative to `γ`; diagnostic only.
    pub s4_over_gamma: f64,
    pub passed: bool,
}

impl ValidationReport {
    pub fn condition(&self, name: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.name == name)
    }
}

/// Minimises `p` on the check grid, then polishes the grid minimiser with
/// a golden-section search on the neighbouring cells.
fn grid_minimum(p: &Poly) -> (f64, f64) {
    let n = (2.0 * CHECK_HALF_WIDTH / CHECK_STEP).round() as usize;
    let (mut best_u, mut best) = (-CHECK_HALF_WIDTH, f64::INFINITY);
    for i in 0..=n {
        let u = -CHECK_HALF_WIDTH + i as f64 * CHECK_STEP;
        let v = p.eval(u);
        if v < best {
            best = v;
            best_u = u;
        }
    }
    let (mut a, mut b) = (best_u - CHECK_STEP, best_u + CHECK_STEP);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..80 {
        let x1 = b - g * (b - a);
        let x2 = a + g * (b - a);
        if p.eval(x1) < p.eval(x2) {
            b = x2;
        } else {
            a = x1;
        }
    }
    let u = 0.5 * (a + b);
    let v = p.eval(u);
    if v < best {
        (u, v)
    } else {
        (best_u, best)
    }
}

/// Whether a polynomial is bounded below on the whole line, judged from its
/// leading term.
fn tail_bounded_below(p: &Poly) -> bool {
    p.is_zero() || (p.degree().is_multiple_of(2) && p.coeffs()[p.degree()] > 0.0)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Checks ellipticity, the even/odd decomposition, convexity of `R`, the
/// growth condition on `s` and the entire-function series for `r`.
pub fn validate(spec: &RateSpec) -> ValidationReport {
    let r = spec.r_poly();
    let s = spec.s_poly();
    let mut conditions = Vec::new();
    let mut push = |name: &str, passed: bool, detail: String| {
        conditions.push(Condition {
            name: name.to_string(),
            passed,
            detail,
        })
    };

    let r_odd = r.coeffs().iter().step_by(2).all(|&c| c == 0.0);
    let s_even = s.coeffs().iter().skip(1).step_by(2).all(|&c| c == 0.0);
    push("parity", r_odd && s_even, format!("r odd: {r_odd}, s even: {s_even}"));

    let excess = s.add(r);
    let tails = tail_bounded_below(&excess);
    let (argmin_w, min_excess) = grid_minimum(&excess);
    let inf_w = if tails {
        spec.gamma + min_excess
    } else {
        f64::NEG_INFINITY
    };
    push(
        "ellipticity",
        spec.gamma > 0.0 && tails && inf_w >= spec.gamma - CONDITION_TOL,
        format!("gamma = {}, numerical inf w = {inf_w}", spec.gamma),
    );
    push(
        "gamma_is_infimum",
        tails && (inf_w - spec.gamma).abs() <= GAMMA_MATCH_TOL,
        format!("|inf w - gamma| = {}", (inf_w - spec.gamma).abs()),
    );

    let r_prime = r.derivative();
    let (_, min_rp) = grid_minimum(&r_prime);
    let inf_r_prime = if tail_bounded_below(&r_prime) {
        min_rp
    } else {
        f64::NEG_INFINITY
    };
    push(
        "convexity",
        spec.c > 0.0 && inf_r_prime >= spec.c - CONDITION_TOL,
        format!("inf r' = {inf_r_prime}, c = {}", spec.c),
    );

    let (_, min_s) = grid_minimum(s);
    let s_nonneg = tail_bounded_below(s) && min_s >= -CONDITION_TOL;
    // polynomial s is dominated by any Gaussian growth, so only s >= 0 can fail
    push("s_small", s_nonneg, format!("polynomial s, min s = {min_s}"));

    let r_entire_series = if spec.c > 0.0 {
        r.coeffs()
            .iter()
            .enumerate()
            .map(|(n, &a)| (2.0 / spec.c).powf(n as f64 / 2.0) * factorial(n) * a.abs())
            .sum()
    } else {
        f64::INFINITY
    };
    push(
        "r_entire",
        r_entire_series.is_finite(),
        format!("series = {r_entire_series}"),
    );

    let passed = conditions.iter().all(|c| c.passed);
    ValidationReport {
        conditions,
        inf_w,
        argmin_w,
        inf_r_prime,
        r_entire_series,
        s4_over_gamma: s.coeff(4) / spec.gamma,
        passed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent 1-d minimiser: dense scan followed by bisection on the
    /// derivative `4u³ + 1`.
    fn quartic_min_oracle() -> (f64, f64) {
        let (mut lo, mut hi) = (-2.0f64, 0.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if 4.0 * mid.powi(3) + 1.0 < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let u = 0.5 * (lo + hi);
        (u, u.powi(4) + u)
    }

    #[test]
    fn oracle_minimum_matches_closed_form() {
        let (u, v) = quartic_min_oracle();
        assert!((u + 4f64.powf(-1.0 / 3.0)).abs() < 1e-12);
        assert!((v + 0.4725).abs() < 1e-4);
    }

    #[test]
    fn constant_rate_fails_convexity() {
        let spec = RateSpec::new(2.0, 1.0, vec![], vec![]).unwrap();
        let rep = validate(&spec);
        assert!(!rep.passed);
        assert!(!rep.condition("convexity").unwrap().passed);
        assert!(rep.condition("ellipticity").unwrap().passed);
    }

    #[test]
    fn linear_rate_fails_ellipticity() {
        let spec = RateSpec::new(1.0, 1.0, vec![0.0, 1.0], vec![]).unwrap();
        let rep = validate(&spec);
        assert!(!rep.condition("ellipticity").unwrap().passed);
        assert_eq!(rep.inf_w, f64::NEG_INFINITY);
    }

    #[test]
    fn quartic_example_passes() {
        let (umin, vmin) = quartic_min_oracle();
        let spec = RateSpec::new(1.0, 1.0, vec![0.0, 1.0], vec![-vmin, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let rep = validate(&spec);
        assert!(rep.passed, "{rep:?}");
        assert!((rep.argmin_w - umin).abs() < 1e-4);
        assert!((rep.inf_w - 1.0).abs() < 1e-9);
        assert!((RateSpec::quartic_example().s_coeffs[0] + vmin).abs() < 1e-12);
    }

    #[test]
    fn rounded_offset_fails_gamma_match() {
        let spec = RateSpec::new(1.0, 1.0, vec![0.0, 1.0], vec![0.4725, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let rep = validate(&spec);
        assert!(rep.condition("ellipticity").unwrap().passed);
        assert!(!rep.condition("gamma_is_infimum").unwrap().passed);
    }

    #[test]
    fn non_finite_rejected() {
        assert!(RateSpec::new(1.0, 1.0, vec![f64::NAN], vec![]).is_err());
    }

    #[test]
    fn eval_w_examples() {
        let (_, vmin) = quartic_min_oracle();
        let s0 = -vmin;
        let spec = RateSpec::quartic_example();
        assert!((spec.eval_w(0.0) - (1.0 + s0)).abs() < 1e-12);
        assert!((spec.eval_w(1.0) - (1.0 + 1.0 + s0 + 1.0)).abs() < 1e-12);
        let rep = validate(&spec);
        assert!((spec.eval_w(rep.argmin_w) - spec.gamma).abs() < 1e-6);
    }

    #[test]
    fn potential_examples() {
        let lin = RateSpec::new(1.0, 1.0, vec![0.0, 1.0], vec![]).unwrap();
        assert_eq!(lin.potential_r(2.0), 2.0);
        assert_eq!(lin.potential_r(-2.0), 2.0);
        let cubic = RateSpec::new(1.0, 1.0, vec![0.0, 1.0, 0.0, 1.0], vec![]).unwrap();
        assert!((cubic.potential_r(1.0) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn decomposition_identities_on_grid() {
        let spec = RateSpec::new(0.7, 1.0, vec![0.0, 1.2, 0.0, 0.3], vec![0.1, 0.0, 0.4, 0.0, 0.05]).unwrap();
        let mut u = -5.0;
        while u <= 5.0 {
            let diff = spec.eval_w(u) - spec.eval_w(-u);
            let sum = spec.eval_w(u) + spec.eval_w(-u);
            assert!((diff - 2.0 * spec.r(u)).abs() < 1e-12 * (1.0 + diff.abs()));
            assert!((sum - 2.0 * (spec.gamma + spec.s(u))).abs() < 1e-12 * (1.0 + sum.abs()));
            let h = 1e-5;
            let fd = (spec.potential_r(u + h) - spec.potential_r(u - h)) / (2.0 * h);
            assert!((fd - spec.r(u)).abs() < 1e-7 * (1.0 + spec.r(u).abs()));
            assert!(spec.potential_r(u) >= spec.c * u * u / 2.0 - 1e-12);
            u += 0.01;
        }
    }

    #[test]
    fn r_entire_series_value() {
        // r(u) = u + u^3, c = 1: (2)^{1/2}·1 + 2^{3/2}·6
        let spec = RateSpec::new(1.0, 1.0, vec![0.0, 1.0, 0.0, 1.0], vec![]).unwrap();
        let rep = validate(&spec);
        let expect = 2f64.sqrt() + 2f64.powf(1.5) * 6.0;
        assert!((rep.r_entire_series - expect).abs() < 1e-12);
    }
}
