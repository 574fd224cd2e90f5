//! Small statistical toolkit: compensated sums, jackknife errors,
//! Kolmogorov–Smirnov and Anderson–Darling tests.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &NeumaierSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn sum(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn mean(x: &[f64]) -> f64 {
    let mut s = NeumaierSum::default();
    x.iter().for_each(|&v| s.add(v));
    s.sum() / x.len() as f64
}

/// Mean and its standard error (sample standard deviation over `√n`).
pub fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = mean(x);
    let mut s = NeumaierSum::default();
    x.iter().for_each(|&v| s.add((v - m) * (v - m)));
    let var = if x.len() > 1 { s.sum() / (n - 1.0) } else { 0.0 };
    (m, (var / n).sqrt())
}

/// Two-sided standard normal quantile for confidence level `level`.
pub fn z_for_level(level: f64) -> f64 {
    Normal::standard().inverse_cdf(0.5 + level / 2.0)
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Point estimate with a standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    pub fn new(value: f64, se: f64) -> Self {
        Estimate { value, se }
    }

    /// `|value - target| ≤ k·se`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.se
    }

    pub fn z(&self, target: f64) -> f64 {
        if self.se > 0.0 {
            (self.value - target) / self.se
        } else if self.value == target {
            0.0
        } else {
            f64::INFINITY
        }
    }

    pub fn ci(&self, level: f64) -> (f64, f64) {
        let z = z_for_level(level);
        (self.value - z * self.se, self.value + z * self.se)
    }
}

/// Number of jackknife blocks used when replicas are plentiful.
pub const JACKKNIFE_BLOCKS: usize = 100;

/// Delete-one-block jackknife over replica rows.
///
/// `rows[i]` holds replica `i`'s observables; `stat` maps any subset of rows
/// (given as a slice of references) to a vector of statistics. Returns the
/// full-sample statistics with jackknife standard errors.
pub fn jackknife<F>(rows: &[Vec<f64>], stat: F) -> Vec<Estimate>
where
    F: Fn(&[&[f64]]) -> Vec<f64>,
{
    let n = rows.len();
    assert!(n >= 2, "jackknife needs at least two replicas");
    let all: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    let full = stat(&all);
    let blocks = n.min(JACKKNIFE_BLOCKS);
    let mut leave_out: Vec<Vec<f64>> = Vec::with_capacity(blocks);
    for b in 0..blocks {
        let (lo, hi) = (b * n / blocks, (b + 1) * n / blocks);
        let subset: Vec<&[f64]> = all[..lo].iter().chain(&all[hi..]).copied().collect();
        leave_out.push(stat(&subset));
    }
    let g = blocks as f64;
    (0..full.len())
        .map(|j| {
            let m = leave_out.iter().map(|v| v[j]).sum::<f64>() / g;
            let var = (g - 1.0) / g * leave_out.iter().map(|v| (v[j] - m).powi(2)).sum::<f64>();
            Estimate::new(full[j], var.sqrt())
        })
        .collect()
}

/// Sample skewness and excess kurtosis (moment estimators).
pub fn skew_kurt(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = mean(x);
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in x {
        let d = v - m;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Kolmogorov survival function `Q_KS(λ) = 2 Σ (-1)^{k-1} e^{-2k²λ²}`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF.
pub fn ks_test<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> TestResult {
    let mut x = sample.to_vec();
    x.sort_by(|a, b| a.total_cmp(b));
    let n = x.len() as f64;
    let d = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    let sn = n.sqrt();
    TestResult {
        statistic: d,
        p_value: kolmogorov_q((sn + 0.12 + 0.11 / sn) * d),
    }
}

/// Two-sample Kolmogorov–Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> TestResult {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(|p, q| p.total_cmp(q));
    y.sort_by(|p, q| p.total_cmp(q));
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let sn = ne.sqrt();
    TestResult {
        statistic: d,
        p_value: kolmogorov_q((sn + 0.12 + 0.11 / sn) * d),
    }
}

/// Anderson–Darling normality test with mean and variance estimated from
/// the sample (D'Agostino–Stephens p-value approximation).
pub fn anderson_darling_normal(sample: &[f64]) -> TestResult {
    let n = sample.len();
    let (m, se) = mean_se(sample);
    let sd = se * (n as f64).sqrt();
    let mut z: Vec<f64> = sample.iter().map(|&v| (v - m) / sd).collect();
    z.sort_by(|a, b| a.total_cmp(b));
    let nf = n as f64;
    let mut s = 0.0;
    for i in 0..n {
        let fi = normal_cdf(z[i]).clamp(1e-300, 1.0 - 1e-16);
        let fj = normal_cdf(z[n - 1 - i]).clamp(1e-300, 1.0 - 1e-16);
        s += (2.0 * i as f64 + 1.0) * (fi.ln() + (1.0 - fj).ln());
    }
    let a2 = -nf - s / nf;
    let a = a2 * (1.0 + 0.75 / nf + 2.25 / (nf * nf));
    let p = if a >= 0.6 {
        (1.2937 - 5.709 * a + 0.0186 * a * a).exp()
    } else if a >= 0.34 {
        (0.9177 - 4.279 * a - 1.38 * a * a).exp()
    } else if a >= 0.2 {
        1.0 - (-8.318 + 42.796 * a - 59.938 * a * a).exp()
    } else {
        1.0 - (-13.436 + 101.14 * a - 223.73 * a * a).exp()
    };
    TestResult {
        statistic: a,
        p_value: p.clamp(0.0, 1.0),
    }
}

/// Ordinary least-squares slope of `y` against `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let mx = mean(x);
    let my = mean(y);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
