//! Statistical verdicts on replica ensembles.
//!
//! Every error bar is a delete-block jackknife over replicas. Comparisons
//! use a 3-SE band unless a report says otherwise; the law of large
//! numbers uses a 99% interval.

use num_complex::Complex64;
use serde::Serialize;

use crate::dynamics::ObservationSeries;
use crate::error::{invalid, Error, Result};
use crate::field::TorusField;
use crate::lattice::{dhat, SpectralCache};
use crate::rate::RateSpec;
use crate::stats::{anderson_darling_normal, jackknife, mean, ols_slope, skew_kurt, Estimate, NeumaierSum};

/// Fewer replicas than this is an underpowered ensemble.
pub const MIN_REPLICAS: usize = 30;
/// Width of comparison bands in standard errors.
pub const SE_BAND: f64 = 3.0;
pub const LLN_LEVEL: f64 = 0.99;

fn require(n: usize) -> Result<()> {
    if n < MIN_REPLICAS {
        Err(Error::Underpowered {
            got: n,
            need: MIN_REPLICAS,
        })
    } else {
        Ok(())
    }
}

fn time_index(series: &[ObservationSeries], t: f64) -> Result<usize> {
    series[0]
        .index_of(t)
        .ok_or_else(|| Error::InvalidInput(format!("t = {t} is not a sample time")))
}

/// Mergeable moment accumulators per sample time.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleStats {
    pub count: usize,
    pub times: Vec<f64>,
    pub d: usize,
    sum: Vec<Vec<NeumaierSum>>,
    /// Row-major `d × d` second moments.
    sum_outer: Vec<Vec<NeumaierSum>>,
    sum_fourth: Vec<Vec<NeumaierSum>>,
}

impl EnsembleStats {
    pub fn empty(times: Vec<f64>, d: usize) -> Self {
        let n = times.len();
        EnsembleStats {
            count: 0,
            times,
            d,
            sum: vec![vec![NeumaierSum::default(); d]; n],
            sum_outer: vec![vec![NeumaierSum::default(); d * d]; n],
            sum_fourth: vec![vec![NeumaierSum::default(); d]; n],
        }
    }

    pub fn push(&mut self, s: &ObservationSeries) {
        for (k, x) in s.displacement.iter().enumerate() {
            for a in 0..self.d {
                let xa = x[a] as f64;
                self.sum[k][a].add(xa);
                self.sum_fourth[k][a].add(xa.powi(4));
                for b in 0..self.d {
                    self.sum_outer[k][a * self.d + b].add(xa * x[b] as f64);
                }
            }
        }
        self.count += 1;
    }

    pub fn from_series(series: &[ObservationSeries]) -> Result<Self> {
        let first = series
            .first()
            .ok_or_else(|| Error::InvalidInput("empty ensemble".into()))?;
        let d = first.displacement.first().map_or(0, |x| x.len());
        let mut out = EnsembleStats::empty(first.times.clone(), d);
        for s in series {
            if s.times != out.times {
                return invalid("replicas disagree on sample times");
            }
            out.push(s);
        }
        Ok(out)
    }

    /// Combines two disjoint ensembles.
    pub fn merge(&mut self, other: &EnsembleStats) -> Result<()> {
        if self.times != other.times || self.d != other.d {
            return invalid("cannot merge ensembles with different layouts");
        }
        let zip = |a: &mut Vec<Vec<NeumaierSum>>, b: &Vec<Vec<NeumaierSum>>| {
            for (ra, rb) in a.iter_mut().zip(b) {
                for (x, y) in ra.iter_mut().zip(rb) {
                    x.merge(y);
                }
            }
        };
        zip(&mut self.sum, &other.sum);
        zip(&mut self.sum_outer, &other.sum_outer);
        zip(&mut self.sum_fourth, &other.sum_fourth);
        self.count += other.count;
        Ok(())
    }

    /// `E[X_a(t_k)]` with its standard error.
    pub fn mean(&self, k: usize, a: usize) -> Estimate {
        let n = self.count as f64;
        let m = self.sum[k][a].sum() / n;
        let m2 = self.sum_outer[k][a * self.d + a].sum() / n;
        Estimate::new(m, ((m2 - m * m).max(0.0) / (n - 1.0)).sqrt())
    }

    /// `E[X_a(t_k)²]` with its standard error.
    pub fn second_moment(&self, k: usize, a: usize) -> Estimate {
        let n = self.count as f64;
        let m2 = self.sum_outer[k][a * self.d + a].sum() / n;
        let m4 = self.sum_fourth[k][a].sum() / n;
        Estimate::new(m2, ((m4 - m2 * m2).max(0.0) / (n - 1.0)).sqrt())
    }

    /// `E[X(t_k) X(t_k)ᵀ]`, row-major.
    pub fn outer(&self, k: usize) -> Vec<f64> {
        self.sum_outer[k].iter().map(|s| s.sum() / self.count as f64).collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LlnReport {
    pub t: f64,
    /// `E[X_l(t)]/t` per coordinate.
    pub drift: Vec<Estimate>,
    pub max_abs_drift: f64,
    pub passed: bool,
}

/// Law of large numbers at the largest grid time: `0` must lie inside the
/// 99% interval of `E[X_l(t)]/t` for every coordinate.
pub fn lln_check(series: &[ObservationSeries], t: f64) -> Result<LlnReport> {
    require(series.len())?;
    let k = time_index(series, t)?;
    let stats = EnsembleStats::from_series(series)?;
    let drift: Vec<Estimate> = (0..stats.d)
        .map(|a| {
            let m = stats.mean(k, a);
            Estimate::new(m.value / t, m.se / t)
        })
        .collect();
    let passed = drift.iter().all(|e| {
        let (lo, hi) = e.ci(LLN_LEVEL);
        lo <= 0.0 && 0.0 <= hi
    });
    Ok(LlnReport {
        t,
        max_abs_drift: drift.iter().map(|e| e.value.abs()).fold(0.0, f64::max),
        drift,
        passed,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DiffusiveReport {
    pub gamma: f64,
    pub grid: Vec<f64>,
    /// `E[X_l(t)²]/t`, indexed `[l][grid point]`.
    pub ratios: Vec<Vec<Estimate>>,
    /// Coordinate-averaged ratios.
    pub pooled: Vec<Estimate>,
    pub lower_bound_holds: bool,
    /// Least-squares slope of the pooled ratio against `t`.
    pub slope: Estimate,
    /// Pooled ratio at `T` minus pooled ratio at `T/2` (if sampled).
    pub half_horizon_gap: Option<Estimate>,
    /// Flat-trend surrogate for the upper bound; not a proof of a limit.
    pub plateau_holds: bool,
    pub passed: bool,
}

/// Diffusive bounds: `E[(e·X(t))²]/t ≥ γ` on the grid, plus a plateau test
/// on the grid as the observable stand-in for the upper bound.
pub fn diffusive_bounds_check(series: &[ObservationSeries], spec: &RateSpec, grid: &[f64]) -> Result<DiffusiveReport> {
    require(series.len())?;
    if grid.len() < 2 {
        return invalid("diffusive check needs at least two grid points");
    }
    let idx: Vec<usize> = grid.iter().map(|&t| time_index(series, t)).collect::<Result<_>>()?;
    let d = series[0].displacement[0].len();
    let stats = EnsembleStats::from_series(series)?;
    let ratios: Vec<Vec<Estimate>> = (0..d)
        .map(|a| {
            idx.iter()
                .zip(grid)
                .map(|(&k, &t)| {
                    let m = stats.second_moment(k, a);
                    Estimate::new(m.value / t, m.se / t)
                })
                .collect()
        })
        .collect();
    let lower_bound_holds = ratios.iter().flatten().all(|e| e.value >= spec.gamma - SE_BAND * e.se);

    let rows: Vec<Vec<f64>> = series
        .iter()
        .map(|s| {
            idx.iter()
                .zip(grid)
                .map(|(&k, &t)| s.displacement[k].iter().map(|&x| (x * x) as f64).sum::<f64>() / (d as f64 * t))
                .collect()
        })
        .collect();
    let horizon = grid[grid.len() - 1];
    let half = grid.iter().position(|&t| (t - horizon / 2.0).abs() < 1e-9 * horizon);
    let grid_v = grid.to_vec();
    let est = jackknife(&rows, |r| {
        let means: Vec<f64> = (0..grid_v.len())
            .map(|j| r.iter().map(|v| v[j]).sum::<f64>() / r.len() as f64)
            .collect();
        let mut out = means.clone();
        out.push(ols_slope(&grid_v, &means));
        if let Some(h) = half {
            out.push(means[means.len() - 1] - means[h]);
        }
        out
    });
    let pooled = est[..grid.len()].to_vec();
    let slope = est[grid.len()];
    let half_horizon_gap = half.map(|_| est[grid.len() + 1]);
    let plateau_holds = slope.within(0.0, SE_BAND) && half_horizon_gap.is_none_or(|g| g.within(0.0, SE_BAND));
    Ok(DiffusiveReport {
        gamma: spec.gamma,
        grid: grid.to_vec(),
        ratios,
        pooled,
        lower_bound_holds,
        slope,
        half_horizon_gap,
        plateau_holds,
        passed: lower_bound_holds && plateau_holds,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SigmaReport {
    pub t: f64,
    /// Symmetrised `E[X_k X_l]/t`, row-major.
    pub matrix: Vec<Estimate>,
    pub diagonal_mean: f64,
    pub off_diagonal_zero: bool,
    /// Pairwise diagonal differences are within the band.
    pub diagonal_equal: bool,
    pub passed: bool,
}

/// Asymptotic covariance `σ²_{kl} ≈ E[X_k(t) X_l(t)]/t`.
pub fn sigma_estimate(series: &[ObservationSeries], t: f64) -> Result<SigmaReport> {
    require(series.len())?;
    let k = time_index(series, t)?;
    let d = series[0].displacement[k].len();
    let rows: Vec<Vec<f64>> = series
        .iter()
        .map(|s| {
            let x = &s.displacement[k];
            let mut row = Vec::with_capacity(d * d);
            for a in 0..d {
                for b in 0..d {
                    row.push((x[a] * x[b]) as f64 / t);
                }
            }
            row
        })
        .collect();
    let stat = |r: &[&[f64]]| {
        let n = r.len() as f64;
        let m: Vec<f64> = (0..d * d).map(|j| r.iter().map(|v| v[j]).sum::<f64>() / n).collect();
        let mut out = Vec::new();
        for a in 0..d {
            for b in 0..d {
                out.push(0.5 * (m[a * d + b] + m[b * d + a]));
            }
        }
        for a in 0..d {
            for b in a + 1..d {
                out.push(m[a * d + a] - m[b * d + b]);
            }
        }
        out
    };
    let est = jackknife(&rows, stat);
    let matrix = est[..d * d].to_vec();
    let off_diagonal_zero = (0..d)
        .flat_map(|a| (0..d).map(move |b| (a, b)))
        .filter(|(a, b)| a != b)
        .all(|(a, b)| matrix[a * d + b].within(0.0, SE_BAND));
    let diagonal_equal = est[d * d..].iter().all(|e| e.within(0.0, SE_BAND));
    Ok(SigmaReport {
        t,
        diagonal_mean: (0..d).map(|a| matrix[a * d + a].value).sum::<f64>() / d as f64,
        matrix,
        off_diagonal_zero,
        diagonal_equal,
        passed: off_diagonal_zero && diagonal_equal,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CltComponent {
    pub skewness: Estimate,
    pub excess_kurtosis: Estimate,
    /// `Cov(X_N(s/t), X_N(1)) - Var(X_N(s/t))`.
    pub increment_gap: Estimate,
    /// Advisory only.
    pub anderson_darling_p: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CltReport {
    pub s: f64,
    pub t: f64,
    pub components: Vec<CltComponent>,
    pub passed: bool,
}

/// Gaussian and independent-increment signatures of `X(·t)/√t` at the
/// times `s < t`.
pub fn clt_check(series: &[ObservationSeries], s: f64, t: f64) -> Result<CltReport> {
    require(series.len())?;
    if !(s < t) {
        return invalid("clt_check needs s < t");
    }
    let (ks, kt) = (time_index(series, s)?, time_index(series, t)?);
    let d = series[0].displacement[kt].len();
    let scale = t.sqrt();
    let mut components = Vec::with_capacity(d);
    for a in 0..d {
        let rows: Vec<Vec<f64>> = series
            .iter()
            .map(|o| {
                vec![
                    o.displacement[ks][a] as f64 / scale,
                    o.displacement[kt][a] as f64 / scale,
                ]
            })
            .collect();
        let est = jackknife(&rows, |r| {
            let xs: Vec<f64> = r.iter().map(|v| v[0]).collect();
            let xt: Vec<f64> = r.iter().map(|v| v[1]).collect();
            let (sk, ku) = skew_kurt(&xt);
            let (ms, mt) = (mean(&xs), mean(&xt));
            let n = r.len() as f64;
            let cov = xs.iter().zip(&xt).map(|(p, q)| (p - ms) * (q - mt)).sum::<f64>() / n;
            let var = xs.iter().map(|p| (p - ms).powi(2)).sum::<f64>() / n;
            vec![sk, ku, cov - var]
        });
        let xt: Vec<f64> = rows.iter().map(|v| v[1]).collect();
        let passed = est.iter().all(|e| e.within(0.0, SE_BAND));
        components.push(CltComponent {
            skewness: est[0],
            excess_kurtosis: est[1],
            increment_gap: est[2],
            anderson_darling_p: anderson_darling_normal(&xt).p_value,
            passed,
        });
    }
    Ok(CltReport {
        s,
        t,
        passed: components.iter().all(|c| c.passed),
        components,
    })
}

fn snapshots_at(series: &[ObservationSeries], k: usize) -> Result<Vec<&[f64]>> {
    series
        .iter()
        .map(|s| {
            s.snapshots
                .as_ref()
                .map(|v| v[k].as_slice())
                .ok_or_else(|| Error::InvalidInput("ensemble was run without environment snapshots".into()))
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentComparison {
    pub observable: String,
    pub order: u32,
    pub at_start: Estimate,
    pub at_t: Estimate,
    /// Paired difference, time `t` minus time 0.
    pub difference: Estimate,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct StationarityReport {
    pub t: f64,
    pub comparisons: Vec<MomentComparison>,
    /// Exact `E[g²]` and `E[g⁴]` for linear `r`, compared at time `t`.
    pub gaussian_reference: Option<Vec<MomentComparison>>,
    pub passed: bool,
}

/// Compares gradient moments of the environment at time 0 and time `t`.
///
/// Observables: the bond average `(2d)⁻¹ Σ_e (η(0)-η(e))^k` at the
/// walker and the bond `(η(e₁)-η(2e₁))^k` one step away, `k = 1..4`.
/// `gaussian_bond_variance` is the exact stationary `E[g²]` when known.
pub fn stationarity_check(
    series: &[ObservationSeries],
    t: f64,
    gaussian_bond_variance: Option<f64>,
) -> Result<StationarityReport> {
    require(series.len())?;
    let (k0, kt) = (time_index(series, 0.0)?, time_index(series, t)?);
    let (s0, st) = (snapshots_at(series, k0)?, snapshots_at(series, kt)?);
    let dirs = s0[0].len() - 1;
    let obs = |g: &[f64], which: usize, order: i32| -> f64 {
        if which == 0 {
            g[..dirs].iter().map(|v| v.powi(order)).sum::<f64>() / dirs as f64
        } else {
            g[dirs].powi(order)
        }
    };
    let names = ["walker-bonds", "far-bond"];
    let mut comparisons = Vec::new();
    for (which, name) in names.iter().enumerate() {
        for order in 1..=4 {
            let rows: Vec<Vec<f64>> = s0
                .iter()
                .zip(&st)
                .map(|(a, b)| {
                    let (x, y) = (obs(a, which, order), obs(b, which, order));
                    vec![x, y, y - x]
                })
                .collect();
            let est = jackknife(&rows, |r| {
                (0..3)
                    .map(|j| r.iter().map(|v| v[j]).sum::<f64>() / r.len() as f64)
                    .collect()
            });
            comparisons.push(MomentComparison {
                observable: name.to_string(),
                order: order as u32,
                at_start: est[0],
                at_t: est[1],
                difference: est[2],
                passed: est[2].within(0.0, SE_BAND),
            });
        }
    }
    let gaussian_reference = gaussian_bond_variance.map(|v| {
        comparisons
            .iter()
            .filter(|c| c.observable == names[0] && (c.order == 2 || c.order == 4))
            .map(|c| {
                let exact = if c.order == 2 { v } else { 3.0 * v * v };
                MomentComparison {
                    observable: format!("{} vs exact", c.observable),
                    order: c.order,
                    at_start: Estimate::new(exact, 0.0),
                    at_t: c.at_t,
                    difference: Estimate::new(c.at_t.value - exact, c.at_t.se),
                    passed: c.at_t.within(exact, SE_BAND),
                }
            })
            .collect::<Vec<_>>()
    });
    let passed =
        comparisons.iter().all(|c| c.passed) && gaussian_reference.as_ref().is_none_or(|g| g.iter().all(|c| c.passed));
    Ok(StationarityReport {
        t,
        comparisons,
        gaussian_reference,
        passed,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct YaglomComparison {
    /// Snapshot indices and powers `(a, b, p, q)`.
    pub a: usize,
    pub b: usize,
    pub p: u32,
    pub q: u32,
    pub forward: Estimate,
    pub reversed: Estimate,
    pub difference: Estimate,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct YaglomReport {
    pub t: f64,
    pub comparisons: Vec<YaglomComparison>,
    pub passed: bool,
}

/// Test family `(a, b, p, q)` over snapshot indices (see
/// `dynamics::snapshot_labels`): `g = G_a^p`, `h = G_b^q`.
pub fn yaglom_family(d: usize) -> Vec<(usize, usize, u32, u32)> {
    let far = 2 * d;
    vec![
        (0, 1, 1, 1),
        (0, 1, 1, 3),
        (0, 1, 3, 1),
        (0, 0, 1, 3),
        (0, 2, 1, 1),
        (far, 0, 1, 1),
        (far, 0, 1, 3),
    ]
}

/// Reversibility `E[g(∇η(0)) h(∇η(t))] = E[g(-∇η(t)) h(-∇η(0))]`.
pub fn yaglom_check(series: &[ObservationSeries], t: f64) -> Result<YaglomReport> {
    require(series.len())?;
    let (k0, kt) = (time_index(series, 0.0)?, time_index(series, t)?);
    let (s0, st) = (snapshots_at(series, k0)?, snapshots_at(series, kt)?);
    let d = (s0[0].len() - 1) / 2;
    let mut comparisons = Vec::new();
    for (a, b, p, q) in yaglom_family(d) {
        let sign = if (p + q) % 2 == 0 { 1.0 } else { -1.0 };
        let rows: Vec<Vec<f64>> = s0
            .iter()
            .zip(&st)
            .map(|(x, y)| {
                let fwd = x[a].powi(p as i32) * y[b].powi(q as i32);
                let rev = sign * y[a].powi(p as i32) * x[b].powi(q as i32);
                vec![fwd, rev, fwd - rev]
            })
            .collect();
        let est = jackknife(&rows, |r| {
            (0..3)
                .map(|j| r.iter().map(|v| v[j]).sum::<f64>() / r.len() as f64)
                .collect()
        });
        comparisons.push(YaglomComparison {
            a,
            b,
            p,
            q,
            forward: est[0],
            reversed: est[1],
            difference: est[2],
            passed: est[2].within(0.0, SE_BAND),
        });
    }
    Ok(YaglomReport {
        t,
        passed: comparisons.iter().all(|c| c.passed),
        comparisons,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct MartingaleReport {
    pub t: f64,
    /// `E[X_l(t) - ∫(φ̄_l + φ̃_l)]`.
    pub compensated_mean: Vec<Estimate>,
    /// `Cov(N_l(t), X_l(t) - N_l(t))`.
    pub background_covariance: Vec<Estimate>,
    pub compensated_ok: bool,
    pub orthogonality_ok: bool,
    pub passed: bool,
}

/// Martingale decomposition checks at time `t`.
pub fn martingale_check(series: &[ObservationSeries], t: f64) -> Result<MartingaleReport> {
    require(series.len())?;
    let k = time_index(series, t)?;
    let d = series[0].displacement[k].len();
    let mut compensated_mean = Vec::new();
    let mut background_covariance = Vec::new();
    for a in 0..d {
        let rows: Vec<Vec<f64>> = series
            .iter()
            .map(|s| {
                let x = s.displacement[k][a] as f64;
                let n = s.background[k][a] as f64;
                vec![x - s.comp_bar[k][a] - s.comp_tilde[k][a], n, x - n]
            })
            .collect();
        let est = jackknife(&rows, |r| {
            let m = |j: usize| r.iter().map(|v| v[j]).sum::<f64>() / r.len() as f64;
            let (mn, mr) = (m(1), m(2));
            let cov = r.iter().map(|v| (v[1] - mn) * (v[2] - mr)).sum::<f64>() / r.len() as f64;
            vec![m(0), cov]
        });
        compensated_mean.push(est[0]);
        background_covariance.push(est[1]);
    }
    let compensated_ok = compensated_mean.iter().all(|e| e.within(0.0, SE_BAND));
    let orthogonality_ok = background_covariance.iter().all(|e| e.within(0.0, SE_BAND));
    Ok(MartingaleReport {
        t,
        compensated_mean,
        background_covariance,
        compensated_ok,
        orthogonality_ok,
        passed: compensated_ok && orthogonality_ok,
    })
}

/// Estimated `Ĉ(p)` on the torus momentum grid.
#[derive(Clone, Debug, Serialize)]
pub struct ChatGrid {
    pub l: usize,
    pub d: usize,
    /// Indexed like torus sites (Fourier index `k`).
    pub values: Vec<Estimate>,
    /// Ensemble mean of `f` that was subtracted.
    pub centered_by: f64,
}

impl ChatGrid {
    /// `sup_p |Ĉ(p)|` over the grid.
    pub fn sup(&self) -> f64 {
        self.values.iter().map(|e| e.value.abs()).fold(0.0, f64::max)
    }

    /// Riemann sum `Σ_{p≠0} Ĉ(p)/D̂(p) (2π/L)^d`.
    pub fn infrared_functional(&self, cache: &SpectralCache) -> f64 {
        let cell = (2.0 * std::f64::consts::PI / self.l as f64).powi(self.d as i32);
        (1..self.values.len())
            .map(|k| self.values[k].value / cache.dhat[k])
            .sum::<f64>()
            * cell
    }
}

/// `Ĉ(p) = Σ_x e^{ip·x} Cov(f∘τ₀, f∘τ_x)` from i.i.d. fields: per field the
/// periodogram `|Σ_x e^{ip·x} (f(τ_x ω) - μ)|² / L^d`, averaged over
/// fields. `μ` is the ensemble mean of `f`; a warning is logged when it
/// is significantly nonzero.
pub fn chat_estimate<F>(fields: &[TorusField], cache: &SpectralCache, f: F) -> Result<ChatGrid>
where
    F: Fn(&TorusField, usize) -> f64,
{
    if fields.len() < 2 {
        return Err(Error::Underpowered {
            got: fields.len(),
            need: 2,
        });
    }
    let t = cache.torus;
    let local: Vec<Vec<f64>> = fields.iter().map(|w| t.sites().map(|x| f(w, x)).collect()).collect();
    let per_field: Vec<f64> = local.iter().map(|v| mean(v)).collect();
    let (mu, se) = crate::stats::mean_se(&per_field);
    if mu.abs() > SE_BAND * se && mu.abs() > 1e-12 {
        log::warn!("functional is not centred (mean {mu:.3e} ± {se:.1e}); subtracting the ensemble mean");
    }
    let vol = t.volume() as f64;
    let rows: Vec<Vec<f64>> = local
        .iter()
        .map(|v| {
            let mut buf: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x - mu, 0.0)).collect();
            cache.fft.forward(&mut buf);
            buf.iter().map(|z| z.norm_sqr() / vol).collect()
        })
        .collect();
    let values = (0..t.volume())
        .map(|k| {
            let col: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            let (m, s) = crate::stats::mean_se(&col);
            Estimate::new(m, s)
        })
        .collect();
    Ok(ChatGrid {
        l: t.l,
        d: t.d,
        values,
        centered_by: mu,
    })
}

/// `|e^{ip·e}-1|² b̂(p)`: exact `Ĉ` of the bond functional under the
/// Gaussian measure with covariance `b`.
pub fn gaussian_bond_chat(p: &[f64], dir_axis: usize) -> f64 {
    let dh = dhat(p);
    if dh == 0.0 {
        0.0
    } else {
        2.0 * (1.0 - p[dir_axis].cos()) / (2.0 * dh)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SrwRow {
    pub t: f64,
    /// `E[|X(t)|²]`.
    pub msd: Estimate,
    /// `2dγt`.
    pub exact: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SrwReport {
    pub gamma: f64,
    pub rows: Vec<SrwRow>,
    pub passed: bool,
}

/// For `w ≡ γ` the walk is simple with total rate `2dγ`, so
/// `E[|X(t)|²] = 2dγt` exactly.
pub fn srw_msd_check(series: &[ObservationSeries], gamma: f64, times: &[f64]) -> Result<SrwReport> {
    require(series.len())?;
    let mut rows = Vec::new();
    for &t in times {
        let k = time_index(series, t)?;
        let d = series[0].displacement[k].len();
        let x: Vec<f64> = series
            .iter()
            .map(|s| s.displacement[k].iter().map(|&v| (v * v) as f64).sum())
            .collect();
        let (m, se) = crate::stats::mean_se(&x);
        let msd = Estimate::new(m, se);
        let exact = 2.0 * d as f64 * gamma * t;
        rows.push(SrwRow {
            t,
            msd,
            exact,
            passed: msd.within(exact, SE_BAND),
        });
    }
    Ok(SrwReport {
        gamma,
        passed: rows.iter().all(|r| r.passed),
        rows,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct WaitingTimeReport {
    pub draws: usize,
    pub rate: f64,
    pub mean: Estimate,
    pub ks: crate::stats::TestResult,
    pub level: f64,
    pub passed: bool,
}

/// Kolmogorov–Smirnov test of successive waiting times of an
/// interaction-free walk against `Exp(2dγ)`.
pub fn waiting_time_ks(
    spec: &RateSpec,
    torus: crate::lattice::Torus,
    draws: usize,
    seed: u64,
    sampler: crate::dynamics::JumpSampler,
    level: f64,
) -> Result<WaitingTimeReport> {
    if !spec.is_interaction_free() {
        return invalid("waiting times are exponential only for w ≡ γ");
    }
    require(draws)?;
    let mut state = crate::dynamics::WalkerState::new(&TorusField::zeros(torus), seed)?;
    let mut taus = Vec::with_capacity(draws);
    for _ in 0..draws {
        taus.push(crate::dynamics::step(spec, &mut state, sampler)?.tau);
    }
    let rate = torus.directions() as f64 * spec.gamma;
    let ks = crate::stats::ks_test(&taus, |x| if x <= 0.0 { 0.0 } else { -(-rate * x).exp_m1() });
    let (m, se) = crate::stats::mean_se(&taus);
    Ok(WaitingTimeReport {
        draws,
        rate,
        mean: Estimate::new(m, se),
        passed: ks.p_value >= level,
        ks,
        level,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CovariancePoint {
    pub x: Vec<i64>,
    pub empirical: Estimate,
    pub green: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct GffReport {
    pub draws: usize,
    pub points: Vec<CovariancePoint>,
    /// `Σ_e (b(0) - b(e))` and its exact value `1 - L^{-d}`.
    pub drop_sum: f64,
    pub drop_sum_exact: f64,
    pub passed: bool,
}

/// Empirical `Cov(ω(0), ω(x))` of exact GFF draws against the torus Green
/// function. Each draw contributes its translation average
/// `L^{-d} Σ_y ω(y) ω(y+x)`, which has the same mean.
pub fn gff_covariance_check(cache: &SpectralCache, draws: usize, seed: u64, points: &[Vec<i64>]) -> Result<GffReport> {
    use rayon::prelude::*;
    require(draws)?;
    let t = cache.torus;
    let shifted: Vec<Vec<usize>> = points
        .iter()
        .map(|x| {
            let s = t.index_of(x);
            t.sites().map(|y| t.add(y, s)).collect()
        })
        .collect();
    let rows: Vec<Vec<f64>> = (0..draws)
        .into_par_iter()
        .map(|i| {
            let f = crate::gibbs::sample_gff(cache, crate::seed::replica_seed(seed, i as u64));
            shifted
                .iter()
                .map(|idx| idx.iter().zip(&f.values).map(|(&j, &v)| v * f.values[j]).sum::<f64>() / t.volume() as f64)
                .collect()
        })
        .collect();
    let green = cache.torus_green();
    let points: Vec<CovariancePoint> = points
        .iter()
        .enumerate()
        .map(|(j, x)| {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            let (m, se) = crate::stats::mean_se(&col);
            let empirical = Estimate::new(m, se);
            let g = green.at(x);
            CovariancePoint {
                x: x.clone(),
                empirical,
                green: g,
                passed: empirical.within(g, SE_BAND),
            }
        })
        .collect();
    let drop_sum: f64 = (0..t.directions())
        .map(|dir| green.at_index(0) - green.at_index(t.neighbor(0, dir)))
        .sum();
    let drop_sum_exact = 1.0 - 1.0 / t.volume() as f64;
    Ok(GffReport {
        draws,
        passed: points.iter().all(|p| p.passed) && (drop_sum - drop_sum_exact).abs() <= 1e-12,
        points,
        drop_sum,
        drop_sum_exact,
    })
}

/// Ten displacement vectors used for the covariance check: the origin,
/// axis steps and a few diagonals.
pub fn default_covariance_points(d: usize, l: usize) -> Vec<Vec<i64>> {
    let mut pts = Vec::new();
    let unit = |a: usize, k: i64| {
        let mut v = vec![0i64; d];
        v[a] = k;
        v
    };
    pts.push(vec![0; d]);
    for k in [1, 2, (l / 2) as i64] {
        pts.push(unit(0, k));
    }
    pts.push(unit(d - 1, 1));
    pts.push(unit(d - 1, 3));
    pts.push(vec![1; d]);
    pts.push((0..d).map(|a| if a < 2 { 1 } else { 0 }).collect());
    pts.push((0..d).map(|a| if a == 0 { 2 } else { 1 }).collect());
    pts.push(vec![(l / 2) as i64; d]);
    pts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{run_ensemble, EnsembleConfig, JumpSampler, Start};
    use crate::gibbs::sample_gff;
    use crate::lattice::Torus;
    use crate::seed::replica_seed;

    fn srw(replicas: usize, seed: u64) -> Vec<ObservationSeries> {
        let spec = RateSpec::interaction_free(1.0);
        let cache = SpectralCache::new(Torus::new(3, 16).unwrap());
        let cfg = EnsembleConfig {
            replicas,
            master_seed: seed,
            horizon: 100.0,
            sample_times: vec![25.0, 50.0, 75.0, 100.0],
            start: Start::Flat,
            sampler: JumpSampler::Inversion,
            snapshots: false,
            mcmc_sweeps: 0,
        };
        run_ensemble(&spec, &cache, &cfg).unwrap()
    }

    #[test]
    fn srw_msd_and_waiting_times() {
        let runs = srw(400, 9);
        let r = srw_msd_check(&runs, 1.0, &[50.0, 100.0]).unwrap();
        assert!(r.passed, "{r:?}");
        let w = waiting_time_ks(
            &RateSpec::interaction_free(1.0),
            Torus::new(3, 8).unwrap(),
            20_000,
            4,
            JumpSampler::Inversion,
            0.01,
        )
        .unwrap();
        assert!(w.passed && (w.mean.value - 1.0 / 6.0).abs() < 4.0 * w.mean.se, "{w:?}");
    }

    #[test]
    fn gff_covariance_matches_green() {
        let cache = SpectralCache::new(Torus::new(3, 8).unwrap());
        let r = gff_covariance_check(&cache, 500, 3, &default_covariance_points(3, 8)).unwrap();
        assert_eq!(r.points.len(), 10);
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn merge_is_exact() {
        let runs = srw(200, 1);
        let all = EnsembleStats::from_series(&runs).unwrap();
        let mut a = EnsembleStats::from_series(&runs[..77]).unwrap();
        let b = EnsembleStats::from_series(&runs[77..]).unwrap();
        a.merge(&b).unwrap();
        assert_eq!(a.count, all.count);
        for k in 0..4 {
            for (x, y) in a.outer(k).iter().zip(all.outer(k)) {
                assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
            }
            for l in 0..3 {
                assert!((a.mean(k, l).value - all.mean(k, l).value).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn underpowered_is_reported() {
        let runs = srw(10, 2);
        assert!(matches!(lln_check(&runs, 100.0), Err(Error::Underpowered { .. })));
    }

    #[test]
    fn srw_oracles() {
        let runs = srw(1000, 3);
        let spec = RateSpec::interaction_free(1.0);
        assert!(lln_check(&runs, 100.0).unwrap().passed);
        let diff = diffusive_bounds_check(&runs, &spec, &[25.0, 50.0, 75.0, 100.0]).unwrap();
        assert!(diff.passed, "{diff:?}");
        for e in &diff.pooled {
            assert!(e.within(2.0, 3.0), "{e:?}");
        }
        let sigma = sigma_estimate(&runs, 100.0).unwrap();
        assert!(sigma.passed);
        assert!((sigma.diagonal_mean - 2.0).abs() < 0.2);
        assert!(clt_check(&runs, 50.0, 100.0).unwrap().passed);
        // no drift and no interaction: X itself is the background martingale
        let m = martingale_check(&runs, 100.0).unwrap();
        assert!(m.compensated_ok);
        assert!(m.background_covariance.iter().all(|e| e.value == 0.0));
    }

    #[test]
    fn gaussian_bond_chat_matches_exact_spectrum() {
        let t = Torus::new(3, 6).unwrap();
        let cache = SpectralCache::new(t);
        let fields: Vec<TorusField> = (0..2000).map(|i| sample_gff(&cache, replica_seed(8, i))).collect();
        let grid = chat_estimate(&fields, &cache, |w, x| w.gradient(x, 0)).unwrap();
        let mut fails = 0;
        for k in t.sites() {
            let exact = gaussian_bond_chat(&t.momentum(k), 0);
            let e = grid.values[k];
            if (e.value - exact).abs() > 3.5 * e.se + 1e-12 {
                fails += 1;
            }
        }
        // 216 grid points; allow the handful expected at 3.5 SE
        assert!(fails <= 3, "{fails} grid points off");
        assert!(grid.values[0].value.abs() < 1e-20);
    }
}
