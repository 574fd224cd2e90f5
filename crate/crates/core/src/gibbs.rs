//! Samplers for the gradient Gibbs measure of the environment.
//!
//! The measure has density proportional to
//! `exp(-κ Σ_{⟨xy⟩} R(ω(x) - ω(y)))` over nearest-neighbour bonds on the
//! mean-zero subspace. The environment seen from the walker is stationary
//! for `κ = 2`, i.e. every bond counted once per orientation; `κ = 1`
//! counts every bond once and, for `R(u) = u²/2`, is the massless free
//! field with covariance `(-Δ)^{-1}`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::field::{FieldTag, TorusField};
use crate::lattice::{SpectralCache, Torus};
use crate::rate::RateSpec;
use crate::seed::rng_from_seed;
use crate::stats::{jackknife, Estimate};

/// Coupling under which the environment process is stationary.
pub const STATIONARY_COUPLING: f64 = 2.0;
/// Coupling of the single-count bond Hamiltonian.
pub const UNIT_COUPLING: f64 = 1.0;
/// Rejection-sampler budget at a single site.
pub const MAX_PROPOSALS: u64 = 1_000_000;

#[derive(Clone, Debug)]
pub struct GibbsMeasure {
    pub spec: RateSpec,
    pub coupling: f64,
}

impl GibbsMeasure {
    pub fn new(spec: RateSpec, coupling: f64) -> Result<Self> {
        if !(coupling > 0.0 && coupling.is_finite()) {
            return invalid("coupling must be positive");
        }
        if spec.r_poly().is_zero() {
            return invalid("r ≡ 0 defines no Gibbs measure");
        }
        Ok(GibbsMeasure { spec, coupling })
    }

    /// The invariant measure of the environment process.
    pub fn stationary(spec: RateSpec) -> Result<Self> {
        GibbsMeasure::new(spec, STATIONARY_COUPLING)
    }

    pub fn unit(spec: RateSpec) -> Result<Self> {
        GibbsMeasure::new(spec, UNIT_COUPLING)
    }

    /// For `r(u) = a·u` the measure is Gaussian with covariance
    /// `b / (κ a)`; returns that factor.
    pub fn gaussian_scale(&self) -> Option<f64> {
        self.spec.gaussian_slope().map(|a| 1.0 / (self.coupling * a))
    }

    /// Scale of the Brascamp–Lieb quadratic form: `Hess H ≥ κ c (-Δ)`.
    pub fn kernel_scale(&self) -> f64 {
        1.0 / self.coupling
    }

    /// `κ Σ_e R(y - n_e)`: the single-site energy given the neighbours.
    pub fn site_energy(&self, y: f64, neighbors: &[f64]) -> f64 {
        self.coupling * neighbors.iter().map(|&n| self.spec.potential_r(y - n)).sum::<f64>()
    }

    fn site_force(&self, y: f64, neighbors: &[f64]) -> f64 {
        self.coupling * neighbors.iter().map(|&n| self.spec.r(y - n)).sum::<f64>()
    }

    fn site_stiffness(&self, y: f64, neighbors: &[f64]) -> f64 {
        let rp = self.spec.r_poly().derivative();
        self.coupling * neighbors.iter().map(|&n| rp.eval(y - n)).sum::<f64>()
    }

    /// Minimiser of the single-site energy (unique by strict convexity).
    pub fn site_mode(&self, neighbors: &[f64]) -> f64 {
        let mut lo = neighbors.iter().copied().fold(f64::INFINITY, f64::min);
        let mut hi = neighbors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo < 1e-300 {
            return lo;
        }
        let mut y = 0.5 * (lo + hi);
        for _ in 0..200 {
            let f = self.site_force(y, neighbors);
            if f.abs() < 1e-14 * (1.0 + y.abs()) {
                break;
            }
            if f > 0.0 {
                hi = y;
            } else {
                lo = y;
            }
            let step = y - f / self.site_stiffness(y, neighbors);
            y = if step > lo && step < hi { step } else { 0.5 * (lo + hi) };
            if hi - lo < 1e-15 * (1.0 + y.abs()) {
                break;
            }
        }
        y
    }
}

/// Exact draw of the field with covariance `b` (the Green function of the
/// cache): independent Fourier modes with variance `L^d b̂(p_k)`, zero mode
/// removed.
pub fn sample_gff(cache: &SpectralCache, seed: u64) -> TorusField {
    sample_gaussian(cache, 1.0, seed)
}

/// Exact draw with covariance `scale · b`.
pub fn sample_gaussian(cache: &SpectralCache, scale: f64, seed: u64) -> TorusField {
    let mut rng = rng_from_seed(seed);
    let noise: Vec<f64> = (0..cache.torus.volume()).map(|_| rng.sample(StandardNormal)).collect();
    let mut buf = cache.fft.forward_real(&noise);
    for (z, &b) in buf.iter_mut().zip(&cache.bhat) {
        *z *= (scale * b).sqrt();
    }
    buf[0] = Complex64::new(0.0, 0.0);
    cache.fft.inverse(&mut buf);
    let mut field = TorusField {
        torus: cache.torus,
        values: buf.into_iter().map(|z| z.re).collect(),
        tag: FieldTag::ExactGaussian,
        seed,
    };
    field.pin_mean();
    field
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McmcConfig {
    pub sweeps: usize,
    pub burn_in: usize,
    /// Width of the Gaussian proposal relative to the curvature envelope;
    /// must be at least 1 for the envelope to dominate.
    pub proposal_scale: f64,
    pub seed: u64,
}

impl McmcConfig {
    pub fn new(sweeps: usize, burn_in: usize, seed: u64) -> Self {
        McmcConfig {
            sweeps,
            burn_in,
            proposal_scale: 1.0,
            seed,
        }
    }

    fn check(&self) -> Result<()> {
        if self.burn_in >= self.sweeps {
            return invalid("burn_in must be smaller than sweeps");
        }
        if !(self.proposal_scale >= 1.0) {
            return invalid("proposal_scale must be at least 1 (envelope must dominate)");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct McmcOutput {
    pub field: TorusField,
    /// Mean squared bond gradient after every sweep.
    pub gradient_trace: Vec<f64>,
    pub acceptance_rate: f64,
}

/// Heat-bath sampler for one site: exact draw from
/// `∝ exp(-κ Σ_e R(y - n_e))` by rejection from a Gaussian centred at the
/// mode with the curvature lower bound `2dκc`. Returns the value and the
/// number of proposals used.
pub fn heat_bath_site<R: Rng>(
    measure: &GibbsMeasure,
    neighbors: &[f64],
    proposal_scale: f64,
    site: usize,
    rng: &mut R,
) -> Result<(f64, u64)> {
    let mode = measure.site_mode(neighbors);
    let e0 = measure.site_energy(mode, neighbors);
    let curvature = measure.coupling * measure.spec.c * neighbors.len() as f64;
    let sd = proposal_scale / curvature.sqrt();
    for k in 1..=MAX_PROPOSALS {
        let z: f64 = rng.sample(StandardNormal);
        let y = mode + sd * z;
        let log_acc = -(measure.site_energy(y, neighbors) - e0) + 0.5 * z * z;
        let u: f64 = rng.random();
        if u.ln() <= log_acc.min(0.0) {
            return Ok((y, k));
        }
    }
    Err(Error::SamplerStuck {
        site,
        proposals: MAX_PROPOSALS,
    })
}

fn mean_sq_gradient(field: &TorusField) -> f64 {
    let t = field.torus;
    let mut s = 0.0;
    for x in t.sites() {
        for a in 0..t.d {
            s += field.gradient(x, 2 * a).powi(2);
        }
    }
    s / (t.volume() * t.d) as f64
}

/// Checkerboard heat-bath sweeps; the mean is re-pinned after each sweep.
pub fn sample_gibbs_mcmc(measure: &GibbsMeasure, torus: Torus, config: &McmcConfig) -> Result<McmcOutput> {
    config.check()?;
    let mut rng = rng_from_seed(config.seed);
    let mut field = TorusField::zeros(torus);
    field.tag = FieldTag::Mcmc;
    field.seed = config.seed;
    let (even, odd): (Vec<usize>, Vec<usize>) = torus
        .sites()
        .partition(|&x| torus.coords(x).iter().sum::<usize>() % 2 == 0);
    let order: Vec<usize> = even.into_iter().chain(odd).collect();
    let mut neighbors = vec![0.0; torus.directions()];
    let mut trace = Vec::with_capacity(config.burn_in + config.sweeps);
    let (mut proposals, mut accepted) = (0u64, 0u64);
    for _ in 0..config.burn_in + config.sweeps {
        for &x in &order {
            for (dir, slot) in neighbors.iter_mut().enumerate() {
                *slot = field.values[torus.neighbor(x, dir)];
            }
            let (y, k) = heat_bath_site(measure, &neighbors, config.proposal_scale, x, &mut rng)?;
            field.values[x] = y;
            proposals += k;
            accepted += 1;
        }
        field.pin_mean();
        trace.push(mean_sq_gradient(&field));
    }
    Ok(McmcOutput {
        field,
        gradient_trace: trace,
        acceptance_rate: accepted as f64 / proposals as f64,
    })
}

/// Draws a field from `measure`: exactly when it is Gaussian, otherwise by
/// heat-bath MCMC with the given sweep budget.
pub fn sample_measure(
    measure: &GibbsMeasure,
    cache: &SpectralCache,
    mcmc_sweeps: usize,
    seed: u64,
) -> Result<TorusField> {
    match measure.gaussian_scale() {
        Some(scale) => {
            let mut f = sample_gaussian(cache, scale, seed);
            f.seed = seed;
            Ok(f)
        }
        None => {
            let cfg = McmcConfig::new(mcmc_sweeps, mcmc_sweeps / 2, seed);
            Ok(sample_gibbs_mcmc(measure, cache.torus, &cfg)?.field)
        }
    }
}

/// Linear gradient functionals `F(ω) = Σ_x α(x)(ω(x) - ω(x+e))`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum LinearFunctional {
    /// `α = δ₀`: `F = ω(0) - ω(e)`.
    Bond { dir: usize },
    /// `α = δ₀ - δ_z`.
    Dipole { dir: usize, offset: Vec<i64> },
}

impl LinearFunctional {
    fn dir(&self) -> usize {
        match self {
            LinearFunctional::Bond { dir } | LinearFunctional::Dipole { dir, .. } => *dir,
        }
    }

    /// `(site, α)` pairs relative to the origin.
    fn weights(&self, torus: Torus) -> Vec<(usize, f64)> {
        match self {
            LinearFunctional::Bond { .. } => vec![(0, 1.0)],
            LinearFunctional::Dipole { offset, .. } => {
                vec![(0, 1.0), (torus.index_of(offset), -1.0)]
            }
        }
    }

    /// `F(τ_x ω)`.
    pub fn eval_at(&self, field: &TorusField, x: usize) -> f64 {
        let t = field.torus;
        self.weights(t)
            .into_iter()
            .map(|(y, a)| a * field.gradient(t.add(x, y), self.dir()))
            .sum()
    }

    /// `∂_x F = α(x) - α(x - e)` as a dense vector.
    pub fn derivative(&self, torus: Torus) -> Vec<f64> {
        let mut g = vec![0.0; torus.volume()];
        for (y, a) in self.weights(torus) {
            g[y] += a;
            g[torus.neighbor(y, self.dir())] -= a;
        }
        g
    }

    /// `Σ_{x,y} ∂_xF b(x-y) ∂_yF`.
    pub fn quadratic_form(&self, cache: &SpectralCache) -> f64 {
        let t = cache.torus;
        let g = cache.torus_green();
        let dv = self.derivative(t);
        let support: Vec<(usize, f64)> = dv
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .collect();
        let mut q = 0.0;
        for &(x, a) in &support {
            for &(y, b) in &support {
                let xc: Vec<i64> = t.coords(x).iter().map(|&c| c as i64).collect();
                let yc: Vec<i64> = t.coords(y).iter().map(|&c| c as i64).collect();
                let diff: Vec<i64> = xc.iter().zip(&yc).map(|(p, q)| p - q).collect();
                q += a * b * g.at(&diff);
            }
        }
        q
    }

    /// The built-in family used by the checks.
    pub fn family(d: usize) -> Vec<LinearFunctional> {
        let mut out = vec![LinearFunctional::Bond { dir: 0 }];
        let mut z = vec![0i64; d];
        z[0] = 1;
        out.push(LinearFunctional::Dipole {
            dir: 0,
            offset: z.clone(),
        });
        if d > 1 {
            let mut y = vec![0i64; d];
            y[1] = 1;
            out.push(LinearFunctional::Dipole { dir: 0, offset: y });
        }
        z[0] = 2;
        out.push(LinearFunctional::Dipole { dir: 0, offset: z });
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BrascampLiebReport {
    pub functional: LinearFunctional,
    pub lambda: f64,
    pub z: Estimate,
    pub lhs: Estimate,
    pub rhs: Estimate,
    /// `lhs - rhs` with its jackknife error.
    pub gap: Estimate,
    pub quadratic_form: f64,
    pub violated: bool,
}

/// Per-replica spatial averages of `e^{λg²}`, `F² e^{λg²}`, `F e^{λg²}`
/// with `g = ω(x) - ω(x+e₁)`.
fn tilted_rows(fields: &[TorusField], functional: &LinearFunctional, lambda: f64) -> Vec<Vec<f64>> {
    fields
        .iter()
        .map(|f| {
            let t = f.torus;
            let (mut e, mut f2e, mut fe) = (0.0, 0.0, 0.0);
            for x in t.sites() {
                let g = f.gradient(x, 0);
                let w = (lambda * g * g).exp();
                let v = functional.eval_at(f, x);
                e += w;
                f2e += v * v * w;
                fe += v * w;
            }
            let n = t.volume() as f64;
            vec![e / n, f2e / n, fe / n]
        })
        .collect()
}

/// Monte Carlo check of
/// `Z(λ) E[F² e^{λg²}] ≤ Z(λ)² Q/(c-λ) + E[F e^{λg²}]²` where `Q` is the
/// quadratic form of `∂F` against `b/κ` (for linear `F`, `∂F` is constant).
pub fn brascamp_lieb_check(
    fields: &[TorusField],
    measure: &GibbsMeasure,
    cache: &SpectralCache,
    functional: &LinearFunctional,
    lambda: f64,
) -> Result<BrascampLiebReport> {
    let c = measure.spec.c;
    if !(0.0..c).contains(&lambda) {
        return invalid(format!("lambda must lie in [0, c) = [0, {c})"));
    }
    if fields.len() < 2 {
        return Err(Error::Underpowered {
            got: fields.len(),
            need: 2,
        });
    }
    let q = functional.quadratic_form(cache) * measure.kernel_scale();
    let rows = tilted_rows(fields, functional, lambda);
    let est = jackknife(&rows, |r| {
        let n = r.len() as f64;
        let z = r.iter().map(|v| v[0]).sum::<f64>() / n;
        let f2e = r.iter().map(|v| v[1]).sum::<f64>() / n;
        let fe = r.iter().map(|v| v[2]).sum::<f64>() / n;
        let lhs = z * f2e;
        let rhs = z * z * q / (c - lambda) + fe * fe;
        vec![z, lhs, rhs, lhs - rhs]
    });
    Ok(BrascampLiebReport {
        functional: functional.clone(),
        lambda,
        z: est[0],
        lhs: est[1],
        rhs: est[2],
        gap: est[3],
        quadratic_form: q,
        violated: est[3].value > 3.0 * est[3].se,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ZLambdaRow {
    pub lambda: f64,
    pub z: Estimate,
    pub bound: f64,
    /// `(1 - 2λv)^{-1/2}` when the measure is Gaussian.
    pub gaussian_closed_form: Option<f64>,
    pub violated: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ZLambdaReport {
    pub beta: f64,
    pub rows: Vec<ZLambdaRow>,
    pub violations: usize,
}

/// Compares the empirical `Z(λ) = E[e^{λ(ω(0)-ω(e))²}]` with
/// `(1 - λ/c)^{-β}`, `β = 2(b(0) - b(e))/κ`.
pub fn z_lambda_bound_check(
    fields: &[TorusField],
    measure: &GibbsMeasure,
    cache: &SpectralCache,
    lambdas: &[f64],
) -> Result<ZLambdaReport> {
    let c = measure.spec.c;
    if lambdas.iter().any(|&l| !(0.0..=0.9 * c).contains(&l)) {
        return invalid("lambda grid must lie in [0, 0.9c]");
    }
    if fields.len() < 2 {
        return Err(Error::Underpowered {
            got: fields.len(),
            need: 2,
        });
    }
    let drop = cache.torus_green().nearest_neighbor_drop();
    let beta = 2.0 * drop * measure.kernel_scale();
    let variance = measure.gaussian_scale().map(|s| 2.0 * drop * s);
    let bond = LinearFunctional::Bond { dir: 0 };
    let mut rows = Vec::new();
    for &lambda in lambdas {
        let data = tilted_rows(fields, &bond, lambda);
        let z = jackknife(&data, |r| vec![r.iter().map(|v| v[0]).sum::<f64>() / r.len() as f64])[0];
        let bound = (1.0 - lambda / c).powf(-beta);
        rows.push(ZLambdaRow {
            lambda,
            z,
            bound,
            gaussian_closed_form: variance.map(|v| (1.0 - 2.0 * lambda * v).powf(-0.5)),
            violated: z.value - bound > 3.0 * z.se,
        });
    }
    let violations = rows.iter().filter(|r| r.violated).count();
    Ok(ZLambdaReport { beta, rows, violations })
}
