//! Continuous-time simulation of the walk and its environment.
//!
//! The walker at `X` jumps to `X + e` at rate `w(ℓ(X) - ℓ(X + e))`, and
//! between jumps only `ℓ(X)` grows, at unit speed. Hence the exit hazard
//! after a sojourn of length `τ` is the polynomial `Σ_e w(u_e + τ)` and its
//! integral `Λ(τ)` is inverted exactly. Along the way the run accumulates
//! the drift integrals `∫ φ̄` (from `s`) and `∫ φ̃` (from `r`) and labels
//! every jump as belonging to the rate-`γ` background (probability `γ/w`)
//! or to the remainder.

use std::io::{Read, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::field::{FieldTag, TorusField};
use crate::gibbs::{sample_measure, GibbsMeasure};
use crate::lattice::{SpectralCache, Torus};
use crate::poly::{horner, Poly};
use crate::rate::RateSpec;
use crate::seed::{replica_seed, rng_from_seed, sub_seed};

/// Local time is re-centred after this many jumps.
pub const RECENTER_EVERY: u64 = 1_000_000;
pub const NEWTON_MAX_ITER: usize = 200;
/// Tolerance on `|Λ(τ*) - E| / (1 + E)`.
pub const INVERSION_TOL: f64 = 1e-12;

/// How the waiting time is drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum JumpSampler {
    /// Exact inversion of the closed-form cumulative hazard.
    #[default]
    Inversion,
    /// Thinning against a local polynomial majorant (cross-check).
    Thinning,
}

#[derive(Clone, Debug)]
pub struct WalkerState {
    pub torus: Torus,
    pub t: f64,
    /// Current site.
    pub site: usize,
    /// Unwrapped displacement `X(t) - X(0)`.
    pub displacement: Vec<i64>,
    /// Part of the displacement carried by background (`γ`) jumps.
    pub background: Vec<i64>,
    /// Absolute local time.
    pub local_time: Vec<f64>,
    pub jump_count: u64,
    pub rng: ChaCha8Rng,
    offsets: Vec<f64>,
    scratch: Vec<f64>,
    hazard: Vec<f64>,
}

/// One jump: waiting time, direction, and whether it was a background jump.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jump {
    pub tau: f64,
    pub dir: usize,
    pub background: bool,
}

impl WalkerState {
    /// Walker at the origin with `ℓ(0, ·) = initial`.
    pub fn new(initial: &TorusField, seed: u64) -> Result<Self> {
        if initial.values.iter().any(|v| !v.is_finite()) {
            return invalid("initial field must be finite");
        }
        let t = initial.torus;
        Ok(WalkerState {
            torus: t,
            t: 0.0,
            site: 0,
            displacement: vec![0; t.d],
            background: vec![0; t.d],
            local_time: initial.values.clone(),
            jump_count: 0,
            rng: rng_from_seed(seed),
            offsets: vec![0.0; t.directions()],
            scratch: Vec::new(),
            hazard: Vec::new(),
        })
    }

    /// `u_e = ℓ(X) - ℓ(X + e)` for every direction.
    pub fn offsets(&self) -> Vec<f64> {
        (0..self.torus.directions())
            .map(|dir| self.local_time[self.site] - self.local_time[self.torus.neighbor(self.site, dir)])
            .collect()
    }

    fn refresh_offsets(&mut self) {
        let here = self.local_time[self.site];
        for dir in 0..self.torus.directions() {
            self.offsets[dir] = here - self.local_time[self.torus.neighbor(self.site, dir)];
        }
    }

    pub fn total_local_time(&self) -> f64 {
        let mut acc = crate::stats::NeumaierSum::default();
        self.local_time.iter().for_each(|&v| acc.add(v));
        acc.sum()
    }

    fn recenter(&mut self) {
        let m = crate::stats::mean(&self.local_time);
        self.local_time.iter_mut().for_each(|v| *v -= m);
    }

    /// Binary dump: `d: u32`, `t: f64`, `site: u64`, `d` × `i64`
    /// displacement, `jump_count: u64`, RNG seed (32 bytes), stream `u64`,
    /// word position `u128`, then the local time in the field format.
    pub fn write_binary<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(&(self.torus.d as u32).to_le_bytes())?;
        out.write_all(&self.t.to_le_bytes())?;
        out.write_all(&(self.site as u64).to_le_bytes())?;
        for x in &self.displacement {
            out.write_all(&x.to_le_bytes())?;
        }
        out.write_all(&self.jump_count.to_le_bytes())?;
        out.write_all(&self.rng.get_seed())?;
        out.write_all(&self.rng.get_stream().to_le_bytes())?;
        out.write_all(&self.rng.get_word_pos().to_le_bytes())?;
        let field = TorusField {
            torus: self.torus,
            values: self.local_time.clone(),
            tag: FieldTag::Dynamics,
            seed: 0,
        };
        field.write_binary(out)
    }

    /// Reads a dump written by [`WalkerState::write_binary`]. The
    /// background split is not persisted and restarts at zero.
    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        use rand::SeedableRng;
        let mut w4 = [0u8; 4];
        let mut w8 = [0u8; 8];
        let mut w16 = [0u8; 16];
        let mut seed = [0u8; 32];
        input.read_exact(&mut w4)?;
        let d = u32::from_le_bytes(w4) as usize;
        input.read_exact(&mut w8)?;
        let t = f64::from_le_bytes(w8);
        input.read_exact(&mut w8)?;
        let site = u64::from_le_bytes(w8) as usize;
        let mut displacement = Vec::with_capacity(d);
        for _ in 0..d {
            input.read_exact(&mut w8)?;
            displacement.push(i64::from_le_bytes(w8));
        }
        input.read_exact(&mut w8)?;
        let jump_count = u64::from_le_bytes(w8);
        input.read_exact(&mut seed)?;
        input.read_exact(&mut w8)?;
        let stream = u64::from_le_bytes(w8);
        input.read_exact(&mut w16)?;
        let word = u128::from_le_bytes(w16);
        let field = TorusField::read_binary(input)?;
        if field.torus.d != d || site >= field.torus.volume() {
            return invalid("walker dump header does not match its field");
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(stream);
        rng.set_word_pos(word);
        let mut state = WalkerState::new(&field, 0)?;
        state.t = t;
        state.site = site;
        state.displacement = displacement;
        state.jump_count = jump_count;
        state.rng = rng;
        Ok(state)
    }
}

/// `η(x) = ℓ(X + x)`: the environment seen from the walker.
pub fn env_of(state: &WalkerState) -> TorusField {
    let t = state.torus;
    TorusField {
        torus: t,
        values: t.sites().map(|x| state.local_time[t.add(state.site, x)]).collect(),
        tag: FieldTag::Dynamics,
        seed: 0,
    }
}

/// Coefficients (in `τ`) of `Λ(τ) = Σ_e ∫₀^τ w(u_e + t) dt`.
pub fn hazard_coeffs(spec: &RateSpec, offsets: &[f64]) -> Vec<f64> {
    let mut scratch = Vec::new();
    let mut out = Vec::new();
    hazard_coeffs_into(spec.w_poly(), offsets, &mut scratch, &mut out);
    out
}

fn hazard_coeffs_into(w: &Poly, offsets: &[f64], scratch: &mut Vec<f64>, out: &mut Vec<f64>) {
    out.clear();
    out.resize(w.coeffs().len() + 1, 0.0);
    for &u in offsets {
        w.shifted_into(u, scratch);
        for (k, c) in scratch.iter().enumerate() {
            out[k + 1] += c / (k + 1) as f64;
        }
    }
}

/// `Λ(τ)` for the current sojourn.
pub fn cumulative_hazard(spec: &RateSpec, state: &WalkerState, tau: f64) -> f64 {
    horner(&hazard_coeffs(spec, &state.offsets()), tau)
}

fn derivative_at(coeffs: &[f64], x: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (k, &c)| acc * x + k as f64 * c)
}

/// Solves `Λ(τ) = target` for the increasing polynomial `Λ` with `Λ(0) = 0`
/// and `Λ' ≥ slope_floor`, by safeguarded Newton with a bisection fallback.
pub fn invert_hazard(coeffs: &[f64], target: f64, slope_floor: f64) -> Result<f64> {
    if target == 0.0 {
        return Ok(0.0);
    }
    let tol = INVERSION_TOL * 0.1 * (1.0 + target);
    let (mut lo, mut hi) = (0.0, target / slope_floor);
    let mut tau = (target / derivative_at(coeffs, 0.0)).min(hi);
    for _ in 0..NEWTON_MAX_ITER {
        let f = horner(coeffs, tau) - target;
        if f.abs() <= tol {
            return Ok(tau);
        }
        if f > 0.0 {
            hi = tau;
        } else {
            lo = tau;
        }
        let next = tau - f / derivative_at(coeffs, tau);
        tau = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
    }
    // bisection to the bottom of the bracket
    for _ in 0..2000 {
        tau = 0.5 * (lo + hi);
        let f = horner(coeffs, tau) - target;
        if f.abs() <= tol || hi - lo <= f64::EPSILON * hi {
            break;
        }
        if f > 0.0 {
            hi = tau;
        } else {
            lo = tau;
        }
    }
    let f = horner(coeffs, tau) - target;
    if f.abs() <= INVERSION_TOL * (1.0 + target) {
        Ok(tau)
    } else {
        Err(Error::Numeric(format!(
            "hazard inversion failed: residual {f:e} at target {target}"
        )))
    }
}

fn choose_direction(spec: &RateSpec, offsets: &[f64], tau: f64, rng: &mut ChaCha8Rng) -> (usize, f64) {
    let rates: Vec<f64> = offsets.iter().map(|&u| spec.eval_w(u + tau)).collect();
    let total: f64 = rates.iter().sum();
    let mut target = rng.random::<f64>() * total;
    for (dir, &r) in rates.iter().enumerate() {
        if target < r {
            return (dir, r);
        }
        target -= r;
    }
    let last = rates.len() - 1;
    (last, rates[last])
}

/// Draws the waiting time and direction of the next jump without moving.
/// The background label is drawn with probability `γ / w` at the jump.
pub fn sample_jump(spec: &RateSpec, state: &mut WalkerState, sampler: JumpSampler) -> Result<Jump> {
    state.refresh_offsets();
    let floor = state.torus.directions() as f64 * spec.gamma;
    let tau = match sampler {
        JumpSampler::Inversion => {
            hazard_coeffs_into(spec.w_poly(), &state.offsets, &mut state.scratch, &mut state.hazard);
            let e: f64 = Exp1.sample(&mut state.rng);
            invert_hazard(&state.hazard, e, floor)?
        }
        JumpSampler::Thinning => thinning_wait(spec, state)?,
    };
    let (dir, rate) = choose_direction(spec, &state.offsets, tau, &mut state.rng);
    let background = state.rng.random::<f64>() * rate < spec.gamma;
    Ok(Jump { tau, dir, background })
}

/// Ogata thinning: on a window `[τ₀, τ₀ + h]` the hazard polynomial is
/// bounded by the absolute sum of its Taylor coefficients at `τ₀`.
fn thinning_wait(spec: &RateSpec, state: &mut WalkerState) -> Result<f64> {
    let mut rate_coeffs = vec![0.0; spec.w_poly().coeffs().len().max(1)];
    for &u in &state.offsets {
        spec.w_poly().shifted_into(u, &mut state.scratch);
        for (k, c) in state.scratch.iter().enumerate() {
            rate_coeffs[k] += c;
        }
    }
    let rate = Poly::new(rate_coeffs);
    let mut tau0 = 0.0;
    for _ in 0..10_000_000u64 {
        let local = rate.shifted(tau0);
        let h = 1.0 / local.eval(0.0);
        let bound: f64 = local
            .coeffs()
            .iter()
            .enumerate()
            .map(|(k, c)| c.abs() * h.powi(k as i32))
            .sum();
        let e: f64 = Exp1.sample(&mut state.rng);
        let cand = e / bound;
        if cand > h {
            tau0 += h;
            continue;
        }
        let tau = tau0 + cand;
        if state.rng.random::<f64>() * bound <= rate.eval(tau) {
            return Ok(tau);
        }
        tau0 = tau;
    }
    Err(Error::Numeric("thinning made no progress".into()))
}

/// Advances the state through one jump.
pub fn step(spec: &RateSpec, state: &mut WalkerState, sampler: JumpSampler) -> Result<Jump> {
    let jump = sample_jump(spec, state, sampler)?;
    apply_jump(state, jump);
    Ok(jump)
}

fn apply_jump(state: &mut WalkerState, jump: Jump) {
    state.local_time[state.site] += jump.tau;
    state.t += jump.tau;
    let axis = jump.dir / 2;
    let sign = if jump.dir.is_multiple_of(2) { 1 } else { -1 };
    state.displacement[axis] += sign;
    if jump.background {
        state.background[axis] += sign;
    }
    state.site = state.torus.neighbor(state.site, jump.dir);
    state.jump_count += 1;
    if state.jump_count.is_multiple_of(RECENTER_EVERY) {
        state.recenter();
    }
}

/// `∫₀^τ p(u + t) dt`.
fn shifted_integral(p: &Poly, u: f64, tau: f64, buf: &mut Vec<f64>) -> f64 {
    p.shifted_into(u, buf);
    tau * buf
        .iter()
        .enumerate()
        .rev()
        .fold(0.0, |acc, (k, &c)| acc * tau + c / (k + 1) as f64)
}

/// Adds `∫₀^τ φ̄` and `∫₀^τ φ̃` over a sojourn with offsets `u`.
fn accumulate_drift(spec: &RateSpec, u: &[f64], tau: f64, bar: &mut [f64], tilde: &mut [f64], buf: &mut Vec<f64>) {
    for l in 0..bar.len() {
        let (up, down) = (u[2 * l], u[2 * l + 1]);
        bar[l] += shifted_integral(spec.s_poly(), up, tau, buf) - shifted_integral(spec.s_poly(), down, tau, buf);
        tilde[l] += shifted_integral(spec.r_poly(), up, tau, buf) - shifted_integral(spec.r_poly(), down, tau, buf);
    }
}

/// `φ̄_l(η) = s(η(0) - η(e_l)) - s(η(0) - η(-e_l))`.
pub fn phi_bar(spec: &RateSpec, env: &TorusField) -> Vec<f64> {
    (0..env.torus.d)
        .map(|l| spec.s(env.gradient(0, 2 * l)) - spec.s(env.gradient(0, 2 * l + 1)))
        .collect()
}

/// `φ̃_l(η) = r(η(0) - η(e_l)) - r(η(0) - η(-e_l))`.
pub fn phi_tilde(spec: &RateSpec, env: &TorusField) -> Vec<f64> {
    (0..env.torus.d)
        .map(|l| spec.r(env.gradient(0, 2 * l)) - spec.r(env.gradient(0, 2 * l + 1)))
        .collect()
}

/// Gradients recorded in environment snapshots: `η(0) - η(e)` for all `2d`
/// directions, then `η(e₁) - η(2e₁)`.
pub fn snapshot_labels(d: usize) -> Vec<String> {
    let mut out: Vec<String> = (0..2 * d)
        .map(|dir| format!("{}e{}", if dir % 2 == 0 { "+" } else { "-" }, dir / 2 + 1))
        .collect();
    out.push("far+e1".into());
    out
}

fn snapshot(state: &WalkerState, extra_growth: f64) -> Vec<f64> {
    let t = state.torus;
    let x = state.site;
    let here = state.local_time[x] + extra_growth;
    let mut out: Vec<f64> = (0..t.directions())
        .map(|dir| here - state.local_time[t.neighbor(x, dir)])
        .collect();
    let y = t.neighbor(x, 0);
    out.push(state.local_time[y] - state.local_time[t.neighbor(y, 0)]);
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub horizon: f64,
    /// Strictly increasing observation times in `[0, horizon]`.
    pub sample_times: Vec<f64>,
    pub seed: u64,
    pub sampler: JumpSampler,
    pub snapshots: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ObservationSeries {
    pub times: Vec<f64>,
    pub displacement: Vec<Vec<i64>>,
    /// Background part `N(t)` of the displacement.
    pub background: Vec<Vec<i64>>,
    pub comp_bar: Vec<Vec<f64>>,
    pub comp_tilde: Vec<Vec<f64>>,
    /// Gradient snapshots (see [`snapshot_labels`]) at each sample time.
    pub snapshots: Option<Vec<Vec<f64>>>,
    pub jumps: u64,
    /// Largest `|X_l(t)|` seen at a sample time; compare with `L/4`.
    pub max_abs_displacement: i64,
}

#[derive(Serialize)]
struct CheckpointRecord<'a> {
    t: f64,
    #[serde(rename = "X")]
    x: &'a [i64],
    comp_bar: &'a [f64],
    comp_tilde: &'a [f64],
}

impl ObservationSeries {
    /// One JSON object per sample time.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for k in 0..self.times.len() {
            let rec = CheckpointRecord {
                t: self.times[k],
                x: &self.displacement[k],
                comp_bar: &self.comp_bar[k],
                comp_tilde: &self.comp_tilde[k],
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Index of the sample time equal to `t`.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| (s - t).abs() <= 1e-9 * (1.0 + t))
    }

    /// Wound more than a quarter of the torus in some coordinate.
    pub fn wound(&self, l: usize) -> bool {
        4 * self.max_abs_displacement >= l as i64
    }
}

fn check_run(initial: &TorusField, cfg: &RunConfig) -> Result<()> {
    if !(cfg.horizon > 0.0 && cfg.horizon.is_finite()) {
        return invalid("horizon must be positive");
    }
    if initial.values.iter().any(|v| !v.is_finite()) {
        return invalid("initial field must be finite");
    }
    let s = &cfg.sample_times;
    if s.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("sample times must be strictly increasing");
    }
    if s.iter().any(|&t| !(0.0..=cfg.horizon).contains(&t)) {
        return invalid("sample times must lie in [0, horizon]");
    }
    Ok(())
}

/// Simulates to `cfg.horizon` from `ℓ(0, ·) = initial` with the walker at
/// the origin. Returns the observations and the final state.
pub fn run(initial: &TorusField, spec: &RateSpec, cfg: &RunConfig) -> Result<(ObservationSeries, WalkerState)> {
    check_run(initial, cfg)?;
    let mut state = WalkerState::new(initial, cfg.seed)?;
    let d = state.torus.d;
    let mut series = ObservationSeries {
        snapshots: cfg.snapshots.then(Vec::new),
        ..Default::default()
    };
    let (mut bar, mut tilde) = (vec![0.0; d], vec![0.0; d]);
    let mut buf = Vec::new();
    let mut next = 0;
    loop {
        let jump = sample_jump(spec, &mut state, cfg.sampler)?;
        let end = state.t + jump.tau;
        // sample points inside this sojourn see the partially grown ℓ(X)
        while next < cfg.sample_times.len() && cfg.sample_times[next] < end {
            let ts = cfg.sample_times[next];
            let dt = ts - state.t;
            let (mut b, mut m) = (bar.clone(), tilde.clone());
            accumulate_drift(spec, &state.offsets, dt, &mut b, &mut m, &mut buf);
            series.times.push(ts);
            series.displacement.push(state.displacement.clone());
            series.background.push(state.background.clone());
            series.comp_bar.push(b);
            series.comp_tilde.push(m);
            if let Some(snaps) = series.snapshots.as_mut() {
                snaps.push(snapshot(&state, dt));
            }
            let reach = state.displacement.iter().map(|x| x.abs()).max().unwrap_or(0);
            series.max_abs_displacement = series.max_abs_displacement.max(reach);
            next += 1;
        }
        if end > cfg.horizon {
            let dt = cfg.horizon - state.t;
            accumulate_drift(spec, &state.offsets, dt, &mut bar, &mut tilde, &mut buf);
            state.local_time[state.site] += dt;
            state.t = cfg.horizon;
            break;
        }
        accumulate_drift(spec, &state.offsets, jump.tau, &mut bar, &mut tilde, &mut buf);
        apply_jump(&mut state, jump);
    }
    series.jumps = state.jump_count;
    Ok((series, state))
}

/// Initial profile of an ensemble run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Start {
    /// Drawn from the invariant Gibbs measure.
    #[default]
    Stationary,
    /// `ℓ(0, ·) ≡ 0`.
    Flat,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleConfig {
    pub replicas: usize,
    pub master_seed: u64,
    pub horizon: f64,
    pub sample_times: Vec<f64>,
    pub start: Start,
    pub sampler: JumpSampler,
    pub snapshots: bool,
    /// Heat-bath sweeps for non-Gaussian stationary starts.
    pub mcmc_sweeps: usize,
}

/// Initial field of replica `i`.
pub fn initial_field(spec: &RateSpec, cache: &SpectralCache, cfg: &EnsembleConfig, i: usize) -> Result<TorusField> {
    match cfg.start {
        Start::Flat => Ok(TorusField::zeros(cache.torus)),
        Start::Stationary if spec.is_interaction_free() => Ok(TorusField::zeros(cache.torus)),
        Start::Stationary => {
            let measure = GibbsMeasure::stationary(spec.clone())?;
            let seed = replica_seed(sub_seed(cfg.master_seed, "initial-field"), i as u64);
            sample_measure(&measure, cache, cfg.mcmc_sweeps, seed)
        }
    }
}

/// Runs all replicas in parallel (on the current rayon pool); the output
/// order is the replica order regardless of scheduling.
pub fn run_ensemble(spec: &RateSpec, cache: &SpectralCache, cfg: &EnsembleConfig) -> Result<Vec<ObservationSeries>> {
    if cfg.replicas == 0 {
        return invalid("replica count must be at least 1");
    }
    // the jump sampler relies on w ≥ γ > 0 along every sojourn
    let report = crate::rate::validate(spec);
    if let Some(c) = report.condition("ellipticity").filter(|c| !c.passed) {
        return invalid(format!("rate function is not elliptic ({})", c.detail));
    }
    let walk_master = sub_seed(cfg.master_seed, "walk");
    let out: Result<Vec<ObservationSeries>> = (0..cfg.replicas)
        .into_par_iter()
        .map(|i| {
            let init = initial_field(spec, cache, cfg, i)?;
            let rc = RunConfig {
                horizon: cfg.horizon,
                sample_times: cfg.sample_times.clone(),
                seed: replica_seed(walk_master, i as u64),
                sampler: cfg.sampler,
                snapshots: cfg.snapshots,
            };
            run(&init, spec, &rc).map(|(s, _)| s)
        })
        .collect();
    let out = out?;
    let wound = out.iter().filter(|s| s.wound(cache.torus.l)).count();
    if wound > 0 {
        log::warn!(
            "{wound}/{} replicas reached |X_l| ≥ L/4 = {}; the walk sees its own periodic images",
            out.len(),
            cache.torus.l as f64 / 4.0
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::sample_gff;
    use crate::stats::{ks_test, mean_se};

    fn torus() -> Torus {
        Torus::new(3, 8).unwrap()
    }

    #[test]
    fn env_at_origin_is_identity_and_shifts_with_jumps() {
        let cache = SpectralCache::new(torus());
        let f = sample_gff(&cache, 3);
        let mut s = WalkerState::new(&f, 1).unwrap();
        assert_eq!(env_of(&s).values, f.values);
        let spec = RateSpec::quartic_example();
        let before = env_of(&s);
        let j = step(&spec, &mut s, JumpSampler::Inversion).unwrap();
        let after = env_of(&s);
        let t = s.torus;
        let e = t.neighbor(0, j.dir);
        for x in t.sites() {
            let y = t.add(e, x);
            let grown = if y == 0 { j.tau } else { 0.0 };
            assert_eq!(after.values[x], before.values[y] + grown);
        }
    }

    #[test]
    fn interaction_free_hazard_is_linear() {
        let spec = RateSpec::interaction_free(0.7);
        let s = WalkerState::new(&TorusField::zeros(torus()), 0).unwrap();
        for tau in [0.0, 0.3, 2.0] {
            assert!((cumulative_hazard(&spec, &s, tau) - 6.0 * 0.7 * tau).abs() < 1e-14);
        }
    }

    #[test]
    fn hazard_derivative_matches_rates() {
        let spec = RateSpec::quartic_example();
        let cache = SpectralCache::new(torus());
        let s = WalkerState::new(&sample_gff(&cache, 8), 0).unwrap();
        let u = s.offsets();
        for tau in [0.01, 0.2, 1.3] {
            let h = 1e-6;
            let fd = (cumulative_hazard(&spec, &s, tau + h) - cumulative_hazard(&spec, &s, tau - h)) / (2.0 * h);
            let exact: f64 = u.iter().map(|&v| spec.eval_w(v + tau)).sum();
            assert!((fd - exact).abs() < 1e-7 * exact.max(1.0), "{fd} {exact}");
        }
    }

    #[test]
    fn quartic_hazard_from_flat_profile() {
        let spec = RateSpec::quartic_example();
        let s0 = spec.s_coeffs[0];
        let s = WalkerState::new(&TorusField::zeros(torus()), 0).unwrap();
        for tau in [0.1f64, 0.7, 1.9] {
            let want = 6.0 * (tau + tau.powi(5) / 5.0 + s0 * tau + tau * tau / 2.0);
            assert!((cumulative_hazard(&spec, &s, tau) - want).abs() < 1e-12 * want);
        }
    }

    #[test]
    fn inversion_residual_and_monotonicity() {
        let spec = RateSpec::quartic_example();
        let cache = SpectralCache::new(torus());
        let s = WalkerState::new(&sample_gff(&cache, 5), 0).unwrap();
        let c = hazard_coeffs(&spec, &s.offsets());
        let mut rng = rng_from_seed(4);
        let mut prev = (0.0, 0.0);
        let mut es: Vec<f64> = (0..100_000).map(|_| Exp1.sample(&mut rng)).collect();
        es.sort_by(f64::total_cmp);
        for e in es {
            let tau = invert_hazard(&c, e, 6.0).unwrap();
            assert!((horner(&c, tau) - e).abs() <= 1e-10 * (1.0 + e));
            if e > prev.0 {
                assert!(tau > prev.1);
            }
            prev = (e, tau);
        }
    }

    #[test]
    fn homogeneous_waiting_times_and_directions() {
        let spec = RateSpec::interaction_free(1.0);
        let mut s = WalkerState::new(&TorusField::zeros(torus()), 11).unwrap();
        let mut waits = Vec::new();
        let mut counts = [0usize; 6];
        for _ in 0..100_000 {
            let j = sample_jump(&spec, &mut s, JumpSampler::Inversion).unwrap();
            waits.push(j.tau);
            counts[j.dir] += 1;
            assert!(j.background);
        }
        assert!(ks_test(&waits, |x| 1.0 - (-6.0 * x).exp()).p_value > 0.01);
        let p: f64 = 1.0 / 6.0;
        let sd = (100_000.0 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - 100_000.0 * p).abs() < 4.0 * sd);
        }
    }

    #[test]
    fn flat_quartic_directions_are_uniform() {
        let spec = RateSpec::quartic_example();
        let flat = WalkerState::new(&TorusField::zeros(torus()), 12).unwrap();
        let mut counts = [0usize; 6];
        let mut s = flat.clone();
        for _ in 0..100_000 {
            s.local_time.clone_from(&flat.local_time);
            counts[sample_jump(&spec, &mut s, JumpSampler::Inversion).unwrap().dir] += 1;
        }
        let p: f64 = 1.0 / 6.0;
        let sd = (100_000.0 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - 100_000.0 * p).abs() < 4.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn thinning_agrees_with_inversion() {
        let spec = RateSpec::quartic_example();
        let cache = SpectralCache::new(torus());
        let base = WalkerState::new(&sample_gff(&cache, 21), 0).unwrap();
        let draw = |sampler, seed| {
            let mut s = base.clone();
            s.rng = rng_from_seed(seed);
            (0..20_000)
                .map(|_| sample_jump(&spec, &mut s, sampler).unwrap().tau)
                .collect::<Vec<_>>()
        };
        let a = draw(JumpSampler::Inversion, 1);
        let b = draw(JumpSampler::Thinning, 2);
        assert!(crate::stats::ks_two_sample(&a, &b).p_value > 0.01);
    }

    #[test]
    fn step_bookkeeping() {
        let spec = RateSpec::quartic_example();
        let cache = SpectralCache::new(torus());
        let mut s = WalkerState::new(&sample_gff(&cache, 2), 9).unwrap();
        let m0 = s.total_local_time();
        let mut sum = vec![0i64; 3];
        for _ in 0..2000 {
            let before = s.displacement.clone();
            let j = step(&spec, &mut s, JumpSampler::Inversion).unwrap();
            let delta: i64 = s.displacement.iter().zip(&before).map(|(a, b)| (a - b).abs()).sum();
            assert_eq!(delta, 1);
            let u = s.torus.unit(j.dir);
            sum.iter_mut().zip(&u).for_each(|(a, b)| *a += b);
        }
        assert_eq!(sum, s.displacement);
        assert!((s.total_local_time() - m0 - s.t).abs() < 1e-9 * s.t);
        let coords: Vec<i64> = s.displacement.clone();
        assert_eq!(s.site, s.torus.index_of(&coords));
    }

    #[test]
    fn phi_formulas() {
        let spec = RateSpec::new(1.0, 1.0, vec![0.0, 1.0], vec![0.25, 0.0, 1.0]).unwrap();
        let cache = SpectralCache::new(torus());
        let f = sample_gff(&cache, 4);
        let t = f.torus;
        let tilde = phi_tilde(&spec, &f);
        for l in 0..3 {
            let want = f.values[t.neighbor(0, 2 * l + 1)] - f.values[t.neighbor(0, 2 * l)];
            assert!((tilde[l] - want).abs() < 1e-13);
        }
        let z = TorusField::zeros(t);
        assert_eq!(phi_bar(&spec, &z), vec![0.0; 3]);
        assert_eq!(phi_tilde(&spec, &z), vec![0.0; 3]);
    }

    /// The drift integrals equal a fine Riemann sum of `φ(η(s))` along the
    /// recorded path.
    #[test]
    fn drift_integrals_match_pathwise_quadrature() {
        let spec = RateSpec::quartic_example();
        let cache = SpectralCache::new(torus());
        let init = sample_gaussian_half(&cache);
        let horizon = 3.0;
        let cfg = RunConfig {
            horizon,
            sample_times: vec![1.0, horizon],
            seed: 5,
            sampler: JumpSampler::Inversion,
            snapshots: false,
        };
        let (series, _) = run(&init, &spec, &cfg).unwrap();
        // replay the same path jump by jump
        let mut s = WalkerState::new(&init, 5).unwrap();
        let mut acc = [0.0; 3];
        let n = 400;
        loop {
            let j = sample_jump(&spec, &mut s, JumpSampler::Inversion).unwrap();
            let len = j.tau.min(horizon - s.t);
            let h = len / n as f64;
            for k in 0..n {
                let mut env = env_of(&s);
                env.values[0] += (k as f64 + 0.5) * h;
                let b = phi_bar(&spec, &env);
                let m = phi_tilde(&spec, &env);
                for l in 0..3 {
                    acc[l] += h * (b[l] + m[l]);
                }
            }
            if s.t + j.tau > horizon {
                break;
            }
            apply_jump(&mut s, j);
        }
        for l in 0..3 {
            let got = series.comp_bar[1][l] + series.comp_tilde[1][l];
            assert!((got - acc[l]).abs() < 1e-4 * (1.0 + acc[l].abs()), "{got} {}", acc[l]);
        }
    }

    fn sample_gaussian_half(cache: &SpectralCache) -> TorusField {
        crate::gibbs::sample_gaussian(cache, 0.5, 77)
    }

    #[test]
    fn srw_mean_square_displacement() {
        let spec = RateSpec::interaction_free(1.0);
        let cache = SpectralCache::new(Torus::new(3, 16).unwrap());
        let cfg = EnsembleConfig {
            replicas: 1000,
            master_seed: 3,
            horizon: 100.0,
            sample_times: vec![100.0],
            start: Start::Flat,
            sampler: JumpSampler::Inversion,
            snapshots: false,
            mcmc_sweeps: 0,
        };
        let runs = run_ensemble(&spec, &cache, &cfg).unwrap();
        let sq: Vec<f64> = runs
            .iter()
            .map(|s| s.displacement[0].iter().map(|x| (x * x) as f64).sum())
            .collect();
        let (m, se) = mean_se(&sq);
        assert!((m - 600.0).abs() < 3.0 * se, "{m} ± {se}");
    }

    #[test]
    fn ensemble_is_deterministic() {
        let spec = RateSpec::quartic_example();
        let cache = SpectralCache::new(torus());
        let cfg = EnsembleConfig {
            replicas: 8,
            master_seed: 1,
            horizon: 5.0,
            sample_times: vec![0.0, 2.5, 5.0],
            start: Start::Stationary,
            sampler: JumpSampler::Inversion,
            snapshots: true,
            mcmc_sweeps: 20,
        };
        let a = run_ensemble(&spec, &cache, &cfg).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run_ensemble(&spec, &cache, &cfg).unwrap());
        assert_eq!(a, b);
        assert_eq!(a[0].times, vec![0.0, 2.5, 5.0]);
        assert_eq!(a[0].displacement[0], vec![0, 0, 0]);
    }

    #[test]
    fn dump_round_trip() {
        let spec = RateSpec::quartic_example();
        let cache = SpectralCache::new(torus());
        let mut s = WalkerState::new(&sample_gff(&cache, 1), 3).unwrap();
        for _ in 0..50 {
            step(&spec, &mut s, JumpSampler::Inversion).unwrap();
        }
        let mut buf = Vec::new();
        s.write_binary(&mut buf).unwrap();
        let mut r = WalkerState::read_binary(buf.as_slice()).unwrap();
        assert_eq!(r.t, s.t);
        assert_eq!(r.displacement, s.displacement);
        assert_eq!(r.local_time, s.local_time);
        let a = step(&spec, &mut s, JumpSampler::Inversion).unwrap();
        let b = step(&spec, &mut r, JumpSampler::Inversion).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_runs() {
        let spec = RateSpec::quartic_example();
        let init = TorusField::zeros(torus());
        let mut cfg = RunConfig {
            horizon: 0.0,
            sample_times: vec![],
            seed: 0,
            sampler: JumpSampler::Inversion,
            snapshots: false,
        };
        assert!(run(&init, &spec, &cfg).is_err());
        cfg.horizon = 1.0;
        cfg.sample_times = vec![0.5, 0.5];
        assert!(run(&init, &spec, &cfg).is_err());
        let mut bad = init.clone();
        bad.values[3] = f64::NAN;
        cfg.sample_times = vec![];
        assert!(run(&bad, &spec, &cfg).is_err());
    }
}
