//! Task orchestration, persistence and reports.
//!
//! Every task returns a [`TaskReport`] with named pass/fail checks and a
//! JSON `results` tree. Files are written through a temporary file in the
//! target directory and renamed into place, so an interrupted run never
//! leaves a partial file at a final path. Wall-clock data lives only in
//! `metadata.wall_clock`; everything else is a function of the config.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, Task};
use crate::dynamics::{run_ensemble, EnsembleConfig, ObservationSeries, Start};
use crate::error::{Error, Result};
use crate::estimators::{self, EnsembleStats};
use crate::field::TorusField;
use crate::fock::gsc::{conditions_at, gsc_integral_bound, gsc_threshold, GscParams, SLACK};
use crate::fock::norm::{
    annihilation_norm, creation_norm, inv_sqrt_laplacian_creation_norm, multiplier_norm, s1_sector_norm_bound,
};
use crate::fock::FockSpace;
use crate::gibbs::{brascamp_lieb_check, sample_measure, z_lambda_bound_check, GibbsMeasure, LinearFunctional};
use crate::lattice::{SpectralCache, Torus};
use crate::rate::validate;
use crate::seed::{replica_seed, sub_seed};

/// Exit code when every check passes.
pub const EXIT_PASS: i32 = 0;
/// Exit code when a statistical or numerical check fails.
pub const EXIT_CHECK_FAILED: i32 = 1;
/// Exit code for configuration, numeric or I/O errors.
pub const EXIT_ERROR: i32 = 2;

/// Waiting times drawn for the interaction-free KS test.
pub const KS_DRAWS: usize = 100_000;
pub const KS_LEVEL: f64 = 0.01;
/// Tolerance on power-iteration norm identities.
pub const NORM_TOL: f64 = 1e-6;
/// Tolerance on adjointness residuals.
pub const ADJOINT_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct TaskReport {
    pub task: Task,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub results: Value,
}

impl TaskReport {
    fn new(task: Task, checks: Vec<Check>, results: Value) -> Self {
        TaskReport {
            task,
            passed: checks.iter().all(|c| c.passed),
            checks,
            results,
        }
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed {
            EXIT_PASS
        } else {
            EXIT_CHECK_FAILED
        }
    }
}

#[derive(Default)]
struct Checks(Vec<Check>);

impl Checks {
    fn push(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.0.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }
}

/// Writes `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    write_atomic_with(path, |w| {
        w.write_all(bytes)?;
        Ok(())
    })
}

/// Streams into a temporary file next to `path`, then renames it.
pub fn write_atomic_with<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        fill(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(fs::Permissions::from_mode(0o644))?;
    }
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// SHA-256 of the canonical JSON form of the config (output paths are not
/// part of it).
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let canon = serde_json::to_vec(cfg).expect("config serialises");
    Sha256::digest(&canon).iter().map(|b| format!("{b:02x}")).collect()
}

/// The report document: metadata, the config echo and the task report.
pub fn report_document(cfg: &ExperimentConfig, report: &TaskReport, started: SystemTime, elapsed: f64) -> Value {
    let ts = started
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    json!({
        "metadata": {
            "crate_version": env!("CARGO_PKG_VERSION"),
            "task": report.task,
            "seed": cfg.run.seed,
            "config_sha256": config_hash(cfg),
            "wall_clock": { "timestamp_unix": ts, "elapsed_seconds": elapsed },
        },
        "config": cfg,
        "report": report,
    })
}

/// Runs `task`, writing its data files and `<task>.json` under `out`.
pub fn execute(cfg: &ExperimentConfig, task: Task, out: &Path) -> Result<TaskReport> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let report = run_task(cfg, task, Some(out))?;
    let doc = report_document(cfg, &report, started, clock.elapsed().as_secs_f64());
    let mut text = serde_json::to_vec_pretty(&doc)?;
    text.push(b'\n');
    write_atomic(&out.join(format!("{}.json", task.name())), &text)?;
    log::info!(
        "{task}: {} ({} checks)",
        if report.passed { "pass" } else { "FAIL" },
        report.checks.len()
    );
    Ok(report)
}

/// Runs `task` and returns its report; data files go to `out` if given.
pub fn run_task(cfg: &ExperimentConfig, task: Task, out: Option<&Path>) -> Result<TaskReport> {
    let ctx = |e: Error| match e {
        Error::InvalidInput(m) => Error::InvalidInput(format!("{task}: {m}")),
        Error::Numeric(m) => Error::Numeric(format!("{task}: {m}")),
        other => other,
    };
    match task {
        Task::SampleGibbs => sample_gibbs(cfg, out),
        Task::RunWalk => run_walk(cfg, out),
        Task::Estimate => estimate(cfg, out),
        Task::FockCheck => fock_check(cfg),
        Task::GscThreshold => threshold(cfg),
        Task::FullVerify => full_verify(cfg, out),
    }
    .map_err(ctx)
}

fn torus(cfg: &ExperimentConfig) -> Result<Torus> {
    Torus::new(cfg.lattice.d, cfg.lattice.l)
}

fn sample_gibbs(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<TaskReport> {
    let spec = &cfg.model;
    let cache = SpectralCache::new(torus(cfg)?);
    let mut checks = Checks::default();
    let master = cfg.run.seed;

    let gff = estimators::gff_covariance_check(
        &cache,
        cfg.run.replicas,
        sub_seed(master, "gff"),
        &estimators::default_covariance_points(cfg.lattice.d, cfg.lattice.l),
    )?;
    let worst = gff
        .points
        .iter()
        .map(|p| p.empirical.z(p.green).abs())
        .fold(0.0, f64::max);
    checks.push(
        "gff-covariance",
        gff.passed,
        format!("max |z| = {worst:.2} over {} points", gff.points.len()),
    );
    checks.push(
        "green-drop-sum",
        (gff.drop_sum - gff.drop_sum_exact).abs() <= 1e-12,
        format!("{:.15} vs {:.15}", gff.drop_sum, gff.drop_sum_exact),
    );

    if spec.r_poly().is_zero() {
        return Ok(TaskReport::new(
            Task::SampleGibbs,
            checks.0,
            json!({ "gff": gff, "stationary_measure": "none: r = 0" }),
        ));
    }
    let measure = GibbsMeasure::stationary(spec.clone())?;
    let seed0 = sub_seed(master, "gibbs");
    let fields: Vec<TorusField> = (0..cfg.run.replicas)
        .into_par_iter()
        .map(|i| sample_measure(&measure, &cache, cfg.run.mcmc_sweeps, replica_seed(seed0, i as u64)))
        .collect::<Result<_>>()?;
    if let Some(dir) = out {
        write_atomic_with(&dir.join("fields.bin"), |w| {
            for f in &fields {
                f.write_binary(&mut *w)?;
            }
            Ok(())
        })?;
        write_atomic_with(&dir.join("green.csv"), |w| Ok(cache.write_csv(w)?))?;
    }

    let c = spec.c;
    let mut bl = Vec::new();
    for functional in LinearFunctional::family(cfg.lattice.d) {
        for &frac in &cfg.checks.lambdas {
            bl.push(brascamp_lieb_check(&fields, &measure, &cache, &functional, frac * c)?);
        }
    }
    let violations = bl.iter().filter(|r| r.violated).count();
    checks.push(
        "brascamp-lieb",
        violations == 0,
        format!(
            "{violations} of {} (functional, λ) pairs violate by more than 3 SE",
            bl.len()
        ),
    );
    let lambdas: Vec<f64> = cfg.checks.lambdas.iter().map(|f| f * c).collect();
    let z = z_lambda_bound_check(&fields, &measure, &cache, &lambdas)?;
    checks.push(
        "z-lambda-bound",
        z.violations == 0,
        format!("beta = {:.6}, {} violations", z.beta, z.violations),
    );
    if measure.gaussian_scale().is_some() {
        let bad = z
            .rows
            .iter()
            .filter(|r| {
                r.gaussian_closed_form
                    .is_some_and(|g| !r.z.within(g, estimators::SE_BAND))
            })
            .count();
        checks.push(
            "z-lambda-gaussian-closed-form",
            bad == 0,
            format!("{bad} rows outside 3 SE"),
        );
    }
    Ok(TaskReport::new(
        Task::SampleGibbs,
        checks.0,
        json!({
            "coupling": measure.coupling,
            "fields": fields.len(),
            "gff": gff,
            "brascamp_lieb": bl,
            "z_lambda": z,
        }),
    ))
}

fn ensemble_config(cfg: &ExperimentConfig, snapshots: bool) -> EnsembleConfig {
    EnsembleConfig {
        replicas: cfg.run.replicas,
        master_seed: cfg.run.seed,
        horizon: cfg.run.horizon,
        sample_times: cfg.sample_grid(),
        start: if cfg.model.is_interaction_free() {
            Start::Flat
        } else {
            cfg.run.start
        },
        sampler: cfg.run.sampler,
        snapshots,
        mcmc_sweeps: cfg.run.mcmc_sweeps,
    }
}

#[derive(Serialize)]
struct TrajectoryRecord<'a> {
    replica: usize,
    t: f64,
    #[serde(rename = "X")]
    x: &'a [i64],
    #[serde(rename = "N")]
    n: &'a [i64],
    comp_bar: &'a [f64],
    comp_tilde: &'a [f64],
}

fn write_trajectories(path: &Path, series: &[ObservationSeries]) -> Result<()> {
    write_atomic_with(path, |w| {
        for (i, s) in series.iter().enumerate() {
            for k in 0..s.times.len() {
                let rec = TrajectoryRecord {
                    replica: i,
                    t: s.times[k],
                    x: &s.displacement[k],
                    n: &s.background[k],
                    comp_bar: &s.comp_bar[k],
                    comp_tilde: &s.comp_tilde[k],
                };
                serde_json::to_writer(&mut *w, &rec)?;
                w.write_all(b"\n")?;
            }
        }
        Ok(())
    })
}

fn run_walk(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<TaskReport> {
    let cache = SpectralCache::new(torus(cfg)?);
    let series = run_ensemble(&cfg.model, &cache, &ensemble_config(cfg, false))?;
    if let Some(dir) = out {
        write_trajectories(&dir.join("trajectories.jsonl"), &series)?;
    }
    let jumps: Vec<f64> = series.iter().map(|s| s.jumps as f64).collect();
    let wound = series.iter().filter(|s| s.wound(cfg.lattice.l)).count();
    let stats = EnsembleStats::from_series(&series)?;
    let last = stats.times.len() - 1;
    let msd: f64 = (0..stats.d).map(|a| stats.second_moment(last, a).value).sum();
    Ok(TaskReport::new(
        Task::RunWalk,
        Vec::new(),
        json!({
            "replicas": series.len(),
            "sample_times": stats.times,
            "mean_jumps": crate::stats::mean(&jumps),
            "wound_replicas": wound,
            "msd_at_T": msd,
        }),
    ))
}

fn write_msd_csv(path: &Path, series: &[ObservationSeries]) -> Result<()> {
    let stats = EnsembleStats::from_series(series)?;
    write_atomic_with(path, |w| {
        let cols: Vec<String> = (0..stats.d)
            .flat_map(|a| [format!("x{}_sq_over_t", a + 1), format!("x{}_se", a + 1)])
            .collect();
        writeln!(w, "t,{}", cols.join(","))?;
        for (k, &t) in stats.times.iter().enumerate() {
            if t <= 0.0 {
                continue;
            }
            let vals: Vec<String> = (0..stats.d)
                .flat_map(|a| {
                    let m = stats.second_moment(k, a);
                    [format!("{:.10e}", m.value / t), format!("{:.3e}", m.se / t)]
                })
                .collect();
            writeln!(w, "{t},{}", vals.join(","))?;
        }
        Ok(())
    })
}

fn estimate(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<TaskReport> {
    let spec = &cfg.model;
    let t = torus(cfg)?;
    let cache = SpectralCache::new(t);
    let free = spec.is_interaction_free();
    let series = run_ensemble(spec, &cache, &ensemble_config(cfg, !free))?;
    if let Some(dir) = out {
        write_msd_csv(&dir.join("msd.csv"), &series)?;
    }
    let horizon = cfg.run.horizon;
    let grid = cfg.diffusive_grid();
    let mut checks = Checks::default();
    let mut results = serde_json::Map::new();

    if free {
        let srw = estimators::srw_msd_check(&series, spec.gamma, &grid)?;
        checks.push(
            "srw-msd",
            srw.passed,
            format!(
                "E|X(T)|² = {:.3} ± {:.3} vs {:.3}",
                srw.rows[3].msd.value, srw.rows[3].msd.se, srw.rows[3].exact
            ),
        );
        let ks = estimators::waiting_time_ks(
            spec,
            t,
            KS_DRAWS,
            sub_seed(cfg.run.seed, "ks"),
            cfg.run.sampler,
            KS_LEVEL,
        )?;
        checks.push(
            "waiting-time-ks",
            ks.passed,
            format!("D = {:.4}, p = {:.3}", ks.ks.statistic, ks.ks.p_value),
        );
        results.insert("srw".into(), serde_json::to_value(&srw)?);
        results.insert("waiting_times".into(), serde_json::to_value(&ks)?);
    } else {
        let variance = GibbsMeasure::stationary(spec.clone())
            .ok()
            .and_then(|m| m.gaussian_scale())
            .map(|s| 2.0 * cache.torus_green().nearest_neighbor_drop() * s);
        let st = estimators::stationarity_check(&series, cfg.checks.stationarity_t, variance)?;
        let bad = st.comparisons.iter().filter(|c| !c.passed).count();
        checks.push(
            "stationarity",
            st.passed,
            format!("{bad} of {} moment comparisons outside 3 SE", st.comparisons.len()),
        );
        let ya = estimators::yaglom_check(&series, cfg.checks.yaglom_t)?;
        let bad = ya.comparisons.iter().filter(|c| !c.passed).count();
        checks.push(
            "yaglom-reversibility",
            ya.passed,
            format!("{bad} of {} identities outside 3 SE", ya.comparisons.len()),
        );
        results.insert("stationarity".into(), serde_json::to_value(&st)?);
        results.insert("yaglom".into(), serde_json::to_value(&ya)?);
    }

    let lln = estimators::lln_check(&series, horizon)?;
    checks.push("lln", lln.passed, format!("max |E X/T| = {:.4}", lln.max_abs_drift));
    let diff = estimators::diffusive_bounds_check(&series, spec, &grid)?;
    checks.push(
        "diffusive-lower-bound",
        diff.lower_bound_holds,
        format!(
            "min pooled ratio {:.3} vs γ = {}",
            diff.pooled.iter().map(|e| e.value).fold(f64::INFINITY, f64::min),
            spec.gamma
        ),
    );
    checks.push(
        "diffusive-plateau",
        diff.plateau_holds,
        format!("slope {:.2e} ± {:.1e}", diff.slope.value, diff.slope.se),
    );
    let clt = estimators::clt_check(&series, cfg.checks.clt_t / 2.0, cfg.checks.clt_t)?;
    checks.push(
        "clt-signatures",
        clt.passed,
        format!("{} components", clt.components.len()),
    );
    let sigma = estimators::sigma_estimate(&series, cfg.checks.clt_t)?;
    checks.push(
        "sigma-off-diagonal",
        sigma.off_diagonal_zero,
        format!("diagonal mean {:.3}", sigma.diagonal_mean),
    );
    checks.push(
        "sigma-isotropy",
        sigma.diagonal_equal,
        "pairwise diagonal differences within 3 SE",
    );
    let mart = estimators::martingale_check(&series, horizon)?;
    checks.push(
        "martingale-compensator",
        mart.compensated_ok,
        "E[X - ∫(φ̄+φ̃)] within 3 SE of 0",
    );
    checks.push(
        "martingale-orthogonality",
        mart.orthogonality_ok,
        "Cov(N, X - N) within 3 SE of 0",
    );

    let wound = series.iter().filter(|s| s.wound(cfg.lattice.l)).count();
    results.insert("wound_replicas".into(), json!(wound));
    results.insert("lln".into(), serde_json::to_value(&lln)?);
    results.insert("diffusive".into(), serde_json::to_value(&diff)?);
    results.insert("clt".into(), serde_json::to_value(&clt)?);
    results.insert("sigma".into(), serde_json::to_value(&sigma)?);
    results.insert("martingale".into(), serde_json::to_value(&mart)?);
    Ok(TaskReport::new(Task::Estimate, checks.0, Value::Object(results)))
}

/// Largest relative adjointness residual of `a*`/`a` and `∇_e`/`∇_{-e}`
/// over all directions on sectors `0..=max_n`.
pub fn adjointness_residual(space: &FockSpace, max_n: usize, seed: u64) -> Result<f64> {
    let rel = |a: Complex64, b: Complex64| (a - b).norm() / (1.0 + a.norm().max(b.norm()));
    let mut worst = 0.0f64;
    for n in 0..=max_n {
        let u = space.random(n, replica_seed(seed, 2 * n as u64))?;
        let v = space.random(n + 1, replica_seed(seed, 2 * n as u64 + 1))?;
        for dir in 0..space.torus.directions() {
            let lhs = space.inner(&space.apply_creation(dir, &u)?, &v)?;
            let rhs = space.inner(&u, &space.apply_annihilation(dir, &v)?)?;
            worst = worst.max(rel(lhs, rhs));
            if n > 0 {
                let w = space.random(n, replica_seed(seed, 1000 + n as u64))?;
                let lhs = space.inner(&space.apply_nabla(dir, &u)?, &w)?;
                let rhs = space.inner(&u, &space.apply_nabla(Torus::opposite(dir), &w)?)?;
                worst = worst.max(rel(lhs, rhs));
            }
        }
    }
    Ok(worst)
}

/// `max ‖(N_e T_e + T_e N_{-e}) δ_k‖` over basis vectors `δ_k` of sector 1.
pub fn field_shift_residual(space: &FockSpace, dir: usize) -> Result<f64> {
    let dim = space.dim(1)?;
    let cols: Vec<f64> = (0..dim)
        .into_par_iter()
        .map(|col| -> Result<f64> {
            let mut u = space.zeros(1)?;
            u.coeffs[col] = Complex64::new(1.0, 0.0);
            let (d1, u1) = space.apply_field(dir, &space.apply_shift(dir, &u)?)?;
            let (d2, u2) = space.apply_field(Torus::opposite(dir), &u)?;
            let d2 = space.apply_shift(dir, &d2.expect("sector 1 has a lower part"))?;
            let u2 = space.apply_shift(dir, &u2)?;
            let mut lo = d1.expect("sector 1 has a lower part");
            lo.axpy(Complex64::new(1.0, 0.0), &d2);
            let mut hi = u1;
            hi.axpy(Complex64::new(1.0, 0.0), &u2);
            Ok((space.norm(&lo)?.powi(2) + space.norm(&hi)?.powi(2)).sqrt())
        })
        .collect::<Result<_>>()?;
    Ok(cols.into_iter().fold(0.0, f64::max))
}

fn fock_check(cfg: &ExperimentConfig) -> Result<TaskReport> {
    let d = cfg.lattice.d;
    let f = &cfg.fock;
    let seed = sub_seed(cfg.run.seed, "fock");
    let mut checks = Checks::default();
    let mut results = serde_json::Map::new();

    // |Δ|^{-1/2}∇_e: a pure multiplier, so its norm is the grid maximum
    let grid_space = FockSpace::new(Torus::new(d, f.grid_l)?, 1);
    let grid_max = multiplier_norm(&grid_space, 1, |t| grid_space.delta_inv_sqrt_nabla_multiplier(t, 0))?;
    checks.push(
        "inv-sqrt-laplacian-nabla-grid-max",
        (0.99..=1.0 + 1e-12).contains(&grid_max),
        format!("max modulus {grid_max:.12} on L = {}", f.grid_l),
    );
    let space = FockSpace::new(Torus::new(d, f.l)?, f.max_n + 1);
    let mut attain = vec![0i64; d];
    attain[0] = (f.l / 2) as i64;
    let at_pi = if f.l.is_multiple_of(2) {
        space.delta_inv_sqrt_nabla_multiplier(&attain, 0).norm()
    } else {
        f64::NAN
    };
    checks.push(
        "inv-sqrt-laplacian-nabla-attained",
        (at_pi - 1.0).abs() <= 1e-14,
        format!("|m(π e₁)| = {at_pi:.15}"),
    );
    results.insert(
        "inv_sqrt_laplacian_nabla".into(),
        json!({ "grid_L": f.grid_l, "grid_max": grid_max, "at_pi": at_pi, "fock_L": f.l }),
    );

    let drop = (1.0 - (f.l as f64).powi(-(d as i32))) / (2.0 * d as f64);
    let mut norms = Vec::new();
    let mut worst_norm = 0.0f64;
    for n in 0..=f.max_n {
        let c = creation_norm(&space, 0, n, replica_seed(seed, n as u64))?;
        let want = (drop * (n + 1) as f64).sqrt();
        worst_norm = worst_norm.max((c.value - want).abs());
        norms.push(json!({ "op": "creation", "n": n, "estimate": c, "exact": want }));
        if n > 0 {
            let a = annihilation_norm(&space, 0, n, replica_seed(seed, 100 + n as u64))?;
            let want = (drop * n as f64).sqrt();
            worst_norm = worst_norm.max((a.value - want).abs());
            norms.push(json!({ "op": "annihilation", "n": n, "estimate": a, "exact": want }));
        }
    }
    checks.push(
        "creation-annihilation-norms",
        worst_norm <= NORM_TOL,
        format!("max deviation {worst_norm:.2e}"),
    );
    results.insert("variance_drop".into(), json!(drop));
    results.insert("norms".into(), json!(norms));

    let adj = adjointness_residual(&space, f.max_n, seed)?;
    checks.push(
        "adjointness",
        adj <= ADJOINT_TOL,
        format!("max relative residual {adj:.2e}"),
    );
    let comm = field_shift_residual(&space, 0)?;
    checks.push(
        "field-shift-anticommutation",
        comm <= ADJOINT_TOL,
        format!("max column residual {comm:.2e}"),
    );
    results.insert("adjointness_residual".into(), json!(adj));
    results.insert("field_shift_residual".into(), json!(comm));

    if d >= 3 {
        let ib = gsc_integral_bound(d, &cfg.gsc.levels, cfg.gsc.q_grid)?;
        checks.push(
            "integral-bound-convergence",
            ib.relative_change <= 0.02,
            format!("relative change {:.4}", ib.relative_change),
        );
        let mut dominated = true;
        let mut rows = Vec::new();
        for n in 1..=f.max_n.min(2) {
            let est = inv_sqrt_laplacian_creation_norm(&space, 0, n, replica_seed(seed, 200 + n as u64))?;
            let bound = (ib.c_squared * (n + 1) as f64).sqrt();
            dominated &= est.value <= bound;
            rows.push(json!({ "n": n, "estimate": est, "bound": bound }));
        }
        checks.push(
            "integral-bound-dominates",
            dominated,
            format!("C² = {:.6}", ib.c_squared),
        );
        results.insert("integral_bound".into(), json!({ "bound": ib, "sectors": rows }));
    }

    let s = cfg.model.s_poly();
    if s.degree() <= 4 && !s.is_zero() {
        let deg = s.degree();
        let top = 3usize;
        let s1_space = FockSpace::new(Torus::new(d, f.s1_l)?, top + deg);
        let mut rows = Vec::new();
        let mut agree = true;
        for n in 0..=top {
            let r = s1_sector_norm_bound(&s1_space, s, 0, n, replica_seed(seed, 300 + n as u64))?;
            agree &= (r.estimate.value - r.oscillator).abs() <= NORM_TOL * r.oscillator.max(1.0)
                && r.estimate.value <= r.ceiling * (1.0 + 1e-9);
            rows.push(r);
        }
        let growth = rows[2].estimate.value / rows[1].estimate.value;
        checks.push(
            "s1-sector-norms",
            agree,
            format!("matches single-mode oracle; growth n=2/n=1 {growth:.3}"),
        );
        results.insert("s1_sector".into(), serde_json::to_value(&rows)?);
    }
    Ok(TaskReport::new(Task::FockCheck, checks.0, Value::Object(results)))
}

fn threshold(cfg: &ExperimentConfig) -> Result<TaskReport> {
    let g = &cfg.gsc;
    let p = GscParams::new(g.r, g.kappa, g.c)?;
    let mut checks = Checks::default();
    let (la, lb) = p.plateau_limits();
    let closed = 1.0 / (6.0 * g.r as f64);
    let budget_closed = 1.0 / (2.0 * (2 * g.r + 1) as f64);
    checks.push(
        "plateau-closed-form",
        (la - closed).abs() <= 1e-12 && (lb - closed).abs() <= 1e-12 && (p.budget() - budget_closed).abs() <= 1e-12,
        format!("limits ({la:.15}, {lb:.15}) vs 1/(6r) = {closed:.15}; budget 1/(2(2r+1)) = {budget_closed:.15}"),
    );
    match gsc_threshold(&p, 10_000_000) {
        Ok(th) => {
            let budget = p.budget();
            let worst = (0..=10 * th.n1)
                .map(|n| conditions_at(&p, th.n1, n))
                .fold((0.0f64, 0.0f64), |acc, (a, b)| (acc.0.max(a), acc.1.max(b)));
            let ok = worst.0 <= budget + SLACK && worst.1 <= budget + SLACK;
            checks.push(
                "threshold-rescan",
                ok,
                format!(
                    "n1 = {}, worst ({:.6}, {:.6}) vs budget {budget:.6}",
                    th.n1, worst.0, worst.1
                ),
            );
            Ok(TaskReport::new(
                Task::GscThreshold,
                checks.0,
                json!({ "threshold": th, "rescan_worst": worst }),
            ))
        }
        Err(Error::Infeasible { limit, budget }) => {
            checks.push(
                "threshold-finite",
                false,
                format!(
                    "plateau {limit:.12} reaches the budget {budget:.12}; margin {:.3e}",
                    budget - limit
                ),
            );
            Ok(TaskReport::new(
                Task::GscThreshold,
                checks.0,
                json!({ "infeasible": { "limit": limit, "budget": budget, "margin": budget - limit } }),
            ))
        }
        Err(e) => Err(e),
    }
}

fn full_verify(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<TaskReport> {
    let mut checks = Checks::default();
    let v = validate(&cfg.model);
    let free = cfg.model.is_interaction_free();
    for c in &v.conditions {
        // with r ≡ 0 there is no Gibbs measure and R is not strictly convex;
        // the interaction-free mode is a simple random walk
        if free && c.name == "convexity" {
            continue;
        }
        checks.push(format!("rate-model/{}", c.name), c.passed, c.detail.clone());
    }
    let mut results = serde_json::Map::new();
    results.insert("rate_model".into(), serde_json::to_value(&v)?);
    for task in [Task::SampleGibbs, Task::Estimate, Task::FockCheck, Task::GscThreshold] {
        let sub = run_task(cfg, task, out.map(|p| p.join(task.name())).as_deref())?;
        for c in &sub.checks {
            checks.push(format!("{task}/{}", c.name), c.passed, c.detail.clone());
        }
        results.insert(task.name().into(), sub.results);
    }
    Ok(TaskReport::new(Task::FullVerify, checks.0, Value::Object(results)))
}

/// Output directory for a run: the CLI override or the config's.
pub fn output_dir(cfg: &ExperimentConfig, cli: Option<PathBuf>) -> PathBuf {
    cli.unwrap_or_else(|| cfg.output_dir.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/a.json");
        write_atomic(&p, b"first").unwrap();
        write_atomic(&p, b"second").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"second");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn failed_fill_leaves_no_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.json");
        let r = write_atomic_with(&p, |w| {
            w.write_all(b"partial")?;
            Err(Error::Numeric("interrupted".into()))
        });
        assert!(r.is_err());
        assert!(!p.exists());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }
}
