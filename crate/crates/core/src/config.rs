//! Experiment configuration.
//!
//! The schema is strict TOML: unknown sections or keys, wrong types and
//! out-of-range values are all collected and reported together.
//!
//! ```toml
//! task = "full-verify"          # optional; the CLI subcommand wins
//!
//! [model]
//! gamma = 1.0
//! c = 1.0                       # optional, default 1
//! r_coeffs = [0.0, 1.0]
//! s_coeffs = [0.4725, 0.0, 0.0, 0.0, 1.0]
//!
//! [lattice]
//! d = 3
//! L = 16
//!
//! [run]
//! T = 100.0
//! replicas = 100
//! seed = 42
//! samples = [10.0, 50.0]        # optional extra sample times
//! start = "stationary"          # or "flat"
//! sampler = "inversion"         # or "thinning"
//! mcmc_sweeps = 200
//!
//! [checks]                      # optional
//! stationarity_t = 50.0
//! yaglom_t = 10.0
//! clt_t = 100.0
//! lambdas = [0.0, 0.2, 0.5]
//!
//! [fock]                        # optional
//! L = 4
//! max_n = 2
//! grid_L = 32
//! s1_L = 2
//!
//! [gsc]                         # optional
//! r = 4
//! kappa = 2.0
//! C = 0.0
//! levels = [32, 64]
//! q_grid = 8
//!
//! [output]                      # optional
//! dir = "out"
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;
use toml::{Table, Value};

use crate::dynamics::{JumpSampler, Start};
use crate::error::{Error, Result};
use crate::rate::RateSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    SampleGibbs,
    RunWalk,
    Estimate,
    FockCheck,
    GscThreshold,
    FullVerify,
}

impl Task {
    pub const ALL: [Task; 6] = [
        Task::SampleGibbs,
        Task::RunWalk,
        Task::Estimate,
        Task::FockCheck,
        Task::GscThreshold,
        Task::FullVerify,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Task::SampleGibbs => "sample-gibbs",
            Task::RunWalk => "run-walk",
            Task::Estimate => "estimate",
            Task::FockCheck => "fock-check",
            Task::GscThreshold => "gsc-threshold",
            Task::FullVerify => "full-verify",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown task '{s}'"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LatticeConfig {
    pub d: usize,
    #[serde(rename = "L")]
    pub l: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSection {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub replicas: usize,
    pub seed: u64,
    pub samples: Vec<f64>,
    pub start: Start,
    #[serde(serialize_with = "ser_sampler")]
    pub sampler: JumpSampler,
    pub mcmc_sweeps: usize,
}

fn ser_sampler<S: serde::Serializer>(s: &JumpSampler, ser: S) -> std::result::Result<S::Ok, S::Error> {
    ser.serialize_str(match s {
        JumpSampler::Inversion => "inversion",
        JumpSampler::Thinning => "thinning",
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChecksSection {
    pub stationarity_t: f64,
    pub yaglom_t: f64,
    pub clt_t: f64,
    /// Brascamp–Lieb / `Z(λ)` grid as fractions of `c`.
    pub lambdas: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FockSection {
    #[serde(rename = "L")]
    pub l: usize,
    pub max_n: usize,
    pub grid_l: usize,
    pub s1_l: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GscSection {
    pub r: usize,
    pub kappa: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub levels: Vec<usize>,
    pub q_grid: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub task: Option<Task>,
    pub model: RateSpec,
    pub lattice: LatticeConfig,
    pub run: RunSection,
    pub checks: ChecksSection,
    pub fock: FockSection,
    pub gsc: GscSection,
    /// Not part of the config hash: moving the output must not change it.
    #[serde(skip)]
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// All sample times a full ensemble needs: the user's grid, the check
    /// times, `T/4, T/2, 3T/4, T` and `0`, sorted and deduplicated.
    pub fn sample_grid(&self) -> Vec<f64> {
        let t = self.run.horizon;
        let c = &self.checks;
        let mut all: Vec<f64> = self.run.samples.clone();
        all.extend([0.0, c.yaglom_t, c.stationarity_t, c.clt_t / 2.0, c.clt_t]);
        all.extend((1..=4).map(|k| k as f64 * t / 4.0));
        all.retain(|&s| (0.0..=t).contains(&s));
        all.sort_by(|a, b| a.total_cmp(b));
        all.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * (1.0 + b.abs()));
        all
    }

    /// `T/4, T/2, 3T/4, T`.
    pub fn diffusive_grid(&self) -> Vec<f64> {
        (1..=4).map(|k| k as f64 * self.run.horizon / 4.0).collect()
    }
}

/// Walks a table, remembering which keys were read so the rest can be
/// reported as unknown.
struct Section<'a> {
    name: &'a str,
    table: Option<&'a Table>,
    seen: BTreeSet<&'static str>,
}

impl<'a> Section<'a> {
    fn new(name: &'a str, root: &'a Table, errs: &mut Vec<String>) -> Self {
        let table = match root.get(name) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(_) => {
                errs.push(format!("[{name}] must be a table"));
                None
            }
        };
        Section {
            name,
            table,
            seen: BTreeSet::new(),
        }
    }

    fn raw(&mut self, key: &'static str) -> Option<&'a Value> {
        self.seen.insert(key);
        self.table.and_then(|t| t.get(key))
    }

    fn float(&mut self, key: &'static str, errs: &mut Vec<String>) -> Option<f64> {
        let name = self.name;
        match self.raw(key)? {
            Value::Float(x) => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            _ => {
                errs.push(format!("{name}.{key} must be a number"));
                None
            }
        }
    }

    fn int(&mut self, key: &'static str, errs: &mut Vec<String>) -> Option<i64> {
        let name = self.name;
        match self.raw(key)? {
            Value::Integer(i) => Some(*i),
            _ => {
                errs.push(format!("{name}.{key} must be an integer"));
                None
            }
        }
    }

    fn string(&mut self, key: &'static str, errs: &mut Vec<String>) -> Option<&'a str> {
        let name = self.name;
        match self.raw(key)? {
            Value::String(s) => Some(s.as_str()),
            _ => {
                errs.push(format!("{name}.{key} must be a string"));
                None
            }
        }
    }

    fn floats(&mut self, key: &'static str, errs: &mut Vec<String>) -> Option<Vec<f64>> {
        let name = self.name;
        match self.raw(key)? {
            Value::Array(a) => {
                let v: Option<Vec<f64>> = a
                    .iter()
                    .map(|x| match x {
                        Value::Float(f) => Some(*f),
                        Value::Integer(i) => Some(*i as f64),
                        _ => None,
                    })
                    .collect();
                if v.is_none() {
                    errs.push(format!("{name}.{key} must be an array of numbers"));
                }
                v
            }
            _ => {
                errs.push(format!("{name}.{key} must be an array of numbers"));
                None
            }
        }
    }

    fn require<T>(&self, key: &str, v: Option<T>, errs: &mut Vec<String>) -> Option<T> {
        if v.is_none() && !self.table.is_some_and(|t| t.contains_key(key)) {
            errs.push(format!("missing {}.{key}", self.name));
        }
        v
    }

    fn finish(self, errs: &mut Vec<String>) {
        if let Some(t) = self.table {
            for k in t.keys() {
                if !self.seen.contains(k.as_str()) {
                    errs.push(format!("unknown key {}.{k}", self.name));
                }
            }
        }
    }
}

fn positive_usize(name: &str, v: Option<i64>, min: i64, errs: &mut Vec<String>) -> Option<usize> {
    let v = v?;
    if v < min {
        errs.push(format!("{name} must be at least {min} (got {v})"));
        None
    } else {
        Some(v as usize)
    }
}

const SECTIONS: [&str; 7] = ["model", "lattice", "run", "checks", "fock", "gsc", "output"];

/// Parses and validates a configuration, reporting every violation.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let root: Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(vec![e.to_string().trim_end().to_string()]))?;
    let mut errs = Vec::new();

    for (k, v) in &root {
        if k == "task" {
            if !matches!(v, Value::String(_)) {
                errs.push("task must be a string".to_string());
            }
        } else if !SECTIONS.contains(&k.as_str()) {
            errs.push(format!("unknown key or section '{k}'"));
        }
    }
    let task = match root.get("task") {
        Some(Value::String(s)) => match s.parse::<Task>() {
            Ok(t) => Some(t),
            Err(e) => {
                errs.push(e);
                None
            }
        },
        _ => None,
    };

    // [model]
    let mut m = Section::new("model", &root, &mut errs);
    let gamma = m.float("gamma", &mut errs);
    let gamma = m.require("gamma", gamma, &mut errs);
    let c = m.float("c", &mut errs).unwrap_or(1.0);
    let r_coeffs = m.floats("r_coeffs", &mut errs);
    let r_coeffs = m.require("r_coeffs", r_coeffs, &mut errs);
    let s_coeffs = m.floats("s_coeffs", &mut errs);
    let s_coeffs = m.require("s_coeffs", s_coeffs, &mut errs);
    m.finish(&mut errs);
    if let Some(g) = gamma {
        if !(g > 0.0) {
            errs.push(format!("model.gamma must be positive (got {g})"));
        }
    }
    if !(c > 0.0) {
        errs.push(format!("model.c must be positive (got {c})"));
    }

    // [lattice]
    let mut l = Section::new("lattice", &root, &mut errs);
    let d = l.int("d", &mut errs);
    let d = positive_usize("lattice.d", l.require("d", d, &mut errs), 1, &mut errs);
    let big_l = l.int("L", &mut errs);
    let big_l = positive_usize("lattice.L", l.require("L", big_l, &mut errs), 2, &mut errs);
    l.finish(&mut errs);

    // [run]
    let mut r = Section::new("run", &root, &mut errs);
    let horizon = r.float("T", &mut errs);
    let horizon = r.require("T", horizon, &mut errs);
    if let Some(t) = horizon {
        if !(t > 0.0 && t.is_finite()) {
            errs.push(format!("run.T must be positive (got {t})"));
        }
    }
    let replicas = r.int("replicas", &mut errs);
    let replicas = positive_usize("run.replicas", r.require("replicas", replicas, &mut errs), 1, &mut errs);
    let seed = r.int("seed", &mut errs);
    let seed = r.require("seed", seed, &mut errs).and_then(|s| {
        if s < 0 {
            errs.push(format!("run.seed must be non-negative (got {s})"));
            None
        } else {
            Some(s as u64)
        }
    });
    let samples = r.floats("samples", &mut errs).unwrap_or_default();
    if let Some(t) = horizon {
        if samples.iter().any(|&s| !(0.0..=t).contains(&s)) {
            errs.push("run.samples must lie in [0, T]".to_string());
        }
    }
    let start = match r.string("start", &mut errs) {
        None | Some("stationary") => Start::Stationary,
        Some("flat") => Start::Flat,
        Some(other) => {
            errs.push(format!("run.start must be 'stationary' or 'flat' (got '{other}')"));
            Start::Stationary
        }
    };
    let sampler = match r.string("sampler", &mut errs) {
        None | Some("inversion") => JumpSampler::Inversion,
        Some("thinning") => JumpSampler::Thinning,
        Some(other) => {
            errs.push(format!("run.sampler must be 'inversion' or 'thinning' (got '{other}')"));
            JumpSampler::Inversion
        }
    };
    let mcmc_sweeps = positive_usize(
        "run.mcmc_sweeps",
        r.int("mcmc_sweeps", &mut errs).or(Some(200)),
        2,
        &mut errs,
    );
    r.finish(&mut errs);

    // [checks]
    let t = horizon.unwrap_or(1.0);
    let mut ch = Section::new("checks", &root, &mut errs);
    let stationarity_t = ch.float("stationarity_t", &mut errs).unwrap_or(50f64.min(t));
    let yaglom_t = ch.float("yaglom_t", &mut errs).unwrap_or(10f64.min(t));
    let clt_t = ch.float("clt_t", &mut errs).unwrap_or(t);
    let lambdas = ch.floats("lambdas", &mut errs).unwrap_or_else(|| vec![0.0, 0.2, 0.5]);
    ch.finish(&mut errs);
    for (name, v) in [
        ("stationarity_t", stationarity_t),
        ("yaglom_t", yaglom_t),
        ("clt_t", clt_t),
    ] {
        if !(v > 0.0 && v <= t) {
            errs.push(format!("checks.{name} must lie in (0, T] (got {v})"));
        }
    }
    if lambdas.iter().any(|&x| !(0.0..0.9).contains(&x) && x != 0.9) {
        errs.push("checks.lambdas must lie in [0, 0.9] (fractions of c)".to_string());
    }

    // [fock]
    let mut f = Section::new("fock", &root, &mut errs);
    let fock = FockSection {
        l: positive_usize("fock.L", f.int("L", &mut errs).or(Some(4)), 2, &mut errs).unwrap_or(4),
        max_n: positive_usize("fock.max_n", f.int("max_n", &mut errs).or(Some(2)), 0, &mut errs).unwrap_or(2),
        grid_l: positive_usize("fock.grid_L", f.int("grid_L", &mut errs).or(Some(32)), 2, &mut errs).unwrap_or(32),
        s1_l: positive_usize("fock.s1_L", f.int("s1_L", &mut errs).or(Some(2)), 2, &mut errs).unwrap_or(2),
    };
    f.finish(&mut errs);

    // [gsc]
    let mut g = Section::new("gsc", &root, &mut errs);
    let gsc_r = positive_usize("gsc.r", g.int("r", &mut errs).or(Some(4)), 1, &mut errs).unwrap_or(4);
    let kappa = g.float("kappa", &mut errs).unwrap_or(2.0);
    let gc = g.float("C", &mut errs).unwrap_or(0.0);
    let levels: Vec<usize> = g
        .floats("levels", &mut errs)
        .map(|v| v.into_iter().map(|x| x as usize).collect())
        .unwrap_or_else(|| crate::fock::gsc::LEVELS.to_vec());
    let q_grid = positive_usize("gsc.q_grid", g.int("q_grid", &mut errs).or(Some(8)), 1, &mut errs).unwrap_or(8);
    g.finish(&mut errs);
    if !(kappa >= 2.0) {
        errs.push(format!("gsc.kappa must be at least 2 (got {kappa})"));
    }
    if !(gc >= 0.0) {
        errs.push(format!("gsc.C must be non-negative (got {gc})"));
    }
    if levels.len() < 2 || levels.iter().any(|&n| n == 0 || n % q_grid != 0 || n % 2 != 0) {
        errs.push("gsc.levels needs two or more even entries, each a multiple of gsc.q_grid".to_string());
    }

    // [output]
    let mut o = Section::new("output", &root, &mut errs);
    let output_dir = o
        .string("dir", &mut errs)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out"));
    o.finish(&mut errs);

    let model = match (gamma, r_coeffs, s_coeffs) {
        (Some(g), Some(r), Some(s)) => match RateSpec::new(g, c, r, s) {
            Ok(m) => Some(m),
            Err(e) => {
                errs.push(format!("model: {e}"));
                None
            }
        },
        _ => None,
    };

    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    Ok(ExperimentConfig {
        task,
        model: model.expect("validated"),
        lattice: LatticeConfig {
            d: d.expect("validated"),
            l: big_l.expect("validated"),
        },
        run: RunSection {
            horizon: horizon.expect("validated"),
            replicas: replicas.expect("validated"),
            seed: seed.expect("validated"),
            samples,
            start,
            sampler,
            mcmc_sweeps: mcmc_sweeps.expect("validated"),
        },
        checks: ChecksSection {
            stationarity_t,
            yaglom_t,
            clt_t,
            lambdas,
        },
        fock,
        gsc: GscSection {
            r: gsc_r,
            kappa,
            c: gc,
            levels,
            q_grid,
        },
        output_dir,
    })
}
