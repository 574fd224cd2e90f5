//! Command-line front end. Log verbosity comes from `MSAW_LOG`
//! (e.g. `MSAW_LOG=debug`).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use msaw::config::{parse_config, Task};
use msaw::harness::{execute, output_dir, EXIT_ERROR};

#[derive(Parser)]
#[command(
    name = "msaw",
    version,
    about = "Myopic self-avoiding walk simulation and verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw stationary environments and run the Gibbs-measure checks.
    SampleGibbs(Common),
    /// Simulate a replica ensemble and write trajectories.
    RunWalk(Common),
    /// Simulate and run the LLN, diffusive, CLT, stationarity and martingale checks.
    Estimate(Common),
    /// Fock-space operator norms, adjointness and the infrared integral bound.
    FockCheck(Common),
    /// Smallest n1 for the graded-sector-condition multiplier.
    GscThreshold(Common),
    /// Every check above in one report.
    FullVerify(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides `output.dir`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

impl Command {
    fn split(self) -> (Task, Common) {
        match self {
            Command::SampleGibbs(c) => (Task::SampleGibbs, c),
            Command::RunWalk(c) => (Task::RunWalk, c),
            Command::Estimate(c) => (Task::Estimate, c),
            Command::FockCheck(c) => (Task::FockCheck, c),
            Command::GscThreshold(c) => (Task::GscThreshold, c),
            Command::FullVerify(c) => (Task::FullVerify, c),
        }
    }
}

fn run(task: Task, args: Common) -> msaw::Result<i32> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = args.seed {
        cfg.run.seed = seed;
    }
    if let Some(t) = cfg.task.filter(|&t| t != task) {
        log::info!("config names task {t}; running {task} as requested");
    }
    let out = output_dir(&cfg, args.out);
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| msaw::Error::InvalidInput(format!("thread pool: {e}")))?;
    let report = pool.install(|| execute(&cfg, task, &out))?;
    for c in &report.checks {
        println!("{} {:<48} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("report: {}", out.join(format!("{}.json", task.name())).display());
    Ok(report.exit_code())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MSAW_LOG", "info")).init();
    let (task, args) = Cli::parse().command.split();
    let code = match run(task, args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    };
    ExitCode::from(code as u8)
}
