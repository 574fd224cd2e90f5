//! Runs a single walker from a stationary environment and prints its
//! checkpoints as JSON lines, then checks local-time conservation.

use msaw::dynamics::{env_of, run, JumpSampler, RunConfig};
use msaw::gibbs::{sample_measure, GibbsMeasure};
use msaw::{RateSpec, SpectralCache, Torus};

fn main() -> msaw::Result<()> {
    let spec = RateSpec::quartic_example();
    let cache = SpectralCache::new(Torus::new(3, 16)?);
    let initial = sample_measure(&GibbsMeasure::stationary(spec.clone())?, &cache, 0, 3)?;
    let cfg = RunConfig {
        horizon: 20.0,
        sample_times: (0..=4).map(|k| 5.0 * k as f64).collect(),
        seed: 3,
        sampler: JumpSampler::Inversion,
        snapshots: false,
    };
    let (series, state) = run(&initial, &spec, &cfg)?;
    series.write_jsonl(std::io::stdout().lock())?;

    let gained = state.total_local_time() - initial.values.iter().sum::<f64>();
    println!(
        "jumps {}, local time gained {gained:.9} over t = {}",
        series.jumps, cfg.horizon
    );
    let env = env_of(&state);
    println!("environment at the walker: η(0) = {:.4}", env.values[0]);
    Ok(())
}
