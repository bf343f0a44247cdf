//! One noisy trajectory on the default landscape: basin changes and
//! occupation.
//!
//! cargo run --release --example trajectory [-- sigma t_end]

use std::path::PathBuf;

use landscape_spde::config::Config;
use landscape_spde::diagnostics::{first_exit, occupation, transition_sequence};
use landscape_spde::rng::stream;
use landscape_spde::simulate;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = Config::from_path(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/default.toml"))?;
    let mut args = std::env::args().skip(1);
    cfg.run.sigma = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0.5);
    cfg.run.t_end = args.next().map(|s| s.parse()).transpose()?.unwrap_or(50.0);
    cfg.solver.dt = 0.01;
    cfg.validate()?;

    let system = cfg.system()?;
    let traj = simulate(&system, &cfg.run_params()?, &mut stream(cfg.seed, 0))?;
    let raw = system.landscape.raw();
    let labels = raw.labels();

    println!("sigma {}, t_end {}, {} records", cfg.run.sigma, cfg.run.t_end, traj.len());
    let last = traj.avg_series.last().unwrap();
    println!("final (Avg u, Avg v) = ({:.4}, {:.4})", last[0], last[1]);
    let start = traj.basin_series[0];
    match first_exit(&traj.basin_series, &traj.times, start, cfg.run.dwell)? {
        Some(e) => println!("left {} for {} at t = {:.2}", labels[e.from_basin], labels[e.to_basin], e.t_exit),
        None => println!("never left {}", labels[start]),
    }
    let seq: Vec<&str> = transition_sequence(&traj.basin_series, cfg.run.dwell)
        .into_iter()
        .map(|k| labels[k].as_str())
        .collect();
    println!("visits: {}", seq.join(" -> "));
    let occ = occupation(&traj.basin_series, &traj.times, raw.len(), traj.end_time())?;
    for (l, f) in labels.iter().zip(&occ.fractions) {
        println!("  {l:>7} {f:.3}");
    }
    Ok(())
}
