//! Order in which noisy fields visit the organ wells, for wells laid out
//! on an arc (exit1) and on a ring (exit2).
//!
//! cargo run --release --example transitions [-- trajectories]

use std::path::PathBuf;

use landscape_spde::app::{run_ensemble, transition_report};
use landscape_spde::config::Config;
use landscape_spde::diagnostics::transition_sequence;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(20);
    for name in ["exit1.toml", "exit2.toml"] {
        let mut cfg = Config::from_path(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name))?;
        cfg.run.trajectories = n;
        let system = cfg.system()?;
        let trajs = run_ensemble(&cfg, &system)?;
        let seqs: Vec<Vec<usize>> = trajs
            .iter()
            .map(|t| transition_sequence(&t.basin_series, cfg.run.dwell))
            .collect();
        let r = transition_report(&seqs, system.landscape.raw().labels(), cfg.run.dwell);
        println!(
            "{name}: in order to the last well {:.2}, first visits in order {:.2}, exact {:.2}",
            r.prefix_in_order_fraction, r.first_visits_in_order_fraction, r.in_order_fraction
        );
        for s in r.sequences.iter().take(3) {
            let shown: Vec<&str> = s.labels.iter().take(8).map(String::as_str).collect();
            let more = if s.labels.len() > 8 { " ..." } else { "" };
            println!("  {:>3} x {}{more}", s.count, shown.join(" -> "));
        }
    }
    Ok(())
}
