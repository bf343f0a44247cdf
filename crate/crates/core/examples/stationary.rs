//! Stationary spread around a well shrinks linearly with sigma.
//!
//! cargo run --release --example stationary [-- trajectories]

use std::path::PathBuf;

use landscape_spde::app::run_ensemble;
use landscape_spde::config::Config;
use landscape_spde::diagnostics::stationary_histogram;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg =
        Config::from_path(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/dist_scaling.toml"))?;
    cfg.run.trajectories = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(20);
    let system = cfg.system()?;

    println!("sigma     mean Avg u   std Avg u   std ratio");
    let mut previous: Option<f64> = None;
    for sigma in [0.012, 0.006, 0.003, 0.0015] {
        cfg.run.sigma = sigma;
        let trajs = run_ensemble(&cfg, &system)?;
        let h = stationary_histogram(&trajs, cfg.run.burn_in, cfg.run.histogram_bins)?;
        let ratio = previous.map(|p| format!("{:.3}", p / h.avg_u.std_dev)).unwrap_or_default();
        println!("{sigma:<8}  {:.6}     {:.3e}   {ratio}", h.avg_u.mean, h.avg_u.std_dev);
        previous = Some(h.avg_u.std_dev);
    }
    Ok(())
}
