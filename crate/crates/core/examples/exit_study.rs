//! Mean exit time from a well against 1/sigma^2, compared with twice the
//! barrier. Takes about half a minute.
//!
//! cargo run --release --example exit_study

use std::path::PathBuf;

use landscape_spde::config::Config;
use landscape_spde::ldp::exit_rate_fit;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = Config::from_path(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/exit_study.toml"))?;
    let system = cfg.system()?;
    let study = exit_rate_fit(&system, &cfg.run_params()?, &cfg.exit_study()?)?;

    println!("barrier {:.4} at ({:.3}, {:.3})", study.barrier, study.saddle_point[0], study.saddle_point[1]);
    println!("sigma   1/sigma^2  mean exit   censored");
    for k in 0..study.sigmas.len() {
        let s = study.sigmas[k];
        println!(
            "{s:<6}  {:>8.2}  {:>9.1}   {:.2}",
            1.0 / (s * s),
            study.mean_exit[k],
            study.censoring[k]
        );
    }
    println!(
        "slope of ln E[tau]: {:.4} +- {:.4}, predicted {:.4}",
        study.fitted_slope, study.slope_std_error, study.predicted_slope
    );
    if study.unreliable {
        println!("warning: more than 10% of runs never exited at some sigma");
    }
    Ok(())
}
