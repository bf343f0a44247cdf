use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use landscape_spde::app::{self, AppError, Overrides};

#[derive(Parser)]
#[command(name = "landscape-spde", version, about = "Stochastic reaction-diffusion on multi-well landscapes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one trajectory.
    Run(Common),
    /// Simulate an ensemble and pool its statistics.
    Ensemble {
        #[command(flatten)]
        common: Common,
        /// Number of trajectories.
        #[arg(long, short = 'n')]
        n: Option<usize>,
    },
    /// Fit mean exit times against 1/sigma^2.
    ExitStudy {
        #[command(flatten)]
        common: Common,
        /// Comma-separated noise amplitudes (at least 3).
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        sigmas: Option<Vec<f64>>,
        /// Trajectories per sigma.
        #[arg(long)]
        per_sigma: Option<usize>,
    },
    /// Export the smoothed landscape, limit weights and barriers.
    Landscape(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Print the fully resolved config and exit.
    #[arg(long)]
    print_config: bool,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            sigma: self.sigma,
            t_end: self.t_end,
            ..Overrides::default()
        }
    }
}

fn execute(cli: Cli) -> Result<(), AppError> {
    let (common, overrides) = match &cli.command {
        Command::Run(c) | Command::Landscape(c) => (c, c.overrides()),
        Command::Ensemble { common, n } => (
            common,
            Overrides {
                trajectories: *n,
                ..common.overrides()
            },
        ),
        Command::ExitStudy {
            common,
            sigmas,
            per_sigma,
        } => (
            common,
            Overrides {
                sigmas: sigmas.clone(),
                per_sigma: *per_sigma,
                ..common.overrides()
            },
        ),
    };
    let cfg = app::load_config(&common.config, &overrides)?;
    if common.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let out = common.out.clone();
    app::with_jobs(common.jobs, || {
        match &cli.command {
            Command::Run(_) => {
                let s = app::cmd_run(&cfg, &out)?;
                println!("final basin {} after {} records", s.final_basin, s.records);
            }
            Command::Ensemble { .. } => {
                let s = app::cmd_ensemble(&cfg, &out)?;
                let h = &s.histogram;
                println!(
                    "{} trajectories, Avg u mean {} std {}, Avg v mean {} std {}",
                    h.trajectories, h.avg_u.mean, h.avg_u.std_dev, h.avg_v.mean, h.avg_v.std_dev
                );
            }
            Command::ExitStudy { .. } => {
                let s = app::cmd_exit_study(&cfg, &out)?;
                println!(
                    "fitted slope {} (predicted {}), censoring {:?}",
                    s.fitted_slope, s.predicted_slope, s.censoring
                );
            }
            Command::Landscape(_) => {
                let s = app::cmd_landscape(&cfg, &out)?;
                println!("limit measure {:?}", s.limit_measure);
            }
        }
        Ok(())
    })?;
    println!("wrote {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
