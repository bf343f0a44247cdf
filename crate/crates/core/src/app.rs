//! Command drivers behind the `landscape-spde` binary.
//!
//! Each command reads a resolved [`Config`], writes its artifacts into an
//! output directory together with a `manifest.json` holding the config,
//! seed, version and output digests, and returns a summary.
//! Configuration problems map to exit code 2, runtime aborts to 3.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Config, ConfigError};
use crate::diagnostics::{
    first_exit, occupation, stationary_histogram, transition_sequence, ChannelStats,
    DiagnosticsError, OccupationReport, TransitionEvent, Trajectory,
};
use crate::export::{
    write_diagnostics_csv, write_histogram_csv, write_json, write_landscape_csv,
    write_trajectory_csv, RunManifest,
};
use crate::ldp::{barrier_table, exit_rate_fit, ExitStudy, LdpError, QuasiPotentialReport};
use crate::rng::stream;
use crate::solver::{simulate, SolverError, System};

#[derive(Debug, Error)]
pub enum AppError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("simulation aborted: {0}")]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Ldp(LdpError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot set up worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl From<LdpError> for AppError {
    fn from(e: LdpError) -> Self {
        match e {
            LdpError::Solver(s) => Self::Solver(s),
            LdpError::TooFewSigmas { .. }
            | LdpError::BadSigma(_)
            | LdpError::TooFewTrajectories { .. }
            | LdpError::NotAdjacent(..)
            | LdpError::NoSuchWell(_)
            | LdpError::Landscape(_) => Self::Config(ConfigError::Invalid {
                key: "study".to_string(),
                message: e.to_string(),
            }),
            other => Self::Ldp(other),
        }
    }
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            _ => 3,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AppError + '_ {
    move |source| AppError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Command-line values that replace config entries.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub sigma: Option<f64>,
    pub t_end: Option<f64>,
    /// Ensemble size (`run.trajectories`).
    pub trajectories: Option<usize>,
    pub sigmas: Option<Vec<f64>>,
    /// Exit-study trajectories per sigma.
    pub per_sigma: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut Config) -> Result<(), ConfigError> {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(s) = self.sigma {
            cfg.run.sigma = s;
        }
        if let Some(t) = self.t_end {
            cfg.run.t_end = t;
        }
        if let Some(n) = self.trajectories {
            cfg.run.trajectories = n;
        }
        if let Some(s) = &self.sigmas {
            cfg.study.sigmas = s.clone();
        }
        if let Some(n) = self.per_sigma {
            cfg.study.trajectories = n;
        }
        cfg.validate()
    }
}

pub fn load_config(path: &Path, overrides: &Overrides) -> Result<Config, AppError> {
    let mut cfg = Config::from_path(path)?;
    overrides.apply(&mut cfg)?;
    Ok(cfg)
}

fn prepare(out: &Path) -> Result<(), AppError> {
    std::fs::create_dir_all(out).map_err(io_err(out))
}

fn finish(out: &Path, mut manifest: RunManifest, files: &[&str]) -> Result<(), AppError> {
    for name in files {
        manifest.add(out, name).map_err(io_err(&out.join(name)))?;
    }
    let path = out.join("manifest.json");
    write_json(&path, &manifest).map_err(io_err(&path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub sigma: f64,
    pub records: usize,
    pub initial_basin: usize,
    pub final_basin: usize,
    pub final_avg: [f64; 2],
    pub first_exit: Option<TransitionEvent>,
    pub transitions: Vec<usize>,
    pub occupation: OccupationReport,
}

fn summarize(traj: &Trajectory, system: &System, cfg: &Config) -> Result<RunSummary, AppError> {
    let b = &traj.basin_series;
    let start = b[0];
    Ok(RunSummary {
        sigma: cfg.run.sigma,
        records: traj.len(),
        initial_basin: start,
        final_basin: *b.last().unwrap(),
        final_avg: *traj.avg_series.last().unwrap(),
        first_exit: first_exit(b, &traj.times, start, cfg.run.dwell)?,
        transitions: transition_sequence(b, cfg.run.dwell),
        occupation: occupation(b, &traj.times, system.landscape.raw().len(), traj.end_time())?,
    })
}

/// Single trajectory on rng stream 0: `trajectory.csv`, `diagnostics.csv`,
/// `summary.json`.
pub fn cmd_run(cfg: &Config, out: &Path) -> Result<RunSummary, AppError> {
    prepare(out)?;
    let system = cfg.system()?;
    let mut params = cfg.run_params()?;
    params.keep_states = true;
    let traj = simulate(&system, &params, &mut stream(cfg.seed, 0))?;
    let summary = summarize(&traj, &system, cfg)?;

    let p = out.join("trajectory.csv");
    write_trajectory_csv(&p, &traj, &system.disc).map_err(io_err(&p))?;
    let p = out.join("diagnostics.csv");
    write_diagnostics_csv(&p, std::slice::from_ref(&traj), false).map_err(io_err(&p))?;
    let p = out.join("summary.json");
    write_json(&p, &summary).map_err(io_err(&p))?;
    finish(
        out,
        RunManifest::new("run", cfg),
        &["trajectory.csv", "diagnostics.csv", "summary.json"],
    )?;
    Ok(summary)
}

/// Count of one debounced basin sequence across an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceCount {
    pub sequence: Vec<usize>,
    pub labels: Vec<String>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionReport {
    pub trajectories: usize,
    pub dwell: usize,
    /// Fraction whose sequence is exactly `0, 1, ..., n-1` in well order.
    pub in_order_fraction: f64,
    /// Fraction that walks `0, 1, ..., n-1` without backtracking up to its
    /// first arrival in the last well; later returns are ignored.
    pub prefix_in_order_fraction: f64,
    /// Fraction that visits every well, first visits in well order
    /// (returns to earlier wells allowed).
    pub first_visits_in_order_fraction: f64,
    /// Most common first, ties by sequence.
    pub sequences: Vec<SequenceCount>,
}

/// Sequence counts for an ensemble.
pub fn transition_report(seqs: &[Vec<usize>], labels: &[String], dwell: usize) -> TransitionReport {
    let mut counts: BTreeMap<&Vec<usize>, usize> = BTreeMap::new();
    for s in seqs {
        *counts.entry(s).or_default() += 1;
    }
    let mut sequences: Vec<SequenceCount> = counts
        .into_iter()
        .map(|(s, count)| SequenceCount {
            sequence: s.clone(),
            labels: s.iter().map(|&k| labels[k].clone()).collect(),
            count,
        })
        .collect();
    sequences.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.sequence.cmp(&b.sequence)));
    let full: Vec<usize> = (0..labels.len()).collect();
    let n = seqs.len().max(1) as f64;
    let exact = seqs.iter().filter(|s| **s == full).count();
    let last = labels.len().saturating_sub(1);
    let prefix = seqs
        .iter()
        .filter(|s| match s.iter().position(|&k| k == last) {
            Some(end) => s[..=end] == full[..],
            None => false,
        })
        .count();
    let first_visits = seqs
        .iter()
        .filter(|s| {
            let mut seen: Vec<usize> = Vec::new();
            for &k in s.iter() {
                if !seen.contains(&k) {
                    seen.push(k);
                }
            }
            seen == full
        })
        .count();
    TransitionReport {
        trajectories: seqs.len(),
        dwell,
        in_order_fraction: exact as f64 / n,
        prefix_in_order_fraction: prefix as f64 / n,
        first_visits_in_order_fraction: first_visits as f64 / n,
        sequences,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationSummary {
    pub labels: Vec<String>,
    pub horizon: f64,
    /// Ensemble mean of the per-trajectory fractions.
    pub fractions: Vec<f64>,
    pub limit_measure: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramSummary {
    pub sigma: f64,
    pub burn_in: f64,
    pub samples: usize,
    pub trajectories: usize,
    pub avg_u: ChannelSummary,
    pub avg_v: ChannelSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSummary {
    pub mean: f64,
    pub std_dev: f64,
    pub std_error: f64,
}

impl From<&ChannelStats> for ChannelSummary {
    fn from(c: &ChannelStats) -> Self {
        Self {
            mean: c.mean,
            std_dev: c.std_dev,
            std_error: c.std_error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub histogram: HistogramSummary,
    pub occupation: OccupationSummary,
    pub transitions: TransitionReport,
}

/// Runs `run.trajectories` trajectories, trajectory `i` on rng stream `i`.
pub fn run_ensemble(cfg: &Config, system: &System) -> Result<Vec<Trajectory>, AppError> {
    let params = cfg.run_params()?;
    (0..cfg.run.trajectories)
        .into_par_iter()
        .map(|i| simulate(system, &params, &mut stream(cfg.seed, i as u64)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(AppError::from)
}

/// Ensemble statistics: `histogram.csv`, `stats.json`, `occupation.json`,
/// `transitions.json` and per-trajectory `diagnostics.csv`.
pub fn cmd_ensemble(cfg: &Config, out: &Path) -> Result<EnsembleSummary, AppError> {
    if cfg.run.burn_in >= cfg.run.t_end {
        return Err(ConfigError::Invalid {
            key: "run.burn_in".to_string(),
            message: format!("{} leaves no samples before t_end = {}", cfg.run.burn_in, cfg.run.t_end),
        }
        .into());
    }
    prepare(out)?;
    let system = cfg.system()?;
    let trajs = run_ensemble(cfg, &system)?;
    let raw = system.landscape.raw();
    let labels = raw.labels().to_vec();

    let hist = stationary_histogram(&trajs, cfg.run.burn_in, cfg.run.histogram_bins)?;
    let mut fractions = vec![0.0; raw.len()];
    for tr in &trajs {
        let occ = occupation(&tr.basin_series, &tr.times, raw.len(), tr.end_time())?;
        for (f, x) in fractions.iter_mut().zip(&occ.fractions) {
            *f += x / trajs.len() as f64;
        }
    }
    let seqs: Vec<Vec<usize>> = trajs
        .iter()
        .map(|t| transition_sequence(&t.basin_series, cfg.run.dwell))
        .collect();
    let summary = EnsembleSummary {
        histogram: HistogramSummary {
            sigma: cfg.run.sigma,
            burn_in: hist.burn_in,
            samples: hist.samples,
            trajectories: hist.trajectories,
            avg_u: (&hist.avg_u).into(),
            avg_v: (&hist.avg_v).into(),
        },
        occupation: OccupationSummary {
            labels: labels.clone(),
            horizon: cfg.run.t_end,
            fractions,
            limit_measure: raw.limit_measure().weights,
        },
        transitions: transition_report(&seqs, &labels, cfg.run.dwell),
    };

    let p = out.join("histogram.csv");
    write_histogram_csv(&p, &hist).map_err(io_err(&p))?;
    let p = out.join("diagnostics.csv");
    write_diagnostics_csv(&p, &trajs, true).map_err(io_err(&p))?;
    for (name, value) in [
        ("stats.json", serde_json::to_value(&summary.histogram)),
        ("occupation.json", serde_json::to_value(&summary.occupation)),
        ("transitions.json", serde_json::to_value(&summary.transitions)),
    ] {
        let p = out.join(name);
        write_json(&p, &value.expect("summaries serialize")).map_err(io_err(&p))?;
    }
    finish(
        out,
        RunManifest::new("ensemble", cfg),
        &[
            "histogram.csv",
            "diagnostics.csv",
            "stats.json",
            "occupation.json",
            "transitions.json",
        ],
    )?;
    Ok(summary)
}

/// Exit-time study from the basin of `run.initial`: `exit_study.json`.
/// Heavy censoring is reported in the output, not as an error.
pub fn cmd_exit_study(cfg: &Config, out: &Path) -> Result<ExitStudy, AppError> {
    let study = cfg.exit_study()?;
    prepare(out)?;
    let system = cfg.system()?;
    let template = cfg.run_params()?;
    let report = exit_rate_fit(&system, &template, &study)?;
    if report.unreliable {
        log::warn!("censoring above 10% at some sigma: {:?}", report.censoring);
    }
    let p = out.join("exit_study.json");
    write_json(&p, &report).map_err(io_err(&p))?;
    finish(out, RunManifest::new("exit-study", cfg), &["exit_study.json"])?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeSummary {
    pub labels: Vec<String>,
    pub hessian_dets: Vec<f64>,
    pub limit_measure: Vec<f64>,
    pub filter_width: f64,
    pub grad_tol: f64,
    pub barriers: Vec<QuasiPotentialReport>,
}

/// Smoothed grid and gradients in `landscape.csv`; determinants, limit
/// weights and the barrier table of adjacent pairs in `landscape.json`.
pub fn cmd_landscape(cfg: &Config, out: &Path) -> Result<LandscapeSummary, AppError> {
    prepare(out)?;
    let land = cfg.landscape()?;
    let raw = land.raw();
    let summary = LandscapeSummary {
        labels: raw.labels().to_vec(),
        hessian_dets: raw.hessian_dets(),
        limit_measure: raw.limit_measure().weights,
        filter_width: land.filter_width(),
        grad_tol: land.grad_tol(),
        barriers: barrier_table(&land, cfg.solver.domain_length),
    };
    let p = out.join("landscape.csv");
    write_landscape_csv(&p, &land).map_err(io_err(&p))?;
    let p = out.join("landscape.json");
    write_json(&p, &summary).map_err(io_err(&p))?;
    finish(
        out,
        RunManifest::new("landscape", cfg),
        &["landscape.csv", "landscape.json"],
    )?;
    Ok(summary)
}

/// Runs `f` on a pool of `jobs` threads (all cores when `None`).
pub fn with_jobs<T: Send>(
    jobs: Option<usize>,
    f: impl FnOnce() -> Result<T, AppError> + Send,
) -> Result<T, AppError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        b = b.num_threads(n.max(1));
    }
    b.build()?.install(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn transition_counts() {
        let labels: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let seqs = vec![vec![0, 1, 2], vec![0, 1], vec![0], vec![0, 2, 1], vec![0, 1, 2, 1, 2]];
        let r = transition_report(&seqs, &labels, 3);
        assert_eq!(r.in_order_fraction, 0.2);
        assert_eq!(r.prefix_in_order_fraction, 0.4);
        assert_eq!(r.first_visits_in_order_fraction, 0.4);
        assert_eq!(r.sequences.len(), 5);
        let full = r.sequences.iter().find(|s| s.sequence == vec![0, 1, 2]).unwrap();
        assert_eq!(full.labels, vec!["a", "b", "c"]);
        assert_eq!(full.count, 1);
        let r = transition_report(&[vec![0, 1], vec![0], vec![0, 1]], &labels, 3);
        assert_eq!(r.sequences[0].sequence, vec![0, 1]);
        assert_eq!(r.sequences[0].count, 2);
    }

    proptest! {
        #[test]
        fn sequence_counts_sum_to_n(seqs in prop::collection::vec(prop::collection::vec(0usize..4, 1..6), 1..40)) {
            let labels: Vec<String> = (0..4).map(|k| format!("w{k}")).collect();
            let r = transition_report(&seqs, &labels, 1);
            prop_assert_eq!(r.sequences.iter().map(|s| s.count).sum::<usize>(), seqs.len());
            prop_assert!(r.in_order_fraction <= r.prefix_in_order_fraction + 1e-15);
            prop_assert!(r.prefix_in_order_fraction <= r.first_visits_in_order_fraction + 1e-15);
        }
    }

    #[test]
    fn exit_codes() {
        let e: AppError = ConfigError::Missing("landscape.wells").into();
        assert_eq!(e.exit_code(), 2);
        let e: AppError = SolverError::NonFinite { step: 3 }.into();
        assert_eq!(e.exit_code(), 3);
        let e: AppError = LdpError::TooFewSigmas { min: 3, got: 0 }.into();
        assert_eq!(e.exit_code(), 2);
    }
}
