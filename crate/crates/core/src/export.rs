//! CSV and JSON writers.
//!
//! Floats use Rust's shortest round-trip formatting, so every number in
//! an export parses back to the exact `f64` and reruns are byte-identical.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::diagnostics::{StationaryHistogram, Trajectory};
use crate::landscape::MollifiedLandscape;
use crate::solver::Discretization;

fn create(path: &Path) -> io::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Field snapshots, one row per node: `t,node,x,u,v`.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory, disc: &Discretization) -> io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "t,node,x,u,v")?;
    for s in &traj.states {
        for j in 0..s.len() {
            writeln!(w, "{},{},{},{},{}", s.t, j, disc.x(j), s.u[j], s.v[j])?;
        }
    }
    w.flush()
}

/// `t,avg_u,avg_v,basin`, optionally prefixed by a trajectory index column.
pub fn write_diagnostics_csv(path: &Path, trajs: &[Trajectory], with_index: bool) -> io::Result<()> {
    let mut w = create(path)?;
    if with_index {
        write!(w, "trajectory,")?;
    }
    writeln!(w, "t,avg_u,avg_v,basin")?;
    for (i, tr) in trajs.iter().enumerate() {
        for k in 0..tr.len() {
            if with_index {
                write!(w, "{i},")?;
            }
            let a = tr.avg_series[k];
            writeln!(w, "{},{},{},{}", tr.times[k], a[0], a[1], tr.basin_series[k])?;
        }
    }
    w.flush()
}

/// `channel,bin_lo,bin_hi,count` with channel `avg_u` or `avg_v`.
pub fn write_histogram_csv(path: &Path, hist: &StationaryHistogram) -> io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "channel,bin_lo,bin_hi,count")?;
    for (name, stats) in [("avg_u", &hist.avg_u), ("avg_v", &hist.avg_v)] {
        for b in &stats.bins {
            writeln!(w, "{name},{},{},{}", b.lo, b.hi, b.count)?;
        }
    }
    w.flush()
}

/// Smoothed grid, row-major with `u` outer: `u,v,F,dFdu,dFdv`.
pub fn write_landscape_csv(path: &Path, land: &MollifiedLandscape) -> io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "u,v,F,dFdu,dFdv")?;
    let m = land.size();
    for i in 0..m {
        for j in 0..m {
            let p = land.node(i, j);
            let g = land.node_gradient(i, j);
            writeln!(w, "{},{},{},{},{}", p[0], p[1], land.node_value(i, j), g[0], g[1])?;
        }
    }
    w.flush()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// What was run and what it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: Config,
    /// File name to hex SHA-256.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, config: &Config) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            config: config.clone(),
            outputs: BTreeMap::new(),
        }
    }

    /// Records the digest of `dir/name`.
    pub fn add(&mut self, dir: &Path, name: &str) -> io::Result<()> {
        let digest = sha256_file(&dir.join(name))?;
        self.outputs.insert(name.to_string(), digest);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::{ChannelStats, HistogramBin};

    #[test]
    fn floats_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let traj = Trajectory {
            times: vec![0.0, 0.1 + 0.2],
            states: vec![],
            avg_series: vec![[1.0 / 3.0, 1e-300], [f64::MAX, -0.0]],
            mean_series: vec![[0.0; 2]; 2],
            basin_series: vec![3, 1],
            record_dt: 0.3,
        };
        let path = dir.path().join("d.csv");
        write_diagnostics_csv(&path, std::slice::from_ref(&traj), false).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let rows: Vec<Vec<f64>> = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
            .collect();
        assert_eq!(rows[1][0], 0.1 + 0.2);
        assert_eq!(rows[0][1], 1.0 / 3.0);
        assert_eq!(rows[0][2], 1e-300);
        assert_eq!(rows[1][1], f64::MAX);
        assert_eq!(rows[1][3], 1.0);
        assert!(text.starts_with("t,avg_u,avg_v,basin\n"));
    }

    #[test]
    fn histogram_rows_per_channel() {
        let dir = tempfile::tempdir().unwrap();
        let stats = |c| ChannelStats {
            mean: 0.0,
            std_dev: 0.0,
            std_error: 0.0,
            bins: vec![HistogramBin { lo: 0.0, hi: 0.5, count: c }, HistogramBin { lo: 0.5, hi: 1.0, count: 0 }],
        };
        let h = StationaryHistogram {
            burn_in: 1.0,
            samples: 4,
            trajectories: 1,
            avg_u: stats(4),
            avg_v: stats(4),
        };
        let path = dir.path().join("h.csv");
        write_histogram_csv(&path, &h).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.contains("avg_v,0,0.5,4\n"));
    }

    #[test]
    fn digest_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x");
        std::fs::write(&p, b"abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
