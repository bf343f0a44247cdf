//! Trajectory observables: L²-averages, basin classification over time,
//! first exits, occupation fractions, debounced transition sequences and
//! pooled stationary histograms.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::landscape::{Point, RawLandscape};
use crate::solver::{Boundary, FieldState, System};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("trajectory starts in basin {actual}, not {expected}")]
    WrongStartBasin { expected: usize, actual: usize },
    #[error("no samples after burn-in {burn_in}")]
    EmptyWindow { burn_in: f64 },
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("histogram needs at least one bin")]
    NoBins,
}

/// Trapezoidal weights over the whole domain for nodal values.
///
/// Neumann grids only store interior nodes; the boundary values are taken
/// equal to their neighbours (zero flux), which folds the half-cell
/// boundary weights into the first and last node. Periodic grids use the
/// plain periodic trapezoid rule. The weights sum to the domain length.
pub fn quadrature_weights(nodes: usize, h: f64, boundary: Boundary) -> Vec<f64> {
    let mut w = vec![h; nodes];
    if boundary == Boundary::Neumann {
        w[0] += 0.5 * h;
        w[nodes - 1] += 0.5 * h;
    }
    w
}

/// Root-mean-square of one channel over the domain.
pub fn l2_average_channel(values: &[f64], h: f64, boundary: Boundary) -> f64 {
    let w = quadrature_weights(values.len(), h, boundary);
    let length: f64 = w.iter().sum();
    let integral: f64 = values.iter().zip(&w).map(|(x, w)| w * x * x).sum();
    (integral / length).sqrt()
}

/// Spatial mean of one channel over the domain.
pub fn spatial_mean_channel(values: &[f64], h: f64, boundary: Boundary) -> f64 {
    let w = quadrature_weights(values.len(), h, boundary);
    let length: f64 = w.iter().sum();
    values.iter().zip(&w).map(|(x, w)| w * x).sum::<f64>() / length
}

/// `(Avg u, Avg v)`: the L²-averages of both channels.
pub fn l2_average(state: &FieldState, h: f64, boundary: Boundary) -> [f64; 2] {
    [
        l2_average_channel(&state.u, h, boundary),
        l2_average_channel(&state.v, h, boundary),
    ]
}

/// Spatial mean point `(mean u, mean v)`; this is the point that gets classified.
pub fn spatial_mean(state: &FieldState, h: f64, boundary: Boundary) -> Point {
    [
        spatial_mean_channel(&state.u, h, boundary),
        spatial_mean_channel(&state.v, h, boundary),
    ]
}

/// Recorded simulation output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Full snapshots; empty unless the run asked to keep them.
    pub states: Vec<FieldState>,
    pub avg_series: Vec<[f64; 2]>,
    pub mean_series: Vec<Point>,
    pub basin_series: Vec<usize>,
    /// Time between consecutive records.
    pub record_dt: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn end_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }
}

/// Builds a [`Trajectory`] record by record.
#[derive(Debug)]
pub struct TrajectoryRecorder<'a> {
    system: &'a System,
    keep_states: bool,
    traj: Trajectory,
}

impl<'a> TrajectoryRecorder<'a> {
    pub fn new(system: &'a System, keep_states: bool) -> Self {
        Self {
            system,
            keep_states,
            traj: Trajectory {
                times: Vec::new(),
                states: Vec::new(),
                avg_series: Vec::new(),
                mean_series: Vec::new(),
                basin_series: Vec::new(),
                record_dt: 0.0,
            },
        }
    }

    pub fn record(&mut self, state: &FieldState) {
        let disc = &self.system.disc;
        let (h, bc) = (disc.h(), disc.boundary());
        let mean = spatial_mean(state, h, bc);
        self.traj.times.push(state.t);
        self.traj.avg_series.push(l2_average(state, h, bc));
        self.traj.mean_series.push(mean);
        self.traj
            .basin_series
            .push(self.system.landscape.classify(mean));
        if self.keep_states {
            self.traj.states.push(state.clone());
        }
    }

    pub fn finish(mut self, record_dt: f64) -> Trajectory {
        self.traj.record_dt = record_dt;
        self.traj
    }
}

/// Basin of each recorded spatial-mean point.
pub fn classify_series(traj: &Trajectory, raw: &RawLandscape) -> Vec<usize> {
    traj.mean_series.iter().map(|&p| raw.classify(p)).collect()
}

/// An observed basin change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionEvent {
    pub t_exit: f64,
    pub from_basin: usize,
    pub to_basin: usize,
    /// False when the series ended before `dwell` records outside were seen.
    pub dwell_confirmed: bool,
}

/// First record at which the series leaves `basin` and stays out for
/// `dwell` consecutive records (the record itself included).
///
/// A final excursion that lasts to the end of the series but is shorter
/// than `dwell` is returned with `dwell_confirmed = false`.
pub fn first_exit(
    basins: &[usize],
    times: &[f64],
    basin: usize,
    dwell: usize,
) -> Result<Option<TransitionEvent>, DiagnosticsError> {
    let Some(&start) = basins.first() else {
        return Err(DiagnosticsError::EmptyTrajectory);
    };
    if start != basin {
        return Err(DiagnosticsError::WrongStartBasin {
            expected: basin,
            actual: start,
        });
    }
    let dwell = dwell.max(1);
    let mut run_start = None;
    for (i, &b) in basins.iter().enumerate() {
        if b == basin {
            run_start = None;
            continue;
        }
        let first = *run_start.get_or_insert(i);
        if i + 1 - first >= dwell {
            return Ok(Some(TransitionEvent {
                t_exit: times[first],
                from_basin: basin,
                to_basin: basins[first],
                dwell_confirmed: true,
            }));
        }
    }
    Ok(run_start.map(|first| TransitionEvent {
        t_exit: times[first],
        from_basin: basin,
        to_basin: basins[first],
        dwell_confirmed: false,
    }))
}

/// Fraction of time spent in each basin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationReport {
    pub fractions: Vec<f64>,
    pub horizon: f64,
}

/// Fraction of records with `t <= horizon` classified in each of `wells` basins.
pub fn occupation(
    basins: &[usize],
    times: &[f64],
    wells: usize,
    horizon: f64,
) -> Result<OccupationReport, DiagnosticsError> {
    let mut counts = vec![0usize; wells];
    let mut total = 0usize;
    for (&b, &t) in basins.iter().zip(times) {
        if t > horizon {
            break;
        }
        counts[b] += 1;
        total += 1;
    }
    if total == 0 {
        return Err(DiagnosticsError::EmptyTrajectory);
    }
    Ok(OccupationReport {
        fractions: counts.iter().map(|&c| c as f64 / total as f64).collect(),
        horizon,
    })
}

/// Visited basins in time order. A new basin is entered once it has been
/// held for `dwell` consecutive records; shorter runs are ignored.
pub fn transition_sequence(basins: &[usize], dwell: usize) -> Vec<usize> {
    let Some(&first) = basins.first() else {
        return Vec::new();
    };
    let dwell = dwell.max(1);
    let mut seq = vec![first];
    let mut i = 1;
    while i < basins.len() {
        let b = basins[i];
        let run = basins[i..].iter().take_while(|&&x| x == b).count();
        if b != *seq.last().unwrap() && run >= dwell {
            seq.push(b);
        }
        i += run;
    }
    seq
}

/// Summary of one pooled channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: f64,
    pub std_dev: f64,
    /// Standard error of `mean` from the spread of per-trajectory means
    /// (falls back to the naive pooled value for a single trajectory).
    pub std_error: f64,
    pub bins: Vec<HistogramBin>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Pooled post-burn-in distribution of `(Avg u, Avg v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryHistogram {
    pub burn_in: f64,
    pub samples: usize,
    pub trajectories: usize,
    pub avg_u: ChannelStats,
    pub avg_v: ChannelStats,
}

/// Pools every record with `t >= burn_in` from every trajectory.
pub fn stationary_histogram(
    ensemble: &[Trajectory],
    burn_in: f64,
    bins: usize,
) -> Result<StationaryHistogram, DiagnosticsError> {
    if bins == 0 {
        return Err(DiagnosticsError::NoBins);
    }
    let windows: Vec<Vec<[f64; 2]>> = ensemble
        .iter()
        .map(|tr| {
            tr.times
                .iter()
                .zip(&tr.avg_series)
                .filter(|(t, _)| **t >= burn_in)
                .map(|(_, a)| *a)
                .collect::<Vec<_>>()
        })
        .filter(|w: &Vec<[f64; 2]>| !w.is_empty())
        .collect();
    let samples: usize = windows.iter().map(Vec::len).sum();
    if samples == 0 {
        return Err(DiagnosticsError::EmptyWindow { burn_in });
    }
    let channel = |c: usize| {
        let pooled: Vec<f64> = windows.iter().flatten().map(|a| a[c]).collect();
        let per_traj: Vec<f64> = windows
            .iter()
            .map(|w| w.iter().map(|a| a[c]).sum::<f64>() / w.len() as f64)
            .collect();
        channel_stats(&pooled, &per_traj, bins)
    };
    Ok(StationaryHistogram {
        burn_in,
        samples,
        trajectories: windows.len(),
        avg_u: channel(0),
        avg_v: channel(1),
    })
}

fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn channel_stats(pooled: &[f64], per_traj: &[f64], bins: usize) -> ChannelStats {
    let (mean, std_dev) = mean_std(pooled);
    let std_error = if per_traj.len() >= 2 {
        let m = per_traj.len() as f64;
        let (_, s) = mean_std(per_traj);
        s * (m / (m - 1.0)).sqrt() / m.sqrt()
    } else {
        std_dev / (pooled.len() as f64).sqrt()
    };
    let lo = pooled.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = pooled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &x in pooled {
        let k = (((x - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let bins = counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| HistogramBin {
            lo: lo + k as f64 * width,
            hi: lo + (k + 1) as f64 * width,
            count,
        })
        .collect();
    ChannelStats {
        mean,
        std_dev,
        std_error,
        bins,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::Well;
    use proptest::prelude::*;

    fn times(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64).collect()
    }

    #[test]
    fn l2_average_examples() {
        for bc in [Boundary::Neumann, Boundary::Periodic] {
            assert!((l2_average_channel(&[-2.5; 7], 0.125, bc) - 2.5).abs() < 1e-14);
            assert_eq!(l2_average_channel(&[0.0; 7], 0.125, bc), 0.0);
        }
        let j = 10_000;
        let h = 1.0 / j as f64;
        let x: Vec<f64> = (1..j).map(|k| k as f64 * h).collect();
        let avg = l2_average_channel(&x, h, Boundary::Neumann);
        assert!((avg - 1.0 / 3.0f64.sqrt()).abs() < 1e-6, "{avg}");
    }

    #[test]
    fn weights_sum_to_domain_length() {
        let w = quadrature_weights(15, 1.0 / 16.0, Boundary::Neumann);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let w = quadrature_weights(16, 1.0 / 16.0, Boundary::Periodic);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn first_exit_examples() {
        let (k, j) = (2, 5);
        assert_eq!(first_exit(&[k, k, k], &times(3), k, 2).unwrap(), None);
        let e = first_exit(&[k, k, j, j, j], &times(5), k, 2).unwrap().unwrap();
        assert_eq!((e.t_exit, e.to_basin, e.dwell_confirmed), (2.0, j, true));
        let e = first_exit(&[k, j, k, k, j, j, j], &times(7), k, 2)
            .unwrap()
            .unwrap();
        assert_eq!(e.t_exit, 4.0);
        let e = first_exit(&[k, k, j], &times(3), k, 2).unwrap().unwrap();
        assert!(!e.dwell_confirmed);
        assert_eq!(
            first_exit(&[j, k], &times(2), k, 1),
            Err(DiagnosticsError::WrongStartBasin {
                expected: k,
                actual: j
            })
        );
    }

    #[test]
    fn occupation_examples() {
        let r = occupation(&[1, 1, 1, 1], &times(4), 3, 10.0).unwrap();
        assert_eq!(r.fractions, vec![0.0, 1.0, 0.0]);
        let r = occupation(&[0, 0, 1, 1], &times(4), 2, 10.0).unwrap();
        assert_eq!(r.fractions, vec![0.5, 0.5]);
        let r = occupation(&[0, 0, 1, 1, 1, 1], &times(6), 2, 1.0).unwrap();
        assert_eq!(r.fractions, vec![1.0, 0.0]);
    }

    #[test]
    fn transition_sequence_examples() {
        assert_eq!(transition_sequence(&[3, 3, 3], 2), vec![3]);
        let s = [1, 1, 2, 2, 2, 1, 2, 2, 3, 3, 3, 4, 4, 4];
        assert_eq!(transition_sequence(&s, 2), vec![1, 2, 3, 4]);
        assert_eq!(transition_sequence(&s, 1), vec![1, 2, 1, 2, 3, 4]);
    }

    #[test]
    fn classify_series_uses_the_mean_point() {
        let raw = RawLandscape::unlabelled(vec![Well::new(0.0, 0.0, 1.0), Well::new(2.0, 0.0, 1.0)])
            .unwrap();
        let traj = Trajectory {
            times: times(3),
            states: vec![],
            avg_series: vec![[0.0; 2]; 3],
            mean_series: vec![[2.0, 0.0], [1.0, 0.0], [0.1, 0.0]],
            basin_series: vec![],
            record_dt: 1.0,
        };
        // the middle point is the symmetric tie
        assert_eq!(classify_series(&traj, &raw), vec![1, 0, 0]);
    }

    fn fake_traj(avg: Vec<[f64; 2]>) -> Trajectory {
        let n = avg.len();
        Trajectory {
            times: times(n),
            states: vec![],
            mean_series: avg.clone(),
            avg_series: avg,
            basin_series: vec![0; n],
            record_dt: 1.0,
        }
    }

    #[test]
    fn histogram_of_settled_ensemble() {
        let e = vec![fake_traj(vec![[0.3, 0.7]; 20]); 3];
        let h = stationary_histogram(&e, 5.0, 4).unwrap();
        assert_eq!(h.samples, 45);
        assert!((h.avg_u.mean - 0.3).abs() < 1e-12 && h.avg_u.std_dev < 1e-12);
        assert!((h.avg_v.mean - 0.7).abs() < 1e-12 && h.avg_v.std_dev < 1e-12);
        assert_eq!(h.avg_u.bins.iter().map(|b| b.count).sum::<usize>(), 45);
        assert_eq!(
            stationary_histogram(&e, 50.0, 4),
            Err(DiagnosticsError::EmptyWindow { burn_in: 50.0 })
        );
    }

    #[test]
    fn histogram_moments() {
        let e = vec![
            fake_traj(vec![[1.0, 0.0], [3.0, 0.0]]),
            fake_traj(vec![[1.0, 0.0], [3.0, 0.0]]),
        ];
        let h = stationary_histogram(&e, 0.0, 2).unwrap();
        assert_eq!(h.avg_u.mean, 2.0);
        assert_eq!(h.avg_u.std_dev, 1.0);
        assert_eq!(h.avg_u.bins[0].count, 2);
        assert_eq!(h.avg_u.bins[1].count, 2);
    }

    proptest! {
        #[test]
        fn l2_average_is_homogeneous(
            x in proptest::collection::vec(-10.0..10.0f64, 4..40),
            c in -5.0..5.0f64,
            periodic in any::<bool>(),
        ) {
            let bc = if periodic { Boundary::Periodic } else { Boundary::Neumann };
            let h = 1.0 / (x.len() + 1) as f64;
            let scaled: Vec<f64> = x.iter().map(|y| c * y).collect();
            let a = l2_average_channel(&x, h, bc);
            let b = l2_average_channel(&scaled, h, bc);
            prop_assert!((b - c.abs() * a).abs() <= 1e-12 * (1.0 + b.abs()));
        }

        #[test]
        fn occupation_sums_to_one(series in proptest::collection::vec(0usize..4, 1..200)) {
            let t = times(series.len());
            let r = occupation(&series, &t, 4, f64::INFINITY).unwrap();
            prop_assert!((r.fractions.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn first_exit_is_monotone_in_dwell(
            tail in proptest::collection::vec(0usize..3, 0..80),
            d1 in 1usize..8, extra in 0usize..8,
        ) {
            let mut s = vec![0];
            s.extend(tail);
            let t = times(s.len());
            let a = first_exit(&s, &t, 0, d1).unwrap();
            let b = first_exit(&s, &t, 0, d1 + extra).unwrap();
            match (a, b) {
                (Some(a), Some(b)) => prop_assert!(b.t_exit >= a.t_exit),
                (None, Some(_)) => prop_assert!(false, "larger dwell found an exit"),
                _ => {}
            }
        }

        #[test]
        fn transition_sequence_has_no_repeats(
            s in proptest::collection::vec(0usize..4, 0..120), dwell in 1usize..6,
        ) {
            let seq = transition_sequence(&s, dwell);
            prop_assert!(seq.windows(2).all(|w| w[0] != w[1]));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn recorded_series_are_aligned(stride in 1usize..7, steps in 0usize..60, seed in any::<u64>(), keep in any::<bool>()) {
            use crate::landscape::{GridSpec, MollifiedLandscape};
            use crate::noise::{NoiseKind, NoiseModel};
            use crate::solver::{simulate, Discretization, RunParams};
            let raw = RawLandscape::unlabelled(vec![Well::new(0.0, 0.0, 1.0), Well::new(1.0, 0.0, 1.0)]).unwrap();
            let bounds = raw.default_bounds();
            let land = MollifiedLandscape::new(raw, 0.05, GridSpec { bounds, size: 64 }).unwrap();
            let disc = Discretization::new(8, Boundary::Neumann, 1.0, 1.0, 0.01, 1.0).unwrap();
            let noise = NoiseModel::new(NoiseKind::Qwiener { l: 0.1 }, disc.noise_grid(), 1e-10).unwrap();
            let sys = System::new(land, noise, disc).unwrap();
            let mut params = RunParams::new(0.05, steps as f64 * 0.01, [0.1, 0.0]);
            params.record_stride = stride;
            params.keep_states = keep;
            let tr = simulate(&sys, &params, &mut crate::rng::stream(seed, 0)).unwrap();
            prop_assert_eq!(tr.len(), 1 + steps / stride);
            prop_assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
            prop_assert_eq!(tr.avg_series.len(), tr.len());
            prop_assert_eq!(tr.mean_series.len(), tr.len());
            prop_assert_eq!(tr.basin_series.len(), tr.len());
            prop_assert_eq!(tr.states.len(), if keep { tr.len() } else { 0 });
        }
    }
}
