//! Large-deviation quantities: the quasi-potential of a profile, barrier
//! heights between basins, the discrete action of a recorded path, and
//! Monte Carlo exit-time studies compared against `2 * barrier`.
//!
//! Barriers are computed over spatially constant profiles, for which the
//! quasi-potential reduces to `|O| * F(point)`; the saddle is the lowest
//! point of the mollified potential on the raw basin boundary.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{spatial_mean, Trajectory};
use crate::landscape::{LandscapeError, MollifiedLandscape, Point};
use crate::rng::stream;
use crate::solver::{Boundary, Discretization, FieldState, RunParams, SolverError, Stepper, System};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LdpError {
    #[error(transparent)]
    Landscape(#[from] LandscapeError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("wells {0} and {1} share no boundary on the landscape grid")]
    NotAdjacent(usize, usize),
    #[error("well index {0} out of range")]
    NoSuchWell(usize),
    #[error("path needs at least 2 recorded states, got {0}")]
    PathTooShort(usize),
    #[error("path records are not uniformly spaced")]
    NonUniformPath,
    #[error("exit study needs at least {min} values of sigma, got {got}")]
    TooFewSigmas { min: usize, got: usize },
    #[error("sigma values must be positive, got {0}")]
    BadSigma(f64),
    #[error("exit study needs at least {min} trajectories per sigma, got {got}")]
    TooFewTrajectories { min: usize, got: usize },
}

/// Quasi-potential of a profile:
/// `U = ∫ [ d1/2 (u')² + d2/2 (v')² + F(u, v) ] dx`.
///
/// Nodal derivatives are centered in the interior and one-sided at
/// Neumann ends (wrapped for periodic grids); both terms use the same
/// trapezoidal weights as the L²-average.
pub fn quasi_potential(
    profile: &FieldState,
    landscape: &MollifiedLandscape,
    disc: &Discretization,
) -> Result<f64, LdpError> {
    let w = disc.weights();
    let [d1, d2] = disc.diffusion();
    let du = nodal_derivative(&profile.u, disc.h(), disc.boundary());
    let dv = nodal_derivative(&profile.v, disc.h(), disc.boundary());
    let mut total = 0.0;
    for j in 0..profile.len() {
        let f = landscape.potential_value([profile.u[j], profile.v[j]])?;
        total += w[j] * (0.5 * d1 * du[j] * du[j] + 0.5 * d2 * dv[j] * dv[j] + f);
    }
    Ok(total)
}

fn nodal_derivative(x: &[f64], h: f64, boundary: Boundary) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|j| match boundary {
            Boundary::Periodic => (x[(j + 1) % n] - x[(j + n - 1) % n]) / (2.0 * h),
            Boundary::Neumann if j == 0 => (x[1] - x[0]) / h,
            Boundary::Neumann if j == n - 1 => (x[n - 1] - x[n - 2]) / h,
            Boundary::Neumann => (x[j + 1] - x[j - 1]) / (2.0 * h),
        })
        .collect()
}

/// Barrier between two basins over constant-in-space profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiPotentialReport {
    pub from_well: usize,
    pub to_well: usize,
    /// `|O| * F(center_k)` for every well.
    pub u_min_per_well: Vec<f64>,
    /// `|O| * F(saddle)`.
    pub saddle_value: f64,
    /// `saddle_value - u_min_per_well[from_well]`, clamped at zero.
    pub barrier: f64,
    pub saddle_point: Point,
}

/// Lowest mollified potential on the raw boundary between wells `from`
/// and `to`, scaled by the domain length.
///
/// Every grid edge whose endpoints classify as `from` and `to` contributes
/// the point where the two quadratic branches cross. The best crossing is
/// then refined by golden-section search along the ridge curve, to
/// `1e-3` of a cell.
pub fn barrier(
    landscape: &MollifiedLandscape,
    from: usize,
    to: usize,
    domain_length: f64,
) -> Result<QuasiPotentialReport, LdpError> {
    let raw = landscape.raw();
    for k in [from, to] {
        if k >= raw.len() {
            return Err(LdpError::NoSuchWell(k));
        }
    }
    // the search itself is symmetric in the pair
    let (a, b) = (from.min(to), from.max(to));
    let ridge = Ridge::new(landscape, a, b);
    let m = landscape.size();
    let mut best: Option<(f64, Point)> = None;
    let mut class = vec![0usize; m * m];
    for i in 0..m {
        for j in 0..m {
            class[i * m + j] = raw.classify(landscape.node(i, j));
        }
    }
    for i in 0..m {
        for j in 0..m {
            let c0 = class[i * m + j];
            for (ii, jj) in [(i + 1, j), (i, j + 1)] {
                if ii >= m || jj >= m {
                    continue;
                }
                let c1 = class[ii * m + jj];
                if !((c0 == a && c1 == b) || (c0 == b && c1 == a)) {
                    continue;
                }
                let p = ridge.crossing(landscape.node(i, j), landscape.node(ii, jj));
                if !ridge.is_boundary(p) {
                    continue;
                }
                let f = landscape.potential_value(p)?;
                if best.is_none_or(|(bf, _)| f < bf) {
                    best = Some((f, p));
                }
            }
        }
    }
    let (coarse_f, coarse_p) = best.ok_or(LdpError::NotAdjacent(from, to))?;
    let (f, p) = ridge.refine(coarse_p, coarse_f, landscape.cell());

    let u_min_per_well: Vec<f64> = raw
        .wells()
        .iter()
        .map(|w| landscape.potential_value(w.center).map(|f| f * domain_length))
        .collect::<Result<_, _>>()?;
    let saddle_value = f * domain_length;
    Ok(QuasiPotentialReport {
        from_well: from,
        to_well: to,
        barrier: (saddle_value - u_min_per_well[from]).max(0.0),
        u_min_per_well,
        saddle_value,
        saddle_point: p,
    })
}

/// Zero set of `branch_a - branch_b`.
struct Ridge<'a> {
    landscape: &'a MollifiedLandscape,
    a: usize,
    b: usize,
}

impl<'a> Ridge<'a> {
    fn new(landscape: &'a MollifiedLandscape, a: usize, b: usize) -> Self {
        Self { landscape, a, b }
    }

    fn phi(&self, p: Point) -> f64 {
        let w = self.landscape.raw().wells();
        w[self.a].branch(p) - w[self.b].branch(p)
    }

    fn grad_phi(&self, p: Point) -> [f64; 2] {
        let w = self.landscape.raw().wells();
        let (wa, wb) = (&w[self.a], &w[self.b]);
        [
            2.0 * (wa.weight * (p[0] - wa.center[0]) - wb.weight * (p[0] - wb.center[0])),
            2.0 * (wa.weight * (p[1] - wa.center[1]) - wb.weight * (p[1] - wb.center[1])),
        ]
    }

    /// No third well is strictly lower at `p`.
    fn is_boundary(&self, p: Point) -> bool {
        let raw = self.landscape.raw();
        let own = raw.wells()[self.a].branch(p);
        let tol = 1e-12 * (1.0 + own.abs());
        raw.wells()
            .iter()
            .enumerate()
            .all(|(k, w)| k == self.a || k == self.b || w.branch(p) >= own - tol)
    }

    /// Bisection for the sign change of `phi` between `p` and `q`.
    fn crossing(&self, p: Point, q: Point) -> Point {
        let (mut lo, mut hi) = (0.0, 1.0);
        let at = |s: f64| [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])];
        let (f_p, f_q) = (self.phi(p), self.phi(q));
        if f_p == 0.0 {
            return p;
        }
        if f_q == 0.0 {
            return q;
        }
        let positive = f_p > 0.0;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if (self.phi(at(mid)) > 0.0) == positive {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        at(0.5 * (lo + hi))
    }

    /// Projects `p` onto the ridge along the gradient of `phi`.
    fn project(&self, mut p: Point) -> Point {
        for _ in 0..50 {
            let f = self.phi(p);
            let g = self.grad_phi(p);
            let g2 = g[0] * g[0] + g[1] * g[1];
            if g2 == 0.0 {
                break;
            }
            let step = f / g2;
            p = [p[0] - step * g[0], p[1] - step * g[1]];
            if step.abs() * g2.sqrt() < 1e-15 {
                break;
            }
        }
        p
    }

    fn value(&self, p: Point) -> f64 {
        self.landscape.potential_value(p).unwrap_or(f64::INFINITY)
    }

    /// Golden-section search along the ridge within two cells of `p0`.
    fn refine(&self, p0: Point, f0: f64, cell: f64) -> (f64, Point) {
        let g = self.grad_phi(p0);
        let norm = g[0].hypot(g[1]);
        if norm == 0.0 {
            return (f0, p0);
        }
        let t = [-g[1] / norm, g[0] / norm];
        let point = |s: f64| self.project([p0[0] + s * t[0], p0[1] + s * t[1]]);
        let eval = |s: f64| {
            let p = point(s);
            if self.is_boundary(p) {
                self.value(p)
            } else {
                f64::INFINITY
            }
        };
        let inv_phi = (5.0f64.sqrt() - 1.0) / 2.0;
        let (mut lo, mut hi) = (-2.0 * cell, 2.0 * cell);
        let mut x1 = hi - inv_phi * (hi - lo);
        let mut x2 = lo + inv_phi * (hi - lo);
        let (mut f1, mut f2) = (eval(x1), eval(x2));
        while hi - lo > 1e-3 * cell {
            if f1 <= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - inv_phi * (hi - lo);
                f1 = eval(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + inv_phi * (hi - lo);
                f2 = eval(x2);
            }
        }
        let s = 0.5 * (lo + hi);
        let f = eval(s);
        if f < f0 {
            (f, point(s))
        } else {
            (f0, p0)
        }
    }
}

/// Barriers out of `from` toward every adjacent well, skipping
/// non-adjacent pairs.
pub fn barrier_table(
    landscape: &MollifiedLandscape,
    domain_length: f64,
) -> Vec<QuasiPotentialReport> {
    let n = landscape.raw().len();
    let mut out = Vec::new();
    for from in 0..n {
        for to in 0..n {
            if from == to {
                continue;
            }
            if let Ok(r) = barrier(landscape, from, to, domain_length) {
                out.push(r);
            }
        }
    }
    out
}

/// Lowest barrier out of basin `from` (the exit cost of its basin).
pub fn exit_barrier(
    landscape: &MollifiedLandscape,
    from: usize,
    domain_length: f64,
) -> Result<QuasiPotentialReport, LdpError> {
    let n = landscape.raw().len();
    if from >= n {
        return Err(LdpError::NoSuchWell(from));
    }
    (0..n)
        .filter(|&k| k != from)
        .filter_map(|k| barrier(landscape, from, k, domain_length).ok())
        .min_by(|x, y| x.barrier.total_cmp(&y.barrier))
        .ok_or(LdpError::NotAdjacent(from, from))
}

/// Discrete action of a recorded path,
/// `S = 1/2 ∫∫ |∂φ/∂t + D A φ - f(φ)|² dx dt`,
/// with forward differences in time, the residual evaluated at the left
/// record, rectangle rule in `t` and trapezoid in `x`.
pub fn action_functional(
    path: &Trajectory,
    landscape: &MollifiedLandscape,
    disc: &Discretization,
) -> Result<f64, LdpError> {
    let states = &path.states;
    if states.len() < 2 {
        return Err(LdpError::PathTooShort(states.len()));
    }
    let dt = states[1].t - states[0].t;
    if !(dt > 0.0)
        || states
            .windows(2)
            .any(|w| ((w[1].t - w[0].t) - dt).abs() > 1e-9 * dt.max(1.0))
    {
        return Err(LdpError::NonUniformPath);
    }
    let w = disc.weights();
    let [d1, d2] = disc.diffusion();
    let n = disc.nodes();
    let mut au = vec![0.0; n];
    let mut av = vec![0.0; n];
    let mut total = 0.0;
    for pair in states.windows(2) {
        let (s0, s1) = (&pair[0], &pair[1]);
        disc.apply_laplacian(&s0.u, &mut au);
        disc.apply_laplacian(&s0.v, &mut av);
        let mut inner = 0.0;
        for j in 0..n {
            let f = landscape.drift([s0.u[j], s0.v[j]])?;
            let ru = (s1.u[j] - s0.u[j]) / dt + d1 * au[j] - f[0];
            let rv = (s1.v[j] - s0.v[j]) / dt + d2 * av[j] - f[1];
            inner += w[j] * (ru * ru + rv * rv);
        }
        total += 0.5 * inner * dt;
    }
    Ok(total)
}

/// Inputs of a Monte Carlo exit-time study.
#[derive(Debug, Clone)]
pub struct ExitStudyConfig {
    pub sigmas: Vec<f64>,
    pub trajectories: usize,
    /// Basin the runs start from (at its center).
    pub start_well: usize,
    /// Records outside the basin needed to confirm an exit.
    pub dwell: usize,
    /// Steps between classification records.
    pub record_stride: usize,
    /// Runs that have not exited by `t_max` are censored.
    pub t_max: f64,
    pub seed: u64,
}

/// Per-sigma mean exit times and the fitted log-slope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitStudy {
    pub sigmas: Vec<f64>,
    pub mean_exit: Vec<f64>,
    /// Standard error of each mean.
    pub exit_std_error: Vec<f64>,
    /// Fraction of runs per sigma that never exited.
    pub censoring: Vec<f64>,
    pub trajectories: usize,
    /// Least-squares slope of `ln(mean_exit)` against `1 / sigma^2`.
    pub fitted_slope: f64,
    pub fit_intercept: f64,
    /// Standard error of the slope from the per-sigma standard errors.
    pub slope_std_error: f64,
    pub predicted_slope: f64,
    pub barrier: f64,
    pub saddle_point: Point,
    /// True when any sigma censors more than 10% of its runs.
    pub unreliable: bool,
}

/// Censoring above this fraction flags a study as unreliable.
pub const MAX_CENSORING: f64 = 0.1;

pub const MIN_TRAJECTORIES: usize = 20;

/// Runs one trajectory from `params.initial` until the classified spatial
/// mean leaves `well` for `dwell` consecutive records. Returns the exit
/// time, or `None` if the run reached `t_max` first.
pub fn time_to_exit(
    system: &System,
    params: &RunParams,
    well: usize,
    dwell: usize,
    t_max: f64,
    rng: &mut crate::rng::StreamRng,
) -> Result<Option<f64>, SolverError> {
    let disc = &system.disc;
    let (h, bc) = (disc.h(), disc.boundary());
    let mut state = params.initial.state(disc.nodes())?;
    let mut stepper = Stepper::new(system, params);
    let steps = (t_max / disc.dt()).round() as usize;
    let stride = params.record_stride.max(1);
    let dwell = dwell.max(1);
    let mut outside_since: Option<f64> = None;
    let mut outside_count = 0;
    for n in 1..=steps {
        stepper.step(&mut state, rng)?;
        if n % stride != 0 {
            continue;
        }
        let basin = system.landscape.classify(spatial_mean(&state, h, bc));
        if basin == well {
            outside_since = None;
            outside_count = 0;
            continue;
        }
        let since = *outside_since.get_or_insert(state.t);
        outside_count += 1;
        if outside_count >= dwell {
            return Ok(Some(since));
        }
    }
    Ok(None)
}

/// Monte Carlo exit times at each sigma, fitted against `1 / sigma^2`.
///
/// Sigmas are reported in decreasing order; trajectory `i` at sorted
/// sigma index `s` uses rng stream `s * trajectories + i`.
/// Censored runs are excluded from the means and only counted.
pub fn exit_rate_fit(
    system: &System,
    template: &RunParams,
    study: &ExitStudyConfig,
) -> Result<ExitStudy, LdpError> {
    if study.sigmas.len() < 3 {
        return Err(LdpError::TooFewSigmas {
            min: 3,
            got: study.sigmas.len(),
        });
    }
    if let Some(&s) = study.sigmas.iter().find(|s| !(**s > 0.0)) {
        return Err(LdpError::BadSigma(s));
    }
    if study.trajectories < MIN_TRAJECTORIES {
        return Err(LdpError::TooFewTrajectories {
            min: MIN_TRAJECTORIES,
            got: study.trajectories,
        });
    }
    let mut sigmas = study.sigmas.clone();
    sigmas.sort_by(|a, b| b.total_cmp(a));
    let landscape = &system.landscape;
    let report = exit_barrier(landscape, study.start_well, system.disc.domain_length())?;
    let center = landscape.raw().wells()[study.start_well].center;

    let n = study.trajectories;
    let jobs: Vec<(usize, usize)> = (0..sigmas.len())
        .flat_map(|s| (0..n).map(move |i| (s, i)))
        .collect();
    let results: Vec<Result<Option<f64>, SolverError>> = jobs
        .par_iter()
        .map(|&(s, i)| {
            let params = RunParams {
                sigma: sigmas[s],
                record_stride: study.record_stride,
                initial: crate::solver::InitialCondition::Constant(center),
                ..template.clone()
            };
            let mut rng = stream(study.seed, (s * n + i) as u64);
            time_to_exit(system, &params, study.start_well, study.dwell, study.t_max, &mut rng)
        })
        .collect();

    let mut mean_exit = Vec::new();
    let mut exit_std_error = Vec::new();
    let mut censoring = Vec::new();
    for s in 0..sigmas.len() {
        let mut taus = Vec::with_capacity(n);
        for r in &results[s * n..(s + 1) * n] {
            if let Some(t) = r.clone()? {
                taus.push(t);
            }
        }
        censoring.push(1.0 - taus.len() as f64 / n as f64);
        let (mean, se) = if taus.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let m = taus.len() as f64;
            let mean = taus.iter().sum::<f64>() / m;
            let var = taus.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
            (mean, (var / m).sqrt())
        };
        mean_exit.push(mean);
        exit_std_error.push(se);
    }

    let x: Vec<f64> = sigmas.iter().map(|s| 1.0 / (s * s)).collect();
    let y: Vec<f64> = mean_exit.iter().map(|m| m.ln()).collect();
    let sy: Vec<f64> = mean_exit
        .iter()
        .zip(&exit_std_error)
        .map(|(m, se)| se / m)
        .collect();
    let (slope, intercept, slope_se) = least_squares(&x, &y, &sy);
    Ok(ExitStudy {
        sigmas: sigmas.clone(),
        mean_exit,
        exit_std_error,
        unreliable: censoring.iter().any(|&c| c > MAX_CENSORING),
        censoring,
        trajectories: n,
        fitted_slope: slope,
        fit_intercept: intercept,
        slope_std_error: slope_se,
        predicted_slope: 2.0 * report.barrier,
        barrier: report.barrier,
        saddle_point: report.saddle_point,
    })
}

/// Ordinary least squares `y = a x + b`; the slope error propagates the
/// per-point errors `sy` through the (unweighted) estimator.
fn least_squares(x: &[f64], y: &[f64], sy: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|xi| (xi - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(xi, yi)| (xi - mx) * (yi - my)).sum();
    let slope = sxy / sxx;
    let se = x
        .iter()
        .zip(sy)
        .map(|(xi, s)| ((xi - mx) / sxx * s).powi(2))
        .sum::<f64>()
        .sqrt();
    (slope, my - slope * mx, se)
}
