//! Finite-difference semi-implicit Euler–Maruyama solver.
//!
//! Space is discretized by the centered-difference negative Laplacian `A`
//! (homogeneous Neumann on the interior nodes, or periodic). Each step
//! treats diffusion implicitly and the landscape drift plus noise
//! explicitly:
//!
//! ```text
//! u_{n+1} = (I + dt d1 A)^{-1} [u_n + f(u_n, v_n) dt + sigma dW1_n]
//! v_{n+1} = (I + dt d2 A)^{-1} [v_n + g(u_n, v_n) dt + sigma dW2_n]
//! ```

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{quadrature_weights, Trajectory, TrajectoryRecorder};
use crate::landscape::{MollifiedLandscape, Point};
use crate::noise::{NoiseGrid, NoiseIncrement, NoiseModel, NoiseScratch};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("need at least 4 grid intervals, got {0}")]
    TooFewIntervals(usize),
    #[error("invalid discretization parameter {name} = {value}")]
    BadParameter { name: &'static str, value: f64 },
    #[error("state has {got} nodes, discretization expects {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("noise grid {noise:?} does not match the discretization grid {grid:?}")]
    NoiseGridMismatch { noise: NoiseGrid, grid: NoiseGrid },
    #[error("increment dt {got} differs from the step dt {expected}")]
    IncrementDt { expected: f64, got: f64 },
    #[error("trajectory left the landscape bounds at t = {t} (node {node})")]
    DomainEscape { t: f64, node: usize },
    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },
    #[error("implicit solve residual {residual} at step {step}")]
    Residual { step: usize, residual: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    #[default]
    Neumann,
    Periodic,
}

/// Factored `I + c A` for one diffusion channel.
#[derive(Debug, Clone)]
pub struct ImplicitOperator {
    coeff: f64,
    n: usize,
    h2: f64,
    boundary: Boundary,
    factor: Option<Thomas>,
    cyclic: Option<CyclicCorrection>,
}

/// Prefactored Thomas sweep for a tridiagonal matrix.
#[derive(Debug, Clone)]
struct Thomas {
    lower: Vec<f64>,
    upper_prime: Vec<f64>,
    inv_denom: Vec<f64>,
}

impl Thomas {
    fn new(lower: Vec<f64>, diag: &[f64], upper: &[f64]) -> Self {
        let n = diag.len();
        let mut upper_prime = vec![0.0; n];
        let mut inv_denom = vec![0.0; n];
        inv_denom[0] = 1.0 / diag[0];
        upper_prime[0] = upper[0] * inv_denom[0];
        for i in 1..n {
            let denom = diag[i] - lower[i] * upper_prime[i - 1];
            inv_denom[i] = 1.0 / denom;
            upper_prime[i] = if i + 1 < n { upper[i] * inv_denom[i] } else { 0.0 };
        }
        Self {
            lower,
            upper_prime,
            inv_denom,
        }
    }

    fn solve(&self, x: &mut [f64]) {
        let n = x.len();
        x[0] *= self.inv_denom[0];
        for i in 1..n {
            x[i] = (x[i] - self.lower[i] * x[i - 1]) * self.inv_denom[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.upper_prime[i] * x[i + 1];
        }
    }
}

/// Sherman–Morrison data for the periodic corners.
#[derive(Debug, Clone)]
struct CyclicCorrection {
    z: Vec<f64>,
    ratio: f64,
    denom: f64,
}

impl ImplicitOperator {
    /// Factors `I + coeff * A` where `A` is the negative Laplacian on `n`
    /// nodes with spacing `h`. A zero coefficient gives the identity.
    pub fn new(n: usize, h: f64, boundary: Boundary, coeff: f64) -> Self {
        let h2 = h * h;
        let mut op = Self {
            coeff,
            n,
            h2,
            boundary,
            factor: None,
            cyclic: None,
        };
        if coeff == 0.0 {
            return op;
        }
        let off = -coeff / h2;
        let lower = vec![off; n];
        let upper = vec![off; n];
        let mut diag: Vec<f64> = (0..n)
            .map(|i| 1.0 + coeff * laplacian_diag(i, n, boundary) / h2)
            .collect();
        match boundary {
            Boundary::Neumann => {
                op.factor = Some(Thomas::new(lower, &diag, &upper));
            }
            Boundary::Periodic => {
                // corners A[0][n-1] = A[n-1][0] = off
                let gamma = -diag[0];
                let (alpha, beta) = (off, off);
                diag[0] -= gamma;
                diag[n - 1] -= alpha * beta / gamma;
                let thomas = Thomas::new(lower, &diag, &upper);
                let mut z = vec![0.0; n];
                z[0] = gamma;
                z[n - 1] = alpha;
                thomas.solve(&mut z);
                let ratio = beta / gamma;
                let denom = 1.0 + z[0] + ratio * z[n - 1];
                op.factor = Some(thomas);
                op.cyclic = Some(CyclicCorrection { z, ratio, denom });
            }
        }
        op
    }

    pub fn coefficient(&self) -> f64 {
        self.coeff
    }

    /// Solves `(I + coeff A) x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let Some(thomas) = &self.factor else {
            return;
        };
        thomas.solve(b);
        if let Some(c) = &self.cyclic {
            let n = b.len();
            let scale = (b[0] + c.ratio * b[n - 1]) / c.denom;
            for (x, z) in b.iter_mut().zip(&c.z) {
                *x -= scale * z;
            }
        }
    }

    /// Computes `(I + coeff A) x` into `out`.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        apply_laplacian(x, self.h2, self.boundary, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = xi + self.coeff * *o;
        }
    }

    /// `|| (I + coeff A) x - b ||_inf`.
    pub fn residual(&self, x: &[f64], b: &[f64]) -> f64 {
        let mut out = vec![0.0; self.n];
        self.apply(x, &mut out);
        out.iter()
            .zip(b)
            .map(|(o, bi)| (o - bi).abs())
            .fold(0.0, f64::max)
    }
}

/// Diagonal of `h^2 A`.
fn laplacian_diag(i: usize, n: usize, boundary: Boundary) -> f64 {
    match boundary {
        Boundary::Neumann if i == 0 || i == n - 1 => 1.0,
        _ => 2.0,
    }
}

/// `out = A x` for the negative Laplacian with `h2 = h^2`.
pub fn apply_laplacian(x: &[f64], h2: f64, boundary: Boundary, out: &mut [f64]) {
    let n = x.len();
    for i in 0..n {
        let (left, right) = match boundary {
            Boundary::Neumann => (
                if i == 0 { x[0] } else { x[i - 1] },
                if i == n - 1 { x[n - 1] } else { x[i + 1] },
            ),
            Boundary::Periodic => (x[(i + n - 1) % n], x[(i + 1) % n]),
        };
        out[i] = (2.0 * x[i] - left - right) / h2;
    }
}

/// Spatial grid, diffusion constants, time step and the factored implicit
/// operators for both channels.
#[derive(Debug, Clone)]
pub struct Discretization {
    intervals: usize,
    h: f64,
    domain_length: f64,
    boundary: Boundary,
    d1: f64,
    d2: f64,
    dt: f64,
    ops: [ImplicitOperator; 2],
}

impl Discretization {
    /// `intervals` is J: Neumann grids keep the `J - 1` interior nodes,
    /// periodic grids keep `J` nodes. Diffusion constants may be zero,
    /// which switches diffusion off for that channel.
    pub fn new(
        intervals: usize,
        boundary: Boundary,
        d1: f64,
        d2: f64,
        dt: f64,
        domain_length: f64,
    ) -> Result<Self, SolverError> {
        if intervals < 4 {
            return Err(SolverError::TooFewIntervals(intervals));
        }
        for (name, value) in [("d1", d1), ("d2", d2)] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(SolverError::BadParameter { name, value });
            }
        }
        for (name, value) in [("dt", dt), ("domain_length", domain_length)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(SolverError::BadParameter { name, value });
            }
        }
        let h = domain_length / intervals as f64;
        let n = match boundary {
            Boundary::Neumann => intervals - 1,
            Boundary::Periodic => intervals,
        };
        let ops = [
            ImplicitOperator::new(n, h, boundary, dt * d1),
            ImplicitOperator::new(n, h, boundary, dt * d2),
        ];
        Ok(Self {
            intervals,
            h,
            domain_length,
            boundary,
            d1,
            d2,
            dt,
            ops,
        })
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    /// Number of unknowns per channel.
    pub fn nodes(&self) -> usize {
        match self.boundary {
            Boundary::Neumann => self.intervals - 1,
            Boundary::Periodic => self.intervals,
        }
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn domain_length(&self) -> f64 {
        self.domain_length
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn diffusion(&self) -> [f64; 2] {
        [self.d1, self.d2]
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Position of unknown `j`.
    pub fn x(&self, j: usize) -> f64 {
        match self.boundary {
            Boundary::Neumann => (j + 1) as f64 * self.h,
            Boundary::Periodic => j as f64 * self.h,
        }
    }

    /// Grid description for building a matching [`NoiseModel`].
    pub fn noise_grid(&self) -> NoiseGrid {
        NoiseGrid {
            points: self.nodes(),
            spacing: self.h,
            periodic: self.boundary == Boundary::Periodic,
        }
    }

    /// Implicit operator of channel 0 (`u`) or 1 (`v`).
    pub fn operator(&self, channel: usize) -> &ImplicitOperator {
        &self.ops[channel]
    }

    /// Dense `A` (negative Laplacian) for inspection and tests.
    pub fn laplacian_dense(&self) -> Vec<Vec<f64>> {
        let n = self.nodes();
        let mut rows = vec![vec![0.0; n]; n];
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = 0.0);
            e[j] = 1.0;
            apply_laplacian(&e, self.h * self.h, self.boundary, &mut col);
            for i in 0..n {
                rows[i][j] = col[i];
            }
        }
        rows
    }

    /// Applies `A` to `x`.
    pub fn apply_laplacian(&self, x: &[f64], out: &mut [f64]) {
        apply_laplacian(x, self.h * self.h, self.boundary, out);
    }

    /// Quadrature weights over the whole domain for nodal values.
    pub fn weights(&self) -> Vec<f64> {
        quadrature_weights(self.nodes(), self.h, self.boundary)
    }
}

/// Snapshot of both fields at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldState {
    pub t: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl FieldState {
    pub fn constant(t: f64, nodes: usize, p: Point) -> Self {
        Self {
            t,
            u: vec![p[0]; nodes],
            v: vec![p[1]; nodes],
        }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }
}

/// Additive drift hook, evaluated once per step for all nodes.
pub trait Forcing: Send + Sync + fmt::Debug {
    /// Adds the forcing at time `t` for state `(u, v)` into `fu`, `fv`.
    fn add(&self, t: f64, u: &[f64], v: &[f64], fu: &mut [f64], fv: &mut [f64]);
}

/// Spatially uniform pull of the field mean toward `target`:
/// `rate * (target - mean)` at every node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PullToward {
    pub target: Point,
    pub rate: f64,
}

impl Forcing for PullToward {
    fn add(&self, _t: f64, u: &[f64], v: &[f64], fu: &mut [f64], fv: &mut [f64]) {
        let n = u.len() as f64;
        let mu = u.iter().sum::<f64>() / n;
        let mv = v.iter().sum::<f64>() / n;
        let pu = self.rate * (self.target[0] - mu);
        let pv = self.rate * (self.target[1] - mv);
        fu.iter_mut().for_each(|x| *x += pu);
        fv.iter_mut().for_each(|x| *x += pv);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialCondition {
    /// The same point at every node.
    Constant(Point),
    /// Explicit nodal values.
    Profile { u: Vec<f64>, v: Vec<f64> },
}

impl InitialCondition {
    pub fn state(&self, nodes: usize) -> Result<FieldState, SolverError> {
        match self {
            Self::Constant(p) => Ok(FieldState::constant(0.0, nodes, *p)),
            Self::Profile { u, v } => {
                for got in [u.len(), v.len()] {
                    if got != nodes {
                        return Err(SolverError::LengthMismatch {
                            expected: nodes,
                            got,
                        });
                    }
                }
                Ok(FieldState {
                    t: 0.0,
                    u: u.clone(),
                    v: v.clone(),
                })
            }
        }
    }
}

/// Per-run parameters. Both channels share the noise amplitude `sigma`.
#[derive(Debug, Clone)]
pub struct RunParams {
    pub sigma: f64,
    pub t_end: f64,
    pub record_stride: usize,
    pub initial: InitialCondition,
    pub forcing: Option<Arc<dyn Forcing>>,
    /// Keep full field snapshots in the trajectory (diagnostics are always kept).
    pub keep_states: bool,
}

impl RunParams {
    pub fn new(sigma: f64, t_end: f64, initial: Point) -> Self {
        Self {
            sigma,
            t_end,
            record_stride: 1,
            initial: InitialCondition::Constant(initial),
            forcing: None,
            keep_states: false,
        }
    }

    pub fn steps(&self, dt: f64) -> usize {
        (self.t_end / dt).round() as usize
    }

    fn validate(&self) -> Result<(), SolverError> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(SolverError::BadParameter {
                name: "sigma",
                value: self.sigma,
            });
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(SolverError::BadParameter {
                name: "t_end",
                value: self.t_end,
            });
        }
        if self.record_stride == 0 {
            return Err(SolverError::BadParameter {
                name: "record_stride",
                value: 0.0,
            });
        }
        Ok(())
    }
}

/// Everything a trajectory reads but never mutates.
#[derive(Debug, Clone)]
pub struct System {
    pub landscape: MollifiedLandscape,
    pub noise: NoiseModel,
    pub disc: Discretization,
}

impl System {
    pub fn new(
        landscape: MollifiedLandscape,
        noise: NoiseModel,
        disc: Discretization,
    ) -> Result<Self, SolverError> {
        if noise.grid() != disc.noise_grid() {
            return Err(SolverError::NoiseGridMismatch {
                noise: noise.grid(),
                grid: disc.noise_grid(),
            });
        }
        let stiffness = disc.dt() * 2.0 * landscape.raw().max_weight();
        if stiffness > 0.5 {
            log::warn!(
                "dt * 2 * max weight = {stiffness} exceeds 0.5; explicit drift may be inaccurate"
            );
        }
        Ok(Self {
            landscape,
            noise,
            disc,
        })
    }
}

/// Mutable work buffers for stepping one trajectory.
#[derive(Debug)]
pub struct Stepper<'a> {
    system: &'a System,
    params: &'a RunParams,
    inc: NoiseIncrement,
    scratch: NoiseScratch,
    fu: Vec<f64>,
    fv: Vec<f64>,
    steps_taken: usize,
}

/// Residuals are spot-checked on every `RESIDUAL_CHECK_EVERY`-th step.
pub const RESIDUAL_CHECK_EVERY: usize = 100;
/// Largest accepted implicit-solve residual, relative to `max(1, |b|_inf)`.
pub const RESIDUAL_TOL: f64 = 1e-10;

impl<'a> Stepper<'a> {
    pub fn new(system: &'a System, params: &'a RunParams) -> Self {
        let n = system.disc.nodes();
        Self {
            system,
            params,
            inc: NoiseIncrement::zeros(n, system.disc.dt()),
            scratch: NoiseScratch::default(),
            fu: vec![0.0; n],
            fv: vec![0.0; n],
            steps_taken: 0,
        }
    }

    /// Draws fresh noise and advances `state` by one step.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        state: &mut FieldState,
        rng: &mut R,
    ) -> Result<(), SolverError> {
        let dt = self.system.disc.dt();
        if self.params.sigma > 0.0 {
            self.system.noise.sample_into(
                dt,
                rng,
                &mut self.scratch,
                &mut self.inc.dw1,
                &mut self.inc.dw2,
            );
        }
        let check = self.steps_taken.is_multiple_of(RESIDUAL_CHECK_EVERY);
        let inc = std::mem::replace(&mut self.inc, NoiseIncrement::zeros(0, dt));
        let result = self.advance(state, &inc, check);
        self.inc = inc;
        result
    }

    /// Advances `state` with a caller-supplied increment.
    pub fn advance(
        &mut self,
        state: &mut FieldState,
        inc: &NoiseIncrement,
        check_residual: bool,
    ) -> Result<(), SolverError> {
        let sys = self.system;
        let dt = sys.disc.dt();
        let n = sys.disc.nodes();
        if state.len() != n || state.v.len() != n {
            return Err(SolverError::LengthMismatch {
                expected: n,
                got: state.len(),
            });
        }
        let sigma = self.params.sigma;
        if sigma > 0.0 && inc.dt != dt {
            return Err(SolverError::IncrementDt {
                expected: dt,
                got: inc.dt,
            });
        }

        for j in 0..n {
            let d = sys
                .landscape
                .drift([state.u[j], state.v[j]])
                .map_err(|_| SolverError::DomainEscape { t: state.t, node: j })?;
            self.fu[j] = d[0];
            self.fv[j] = d[1];
        }
        if let Some(forcing) = &self.params.forcing {
            forcing.add(state.t, &state.u, &state.v, &mut self.fu, &mut self.fv);
        }
        if sigma > 0.0 {
            for j in 0..n {
                state.u[j] += self.fu[j] * dt + sigma * inc.dw1[j];
                state.v[j] += self.fv[j] * dt + sigma * inc.dw2[j];
            }
        } else {
            for j in 0..n {
                state.u[j] += self.fu[j] * dt;
                state.v[j] += self.fv[j] * dt;
            }
        }

        if check_residual {
            // keep the right-hand sides to verify the solves
            self.fu.copy_from_slice(&state.u);
            self.fv.copy_from_slice(&state.v);
        }
        sys.disc.ops[0].solve_in_place(&mut state.u);
        sys.disc.ops[1].solve_in_place(&mut state.v);
        if check_residual {
            for (ch, (x, b)) in [(&state.u, &self.fu), (&state.v, &self.fv)]
                .into_iter()
                .enumerate()
            {
                let scale = b.iter().fold(1.0f64, |m, y| m.max(y.abs()));
                let residual = sys.disc.ops[ch].residual(x, b) / scale;
                if residual > RESIDUAL_TOL {
                    return Err(SolverError::Residual {
                        step: self.steps_taken,
                        residual,
                    });
                }
            }
        }

        self.steps_taken += 1;
        state.t = self.steps_taken as f64 * dt;
        if !state.is_finite() {
            return Err(SolverError::NonFinite {
                step: self.steps_taken,
            });
        }
        Ok(())
    }

    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }
}

/// One semi-implicit Euler–Maruyama step with an explicit increment.
pub fn em_step(
    system: &System,
    params: &RunParams,
    state: &FieldState,
    inc: &NoiseIncrement,
) -> Result<FieldState, SolverError> {
    let mut next = state.clone();
    let mut stepper = Stepper::new(system, params);
    stepper.steps_taken = (state.t / system.disc.dt()).round() as usize;
    stepper.advance(&mut next, inc, true)?;
    Ok(next)
}

/// Integrates from the initial condition to `t_end`, recording every
/// `record_stride` steps.
pub fn simulate<R: Rng + ?Sized>(
    system: &System,
    params: &RunParams,
    rng: &mut R,
) -> Result<Trajectory, SolverError> {
    params.validate()?;
    let mut state = params.initial.state(system.disc.nodes())?;
    for j in 0..state.len() {
        if !system.landscape.bounds().contains([state.u[j], state.v[j]]) {
            return Err(SolverError::DomainEscape { t: 0.0, node: j });
        }
    }
    let steps = params.steps(system.disc.dt());
    let mut recorder = TrajectoryRecorder::new(system, params.keep_states);
    recorder.record(&state);
    let mut stepper = Stepper::new(system, params);
    for n in 1..=steps {
        stepper.step(&mut state, rng)?;
        if n % params.record_stride == 0 {
            recorder.record(&state);
        }
    }
    Ok(recorder.finish(system.disc.dt() * params.record_stride as f64))
}
