//! Stochastic reaction–diffusion on multi-well potential landscapes.
//!
//! A pair of fields `(u, v)` on a 1D domain follows
//!
//! ```text
//! du = [d1 u_xx - dF/du (u, v)] dt + sigma dW1
//! dv = [d2 v_xx - dF/dv (u, v)] dt + sigma dW2
//! ```
//!
//! where `F` is a min-of-quadratics landscape smoothed by a Gaussian filter
//! and `W1`, `W2` are independent spatially correlated Wiener processes.
//!
//! * [`landscape`]: raw and mollified potentials, basins, limit weights.
//! * [`noise`]: circulant-embedding sampler for the noise increments.
//! * [`solver`]: finite differences and semi-implicit Euler–Maruyama.
//! * [`diagnostics`]: averages, exits, occupation, histograms.
//! * [`ldp`]: quasi-potential, barriers, action functional, exit studies.
//! * [`config`] and [`app`]: configuration files and the command drivers
//!   used by the `landscape-spde` binary.

pub mod app;
pub mod config;
pub mod diagnostics;
pub mod export;
pub mod landscape;
pub mod ldp;
pub mod noise;
pub mod rng;
pub mod solver;

pub use diagnostics::Trajectory;
pub use landscape::{MollifiedLandscape, Point, RawLandscape, Well};
pub use noise::{NoiseKind, NoiseModel};
pub use solver::{simulate, Boundary, Discretization, FieldState, RunParams, System};
