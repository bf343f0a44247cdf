//! Multi-well potential landscapes.
//!
//! The raw potential is the pointwise minimum of weighted squared distances
//! to a set of well centers,
//!
//! ```text
//! F(u, v) = min_k a_k [(u - u_k)^2 + (v - v_k)^2]
//! ```
//!
//! which has a kink on every basin boundary. Simulations run on a
//! [`MollifiedLandscape`]: the raw potential sampled on a regular grid,
//! smoothed with a separable Gaussian filter, and differentiated by
//! centered differences. Values and gradients between nodes are bilinear.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A point of the `(u, v)` state plane.
pub type Point = [f64; 2];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LandscapeError {
    #[error("a landscape needs at least 2 wells, got {0}")]
    TooFewWells(usize),
    #[error("got {wells} wells but {labels} labels")]
    LabelCount { wells: usize, labels: usize },
    #[error("well {index} has non-positive or non-finite weight {weight}")]
    BadWeight { index: usize, weight: f64 },
    #[error("wells {first} and {second} share the center ({u}, {v})")]
    DuplicateCenter {
        first: usize,
        second: usize,
        u: f64,
        v: f64,
    },
    #[error("filter width must be positive and finite, got {0}")]
    BadFilterWidth(f64),
    #[error("grid needs at least 64 nodes per side, got {0}")]
    GridTooSmall(usize),
    #[error("bounds {bounds:?} leave well {index} less than {margin} from the edge")]
    BoundsTooTight {
        bounds: Bounds,
        index: usize,
        margin: f64,
    },
    #[error("point ({u}, {v}) lies outside the landscape bounds")]
    OutOfDomain { u: f64, v: f64 },
}

/// One quadratic well: `weight * |p - center|^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Well {
    pub center: Point,
    pub weight: f64,
}

impl Well {
    pub fn new(u: f64, v: f64, weight: f64) -> Self {
        Self {
            center: [u, v],
            weight,
        }
    }

    #[inline]
    pub fn branch(&self, p: Point) -> f64 {
        let du = p[0] - self.center[0];
        let dv = p[1] - self.center[1];
        self.weight * (du * du + dv * dv)
    }
}

/// Axis-aligned rectangle `[u_min, u_max] x [v_min, v_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub u_min: f64,
    pub u_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl Bounds {
    pub fn new(u_min: f64, u_max: f64, v_min: f64, v_max: f64) -> Self {
        Self {
            u_min,
            u_max,
            v_min,
            v_max,
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        p[0] >= self.u_min && p[0] <= self.u_max && p[1] >= self.v_min && p[1] <= self.v_max
    }

    pub fn diagonal(&self) -> f64 {
        (self.u_max - self.u_min).hypot(self.v_max - self.v_min)
    }

    /// Distance from `p` to the nearest edge (negative when outside).
    pub fn margin(&self, p: Point) -> f64 {
        (p[0] - self.u_min)
            .min(self.u_max - p[0])
            .min(p[1] - self.v_min)
            .min(self.v_max - p[1])
    }
}

/// The exact, unsmoothed min-of-quadratics potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawLandscape {
    wells: Vec<Well>,
    labels: Vec<String>,
}

impl RawLandscape {
    /// Validates and builds a landscape. Needs at least two wells with
    /// positive weights and pairwise distinct centers.
    pub fn new(wells: Vec<Well>, labels: Vec<String>) -> Result<Self, LandscapeError> {
        if wells.len() < 2 {
            return Err(LandscapeError::TooFewWells(wells.len()));
        }
        if labels.len() != wells.len() {
            return Err(LandscapeError::LabelCount {
                wells: wells.len(),
                labels: labels.len(),
            });
        }
        for (index, w) in wells.iter().enumerate() {
            if !(w.weight > 0.0 && w.weight.is_finite()) {
                return Err(LandscapeError::BadWeight {
                    index,
                    weight: w.weight,
                });
            }
        }
        for i in 0..wells.len() {
            for j in i + 1..wells.len() {
                if wells[i].center == wells[j].center {
                    return Err(LandscapeError::DuplicateCenter {
                        first: i,
                        second: j,
                        u: wells[i].center[0],
                        v: wells[i].center[1],
                    });
                }
            }
        }
        Ok(Self { wells, labels })
    }

    /// Builds a landscape labelled `well0, well1, ...`.
    pub fn unlabelled(wells: Vec<Well>) -> Result<Self, LandscapeError> {
        let labels = (0..wells.len()).map(|k| format!("well{k}")).collect();
        Self::new(wells, labels)
    }

    pub fn wells(&self) -> &[Well] {
        &self.wells
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.wells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wells.is_empty()
    }

    pub fn max_weight(&self) -> f64 {
        self.wells.iter().map(|w| w.weight).fold(0.0, f64::max)
    }

    /// Exact potential value.
    pub fn value(&self, p: Point) -> f64 {
        self.wells
            .iter()
            .map(|w| w.branch(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Index of the minimizing branch at `p`. Ties go to the lowest index.
    pub fn classify(&self, p: Point) -> usize {
        let mut best = 0;
        let mut best_value = self.wells[0].branch(p);
        for (k, w) in self.wells.iter().enumerate().skip(1) {
            let value = w.branch(p);
            if value < best_value {
                best = k;
                best_value = value;
            }
        }
        best
    }

    /// Hessian determinant at each center, `4 a_k^2`.
    pub fn hessian_dets(&self) -> Vec<f64> {
        self.wells
            .iter()
            .map(|w| 4.0 * w.weight * w.weight)
            .collect()
    }

    /// Small-noise limit weights, proportional to the inverse Hessian determinants.
    pub fn limit_measure(&self) -> LimitMeasure {
        let inv: Vec<f64> = self.hessian_dets().iter().map(|d| d.recip()).collect();
        let total: f64 = inv.iter().sum();
        LimitMeasure {
            weights: inv.iter().map(|x| x / total).collect(),
        }
    }

    /// Square box centred on the wells' bounding box with three times its
    /// longer side.
    pub fn default_bounds(&self) -> Bounds {
        let (mut u0, mut u1, mut v0, mut v1) = (
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        );
        for w in &self.wells {
            u0 = u0.min(w.center[0]);
            u1 = u1.max(w.center[0]);
            v0 = v0.min(w.center[1]);
            v1 = v1.max(w.center[1]);
        }
        let side = (u1 - u0).max(v1 - v0);
        let (cu, cv) = (0.5 * (u0 + u1), 0.5 * (v0 + v1));
        let half = 1.5 * side;
        Bounds::new(cu - half, cu + half, cv - half, cv + half)
    }

    /// Default Gaussian filter width: 2% of the bounds diagonal.
    pub fn default_filter_width(bounds: &Bounds) -> f64 {
        0.02 * bounds.diagonal()
    }

    /// Returns a copy with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, LandscapeError> {
        let wells = self
            .wells
            .iter()
            .map(|w| Well {
                center: w.center,
                weight: w.weight * factor,
            })
            .collect();
        Self::new(wells, self.labels.clone())
    }
}

/// Small-noise limit of the stationary measure, one weight per well.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitMeasure {
    pub weights: Vec<f64>,
}

/// Regular `M x M` grid over a rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub bounds: Bounds,
    pub size: usize,
}

impl GridSpec {
    pub fn du(&self) -> f64 {
        (self.bounds.u_max - self.bounds.u_min) / (self.size - 1) as f64
    }

    pub fn dv(&self) -> f64 {
        (self.bounds.v_max - self.bounds.v_min) / (self.size - 1) as f64
    }

    /// Node `(i, j)`; the last index lands exactly on the upper bound.
    pub fn node(&self, i: usize, j: usize) -> Point {
        let last = self.size - 1;
        let b = &self.bounds;
        let u = if i == last { b.u_max } else { b.u_min + i as f64 * self.du() };
        let v = if j == last { b.v_max } else { b.v_min + j as f64 * self.dv() };
        [u, v]
    }
}

/// Gaussian-smoothed potential on a grid, with centered-difference gradients.
///
/// Arrays are stored with the `u` index outermost: node `(i, j)` sits at
/// `i * size + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct MollifiedLandscape {
    spec: GridSpec,
    du: f64,
    dv: f64,
    grid: Vec<f64>,
    grad_u: Vec<f64>,
    grad_v: Vec<f64>,
    filter_width: f64,
    source: RawLandscape,
    undersized_filter: bool,
}

impl MollifiedLandscape {
    /// Samples `raw` on `spec` and smooths it with a Gaussian of standard
    /// deviation `filter_width` (state-space units), truncated at four
    /// standard deviations, with replicate-edge padding.
    pub fn new(
        raw: RawLandscape,
        filter_width: f64,
        spec: GridSpec,
    ) -> Result<Self, LandscapeError> {
        if !(filter_width > 0.0 && filter_width.is_finite()) {
            return Err(LandscapeError::BadFilterWidth(filter_width));
        }
        if spec.size < 64 {
            return Err(LandscapeError::GridTooSmall(spec.size));
        }
        let margin = 3.0 * filter_width;
        for (index, w) in raw.wells().iter().enumerate() {
            if spec.bounds.margin(w.center) < margin {
                return Err(LandscapeError::BoundsTooTight {
                    bounds: spec.bounds,
                    index,
                    margin,
                });
            }
        }

        let m = spec.size;
        let (du, dv) = (spec.du(), spec.dv());
        let undersized_filter = filter_width < du.max(dv);
        if undersized_filter {
            log::warn!(
                "filter width {filter_width} is below one grid cell ({}); smoothing is ineffective",
                du.max(dv)
            );
        }

        let mut samples = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                samples[i * m + j] = raw.value(spec.node(i, j));
            }
        }
        let ku = gaussian_kernel(filter_width / du);
        let kv = gaussian_kernel(filter_width / dv);
        let grid = convolve_separable(&samples, m, &ku, &kv);
        let (grad_u, grad_v) = centered_gradient(&grid, m, du, dv);

        Ok(Self {
            spec,
            du,
            dv,
            grid,
            grad_u,
            grad_v,
            filter_width,
            source: raw,
            undersized_filter,
        })
    }

    /// Mollifies over [`RawLandscape::default_bounds`] with the default filter width.
    pub fn with_defaults(raw: RawLandscape, size: usize) -> Result<Self, LandscapeError> {
        let bounds = raw.default_bounds();
        let fw = RawLandscape::default_filter_width(&bounds);
        Self::new(raw, fw, GridSpec { bounds, size })
    }

    pub fn raw(&self) -> &RawLandscape {
        &self.source
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn bounds(&self) -> Bounds {
        self.spec.bounds
    }

    pub fn size(&self) -> usize {
        self.spec.size
    }

    pub fn filter_width(&self) -> f64 {
        self.filter_width
    }

    /// True when the filter is narrower than one cell (no effective smoothing).
    pub fn undersized_filter(&self) -> bool {
        self.undersized_filter
    }

    /// Larger of the two cell sizes.
    pub fn cell(&self) -> f64 {
        self.du.max(self.dv)
    }

    /// Criticality tolerance for the gradient at well centers:
    /// `10 * cell * max_weight`.
    pub fn grad_tol(&self) -> f64 {
        10.0 * self.cell() * self.source.max_weight()
    }

    pub fn node(&self, i: usize, j: usize) -> Point {
        self.spec.node(i, j)
    }

    pub fn node_value(&self, i: usize, j: usize) -> f64 {
        self.grid[i * self.spec.size + j]
    }

    pub fn node_gradient(&self, i: usize, j: usize) -> [f64; 2] {
        let k = i * self.spec.size + j;
        [self.grad_u[k], self.grad_v[k]]
    }

    /// Locates `p` in the grid: lower-left node and fractional offsets.
    #[inline]
    fn locate(&self, p: Point) -> Result<(usize, usize, f64, f64), LandscapeError> {
        let b = &self.spec.bounds;
        if !b.contains(p) {
            return Err(LandscapeError::OutOfDomain { u: p[0], v: p[1] });
        }
        let last = self.spec.size - 2;
        let x = (p[0] - b.u_min) / self.du;
        let y = (p[1] - b.v_min) / self.dv;
        let i = (x.floor() as usize).min(last);
        let j = (y.floor() as usize).min(last);
        Ok((i, j, x - i as f64, y - j as f64))
    }

    #[inline]
    fn bilinear(&self, field: &[f64], i: usize, j: usize, s: f64, t: f64) -> f64 {
        let m = self.spec.size;
        let k = i * m + j;
        let f00 = field[k];
        let f01 = field[k + 1];
        let f10 = field[k + m];
        let f11 = field[k + m + 1];
        (1.0 - s) * ((1.0 - t) * f00 + t * f01) + s * ((1.0 - t) * f10 + t * f11)
    }

    /// Smoothed potential at `p` by bilinear interpolation. No extrapolation.
    pub fn potential_value(&self, p: Point) -> Result<f64, LandscapeError> {
        let (i, j, s, t) = self.locate(p)?;
        Ok(self.bilinear(&self.grid, i, j, s, t))
    }

    /// Gradient-flow drift `(-dF/du, -dF/dv)` at `p`.
    #[inline]
    pub fn drift(&self, p: Point) -> Result<[f64; 2], LandscapeError> {
        let (i, j, s, t) = self.locate(p)?;
        Ok([
            -self.bilinear(&self.grad_u, i, j, s, t),
            -self.bilinear(&self.grad_v, i, j, s, t),
        ])
    }

    /// Basin of `p` under the raw min-selector.
    pub fn classify(&self, p: Point) -> usize {
        self.source.classify(p)
    }
}

/// Normalized sampled Gaussian with standard deviation `sigma_cells` (in
/// cells), truncated at radius `round(4 * sigma_cells)`.
fn gaussian_kernel(sigma_cells: f64) -> Vec<f64> {
    let radius = (4.0 * sigma_cells).round() as usize;
    if radius == 0 {
        return vec![1.0];
    }
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|n| {
            let x = n as f64 - radius as f64;
            (-0.5 * x * x / (sigma_cells * sigma_cells)).exp()
        })
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= total);
    k
}

fn convolve_separable(data: &[f64], m: usize, ku: &[f64], kv: &[f64]) -> Vec<f64> {
    let ru = (ku.len() / 2) as isize;
    let rv = (kv.len() / 2) as isize;
    let clamp = |x: isize| x.clamp(0, m as isize - 1) as usize;

    // along v (inner index)
    let mut tmp = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            let mut acc = 0.0;
            for (n, w) in kv.iter().enumerate() {
                let jj = clamp(j as isize + n as isize - rv);
                acc += w * data[i * m + jj];
            }
            tmp[i * m + j] = acc;
        }
    }
    // along u
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            let mut acc = 0.0;
            for (n, w) in ku.iter().enumerate() {
                let ii = clamp(i as isize + n as isize - ru);
                acc += w * tmp[ii * m + j];
            }
            out[i * m + j] = acc;
        }
    }
    out
}

/// Centered differences in the interior, one-sided at the edges.
fn centered_gradient(grid: &[f64], m: usize, du: f64, dv: f64) -> (Vec<f64>, Vec<f64>) {
    let mut gu = vec![0.0; m * m];
    let mut gv = vec![0.0; m * m];
    let at = |i: usize, j: usize| grid[i * m + j];
    for i in 0..m {
        for j in 0..m {
            gu[i * m + j] = if i == 0 {
                (at(1, j) - at(0, j)) / du
            } else if i == m - 1 {
                (at(m - 1, j) - at(m - 2, j)) / du
            } else {
                (at(i + 1, j) - at(i - 1, j)) / (2.0 * du)
            };
            gv[i * m + j] = if j == 0 {
                (at(i, 1) - at(i, 0)) / dv
            } else if j == m - 1 {
                (at(i, m - 1) - at(i, m - 2)) / dv
            } else {
                (at(i, j + 1) - at(i, j - 1)) / (2.0 * dv)
            };
        }
    }
    (gu, gv)
}
