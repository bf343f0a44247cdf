//! TOML configuration.
//!
//! Files are parsed into all-optional mirrors of the sections, then
//! resolved into a [`Config`] with every default written out. The resolved
//! form is what `--print-config` prints and what the run manifest stores,
//! so it parses back to itself.
//!
//! ```toml
//! seed = 7
//!
//! [landscape]
//! wells = [
//!     { label = "sepal", center = [0.2, 0.2], weight = 1.0 },
//!     { label = "petal", center = [0.8, 0.2], weight = 0.8 },
//! ]
//!
//! [run]
//! sigma = 0.012
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::landscape::{Bounds, GridSpec, LandscapeError, MollifiedLandscape, Point, RawLandscape, Well};
use crate::ldp::ExitStudyConfig;
use crate::noise::{NoiseError, NoiseKind, NoiseModel, DEFAULT_CLIP_TOL};
use crate::solver::{Boundary, Discretization, InitialCondition, PullToward, RunParams, SolverError, System};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("landscape: {0}")]
    Landscape(#[from] LandscapeError),
    #[error("noise: {0}")]
    Noise(#[from] NoiseError),
    #[error("solver: {0}")]
    Solver(#[from] SolverError),
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        message: message.into(),
    }
}

/// One well as written in the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WellConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub center: Point,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeConfig {
    pub wells: Vec<WellConfig>,
    /// `[u_min, u_max, v_min, v_max]`.
    pub bounds: [f64; 4],
    pub grid_size: usize,
    pub filter_width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    Qwiener,
    White,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub mode: NoiseMode,
    /// Correlation length; ignored in white mode.
    pub l: f64,
    pub clip_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Number of grid intervals `J`.
    pub intervals: usize,
    pub boundary: Boundary,
    pub d1: f64,
    pub d2: f64,
    pub dt: f64,
    pub domain_length: f64,
}

/// Starting point: a well (by label or index) or an explicit point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialConfig {
    Index(usize),
    Label(String),
    Point(Point),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PullConfig {
    /// Well label or index the field mean is pulled toward.
    pub target: InitialConfig,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub sigma: f64,
    pub t_end: f64,
    pub record_stride: usize,
    pub initial: InitialConfig,
    pub burn_in: f64,
    /// Records a classification change must persist before it counts.
    pub dwell: usize,
    pub histogram_bins: usize,
    /// Ensemble size.
    pub trajectories: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pull: Option<PullConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub sigmas: Vec<f64>,
    pub trajectories: usize,
    /// Runs still inside the start basin at `t_max` are censored.
    pub t_max: f64,
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub landscape: LandscapeConfig,
    pub noise: NoiseConfig,
    pub solver: SolverConfig,
    pub run: RunConfig,
    pub study: StudyConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialLandscape {
    wells: Option<Vec<WellConfig>>,
    bounds: Option<[f64; 4]>,
    grid_size: Option<usize>,
    filter_width: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialNoise {
    mode: Option<NoiseMode>,
    l: Option<f64>,
    clip_tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialSolver {
    intervals: Option<usize>,
    boundary: Option<Boundary>,
    d1: Option<f64>,
    d2: Option<f64>,
    dt: Option<f64>,
    domain_length: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialRun {
    sigma: Option<f64>,
    t_end: Option<f64>,
    record_stride: Option<usize>,
    initial: Option<InitialConfig>,
    burn_in: Option<f64>,
    dwell: Option<usize>,
    histogram_bins: Option<usize>,
    trajectories: Option<usize>,
    pull: Option<PullConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialStudy {
    sigmas: Option<Vec<f64>>,
    trajectories: Option<usize>,
    t_max: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialConfig {
    seed: Option<u64>,
    landscape: Option<PartialLandscape>,
    #[serde(default)]
    noise: PartialNoise,
    #[serde(default)]
    solver: PartialSolver,
    #[serde(default)]
    run: PartialRun,
    #[serde(default)]
    study: PartialStudy,
}

pub const DEFAULT_GRID_SIZE: usize = 256;
pub const DEFAULT_INTERVALS: usize = 64;
pub const DEFAULT_L: f64 = 0.1;
pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_T_END: f64 = 100.0;
pub const DEFAULT_BURN_IN: f64 = 10.0;
pub const DEFAULT_DWELL: usize = 10;

impl Config {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses and resolves `text`; `origin` names the source in errors.
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let partial: PartialConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            origin: origin.to_string(),
            message: e.to_string().trim_end().to_string(),
        })?;
        let cfg = Self::resolve(partial)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve(p: PartialConfig) -> Result<Self, ConfigError> {
        let land = p.landscape.ok_or(ConfigError::Missing("landscape.wells"))?;
        let wells = land.wells.ok_or(ConfigError::Missing("landscape.wells"))?;
        // bounds and filter width defaults depend on the wells
        let raw = raw_from(&wells)?;
        let bounds = match land.bounds {
            Some(b) => b,
            None => {
                let b = raw.default_bounds();
                [b.u_min, b.u_max, b.v_min, b.v_max]
            }
        };
        let filter_width = land.filter_width.unwrap_or_else(|| {
            RawLandscape::default_filter_width(&Bounds::new(bounds[0], bounds[1], bounds[2], bounds[3]))
        });
        let r = p.run;
        let s = p.study;
        Ok(Self {
            seed: p.seed.unwrap_or(0),
            landscape: LandscapeConfig {
                wells,
                bounds,
                grid_size: land.grid_size.unwrap_or(DEFAULT_GRID_SIZE),
                filter_width,
            },
            noise: NoiseConfig {
                mode: p.noise.mode.unwrap_or(NoiseMode::Qwiener),
                l: p.noise.l.unwrap_or(DEFAULT_L),
                clip_tol: p.noise.clip_tol.unwrap_or(DEFAULT_CLIP_TOL),
            },
            solver: SolverConfig {
                intervals: p.solver.intervals.unwrap_or(DEFAULT_INTERVALS),
                boundary: p.solver.boundary.unwrap_or_default(),
                d1: p.solver.d1.unwrap_or(1.0),
                d2: p.solver.d2.unwrap_or(1.0),
                dt: p.solver.dt.unwrap_or(DEFAULT_DT),
                domain_length: p.solver.domain_length.unwrap_or(1.0),
            },
            run: RunConfig {
                sigma: r.sigma.unwrap_or(0.0),
                t_end: r.t_end.unwrap_or(DEFAULT_T_END),
                record_stride: r.record_stride.unwrap_or(10),
                initial: r.initial.unwrap_or(InitialConfig::Index(0)),
                burn_in: r.burn_in.unwrap_or(DEFAULT_BURN_IN),
                dwell: r.dwell.unwrap_or(DEFAULT_DWELL),
                histogram_bins: r.histogram_bins.unwrap_or(50),
                trajectories: r.trajectories.unwrap_or(200),
                pull: r.pull,
            },
            study: StudyConfig {
                sigmas: s.sigmas.unwrap_or_default(),
                trajectories: s.trajectories.unwrap_or(crate::ldp::MIN_TRAJECTORIES),
                t_max: s.t_max.unwrap_or(1000.0),
            },
        })
    }

    /// Range checks that do not need the heavy objects built.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let pos = |key: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(invalid(key, format!("must be positive, got {x}")))
            }
        };
        let nonneg = |key: &str, x: f64| {
            if x >= 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(invalid(key, format!("must be non-negative, got {x}")))
            }
        };
        pos("landscape.filter_width", self.landscape.filter_width)?;
        let b = self.landscape.bounds;
        if !(b[0] < b[1] && b[2] < b[3]) {
            return Err(invalid("landscape.bounds", "need u_min < u_max and v_min < v_max"));
        }
        if self.noise.mode == NoiseMode::Qwiener {
            pos("noise.l", self.noise.l)?;
        }
        nonneg("noise.clip_tol", self.noise.clip_tol)?;
        if self.solver.intervals < 4 {
            return Err(invalid("solver.intervals", "need at least 4"));
        }
        nonneg("solver.d1", self.solver.d1)?;
        nonneg("solver.d2", self.solver.d2)?;
        pos("solver.dt", self.solver.dt)?;
        pos("solver.domain_length", self.solver.domain_length)?;
        nonneg("run.sigma", self.run.sigma)?;
        nonneg("run.t_end", self.run.t_end)?;
        nonneg("run.burn_in", self.run.burn_in)?;
        if self.run.record_stride == 0 {
            return Err(invalid("run.record_stride", "must be at least 1"));
        }
        if self.run.dwell == 0 {
            return Err(invalid("run.dwell", "must be at least 1"));
        }
        if self.run.histogram_bins == 0 {
            return Err(invalid("run.histogram_bins", "must be at least 1"));
        }
        if self.run.trajectories == 0 {
            return Err(invalid("run.trajectories", "must be at least 1"));
        }
        self.point(&self.run.initial, "run.initial")?;
        if let Some(pull) = &self.run.pull {
            self.point(&pull.target, "run.pull.target")?;
            nonneg("run.pull.rate", pull.rate)?;
        }
        for &s in &self.study.sigmas {
            pos("study.sigmas", s)?;
        }
        pos("study.t_max", self.study.t_max)?;
        Ok(())
    }

    /// The resolved file, as `--print-config` shows it.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("resolved config always serializes")
    }

    pub fn raw_landscape(&self) -> Result<RawLandscape, ConfigError> {
        raw_from(&self.landscape.wells)
    }

    pub fn landscape(&self) -> Result<MollifiedLandscape, ConfigError> {
        let b = self.landscape.bounds;
        let spec = GridSpec {
            bounds: Bounds::new(b[0], b[1], b[2], b[3]),
            size: self.landscape.grid_size,
        };
        Ok(MollifiedLandscape::new(
            self.raw_landscape()?,
            self.landscape.filter_width,
            spec,
        )?)
    }

    pub fn discretization(&self) -> Result<Discretization, ConfigError> {
        let s = &self.solver;
        Ok(Discretization::new(
            s.intervals,
            s.boundary,
            s.d1,
            s.d2,
            s.dt,
            s.domain_length,
        )?)
    }

    pub fn noise_kind(&self) -> NoiseKind {
        match self.noise.mode {
            NoiseMode::Qwiener => NoiseKind::Qwiener { l: self.noise.l },
            NoiseMode::White => NoiseKind::White,
        }
    }

    pub fn system(&self) -> Result<System, ConfigError> {
        let landscape = self.landscape()?;
        let disc = self.discretization()?;
        let noise = NoiseModel::new(self.noise_kind(), disc.noise_grid(), self.noise.clip_tol)?;
        Ok(System::new(landscape, noise, disc)?)
    }

    /// Resolves a well label, well index or explicit point.
    pub fn point(&self, init: &InitialConfig, key: &str) -> Result<Point, ConfigError> {
        let wells = &self.landscape.wells;
        match init {
            InitialConfig::Point(p) => Ok(*p),
            InitialConfig::Index(k) => wells
                .get(*k)
                .map(|w| w.center)
                .ok_or_else(|| invalid(key, format!("no well with index {k}"))),
            InitialConfig::Label(name) => wells
                .iter()
                .find(|w| w.label.as_deref() == Some(name.as_str()))
                .map(|w| w.center)
                .ok_or_else(|| invalid(key, format!("no well labelled {name:?}"))),
        }
    }

    pub fn initial_point(&self) -> Result<Point, ConfigError> {
        self.point(&self.run.initial, "run.initial")
    }

    /// Per-trajectory parameters for `run` and `ensemble`.
    pub fn run_params(&self) -> Result<RunParams, ConfigError> {
        let forcing = match &self.run.pull {
            Some(p) => Some(Arc::new(PullToward {
                target: self.point(&p.target, "run.pull.target")?,
                rate: p.rate,
            }) as Arc<dyn crate::solver::Forcing>),
            None => None,
        };
        Ok(RunParams {
            sigma: self.run.sigma,
            t_end: self.run.t_end,
            record_stride: self.run.record_stride,
            initial: InitialCondition::Constant(self.initial_point()?),
            forcing,
            keep_states: false,
        })
    }

    /// Exit-study inputs; the start basin is the one holding `run.initial`.
    pub fn exit_study(&self) -> Result<ExitStudyConfig, ConfigError> {
        if self.study.sigmas.len() < 3 {
            return Err(invalid(
                "study.sigmas",
                format!("need at least 3 values, got {}", self.study.sigmas.len()),
            ));
        }
        if self.study.trajectories < crate::ldp::MIN_TRAJECTORIES {
            return Err(invalid(
                "study.trajectories",
                format!("need at least {}", crate::ldp::MIN_TRAJECTORIES),
            ));
        }
        let start_well = self.raw_landscape()?.classify(self.initial_point()?);
        Ok(ExitStudyConfig {
            sigmas: self.study.sigmas.clone(),
            trajectories: self.study.trajectories,
            start_well,
            dwell: self.run.dwell,
            record_stride: self.run.record_stride,
            t_max: self.study.t_max,
            seed: self.seed,
        })
    }
}

fn raw_from(wells: &[WellConfig]) -> Result<RawLandscape, ConfigError> {
    let list: Vec<Well> = wells
        .iter()
        .map(|w| Well::new(w.center[0], w.center[1], w.weight))
        .collect();
    if wells.iter().all(|w| w.label.is_none()) {
        return Ok(RawLandscape::unlabelled(list)?);
    }
    let labels = wells
        .iter()
        .enumerate()
        .map(|(k, w)| w.label.clone().unwrap_or_else(|| format!("well{k}")))
        .collect();
    Ok(RawLandscape::new(list, labels)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MINIMAL: &str = r#"
[landscape]
wells = [
    { label = "a", center = [0.0, 0.0], weight = 1.0 },
    { label = "b", center = [1.0, 0.0], weight = 2.0 },
]
"#;

    #[test]
    fn defaults_are_filled_in() {
        let c = Config::parse(MINIMAL, "test").unwrap();
        assert_eq!(c.seed, 0);
        assert_eq!(c.solver.intervals, 64);
        assert_eq!(c.noise.mode, NoiseMode::Qwiener);
        assert_eq!(c.noise.l, 0.1);
        assert_eq!((c.run.t_end, c.run.burn_in, c.run.dwell), (100.0, 10.0, 10));
        assert_eq!(c.solver.boundary, Boundary::Neumann);
        // square, three times the longer bounding-box side
        assert_eq!(c.landscape.bounds, [-1.0, 2.0, -1.5, 1.5]);
        let diag = (3.0f64 * 3.0 * 2.0).sqrt();
        assert!((c.landscape.filter_width - 0.02 * diag).abs() < 1e-15);
        assert_eq!(c.initial_point().unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn missing_wells_names_the_key() {
        for text in ["seed = 1\n", "[landscape]\ngrid_size = 64\n"] {
            let err = Config::parse(text, "x.toml").unwrap_err();
            assert!(matches!(err, ConfigError::Missing("landscape.wells")));
            assert!(err.to_string().contains("landscape.wells"));
        }
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = Config::parse("[landscape]\nwells = 3\n", "bad.toml").unwrap_err();
        let msg = err.to_string();
        assert!(msg.starts_with("bad.toml"), "{msg}");
        assert!(msg.contains("line 2"), "{msg}");
        let err = Config::parse(&format!("{MINIMAL}\n[run]\nsigmaa = 1.0\n"), "t").unwrap_err();
        assert!(err.to_string().contains("sigmaa"), "{err}");
    }

    #[test]
    fn range_errors_name_the_key() {
        let text = format!("{MINIMAL}\n[solver]\ndt = -1.0\n");
        let err = Config::parse(&text, "t").unwrap_err();
        assert!(err.to_string().contains("solver.dt"), "{err}");
        let text = format!("{MINIMAL}\n[run]\ninitial = \"zzz\"\n");
        assert!(Config::parse(&text, "t").unwrap_err().to_string().contains("zzz"));
    }

    #[test]
    fn initial_by_label_index_or_point() {
        for (init, want) in [("\"b\"", [1.0, 0.0]), ("1", [1.0, 0.0]), ("[0.25, 0.5]", [0.25, 0.5])] {
            let c = Config::parse(&format!("{MINIMAL}\n[run]\ninitial = {init}\n"), "t").unwrap();
            assert_eq!(c.initial_point().unwrap(), want);
        }
    }

    #[test]
    fn exit_study_needs_three_sigmas() {
        let c = Config::parse(MINIMAL, "t").unwrap();
        assert!(c.study.sigmas.is_empty());
        let err = c.exit_study().unwrap_err();
        assert!(err.to_string().contains("study.sigmas"));
    }

    #[test]
    fn builds_a_system() {
        let c = Config::parse(MINIMAL, "t").unwrap();
        let sys = c.system().unwrap();
        assert_eq!(sys.disc.nodes(), 63);
        assert_eq!(sys.landscape.size(), 256);
    }

    proptest! {
        #[test]
        fn printed_config_parses_back(seed in any::<u64>(), sigma in 0.0..1.0f64, j in 4usize..200, white in any::<bool>()) {
            let mode = if white { "white" } else { "qwiener" };
            let text = format!(
                "seed = {seed}\n{MINIMAL}\n[run]\nsigma = {sigma}\n[solver]\nintervals = {j}\n[noise]\nmode = \"{mode}\"\n"
            );
            let c = Config::parse(&text, "t").unwrap();
            let again = Config::parse(&c.to_toml(), "printed").unwrap();
            prop_assert_eq!(c, again);
        }
    }
}
