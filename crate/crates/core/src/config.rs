//! Declarative run configuration (TOML) and the built-in presets.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{BoundaryMode, EstimatorError, EstimatorParams, ProfilePoint};
use crate::grid::{GridError, GridSpec, RangeSpec};
use crate::model::FitOptions;
use crate::solver::{EvolveSettings, FieldBoundary, NodalField, SolverError};

pub const PRESETS: [&str; 5] = ["paper-scale", "paper-scale-unconstrained", "desk-scale", "fig4-left", "fig4-right"];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("unknown preset `{0}` (available: {list})", list = PRESETS.join(", "))]
    UnknownPreset(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub size: usize,
    #[serde(default)]
    pub boundary: BoundaryMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    pub n_basis: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub realizations: usize,
    pub h: f64,
    pub t_eq: f64,
    pub master_seed: u64,
    #[serde(default = "default_rho_min")]
    pub rho_min: f64,
}

fn default_rho_min() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub constrained: bool,
    #[serde(default)]
    pub weighted: bool,
    #[serde(default = "default_rho_ref")]
    pub rho_ref: f64,
}

fn default_rho_ref() -> f64 {
    7.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SineTerm {
    pub amplitude: f64,
    /// `sin(wavenumber · π x)`.
    pub wavenumber: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialProfile {
    Constant { value: f64 },
    /// `mean + amplitude · cos(2π mode x)`.
    Cosine { mean: f64, amplitude: f64, mode: u32 },
    /// Linear interpolation of the Dirichlet data plus sine terms vanishing at both ends.
    LinearPlusSines { sines: Vec<SineTerm> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub initial: InitialProfile,
    pub boundary: FieldBoundary,
    #[serde(default)]
    pub dt: Option<f64>,
    pub horizon: f64,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub rho: f64,
    #[serde(default)]
    pub grad_rho: f64,
    pub separations: Vec<usize>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { rho: 4.0, grad_rho: 0.0, separations: vec![2, 3] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub lattice: LatticeConfig,
    pub basis: BasisConfig,
    pub estimator: EstimatorConfig,
    pub grid: GridSpec,
    pub fit: FitConfig,
    pub solver: SolverConfig,
    #[serde(default)]
    pub probe: ProbeConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        let config = match name {
            "paper-scale" => paper_scale(),
            "paper-scale-unconstrained" => {
                let mut c = paper_scale();
                c.output_dir = "out/paper-scale-unconstrained".into();
                c.grid = GridSpec {
                    flat_rho: Some(RangeSpec::new(4.0, 10.0, 0.1)),
                    affine_rho: Some(RangeSpec::new(4.0, 10.0, 0.05)),
                    gradients: (1..=25).map(f64::from).collect(),
                    symmetric: true,
                };
                c.fit.constrained = false;
                c
            }
            "desk-scale" => desk_scale(),
            "fig4-left" => fig4(),
            "fig4-right" => {
                let mut c = fig4();
                c.output_dir = "out/fig4-right".into();
                c.solver = SolverConfig {
                    initial: InitialProfile::LinearPlusSines {
                        sines: vec![
                            SineTerm { amplitude: 3.0, wavenumber: 1.0 },
                            SineTerm { amplitude: 1.0, wavenumber: 2.0 },
                        ],
                    },
                    boundary: FieldBoundary::Dirichlet { left: 3.0, right: 11.0 },
                    dt: None,
                    horizon: 0.05,
                    snapshot_times: vec![0.005, 0.01, 0.02, 0.03, 0.04],
                };
                c
            }
            other => return Err(ConfigError::UnknownPreset(other.to_string())),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.estimator_params().validate()?;
        self.grid.points()?;
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if !(self.solver.horizon >= 0.0) || !self.solver.horizon.is_finite() {
            return invalid(format!("solver.horizon = {}", self.solver.horizon));
        }
        if let Some(dt) = self.solver.dt {
            if !(dt > 0.0) || !dt.is_finite() {
                return invalid(format!("solver.dt = {dt}"));
            }
        }
        if self.probe.separations.iter().any(|&s| s < 2) {
            return invalid("probe.separations must all be at least 2".into());
        }
        if !(self.fit.rho_ref > 0.0) {
            return invalid(format!("fit.rho_ref = {}", self.fit.rho_ref));
        }
        Ok(())
    }

    pub fn estimator_params(&self) -> EstimatorParams {
        EstimatorParams {
            realizations: self.estimator.realizations,
            h: self.estimator.h,
            t_eq: self.estimator.t_eq,
            lattice_size: self.lattice.size,
            n_basis: self.basis.n_basis,
            rho_min: self.estimator.rho_min,
            boundary: self.lattice.boundary,
        }
    }

    pub fn grid_points(&self) -> Result<Vec<ProfilePoint>, ConfigError> {
        Ok(self.grid.points()?)
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions { constrained: self.fit.constrained, weighted: self.fit.weighted }
    }

    pub fn probe_point(&self) -> ProfilePoint {
        ProfilePoint::new(0, self.probe.rho, self.probe.grad_rho)
    }

    pub fn evolve_settings(&self) -> EvolveSettings {
        EvolveSettings {
            horizon: self.solver.horizon,
            dt: self.solver.dt,
            snapshot_times: self.solver.snapshot_times.clone(),
        }
    }

    pub fn initial_field(&self) -> Result<NodalField, SolverError> {
        let n = self.basis.n_basis;
        let bc = self.solver.boundary;
        match &self.solver.initial {
            InitialProfile::Constant { value } => NodalField::from_fn(n, bc, |_| *value),
            InitialProfile::Cosine { mean, amplitude, mode } => NodalField::from_fn(n, bc, |x| {
                mean + amplitude * (2.0 * std::f64::consts::PI * f64::from(*mode) * x).cos()
            }),
            InitialProfile::LinearPlusSines { sines } => {
                let (left, right) = match bc {
                    FieldBoundary::Dirichlet { left, right } => (left, right),
                    FieldBoundary::Periodic => (0.0, 0.0),
                };
                NodalField::from_fn(n, bc, |x| {
                    left + (right - left) * x
                        + sines
                            .iter()
                            .map(|s| s.amplitude * (s.wavenumber * std::f64::consts::PI * x).sin())
                            .sum::<f64>()
                })
            }
        }
    }
}

fn paper_scale() -> RunConfig {
    RunConfig {
        output_dir: "out/paper-scale".into(),
        lattice: LatticeConfig { size: 5000, boundary: BoundaryMode::Auto },
        basis: BasisConfig { n_basis: 40 },
        estimator: EstimatorConfig {
            realizations: 800_000,
            h: 4e-11,
            t_eq: 4.004e-6,
            master_seed: 20_240_601,
            rho_min: 0.1,
        },
        grid: GridSpec {
            flat_rho: Some(RangeSpec::new(4.0, 10.0, 0.1)),
            affine_rho: Some(RangeSpec::new(4.0, 10.0, 0.3)),
            gradients: vec![5.0, 11.0, 15.0, 19.0],
            symmetric: true,
        },
        fit: FitConfig { constrained: true, weighted: false, rho_ref: 7.0 },
        solver: cosine_solver(),
        probe: ProbeConfig::default(),
    }
}

fn cosine_solver() -> SolverConfig {
    SolverConfig {
        initial: InitialProfile::Cosine { mean: 7.0, amplitude: 1.5, mode: 1 },
        boundary: FieldBoundary::Periodic,
        dt: None,
        horizon: 0.005,
        snapshot_times: vec![0.001, 0.002, 0.003, 0.004],
    }
}

fn desk_scale() -> RunConfig {
    RunConfig {
        output_dir: "out/desk-scale".into(),
        lattice: LatticeConfig { size: 1000, boundary: BoundaryMode::Auto },
        basis: BasisConfig { n_basis: 20 },
        estimator: EstimatorConfig { realizations: 10_000, h: 1e-9, t_eq: 1e-7, master_seed: 20_240_601, rho_min: 0.1 },
        grid: GridSpec {
            flat_rho: None,
            affine_rho: Some(RangeSpec::new(4.0, 10.0, 3.0)),
            gradients: vec![0.0, 5.0],
            symmetric: true,
        },
        fit: FitConfig { constrained: true, weighted: false, rho_ref: 7.0 },
        solver: cosine_solver(),
        probe: ProbeConfig::default(),
    }
}

fn fig4() -> RunConfig {
    let mut c = desk_scale();
    c.output_dir = "out/fig4-left".into();
    c.basis.n_basis = 40;
    c.estimator.realizations = 50_000;
    c.estimator.t_eq = 1e-8;
    c.grid.affine_rho = Some(RangeSpec::new(4.0, 10.0, 1.5));
    c.grid.gradients = vec![0.0, 19.0];
    c
}
