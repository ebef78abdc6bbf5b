//! Subcommand implementations: each reads a config, does one job, and
//! writes its outputs plus the config used into the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::estimator::{analytic_table, BiasReport, EstimatorError, FluctuationEstimator, ProfilePoint};
use crate::model::{stencil_decompose, FitError, FitIoError, FitOptions, QuadraticFit, StencilReport};
use crate::solver::{evolve, evolve_and_compare, Comparison, FittedOperator, ReferenceOperator, SolverError, Trajectory};
use crate::table::{RawOperatorTable, TableError};
use crate::thermo::ZrpThermo;

pub const TABLE_FILE: &str = "table.csv";
pub const FIT_FILE: &str = "fit.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    FitIo(#[from] FitIoError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("{failed} of {requested} grid points failed; first: {first}")]
    IncompleteTable { failed: usize, requested: usize, first: String },
}

impl PipelineError {
    /// 1 for usage, config and file problems; 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Io { .. } | Self::Table(_) | Self::FitIo(_) => 1,
            Self::Fit(_) | Self::Solver(_) | Self::Estimator(_) | Self::IncompleteTable { .. } => 2,
        }
    }
}

/// A resolved config plus, when it came from a file, that file's text.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub config: RunConfig,
    pub source_text: Option<String>,
}

impl RunContext {
    pub fn from_preset(name: &str) -> Result<Self, PipelineError> {
        Ok(Self { config: RunConfig::preset(name)?, source_text: None })
    }

    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let text = read(path)?;
        Ok(Self { config: RunConfig::from_toml(&text)?, source_text: Some(text) })
    }

    pub fn output_dir(&self) -> &Path {
        &self.config.output_dir
    }

    /// Creates the output directory and records the config in it.
    pub fn prepare_output(&self) -> Result<PathBuf, PipelineError> {
        let dir = self.config.output_dir.clone();
        fs::create_dir_all(&dir).map_err(|source| PipelineError::Io { path: dir.clone(), source })?;
        write(&dir.join("config.toml"), self.config.to_toml().as_bytes())?;
        if let Some(text) = &self.source_text {
            write(&dir.join("config.source.toml"), text.as_bytes())?;
        }
        Ok(dir)
    }
}

fn read(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(|source| PipelineError::Io { path: path.into(), source })
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    fs::write(path, bytes).map_err(|source| PipelineError::Io { path: path.into(), source })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(value).expect("report serializes") + "\n";
    write(path, text.as_bytes())
}

fn write_with<F>(path: &Path, f: F) -> Result<(), PipelineError>
where
    F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf).map_err(|source| PipelineError::Io { path: path.into(), source })?;
    write(path, &buf)
}

/// Measures (or, with `oracle`, computes exactly) the table over the grid.
/// Failed points are written to the metadata and reported as an error
/// after the partial table is saved.
pub fn cmd_tabulate(ctx: &RunContext, oracle: bool) -> Result<(PathBuf, RawOperatorTable), PipelineError> {
    let dir = ctx.prepare_output()?;
    let config = &ctx.config;
    let points = config.grid_points()?;
    let table = if oracle {
        analytic_table(&points, config.basis.n_basis, config.estimator.rho_min)
    } else {
        FluctuationEstimator::new(config.estimator_params(), config.estimator.master_seed)?.tabulate(&points)
    };
    let path = dir.join(TABLE_FILE);
    table.save(&path)?;
    if let Some(first) = table.metadata.failures.first() {
        return Err(PipelineError::IncompleteTable {
            failed: table.metadata.failures.len(),
            requested: table.metadata.requested_points,
            first: format!("profile {}: {}", first.profile_index, first.error),
        });
    }
    Ok((path, table))
}

pub fn cmd_fit(table_path: &Path, options: FitOptions, out: &Path) -> Result<QuadraticFit, PipelineError> {
    let table = RawOperatorTable::load(table_path)?;
    let fit = QuadraticFit::fit(&table, options)?;
    fs::create_dir_all(out).map_err(|source| PipelineError::Io { path: out.into(), source })?;
    fit.save(&out.join(FIT_FILE))?;
    Ok(fit)
}

pub fn cmd_stencil(fit_path: &Path, rho_ref: f64, out: &Path) -> Result<StencilReport, PipelineError> {
    let fit = QuadraticFit::load(fit_path)?;
    let report = stencil_decompose(&fit, rho_ref)?;
    fs::create_dir_all(out).map_err(|source| PipelineError::Io { path: out.into(), source })?;
    write_json(&out.join("stencil.json"), &report)?;
    Ok(report)
}

/// Fitted-operator trajectory only.
pub fn cmd_evolve(ctx: &RunContext, fit_path: &Path) -> Result<Trajectory, PipelineError> {
    let dir = ctx.prepare_output()?;
    let fit = QuadraticFit::load(fit_path)?;
    let model = FittedOperator { fit: &fit, thermo: &ZrpThermo };
    let traj = evolve(&ctx.config.initial_field()?, &model, &ZrpThermo, &ctx.config.evolve_settings())?;
    write_with(&dir.join("trajectory_fitted.csv"), |b| traj.write_csv(b))?;
    Ok(traj)
}

/// Reference trajectory only.
pub fn cmd_reference(ctx: &RunContext) -> Result<Trajectory, PipelineError> {
    let dir = ctx.prepare_output()?;
    let model = ReferenceOperator { thermo: &ZrpThermo };
    let traj = evolve(&ctx.config.initial_field()?, &model, &ZrpThermo, &ctx.config.evolve_settings())?;
    write_with(&dir.join("trajectory_reference.csv"), |b| traj.write_csv(b))?;
    Ok(traj)
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareSummary {
    pub steps: usize,
    pub max_rel_l2: f64,
    pub max_rel_linf: f64,
    pub relative_mass_drift_fitted: f64,
    pub extrapolated: bool,
    pub min_entropy_production_fitted: f64,
    pub min_entropy_production_reference: f64,
    pub warnings: Vec<String>,
}

impl CompareSummary {
    pub fn from_comparison(c: &Comparison) -> Self {
        let first = &c.errors[0];
        let last = &c.errors[c.errors.len() - 1];
        Self {
            steps: c.steps,
            max_rel_l2: c.errors.iter().fold(0.0, |m, e| m.max(e.rel_l2)),
            max_rel_linf: c.max_rel_linf(),
            relative_mass_drift_fitted: (last.mass_fitted - first.mass_fitted).abs() / first.mass_fitted.abs(),
            extrapolated: c.extrapolated,
            min_entropy_production_fitted: c.min_entropy_production[0],
            min_entropy_production_reference: c.min_entropy_production[1],
            warnings: c.warnings.clone(),
        }
    }
}

/// Fitted and reference dynamics side by side.
pub fn cmd_compare(ctx: &RunContext, fit_path: &Path) -> Result<(Comparison, CompareSummary), PipelineError> {
    let dir = ctx.prepare_output()?;
    let fit = QuadraticFit::load(fit_path)?;
    let fitted = FittedOperator { fit: &fit, thermo: &ZrpThermo };
    let reference = ReferenceOperator { thermo: &ZrpThermo };
    let cmp = evolve_and_compare(
        &ctx.config.initial_field()?,
        &fitted,
        &reference,
        &ZrpThermo,
        &ctx.config.evolve_settings(),
    )?;
    write_with(&dir.join("trajectory.csv"), |b| cmp.write_trajectory(b))?;
    write_with(&dir.join("errors.csv"), |b| cmp.write_errors(b))?;
    let summary = CompareSummary::from_comparison(&cmp);
    write_json(&dir.join("compare_summary.json"), &summary)?;
    Ok((cmp, summary))
}

#[derive(Debug, Clone, Serialize)]
pub struct LocalityEntry {
    pub separation: usize,
    pub value: f64,
    pub stderr: f64,
    /// `|value| ≤ 3 stderr`.
    pub consistent_with_zero: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LocalityReport {
    pub point: ProfilePoint,
    pub master_seed: u64,
    pub entries: Vec<LocalityEntry>,
}

pub fn cmd_probe_locality(ctx: &RunContext) -> Result<LocalityReport, PipelineError> {
    let dir = ctx.prepare_output()?;
    let est = FluctuationEstimator::new(ctx.config.estimator_params(), ctx.config.estimator.master_seed)?;
    let point = ctx.config.probe_point();
    let mut entries = Vec::new();
    for &separation in &ctx.config.probe.separations {
        let e = est.locality_probe(&point, separation)?;
        entries.push(LocalityEntry {
            separation,
            value: e.value,
            stderr: e.stderr,
            consistent_with_zero: e.value.abs() <= 3.0 * e.stderr,
        });
    }
    let report = LocalityReport { point, master_seed: ctx.config.estimator.master_seed, entries };
    write_json(&dir.join("locality.json"), &report)?;
    Ok(report)
}

pub fn cmd_bias(ctx: &RunContext) -> Result<BiasReport, PipelineError> {
    let dir = ctx.prepare_output()?;
    let est = FluctuationEstimator::new(ctx.config.estimator_params(), ctx.config.estimator.master_seed)?;
    let report = est.bias_probe(&ctx.config.probe_point())?;
    write_json(&dir.join("bias.json"), &report)?;
    Ok(report)
}
