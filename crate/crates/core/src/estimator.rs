//! Operator entries from the covariance of short-window fluctuation increments.
//!
//! For each realization the lattice is sampled from local equilibrium around
//! an affine profile, relaxed for `t_eq`, and the hat projections `P_a` are
//! recorded before and after a window `h`. With `D_a = ΔP_a / √ε` centered
//! across realizations,
//!
//! ```text
//! ⟨K γ_a, γ_b⟩ ≈ mean_r(Ď_a Ď_b) / (2h)
//! ```

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::{BasisError, BasisSet};
use crate::kinetics::streams::{realization_rng, MAX_REALIZATIONS};
use crate::kinetics::{Boundary, Dynamics, KineticsError, LatticeState, RateModel, SiteSamplers};
use crate::profile::AffineProfile;
use crate::table::{RawOperatorTable, RowFailure, TableMetadata, TableRow, TableSource};
use crate::thermo::{analytic_operator_entry, diffusivity, ThermoError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("need at least 2 realizations, got {0}")]
    TooFewRealizations(usize),
    #[error("{0} realizations exceed the per-profile stream capacity")]
    TooManyRealizations(usize),
    #[error("measurement window h must be positive and finite, got {0}")]
    InvalidWindow(f64),
    #[error("equilibration time must be non-negative and finite, got {0}")]
    InvalidEquilibration(f64),
    #[error("density floor must be positive, got {0}")]
    InvalidFloor(f64),
    #[error("basis needs at least 3 hats, got {0}")]
    BasisTooSmall(usize),
    #[error("locality probe separation must be at least 2, got {0}")]
    SeparationTooSmall(usize),
    #[error("separation {separation} reaches past the last hat of {n_basis}")]
    SeparationOutOfRange { separation: usize, n_basis: usize },
    #[error("profile {index}: non-finite density or gradient")]
    InvalidProfile { index: usize },
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Kinetics(#[from] KineticsError),
    #[error(transparent)]
    Thermo(#[from] ThermoError),
}

/// Lattice boundary used while simulating a profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryMode {
    /// Periodic for flat profiles, particle reservoirs for affine ones.
    #[default]
    Auto,
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorParams {
    pub realizations: usize,
    /// Measurement window, macroscopic time.
    pub h: f64,
    /// Equilibration time before the window, macroscopic time.
    pub t_eq: f64,
    pub lattice_size: usize,
    pub n_basis: usize,
    pub rho_min: f64,
    #[serde(default)]
    pub boundary: BoundaryMode,
}

impl EstimatorParams {
    pub fn validate(&self) -> Result<(), EstimatorError> {
        if self.realizations < 2 {
            return Err(EstimatorError::TooFewRealizations(self.realizations));
        }
        if self.realizations as u64 > MAX_REALIZATIONS {
            return Err(EstimatorError::TooManyRealizations(self.realizations));
        }
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(EstimatorError::InvalidWindow(self.h));
        }
        if !(self.t_eq >= 0.0) || !self.t_eq.is_finite() {
            return Err(EstimatorError::InvalidEquilibration(self.t_eq));
        }
        if !(self.rho_min > 0.0) {
            return Err(EstimatorError::InvalidFloor(self.rho_min));
        }
        if self.n_basis < 3 {
            return Err(EstimatorError::BasisTooSmall(self.n_basis));
        }
        if self.lattice_size < 2 {
            return Err(KineticsError::LatticeTooSmall(self.lattice_size).into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub index: usize,
    pub rho: f64,
    pub grad_rho: f64,
}

impl ProfilePoint {
    pub fn new(index: usize, rho: f64, grad_rho: f64) -> Self {
        Self { index, rho, grad_rho }
    }
}

/// Estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowEstimate {
    pub sub: Entry,
    pub diag: Entry,
    pub sup: Entry,
}

impl RowEstimate {
    pub fn to_row(&self, point: &ProfilePoint) -> TableRow {
        TableRow {
            profile_index: point.index,
            rho: point.rho,
            grad_rho: point.grad_rho,
            k_sub: self.sub.value,
            k_diag: self.diag.value,
            k_super: self.sup.value,
            se_sub: self.sub.stderr,
            se_diag: self.diag.stderr,
            se_super: self.sup.stderr,
        }
    }
}

/// Rescaled increments `D_a^r`, one row per realization.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementSample {
    pub hats: Vec<usize>,
    pub h: f64,
    // realization-major, hats.len() values per realization
    data: Vec<f64>,
}

impl IncrementSample {
    pub fn new(hats: Vec<usize>, h: f64, data: Vec<f64>) -> Self {
        assert!(!hats.is_empty() && data.len().is_multiple_of(hats.len()));
        Self { hats, h, data }
    }

    pub fn realizations(&self) -> usize {
        self.data.len() / self.hats.len()
    }

    pub fn raw(&self, r: usize, i: usize) -> f64 {
        self.data[r * self.hats.len() + i]
    }

    /// Column `i` minus its mean over realizations.
    pub fn centered(&self, i: usize) -> Vec<f64> {
        let n = self.hats.len();
        let column: Vec<f64> = self.data.iter().skip(i).step_by(n).copied().collect();
        let mean = column.iter().sum::<f64>() / column.len() as f64;
        column.into_iter().map(|d| d - mean).collect()
    }

    /// `mean_r(Ď_i Ď_j) / (2h)` with the standard error of the mean.
    pub fn covariance(&self, i: usize, j: usize) -> Entry {
        let di = self.centered(i);
        let dj = self.centered(j);
        let products: Vec<f64> = di.iter().zip(&dj).map(|(a, b)| a * b).collect();
        let (mean, stderr) = mean_and_stderr(&products);
        let scale = 1.0 / (2.0 * self.h);
        Entry { value: mean * scale, stderr: stderr * scale }
    }

    /// Full sample covariance matrix (scaled by `1/(2h)`) over the recorded hats.
    pub fn covariance_matrix(&self) -> nalgebra::DMatrix<f64> {
        let n = self.hats.len();
        nalgebra::DMatrix::from_fn(n, n, |i, j| self.covariance(i, j).value)
    }
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub h: f64,
    pub full: RowEstimate,
    pub half: RowEstimate,
    /// `full − half` per entry (sub, diag, super).
    pub difference: [f64; 3],
    /// `3 √(se_full² + se_half²)` per entry.
    pub tolerance: [f64; 3],
    pub consistent: bool,
    /// `h ≥ Δ² / D(ρ)`: the window is not short against the cell diffusion time.
    pub outside_small_h: bool,
}

struct ProfileSetup {
    samplers: SiteSamplers,
    boundary: Boundary,
}

/// Fluctuation estimator bound to its parameters and master seed.
#[derive(Debug, Clone)]
pub struct FluctuationEstimator {
    params: EstimatorParams,
    master_seed: u64,
    model: RateModel,
    basis: BasisSet,
}

impl FluctuationEstimator {
    pub fn new(params: EstimatorParams, master_seed: u64) -> Result<Self, EstimatorError> {
        params.validate()?;
        let basis = BasisSet::with_lattice(params.n_basis, params.lattice_size)?;
        Ok(Self { params, master_seed, model: RateModel::quadratic(), basis })
    }

    /// Replaces the jump-rate function; the sampler still uses `g(k) = k²`.
    pub fn with_rate_model(mut self, model: RateModel) -> Self {
        self.model = model;
        self
    }

    pub fn params(&self) -> &EstimatorParams {
        &self.params
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn basis(&self) -> &BasisSet {
        &self.basis
    }

    pub fn center_node(&self) -> usize {
        self.basis.center_node()
    }

    /// The clipped affine profile through `(x_c, ρ)` with slope `∇ρ`.
    pub fn profile(&self, point: &ProfilePoint) -> AffineProfile {
        AffineProfile::new(point.rho, point.grad_rho, self.basis.node(self.center_node()), self.params.rho_min)
    }

    fn setup(&self, point: &ProfilePoint) -> Result<ProfileSetup, EstimatorError> {
        if !point.rho.is_finite() || !point.grad_rho.is_finite() {
            return Err(EstimatorError::InvalidProfile { index: point.index });
        }
        let profile = self.profile(point);
        let boundary = match self.params.boundary {
            BoundaryMode::Auto if !profile.is_flat() => {
                Boundary::Reservoir { rho_left: profile.density_at(0.0), rho_right: profile.density_at(1.0) }
            }
            _ => Boundary::Periodic,
        };
        let samplers = SiteSamplers::new(&profile, self.params.lattice_size)?;
        Ok(ProfileSetup { samplers, boundary })
    }

    /// Rescaled increments of the given hats over a window `h`, one
    /// realization per random stream `(seed, profile index, r)`.
    pub fn increments(&self, point: &ProfilePoint, hats: &[usize], h: f64) -> Result<IncrementSample, EstimatorError> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(EstimatorError::InvalidWindow(h));
        }
        for &a in hats {
            if a >= self.params.n_basis {
                return Err(BasisError::IndexOutOfRange { index: a, n_basis: self.params.n_basis }.into());
            }
        }
        let setup = self.setup(point)?;
        let inv_sqrt_eps = (self.params.lattice_size as f64).sqrt();
        let per_realization: Result<Vec<Vec<f64>>, EstimatorError> = (0..self.params.realizations)
            .into_par_iter()
            .map(|r| {
                let mut rng = realization_rng(self.master_seed, point.index as u64, r as u64);
                let state = LatticeState::new(setup.samplers.sample(&mut rng), setup.boundary)?;
                let mut dynamics = Dynamics::new(state, self.model)?;
                dynamics.evolve(self.params.t_eq, &mut rng)?;
                let before = self.projections(dynamics.state(), hats)?;
                dynamics.evolve(h, &mut rng)?;
                let after = self.projections(dynamics.state(), hats)?;
                Ok(before.iter().zip(&after).map(|(p0, p1)| (p1 - p0) * inv_sqrt_eps).collect())
            })
            .collect();
        Ok(IncrementSample::new(hats.to_vec(), h, per_realization?.concat()))
    }

    fn projections(&self, state: &LatticeState, hats: &[usize]) -> Result<Vec<f64>, BasisError> {
        hats.iter().map(|&a| self.basis.project(state, a)).collect()
    }

    fn row_with_window(&self, point: &ProfilePoint, h: f64) -> Result<RowEstimate, EstimatorError> {
        let c = self.center_node();
        let sample = self.increments(point, &[c - 1, c, c + 1], h)?;
        Ok(RowEstimate { sub: sample.covariance(1, 2), diag: sample.covariance(1, 1), sup: sample.covariance(1, 0) })
    }

    /// The three tridiagonal entries of the column at the center node.
    pub fn estimate_row(&self, point: &ProfilePoint) -> Result<RowEstimate, EstimatorError> {
        self.row_with_window(point, self.params.h)
    }

    /// `⟨K γ_c, γ_{c+separation}⟩` through the same code path as the row.
    pub fn locality_probe(&self, point: &ProfilePoint, separation: usize) -> Result<Entry, EstimatorError> {
        if separation < 2 {
            return Err(EstimatorError::SeparationTooSmall(separation));
        }
        self.pair_entry(point, separation)
    }

    /// Unchecked variant also accepting separation 0 and 1.
    pub fn pair_entry(&self, point: &ProfilePoint, separation: usize) -> Result<Entry, EstimatorError> {
        let c = self.center_node();
        if c + separation >= self.params.n_basis {
            return Err(EstimatorError::SeparationOutOfRange { separation, n_basis: self.params.n_basis });
        }
        let sample = self.increments(point, &[c, c + separation], self.params.h)?;
        Ok(sample.covariance(0, 1))
    }

    /// Row estimates at `h` and `h/2` from the same random streams.
    pub fn bias_probe(&self, point: &ProfilePoint) -> Result<BiasReport, EstimatorError> {
        let h = self.params.h;
        let full = self.row_with_window(point, h)?;
        let half = self.row_with_window(point, 0.5 * h)?;
        let pairs = [(full.sub, half.sub), (full.diag, half.diag), (full.sup, half.sup)];
        let difference = pairs.map(|(a, b)| a.value - b.value);
        let tolerance = pairs.map(|(a, b)| 3.0 * a.stderr.hypot(b.stderr));
        let consistent = difference.iter().zip(&tolerance).all(|(d, t)| d.abs() <= *t);
        let delta = self.basis.spacing();
        let rho = self.profile(point).density_at(self.basis.node(self.center_node()));
        let outside_small_h = h >= delta * delta / diffusivity(rho)?;
        Ok(BiasReport { h, full, half, difference, tolerance, consistent, outside_small_h })
    }

    /// One row per grid point, in grid order. Failed points are listed in
    /// the metadata and the table is marked incomplete.
    pub fn tabulate(&self, points: &[ProfilePoint]) -> RawOperatorTable {
        let results: Vec<Result<RowEstimate, EstimatorError>> =
            points.par_iter().map(|p| self.estimate_row(p)).collect();
        let mut metadata = TableMetadata::new(TableSource::Particles, self.params.n_basis, self.params.rho_min);
        metadata.estimator = Some(self.params);
        metadata.master_seed = Some(self.master_seed);
        metadata.requested_points = points.len();
        let mut rows = Vec::with_capacity(points.len());
        for (point, result) in points.iter().zip(results) {
            match result {
                Ok(row) => rows.push(row.to_row(point)),
                Err(e) => metadata.failures.push(RowFailure {
                    profile_index: point.index,
                    rho: point.rho,
                    grad_rho: point.grad_rho,
                    error: e.to_string(),
                }),
            }
        }
        metadata.complete = metadata.failures.is_empty();
        RawOperatorTable { rows, metadata }
    }
}

/// Exact column entries `(sub, diag, super)` at the center node for one
/// clipped affine profile.
pub fn analytic_row(point: &ProfilePoint, n_basis: usize, rho_min: f64) -> Result<[f64; 3], EstimatorError> {
    if n_basis < 3 {
        return Err(EstimatorError::BasisTooSmall(n_basis));
    }
    if !point.rho.is_finite() || !point.grad_rho.is_finite() {
        return Err(EstimatorError::InvalidProfile { index: point.index });
    }
    let basis = BasisSet::new(n_basis)?;
    let c = basis.center_node();
    let profile = AffineProfile::new(point.rho, point.grad_rho, basis.node(c), rho_min);
    Ok([
        analytic_operator_entry(&profile, c, c + 1, &basis)?,
        analytic_operator_entry(&profile, c, c, &basis)?,
        analytic_operator_entry(&profile, c, c - 1, &basis)?,
    ])
}

/// Table of exact entries with zero standard errors.
pub fn analytic_table(points: &[ProfilePoint], n_basis: usize, rho_min: f64) -> RawOperatorTable {
    let mut metadata = TableMetadata::new(TableSource::Analytic, n_basis, rho_min);
    metadata.requested_points = points.len();
    let results: Vec<_> = points.par_iter().map(|p| analytic_row(p, n_basis, rho_min)).collect();
    let mut rows = Vec::with_capacity(points.len());
    for (point, result) in points.iter().zip(results) {
        match result {
            Ok([k_sub, k_diag, k_super]) => rows.push(TableRow {
                profile_index: point.index,
                rho: point.rho,
                grad_rho: point.grad_rho,
                k_sub,
                k_diag,
                k_super,
                se_sub: 0.0,
                se_diag: 0.0,
                se_super: 0.0,
            }),
            Err(e) => metadata.failures.push(RowFailure {
                profile_index: point.index,
                rho: point.rho,
                grad_rho: point.grad_rho,
                error: e.to_string(),
            }),
        }
    }
    metadata.complete = metadata.failures.is_empty();
    RawOperatorTable { rows, metadata }
}
