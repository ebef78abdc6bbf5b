//! Linear finite elements for `∂t ρ = Δ m(ρ)` in the gradient-flow form.
//!
//! Nodal values `ρ_a` evolve by `M ρ̇ = RHS` with the consistent mass matrix
//! `M` and explicit Euler steps. The fitted right-hand side is
//!
//! ```text
//! RHS_b = Σ_{a ∈ {b−1, b, b+1}} K_ba(ρ_a, ∇ρ_a) F(ρ_a)
//! ```
//!
//! where column `a` of `K` comes from the surrogate evaluated at node `a`.
//! The reference uses the stiffness form `RHS = −A m(ρ)`.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{FitError, QuadraticFit};
use crate::thermo::{ThermoError, Thermodynamics};

/// `dt = DT_SAFETY · Δ² / max D` for the reference operator, which is
/// `12 DT_SAFETY / stiffness` in general.
pub const DT_SAFETY: f64 = 0.1;
/// Steps between re-evaluations of the automatic time step.
pub const DT_REFRESH: usize = 100;

/// Automatic step for a given [`RhsModel::stiffness`]; the reference
/// operator's stiffness `12 D / Δ²` gives `DT_SAFETY · Δ² / D`, well inside
/// the explicit limit `Δ² / (6 D)`.
pub fn automatic_dt(stiffness: f64) -> f64 {
    12.0 * DT_SAFETY / stiffness
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("non-positive density {value} at node {node}, t = {time}")]
    NonPositiveDensity { node: usize, time: f64, value: f64 },
    #[error("thermodynamics failed at node {node}: {source}")]
    Thermo { node: usize, source: ThermoError },
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("operator fitted on {fit} basis functions, mesh has {mesh}")]
    MeshMismatch { fit: usize, mesh: usize },
    #[error("mesh needs at least 3 basis functions, got {0}")]
    TooFewNodes(usize),
    #[error("field has {got} values, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("Dirichlet end values must match the pinned boundary data")]
    BoundaryMismatch,
    #[error("singular tridiagonal system")]
    Singular,
    #[error("time step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("horizon must be non-negative and finite, got {0}")]
    InvalidHorizon(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldBoundary {
    Periodic,
    Dirichlet { left: f64, right: f64 },
}

/// Nodal density values. Periodic meshes carry `n_basis` nodes at `a/n`;
/// Dirichlet meshes carry `n_basis + 1` nodes including the pinned ends.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField {
    values: Vec<f64>,
    spacing: f64,
    boundary: FieldBoundary,
    time: f64,
}

impl NodalField {
    pub fn new(values: Vec<f64>, n_basis: usize, boundary: FieldBoundary) -> Result<Self, SolverError> {
        if n_basis < 3 {
            return Err(SolverError::TooFewNodes(n_basis));
        }
        let expected = node_count(n_basis, boundary);
        if values.len() != expected {
            return Err(SolverError::LengthMismatch { expected, got: values.len() });
        }
        if let FieldBoundary::Dirichlet { left, right } = boundary {
            if values[0] != left || values[expected - 1] != right {
                return Err(SolverError::BoundaryMismatch);
            }
        }
        let field = Self { values, spacing: 1.0 / n_basis as f64, boundary, time: 0.0 };
        field.check_positive()?;
        Ok(field)
    }

    /// Samples `f` at the nodes; Dirichlet ends take the boundary data.
    pub fn from_fn(n_basis: usize, boundary: FieldBoundary, f: impl Fn(f64) -> f64) -> Result<Self, SolverError> {
        let n = node_count(n_basis, boundary);
        let mut values: Vec<f64> = (0..n).map(|a| f(a as f64 / n_basis as f64)).collect();
        if let FieldBoundary::Dirichlet { left, right } = boundary {
            values[0] = left;
            values[n - 1] = right;
        }
        Self::new(values, n_basis, boundary)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn n_basis(&self) -> usize {
        (1.0 / self.spacing).round() as usize
    }

    pub fn boundary(&self) -> FieldBoundary {
        self.boundary
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn node_x(&self, a: usize) -> f64 {
        a as f64 * self.spacing
    }

    /// `∫ ρ dx` of the piecewise-linear interpolant.
    pub fn mass(&self) -> f64 {
        let sum: f64 = self.values.iter().sum();
        match self.boundary {
            FieldBoundary::Periodic => self.spacing * sum,
            FieldBoundary::Dirichlet { .. } => {
                let ends = self.values[0] + self.values[self.values.len() - 1];
                self.spacing * (sum - 0.5 * ends)
            }
        }
    }

    /// Nodal gradients: centered, wrapped when periodic, one-sided at Dirichlet ends.
    pub fn gradients(&self) -> Vec<f64> {
        let n = self.values.len();
        let v = &self.values;
        let h = self.spacing;
        (0..n)
            .map(|a| match self.boundary {
                FieldBoundary::Periodic => (v[(a + 1) % n] - v[(a + n - 1) % n]) / (2.0 * h),
                FieldBoundary::Dirichlet { .. } if a == 0 => (v[1] - v[0]) / h,
                FieldBoundary::Dirichlet { .. } if a == n - 1 => (v[n - 1] - v[n - 2]) / h,
                FieldBoundary::Dirichlet { .. } => (v[a + 1] - v[a - 1]) / (2.0 * h),
            })
            .collect()
    }

    fn check_positive(&self) -> Result<(), SolverError> {
        match self.values.iter().position(|&r| !(r > 0.0) || !r.is_finite()) {
            Some(node) => Err(SolverError::NonPositiveDensity { node, time: self.time, value: self.values[node] }),
            None => Ok(()),
        }
    }

    /// Rows that evolve; Dirichlet end rows are pinned.
    fn free_rows(&self) -> std::ops::Range<usize> {
        match self.boundary {
            FieldBoundary::Periodic => 0..self.values.len(),
            FieldBoundary::Dirichlet { .. } => 1..self.values.len() - 1,
        }
    }

    /// `(b−1, b+1)` with periodic wrap.
    fn neighbours(&self, b: usize) -> (usize, usize) {
        let n = self.values.len();
        ((b + n - 1) % n, (b + 1) % n)
    }
}

fn node_count(n_basis: usize, boundary: FieldBoundary) -> usize {
    match boundary {
        FieldBoundary::Periodic => n_basis,
        FieldBoundary::Dirichlet { .. } => n_basis + 1,
    }
}

/// Row `i` reads `sub[i] x[i−1] + main[i] x[i] + sup[i] x[i+1]`; when
/// cyclic, `sub[0]` couples to `x[n−1]` and `sup[n−1]` to `x[0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalSystem {
    pub sub: Vec<f64>,
    pub main: Vec<f64>,
    pub sup: Vec<f64>,
    pub cyclic: bool,
}

impl TridiagonalSystem {
    pub fn len(&self) -> usize {
        self.main.len()
    }

    pub fn is_empty(&self) -> bool {
        self.main.is_empty()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut y = self.main[i] * x[i];
                if i > 0 {
                    y += self.sub[i] * x[i - 1];
                } else if self.cyclic {
                    y += self.sub[0] * x[n - 1];
                }
                if i + 1 < n {
                    y += self.sup[i] * x[i + 1];
                } else if self.cyclic {
                    y += self.sup[n - 1] * x[0];
                }
                y
            })
            .collect()
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, SolverError> {
        if self.cyclic {
            self.solve_cyclic(rhs)
        } else {
            thomas(&self.sub, &self.main, &self.sup, rhs)
        }
    }

    // Sherman-Morrison on top of two Thomas solves
    fn solve_cyclic(&self, rhs: &[f64]) -> Result<Vec<f64>, SolverError> {
        let n = self.len();
        if n < 3 {
            return Err(SolverError::TooFewNodes(n));
        }
        let alpha = self.sup[n - 1];
        let beta = self.sub[0];
        let gamma = -self.main[0];
        let mut main = self.main.clone();
        main[0] -= gamma;
        main[n - 1] -= alpha * beta / gamma;
        let x = thomas(&self.sub, &main, &self.sup, rhs)?;
        let mut u = vec![0.0; n];
        u[0] = gamma;
        u[n - 1] = alpha;
        let z = thomas(&self.sub, &main, &self.sup, &u)?;
        let fact = (x[0] + beta * x[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
        Ok(x.iter().zip(&z).map(|(x, z)| x - fact * z).collect())
    }
}

fn thomas(sub: &[f64], main: &[f64], sup: &[f64], rhs: &[f64]) -> Result<Vec<f64>, SolverError> {
    let n = main.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = main[0];
    if denom == 0.0 {
        return Err(SolverError::Singular);
    }
    c[0] = sup[0] / denom;
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = main[i] - sub[i] * c[i - 1];
        if denom == 0.0 {
            return Err(SolverError::Singular);
        }
        c[i] = sup[i] / denom;
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

/// Consistent mass matrix `⟨γ_a, γ_b⟩`: `(Δ/6, 2Δ/3, Δ/6)`, cyclic when
/// periodic, identity rows at pinned Dirichlet nodes.
pub fn mass_matrix(n_basis: usize, spacing: f64, boundary: FieldBoundary) -> TridiagonalSystem {
    let n = node_count(n_basis, boundary);
    let mut m = TridiagonalSystem {
        sub: vec![spacing / 6.0; n],
        main: vec![2.0 * spacing / 3.0; n],
        sup: vec![spacing / 6.0; n],
        cyclic: matches!(boundary, FieldBoundary::Periodic),
    };
    if !m.cyclic {
        for i in [0, n - 1] {
            m.sub[i] = 0.0;
            m.main[i] = 1.0;
            m.sup[i] = 0.0;
        }
    }
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct RhsEval {
    pub values: Vec<f64>,
    /// Some node was evaluated outside the tabulated region.
    pub extrapolated: bool,
}

pub trait RhsModel: Sync {
    fn rhs(&self, field: &NodalField) -> Result<RhsEval, SolverError>;

    /// Largest decay rate of `M⁻¹ J` (1/time), `J` the linearized RHS,
    /// estimated node by node. Explicit Euler is stable for `dt < 2 / stiffness`.
    fn stiffness(&self, field: &NodalField) -> Result<f64, SolverError>;
}

fn forces(field: &NodalField, thermo: &dyn Thermodynamics) -> Result<Vec<f64>, SolverError> {
    field.values.iter().enumerate().map(|(node, &r)| thermo.force(r).map_err(|source| SolverError::Thermo { node, source })).collect()
}

/// Right-hand side from a fitted operator and the thermodynamic force.
pub struct FittedOperator<'a> {
    pub fit: &'a QuadraticFit,
    pub thermo: &'a dyn Thermodynamics,
}

impl RhsModel for FittedOperator<'_> {
    fn rhs(&self, field: &NodalField) -> Result<RhsEval, SolverError> {
        if self.fit.n_basis != field.n_basis() {
            return Err(SolverError::MeshMismatch { fit: self.fit.n_basis, mesh: field.n_basis() });
        }
        field.check_positive()?;
        let grads = field.gradients();
        let mut extrapolated = false;
        let columns: Vec<[f64; 3]> = field
            .values
            .iter()
            .zip(&grads)
            .map(|(&r, &g)| {
                extrapolated |= self.fit.is_extrapolation(r, g);
                self.fit.evaluate(r, g)
            })
            .collect::<Result<_, _>>()?;
        let f = forces(field, self.thermo)?;
        let mut values = vec![0.0; field.values.len()];
        for b in field.free_rows() {
            let (l, r) = field.neighbours(b);
            values[b] = columns[l][0] * f[l] + columns[b][1] * f[b] + columns[r][2] * f[r];
        }
        Ok(RhsEval { values, extrapolated })
    }

    // On the checkerboard mode δ_a = ±ε the centered gradients vanish and
    // row b picks up δ_b (F ∂_ρ c + F' c) with c = diag − sub − super, so
    // the rows do not cancel the mean force there; against the mass
    // eigenvalue Δ/3 this gives 3 |F ∂_ρ c + F' c| / Δ. The smooth-mode
    // bound of the reference operator is kept as a floor.
    fn stiffness(&self, field: &NodalField) -> Result<f64, SolverError> {
        let mut worst = ReferenceOperator { thermo: self.thermo }.stiffness(field)?;
        for (node, (&r, &s)) in field.values.iter().zip(&field.gradients()).enumerate() {
            let e = self.fit.evaluate(r, s)?;
            let g = self.fit.gradient(r, s);
            let c = e[1] - e[0] - e[2];
            let dc = g[1][0] - g[0][0] - g[2][0];
            let thermo = |rho| self.thermo.force(rho).map_err(|source| SolverError::Thermo { node, source });
            let f = thermo(r)?;
            let dr = 1e-4 * r;
            let df = (thermo(r + dr)? - thermo(r - dr)?) / (2.0 * dr);
            worst = worst.max(3.0 * (f * dc + df * c).abs() / field.spacing);
        }
        Ok(worst)
    }
}

/// `RHS = −A m(ρ)` with the hat stiffness `A = (1/Δ)(−1, 2, −1)`.
pub struct ReferenceOperator<'a> {
    pub thermo: &'a dyn Thermodynamics,
}

impl RhsModel for ReferenceOperator<'_> {
    fn rhs(&self, field: &NodalField) -> Result<RhsEval, SolverError> {
        field.check_positive()?;
        let m: Vec<f64> = field
            .values
            .iter()
            .enumerate()
            .map(|(node, &r)| self.thermo.mobility(r).map_err(|source| SolverError::Thermo { node, source }))
            .collect::<Result<_, _>>()?;
        let mut values = vec![0.0; field.values.len()];
        for b in field.free_rows() {
            let (l, r) = field.neighbours(b);
            values[b] = (m[l] - 2.0 * m[b] + m[r]) / field.spacing;
        }
        Ok(RhsEval { values, extrapolated: false })
    }

    // checkerboard mode of the stiffness against the consistent mass: 12 D / Δ²
    fn stiffness(&self, field: &NodalField) -> Result<f64, SolverError> {
        Ok(12.0 / diffusive_time(&[field], self.thermo)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub extrapolated: bool,
    /// `Σ_b RHS_b F_b` before the step (when forces were supplied).
    pub entropy_production: Option<f64>,
}

/// One explicit Euler step: `M ρ̇ = RHS`, `ρ ← ρ + dt ρ̇`.
pub fn step(
    field: &mut NodalField,
    model: &dyn RhsModel,
    mass: &TridiagonalSystem,
    dt: f64,
    thermo: Option<&dyn Thermodynamics>,
) -> Result<StepInfo, SolverError> {
    if !(dt >= 0.0) || !dt.is_finite() {
        return Err(SolverError::InvalidStep(dt));
    }
    let eval = model.rhs(field)?;
    let entropy_production = match thermo {
        Some(t) => Some(forces(field, t)?.iter().zip(&eval.values).map(|(f, r)| f * r).sum()),
        None => None,
    };
    if dt > 0.0 {
        let rate = mass.solve(&eval.values)?;
        for b in field.free_rows() {
            field.values[b] += dt * rate[b];
        }
        field.time += dt;
        field.check_positive()?;
    }
    Ok(StepInfo { extrapolated: eval.extrapolated, entropy_production })
}

/// `Δ² / max_a D(ρ_a)` over the given fields.
pub fn diffusive_time(fields: &[&NodalField], thermo: &dyn Thermodynamics) -> Result<f64, SolverError> {
    let mut dmax = 0.0f64;
    for field in fields {
        field.check_positive()?;
        for (node, &r) in field.values.iter().enumerate() {
            dmax = dmax.max(thermo.diffusivity(r).map_err(|source| SolverError::Thermo { node, source })?);
        }
    }
    let h = fields[0].spacing;
    Ok(h * h / dmax)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveSettings {
    pub horizon: f64,
    /// Fixed step; `None` uses [`automatic_dt`] refreshed every `DT_REFRESH` steps.
    pub dt: Option<f64>,
    pub snapshot_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub time: f64,
    pub rel_l2: f64,
    pub rel_linf: f64,
    pub mass_fitted: f64,
    pub mass_reference: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub fitted: Vec<f64>,
    pub reference: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub snapshots: Vec<Snapshot>,
    pub errors: Vec<ErrorRow>,
    pub spacing: f64,
    pub steps: usize,
    pub extrapolated: bool,
    /// Smallest `Σ_b RHS_b F_b` seen on each side (fitted, reference).
    pub min_entropy_production: [f64; 2],
    pub warnings: Vec<String>,
}

fn output_times(settings: &EvolveSettings) -> Vec<f64> {
    let mut times: Vec<f64> =
        settings.snapshot_times.iter().copied().filter(|&t| t > 0.0 && t < settings.horizon).collect();
    times.push(0.0);
    times.push(settings.horizon);
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
}

/// Evolves the same initial field with both models in lockstep, sharing
/// every time step, and records snapshots and error metrics.
pub fn evolve_and_compare(
    initial: &NodalField,
    fitted: &dyn RhsModel,
    reference: &dyn RhsModel,
    thermo: &dyn Thermodynamics,
    settings: &EvolveSettings,
) -> Result<Comparison, SolverError> {
    if !(settings.horizon >= 0.0) || !settings.horizon.is_finite() {
        return Err(SolverError::InvalidHorizon(settings.horizon));
    }
    if let Some(dt) = settings.dt {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(SolverError::InvalidStep(dt));
        }
    }
    let mass = mass_matrix(initial.n_basis(), initial.spacing, initial.boundary);
    let mut a = initial.clone();
    let mut b = initial.clone();
    let start = initial.time;
    let mut out = Comparison {
        snapshots: Vec::new(),
        errors: Vec::new(),
        spacing: initial.spacing,
        steps: 0,
        extrapolated: false,
        min_entropy_production: [f64::INFINITY; 2],
        warnings: Vec::new(),
    };
    let mut dt = 0.0;
    let mut warned = false;
    for target in output_times(settings) {
        let target = start + target;
        loop {
            let remaining = target - a.time;
            if remaining <= 1e-12 * target.abs().max(1e-300) {
                break;
            }
            if out.steps.is_multiple_of(DT_REFRESH) || dt == 0.0 {
                let stiffness = fitted.stiffness(&a)?.max(reference.stiffness(&b)?);
                dt = settings.dt.unwrap_or(automatic_dt(stiffness));
                if dt > 2.0 / stiffness && !warned {
                    out.warnings.push(format!(
                        "dt = {dt:e} exceeds the explicit stability limit {:e} at t = {}",
                        2.0 / stiffness,
                        a.time
                    ));
                    warned = true;
                }
            }
            let h = dt.min(remaining);
            let sa = step(&mut a, fitted, &mass, h, Some(thermo))?;
            let sb = step(&mut b, reference, &mass, h, Some(thermo))?;
            // land exactly on the output time
            if h == remaining {
                a.time = target;
                b.time = target;
            }
            out.extrapolated |= sa.extrapolated;
            out.min_entropy_production[0] = out.min_entropy_production[0].min(sa.entropy_production.unwrap_or(0.0));
            out.min_entropy_production[1] = out.min_entropy_production[1].min(sb.entropy_production.unwrap_or(0.0));
            out.steps += 1;
        }
        out.errors.push(error_row(&a, &b));
        out.snapshots.push(Snapshot { time: a.time, fitted: a.values.clone(), reference: b.values.clone() });
    }
    Ok(out)
}

fn error_row(fitted: &NodalField, reference: &NodalField) -> ErrorRow {
    let diff: Vec<f64> = fitted.values.iter().zip(&reference.values).map(|(f, r)| f - r).collect();
    let norm2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let norm_inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    ErrorRow {
        time: fitted.time,
        rel_l2: norm2(&diff) / norm2(&reference.values),
        rel_linf: norm_inf(&diff) / norm_inf(&reference.values),
        mass_fitted: fitted.mass(),
        mass_reference: reference.mass(),
    }
}

impl Comparison {
    /// `time,node_index,x,rho_fitted,rho_reference`.
    pub fn write_trajectory<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "time,node_index,x,rho_fitted,rho_reference")?;
        for s in &self.snapshots {
            for (i, (f, r)) in s.fitted.iter().zip(&s.reference).enumerate() {
                writeln!(out, "{},{},{},{},{}", s.time, i, i as f64 * self.spacing, f, r)?;
            }
        }
        Ok(())
    }

    /// `time,rel_L2,rel_Linf,mass_fitted,mass_reference`.
    pub fn write_errors<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "time,rel_L2,rel_Linf,mass_fitted,mass_reference")?;
        for e in &self.errors {
            writeln!(out, "{},{},{},{},{}", e.time, e.rel_l2, e.rel_linf, e.mass_fitted, e.mass_reference)?;
        }
        Ok(())
    }

    pub fn max_rel_linf(&self) -> f64 {
        self.errors.iter().fold(0.0, |m, e| m.max(e.rel_linf))
    }
}

/// Single-model run: snapshots of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<(f64, Vec<f64>)>,
    pub spacing: f64,
    pub steps: usize,
    pub extrapolated: bool,
    pub warnings: Vec<String>,
}

impl Trajectory {
    /// `time,node_index,x,rho`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "time,node_index,x,rho")?;
        for (t, values) in &self.snapshots {
            for (i, v) in values.iter().enumerate() {
                writeln!(out, "{},{},{},{}", t, i, i as f64 * self.spacing, v)?;
            }
        }
        Ok(())
    }
}

pub fn evolve(
    initial: &NodalField,
    model: &dyn RhsModel,
    thermo: &dyn Thermodynamics,
    settings: &EvolveSettings,
) -> Result<Trajectory, SolverError> {
    let c = evolve_and_compare(initial, model, model, thermo, settings)?;
    Ok(Trajectory {
        snapshots: c.snapshots.into_iter().map(|s| (s.time, s.fitted)).collect(),
        spacing: c.spacing,
        steps: c.steps,
        extrapolated: c.extrapolated,
        warnings: c.warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thermo::ZrpThermo;

    #[test]
    fn mass_matrix_entries() {
        let m = mass_matrix(40, 1.0 / 40.0, FieldBoundary::Periodic);
        assert_eq!((m.sub[5], m.main[5], m.sup[5]), (1.0 / 240.0, 2.0 / 120.0, 1.0 / 240.0));
        let ones = m.apply(&[1.0; 40]);
        assert!(ones.iter().all(|r| (r - 1.0 / 40.0).abs() < 1e-16));
        let d = mass_matrix(10, 0.1, FieldBoundary::Dirichlet { left: 1.0, right: 1.0 });
        assert_eq!(d.len(), 11);
        assert_eq!((d.main[0], d.sup[0], d.main[10], d.sub[10]), (1.0, 0.0, 1.0, 0.0));
    }

    #[test]
    fn tridiagonal_solves_round_trip() {
        for bc in [FieldBoundary::Periodic, FieldBoundary::Dirichlet { left: 1.0, right: 2.0 }] {
            let m = mass_matrix(12, 1.0 / 12.0, bc);
            let x: Vec<f64> = (0..m.len()).map(|i| (i as f64 * 0.7).sin() + 2.0).collect();
            let y = m.solve(&m.apply(&x)).unwrap();
            for (a, b) in x.iter().zip(&y) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn flat_field_has_zero_reference_rhs() {
        let f = NodalField::from_fn(20, FieldBoundary::Periodic, |_| 5.0).unwrap();
        let r = ReferenceOperator { thermo: &ZrpThermo }.rhs(&f).unwrap();
        assert!(r.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_step_is_identity() {
        let mut f = NodalField::from_fn(20, FieldBoundary::Periodic, |x| 7.0 + (6.0 * x).sin()).unwrap();
        let before = f.clone();
        let mass = mass_matrix(20, f.spacing(), f.boundary());
        step(&mut f, &ReferenceOperator { thermo: &ZrpThermo }, &mass, 0.0, None).unwrap();
        assert_eq!(f, before);
    }

    #[test]
    fn invalid_fields_are_rejected() {
        assert!(matches!(
            NodalField::new(vec![1.0, -1.0, 1.0], 3, FieldBoundary::Periodic),
            Err(SolverError::NonPositiveDensity { node: 1, .. })
        ));
        assert!(NodalField::new(vec![1.0; 4], 3, FieldBoundary::Periodic).is_err());
        assert_eq!(
            NodalField::new(vec![1.0; 4], 3, FieldBoundary::Dirichlet { left: 2.0, right: 1.0 }),
            Err(SolverError::BoundaryMismatch)
        );
    }

    #[test]
    fn gradients_by_boundary() {
        let f = NodalField::from_fn(4, FieldBoundary::Dirichlet { left: 1.0, right: 5.0 }, |x| 1.0 + 4.0 * x).unwrap();
        assert_eq!(f.gradients(), vec![4.0; 5]);
        let p = NodalField::from_fn(4, FieldBoundary::Periodic, |x| 1.0 + x).unwrap();
        // wrap sees the jump from 1.75 back to 1.0
        assert_eq!(p.gradients()[0], (1.25 - 1.75) / 0.5);
        assert_eq!(p.gradients()[1], 1.0);
    }

    #[test]
    fn output_times_include_ends() {
        let s = EvolveSettings { horizon: 1.0, dt: None, snapshot_times: vec![0.5, 2.0, 0.5, 0.0] };
        assert_eq!(output_times(&s), vec![0.0, 0.5, 1.0]);
    }
}
