//! Quadratic surrogate for the three tridiagonal operator entries.
//!
//! Each diagonal is a polynomial in `(ρ, s)`, `s = ∇ρ`, over the monomials
//! `[1, ρ, s, ρ², ρs, s²]` in that order. With the mass constraint the diag
//! coefficients are eliminated, `c_diag = −c_sub − c_super`, and the two
//! remaining blocks are fitted jointly against all three data columns.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table::{RawOperatorTable, TableRow, TableSource};

pub const FIT_SCHEMA_VERSION: u32 = 1;

pub const MONOMIALS: [&str; 6] = ["1", "rho", "grad_rho", "rho^2", "rho*grad_rho", "grad_rho^2"];

/// Relative residual norm below which a design column counts as dependent.
const RANK_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least {needed} table rows, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("design matrix is rank deficient; dependent monomial(s): {}", .deficient.join(", "))]
    RankDeficient { deficient: Vec<&'static str> },
    #[error("weighted fit needs positive standard errors; profile {profile_index} has {stderr}")]
    NonPositiveStderr { profile_index: usize, stderr: f64 },
    #[error("non-finite value in table row for profile {profile_index}")]
    NonFiniteRow { profile_index: usize },
    #[error("non-finite evaluation point ({rho}, {grad_rho})")]
    NonFiniteInput { rho: f64, grad_rho: f64 },
    #[error("sub entry {0} too small to normalize the stencil")]
    Normalization(f64),
}

#[derive(Debug, Error)]
pub enum FitIoError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("fit file schema error in {path}: {message}")]
    Schema { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FitOptions {
    pub constrained: bool,
    /// Inverse-variance weights from the table standard errors.
    pub weighted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitProvenance {
    pub source: TableSource,
    pub master_seed: Option<u64>,
    pub table_points: usize,
    pub table_timestamp_unix: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticFit {
    pub schema_version: u32,
    pub constrained: bool,
    pub weighted: bool,
    pub monomials: Vec<String>,
    /// Rows: sub, diag, super; columns follow [`MONOMIALS`].
    pub coefficients: [[f64; 6]; 3],
    /// Unweighted RMS residual per diagonal.
    pub residual_rms: [f64; 3],
    pub n_basis: usize,
    /// Convex hull of the tabulated `(ρ, ∇ρ)` points, counter-clockwise.
    pub hull: Vec<[f64; 2]>,
    pub provenance: FitProvenance,
}

pub fn monomials(rho: f64, grad: f64) -> [f64; 6] {
    [1.0, rho, grad, rho * rho, rho * grad, grad * grad]
}

fn design(rows: &[TableRow]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), 6, |i, j| monomials(rows[i].rho, rows[i].grad_rho)[j])
}

/// Monomials whose design columns are linearly dependent on earlier ones.
pub fn deficient_monomials(x: &DMatrix<f64>) -> Vec<&'static str> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut deficient = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let norm = col.norm();
        if norm == 0.0 {
            deficient.push(MONOMIALS[j]);
            continue;
        }
        let mut v = col / norm;
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for q in &basis {
                let proj = q.dot(&v);
                v -= q * proj;
            }
        }
        let rest = v.norm();
        if rest < RANK_TOLERANCE {
            deficient.push(MONOMIALS[j]);
        } else {
            basis.push(v / rest);
        }
    }
    deficient
}

fn least_squares(a: DMatrix<f64>, b: DVector<f64>) -> DVector<f64> {
    let qr = a.qr();
    let qtb = qr.q().transpose() * b;
    qr.r().solve_upper_triangular(&qtb).expect("full column rank checked before solving")
}

impl QuadraticFit {
    pub fn fit(table: &RawOperatorTable, options: FitOptions) -> Result<Self, FitError> {
        let rows = &table.rows;
        if rows.len() < 6 {
            return Err(FitError::TooFewPoints { needed: 6, got: rows.len() });
        }
        for r in rows {
            let v = [r.rho, r.grad_rho, r.k_sub, r.k_diag, r.k_super];
            if v.iter().any(|x| !x.is_finite()) {
                return Err(FitError::NonFiniteRow { profile_index: r.profile_index });
            }
            if options.weighted {
                if let Some(&s) = r.stderrs().iter().find(|&&s| !(s > 0.0) || !s.is_finite()) {
                    return Err(FitError::NonPositiveStderr { profile_index: r.profile_index, stderr: s });
                }
            }
        }
        let x = design(rows);
        let deficient = deficient_monomials(&x);
        if !deficient.is_empty() {
            return Err(FitError::RankDeficient { deficient });
        }
        let n = rows.len();
        let y = |d: usize| DVector::from_fn(n, |i, _| rows[i].entries()[d]);
        // sqrt of inverse-variance weights per diagonal
        let w = |d: usize| {
            DVector::from_fn(n, |i, _| if options.weighted { 1.0 / rows[i].stderrs()[d] } else { 1.0 })
        };

        let mut coefficients = [[0.0; 6]; 3];
        if options.constrained {
            let mut a = DMatrix::zeros(3 * n, 12);
            let mut b = DVector::zeros(3 * n);
            // block rows: sub ← c_sub, super ← c_super, diag ← −c_sub − c_super
            for (block, d) in [(0usize, 0usize), (1, 2), (2, 1)] {
                let wd = w(d);
                let yd = y(d);
                for i in 0..n {
                    let row = block * n + i;
                    let m = monomials(rows[i].rho, rows[i].grad_rho);
                    for j in 0..6 {
                        let v = m[j] * wd[i];
                        match block {
                            0 => a[(row, j)] = v,
                            1 => a[(row, 6 + j)] = v,
                            _ => {
                                a[(row, j)] = -v;
                                a[(row, 6 + j)] = -v;
                            }
                        }
                    }
                    b[row] = yd[i] * wd[i];
                }
            }
            let c = least_squares(a, b);
            for j in 0..6 {
                coefficients[0][j] = c[j];
                coefficients[2][j] = c[6 + j];
                coefficients[1][j] = -(c[j] + c[6 + j]);
            }
        } else {
            for d in 0..3 {
                let wd = w(d);
                let a = DMatrix::from_fn(n, 6, |i, j| x[(i, j)] * wd[i]);
                let b = y(d).component_mul(&wd);
                let c = least_squares(a, b);
                coefficients[d].copy_from_slice(c.as_slice());
            }
        }

        let mut fit = Self {
            schema_version: FIT_SCHEMA_VERSION,
            constrained: options.constrained,
            weighted: options.weighted,
            monomials: MONOMIALS.iter().map(|s| s.to_string()).collect(),
            coefficients,
            residual_rms: [0.0; 3],
            n_basis: table.metadata.n_basis,
            hull: convex_hull(rows.iter().map(|r| [r.rho, r.grad_rho]).collect()),
            provenance: FitProvenance {
                source: table.metadata.source,
                master_seed: table.metadata.master_seed,
                table_points: n,
                table_timestamp_unix: table.metadata.timestamp_unix,
            },
        };
        let mut sq = [0.0; 3];
        for r in rows {
            let e = fit.evaluate_unchecked(r.rho, r.grad_rho);
            for d in 0..3 {
                sq[d] += (e[d] - r.entries()[d]).powi(2);
            }
        }
        fit.residual_rms = sq.map(|s| (s / n as f64).sqrt());
        Ok(fit)
    }

    fn evaluate_unchecked(&self, rho: f64, grad: f64) -> [f64; 3] {
        let m = monomials(rho, grad);
        let poly = |c: &[f64; 6]| c.iter().zip(&m).map(|(c, m)| c * m).sum::<f64>();
        let sub = poly(&self.coefficients[0]);
        let sup = poly(&self.coefficients[2]);
        let diag = if self.constrained { -(sub + sup) } else { poly(&self.coefficients[1]) };
        [sub, diag, sup]
    }

    /// `(K_sub, K_diag, K_super)` at `(ρ, ∇ρ)`.
    pub fn evaluate(&self, rho: f64, grad_rho: f64) -> Result<[f64; 3], FitError> {
        if !rho.is_finite() || !grad_rho.is_finite() {
            return Err(FitError::NonFiniteInput { rho, grad_rho });
        }
        Ok(self.evaluate_unchecked(rho, grad_rho))
    }

    /// Whether `(ρ, ∇ρ)` lies outside the hull of the tabulated points.
    pub fn is_extrapolation(&self, rho: f64, grad_rho: f64) -> bool {
        !hull_contains(&self.hull, [rho, grad_rho])
    }

    /// Analytic `∂/∂ρ` and `∂/∂∇ρ` of each diagonal.
    pub fn gradient(&self, rho: f64, grad: f64) -> [[f64; 2]; 3] {
        let d = |c: &[f64; 6]| [c[1] + 2.0 * c[3] * rho + c[4] * grad, c[2] + c[4] * rho + 2.0 * c[5] * grad];
        [d(&self.coefficients[0]), d(&self.coefficients[1]), d(&self.coefficients[2])]
    }

    pub fn save(&self, path: &Path) -> Result<(), FitIoError> {
        let json = serde_json::to_string_pretty(self).expect("fit serializes");
        fs::write(path, json + "\n").map_err(|source| FitIoError::Io { path: path.into(), source })
    }

    pub fn load(path: &Path) -> Result<Self, FitIoError> {
        let text = fs::read_to_string(path).map_err(|source| FitIoError::Io { path: path.into(), source })?;
        Self::from_json(&text).map_err(|message| FitIoError::Schema { path: path.into(), message })
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let fit: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if fit.schema_version != FIT_SCHEMA_VERSION {
            return Err(format!("schema_version {} not supported (expected {FIT_SCHEMA_VERSION})", fit.schema_version));
        }
        if fit.monomials.iter().ne(MONOMIALS.iter()) {
            return Err(format!("monomial order must be {:?}", MONOMIALS));
        }
        Ok(fit)
    }
}

/// Normalized stencils at a reference density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StencilReport {
    pub rho_ref: f64,
    /// `evaluate(ρ_ref, 0)` scaled so the sub entry is −1.
    pub k1: [f64; 3],
    /// `∂/∂∇ρ` of each diagonal at `(ρ_ref, 0)`, same normalization.
    pub k2: [f64; 3],
    pub k1_raw: [f64; 3],
    pub k2_raw: [f64; 3],
}

fn normalize(t: [f64; 3]) -> Result<[f64; 3], FitError> {
    let scale = t.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if !(t[0].abs() > 1e-12 * scale) || !t[0].is_finite() {
        return Err(FitError::Normalization(t[0]));
    }
    let s = -t[0];
    Ok(t.map(|v| v / s))
}

pub fn stencil_decompose(fit: &QuadraticFit, rho_ref: f64) -> Result<StencilReport, FitError> {
    let k1_raw = fit.evaluate(rho_ref, 0.0)?;
    let g = fit.gradient(rho_ref, 0.0);
    let k2_raw = [g[0][1], g[1][1], g[2][1]];
    Ok(StencilReport { rho_ref, k1: normalize(k1_raw)?, k2: normalize(k2_raw)?, k1_raw, k2_raw })
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Andrew's monotone chain; collinear points are dropped.
pub fn convex_hull(mut points: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    points.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    points.dedup();
    if points.len() < 3 {
        return points;
    }
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &p in &points {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &p in points.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn hull_contains(hull: &[[f64; 2]], p: [f64; 2]) -> bool {
    let scale = hull.iter().fold(1.0f64, |a, q| a.max(q[0].abs()).max(q[1].abs()));
    let tol = 1e-9 * scale * scale;
    match hull.len() {
        0 => false,
        1 => (hull[0][0] - p[0]).abs() <= 1e-9 * scale && (hull[0][1] - p[1]).abs() <= 1e-9 * scale,
        2 => {
            let (a, b) = (hull[0], hull[1]);
            let along = (p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1]);
            let len2 = (b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2);
            cross(a, b, p).abs() <= tol && along >= -tol && along <= len2 + tol
        }
        n => (0..n).all(|i| cross(hull[i], hull[(i + 1) % n], p) >= -tol),
    }
}
