//! Tabulation grids of `(ρ, ∇ρ)` points.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::ProfilePoint;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("range {start}:{step}:{stop} is empty or has a non-positive step")]
    BadRange { start: f64, step: f64, stop: f64 },
    #[error("grid is empty")]
    Empty,
}

/// Inclusive range `start:step:stop`, Matlab style.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl RangeSpec {
    pub fn new(start: f64, stop: f64, step: f64) -> Self {
        Self { start, stop, step }
    }

    pub fn values(&self) -> Result<Vec<f64>, GridError> {
        let bad = GridError::BadRange { start: self.start, step: self.step, stop: self.stop };
        if !(self.step > 0.0) || !(self.stop >= self.start) || !self.start.is_finite() || !self.stop.is_finite() {
            return Err(bad);
        }
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        // snap to 1e-12 so 4 + 3·0.1 prints as 4.3
        Ok((0..count).map(|i| ((self.start + i as f64 * self.step) * 1e12).round() / 1e12).collect())
    }
}

/// Flat points `flat_rho × {0}` followed by affine points
/// `affine_rho × gradients` (each gradient also mirrored when `symmetric`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub flat_rho: Option<RangeSpec>,
    pub affine_rho: Option<RangeSpec>,
    #[serde(default)]
    pub gradients: Vec<f64>,
    #[serde(default = "default_true")]
    pub symmetric: bool,
}

fn default_true() -> bool {
    true
}

impl GridSpec {
    pub fn points(&self) -> Result<Vec<ProfilePoint>, GridError> {
        let mut pairs = Vec::new();
        if let Some(flat) = &self.flat_rho {
            pairs.extend(flat.values()?.into_iter().map(|r| (r, 0.0)));
        }
        if let Some(affine) = &self.affine_rho {
            let mut grads = Vec::new();
            for &g in &self.gradients {
                if self.symmetric && g != 0.0 {
                    grads.push(-g);
                }
                grads.push(g);
            }
            grads.sort_by(f64::total_cmp);
            grads.dedup();
            for r in affine.values()? {
                for &g in &grads {
                    pairs.push((r, g));
                }
            }
        }
        if pairs.is_empty() {
            return Err(GridError::Empty);
        }
        Ok(pairs.into_iter().enumerate().map(|(i, (r, g))| ProfilePoint::new(i, r, g)).collect())
    }
}
