use serde::{Deserialize, Serialize};

/// Affine density profile `ρ(x) = ρ_c + s (x − x_c)`, clipped below at `floor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineProfile {
    /// Density at the center.
    pub rho: f64,
    /// Slope `∇ρ`.
    pub grad: f64,
    /// Center `x_c` on the unit interval.
    pub center: f64,
    /// Clipping floor; densities below it are raised to it.
    pub floor: f64,
}

impl AffineProfile {
    pub fn new(rho: f64, grad: f64, center: f64, floor: f64) -> Self {
        Self { rho, grad, center, floor }
    }

    /// Flat profile with no clipping.
    pub fn flat(rho: f64) -> Self {
        Self { rho, grad: 0.0, center: 0.5, floor: 0.0 }
    }

    pub fn density_at(&self, x: f64) -> f64 {
        let v = self.rho + self.grad * (x - self.center);
        // f64::max would swallow a NaN
        if v.is_nan() { v } else { v.max(self.floor) }
    }

    pub fn is_flat(&self) -> bool {
        self.grad == 0.0
    }
}
