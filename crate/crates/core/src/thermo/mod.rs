//! Hydrodynamic thermodynamics of the zero-range process with `g(k) = k²`.
//!
//! The density-mobility relation is
//!
//! ```text
//! ρ(m) = √(2m) I₁(2√(2m)) / I₀(2√(2m))
//! ```
//!
//! with thermodynamic force `F(ρ) = −log(2 m(ρ))`. The stationary site
//! marginal is `P(k) = φ^k / ((k!)² I₀(2√φ))` at fugacity `φ = 2m`, so `ρ(m)`
//! is exactly its mean and `E[g(k)] = E[k²] = φ`. Expanding the flux gives
//! the limit equation `∂t ρ = Δ m(ρ)`.

pub mod bessel;
pub mod quadrature;

use rand::Rng;
use thiserror::Error;

use crate::basis::BasisSet;
use crate::profile::AffineProfile;

use bessel::bessel_i1_over_i0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ThermoError {
    #[error("density must be positive and finite, got {0}")]
    NonPositiveDensity(f64),
    #[error("mobility must be non-negative and finite, got {0}")]
    InvalidMobility(f64),
    #[error("fugacity must be non-negative and finite, got {0}")]
    InvalidFugacity(f64),
}

/// Residual target of the mobility inversion, `|ρ(m) − ρ|`.
pub const INVERSION_TOLERANCE: f64 = 1e-12;

/// Tail mass left out of the truncated occupation tables.
pub const SAMPLER_TAIL: f64 = 1e-14;

/// `ρ(m)`.
pub fn density_from_m(m: f64) -> Result<f64, ThermoError> {
    if !(m >= 0.0) || !m.is_finite() {
        return Err(ThermoError::InvalidMobility(m));
    }
    Ok(density_unchecked(m))
}

fn density_unchecked(m: f64) -> f64 {
    if m == 0.0 {
        return 0.0;
    }
    let root = (2.0 * m).sqrt();
    root * bessel_i1_over_i0(2.0 * root)
}

/// `dρ/dm = 2 (1 − ρ²/φ)`, from `Var k = φ − ρ²` under the stationary marginal.
fn density_slope(m: f64, rho: f64) -> f64 {
    2.0 * (1.0 - rho * rho / (2.0 * m))
}

/// Inverse of [`density_from_m`]: bracketing bisection, then safeguarded
/// Newton polish until `|ρ(m) − ρ| ≤ INVERSION_TOLERANCE · max(1, ρ)`.
pub fn m_from_density(rho: f64) -> Result<f64, ThermoError> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(ThermoError::NonPositiveDensity(rho));
    }
    let target_tol = INVERSION_TOLERANCE * rho.max(1.0);
    // ρ(m) ≈ 2m for small m and ρ(m) ≈ √(2m) − 1/4 for large m, so `hi`
    // almost always brackets on the first try
    let mut lo = 0.0_f64;
    let mut hi = rho + 0.5 * (rho + 1.0) * (rho + 1.0);
    while density_unchecked(hi) < rho {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-3 * hi {
        let mid = 0.5 * (lo + hi);
        if density_unchecked(mid) < rho {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut m = 0.5 * (lo + hi);
    for _ in 0..100 {
        let value = density_unchecked(m);
        let residual = value - rho;
        if residual.abs() <= target_tol {
            return Ok(m);
        }
        if residual < 0.0 {
            lo = m;
        } else {
            hi = m;
        }
        let newton = m - residual / density_slope(m, value);
        m = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= f64::EPSILON * hi {
            return Ok(m);
        }
    }
    Ok(m)
}

/// `F(ρ) = δS/δρ = −log(2 m(ρ))`.
pub fn thermodynamic_force(rho: f64) -> Result<f64, ThermoError> {
    Ok(-(2.0 * m_from_density(rho)?).ln())
}

/// `D(ρ) = dm/dρ` by a Richardson-extrapolated centered difference.
pub fn diffusivity(rho: f64) -> Result<f64, ThermoError> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(ThermoError::NonPositiveDensity(rho));
    }
    let h = 2e-3 * rho;
    let central = |h: f64| -> Result<f64, ThermoError> {
        Ok((m_from_density(rho + h)? - m_from_density(rho - h)?) / (2.0 * h))
    };
    let coarse = central(h)?;
    let fine = central(0.5 * h)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// `φ(ρ) = 2 m(ρ)`; zero density maps to zero fugacity.
pub fn fugacity_from_density(rho: f64) -> Result<f64, ThermoError> {
    if rho == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * m_from_density(rho)?)
}

/// `m(ρ)` extended by `m(0) = 0`.
pub fn mobility_at(rho: f64) -> Result<f64, ThermoError> {
    if rho == 0.0 {
        Ok(0.0)
    } else {
        m_from_density(rho)
    }
}

/// Thermodynamic closure consumed by the continuum solver.
pub trait Thermodynamics: Sync {
    fn mobility(&self, rho: f64) -> Result<f64, ThermoError>;

    fn force(&self, rho: f64) -> Result<f64, ThermoError>;

    fn diffusivity(&self, rho: f64) -> Result<f64, ThermoError>;
}

/// The `g(k) = k²` zero-range process.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZrpThermo;

impl Thermodynamics for ZrpThermo {
    fn mobility(&self, rho: f64) -> Result<f64, ThermoError> {
        m_from_density(rho)
    }

    fn force(&self, rho: f64) -> Result<f64, ThermoError> {
        thermodynamic_force(rho)
    }

    fn diffusivity(&self, rho: f64) -> Result<f64, ThermoError> {
        diffusivity(rho)
    }
}

/// Inverse-CDF sampler for `P(k) ∝ φ^k / (k!)²`, truncated where the
/// remaining tail mass drops below [`SAMPLER_TAIL`].
#[derive(Debug, Clone)]
pub struct OccupationSampler {
    fugacity: f64,
    cdf: Vec<f64>,
    pmf: Vec<f64>,
}

impl OccupationSampler {
    pub fn new(fugacity: f64) -> Result<Self, ThermoError> {
        if !(fugacity >= 0.0) || !fugacity.is_finite() {
            return Err(ThermoError::InvalidFugacity(fugacity));
        }
        if fugacity == 0.0 {
            return Ok(Self { fugacity, cdf: vec![1.0], pmf: vec![1.0] });
        }
        // weights relative to k = 0, which stay finite for φ up to ~1e5
        let mut weights = vec![1.0_f64];
        let mut sum = 1.0;
        let mut k = 0usize;
        loop {
            k += 1;
            let ratio = fugacity / (k * k) as f64;
            let w = weights[k - 1] * ratio;
            weights.push(w);
            sum += w;
            // past the mode the terms fall off faster than geometrically
            if ratio < 1.0 {
                let next_ratio = fugacity / ((k + 1) * (k + 1)) as f64;
                let tail_bound = w * next_ratio / (1.0 - next_ratio);
                if tail_bound < SAMPLER_TAIL * sum {
                    break;
                }
            }
        }
        let pmf: Vec<f64> = weights.iter().map(|w| w / sum).collect();
        let mut acc = 0.0;
        let cdf = pmf
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(Self { fugacity, cdf, pmf })
    }

    pub fn fugacity(&self) -> f64 {
        self.fugacity
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn mean(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.pmf.iter().enumerate().map(|(k, p)| (k as f64 - mean).powi(2) * p).sum()
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.random();
        let k = self.cdf.partition_point(|&c| c <= u);
        k.min(self.cdf.len() - 1) as u32
    }
}

/// Exact weak-form entry `∫ m(ρ(x)) γ_a'(x) γ_b'(x) dx` for an affine
/// (clipped) profile, with unwrapped hats. Symmetric in `(a, b)` by
/// construction.
pub fn analytic_operator_entry(
    profile: &AffineProfile,
    a: usize,
    b: usize,
    basis: &BasisSet,
) -> Result<f64, ThermoError> {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    if b - a >= 2 {
        return Ok(0.0);
    }
    let (lo_a, hi_a) = basis.support(a);
    let (lo_b, hi_b) = basis.support(b);
    let lo = lo_a.max(lo_b);
    let hi = hi_a.min(hi_b);
    let delta = basis.spacing();
    // γ_a'γ_b' is constant on each cell between consecutive nodes
    let mut total = 0.0;
    let mut failure = None;
    let mut x0 = lo;
    while x0 < hi - 0.5 * delta {
        let x1 = x0 + delta;
        let probe = 0.5 * (x0 + x1);
        let slope = basis.derivative(a, probe) * basis.derivative(b, probe);
        let scale = mobility_at(profile.density_at(probe)).unwrap_or(1.0).max(1e-300);
        let mut integrand = |x: f64| match mobility_at(profile.density_at(x)) {
            Ok(m) => m,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        };
        total += slope * quadrature::integrate(&mut integrand, x0, x1, 1e-12 * scale * delta);
        x0 = x1;
    }
    match failure {
        Some(e) => Err(e),
        None => Ok(total),
    }
}

/// Draws one occupation from `P(k) ∝ φ^k / (k!)²`.
pub fn sample_occupation<R: Rng + ?Sized>(fugacity: f64, rng: &mut R) -> Result<u32, ThermoError> {
    Ok(OccupationSampler::new(fugacity)?.sample(rng))
}
