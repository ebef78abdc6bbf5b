//! Piecewise-linear hat functions on the unit interval.

use thiserror::Error;

use crate::kinetics::LatticeState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BasisError {
    #[error("basis needs at least one hat function")]
    Empty,
    #[error("hat index {index} out of range for {n_basis} basis functions")]
    IndexOutOfRange { index: usize, n_basis: usize },
    #[error("basis evaluation cache built for L = {cached:?}, state has L = {state}")]
    LatticeMismatch { cached: Option<usize>, state: usize },
}

/// `n_basis` equally spaced hats `γ_a` with nodes `x_a = a Δ`, `Δ = 1/n_basis`.
///
/// Hats are periodic-wrapped on the unit circle when evaluated on a lattice;
/// [`BasisSet::eval`] and [`BasisSet::derivative`] use the unwrapped real line.
#[derive(Debug, Clone)]
pub struct BasisSet {
    n_basis: usize,
    spacing: f64,
    lattice: Option<LatticeCache>,
}

#[derive(Debug, Clone)]
struct LatticeCache {
    size: usize,
    // per hat: sites in its support with γ_a(x_i)
    support: Vec<Vec<(u32, f64)>>,
}

impl BasisSet {
    pub fn new(n_basis: usize) -> Result<Self, BasisError> {
        if n_basis == 0 {
            return Err(BasisError::Empty);
        }
        Ok(Self { n_basis, spacing: 1.0 / n_basis as f64, lattice: None })
    }

    /// Basis plus the per-site evaluation cache for a lattice of `size`
    /// sites at `x_i = i / size`.
    pub fn with_lattice(n_basis: usize, size: usize) -> Result<Self, BasisError> {
        let mut basis = Self::new(n_basis)?;
        let support = (0..n_basis).map(|a| basis.lattice_support(a, size)).collect();
        basis.lattice = Some(LatticeCache { size, support });
        Ok(basis)
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn node(&self, a: usize) -> f64 {
        a as f64 * self.spacing
    }

    /// Node nearest the domain midpoint.
    pub fn center_node(&self) -> usize {
        self.n_basis / 2
    }

    pub fn eval(&self, a: usize, x: f64) -> f64 {
        hat((x - self.node(a)).abs() / self.spacing)
    }

    pub fn eval_periodic(&self, a: usize, x: f64) -> f64 {
        let mut d = (x - self.node(a)).rem_euclid(1.0);
        if d > 0.5 {
            d = 1.0 - d;
        }
        hat(d / self.spacing)
    }

    /// `γ_a'(x)`; zero at the kinks.
    pub fn derivative(&self, a: usize, x: f64) -> f64 {
        let d = x - self.node(a);
        if d.abs() >= self.spacing || d == 0.0 {
            0.0
        } else if d < 0.0 {
            1.0 / self.spacing
        } else {
            -1.0 / self.spacing
        }
    }

    /// Support interval `[x_a − Δ, x_a + Δ]` on the real line.
    pub fn support(&self, a: usize) -> (f64, f64) {
        let x = self.node(a);
        (x - self.spacing, x + self.spacing)
    }

    pub fn lattice_size(&self) -> Option<usize> {
        self.lattice.as_ref().map(|c| c.size)
    }

    /// Cached `(site, γ_a(x_i))` pairs with non-zero weight.
    pub fn lattice_weights(&self, a: usize) -> Option<&[(u32, f64)]> {
        self.lattice.as_ref().and_then(|c| c.support.get(a)).map(Vec::as_slice)
    }

    /// `⟨ρ_ε, γ_a⟩ = ε Σ_i k_i γ_a(x_i)`.
    pub fn project(&self, state: &LatticeState, a: usize) -> Result<f64, BasisError> {
        self.project_occupations(state.occupations(), a)
    }

    pub fn project_occupations(&self, occupations: &[u32], a: usize) -> Result<f64, BasisError> {
        let cache = match &self.lattice {
            Some(c) if c.size == occupations.len() => c,
            other => {
                return Err(BasisError::LatticeMismatch {
                    cached: other.as_ref().map(|c| c.size),
                    state: occupations.len(),
                })
            }
        };
        let support = cache
            .support
            .get(a)
            .ok_or(BasisError::IndexOutOfRange { index: a, n_basis: self.n_basis })?;
        let sum: f64 = support.iter().map(|&(i, w)| occupations[i as usize] as f64 * w).sum();
        Ok(sum / cache.size as f64)
    }

    fn lattice_support(&self, a: usize, size: usize) -> Vec<(u32, f64)> {
        (0..size)
            .filter_map(|i| {
                let w = self.eval_periodic(a, i as f64 / size as f64);
                (w > 0.0).then_some((i as u32, w))
            })
            .collect()
    }
}

// Unit hat of the scaled distance; rounding residue at neighbouring nodes
// is snapped to zero so γ_a(x_b) = δ_ab holds exactly.
fn hat(scaled: f64) -> f64 {
    let w = 1.0 - scaled;
    if w <= 1e-12 {
        0.0
    } else if w >= 1.0 - 1e-12 {
        1.0
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronecker_at_nodes() {
        let basis = BasisSet::new(10).unwrap();
        for a in 0..10 {
            for b in 0..10 {
                let v = basis.eval(a, basis.node(b));
                assert_eq!(v, if a == b { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn partition_of_unity_in_interior() {
        let basis = BasisSet::new(8).unwrap();
        for i in 0..=100 {
            let x = 0.125 + 0.75 * i as f64 / 100.0;
            let s: f64 = (0..8).map(|a| basis.eval(a, x)).sum();
            assert!((s - 1.0).abs() < 1e-14, "x = {x}: {s}");
        }
    }

    #[test]
    fn periodic_weights_sum_to_cell_count() {
        let basis = BasisSet::with_lattice(20, 1000).unwrap();
        // 50 sites per cell: Σ_i γ(x_i) = 50 for every hat, including the wrapped one
        for a in [0, 10, 19] {
            let s: f64 = basis.lattice_weights(a).unwrap().iter().map(|p| p.1).sum();
            assert!((s - 50.0).abs() < 1e-9, "hat {a}: {s}");
        }
    }

    #[test]
    fn projection_examples() {
        let basis = BasisSet::with_lattice(20, 1000).unwrap();
        let zeros = vec![0u32; 1000];
        assert_eq!(basis.project_occupations(&zeros, 10).unwrap(), 0.0);

        // flat k = 3 integrates to 3 Δ
        let flat = vec![3u32; 1000];
        let p = basis.project_occupations(&flat, 10).unwrap();
        assert!((p - 3.0 / 20.0).abs() < 1e-12);

        // one particle on the node site contributes ε γ_a(x_a) = ε
        let mut single = vec![0u32; 1000];
        single[500] = 1;
        assert_eq!(basis.project_occupations(&single, 10).unwrap(), 1.0 / 1000.0);
    }

    #[test]
    fn mismatched_lattice_is_rejected() {
        let basis = BasisSet::with_lattice(20, 1000).unwrap();
        let err = basis.project_occupations(&[0u32; 999], 3).unwrap_err();
        assert_eq!(err, BasisError::LatticeMismatch { cached: Some(1000), state: 999 });
        let plain = BasisSet::new(20).unwrap();
        assert!(plain.project_occupations(&[0u32; 10], 0).is_err());
    }
}
