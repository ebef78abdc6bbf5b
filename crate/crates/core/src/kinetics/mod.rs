//! Continuous-time symmetric zero-range process on a 1-D lattice.
//!
//! Site `i` releases a particle at rate `g(k_i)`, to the left or right with
//! probability 1/2 each. All clocks are multiplied by `L²` so that times are
//! macroscopic (diffusive scaling). Event selection goes through a Fenwick
//! tree over the integer site rates.
//!
//! Under [`Boundary::Reservoir`] a particle jumping off either end is
//! removed, and each end site receives particles at rate `L² φ(ρ_end) / 2`,
//! which is what a neighbouring site at stationary density `ρ_end` would
//! send in.

pub mod fenwick;
pub mod streams;

use std::io::{self, Write};

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profile::AffineProfile;
use crate::thermo::{fugacity_from_density, OccupationSampler, ThermoError};

use fenwick::RateTree;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KineticsError {
    #[error("state is absorbed: total jump rate is zero")]
    Absorbed,
    #[error("lattice needs at least 2 sites, got {0}")]
    LatticeTooSmall(usize),
    #[error("invalid density {value} at site {site} after clipping")]
    InvalidDensity { site: usize, value: f64 },
    #[error("duration must be non-negative and finite, got {0}")]
    InvalidDuration(f64),
    #[error(transparent)]
    Thermo(#[from] ThermoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Boundary {
    Periodic,
    Reservoir { rho_left: f64, rho_right: f64 },
}

/// Occupation numbers plus boundary mode and macroscopic clock.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeState {
    occupations: Vec<u32>,
    boundary: Boundary,
    time_macro: f64,
}

impl LatticeState {
    pub fn new(occupations: Vec<u32>, boundary: Boundary) -> Result<Self, KineticsError> {
        if occupations.len() < 2 {
            return Err(KineticsError::LatticeTooSmall(occupations.len()));
        }
        Ok(Self { occupations, boundary, time_macro: 0.0 })
    }

    pub fn occupations(&self) -> &[u32] {
        &self.occupations
    }

    pub fn lattice_size(&self) -> usize {
        self.occupations.len()
    }

    /// Site volume `ε = 1/L`.
    pub fn eps(&self) -> f64 {
        1.0 / self.occupations.len() as f64
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn time_macro(&self) -> f64 {
        self.time_macro
    }

    pub fn total_particles(&self) -> u64 {
        self.occupations.iter().map(|&k| k as u64).sum()
    }

    /// One line per site: `index,k`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "index,k")?;
        for (i, k) in self.occupations.iter().enumerate() {
            writeln!(out, "{i},{k}")?;
        }
        Ok(())
    }
}

/// Jump-rate function `g`. Must satisfy `g(0) = 0`.
#[derive(Clone, Copy)]
pub struct RateModel {
    jump_rate: fn(u32) -> u64,
}

impl std::fmt::Debug for RateModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RateModel").field("g(1)", &(self.jump_rate)(1)).field("g(2)", &(self.jump_rate)(2)).finish()
    }
}

fn quadratic_rate(k: u32) -> u64 {
    (k as u64) * (k as u64)
}

fn zero_rate(_: u32) -> u64 {
    0
}

impl RateModel {
    pub fn new(jump_rate: fn(u32) -> u64) -> Self {
        Self { jump_rate }
    }

    /// `g(k) = k²`.
    pub fn quadratic() -> Self {
        Self::new(quadratic_rate)
    }

    /// `g ≡ 0`; nothing ever moves. For tests.
    pub fn frozen() -> Self {
        Self::new(zero_rate)
    }

    #[inline]
    pub fn rate(&self, k: u32) -> u64 {
        (self.jump_rate)(k)
    }

    /// Diffusive factor `L²` mapping microscopic clocks to macroscopic time.
    pub fn time_scale(lattice_size: usize) -> f64 {
        (lattice_size as f64) * (lattice_size as f64)
    }
}

impl Default for RateModel {
    fn default() -> Self {
        Self::quadratic()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Left,
    Right,
}

/// Per-site occupation samplers for a clipped affine profile; build once,
/// draw many independent initial states.
#[derive(Debug, Clone)]
pub struct SiteSamplers {
    samplers: Vec<OccupationSampler>,
    site_to_sampler: Vec<u32>,
}

impl SiteSamplers {
    pub fn new(profile: &AffineProfile, lattice_size: usize) -> Result<Self, KineticsError> {
        if lattice_size < 2 {
            return Err(KineticsError::LatticeTooSmall(lattice_size));
        }
        let mut samplers: Vec<OccupationSampler> = Vec::new();
        let mut site_to_sampler = Vec::with_capacity(lattice_size);
        for site in 0..lattice_size {
            let rho = profile.density_at(site as f64 / lattice_size as f64);
            if !rho.is_finite() || rho < 0.0 {
                return Err(KineticsError::InvalidDensity { site, value: rho });
            }
            let phi = fugacity_from_density(rho)?;
            // consecutive sites often share a density (flat profiles, clipped tails)
            match samplers.last() {
                Some(last) if last.fugacity() == phi => {}
                _ => samplers.push(OccupationSampler::new(phi)?),
            }
            site_to_sampler.push((samplers.len() - 1) as u32);
        }
        Ok(Self { samplers, site_to_sampler })
    }

    pub fn lattice_size(&self) -> usize {
        self.site_to_sampler.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<u32> {
        self.site_to_sampler.iter().map(|&s| self.samplers[s as usize].sample(rng)).collect()
    }
}

/// Independent draws from the stationary marginal at the local fugacity
/// `φ(ρ(x_i))`, sites at `x_i = i / L`.
pub fn sample_initial_state<R: Rng + ?Sized>(
    profile: &AffineProfile,
    lattice_size: usize,
    boundary: Boundary,
    rng: &mut R,
) -> Result<LatticeState, KineticsError> {
    let samplers = SiteSamplers::new(profile, lattice_size)?;
    LatticeState::new(samplers.sample(rng), boundary)
}

/// A lattice state bound to a rate model, with the incrementally
/// maintained rate tree.
#[derive(Debug, Clone)]
pub struct Dynamics {
    state: LatticeState,
    model: RateModel,
    tree: RateTree,
    // microscopic injection rates at the left and right end, φ/2 each
    injection: [f64; 2],
    time_scale: f64,
}

impl Dynamics {
    pub fn new(state: LatticeState, model: RateModel) -> Result<Self, KineticsError> {
        let rates: Vec<u64> = state.occupations.iter().map(|&k| model.rate(k)).collect();
        let injection = match state.boundary {
            Boundary::Periodic => [0.0, 0.0],
            Boundary::Reservoir { rho_left, rho_right } => {
                [0.5 * fugacity_from_density(rho_left)?, 0.5 * fugacity_from_density(rho_right)?]
            }
        };
        let time_scale = RateModel::time_scale(state.lattice_size());
        Ok(Self { tree: RateTree::new(&rates), state, model, injection, time_scale })
    }

    pub fn state(&self) -> &LatticeState {
        &self.state
    }

    pub fn into_state(self) -> LatticeState {
        self.state
    }

    /// Total event rate in macroscopic units, `L² (Σ_i g(k_i) + injection)`.
    pub fn total_rate(&self) -> f64 {
        self.time_scale * self.micro_rate()
    }

    /// Integer part of the microscopic rate, `Σ_i g(k_i)` as maintained by the tree.
    pub fn site_rate_sum(&self) -> u64 {
        self.tree.total()
    }

    /// `Σ_i g(k_i)` recomputed from scratch.
    pub fn recomputed_site_rate_sum(&self) -> u64 {
        self.state.occupations.iter().map(|&k| self.model.rate(k)).sum()
    }

    #[inline]
    fn micro_rate(&self) -> f64 {
        self.tree.total() as f64 + self.injection[0] + self.injection[1]
    }

    /// One event. Returns the macroscopic waiting time that preceded it.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<f64, KineticsError> {
        let rate = self.total_rate();
        if rate <= 0.0 {
            return Err(KineticsError::Absorbed);
        }
        let wait = rng.sample::<f64, _>(Exp1) / rate;
        self.state.time_macro += wait;
        self.random_event(rng);
        Ok(wait)
    }

    /// Runs until the clock has advanced by exactly `duration`. The event
    /// that would land past the horizon is discarded. An absorbed state
    /// (zero total rate) simply stays put.
    pub fn evolve<R: Rng + ?Sized>(&mut self, duration: f64, rng: &mut R) -> Result<(), KineticsError> {
        if !(duration >= 0.0) || !duration.is_finite() {
            return Err(KineticsError::InvalidDuration(duration));
        }
        let end = self.state.time_macro + duration;
        let mut now = self.state.time_macro;
        loop {
            let rate = self.total_rate();
            if rate <= 0.0 {
                break;
            }
            now += rng.sample::<f64, _>(Exp1) / rate;
            if now > end {
                break;
            }
            self.random_event(rng);
        }
        self.state.time_macro = end;
        Ok(())
    }

    #[inline]
    fn random_event<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let sites = self.tree.total();
        let injection = self.injection[0] + self.injection[1];
        let site = if injection == 0.0 {
            self.tree.find(rng.random_range(0..sites))
        } else {
            let u = rng.random::<f64>() * (sites as f64 + injection);
            if u < sites as f64 {
                self.tree.find((u as u64).min(sites - 1))
            } else {
                let last = self.state.lattice_size() - 1;
                let target = if u - (sites as f64) < self.injection[0] { 0 } else { last };
                self.add_particle(target);
                return;
            }
        };
        let direction = if rng.random::<bool>() { Direction::Right } else { Direction::Left };
        self.jump(site, direction);
    }

    /// Moves one particle from `site` in `direction`. Under a reservoir
    /// boundary a particle leaving the lattice is removed.
    pub fn jump(&mut self, site: usize, direction: Direction) {
        let n = self.state.lattice_size();
        debug_assert!(self.state.occupations[site] > 0);
        let target = match (direction, self.state.boundary) {
            (Direction::Left, Boundary::Periodic) => Some(if site == 0 { n - 1 } else { site - 1 }),
            (Direction::Right, Boundary::Periodic) => Some(if site + 1 == n { 0 } else { site + 1 }),
            (Direction::Left, Boundary::Reservoir { .. }) => site.checked_sub(1),
            (Direction::Right, Boundary::Reservoir { .. }) => (site + 1 < n).then_some(site + 1),
        };
        let k = self.state.occupations[site] - 1;
        self.state.occupations[site] = k;
        self.tree.set(site, self.model.rate(k));
        if let Some(j) = target {
            self.add_particle(j);
        }
    }

    #[inline]
    fn add_particle(&mut self, site: usize) {
        let k = self.state.occupations[site] + 1;
        self.state.occupations[site] = k;
        self.tree.set(site, self.model.rate(k));
    }
}
