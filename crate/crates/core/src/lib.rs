//! Dissipative operators of nonlinear diffusion measured from zero-range
//! process fluctuations, fitted, and used to drive a finite-element solver.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod basis;
pub mod config;
pub mod estimator;
pub mod grid;
pub mod kinetics;
pub mod model;
pub mod pipeline;
pub mod profile;
pub mod solver;
pub mod table;
pub mod thermo;
