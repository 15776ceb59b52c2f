//! Regress-later Monte Carlo solvers for finite-horizon stochastic control.
//!
//! Value functions are represented as linear combinations of basis functions fitted
//! by least squares against a training measure. Conditional expectations of basis
//! functions under one transition are evaluated analytically or by quadrature, so
//! the Bellman optimisation at each training point is deterministic.

pub mod basis;
pub mod cli;
pub mod error;
pub mod evaluate;
pub mod measures;
pub mod model;
pub mod numerics;
pub mod optimizer;
pub mod problems;
pub mod projection;
pub mod rng;
pub mod solver;

pub use error::{Result, RlmcError};
