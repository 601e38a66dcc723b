//! Micro/macro acceleration for weak Monte Carlo simulation of SDEs.
//!
//! A macro step runs a short burst of Euler–Maruyama micro steps on a particle
//! ensemble, restricts the ensemble to a few moments, extrapolates those
//! moments over a larger step and matches the ensemble onto the extrapolated
//! moments with a minimal perturbation.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod experiments;
pub mod extrapolation;
pub mod matching;
pub mod orchestrator;
pub mod reduce;
pub mod restriction;
pub mod rng;
pub mod sde;
