//! Nested Monte Carlo toolkit for risk quantification under input uncertainty.
//!
//! The problem: a stochastic simulation's inputs are themselves uncertain
//! (estimated from finite data), so the mean response H(θ) is a random
//! variable under the belief distribution of θ. This crate estimates
//! VaR/CVaR of H(θ) with a two-layer (nested) Monte Carlo scheme, builds
//! confidence intervals for those risk values under two regularity regimes,
//! and solves the inner/outer sample-size allocation problem from a pilot
//! experiment.
//!
//! Organization:
//! - [`rng`]: reproducible substream RNG (bit-identical results at any
//!   degree of parallelism)
//! - [`engine`]: response-model abstraction and the nested sampling engine
//! - [`risk`]: VaR/CVaR estimators plus the statistical primitives they
//!   need (empirical quantiles, Student-t quantiles, Gaussian KDE)
//! - [`ci`]: confidence intervals (weak/strong procedures), variance-term
//!   estimation, bias diagnostics, coverage experiments
//! - [`budget`]: pilot experiments, density projection, τ² regression and
//!   the CI-width budget-allocation solver
//! - [`models`]: built-in benchmark models (normal+normal, Bayesian M/M/1)
//!
//! The `parallel` feature (on by default) runs outer scenarios and
//! experiment replications on a rayon pool; results are bit-identical to
//! the sequential fallback.

pub mod budget;
pub mod ci;
pub mod engine;
pub mod models;
pub mod risk;
pub mod rng;
pub mod special;

pub use engine::{
    simulate_nested, simulate_nested_serial, total_cost, NestedSampleSet, ResponseModel,
    SimError, SimulationCost,
};
pub use rng::RngStream;
