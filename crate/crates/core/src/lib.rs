//! Exact and random-weight particle filters for partially observed diffusions.
//!
//! The crate simulates unbiased, non-negative estimates of diffusion transition
//! densities (and of related path functionals) using layered Brownian bridges, and
//! plugs them into sequential Monte Carlo filters.

pub mod bridge;
pub mod error;
pub mod estimators;
pub mod exact;
pub mod experiments;
pub mod filter;
pub mod models;
pub mod quadrature;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
