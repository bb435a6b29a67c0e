//! Numerical core for the large-N O(N) linear sigma model on the two-dimensional torus.
//!
//! Gap equations, Wick-renormalized Gaussian free fields, the lattice measure
//! with an exact Hybrid Monte Carlo sampler, and the estimators used to compare
//! the interacting theory with its Gaussian large-N limit.

pub mod analysis;
pub mod error;
pub mod gap;
pub mod gff;
pub mod mcmc;
pub mod quad;
pub mod rng;
pub mod spectral;
pub mod stats;
pub mod wick;

pub use error::{Error, Result};
