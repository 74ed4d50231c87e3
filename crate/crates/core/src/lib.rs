//! Pseudo-spectral laboratory for the regularized Dean-Kawasaki equation on
//! the unit torus: singular interaction kernels, correlated conservative
//! noise, particle systems and the diagnostics that go with them.

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod initial;
pub mod io;
pub mod kernels;
pub mod noise;
pub mod particles;
pub mod regularization;
pub mod rng;
pub mod solver;

pub use error::{DkError, Result};
