//! Milstein discretization of ergodic SDEs and Monte Carlo verification of
//! the central limit theorem and Cramér-type moderate deviations for the
//! empirical invariant measure.

pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod interp;
pub mod model;
pub mod montecarlo;
pub mod noise;
pub mod quadrature;
pub mod scheme;
pub mod stats;

pub use error::{Error, Result};
