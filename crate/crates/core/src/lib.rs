//! Statistical properties of piecewise expanding maps computed through
//! their transfer operators: invariant densities, decay of correlations,
//! Green–Kubo variance, the twisted eigenvalue curve `Λ(θ) = log λ(θ)`, the
//! large-deviation rate function obtained from it by Legendre transform,
//! and Monte Carlo checks of the resulting large-deviation and central
//! limit predictions.

pub mod cli_io;
pub mod error;
pub mod grid;
pub mod ldp_core;
pub mod map_model;
pub mod monte_carlo;
pub mod quasi_holder;
pub mod scalar;
pub mod spectral;
pub mod ulam_transfer;

pub use error::{Error, Result};
