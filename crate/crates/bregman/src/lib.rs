//! Sobolev–Bregman energies of the fractional Laplacian on balls: Poisson
//! extensions, trace forms, exit sampling and discrete minimization.

pub mod divergence;
pub mod error;
pub mod forms;
pub mod functions;
pub mod kernels;
pub mod quadrature;
pub mod report;
pub mod stochastic;
pub mod variational;

pub use error::{Error, Result};
