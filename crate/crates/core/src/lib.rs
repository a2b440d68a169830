//! Grey-box Bayesian optimization.
//!
//! Exact Gaussian process inference (single- and multi-output), expected
//! improvement and knowledge-gradient acquisitions for black-box, composite,
//! multi-fidelity and constituent-evaluation settings, the optimizers that
//! maximize them, and synthetic benchmark problems.
//!
//! The model code is generic over [`Real`] (`f32` or `f64`); acquisition
//! functions and optimizers use `f64`, with aliases below.

pub mod acquisition;
pub mod error;
pub mod gp;
pub mod linalg;
pub mod multioutput;
pub mod normal;
pub mod optimize;
pub mod problems;
pub mod qmc;
pub mod scalar;
pub mod trace;

pub use error::{Error, Result};
pub use scalar::Real;
pub use trace::{Trace, TraceRow};

pub type Gp = gp::GpPosterior<f64>;
pub type Domain = gp::SearchDomain<f64>;
pub type MoGp = multioutput::MoGpPosterior<f64>;
