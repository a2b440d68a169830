//! Single-output Gaussian process prior and posterior.

mod dataset;
mod domain;
pub mod fit;
mod kernel;
mod mean;
mod posterior;

pub use dataset::Dataset;
pub use domain::SearchDomain;
pub use fit::{
    fit_hyperparameters, fit_with_options, log_marginal_likelihood, FitOptions, FitResult,
    MeanOption, NoiseOption,
};
pub use kernel::{Kernel, KernelFamily};
pub use mean::MeanFunction;
pub use posterior::GpPosterior;
