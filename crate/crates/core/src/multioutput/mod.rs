//! Multi-output GP priors and posteriors over vector-valued `h`.

mod data;
mod fit;
mod model;
mod posterior;

pub use data::{TaggedDataset, TaggedRecord};
pub use fit::{fit_multioutput, mo_log_marginal_likelihood, MoFitResult};
pub use model::{HyperKind, MultiOutputModel};
pub use posterior::{FunctionalView, MoGpPosterior};
