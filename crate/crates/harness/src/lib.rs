//! Seeded experiment runner for grey-box Bayesian optimization benchmarks:
//! configuration, BO loops, trace persistence and regret summaries.

pub mod config;
pub mod error;
pub mod io;
pub mod run;
pub mod summary;

pub use config::{BudgetKind, Method, RunConfig};
pub use error::{HarnessError, Result};
pub use run::{run, run_to_dir, RunOutput};
pub use summary::{summarize, Summary};
