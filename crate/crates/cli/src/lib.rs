//! Command-line front end: CSV ingestion, coreset artifacts, verification
//! reports and lambda sweeps.

// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifact;
pub mod config;
pub mod error;
pub mod input;
pub mod run;

pub use artifact::{CoresetArtifact, Pipeline};
pub use config::{Command, RunConfig};
pub use error::CliError;
pub use input::{load_moments, load_regression, read_table, LabelColumn, Table};
pub use run::{main_with_args, run};
