//! File formats, the parallel curation pipeline and the command-line front
//! end for `phenotrace-core`.

use std::fmt::Display;

pub mod cli;
pub mod external;
pub mod io;
pub mod manifest;
pub mod pipeline;

pub use cli::{run, run_from_args, Cli};

/// Bundled default inputs.
pub mod data {
    pub const LEXICON: &str = include_str!("../data/lexicon.csv");
    pub const RULES: &str = include_str!("../data/rules.toml");
    pub const ENRICHMENT_COUNTS: &str = include_str!("../data/enrichment_counts.csv");
    pub const TIMELINE_PERCENTAGES: &str = include_str!("../data/timeline_percentages.csv");
    pub const PAIRWISE_COUNTS: &str = include_str!("../data/pairwise_counts.csv");
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad input: unreadable file, schema violation, inconsistent options.
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

pub(crate) fn invalid(e: impl Display) -> CliError {
    CliError::Validation(e.to_string())
}

pub(crate) fn internal(e: impl Display) -> CliError {
    CliError::Internal(e.to_string())
}
