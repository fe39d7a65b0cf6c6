//! Batch experiments and analyses for concept-tree search.

pub mod analysis;
pub mod batch;
pub mod config;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("trace {0}: {1}")]
    Trace(String, String),
    #[error("analysis: {0}")]
    Analysis(String),
    #[error("undefined: {0}")]
    Undefined(String),
}
