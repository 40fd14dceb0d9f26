use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] hhefl_core::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("constraint violated: 127 * {total} = {} >= 32768 (aggregation would wrap mod 65537)", 127 * .total)]
    Constraint { total: u64 },
    #[error("malformed data: {0}")]
    Format(String),
    #[error("training diverged in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("peer timed out")]
    Timeout,
    #[error("peer disconnected")]
    Disconnected,
    #[error("protocol: {0}")]
    Protocol(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}
