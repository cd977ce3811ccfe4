//! Human-facing surface of the storage QoS simulator: configuration files,
//! the `sdqos` command line, CSV/JSON result emission, and run manifests.

pub mod app;
pub mod config;
pub mod manifest;
pub mod report;

use std::fmt;

/// CLI failure, carrying its exit code class.
#[derive(Debug)]
pub enum CliError {
    /// Bad invocation (exit 1).
    Usage(String),
    /// Unreadable or invalid configuration, or output I/O trouble (exit 2).
    Config(String),
    /// Runtime invariant violation inside the simulator (exit 3).
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Runtime(msg) => write!(f, "runtime error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<sdqos_core::SimError> for CliError {
    fn from(e: sdqos_core::SimError) -> Self {
        match e {
            sdqos_core::SimError::Config(inner) => CliError::Config(inner.0),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<sdqos_core::ConfigError> for CliError {
    fn from(e: sdqos_core::ConfigError) -> Self {
        CliError::Config(e.0)
    }
}
