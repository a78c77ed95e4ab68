//! Library side of the `vidbus` binary: configuration, exit codes and the
//! subcommand implementations.

pub mod admin;
pub mod config;
pub mod serve;
pub mod simulate;

use std::fmt;

/// Process exit codes. Stable.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    /// Runtime failure not covered below, including server-side refusals
    /// such as a duplicate id.
    Failure = 1,
    /// Bad configuration, flags or input values, including a weak password.
    Usage = 2,
    /// A listener address is already in use.
    PortInUse = 3,
    /// Login failed, or the session lacks the required rights.
    Auth = 4,
    /// The daemon could not be reached or answered garbage.
    Transport = 5,
}

#[derive(Debug)]
pub struct CliError {
    pub exit: Exit,
    pub message: String,
}

impl CliError {
    pub fn new(exit: Exit, message: impl Into<String>) -> Self {
        Self { exit, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<config::ConfigError> for CliError {
    fn from(e: config::ConfigError) -> Self {
        CliError::new(Exit::Usage, e.to_string())
    }
}
