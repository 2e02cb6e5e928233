//! Exit-code classification. Everything the user can fix before a run
//! starts (flags, config files, inputs) is a usage error; anything that
//! interrupts a started run and may leave partial artifacts is a runtime
//! abort.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad invocation, configuration, or input file; nothing ran. Exit 2.
    #[error("{0}")]
    Usage(String),

    /// The command started and aborted; partial artifacts may exist. Exit 3.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

pub fn usage(msg: impl std::fmt::Display) -> CliError {
    CliError::Usage(msg.to_string())
}

pub fn runtime(msg: impl std::fmt::Display) -> CliError {
    CliError::Runtime(msg.to_string())
}
