// Copyright 2026 The nvmetro Authors
// SPDX-License-Identifier: Apache-2.0

use std::fmt;
use std::process::ExitCode;

use nvmetro_core::Error as CoreError;

/// Failure of one command, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable, malformed or out-of-range configuration. Exit 2.
    Config(String),
    /// A computation failed or missed its configured goal. Exit 3.
    Numerical(String),
    /// A self-test or configured check failed. Exit 4.
    Check(String),
    /// Output could not be written. Exit 1.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.code())
    }

    pub fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Check(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Check(m) => write!(f, "check failed: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidParameter(_)
            | CoreError::UnknownChannel(_)
            | CoreError::DimensionMismatch(_)
            | CoreError::NotSquare { .. }
            | CoreError::Parse { .. } => CliError::Config(e.to_string()),
            CoreError::Io(_) => CliError::Io(e.to_string()),
            CoreError::Normalization { .. }
            | CoreError::FitFailed(_)
            | CoreError::ZeroSlope
            | CoreError::EigenNoConvergence(_)
            | CoreError::Singular => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
