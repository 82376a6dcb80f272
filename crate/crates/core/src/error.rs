// Copyright 2026 The nvmetro Authors
// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

/// Errors raised by the simulation toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown control channel `{0}`")]
    UnknownChannel(String),

    #[error("probabilities sum to {sum} at theta = {theta}, expected 1")]
    Normalization { sum: f64, theta: f64 },

    #[error("sinusoid fit failed: {0}")]
    FitFailed(String),

    #[error("fringe model has zero slope (visibility or spin count is zero)")]
    ZeroSlope,

    #[error("eigensolver did not converge after {0} sweeps")]
    EigenNoConvergence(usize),

    #[error("singular matrix in linear solve")]
    Singular,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
