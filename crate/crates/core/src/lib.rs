// Copyright 2026 The nvmetro Authors
// SPDX-License-Identifier: Apache-2.0

//! Classical simulation toolkit for an NV-center entangled interferometer.
//!
//! The crate covers the computational side of a sub-SQL phase measurement
//! with the NV electron spin, its ¹⁴N nucleus and one ¹³C nucleus:
//!
//! - [`spin`]: full and reduced spin Hamiltonians, interaction picture and
//!   the time-dependent microwave/RF control operators.
//! - [`pulse`] and [`grape`]: piecewise-constant pulses, propagation,
//!   noise-averaged gate fidelity and gradient-ascent pulse engineering.
//! - [`interferometer`]: the one-, two- and three-spin interference circuits,
//!   fringes and visibility fits.
//! - [`metrology`]: classical and quantum Fisher information, reference
//!   collective-spin states, SQL/HL bounds and the visibility scaling law.
//! - [`stats`]: Monte-Carlo measurement campaigns and phase-variance curves.
//! - [`budget`]: error-budget products and the scalar fidelity formulas.

pub mod budget;
pub mod error;
pub mod grape;
pub mod interferometer;
pub mod metrology;
pub mod numerics;
pub mod pulse;
pub mod spin;
pub mod stats;

pub use error::{Error, Result};
