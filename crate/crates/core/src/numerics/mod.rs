// Copyright 2026 The nvmetro Authors
// SPDX-License-Identifier: Apache-2.0

//! Dense complex linear algebra, quadrature and deterministic randomness.

mod linalg;
mod matrix;
mod rng;

pub use linalg::{eigh, exp_derivative_kernel, expm, expm_pade, numerical_rank, HermitianEigen};
pub use matrix::{kron, kron_all, ComplexMatrix, StateVector, C64, I, ONE, ZERO};
pub use rng::{gaussian_sample, Rng, ALGORITHM as RNG_ALGORITHM};

use crate::error::Result;

/// Gauss–Hermite rule for the standard normal density (probabilists'
/// weighting), by Golub–Welsch: nodes are eigenvalues of the Jacobi matrix
/// with off-diagonal `sqrt(k)`, weights the squared first eigenvector
/// components. Weights sum to one.
pub fn gauss_hermite(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut j = ComplexMatrix::zeros(n, n);
    for k in 1..n {
        let b = C64::new((k as f64).sqrt(), 0.0);
        j[(k - 1, k)] = b;
        j[(k, k - 1)] = b;
    }
    let eig = eigh(&j)?;
    let weights: Vec<f64> = (0..n).map(|c| eig.vectors[(0, c)].norm_sqr()).collect();
    let total: f64 = weights.iter().sum();
    let mut nodes = eig.values;
    // symmetric rule: clean up rounding so the middle node is exactly zero
    for x in nodes.iter_mut() {
        if x.abs() < 1e-13 {
            *x = 0.0;
        }
    }
    Ok((nodes, weights.into_iter().map(|w| w / total).collect()))
}
