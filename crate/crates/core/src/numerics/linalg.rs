// Copyright 2026 The nvmetro Authors
// SPDX-License-Identifier: Apache-2.0

//! Hermitian eigendecomposition and the matrix exponential.
//!
//! Hermitian input goes through a cyclic Jacobi eigensolver, which is
//! allocation-light and accurate to a few ulps for the small, frequently
//! block-diagonal matrices produced by the control model: zero off-diagonal
//! pairs are skipped, so a block-diagonal Hamiltonian costs no more than its
//! blocks. General input uses scaling and squaring with a degree-13 Padé
//! approximant.

use super::matrix::{ComplexMatrix, C64, ZERO};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 64;

/// Eigenvalues (ascending) and the unitary whose columns are eigenvectors.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl HermitianEigen {
    /// `V diag(f(λ)) V†`.
    pub fn map(&self, f: impl Fn(f64) -> C64) -> ComplexMatrix {
        let n = self.values.len();
        let fv: Vec<C64> = self.values.iter().map(|&l| f(l)).collect();
        let v = self.vectors.as_slice();
        let mut out = ComplexMatrix::zeros(n, n);
        let o = out.as_mut_slice();
        for r in 0..n {
            for c in 0..n {
                let mut acc = ZERO;
                for k in 0..n {
                    acc += v[r * n + k] * fv[k] * v[c * n + k].conj();
                }
                o[r * n + c] = acc;
            }
        }
        out
    }
}

/// Eigendecomposition of a Hermitian matrix. Only the upper triangle is read.
pub fn eigh(h: &ComplexMatrix) -> Result<HermitianEigen> {
    if !h.is_square() {
        return Err(Error::NotSquare {
            rows: h.rows(),
            cols: h.cols(),
        });
    }
    let n = h.rows();
    let mut a = h.as_slice().to_vec();
    // symmetrize from the upper triangle so tiny asymmetries cannot stall convergence
    for r in 0..n {
        a[r * n + r] = C64::new(a[r * n + r].re, 0.0);
        for c in r + 1..n {
            a[c * n + r] = a[r * n + c].conj();
        }
    }
    let mut v = ComplexMatrix::identity(n).as_slice().to_vec();

    let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(HermitianEigen {
            values: vec![0.0; n],
            vectors: ComplexMatrix::identity(n),
        });
    }
    let tiny = scale * f64::EPSILON * 1e-3;

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|r| (r + 1..n).map(move |c| (r, c)))
            .map(|(r, c)| a[r * n + c].norm_sqr())
            .sum();
        if off.sqrt() <= tiny {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                let b = apq.norm();
                if b <= tiny {
                    a[p * n + q] = ZERO;
                    a[q * n + p] = ZERO;
                    continue;
                }
                let phase = apq / b; // e^{iφ}
                let app = a[p * n + p].re;
                let aqq = a[q * n + q].re;
                let theta = (aqq - app) / (2.0 * b);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let e = phase.conj(); // e^{-iφ}

                // A <- A J with J_pp = c, J_pq = s, J_qp = -s e^{-iφ}, J_qq = c e^{-iφ}
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = akp * c - akq * e * s;
                    a[k * n + q] = akp * s + akq * e * c;
                }
                // A <- J† A
                let ec = e.conj();
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = apk * c - aqk * ec * s;
                    a[q * n + k] = apk * s + aqk * ec * c;
                }
                a[p * n + q] = ZERO;
                a[q * n + p] = ZERO;
                a[p * n + p] = C64::new(a[p * n + p].re, 0.0);
                a[q * n + q] = C64::new(a[q * n + q].re, 0.0);
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = vkp * c - vkq * e * s;
                    v[k * n + q] = vkp * s + vkq * e * c;
                }
            }
        }
    }
    if !converged {
        return Err(Error::EigenNoConvergence(MAX_SWEEPS));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].re.total_cmp(&a[j * n + j].re));
    let values = order.iter().map(|&i| a[i * n + i].re).collect();
    let mut vectors = ComplexMatrix::zeros(n, n);
    for (newc, &oldc) in order.iter().enumerate() {
        for r in 0..n {
            vectors[(r, newc)] = v[r * n + oldc];
        }
    }
    Ok(HermitianEigen { values, vectors })
}

/// `exp(scale * h)`.
///
/// Hermitian `h` with a purely imaginary `scale` takes the eigendecomposition
/// route and returns an exactly unitary result up to rounding; anything else
/// uses Padé scaling and squaring.
pub fn expm(h: &ComplexMatrix, scale: C64) -> Result<ComplexMatrix> {
    if !h.is_square() {
        return Err(Error::NotSquare {
            rows: h.rows(),
            cols: h.cols(),
        });
    }
    let herm_tol = 1e-14 * h.max_abs().max(1.0);
    if scale.re == 0.0 && h.is_hermitian(herm_tol) {
        let eig = eigh(h)?;
        return Ok(eig.map(|l| (scale * l).exp()));
    }
    expm_pade(&h.scale(scale))
}

// Higham (2005) degree-13 coefficients.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Scaling-and-squaring matrix exponential of a general square matrix.
pub fn expm_pade(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let n = a.rows();
    let norm = a.norm_one();
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a.scale_real(0.5f64.powi(s));
    let id = ComplexMatrix::identity(n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let b = |k: usize| C64::new(PADE13[k], 0.0);

    let mut inner_u = a6.scale(b(13));
    inner_u.add_scaled(&a4, b(11));
    inner_u.add_scaled(&a2, b(9));
    let mut u = &a6 * &inner_u;
    u.add_scaled(&a6, b(7));
    u.add_scaled(&a4, b(5));
    u.add_scaled(&a2, b(3));
    u.add_scaled(&id, b(1));
    let u = &a * &u;

    let mut inner_v = a6.scale(b(12));
    inner_v.add_scaled(&a4, b(10));
    inner_v.add_scaled(&a2, b(8));
    let mut v = &a6 * &inner_v;
    v.add_scaled(&a6, b(6));
    v.add_scaled(&a4, b(4));
    v.add_scaled(&a2, b(2));
    v.add_scaled(&id, b(0));

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.solve(&p)?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

/// Fréchet-derivative kernel for `U = exp(-i τ H)` in the eigenbasis of `H`:
/// `Γ_jl = (e^{-iτλ_j} - e^{-iτλ_l}) / (λ_j - λ_l)`, with the confluent limit
/// `-iτ e^{-iτλ_j}`. Written through a sinc so near-degenerate pairs stay exact.
pub fn exp_derivative_kernel(values: &[f64], tau: f64) -> Vec<C64> {
    let n = values.len();
    let mut g = vec![ZERO; n * n];
    for j in 0..n {
        for l in 0..n {
            let mean = 0.5 * (values[j] + values[l]);
            let half = 0.5 * tau * (values[j] - values[l]);
            let sinc = if half.abs() < 1e-8 {
                1.0 - half * half / 6.0
            } else {
                half.sin() / half
            };
            g[j * n + l] = C64::new(0.0, -tau) * C64::new(0.0, -tau * mean).exp() * sinc;
        }
    }
    g
}

/// Number of eigenvalues above `tol` (Schmidt rank of a reduced density matrix).
pub fn numerical_rank(values: &[f64], tol: f64) -> usize {
    values.iter().filter(|&&v| v > tol).count()
}
