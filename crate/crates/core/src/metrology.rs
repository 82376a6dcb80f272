// Copyright 2026 The nvmetro Authors
// SPDX-License-Identifier: Apache-2.0

//! Fisher information, quantum Fisher information of collective spin states
//! and the visibility-based sensitivity figures.
//!
//! Collective states live in the full `2^N` basis. Qubit 0 is the most
//! significant bit, `|0⟩` is spin up along `z`, and `J_n = Σ_q n·σ_q / 2`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{eigh, ComplexMatrix, C64, ZERO};

/// Largest qubit count accepted for full-basis states.
pub const MAX_QUBITS: usize = 16;

/// Outcome distribution `P(x|θ)` with its derivative policy.
pub struct ParamDistribution {
    probs: Box<dyn Fn(f64) -> Vec<f64> + Send + Sync>,
    derivative: Derivative,
}

enum Derivative {
    Analytic(Box<dyn Fn(f64) -> Vec<f64> + Send + Sync>),
    Central(f64),
}

impl ParamDistribution {
    pub const DEFAULT_STEP: f64 = 1e-5;

    /// Distribution differentiated by central differences with the default step.
    pub fn new(probs: impl Fn(f64) -> Vec<f64> + Send + Sync + 'static) -> Self {
        Self {
            probs: Box::new(probs),
            derivative: Derivative::Central(Self::DEFAULT_STEP),
        }
    }

    pub fn with_step(mut self, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "difference step must be positive, got {h}"
            )));
        }
        self.derivative = Derivative::Central(h);
        Ok(self)
    }

    pub fn with_analytic(
        mut self,
        dprobs: impl Fn(f64) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.derivative = Derivative::Analytic(Box::new(dprobs));
        self
    }

    /// Outcome probabilities at `theta`, checked for normalization.
    pub fn probabilities(&self, theta: f64) -> Result<Vec<f64>> {
        let p = (self.probs)(theta);
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-10 || p.iter().any(|&x| !(x >= -1e-15)) {
            return Err(Error::Normalization { sum, theta });
        }
        Ok(p)
    }

    pub fn derivative(&self, theta: f64) -> Result<Vec<f64>> {
        match &self.derivative {
            Derivative::Analytic(d) => Ok(d(theta)),
            Derivative::Central(h) => {
                let plus = self.probabilities(theta + h)?;
                let minus = self.probabilities(theta - h)?;
                Ok(plus
                    .iter()
                    .zip(&minus)
                    .map(|(a, b)| (a - b) / (2.0 * h))
                    .collect())
            }
        }
    }
}

/// `Σ_x P(x|θ) (∂_θ ln P(x|θ))² = Σ_x (∂_θ P)² / P`.
///
/// Outcomes with `P = 0` are skipped. If such an outcome has a non-zero
/// derivative the information diverges there; it is still skipped and a
/// warning is logged.
pub fn fisher_information(p: &ParamDistribution, theta: f64) -> Result<f64> {
    let probs = p.probabilities(theta)?;
    let d = p.derivative(theta)?;
    if d.len() != probs.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} probabilities, {} derivatives",
            probs.len(),
            d.len()
        )));
    }
    let mut f = 0.0;
    for (x, (&px, &dx)) in probs.iter().zip(&d).enumerate() {
        if px <= 0.0 {
            if dx.abs() > 1e-8 {
                log::warn!("outcome {x} has P = 0 but dP/dθ = {dx} at θ = {theta}; skipped");
            }
            continue;
        }
        f += dx * dx / px;
    }
    Ok(f)
}

/// Cramér–Rao variance bound `1/(ν F)`.
pub fn cramer_rao_bound(fisher: f64, nu: u64) -> Result<f64> {
    if !(fisher > 0.0) || nu == 0 {
        return Err(Error::InvalidParameter(format!(
            "Cramér-Rao bound needs F > 0 and ν ≥ 1, got F = {fisher}, ν = {nu}"
        )));
    }
    Ok(1.0 / (nu as f64 * fisher))
}

/// Pure state of `n` qubits in the full basis.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectiveSpinState {
    n: usize,
    amplitudes: Vec<C64>,
}

impl CollectiveSpinState {
    pub fn new(n: usize, amplitudes: Vec<C64>) -> Result<Self> {
        let s = Self::unchecked(n, amplitudes)?;
        let norm: f64 = s.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidParameter(format!(
                "state norm² is {norm}, expected 1"
            )));
        }
        Ok(s)
    }

    /// Shape-checked but not normalized; used for state derivatives.
    pub fn unchecked(n: usize, amplitudes: Vec<C64>) -> Result<Self> {
        if n == 0 || n > MAX_QUBITS {
            return Err(Error::InvalidParameter(format!(
                "qubit count must be in 1..={MAX_QUBITS}, got {n}"
            )));
        }
        if amplitudes.len() != 1 << n {
            return Err(Error::DimensionMismatch(format!(
                "{} amplitudes for {n} qubits",
                amplitudes.len()
            )));
        }
        Ok(Self { n, amplitudes })
    }

    /// Tensor product of single-qubit states `(a, b)` meaning `a|0⟩ + b|1⟩`.
    pub fn product(factors: &[(C64, C64)]) -> Result<Self> {
        let n = factors.len();
        let mut amps = vec![C64::new(1.0, 0.0)];
        for &(a, b) in factors {
            let norm = (a.norm_sqr() + b.norm_sqr()).sqrt();
            let (a, b) = (a / norm, b / norm);
            amps = amps.iter().flat_map(|&x| [x * a, x * b]).collect();
        }
        Self::new(n, amps)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn inner(&self, other: &Self) -> C64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn scaled(&self, s: C64) -> Self {
        Self {
            n: self.n,
            amplitudes: self.amplitudes.iter().map(|a| a * s).collect(),
        }
    }

    /// `J_n |ψ⟩` for a (not necessarily unit) direction `n`.
    pub fn apply_j(&self, dir: [f64; 3]) -> Self {
        let n = self.n;
        let mut out = vec![ZERO; self.amplitudes.len()];
        for (i, &a) in self.amplitudes.iter().enumerate() {
            if a == ZERO {
                continue;
            }
            for q in 0..n {
                let bit = 1usize << (n - 1 - q);
                let up = i & bit == 0;
                let j = i ^ bit;
                // σx|0⟩=|1⟩, σy|0⟩=i|1⟩, σy|1⟩=-i|0⟩, σz|0⟩=|0⟩, σz|1⟩=-|1⟩
                let sy = if up { C64::new(0.0, 1.0) } else { C64::new(0.0, -1.0) };
                out[j] += a * (C64::new(dir[0], 0.0) + sy * dir[1]) * 0.5;
                out[i] += a * (if up { dir[2] } else { -dir[2] }) * 0.5;
            }
        }
        Self {
            n,
            amplitudes: out,
        }
    }

    /// `⟨J_n⟩` (real for Hermitian `J_n`).
    pub fn expect_j(&self, dir: [f64; 3]) -> f64 {
        self.inner(&self.apply_j(dir)).re
    }

    /// `exp(-iθ J_n)|ψ⟩` through the eigendecomposition of the single-qubit
    /// rotation applied to every qubit.
    pub fn rotated(&self, dir: [f64; 3], theta: f64) -> Self {
        let norm = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
        let (nx, ny, nz) = (dir[0] / norm, dir[1] / norm, dir[2] / norm);
        let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        // exp(-iθ n·σ/2) = cos(θ/2) I - i sin(θ/2) n·σ
        let u00 = C64::new(c, -s * nz);
        let u11 = C64::new(c, s * nz);
        let u01 = C64::new(-s * ny, -s * nx);
        let u10 = C64::new(s * ny, -s * nx);
        let n = self.n;
        let mut amps = self.amplitudes.clone();
        for q in 0..n {
            let bit = 1usize << (n - 1 - q);
            for i in 0..amps.len() {
                if i & bit == 0 {
                    let (a0, a1) = (amps[i], amps[i | bit]);
                    amps[i] = u00 * a0 + u01 * a1;
                    amps[i | bit] = u10 * a0 + u11 * a1;
                }
            }
        }
        Self {
            n,
            amplitudes: amps,
        }
    }

    /// `exp(-iμ J_z² / 2)|ψ⟩`.
    pub fn twisted(&self, mu: f64) -> Self {
        let n = self.n;
        let amps = self
            .amplitudes
            .iter()
            .enumerate()
            .map(|(i, &a)| {
                let ones = i.count_ones() as f64;
                let jz = n as f64 / 2.0 - ones;
                a * C64::new(0.0, -mu * jz * jz / 2.0).exp()
            })
            .collect();
        Self {
            n,
            amplitudes: amps,
        }
    }
}

/// `4 (⟨∂ψ|∂ψ⟩ - |⟨∂ψ|ψ⟩|²)`.
pub fn qfi_pure(state: &CollectiveSpinState, dstate: &CollectiveSpinState) -> Result<f64> {
    if state.amplitudes.len() != dstate.amplitudes.len() {
        return Err(Error::DimensionMismatch(
            "state and derivative differ in dimension".into(),
        ));
    }
    let dd = dstate.inner(dstate).re;
    let dp = dstate.inner(state).norm_sqr();
    Ok((4.0 * (dd - dp)).max(0.0))
}

fn unit(dir: [f64; 3]) -> Result<[f64; 3]> {
    let norm = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "direction {dir:?} has no length"
        )));
    }
    Ok([dir[0] / norm, dir[1] / norm, dir[2] / norm])
}

/// `4 Var(J_n)` for a unit direction `n`.
pub fn qfi_generator(state: &CollectiveSpinState, dir: [f64; 3]) -> Result<f64> {
    let n = unit(dir)?;
    let v = state.apply_j(n);
    let second = v.inner(&v).re;
    let first = state.inner(&v).re;
    Ok((4.0 * (second - first * first)).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferenceState {
    /// Coherent spin state with polar angle `alpha` and azimuth `phi`.
    Css { alpha: f64, phi: f64 },
    Ghz,
    /// Symmetric Dicke state with `J_z = m`.
    Dicke { m: f64 },
    /// `Dicke { m: 0 }`, even `N` only.
    TwinFock,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

pub fn reference_state(kind: ReferenceState, n: usize) -> Result<CollectiveSpinState> {
    if n == 0 || n > MAX_QUBITS {
        return Err(Error::InvalidParameter(format!(
            "qubit count must be in 1..={MAX_QUBITS}, got {n}"
        )));
    }
    let dim = 1usize << n;
    match kind {
        ReferenceState::Css { alpha, phi } => {
            let a = C64::new((alpha / 2.0).cos(), 0.0);
            let b = C64::from_polar((alpha / 2.0).sin(), phi);
            CollectiveSpinState::product(&vec![(a, b); n])
        }
        ReferenceState::Ghz => {
            let mut amps = vec![ZERO; dim];
            amps[0] = C64::new(0.5f64.sqrt(), 0.0);
            amps[dim - 1] = C64::new(0.5f64.sqrt(), 0.0);
            CollectiveSpinState::new(n, amps)
        }
        ReferenceState::Dicke { m } => {
            let k = n as f64 / 2.0 - m;
            if (k - k.round()).abs() > 1e-12 || k < -1e-12 || k > n as f64 + 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "m = {m} is not a J_z eigenvalue for {n} qubits"
                )));
            }
            let k = k.round() as u32;
            let a = C64::new(1.0 / binomial(n, k as usize).sqrt(), 0.0);
            let amps = (0..dim)
                .map(|i| if i.count_ones() == k { a } else { ZERO })
                .collect();
            CollectiveSpinState::new(n, amps)
        }
        ReferenceState::TwinFock => {
            if n % 2 == 1 {
                return Err(Error::InvalidParameter(format!(
                    "twin-Fock state needs an even qubit count, got {n}"
                )));
            }
            reference_state(ReferenceState::Dicke { m: 0.0 }, n)
        }
    }
}

/// Spin-squeezing summary of a state, in the Ramsey convention
/// `ξ_R² = N (ΔJ_⊥,min)² / |⟨J⟩|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Squeezing {
    pub xi_r2: f64,
    /// Unit mean-spin direction.
    pub mean_direction: [f64; 3],
    /// Unit direction, orthogonal to the mean spin, of least variance.
    pub squeezed_direction: [f64; 3],
    /// `mean × squeezed`: the rotation axis that the squeezing helps.
    pub sensitive_direction: [f64; 3],
    pub mean_length: f64,
    pub min_variance: f64,
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn squeezing(state: &CollectiveSpinState) -> Result<Squeezing> {
    let axes = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let mean: Vec<f64> = axes.iter().map(|&a| state.expect_j(a)).collect();
    let len = (mean.iter().map(|m| m * m).sum::<f64>()).sqrt();
    if len < 1e-12 {
        return Err(Error::InvalidParameter(
            "mean spin vanishes; squeezing parameter undefined".into(),
        ));
    }
    let m = [mean[0] / len, mean[1] / len, mean[2] / len];
    // orthonormal basis of the plane perpendicular to m
    let seed = if m[0].abs() < 0.9 { axes[0] } else { axes[1] };
    let e1 = unit(cross(m, seed))?;
    let e2 = cross(m, e1);
    let j1 = state.apply_j(e1);
    let j2 = state.apply_j(e2);
    let (a1, a2) = (state.inner(&j1).re, state.inner(&j2).re);
    let c11 = j1.inner(&j1).re - a1 * a1;
    let c22 = j2.inner(&j2).re - a2 * a2;
    let c12 = j1.inner(&j2).re - a1 * a2;
    let cov = ComplexMatrix::from_real_rows(&[&[c11, c12], &[c12, c22]]);
    let eig = eigh(&cov)?;
    let (v0, v1) = (eig.vectors[(0, 0)].re, eig.vectors[(1, 0)].re);
    let s = unit([
        v0 * e1[0] + v1 * e2[0],
        v0 * e1[1] + v1 * e2[1],
        v0 * e1[2] + v1 * e2[2],
    ])?;
    let min_var = eig.values[0].max(0.0);
    Ok(Squeezing {
        xi_r2: state.n as f64 * min_var / (len * len),
        mean_direction: m,
        squeezed_direction: s,
        sensitive_direction: cross(m, s),
        mean_length: len,
        min_variance: min_var,
    })
}

/// One-axis-twisted coherent state along `x`.
pub fn one_axis_twisted(n: usize, mu: f64) -> Result<CollectiveSpinState> {
    Ok(reference_state(
        ReferenceState::Css {
            alpha: PI / 2.0,
            phi: 0.0,
        },
        n,
    )?
    .twisted(mu))
}

/// True iff `qfi > N`, which certifies entanglement.
pub fn entanglement_witness(qfi: f64, n: usize) -> bool {
    qfi > n as f64
}

/// `(V² N², 10 log₁₀(V² N))`: moment-method QFI and its gain over the SQL in dB.
pub fn qfi_from_visibility(vis: f64, n: usize) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&vis) {
        return Err(Error::InvalidParameter(format!(
            "visibility {vis} outside [0, 1]"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("spin count must be positive".into()));
    }
    let nf = n as f64;
    let qfi = vis * vis * nf * nf;
    Ok((qfi, 10.0 * (qfi / nf).log10()))
}

/// Visibility that yields `db` above the SQL with `n` spins.
pub fn visibility_from_db(db: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("spin count must be positive".into()));
    }
    Ok((10f64.powf(db / 10.0) / n as f64).sqrt())
}

/// `QFI(N) = N² (v₁ r^(N-1))²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingLaw {
    pub one_spin_visibility: f64,
    pub per_spin_factor: f64,
}

impl Default for ScalingLaw {
    fn default() -> Self {
        Self {
            one_spin_visibility: 0.91,
            per_spin_factor: 0.96,
        }
    }
}

/// Result of a brute-force scan of the scaling law.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingScan {
    pub values: Vec<(usize, f64)>,
    /// Smallest `N` whose value is within relative 1e-12 of the maximum.
    pub argmax: usize,
    pub max: f64,
    /// All `N` within that tolerance of the maximum.
    pub ties: Vec<usize>,
}

impl ScalingLaw {
    pub fn visibility(&self, n: usize) -> f64 {
        self.one_spin_visibility * self.per_spin_factor.powi(n as i32 - 1)
    }

    pub fn predict(&self, n: usize) -> Result<f64> {
        if n == 0 {
            return Err(Error::InvalidParameter("spin count must be positive".into()));
        }
        let v = self.visibility(n);
        Ok((n as f64 * v).powi(2))
    }

    pub fn scan(&self, n_max: usize) -> Result<ScalingScan> {
        let values: Vec<(usize, f64)> = (1..=n_max)
            .map(|n| Ok((n, self.predict(n)?)))
            .collect::<Result<_>>()?;
        let max = values.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
        let ties: Vec<usize> = values
            .iter()
            .filter(|v| (max - v.1).abs() <= 1e-12 * max.abs())
            .map(|v| v.0)
            .collect();
        Ok(ScalingScan {
            argmax: ties[0],
            max,
            ties,
            values,
        })
    }
}

pub fn scaling_prediction(n: usize) -> Result<f64> {
    ScalingLaw::default().predict(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_qubit_fisher_is_one() {
        let p = ParamDistribution::new(|t| vec![(t / 2.0).cos().powi(2), (t / 2.0).sin().powi(2)]);
        for t in [0.3, 1.0, 2.0, 2.9] {
            assert!((fisher_information(&p, t).unwrap() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn flat_distribution_has_no_information() {
        let p = ParamDistribution::new(|_| vec![0.25; 4]);
        assert_eq!(fisher_information(&p, 0.4).unwrap(), 0.0);
    }

    #[test]
    fn unnormalized_distribution_rejected() {
        let p = ParamDistribution::new(|_| vec![0.5, 0.6]);
        assert!(matches!(
            fisher_information(&p, 0.0),
            Err(Error::Normalization { .. })
        ));
    }

    #[test]
    fn analytic_derivative_is_used() {
        let p = ParamDistribution::new(|t| vec![(1.5 * t).cos().powi(2), (1.5 * t).sin().powi(2)])
            .with_analytic(|t| {
                let d = -1.5 * (3.0 * t).sin();
                vec![d, -d]
            });
        assert!((fisher_information(&p, 0.7).unwrap() - 9.0).abs() < 1e-12);
    }

    #[test]
    fn cramer_rao_examples() {
        assert_eq!(cramer_rao_bound(1.0, 1).unwrap(), 1.0);
        assert_eq!(cramer_rao_bound(4.0, 200).unwrap(), 1.0 / 800.0);
        assert!(cramer_rao_bound(0.0, 3).is_err());
    }

    #[test]
    fn qfi_pure_edge_cases() {
        let ghz = reference_state(ReferenceState::Ghz, 3).unwrap();
        let zero = ghz.scaled(ZERO);
        assert_eq!(qfi_pure(&ghz, &zero).unwrap(), 0.0);
        let drift = ghz.scaled(C64::new(0.0, 0.37));
        assert!(qfi_pure(&ghz, &drift).unwrap().abs() < 1e-14);
        let d = ghz.apply_j([0.0, 0.0, 1.0]).scaled(C64::new(0.0, -1.0));
        assert!((qfi_pure(&ghz, &d).unwrap() - 9.0).abs() < 1e-12);
    }

    #[test]
    fn reference_state_values() {
        let css = reference_state(ReferenceState::Css { alpha: 0.0, phi: 0.0 }, 3).unwrap();
        assert_eq!(css.amplitudes()[0], C64::new(1.0, 0.0));
        let ghz = reference_state(ReferenceState::Ghz, 2).unwrap();
        let h = 0.5f64.sqrt();
        assert_eq!(
            ghz.amplitudes(),
            &[C64::new(h, 0.0), ZERO, ZERO, C64::new(h, 0.0)]
        );
        assert!(reference_state(ReferenceState::TwinFock, 3).is_err());
        assert!(reference_state(ReferenceState::Dicke { m: 0.5 }, 4).is_err());
    }

    #[test]
    fn generator_qfi_of_reference_states() {
        let x = [1.0, 0.0, 0.0];
        let z = [0.0, 0.0, 1.0];
        let css = reference_state(ReferenceState::Css { alpha: 0.0, phi: 0.0 }, 5).unwrap();
        assert!((qfi_generator(&css, x).unwrap() - 5.0).abs() < 1e-12);
        let ghz = reference_state(ReferenceState::Ghz, 5).unwrap();
        assert!((qfi_generator(&ghz, z).unwrap() - 25.0).abs() < 1e-12);
        let dicke = reference_state(ReferenceState::Dicke { m: 0.0 }, 4).unwrap();
        assert!((qfi_generator(&dicke, x).unwrap() - 12.0).abs() < 1e-12);
        let d1 = reference_state(ReferenceState::Dicke { m: 1.0 }, 4).unwrap();
        // N²/2 - 2m² + N
        assert!((qfi_generator(&d1, x).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn witness_and_visibility_formulas() {
        assert!(entanglement_witness(3.02, 2));
        assert!(!entanglement_witness(3.0, 3));
        let (q, db) = qfi_from_visibility(0.869, 2).unwrap();
        assert!((q - 3.020644).abs() < 1e-6);
        assert!((db - 1.791).abs() < 1e-3);
        let (q, db) = qfi_from_visibility(1.0, 7).unwrap();
        assert_eq!(q, 49.0);
        assert!((db - 10.0 * 7f64.log10()).abs() < 1e-12);
        assert!(qfi_from_visibility(1.1, 2).is_err());
        let v = visibility_from_db(2.77, 3).unwrap();
        assert!((qfi_from_visibility(v, 3).unwrap().1 - 2.77).abs() < 1e-12);
    }

    #[test]
    fn scaling_values() {
        assert!((scaling_prediction(1).unwrap() - 0.8281).abs() < 1e-12);
        assert!((scaling_prediction(2).unwrap() - 3.0528).abs() < 1e-4);
    }

    #[test]
    fn rotation_matches_generator_derivative() {
        let psi = one_axis_twisted(4, 0.3).unwrap();
        let dir = [0.2, -0.5, 0.7];
        let h = 1e-6;
        let plus = psi.rotated(dir, h);
        let minus = psi.rotated(dir, -h);
        let n = unit(dir).unwrap();
        let expected = psi.apply_j(n).scaled(C64::new(0.0, -1.0));
        for i in 0..16 {
            let fd = (plus.amplitudes()[i] - minus.amplitudes()[i]) / (2.0 * h);
            assert!((fd - expected.amplitudes()[i]).norm() < 1e-8);
        }
    }
}
