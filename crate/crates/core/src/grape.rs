// Copyright 2026 The nvmetro Authors
// SPDX-License-Identifier: Apache-2.0

//! Propagation, noise-averaged gate fidelity and gradient ascent pulse
//! engineering on the reduced register.
//!
//! The objective is the ensemble mean of `|Tr(T_S† U)| / |S|`, where `S` is
//! the support of the target. Gradients are exact: each slice propagator
//! `exp(-i 2π H Δt)` is differentiated through the eigendecomposition of `H`
//! (Daleckii–Krein form), then chained with forward and backward products.
//! Steps come from L-BFGS with Armijo backtracking; only improving steps are
//! accepted, so the fidelity trace never decreases.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{eigh, exp_derivative_kernel, gauss_hermite, ComplexMatrix, Rng, C64, ZERO};
use crate::pulse::PulseSequence;
use crate::spin::{control_hamiltonian, Channel, NuclearProjectors, ReducedRegister, SpinSystem};

/// Reduced register with its projector cache, shared by every propagation.
#[derive(Debug, Clone)]
pub struct ControlSystem {
    pub reg: ReducedRegister,
    pub proj: NuclearProjectors,
}

impl ControlSystem {
    pub fn new(sys: &SpinSystem) -> Result<Self> {
        let reg = ReducedRegister::new(sys)?;
        let proj = NuclearProjectors::new(&reg);
        Ok(Self { reg, proj })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    /// Tensor Gauss–Hermite rule with `n_samples` nodes per noisy axis.
    Grid,
    /// `n_samples` joint normal draws with equal weights.
    MonteCarlo,
}

/// Quasi-static detuning and relative MW amplitude error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    pub sigma_mag_khz: f64,
    pub sigma_amp: f64,
    pub n_samples: usize,
    pub sampling: Sampling,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            sigma_mag_khz: 35.0,
            sigma_amp: 0.01,
            n_samples: 7,
            sampling: Sampling::Grid,
        }
    }
}

/// One ensemble member; weights of an ensemble sum to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSample {
    pub delta_khz: f64,
    pub delta1: f64,
    pub weight: f64,
}

impl NoiseSample {
    pub const NOMINAL: NoiseSample = NoiseSample {
        delta_khz: 0.0,
        delta1: 0.0,
        weight: 1.0,
    };
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self {
            sigma_mag_khz: 0.0,
            sigma_amp: 0.0,
            n_samples: 1,
            sampling: Sampling::Grid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_mag_khz >= 0.0 && self.sigma_mag_khz.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sigma_mag must be finite and non-negative, got {}",
                self.sigma_mag_khz
            )));
        }
        if !(self.sigma_amp >= 0.0 && self.sigma_amp.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sigma_amp must be finite and non-negative, got {}",
                self.sigma_amp
            )));
        }
        if self.n_samples == 0 {
            return Err(Error::InvalidParameter("n_samples must be at least 1".into()));
        }
        Ok(())
    }

    /// Pre-drawn ensemble. A zero sigma collapses its axis to a single node.
    pub fn ensemble(&self, rng: &mut Rng) -> Result<Vec<NoiseSample>> {
        self.validate()?;
        match self.sampling {
            Sampling::Grid => {
                let axis = |sigma: f64| -> Result<Vec<(f64, f64)>> {
                    if sigma == 0.0 || self.n_samples == 1 {
                        return Ok(vec![(0.0, 1.0)]);
                    }
                    let (x, w) = gauss_hermite(self.n_samples)?;
                    Ok(x.into_iter().map(|x| x * sigma).zip(w).collect())
                };
                let mag = axis(self.sigma_mag_khz)?;
                let amp = axis(self.sigma_amp)?;
                let mut out = Vec::with_capacity(mag.len() * amp.len());
                for &(d, wd) in &mag {
                    for &(a, wa) in &amp {
                        out.push(NoiseSample {
                            delta_khz: d,
                            delta1: a,
                            weight: wd * wa,
                        });
                    }
                }
                Ok(out)
            }
            Sampling::MonteCarlo => {
                if self.n_samples == 1 && self.sigma_mag_khz == 0.0 && self.sigma_amp == 0.0 {
                    return Ok(vec![NoiseSample::NOMINAL]);
                }
                let w = 1.0 / self.n_samples as f64;
                Ok((0..self.n_samples)
                    .map(|_| NoiseSample {
                        delta_khz: self.sigma_mag_khz * rng.standard_normal(),
                        delta1: self.sigma_amp * rng.standard_normal(),
                        weight: w,
                    })
                    .collect())
            }
        }
    }
}

/// Target unitary, compared only on the basis states in `support`.
#[derive(Debug, Clone, PartialEq)]
pub struct GateTarget {
    pub unitary: ComplexMatrix,
    pub support: Vec<usize>,
    pub label: String,
}

impl GateTarget {
    pub fn new(unitary: ComplexMatrix, support: Vec<usize>, label: &str) -> Result<Self> {
        let t = Self {
            unitary,
            support,
            label: label.to_string(),
        };
        t.validate()?;
        Ok(t)
    }

    /// Target compared on the whole space.
    pub fn full(unitary: ComplexMatrix, label: &str) -> Result<Self> {
        let n = unitary.rows();
        Self::new(unitary, (0..n).collect(), label)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            unitary: ComplexMatrix::identity(dim),
            support: (0..dim).collect(),
            label: "identity".into(),
        }
    }

    /// Conditional π phase on `|m_S = 0, m_N = +1, m_C = -1/2⟩`, scored on the
    /// `m_S = 0` manifold. On that manifold it is a controlled-Z between the
    /// two nuclei, which is what the interference circuits need.
    pub fn cphase(sys: &ControlSystem) -> Result<Self> {
        Self::conditional_phase(sys, 1, -1)
    }

    /// `I_e ⊗ (I - 2 P(m_N, m_C))` scored on the `m_S = 0` manifold.
    pub fn conditional_phase(sys: &ControlSystem, m_n: i32, two_m_c: i32) -> Result<Self> {
        let p = sys.proj.embedded(m_n, two_m_c)?;
        let mut u = ComplexMatrix::identity(8);
        u.add_scaled(p, C64::new(-2.0, 0.0));
        Self::new(u, sys.reg.electron_zero_subspace()?, "cphase")
    }

    pub fn dim(&self) -> usize {
        self.unitary.rows()
    }

    pub fn support_dim(&self) -> usize {
        self.support.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.unitary.rows();
        if !self.unitary.is_square() {
            return Err(Error::NotSquare {
                rows: n,
                cols: self.unitary.cols(),
            });
        }
        if self.support.is_empty() || self.support.iter().any(|&i| i >= n) {
            return Err(Error::InvalidParameter(format!(
                "target support {:?} invalid for dimension {n}",
                self.support
            )));
        }
        let mut sorted = self.support.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.support.len() {
            return Err(Error::InvalidParameter("target support has duplicates".into()));
        }
        let block = self.support_block();
        if !block.is_unitary(1e-10) {
            return Err(Error::InvalidParameter(format!(
                "target `{}` is not unitary on its support (error {:.3e})",
                self.label,
                block.unitarity_error()
            )));
        }
        Ok(())
    }

    /// `T_SS`, the target restricted to its support.
    pub fn support_block(&self) -> ComplexMatrix {
        let m = self.support.len();
        let mut b = ComplexMatrix::zeros(m, m);
        for (i, &r) in self.support.iter().enumerate() {
            for (j, &c) in self.support.iter().enumerate() {
                b[(i, j)] = self.unitary[(r, c)];
            }
        }
        b
    }

    /// `P_S T† P_S` on the full space, so `Tr(masked_adjoint · U) = Tr(T_S† U_S)`.
    fn masked_adjoint(&self) -> ComplexMatrix {
        let n = self.dim();
        let mut a = ComplexMatrix::zeros(n, n);
        for &r in &self.support {
            for &c in &self.support {
                a[(r, c)] = self.unitary[(c, r)].conj();
            }
        }
        a
    }

    /// `Tr(T_S† U_S)`.
    pub fn overlap(&self, u: &ComplexMatrix) -> Result<C64> {
        if u.rows() != self.dim() || u.cols() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "propagator is {}×{}, target is {}×{}",
                u.rows(),
                u.cols(),
                self.dim(),
                self.dim()
            )));
        }
        let mut acc = ZERO;
        for &r in &self.support {
            for &c in &self.support {
                acc += self.unitary[(r, c)].conj() * u[(r, c)];
            }
        }
        Ok(acc)
    }
}

/// `|Tr(T_S† U_S)| / |S|`, clipped to `[0, 1]` against rounding.
pub fn gate_fidelity(u: &ComplexMatrix, target: &GateTarget) -> Result<f64> {
    let h = target.overlap(u)?;
    Ok((h.norm() / target.support_dim() as f64).min(1.0))
}

/// Per-slice control operators of one pulse geometry, precomputed once.
#[derive(Debug, Clone)]
pub struct ControlModel {
    channels: Vec<Channel>,
    n_slices: usize,
    tau: f64,
    /// `ops[k][c]`: operator per kHz of channel `c` in slice `k`, in MHz.
    ops: Vec<Vec<ComplexMatrix>>,
    /// Detuning operator per kHz.
    detuning: ComplexMatrix,
}

impl ControlModel {
    pub fn new(sys: &ControlSystem, seq: &PulseSequence) -> Result<Self> {
        seq.validate()?;
        let mut ops = Vec::with_capacity(seq.n_slices());
        for k in 0..seq.n_slices() {
            let t = seq.midpoint_us(k);
            ops.push(
                seq.channels()
                    .iter()
                    .map(|&c| Ok(control_hamiltonian(&sys.reg, &sys.proj, c, t)?.scale_real(1e-3)))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Ok(Self {
            channels: seq.channels().to_vec(),
            n_slices: seq.n_slices(),
            tau: 2.0 * PI * seq.slice_us(),
            ops,
            detuning: sys.reg.sz.scale_real(1e-3),
        })
    }

    fn check(&self, seq: &PulseSequence) -> Result<()> {
        if seq.channels() != self.channels.as_slice() || seq.n_slices() != self.n_slices {
            return Err(Error::DimensionMismatch(
                "pulse geometry differs from the control model".into(),
            ));
        }
        Ok(())
    }

    fn channel_scale(&self, c: usize, s: &NoiseSample) -> f64 {
        if self.channels[c].is_microwave() {
            1.0 + s.delta1
        } else {
            1.0
        }
    }

    /// Slice Hamiltonian in MHz.
    fn hamiltonian(&self, seq: &PulseSequence, k: usize, s: &NoiseSample) -> ComplexMatrix {
        let mut h = self.detuning.scale_real(s.delta_khz);
        for (c, op) in self.ops[k].iter().enumerate() {
            let a = seq.channel_amplitudes(c)[k] * self.channel_scale(c, s);
            if a != 0.0 {
                h.add_scaled(op, C64::new(a, 0.0));
            }
        }
        h
    }

    fn slice_propagator(&self, h: &ComplexMatrix) -> Result<ComplexMatrix> {
        let tau = self.tau;
        Ok(eigh(h)?.map(|l| C64::new(0.0, -tau * l).exp()))
    }

    /// `U_{n-1} ⋯ U_1 U_0`.
    pub fn propagate(&self, seq: &PulseSequence, s: &NoiseSample) -> Result<ComplexMatrix> {
        self.check(seq)?;
        let mut u = ComplexMatrix::identity(self.detuning.rows());
        for k in 0..self.n_slices {
            u = &self.slice_propagator(&self.hamiltonian(seq, k, s))? * &u;
        }
        Ok(u)
    }

    /// Overlap `h = Tr(T_S† U)` and `∂h/∂a` for every parameter (channel-major).
    fn overlap_gradient(
        &self,
        seq: &PulseSequence,
        target_adj: &ComplexMatrix,
        s: &NoiseSample,
    ) -> Result<(C64, Vec<C64>)> {
        let n = self.n_slices;
        let dim = target_adj.rows();
        let mut eigs = Vec::with_capacity(n);
        let mut props = Vec::with_capacity(n);
        for k in 0..n {
            let e = eigh(&self.hamiltonian(seq, k, s))?;
            let tau = self.tau;
            props.push(e.map(|l| C64::new(0.0, -tau * l).exp()));
            eigs.push(e);
        }
        // backward[k] = T† U_{n-1} ⋯ U_{k+1}
        let mut backward = vec![ComplexMatrix::zeros(0, 0); n];
        let mut acc = target_adj.clone();
        for k in (0..n).rev() {
            let next = &acc * &props[k];
            backward[k] = acc;
            acc = next;
        }
        let h = acc.trace();

        let nc = self.channels.len();
        let mut grad = vec![ZERO; nc * n];
        let mut forward = ComplexMatrix::identity(dim);
        for k in 0..n {
            let e = &eigs[k];
            let v = &e.vectors;
            let w = &forward * &backward[k];
            let z = &(&v.adjoint() * &w) * v;
            let gamma = exp_derivative_kernel(&e.values, self.tau);
            let mut kmat = ComplexMatrix::zeros(dim, dim);
            for j in 0..dim {
                for l in 0..dim {
                    kmat[(j, l)] = z[(l, j)] * gamma[j * dim + l];
                }
            }
            let m = &(&v.conj() * &kmat) * &v.transpose();
            for (c, op) in self.ops[k].iter().enumerate() {
                let mut d = ZERO;
                for (o, mm) in op.as_slice().iter().zip(m.as_slice()) {
                    if *o != ZERO {
                        d += o * mm;
                    }
                }
                grad[c * n + k] = d * self.channel_scale(c, s);
            }
            forward = &props[k] * &forward;
        }
        Ok((h, grad))
    }
}

/// Full propagator of `seq` for one noise realisation.
pub fn propagate(
    seq: &PulseSequence,
    sys: &ControlSystem,
    delta_khz: f64,
    delta1: f64,
) -> Result<ComplexMatrix> {
    let model = ControlModel::new(sys, seq)?;
    model.propagate(
        seq,
        &NoiseSample {
            delta_khz,
            delta1,
            weight: 1.0,
        },
    )
}

/// Weighted ensemble fidelity with its gradient, for one pulse geometry.
#[derive(Debug, Clone)]
pub struct RobustObjective {
    model: ControlModel,
    target: GateTarget,
    target_adj: ComplexMatrix,
    samples: Vec<NoiseSample>,
}

impl RobustObjective {
    pub fn new(
        sys: &ControlSystem,
        seq: &PulseSequence,
        target: &GateTarget,
        samples: Vec<NoiseSample>,
    ) -> Result<Self> {
        target.validate()?;
        if target.dim() != sys.reg.dim() {
            return Err(Error::DimensionMismatch(format!(
                "target dimension {} does not match register dimension {}",
                target.dim(),
                sys.reg.dim()
            )));
        }
        if samples.is_empty() {
            return Err(Error::InvalidParameter("empty noise ensemble".into()));
        }
        Ok(Self {
            model: ControlModel::new(sys, seq)?,
            target: target.clone(),
            target_adj: target.masked_adjoint(),
            samples,
        })
    }

    pub fn samples(&self) -> &[NoiseSample] {
        &self.samples
    }

    /// Fidelity of every ensemble member, in ensemble order.
    pub fn member_fidelities(&self, seq: &PulseSequence) -> Result<Vec<f64>> {
        self.samples
            .par_iter()
            .map(|s| gate_fidelity(&self.model.propagate(seq, s)?, &self.target))
            .collect()
    }

    pub fn value(&self, seq: &PulseSequence) -> Result<f64> {
        let f = self.member_fidelities(seq)?;
        Ok(f.iter().zip(&self.samples).map(|(f, s)| s.weight * f).sum())
    }

    pub fn value_and_gradient(&self, seq: &PulseSequence) -> Result<(f64, Vec<f64>)> {
        let d = self.target.support_dim() as f64;
        let parts: Vec<(C64, Vec<C64>)> = self
            .samples
            .par_iter()
            .map(|s| self.model.overlap_gradient(seq, &self.target_adj, s))
            .collect::<Result<_>>()?;
        let mut value = 0.0;
        let mut grad = vec![0.0; parts[0].1.len()];
        // sequential reduction keeps the result independent of thread count
        for ((h, dh), s) in parts.iter().zip(&self.samples) {
            let mag = h.norm();
            value += s.weight * (mag / d).min(1.0);
            if mag > 0.0 {
                let coef = s.weight / (mag * d);
                for (g, dhi) in grad.iter_mut().zip(dh) {
                    *g += coef * (h.conj() * dhi).re;
                }
            }
        }
        Ok((value, grad))
    }
}

/// Mean gate fidelity over the noise ensemble.
pub fn robust_fidelity(
    seq: &PulseSequence,
    sys: &ControlSystem,
    target: &GateTarget,
    noise: &NoiseModel,
    rng: &mut Rng,
) -> Result<f64> {
    let samples = noise.ensemble(rng)?;
    RobustObjective::new(sys, seq, target, samples)?.value(seq)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrapeOptions {
    pub max_iterations: usize,
    /// Stop as soon as the robust fidelity reaches this value.
    pub target_fidelity: f64,
    /// Stop when the largest free gradient component falls below this.
    pub gradient_tolerance: f64,
    /// Length of the first step along the gradient, kHz (largest component).
    pub initial_step_khz: f64,
    pub lbfgs_memory: usize,
    pub max_backtracks: usize,
    pub armijo: f64,
}

impl Default for GrapeOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            target_fidelity: 1.0 - 1e-12,
            gradient_tolerance: 1e-12,
            initial_step_khz: 10.0,
            lbfgs_memory: 12,
            max_backtracks: 40,
            armijo: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    TargetReached,
    GradientTolerance,
    LineSearchFailed,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct GrapeResult {
    pub sequence: PulseSequence,
    /// Robust fidelity after each accepted step, starting with the initial pulse.
    pub trace: Vec<f64>,
    pub fidelity: f64,
    pub iterations: usize,
    pub stop: StopReason,
}

impl GrapeResult {
    pub fn converged(&self) -> bool {
        matches!(
            self.stop,
            StopReason::TargetReached | StopReason::GradientTolerance
        )
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Two-loop recursion: approximate inverse-Hessian times `g` for the
/// minimisation of `-F`.
fn lbfgs_direction(g: &[f64], hist: &[(Vec<f64>, Vec<f64>)]) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(hist.len());
    for (s, y) in hist.iter().rev() {
        let rho = 1.0 / dot(y, s);
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push((a, rho));
    }
    if let Some((s, y)) = hist.last() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|x| *x *= gamma);
    }
    for ((s, y), (a, rho)) in hist.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|x| *x = -*x);
    q
}

/// Gradient ascent pulse engineering on the noise-averaged fidelity.
///
/// The ensemble is drawn once up front, so the objective is deterministic.
/// Non-convergence is not an error: the best pulse found is returned with
/// its stop reason.
pub fn grape_optimize(
    initial: &PulseSequence,
    sys: &ControlSystem,
    target: &GateTarget,
    noise: &NoiseModel,
    rng: &mut Rng,
    opts: &GrapeOptions,
) -> Result<GrapeResult> {
    let samples = noise.ensemble(rng)?;
    let objective = RobustObjective::new(sys, initial, target, samples)?;
    let cap = initial.max_amplitude_khz();

    let mut seq = initial.clone();
    let mut x = seq.params();
    let (mut fx, grad) = objective.value_and_gradient(&seq)?;
    // minimise -F
    let mut g: Vec<f64> = grad.iter().map(|v| -v).collect();
    let mut trace = vec![fx];
    let mut hist: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut trial = seq.clone();
    let mut stop = StopReason::MaxIterations;
    let mut iterations = 0;

    // components pinned at the bound whose gradient pushes outward are frozen
    let free_grad = |x: &[f64], g: &[f64]| -> f64 {
        x.iter()
            .zip(g)
            .map(|(&xi, &gi)| {
                if (xi >= cap && gi < 0.0) || (xi <= -cap && gi > 0.0) {
                    0.0
                } else {
                    gi.abs()
                }
            })
            .fold(0.0, f64::max)
    };

    while iterations < opts.max_iterations {
        if fx >= opts.target_fidelity {
            stop = StopReason::TargetReached;
            break;
        }
        if free_grad(&x, &g) <= opts.gradient_tolerance {
            stop = StopReason::GradientTolerance;
            break;
        }
        iterations += 1;

        let mut accepted = None;
        for attempt in 0..2 {
            let mut d = if hist.is_empty() {
                g.iter().map(|v| -v).collect::<Vec<_>>()
            } else {
                lbfgs_direction(&g, &hist)
            };
            if dot(&d, &g) >= 0.0 {
                hist.clear();
                d = g.iter().map(|v| -v).collect();
            }
            if hist.is_empty() {
                let dmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if dmax == 0.0 {
                    break;
                }
                let s = opts.initial_step_khz / dmax;
                d.iter_mut().for_each(|v| *v *= s);
            }
            let mut alpha = 1.0;
            for _ in 0..opts.max_backtracks {
                let xn: Vec<f64> = x
                    .iter()
                    .zip(&d)
                    .map(|(xi, di)| (xi + alpha * di).clamp(-cap, cap))
                    .collect();
                let step: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
                let decrease = dot(&g, &step);
                if decrease < 0.0 {
                    trial.set_params(&xn)?;
                    let (fn_, gn) = objective.value_and_gradient(&trial)?;
                    if -fn_ <= -fx + opts.armijo * decrease && fn_ > fx {
                        accepted = Some((xn, fn_, gn.iter().map(|v| -v).collect::<Vec<_>>()));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if accepted.is_some() || attempt == 1 || hist.is_empty() {
                break;
            }
            hist.clear();
        }

        let Some((xn, fn_, gn)) = accepted else {
            stop = StopReason::LineSearchFailed;
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            hist.push((s, y));
            if hist.len() > opts.lbfgs_memory {
                hist.remove(0);
            }
        }
        x = xn;
        fx = fn_;
        g = gn;
        trace.push(fx);
        log::debug!("grape iteration {iterations}: fidelity {fx:.9}");
    }
    if stop == StopReason::MaxIterations && fx >= opts.target_fidelity {
        stop = StopReason::TargetReached;
    }
    seq.set_params(&x)?;
    Ok(GrapeResult {
        sequence: seq,
        trace,
        fidelity: fx,
        iterations,
        stop,
    })
}

/// Nominal-pulse fidelity over a grid of `(δ, δ₁)` in units of the noise sigmas.
#[derive(Debug, Clone, PartialEq)]
pub struct FidelityMap {
    pub delta_sigma: Vec<f64>,
    pub delta1_sigma: Vec<f64>,
    /// `values[i][j]` at `delta_sigma[i]`, `delta1_sigma[j]`.
    pub values: Vec<Vec<f64>>,
}

impl FidelityMap {
    /// Grid coordinates of the largest entry.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, 0);
        for (i, row) in self.values.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v > self.values[best.0][best.1] {
                    best = (i, j);
                }
            }
        }
        best
    }
}

pub fn fidelity_map(
    seq: &PulseSequence,
    sys: &ControlSystem,
    target: &GateTarget,
    noise: &NoiseModel,
    delta_sigma: &[f64],
    delta1_sigma: &[f64],
) -> Result<FidelityMap> {
    noise.validate()?;
    target.validate()?;
    let model = ControlModel::new(sys, seq)?;
    let cells: Vec<(usize, usize)> = (0..delta_sigma.len())
        .flat_map(|i| (0..delta1_sigma.len()).map(move |j| (i, j)))
        .collect();
    let flat: Vec<f64> = cells
        .par_iter()
        .map(|&(i, j)| {
            let s = NoiseSample {
                delta_khz: delta_sigma[i] * noise.sigma_mag_khz,
                delta1: delta1_sigma[j] * noise.sigma_amp,
                weight: 1.0,
            };
            gate_fidelity(&model.propagate(seq, &s)?, target)
        })
        .collect::<Result<_>>()?;
    let values = flat
        .chunks(delta1_sigma.len().max(1))
        .map(<[f64]>::to_vec)
        .take(delta_sigma.len())
        .collect();
    Ok(FidelityMap {
        delta_sigma: delta_sigma.to_vec(),
        delta1_sigma: delta1_sigma.to_vec(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::I;

    const MW: [Channel; 4] = [
        Channel::F1Real,
        Channel::F1Imag,
        Channel::F2Real,
        Channel::F2Imag,
    ];

    fn system() -> ControlSystem {
        ControlSystem::new(&SpinSystem::default()).unwrap()
    }

    #[test]
    fn zero_pulse_is_identity() {
        let sys = system();
        let seq = PulseSequence::zeros(&MW, 10, 20.0).unwrap();
        let u = propagate(&seq, &sys, 0.0, 0.0).unwrap();
        assert!(u.max_abs_diff(&ComplexMatrix::identity(8)) < 1e-15);
    }

    #[test]
    fn full_amplitude_loss_is_identity() {
        let sys = system();
        let seq = PulseSequence::random(&MW, 10, 20.0, 500.0, &mut Rng::new(1)).unwrap();
        let u = propagate(&seq, &sys, 0.0, -1.0).unwrap();
        assert!(u.max_abs_diff(&ComplexMatrix::identity(8)) < 1e-15);
    }

    #[test]
    fn rf_carbon_pi_rotation_matches_closed_form() {
        // ∫Ω dt = 1/2 cycle: Ω = 250 kHz for 2 µs
        let sys = system();
        let seq = PulseSequence::from_amplitudes(&[Channel::RfC], vec![vec![250.0; 100]], 20.0)
            .unwrap();
        let u = propagate(&seq, &sys, 0.0, 0.0).unwrap();
        // exp(-i π σx/2 ⊗ ...) = -i σx on the carbon of the m_S = 0 block
        for n in 0..2 {
            let up = ReducedRegister::index(0, n, 0);
            let dn = ReducedRegister::index(0, n, 1);
            assert!((u[(up, dn)] - (-I)).norm() < 1e-8);
            assert!((u[(dn, up)] - (-I)).norm() < 1e-8);
            assert!(u[(up, up)].norm() < 1e-8);
            // m_S = +1 block untouched
            let e1 = ReducedRegister::index(1, n, 0);
            assert!((u[(e1, e1)] - C64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn fidelity_definition_examples() {
        let t = GateTarget::identity(8);
        let u = ComplexMatrix::identity(8);
        assert_eq!(gate_fidelity(&u, &t).unwrap(), 1.0);
        let phased = u.scale(C64::new(0.3, 0.7).unscale(C64::new(0.3, 0.7).norm()));
        assert!((gate_fidelity(&phased, &t).unwrap() - 1.0).abs() < 1e-15);
        let mut flipped = ComplexMatrix::identity(8);
        flipped[(3, 3)] = C64::new(-1.0, 0.0);
        assert!((gate_fidelity(&flipped, &t).unwrap() - 0.75).abs() < 1e-15);
        assert!(gate_fidelity(&ComplexMatrix::identity(4), &t).is_err());
    }

    #[test]
    fn target_validation() {
        let mut m = ComplexMatrix::identity(8);
        m[(0, 0)] = C64::new(2.0, 0.0);
        assert!(GateTarget::full(m, "bad").is_err());
        assert!(GateTarget::new(ComplexMatrix::identity(8), vec![0, 9], "x").is_err());
        let cp = GateTarget::cphase(&system()).unwrap();
        assert_eq!(cp.support_dim(), 4);
    }

    #[test]
    fn noise_ensembles() {
        let mut rng = Rng::new(0);
        let grid = NoiseModel::default().ensemble(&mut rng).unwrap();
        assert_eq!(grid.len(), 49);
        let w: f64 = grid.iter().map(|s| s.weight).sum();
        assert!((w - 1.0).abs() < 1e-13);
        let var: f64 = grid.iter().map(|s| s.weight * s.delta_khz.powi(2)).sum();
        assert!((var - 35.0f64.powi(2)).abs() < 1e-9);
        assert_eq!(
            NoiseModel::noiseless().ensemble(&mut rng).unwrap(),
            vec![NoiseSample::NOMINAL]
        );
        let mc = NoiseModel {
            sampling: Sampling::MonteCarlo,
            n_samples: 20,
            ..NoiseModel::default()
        };
        let a = mc.ensemble(&mut Rng::new(4)).unwrap();
        assert_eq!(a, mc.ensemble(&mut Rng::new(4)).unwrap());
        assert!(NoiseModel {
            n_samples: 0,
            ..NoiseModel::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn noiseless_robust_fidelity_is_nominal_bit_for_bit() {
        let sys = system();
        let seq = PulseSequence::random(&MW, 12, 20.0, 400.0, &mut Rng::new(8)).unwrap();
        let target = GateTarget::cphase(&sys).unwrap();
        let nominal = gate_fidelity(&propagate(&seq, &sys, 0.0, 0.0).unwrap(), &target).unwrap();
        for sampling in [Sampling::Grid, Sampling::MonteCarlo] {
            let noise = NoiseModel {
                sampling,
                ..NoiseModel::noiseless()
            };
            let f = robust_fidelity(&seq, &sys, &target, &noise, &mut Rng::new(1)).unwrap();
            assert_eq!(f.to_bits(), nominal.to_bits());
        }
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let sys = system();
        let channels = [
            Channel::F1Real,
            Channel::F1Imag,
            Channel::F2Real,
            Channel::F2Imag,
            Channel::RfN,
            Channel::RfC,
        ];
        let mut rng = Rng::new(21);
        let seq = PulseSequence::random(&channels, 20, 20.0, 800.0, &mut rng).unwrap();
        let target = GateTarget::cphase(&sys).unwrap();
        let noise = NoiseModel {
            n_samples: 2,
            ..NoiseModel::default()
        };
        let obj =
            RobustObjective::new(&sys, &seq, &target, noise.ensemble(&mut rng).unwrap()).unwrap();
        let (_, grad) = obj.value_and_gradient(&seq).unwrap();
        let x0 = seq.params();
        let h = 1e-3;
        let mut worst: f64 = 0.0;
        let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        for i in (0..x0.len()).step_by(7) {
            let mut p = seq.clone();
            let mut x = x0.clone();
            x[i] += h;
            p.set_params(&x).unwrap();
            let fp = obj.value(&p).unwrap();
            x[i] -= 2.0 * h;
            p.set_params(&x).unwrap();
            let fm = obj.value(&p).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            worst = worst.max((fd - grad[i]).abs() / scale);
        }
        assert!(worst < 1e-4, "relative gradient error {worst}");
    }

    #[test]
    fn identity_target_from_zero_pulse_returns_immediately() {
        let sys = system();
        let seq = PulseSequence::zeros(&MW, 10, 20.0).unwrap();
        let res = grape_optimize(
            &seq,
            &sys,
            &GateTarget::identity(8),
            &NoiseModel::noiseless(),
            &mut Rng::new(0),
            &GrapeOptions::default(),
        )
        .unwrap();
        assert_eq!(res.iterations, 0);
        assert_eq!(res.fidelity, 1.0);
        assert_eq!(res.stop, StopReason::TargetReached);
    }

    #[test]
    fn carbon_half_pi_target_is_reached() {
        // closed form: Ω t = 1/4 cycle gives exp(-i π/4 σx) on the carbon
        let sys = system();
        let mut x = ComplexMatrix::zeros(2, 2);
        let (c, s) = ((PI / 4.0).cos(), (PI / 4.0).sin());
        x[(0, 0)] = C64::new(c, 0.0);
        x[(1, 1)] = C64::new(c, 0.0);
        x[(0, 1)] = C64::new(0.0, -s);
        x[(1, 0)] = C64::new(0.0, -s);
        let u = crate::numerics::kron_all(&[
            &ComplexMatrix::identity(2),
            &ComplexMatrix::identity(2),
            &x,
        ]);
        let support = sys.reg.electron_zero_subspace().unwrap();
        let target = GateTarget::new(u, support, "x90").unwrap();
        let closed = PulseSequence::from_amplitudes(&[Channel::RfC], vec![vec![250.0; 50]], 20.0)
            .unwrap();
        let f = gate_fidelity(&propagate(&closed, &sys, 0.0, 0.0).unwrap(), &target).unwrap();
        assert!(f > 1.0 - 1e-12);

        let init = PulseSequence::random(&[Channel::RfC], 50, 20.0, 50.0, &mut Rng::new(2))
            .unwrap();
        let opts = GrapeOptions {
            target_fidelity: 0.9999,
            ..GrapeOptions::default()
        };
        let res = grape_optimize(
            &init,
            &sys,
            &target,
            &NoiseModel::noiseless(),
            &mut Rng::new(0),
            &opts,
        )
        .unwrap();
        assert!(res.fidelity > 0.999, "{}", res.fidelity);
        assert!(res.iterations <= 500);
        assert!(res.trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn fidelity_map_origin_is_nominal() {
        let sys = system();
        let seq = PulseSequence::random(&MW, 8, 20.0, 300.0, &mut Rng::new(5)).unwrap();
        let target = GateTarget::cphase(&sys).unwrap();
        let map = fidelity_map(
            &seq,
            &sys,
            &target,
            &NoiseModel::default(),
            &[-1.0, 0.0, 1.0],
            &[-2.0, 0.0, 2.0, 4.0],
        )
        .unwrap();
        let nominal = gate_fidelity(&propagate(&seq, &sys, 0.0, 0.0).unwrap(), &target).unwrap();
        assert_eq!(map.values.len(), 3);
        assert_eq!(map.values[0].len(), 4);
        assert_eq!(map.values[1][1], nominal);
        assert!(map
            .values
            .iter()
            .flatten()
            .all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
    }
}
