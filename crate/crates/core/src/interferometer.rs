// Copyright 2026 The nvmetro Authors
// SPDX-License-Identifier: Apache-2.0

//! The one-, two- and three-spin interference circuits on the reduced
//! register, their fringes and sinusoid fits.
//!
//! The two-spin circuit, applied to `|m_S=0, m_N=+1, m_C=-1/2⟩`, is (in
//! order of application)
//!
//! ```text
//! Y_N(π/2)  Y_C(-π/2)  CPhase  Y_C(π/2)  Φ(φ)  Y_N(π/2)  CPhase  X_C(π/2)
//! ```
//!
//! with `X_s(θ) = exp(-iθ I_x^s)` and `Φ(φ) = exp(-iφ (S_z + I_z^N + I_z^C))`.
//! Before `Φ` the nuclei hold `(|↑↑⟩ + |↓↓⟩)/√2`, so the relative phase is
//! `2φ`; the remaining gates map it onto the ¹³C population alone. The
//! three-spin circuit brackets `Φ` with two C_nNOT_e gates, which put the
//! electron into the GHZ state and raise the relative phase to `3φ`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::budget::{overall_fidelity, ErrorBudgetTable};
use crate::error::{Error, Result};
use crate::grape::{propagate, ControlSystem, NoiseModel};
use crate::numerics::{eigh, expm, numerical_rank, ComplexMatrix, Rng, StateVector, C64};
use crate::pulse::PulseSequence;
use crate::spin::{ReducedRegister, Spin, SpinSystem, REGISTER_DIM};

pub const CPHASE: &str = "CPhase";
pub const CNOT_E: &str = "CnNOTe";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

/// One circuit element. Gates carry their matrix so a circuit is plain data.
#[derive(Debug, Clone, PartialEq)]
pub enum Element {
    Gate {
        name: String,
        spins: Vec<Spin>,
        unitary: ComplexMatrix,
        /// Present only in the three-spin circuit.
        shadowed: bool,
    },
    Pulse {
        name: String,
        sequence: PulseSequence,
        unitary: ComplexMatrix,
    },
    Phase {
        phi: f64,
        spins: Vec<Spin>,
    },
}

impl Element {
    pub fn name(&self) -> String {
        match self {
            Element::Gate { name, .. } | Element::Pulse { name, .. } => name.clone(),
            Element::Phase { phi, .. } => format!("phase({phi})"),
        }
    }

    pub fn is_shadowed(&self) -> bool {
        matches!(self, Element::Gate { shadowed: true, .. })
    }

    pub fn operator(&self, reg: &ReducedRegister) -> ComplexMatrix {
        match self {
            Element::Gate { unitary, .. } | Element::Pulse { unitary, .. } => unitary.clone(),
            Element::Phase { phi, spins } => {
                let mut z = ComplexMatrix::zeros(REGISTER_DIM, REGISTER_DIM);
                for &s in spins {
                    z += reg.z_operator(s);
                }
                let diag: Vec<C64> = z
                    .diagonal()
                    .iter()
                    .map(|d| C64::new(0.0, -phi * d.re).exp())
                    .collect();
                ComplexMatrix::from_diag(&diag)
            }
        }
    }

    fn describe(&self) -> serde_json::Value {
        let spins = |s: &[Spin]| s.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        match self {
            Element::Gate {
                name,
                spins: s,
                shadowed,
                ..
            } => serde_json::json!({"kind": "gate", "name": name, "spins": spins(s), "shadowed": shadowed}),
            Element::Pulse { name, sequence, .. } => serde_json::json!({
                "kind": "pulse",
                "name": name,
                "slices": sequence.n_slices(),
                "slice_ns": sequence.slice_ns(),
                "channels": sequence.channels().iter().map(|c| c.name()).collect::<Vec<_>>(),
            }),
            Element::Phase { phi, spins: s } => {
                serde_json::json!({"kind": "phase", "phi_rad": phi, "spins": spins(s)})
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    pub n_spins: usize,
    pub elements: Vec<Element>,
}

impl Circuit {
    pub fn empty(n_spins: usize) -> Self {
        Self {
            n_spins,
            elements: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn validate(&self, reg: &ReducedRegister) -> Result<()> {
        for e in &self.elements {
            let u = e.operator(reg);
            if !u.is_unitary(1e-10) {
                return Err(Error::InvalidParameter(format!(
                    "element {} is not unitary (error {:.3e})",
                    e.name(),
                    u.unitarity_error()
                )));
            }
        }
        Ok(())
    }

    /// The circuit with every shadowed element dropped.
    pub fn without_shadowed(&self) -> Circuit {
        Circuit {
            n_spins: self.n_spins.min(2),
            elements: self
                .elements
                .iter()
                .filter(|e| !e.is_shadowed())
                .cloned()
                .collect(),
        }
    }

    /// Replace every gate called `name` by `replacement`.
    pub fn substitute(&self, name: &str, replacement: &Element) -> Circuit {
        Circuit {
            n_spins: self.n_spins,
            elements: self
                .elements
                .iter()
                .map(|e| match e {
                    Element::Gate { name: n, .. } if n == name => replacement.clone(),
                    other => other.clone(),
                })
                .collect(),
        }
    }

    /// Product of all element operators, first element rightmost.
    pub fn unitary(&self, reg: &ReducedRegister) -> ComplexMatrix {
        self.elements
            .iter()
            .fold(ComplexMatrix::identity(REGISTER_DIM), |acc, e| {
                &e.operator(reg) * &acc
            })
    }

    /// JSON description for audit trails.
    pub fn describe(&self) -> String {
        let v = serde_json::json!({
            "n_spins": self.n_spins,
            "elements": self.elements.iter().map(Element::describe).collect::<Vec<_>>(),
        });
        serde_json::to_string_pretty(&v).unwrap_or_default()
    }
}

/// Applies the elements in order.
pub fn run_circuit(
    c: &Circuit,
    reg: &ReducedRegister,
    initial: &StateVector,
) -> Result<StateVector> {
    if initial.dim() != REGISTER_DIM {
        return Err(Error::DimensionMismatch(format!(
            "state has dimension {}, register has {REGISTER_DIM}",
            initial.dim()
        )));
    }
    Ok(c
        .elements
        .iter()
        .fold(initial.clone(), |psi, e| psi.apply(&e.operator(reg))))
}

/// Conventions the measured circuit leaves open.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CircuitConventions {
    /// Nuclear state `(m_N, 2 m_C)` that picks up the CPhase sign.
    pub cphase_m_n: i32,
    pub cphase_two_m_c: i32,
    /// ¹³C state `2 m_C` on which C_nNOT_e flips the electron.
    pub cnot_control_two_m_c: i32,
    pub readout_spin: Spin,
}

impl Default for CircuitConventions {
    fn default() -> Self {
        Self {
            cphase_m_n: 1,
            cphase_two_m_c: -1,
            cnot_control_two_m_c: 1,
            readout_spin: Spin::Carbon,
        }
    }
}

/// Circuit factory bound to a spin system.
#[derive(Debug, Clone)]
pub struct Interferometer {
    pub sys: ControlSystem,
    pub conventions: CircuitConventions,
}

impl Interferometer {
    pub fn new(spin: &SpinSystem, conventions: CircuitConventions) -> Result<Self> {
        let sys = ControlSystem::new(spin)?;
        let me = Self { sys, conventions };
        me.initial_index()?;
        me.cphase_unitary()?;
        me.cnot_unitary()?;
        Ok(me)
    }

    pub fn reg(&self) -> &ReducedRegister {
        &self.sys.reg
    }

    fn initial_index(&self) -> Result<usize> {
        self.sys.reg.index_of(0, 1, -1).ok_or_else(|| {
            Error::InvalidParameter(
                "level selection must retain m_S = 0 and m_N = +1 for the interferometer".into(),
            )
        })
    }

    /// `|m_S = 0⟩|m_N = +1⟩|m_C = -1/2⟩`.
    pub fn initial_state(&self) -> StateVector {
        StateVector::basis(REGISTER_DIM, self.initial_index().expect("checked in new"))
    }

    /// `exp(-iθ O)` with `O` the `axis` operator of `spin`.
    pub fn rotation(&self, spin: Spin, axis: Axis, theta: f64) -> Element {
        let reg = &self.sys.reg;
        let op = match axis {
            Axis::X => reg.x_operator(spin),
            Axis::Y => reg.y_operator(spin),
            Axis::Z => reg.z_operator(spin),
        };
        let u = expm(op, C64::new(0.0, -theta)).expect("register operators are square");
        let axis_name = match axis {
            Axis::X => "X",
            Axis::Y => "Y",
            Axis::Z => "Z",
        };
        Element::Gate {
            name: format!("{axis_name}_{spin}({theta:.6})"),
            spins: vec![spin],
            unitary: u,
            shadowed: false,
        }
    }

    /// `I - 2 (I_e ⊗ P(m_N, m_C))`.
    pub fn cphase_unitary(&self) -> Result<ComplexMatrix> {
        let c = &self.conventions;
        let p = self.sys.proj.embedded(c.cphase_m_n, c.cphase_two_m_c)?;
        let mut u = ComplexMatrix::identity(REGISTER_DIM);
        u.add_scaled(p, C64::new(-2.0, 0.0));
        Ok(u)
    }

    /// `X_e ⊗ P_C(control) + I_e ⊗ P_C(other)`, with `X_e` the electron σ_x.
    pub fn cnot_unitary(&self) -> Result<ComplexMatrix> {
        let c = match self.conventions.cnot_control_two_m_c {
            1 => 0,
            -1 => 1,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "C_nNOT_e control 2 m_C must be ±1, got {other}"
                )))
            }
        };
        let mut u = ComplexMatrix::zeros(REGISTER_DIM, REGISTER_DIM);
        for n in 0..2 {
            for cc in 0..2 {
                let a = ReducedRegister::index(0, n, cc);
                let b = ReducedRegister::index(1, n, cc);
                if cc == c {
                    u[(a, b)] = C64::new(1.0, 0.0);
                    u[(b, a)] = C64::new(1.0, 0.0);
                } else {
                    u[(a, a)] = C64::new(1.0, 0.0);
                    u[(b, b)] = C64::new(1.0, 0.0);
                }
            }
        }
        Ok(u)
    }

    pub fn cphase(&self) -> Element {
        Element::Gate {
            name: CPHASE.into(),
            spins: vec![Spin::Nitrogen, Spin::Carbon],
            unitary: self.cphase_unitary().expect("checked in new"),
            shadowed: false,
        }
    }

    pub fn cnot_e(&self) -> Element {
        Element::Gate {
            name: CNOT_E.into(),
            spins: vec![Spin::Carbon, Spin::Electron],
            unitary: self.cnot_unitary().expect("checked in new"),
            shadowed: true,
        }
    }

    pub fn phase(&self, phi: f64) -> Element {
        Element::Phase {
            phi,
            spins: Spin::ALL.to_vec(),
        }
    }

    /// Reference Ramsey fringe on the ¹³C alone.
    pub fn one_spin_circuit(&self, phi: f64) -> Circuit {
        Circuit {
            n_spins: 1,
            elements: vec![
                self.rotation(Spin::Carbon, Axis::Y, -PI / 2.0),
                self.phase(phi),
                self.rotation(Spin::Carbon, Axis::X, PI / 2.0),
            ],
        }
    }

    pub fn two_spin_circuit(&self, phi: f64) -> Circuit {
        Circuit {
            n_spins: 2,
            elements: vec![
                self.rotation(Spin::Nitrogen, Axis::Y, PI / 2.0),
                self.rotation(Spin::Carbon, Axis::Y, -PI / 2.0),
                self.cphase(),
                self.rotation(Spin::Carbon, Axis::Y, PI / 2.0),
                self.phase(phi),
                self.rotation(Spin::Nitrogen, Axis::Y, PI / 2.0),
                self.cphase(),
                self.rotation(Spin::Carbon, Axis::X, PI / 2.0),
            ],
        }
    }

    pub fn three_spin_circuit(&self, phi: f64) -> Circuit {
        let mut c = self.two_spin_circuit(phi);
        c.n_spins = 3;
        let at = c
            .elements
            .iter()
            .position(|e| matches!(e, Element::Phase { .. }))
            .expect("two-spin circuit has a phase element");
        c.elements.insert(at + 1, self.cnot_e());
        c.elements.insert(at, self.cnot_e());
        c
    }

    pub fn circuit(&self, n_spins: usize, phi: f64) -> Result<Circuit> {
        match n_spins {
            1 => Ok(self.one_spin_circuit(phi)),
            2 => Ok(self.two_spin_circuit(phi)),
            3 => Ok(self.three_spin_circuit(phi)),
            n => Err(Error::InvalidParameter(format!(
                "circuits exist for 1 to 3 spins, not {n}"
            ))),
        }
    }

    /// Probability that `spin` is found in its initial level.
    pub fn readout_population(&self, state: &StateVector, spin: Spin) -> f64 {
        let init = self.initial_index().expect("checked in new");
        let shift = spin.shift();
        let bit = (init >> shift) & 1;
        state
            .probabilities()
            .iter()
            .enumerate()
            .filter(|(i, _)| (i >> shift) & 1 == bit)
            .map(|(_, p)| p)
            .sum::<f64>()
            .clamp(0.0, 1.0)
    }

    /// Readout population against φ. With a budget table the contrast is
    /// scaled by its overall fidelity about ½.
    pub fn fringe<F>(
        &self,
        builder: F,
        phases: &[f64],
        readout: Spin,
        vis_model: Option<&ErrorBudgetTable>,
    ) -> Result<FringeData>
    where
        F: Fn(f64) -> Result<Circuit> + Sync,
    {
        let v = vis_model.map(overall_fidelity).unwrap_or(1.0);
        let psi0 = self.initial_state();
        let pops: Vec<f64> = phases
            .par_iter()
            .map(|&phi| {
                let psi = run_circuit(&builder(phi)?, &self.sys.reg, &psi0)?;
                let p = self.readout_population(&psi, readout);
                Ok(0.5 + v * (p - 0.5))
            })
            .collect::<Result<_>>()?;
        FringeData::exact(phases.to_vec(), pops)
    }

    /// Fringe of the standard `n_spins` circuit on the configured readout spin.
    pub fn standard_fringe(
        &self,
        n_spins: usize,
        phases: &[f64],
        vis_model: Option<&ErrorBudgetTable>,
    ) -> Result<FringeData> {
        self.circuit(n_spins, 0.0)?;
        self.fringe(
            |phi| self.circuit(n_spins, phi),
            phases,
            self.conventions.readout_spin,
            vis_model,
        )
    }

    /// Ideal two-spin output state.
    pub fn ideal_state(&self, phi: f64) -> Result<StateVector> {
        run_circuit(&self.two_spin_circuit(phi), &self.sys.reg, &self.initial_state())
    }

    /// Mean over noise samples and φ of `|⟨ψ_id(φ)|ψ(φ)⟩|²`, where `ψ` uses
    /// the pulse propagator in place of both ideal CPhase gates.
    pub fn circuit_fidelity_under_noise(
        &self,
        phis: &[f64],
        cphase_pulse: &PulseSequence,
        noise: &NoiseModel,
        rng: &mut Rng,
    ) -> Result<f64> {
        if phis.is_empty() {
            return Err(Error::InvalidParameter("empty phase list".into()));
        }
        let samples = noise.ensemble(rng)?;
        let per_sample: Vec<f64> = samples
            .par_iter()
            .map(|s| {
                let u = propagate(cphase_pulse, &self.sys, s.delta_khz, s.delta1)?;
                self.substituted_fidelity(phis, &u)
            })
            .collect::<Result<_>>()?;
        Ok(per_sample
            .iter()
            .zip(&samples)
            .map(|(f, s)| s.weight * f)
            .sum())
    }

    /// Mean over φ of `|⟨ψ_id(φ)|ψ(φ)⟩|²` with both CPhase gates replaced by `u`.
    pub fn substituted_fidelity(&self, phis: &[f64], u: &ComplexMatrix) -> Result<f64> {
        if phis.is_empty() {
            return Err(Error::InvalidParameter("empty phase list".into()));
        }
        let gate = Element::Gate {
            name: CPHASE.into(),
            spins: vec![Spin::Nitrogen, Spin::Carbon],
            unitary: u.clone(),
            shadowed: false,
        };
        let psi0 = self.initial_state();
        let mut acc = 0.0;
        for &phi in phis {
            let ideal = self.two_spin_circuit(phi);
            let id = run_circuit(&ideal, &self.sys.reg, &psi0)?;
            let psi = run_circuit(&ideal.substitute(CPHASE, &gate), &self.sys.reg, &psi0)?;
            acc += id.inner(&psi).norm_sqr();
        }
        Ok(acc / phis.len() as f64)
    }
}

/// Reduced density matrix of one spin.
pub fn reduced_density(state: &StateVector, spin: Spin) -> ComplexMatrix {
    let shift = spin.shift();
    let mut rho = ComplexMatrix::zeros(2, 2);
    for i in 0..state.dim() {
        for j in 0..state.dim() {
            // same state of the other two spins
            if (i & !(1 << shift)) != (j & !(1 << shift)) {
                continue;
            }
            let (a, b) = ((i >> shift) & 1, (j >> shift) & 1);
            rho[(a, b)] += state.0[i] * state.0[j].conj();
        }
    }
    rho
}

/// Schmidt rank of the bipartition `spin | rest`.
pub fn schmidt_rank(state: &StateVector, spin: Spin, tol: f64) -> Result<usize> {
    let eig = eigh(&reduced_density(state, spin))?;
    Ok(numerical_rank(&eig.values, tol))
}

/// Fringe samples; `stderr` is zero for exact populations.
#[derive(Debug, Clone, PartialEq)]
pub struct FringeData {
    pub phases: Vec<f64>,
    pub populations: Vec<f64>,
    pub stderr: Vec<f64>,
    /// `None` for exact populations.
    pub shots_per_point: Option<u64>,
}

impl FringeData {
    pub fn exact(phases: Vec<f64>, populations: Vec<f64>) -> Result<Self> {
        let n = populations.len();
        let f = Self {
            phases,
            populations,
            stderr: vec![0.0; n],
            shots_per_point: None,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if self.phases.len() != self.populations.len() || self.stderr.len() != self.phases.len()
        {
            return Err(Error::DimensionMismatch(
                "fringe phases, populations and errors differ in length".into(),
            ));
        }
        if self.phases.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("fringe phases must increase strictly".into()));
        }
        if self
            .populations
            .iter()
            .any(|p| !(0.0..=1.0).contains(p))
        {
            return Err(Error::InvalidParameter("population outside [0, 1]".into()));
        }
        Ok(())
    }

    /// Binomial resampling with `shots` repetitions per point.
    pub fn with_shots(&self, shots: u64, rng: &mut Rng) -> Result<Self> {
        if shots == 0 {
            return Err(Error::InvalidParameter("shots must be positive".into()));
        }
        let mut pops = Vec::with_capacity(self.populations.len());
        let mut errs = Vec::with_capacity(self.populations.len());
        for &p in &self.populations {
            let k = rng.binomial(shots, p)?;
            let q = k as f64 / shots as f64;
            pops.push(q);
            errs.push((q * (1.0 - q) / shots as f64).sqrt());
        }
        Ok(Self {
            phases: self.phases.clone(),
            populations: pops,
            stderr: errs,
            shots_per_point: Some(shots),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("phi_rad,population,stderr\n");
        for ((phi, p), e) in self.phases.iter().zip(&self.populations).zip(&self.stderr) {
            s.push_str(&format!("{phi:.16e},{p:.16e},{e:.16e}\n"));
        }
        s
    }
}

/// `A cos(kφ + φ₀) + c` fitted by least squares, with standard errors from
/// the Jacobian covariance scaled by the residual variance.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityFit {
    /// `2A`.
    pub visibility: f64,
    pub visibility_err: f64,
    pub frequency: f64,
    pub frequency_err: f64,
    pub period: f64,
    pub period_err: f64,
    pub phase_offset: f64,
    pub phase_offset_err: f64,
    pub offset: f64,
    pub offset_err: f64,
    pub rss: f64,
}

fn solve_small(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-13 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Linear least squares of `a cos kφ + b sin kφ + c` at fixed `k`.
fn linear_fit(phases: &[f64], y: &[f64], k: f64) -> Option<([f64; 3], f64)> {
    let mut ata = vec![vec![0.0; 3]; 3];
    let mut aty = vec![0.0; 3];
    for (&p, &v) in phases.iter().zip(y) {
        let row = [(k * p).cos(), (k * p).sin(), 1.0];
        for i in 0..3 {
            aty[i] += row[i] * v;
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    let x = solve_small(ata, aty)?;
    let rss = phases
        .iter()
        .zip(y)
        .map(|(&p, &v)| {
            let r = v - (x[0] * (k * p).cos() + x[1] * (k * p).sin() + x[2]);
            r * r
        })
        .sum();
    Some(([x[0], x[1], x[2]], rss))
}

pub fn extract_visibility(f: &FringeData) -> Result<VisibilityFit> {
    f.validate()?;
    let n = f.phases.len();
    if n < 8 {
        return Err(Error::FitFailed(format!(
            "need at least 8 phase points, got {n}"
        )));
    }
    let (phases, y) = (&f.phases, &f.populations);
    let span = phases[n - 1] - phases[0];
    let min_dx = phases
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let k_lo = PI / span;
    let k_hi = PI / min_dx;
    let dk = 0.02 * 2.0 * PI / span;
    let steps = ((k_hi - k_lo) / dk).ceil().max(1.0) as usize;

    let rss_at = |k: f64| linear_fit(phases, y, k).map_or(f64::INFINITY, |(_, r)| r);
    let mut best = (f64::INFINITY, k_lo);
    for i in 0..=steps {
        let k = k_lo + (k_hi - k_lo) * i as f64 / steps as f64;
        let r = rss_at(k);
        if r < best.0 {
            best = (r, k);
        }
    }
    if !best.0.is_finite() {
        return Err(Error::FitFailed(
            "no frequency admits a well-conditioned linear fit".into(),
        ));
    }
    // golden-section refinement of the frequency
    let (mut a, mut b) = ((best.1 - dk).max(k_lo * 0.5), best.1 + dk);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
    let (mut fc, mut fd) = (rss_at(c), rss_at(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * b.abs() {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = rss_at(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = rss_at(d);
        }
    }
    let k = if fc < fd { c } else { d };
    let k = if rss_at(k) <= best.0 { k } else { best.1 };
    let ([ca, cb, cc], rss) = linear_fit(phases, y, k)
        .ok_or_else(|| Error::FitFailed(format!("degenerate linear fit at k = {k}")))?;
    let amp = ca.hypot(cb);
    if amp <= 1e-14 {
        return Err(Error::FitFailed(
            "fringe is flat; frequency and phase are undetermined".into(),
        ));
    }
    if span * k < 2.0 * PI * (1.0 - 1e-6) {
        return Err(Error::FitFailed(format!(
            "data span {span:.4} rad is shorter than the fitted period {:.4} rad",
            2.0 * PI / k
        )));
    }

    // covariance of (a, b, c, k)
    let mut jtj = vec![vec![0.0; 4]; 4];
    for &p in phases {
        let (cs, sn) = ((k * p).cos(), (k * p).sin());
        let row = [cs, sn, 1.0, p * (-ca * sn + cb * cs)];
        for i in 0..4 {
            for j in 0..4 {
                jtj[i][j] += row[i] * row[j];
            }
        }
    }
    let s2 = rss / (n - 4) as f64;
    let mut cov = vec![vec![0.0; 4]; 4];
    for col in 0..4 {
        let mut e = vec![0.0; 4];
        e[col] = 1.0;
        let x = solve_small(jtj.clone(), e)
            .ok_or_else(|| Error::FitFailed("singular fit covariance".into()))?;
        for row in 0..4 {
            cov[row][col] = x[row] * s2;
        }
    }
    let var = |g: [f64; 4]| -> f64 {
        let mut v = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                v += g[i] * cov[i][j] * g[j];
            }
        }
        v.max(0.0).sqrt()
    };
    let amp_err = var([ca / amp, cb / amp, 0.0, 0.0]);
    let phase_err = var([cb / (amp * amp), -ca / (amp * amp), 0.0, 0.0]);
    let k_err = cov[3][3].max(0.0).sqrt();
    Ok(VisibilityFit {
        visibility: 2.0 * amp,
        visibility_err: 2.0 * amp_err,
        frequency: k,
        frequency_err: k_err,
        period: 2.0 * PI / k,
        period_err: 2.0 * PI * k_err / (k * k),
        phase_offset: (-cb).atan2(ca),
        phase_offset_err: phase_err,
        offset: cc,
        offset_err: cov[2][2].max(0.0).sqrt(),
        rss,
    })
}

/// `n` equally spaced phases from `lo` to `hi` inclusive.
pub fn phase_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interferometer() -> Interferometer {
        Interferometer::new(&SpinSystem::default(), CircuitConventions::default()).unwrap()
    }

    #[test]
    fn two_spin_circuit_has_eight_unitary_elements() {
        let ifm = interferometer();
        let c = ifm.two_spin_circuit(0.3);
        assert_eq!(c.len(), 8);
        c.validate(ifm.reg()).unwrap();
    }

    #[test]
    fn removing_shadowed_gates_gives_two_spin_circuit() {
        let ifm = interferometer();
        for phi in [0.0, 0.7, -2.1] {
            let three = ifm.three_spin_circuit(phi);
            assert_eq!(three.len(), 10);
            assert_eq!(three.without_shadowed(), ifm.two_spin_circuit(phi));
        }
    }

    #[test]
    fn nuclei_form_ghz_before_phase() {
        let ifm = interferometer();
        let mut c = ifm.two_spin_circuit(0.0);
        c.elements.truncate(4);
        let psi = run_circuit(&c, ifm.reg(), &ifm.initial_state()).unwrap();
        let up = ifm.reg().index_of(0, 1, 1).unwrap();
        let down = ifm.reg().index_of(0, 0, -1).unwrap();
        assert!((psi.0[up].norm_sqr() - 0.5).abs() < 1e-14);
        assert!((psi.0[down].norm_sqr() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn zero_phase_output_is_separable() {
        let ifm = interferometer();
        let psi = ifm.ideal_state(0.0).unwrap();
        assert_eq!(schmidt_rank(&psi, Spin::Carbon, 1e-8).unwrap(), 1);
    }

    #[test]
    fn empty_circuit_and_pi_pulse() {
        let ifm = interferometer();
        let psi0 = ifm.initial_state();
        let out = run_circuit(&Circuit::empty(1), ifm.reg(), &psi0).unwrap();
        assert_eq!(out, psi0);
        let flip = Circuit {
            n_spins: 1,
            elements: vec![ifm.rotation(Spin::Carbon, Axis::X, PI)],
        };
        let out = run_circuit(&flip, ifm.reg(), &psi0).unwrap();
        assert!(ifm.readout_population(&out, Spin::Carbon) < 1e-14);
        assert!(run_circuit(&flip, ifm.reg(), &StateVector::basis(4, 0)).is_err());
    }

    #[test]
    fn ideal_fringes_have_unit_visibility_and_n_fold_frequency() {
        let ifm = interferometer();
        let phases = phase_grid(-PI, PI, 61);
        for n in 1..=3 {
            let f = ifm.standard_fringe(n, &phases, None).unwrap();
            let fit = extract_visibility(&f).unwrap();
            assert!((fit.visibility - 1.0).abs() < 1e-8, "{n}: {}", fit.visibility);
            assert!((fit.frequency - n as f64).abs() < 1e-8, "{n}: {}", fit.frequency);
        }
    }

    #[test]
    fn budget_scaled_fringe_closes_on_product() {
        let ifm = interferometer();
        let table = ErrorBudgetTable::two_spin();
        let f = ifm
            .standard_fringe(2, &phase_grid(-PI, PI, 41), Some(&table))
            .unwrap();
        let fit = extract_visibility(&f).unwrap();
        assert!((fit.visibility - overall_fidelity(&table)).abs() < 1e-6);
    }

    #[test]
    fn fit_recovers_constructed_sinusoids() {
        let phases = phase_grid(-PI, PI, 33);
        let pops: Vec<f64> = phases.iter().map(|p| 0.5 + 0.5 * (2.0 * p).cos()).collect();
        let fit = extract_visibility(&FringeData::exact(phases.clone(), pops).unwrap()).unwrap();
        assert!((fit.visibility - 1.0).abs() < 1e-10);
        let pops: Vec<f64> = phases
            .iter()
            .map(|p| 0.5 + 0.4345 * (2.0 * p + 0.3).cos())
            .collect();
        let fit = extract_visibility(&FringeData::exact(phases, pops).unwrap()).unwrap();
        assert!((fit.visibility - 0.869).abs() < 1e-10);
        assert!((fit.phase_offset - 0.3).abs() < 1e-8);
    }

    #[test]
    fn fit_rejects_bad_input() {
        let phases = phase_grid(0.0, 1.0, 5);
        let f = FringeData::exact(phases, vec![0.5; 5]).unwrap();
        assert!(matches!(extract_visibility(&f), Err(Error::FitFailed(_))));
        let flat = FringeData::exact(phase_grid(-PI, PI, 20), vec![0.5; 20]).unwrap();
        assert!(matches!(extract_visibility(&flat), Err(Error::FitFailed(_))));
        assert!(FringeData::exact(vec![0.0, 0.0], vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn ideal_substitution_has_unit_fidelity() {
        let ifm = interferometer();
        let phis: Vec<f64> = (0..9).map(|k| -PI + k as f64 * PI / 4.0).collect();
        let f = ifm.substituted_fidelity(&phis, &ifm.cphase_unitary().unwrap()).unwrap();
        assert!((f - 1.0).abs() < 1e-14);
        // an empty pulse is the identity, which is not CPhase
        let seq = PulseSequence::zeros(&[crate::spin::Channel::F1Real], 4, 20.0).unwrap();
        let f = ifm
            .circuit_fidelity_under_noise(&phis, &seq, &NoiseModel::noiseless(), &mut Rng::new(0))
            .unwrap();
        assert!(f < 0.99 && f >= 0.0);
    }
}
