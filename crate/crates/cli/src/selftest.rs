// Copyright 2026 The nvmetro Authors
// SPDX-License-Identifier: Apache-2.0

//! Smoke tests over closed-form cases of every module. Each check is cheap
//! and deterministic; the whole set runs in well under a second.

use std::f64::consts::PI;

use nvmetro_core::budget::{
    chopped_survival, nuclear_polarization_bound, nv_negative_fidelity, overall_fidelity,
    BudgetEntry, ErrorBudgetTable,
};
use nvmetro_core::grape::{
    gate_fidelity, grape_optimize, propagate, ControlSystem, GateTarget, GrapeOptions, NoiseModel,
};
use nvmetro_core::interferometer::{extract_visibility, phase_grid, Interferometer};
use nvmetro_core::metrology::{
    cramer_rao_bound, entanglement_witness, qfi_from_visibility, qfi_generator, reference_state,
    ReferenceState,
};
use nvmetro_core::numerics::{expm, gaussian_sample, kron, ComplexMatrix, Rng, C64};
use nvmetro_core::pulse::PulseSequence;
use nvmetro_core::spin::{full_hamiltonian, Channel, SpinSystem};
use nvmetro_core::stats::{magnetic_phase_jitter, sample_shots, JitterModel};
use nvmetro_core::Result;

pub struct Check {
    pub module: &'static str,
    pub name: &'static str,
    pub result: Result<bool>,
}

const TOL: f64 = 1e-12;
/// Eigen-based propagators and fits round at this level.
const LOOSE: f64 = 1e-8;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

const MW: [Channel; 4] = [Channel::F1Real, Channel::F1Imag, Channel::F2Real, Channel::F2Imag];

pub fn run_all() -> Vec<Check> {
    let mut v = Vec::new();
    let mut add = |module, name, result| v.push(Check { module, name, result });

    add("numerics", "kron of identities is identity", (|| {
        let i2 = ComplexMatrix::identity(2);
        Ok(kron(&i2, &i2).max_abs_diff(&ComplexMatrix::identity(4)) == 0.0)
    })());
    add("numerics", "exp of zero is identity", (|| {
        let u = expm(&ComplexMatrix::zeros(5, 5), C64::new(0.0, -1.0))?;
        Ok(u.max_abs_diff(&ComplexMatrix::identity(5)) <= TOL)
    })());
    add("numerics", "zero-width Gaussian returns the mean", (|| {
        let x = gaussian_sample(&mut Rng::new(0), 3.5, 0.0, 10)?;
        Ok(x.iter().all(|&v| v == 3.5))
    })());

    add("spin-model", "full Hamiltonian is Hermitian", (|| {
        Ok(full_hamiltonian(&SpinSystem::default()).is_hermitian(TOL))
    })());

    add("pulse-grape", "zero pulse propagates to identity", (|| {
        let sys = ControlSystem::new(&SpinSystem::default())?;
        let seq = PulseSequence::zeros(&Channel::ALL, 10, 20.0)?;
        Ok(propagate(&seq, &sys, 0.0, 0.0)?.max_abs_diff(&ComplexMatrix::identity(8)) <= LOOSE)
    })());
    add("pulse-grape", "MW amplitude scaled to zero is identity", (|| {
        let sys = ControlSystem::new(&SpinSystem::default())?;
        let seq = PulseSequence::random(&MW, 10, 20.0, 300.0, &mut Rng::new(1))?;
        Ok(propagate(&seq, &sys, 0.0, -1.0)?.max_abs_diff(&ComplexMatrix::identity(8)) <= LOOSE)
    })());
    add("pulse-grape", "fidelity ignores global phase", (|| {
        let sys = ControlSystem::new(&SpinSystem::default())?;
        let t = GateTarget::cphase(&sys)?;
        let u = t.unitary.scale(C64::from_polar(1.0, 0.7));
        Ok(close(gate_fidelity(&t.unitary, &t)?, 1.0, TOL) && close(gate_fidelity(&u, &t)?, 1.0, TOL))
    })());
    add("pulse-grape", "one flipped sign on 8 states gives 0.75", (|| {
        let t = GateTarget::identity(8);
        let mut d = vec![1.0; 8];
        d[3] = -1.0;
        Ok(close(gate_fidelity(&ComplexMatrix::from_real_diag(&d), &t)?, 0.75, TOL))
    })());
    add("pulse-grape", "identity target from zero pulse converges at once", (|| {
        let sys = ControlSystem::new(&SpinSystem::default())?;
        let seq = PulseSequence::zeros(&MW, 10, 20.0)?;
        let r = grape_optimize(
            &seq,
            &sys,
            &GateTarget::identity(8),
            &NoiseModel::noiseless(),
            &mut Rng::new(0),
            &GrapeOptions::default(),
        )?;
        Ok(r.iterations == 0 && close(r.fidelity, 1.0, LOOSE))
    })());

    add("interferometer", "ideal fringes have unit visibility", (|| {
        let ifm = Interferometer::new(&SpinSystem::default(), Default::default())?;
        let phases = phase_grid(-PI, PI, 41);
        for n in 1..=3 {
            let fit = extract_visibility(&ifm.standard_fringe(n, &phases, None)?)?;
            if !close(fit.visibility, 1.0, LOOSE) || !close(fit.frequency, n as f64, LOOSE) {
                return Ok(false);
            }
        }
        Ok(true)
    })());
    add("interferometer", "three-spin circuit minus shadowed gates is two-spin", (|| {
        let ifm = Interferometer::new(&SpinSystem::default(), Default::default())?;
        let reg = ifm.reg();
        let a = ifm.three_spin_circuit(0.3).without_shadowed().unitary(reg);
        let b = ifm.two_spin_circuit(0.3).unitary(reg);
        Ok(a.max_abs_diff(&b) <= TOL)
    })());

    add("metrology", "CSS and GHZ reach SQL and HL", (|| {
        let z = [0.0, 0.0, 1.0];
        let css = reference_state(ReferenceState::Css { alpha: PI / 2.0, phi: 0.0 }, 4)?;
        let ghz = reference_state(ReferenceState::Ghz, 4)?;
        Ok(close(qfi_generator(&css, z)?, 4.0, LOOSE) && close(qfi_generator(&ghz, z)?, 16.0, LOOSE))
    })());
    add("metrology", "witness needs QFI above N", Ok(!entanglement_witness(3.0, 3) && entanglement_witness(3.5, 3)));
    add("metrology", "Cramér-Rao of F = 4, one shot", cramer_rao_bound(4.0, 1).map(|v| close(v, 0.25, TOL)));
    add("metrology", "ideal two-spin gain is 10 log10 2 dB", (|| {
        let (q, db) = qfi_from_visibility(1.0, 2)?;
        Ok(close(q, 4.0, TOL) && close(db, 10.0 * 2f64.log10(), TOL))
    })());

    add("stats-mc", "certain outcomes", (|| {
        let mut rng = Rng::new(5);
        Ok(sample_shots(0.0, 200, &mut rng)? == 0 && sample_shots(1.0, 200, &mut rng)? == 200)
    })());
    add("stats-mc", "field jitter is linear", {
        let j = JitterModel::default();
        Ok(magnetic_phase_jitter(0.0, &j) == 0.0
            && close(magnetic_phase_jitter(0.01, &j), 0.015, TOL)
            && close(magnetic_phase_jitter(0.02, &j), 0.030, TOL))
    });

    add("budget", "empty table multiplies to one", ErrorBudgetTable::new(2, vec![]).map(|t| overall_fidelity(&t) == 1.0));
    add("budget", "single squared entry", (|| {
        let t = ErrorBudgetTable::new(2, vec![BudgetEntry::new("cphase", 0.995, 0.0, 2)])?;
        Ok(close(overall_fidelity(&t), 0.990025, TOL))
    })());
    add("budget", "fidelity above one is rejected", Ok(ErrorBudgetTable::new(2, vec![BudgetEntry::new("bad", 1.2, 0.0, 1)]).is_err()));
    add("budget", "polarization bound end points", (|| {
        Ok(close(nuclear_polarization_bound(1.0)?, 1.0, TOL) && close(nuclear_polarization_bound(0.0)?, 0.0, TOL))
    })());
    add("budget", "equal survival inputs give one", chopped_survival(0.98, 0.98).map(|v| close(v, 1.0, TOL)));
    add("budget", "no NV0 leaves only ionization", nv_negative_fidelity(0.01, 0.0, 30.0).map(|v| close(v, 0.99, TOL)));

    v
}

pub fn report(checks: &[Check]) -> (String, usize) {
    let mut s = String::new();
    let mut failed = 0;
    for c in checks {
        let (tag, note) = match &c.result {
            Ok(true) => ("PASS", String::new()),
            Ok(false) => ("FAIL", String::new()),
            Err(e) => ("FAIL", format!(" ({e})")),
        };
        failed += usize::from(tag == "FAIL");
        s.push_str(&format!("{tag} {:<15} {}{note}\n", c.module, c.name));
    }
    s.push_str(&format!("{} checks, {failed} failed\n", checks.len()));
    (s, failed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_smoke_checks_pass() {
        let checks = run_all();
        let (text, failed) = report(&checks);
        assert_eq!(failed, 0, "{text}");
    }
}
