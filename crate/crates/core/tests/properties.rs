// Copyright 2026 The nvmetro Authors
// SPDX-License-Identifier: Apache-2.0

use std::f64::consts::PI;

use nvmetro_core::budget::{
    overall_fidelity, predict_visibility, BudgetEntry, ErrorBudgetTable, VisibilityModel,
};
use nvmetro_core::grape::{gate_fidelity, propagate, ControlSystem, GateTarget};
use nvmetro_core::metrology::{
    fisher_information, one_axis_twisted, qfi_from_visibility, qfi_generator, qfi_pure,
    reference_state, squeezing, CollectiveSpinState, ParamDistribution, ReferenceState,
    ScalingLaw,
};
use nvmetro_core::numerics::{eigh, expm, kron, ComplexMatrix, Rng, StateVector, C64, I};
use nvmetro_core::pulse::PulseSequence;
use nvmetro_core::spin::{Channel, SpinSystem};
use nvmetro_core::stats::FringeModel;
use proptest::prelude::*;

fn random_hermitian(dim: usize, rng: &mut Rng) -> ComplexMatrix {
    let mut h = ComplexMatrix::zeros(dim, dim);
    for r in 0..dim {
        h[(r, r)] = C64::new(rng.standard_normal(), 0.0);
        for c in r + 1..dim {
            let z = C64::new(rng.standard_normal(), rng.standard_normal());
            h[(r, c)] = z;
            h[(c, r)] = z.conj();
        }
    }
    h
}

fn random_unitary(dim: usize, rng: &mut Rng) -> ComplexMatrix {
    eigh(&random_hermitian(dim, rng)).unwrap().vectors
}

fn random_direction(rng: &mut Rng) -> [f64; 3] {
    loop {
        let v = [rng.standard_normal(), rng.standard_normal(), rng.standard_normal()];
        if v.iter().map(|x| x * x).sum::<f64>() > 1e-6 {
            return v;
        }
    }
}

fn random_state(n: usize, rng: &mut Rng) -> CollectiveSpinState {
    let amps: Vec<C64> = (0..1 << n)
        .map(|_| C64::new(rng.standard_normal(), rng.standard_normal()))
        .collect();
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    CollectiveSpinState::new(n, amps.into_iter().map(|a| a / norm).collect()).unwrap()
}

fn random_product(n: usize, rng: &mut Rng) -> CollectiveSpinState {
    let factors: Vec<(C64, C64)> = (0..n)
        .map(|_| {
            (
                C64::new(rng.standard_normal(), rng.standard_normal()),
                C64::new(rng.standard_normal(), rng.standard_normal()),
            )
        })
        .collect();
    CollectiveSpinState::product(&factors).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn unitary_evolution_preserves_norm(seed in any::<u64>(), dim in 2usize..10, t in -3.0f64..3.0) {
        let mut rng = Rng::new(seed);
        let u = expm(&random_hermitian(dim, &mut rng), -I * t).unwrap();
        prop_assert!(u.unitarity_error() < 1e-10);
        let psi = StateVector((0..dim).map(|_| C64::new(rng.standard_normal(), rng.standard_normal())).collect()).normalized();
        prop_assert!((psi.apply(&u).norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn kron_mixed_product(seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let (a, b) = (random_hermitian(2, &mut rng), random_hermitian(3, &mut rng));
        let (c, d) = (random_hermitian(2, &mut rng), random_hermitian(3, &mut rng));
        let lhs = &kron(&a, &b) * &kron(&c, &d);
        let rhs = kron(&(&a * &c), &(&b * &d));
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-10 * (1.0 + lhs.max_abs()));
    }

    #[test]
    fn gate_fidelity_ignores_global_phase(seed in any::<u64>(), theta in -PI..PI) {
        let mut rng = Rng::new(seed);
        let u = random_unitary(8, &mut rng);
        let target = GateTarget::full(random_unitary(8, &mut rng), "random").unwrap();
        let f = gate_fidelity(&u, &target).unwrap();
        let g = gate_fidelity(&u.scale(C64::from_polar(1.0, theta)), &target).unwrap();
        prop_assert!((f - g).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&f));
        let own = GateTarget::full(u.scale(C64::from_polar(1.0, theta)), "self").unwrap();
        prop_assert!((gate_fidelity(&u, &own).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fringe_inversion_round_trips(phi in -0.7f64..0.7, vis in 0.1f64..1.0, n in 1usize..4) {
        let m = FringeModel { visibility: vis, n_spins: n, ..FringeModel::default() };
        // the branch around the working point spans |Nφ| < π/2
        prop_assume!((n as f64 * phi).abs() < PI / 2.0 - 1e-3);
        let e = m.estimate(m.probability(phi)).unwrap();
        prop_assert!(!e.clamped);
        prop_assert!((e.phi - phi).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn propagators_are_unitary(seed in any::<u64>(), delta in -100.0f64..100.0, delta1 in -0.05f64..0.05) {
        let sys = ControlSystem::new(&SpinSystem::default()).unwrap();
        let mut rng = Rng::new(seed);
        let seq = PulseSequence::random(&Channel::ALL, 24, 20.0, 500.0, &mut rng).unwrap();
        let u = propagate(&seq, &sys, delta, delta1).unwrap();
        prop_assert!(u.unitarity_error() < 1e-9);
    }

    #[test]
    fn generator_qfi_is_pure_qfi_of_derivative(seed in any::<u64>(), n in 1usize..6) {
        let mut rng = Rng::new(seed);
        let psi = random_state(n, &mut rng);
        let dir = random_direction(&mut rng);
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        let unit = [dir[0] / norm, dir[1] / norm, dir[2] / norm];
        let dpsi = psi.apply_j(unit).scaled(-I);
        let a = qfi_generator(&psi, dir).unwrap();
        let b = qfi_pure(&psi, &dpsi).unwrap();
        prop_assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }

    #[test]
    fn qfi_obeys_heisenberg_limit(seed in any::<u64>(), n in 1usize..7) {
        let mut rng = Rng::new(seed);
        let psi = random_state(n, &mut rng);
        for _ in 0..20 {
            let q = qfi_generator(&psi, random_direction(&mut rng)).unwrap();
            prop_assert!(q <= (n * n) as f64 + 1e-9);
        }
    }

    #[test]
    fn product_states_obey_sql(seed in any::<u64>(), n in 1usize..7) {
        let mut rng = Rng::new(seed);
        let psi = random_product(n, &mut rng);
        for _ in 0..100 {
            let q = qfi_generator(&psi, random_direction(&mut rng)).unwrap();
            prop_assert!(q <= n as f64 + 1e-9, "QFI {q} for {n} product qubits");
        }
    }

    #[test]
    fn squeezed_states_beat_ramsey_bound(n in 2usize..9, mu in 0.01f64..0.4) {
        let psi = one_axis_twisted(n, mu).unwrap();
        let s = squeezing(&psi).unwrap();
        let q = qfi_generator(&psi, s.sensitive_direction).unwrap();
        prop_assert!(q >= n as f64 / s.xi_r2 - 1e-9, "QFI {q}, N/ξ² {}", n as f64 / s.xi_r2);
    }

    #[test]
    fn budget_is_monotone(
        fids in prop::collection::vec(0.5f64..1.0, 1..8),
        powers in prop::collection::vec(1u32..3, 8),
        row in 0usize..8,
        drop in 0.0f64..0.4,
    ) {
        let entries: Vec<BudgetEntry> = fids
            .iter()
            .zip(&powers)
            .enumerate()
            .map(|(i, (&f, &p))| BudgetEntry::new(&format!("row{i}"), f, 0.0, p))
            .collect();
        let base = ErrorBudgetTable::new(2, entries.clone()).unwrap();
        let row = row % entries.len();
        let mut worse = entries;
        worse[row].fidelity *= 1.0 - drop;
        let worse = ErrorBudgetTable::new(2, worse).unwrap();
        let (a, b) = (overall_fidelity(&base), overall_fidelity(&worse));
        prop_assert!(b <= a + 1e-15);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn visibility_qfi_closes_on_scaling_law(one in 0.5f64..1.0, per in 0.8f64..1.0, n in 1usize..40) {
        let model = VisibilityModel::Geometric { one_spin: one, per_spin: per };
        let law = ScalingLaw { one_spin_visibility: one, per_spin_factor: per };
        let v = predict_visibility(&model, n).unwrap();
        let (q, _) = qfi_from_visibility(v, n).unwrap();
        let s = law.predict(n).unwrap();
        prop_assert!((q - s).abs() <= 1e-12 * s.max(1.0));
    }
}

/// Projective measurement of `exp(-iθ J_n)|ψ⟩` in the basis given by the
/// columns of `basis`.
fn rotated_readout(psi: CollectiveSpinState, dir: [f64; 3], basis: ComplexMatrix) -> ParamDistribution {
    ParamDistribution::new(move |theta| {
        let amps = psi.rotated(dir, theta);
        let v = amps.amplitudes();
        (0..basis.cols())
            .map(|k| {
                (0..basis.rows())
                    .map(|r| basis[(r, k)].conj() * v[r])
                    .sum::<C64>()
                    .norm_sqr()
            })
            .collect()
    })
}

#[test]
fn classical_fisher_never_exceeds_quantum_fisher() {
    let mut rng = Rng::new(20);
    let dir = [0.0, 0.0, 1.0];
    let states = [
        reference_state(ReferenceState::Ghz, 2).unwrap(),
        reference_state(ReferenceState::Css { alpha: PI / 2.0, phi: 0.3 }, 2).unwrap(),
        random_state(2, &mut rng),
        random_state(2, &mut rng),
    ];
    for psi in states {
        let q = qfi_generator(&psi, dir).unwrap();
        for _ in 0..50 {
            let basis = random_unitary(4, &mut rng);
            let f = fisher_information(&rotated_readout(psi.clone(), dir, basis), 0.0).unwrap();
            assert!(f <= q + 1e-6, "FI {f} above QFI {q}");
        }
    }
}
