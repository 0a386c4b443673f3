use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qc6::measure::outcome_probabilities;
use qc6::protocols::*;
use qc6::qstate::{c6, fidelity_up_to_phase, Label, SecretState};
use qc6::synth::{synthesize_correction, CorrectionProblem, Gate, LocalOp};

fn haar(seed: u64) -> SecretState {
    SecretState::haar(&mut ChaCha8Rng::seed_from_u64(seed))
}

fn pauli() -> impl Strategy<Value = Option<Gate>> {
    prop_oneof![Just(None), Just(Some(Gate::X)), Just(Some(Gate::Y)), Just(Some(Gate::Z))]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn outcome_probabilities_sum_to_one(seed in any::<u64>()) {
        let setup = ProtocolSuite::embedded().teleport_setup().unwrap();
        let joint = haar(seed).ket(Label::list(&["a", "b"])).unwrap().tensor(&c6()).unwrap();
        let p = outcome_probabilities(&joint, &setup.basis).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        prop_assert!(p.iter().all(|&x| x >= -1e-12));
    }

    #[test]
    fn fidelity_is_a_probability(a in any::<u64>(), b in any::<u64>()) {
        let l = Label::list(&["3", "4"]);
        let f = fidelity_up_to_phase(&haar(a).ket(l.clone()).unwrap(), &haar(b).ket(l).unwrap()).unwrap();
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&f));
    }

    #[test]
    fn teleportation_is_perfect_for_any_seed(secret in any::<u64>(), seed in any::<u64>()) {
        let t = teleport(&haar(secret), &mut rng_for(seed, 0)).unwrap();
        prop_assert!((t.fidelity - 1.0).abs() < 1e-10);
        prop_assert_eq!(t.cbits, 4);
    }

    #[test]
    fn synthesis_recovers_pauli_pairs(p0 in pauli(), p1 in pauli(), seed in any::<u64>()) {
        let l = Label::list(&["3", "4"]);
        let target = haar(seed).ket(l.clone()).unwrap();
        let applied = LocalOp::paulis(p0, p1);
        // Residual = P†·target, so the correction must be P (up to phase).
        let residual = applied.apply(&target, &l).unwrap();
        let problem = CorrectionProblem::single(&residual, &target).unwrap();
        let (op, _) = synthesize_correction(&problem).unwrap();
        prop_assert!(problem.verify(&op));
        let back = op.apply(&residual, &l).unwrap();
        prop_assert!((fidelity_up_to_phase(&back, &target).unwrap() - 1.0).abs() < 1e-9);
    }
}
