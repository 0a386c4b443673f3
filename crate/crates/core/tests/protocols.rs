use std::collections::BTreeSet;

use approx::assert_abs_diff_eq;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qc6::measure::{measure, project};
use qc6::protocols::*;
use qc6::qstate::{bitstring, c6, fidelity_up_to_phase, Ket, Label, SecretState, ONE};
use qc6::tables::{outcome_kets, result_kets};
use qc6::Error;

fn suite() -> &'static ProtocolSuite {
    ProtocolSuite::embedded()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn final_ket(t: &ProtocolTranscript) -> Ket {
    let amps = t.final_state.amplitudes.iter().map(|[re, im]| qc6::C64::new(*re, *im)).collect();
    Ket::new(t.final_state.labels.clone(), amps).unwrap()
}

#[test]
fn teleport_basis_payload_arrives_as_00() {
    let t = teleport(&SecretState::basis(0), &mut rng(1)).unwrap();
    assert_abs_diff_eq!(t.fidelity, 1.0, epsilon = 1e-10);
    let k = final_ket(&t);
    assert_abs_diff_eq!(k.amplitude("00").unwrap().norm(), 1.0, epsilon = 1e-10);
}

#[test]
fn teleport_uniform_secret() {
    let s = SecretState::from_real([0.5; 4]).unwrap();
    for seed in 0..20 {
        let t = teleport(&s, &mut rng(seed)).unwrap();
        assert_abs_diff_eq!(t.fidelity, 1.0, epsilon = 1e-10);
        assert_eq!(t.cbits, 4);
        assert_eq!(t.messages.len(), 1);
    }
}

#[test]
fn teleport_row1_residual_and_correction() {
    let setup = suite().teleport_setup().unwrap();
    assert_eq!(setup.alice, Label::list(&["b", "a", "1", "6", "2", "5"]));
    assert_eq!(setup.bob, Label::list(&["3", "4"]));
    let s = SecretState::haar(&mut rng(3));
    let joint = s.ket(Label::list(&["a", "b"])).unwrap().tensor(&c6()).unwrap();
    let r = project(&joint, &setup.basis.vectors()[0]).unwrap().residual.permute(&setup.bob).unwrap();
    let printed = Ket::from_terms_with_labels(
        setup.bob.clone(),
        &[(s.alpha, "00"), (s.mu, "01"), (s.gamma, "10"), (-s.beta, "11")],
        true,
    )
    .unwrap();
    assert_abs_diff_eq!(fidelity_up_to_phase(&r, &printed).unwrap(), 1.0, epsilon = 1e-10);
    // diag(1, 1, 1, -1) undoes the sign on β.
    assert_eq!(setup.corrections[0].to_string(), "CZ");
}

#[test]
fn corrections_are_unitary() {
    let mut ops: Vec<&qc6::LocalOp> = suite().teleport_setup().unwrap().corrections.iter().collect();
    for p in [Protocol::Qis1, Protocol::Qis2] {
        ops.extend(suite().qis_setup(p).unwrap().corrections.iter().flatten());
    }
    ops.extend(&suite().rsp_setup().unwrap().corrections);
    assert_eq!(ops.len(), 16 + 64 + 32 + 4);
    for op in ops {
        assert!(op.unitarity_error() <= 1e-12, "{op}");
    }
}

// Exact p = 1/16 per outcome; 16000 draws land within 5σ of 1000.
#[test]
fn teleport_outcome_histogram_is_uniform() {
    let setup = suite().teleport_setup().unwrap();
    let s = SecretState::haar(&mut rng(4));
    let joint = s.ket(Label::list(&["a", "b"])).unwrap().tensor(&c6()).unwrap();
    let mut counts = [0usize; 64];
    let mut r = rng(16000);
    for _ in 0..16000 {
        counts[measure(&joint, &setup.basis, &mut r).unwrap().0] += 1;
    }
    let sigma = (16000.0 * (1.0 / 16.0) * (15.0 / 16.0) as f64).sqrt();
    for (k, &c) in counts.iter().enumerate() {
        if k < 16 {
            assert!((c as f64 - 1000.0).abs() <= 5.0 * sigma, "outcome {k}: {c}");
        } else {
            assert_eq!(c, 0, "completion outcome {k} fired");
        }
    }
}

#[test]
fn outcome_probabilities_are_secret_independent() {
    let mut r = rng(8);
    for _ in 0..1000 {
        let s = SecretState::haar(&mut r);
        for p in [Protocol::Teleport, Protocol::Qis1, Protocol::Qis2] {
            let probs = suite().alice_probabilities(p, &Payload::Secret(s)).unwrap();
            for &x in &probs[..16] {
                assert_abs_diff_eq!(x, 1.0 / 16.0, epsilon = 1e-10);
            }
        }
    }
}

#[test]
fn bob_outcomes_are_uniform_in_splitting_protocols() {
    let s = SecretState::haar(&mut rng(9));
    for (p, n) in [(Protocol::Qis1, 4), (Protocol::Qis2, 2)] {
        for row in suite().bob_conditional_probabilities(p, &s).unwrap() {
            for &x in &row[..n] {
                assert_abs_diff_eq!(x, 1.0 / n as f64, epsilon = 1e-10);
            }
        }
    }
}

#[test]
fn qis1_basis_secret() {
    let t = qis1(&SecretState::basis(3), &mut rng(2)).unwrap();
    assert_abs_diff_eq!(t.fidelity, 1.0, epsilon = 1e-10);
    assert_abs_diff_eq!(final_ket(&t).amplitude("11").unwrap().norm(), 1.0, epsilon = 1e-10);
    assert_eq!(t.cbits, 6);
    assert_eq!(t.messages.iter().map(|m| m.cbits).collect::<Vec<_>>(), vec![4, 2]);
}

#[test]
fn qis_random_secrets() {
    let mut r = rng(10);
    for p in [Protocol::Qis1, Protocol::Qis2] {
        let mut total = 0.0;
        for _ in 0..100 {
            let s = SecretState::haar(&mut r);
            let t = suite().qis(p, &s, &mut r).unwrap();
            assert_eq!(t.cbits, p.cbit_budget());
            total += t.fidelity;
        }
        assert_abs_diff_eq!(total / 100.0, 1.0, epsilon = 1e-10);
    }
}

#[test]
fn qis2_basis_secret_and_one_bit_from_bob() {
    let t = qis2(&SecretState::basis(0), &mut rng(5)).unwrap();
    assert_abs_diff_eq!(t.fidelity, 1.0, epsilon = 1e-10);
    assert_eq!(t.messages.iter().map(|m| m.cbits).collect::<Vec<_>>(), vec![4, 1]);
}

// Bob's first follow-up outcome leaves Charlie with the printed row-1 state.
#[test]
fn follow_up_row1_states() {
    for (p, table) in [(Protocol::Qis1, "3"), (Protocol::Qis2, "5")] {
        let setup = suite().qis_setup(p).unwrap();
        let s = SecretState::haar(&mut rng(11));
        let joint = s.ket(Label::list(&["a", "b"])).unwrap().tensor(&c6()).unwrap();
        let r1 = project(&joint, &setup.alice_basis.vectors()[0]).unwrap().residual.permute(&setup.receivers).unwrap();
        let r2 = project(&r1, &setup.bob_basis.vectors()[0]).unwrap().residual.permute(&setup.charlie).unwrap();
        let t = suite().tables.get(table).unwrap();
        let printed = result_kets(t, &s, &setup.charlie).unwrap().remove(0);
        assert_abs_diff_eq!(fidelity_up_to_phase(&r2, &printed).unwrap(), 1.0, epsilon = 1e-10);
        // The follow-up measurement ket is the uniform superposition.
        let k = outcome_kets(t, &s, &setup.bob).unwrap().remove(0);
        for (_, a) in k.support() {
            assert_abs_diff_eq!(a.norm(), (1.0 / k.dim() as f64).sqrt(), epsilon = 1e-12);
        }
    }
}

#[test]
fn rsp_examples() {
    let t = rsp(0.0, &mut rng(1)).unwrap();
    assert_abs_diff_eq!(t.fidelity, 1.0, epsilon = 1e-10);
    assert_eq!(t.cbits, 2);
    let plus = Ket::from_terms_with_labels(Label::list(&["3", "4"]), &[(ONE, "00"), (ONE, "01"), (ONE, "10"), (ONE, "11")], true)
        .unwrap();
    assert_abs_diff_eq!(fidelity_up_to_phase(&final_ket(&t), &plus).unwrap(), 1.0, epsilon = 1e-10);
    for j in 0..32 {
        let phi = j as f64 * std::f64::consts::TAU / 32.0;
        let probs = suite().alice_probabilities(Protocol::Rsp, &Payload::Phi(phi)).unwrap();
        for &p in &probs[..4] {
            assert_abs_diff_eq!(p, 0.25, epsilon = 1e-10);
        }
        assert!(probs[4..].iter().all(|&p| p <= 1e-12));
    }
}

#[test]
fn rsp_row1_residual() {
    let setup = suite().rsp_setup().unwrap();
    let phi = 1.0471975512;
    let s = SecretState::equatorial(phi);
    let b = setup.basis(phi).unwrap();
    assert_eq!(b.vectors().len(), 16);
    assert!(b.gram().unwrap().pass);
    let r = project(&c6(), &b.vectors()[0]).unwrap().residual.permute(&setup.bob).unwrap();
    let printed = Ket::from_terms_with_labels(
        setup.bob.clone(),
        &[(s.alpha, "00"), (s.mu, "01"), (s.gamma, "10"), (-s.beta, "11")],
        true,
    )
    .unwrap();
    assert_abs_diff_eq!(fidelity_up_to_phase(&r, &printed).unwrap(), 1.0, epsilon = 1e-10);
}

#[test]
fn dense_coding_examples() {
    assert_abs_diff_eq!(fidelity_up_to_phase(&dense_encode(DenseMessage::new(0, 0, 0).unwrap()), &c6()).unwrap(), 1.0);
    // X on qubit 4 flips the fourth bit of every term.
    let k = dense_encode(DenseMessage::new(0, 0, 1).unwrap());
    let support: BTreeSet<String> = k.support().map(|(i, _)| bitstring(i, 6)).collect();
    let expect: BTreeSet<String> = ["000100", "000011", "111100", "111011"].map(String::from).into();
    assert_eq!(support, expect);
    for m in DenseMessage::all() {
        assert_eq!(dense_decode(&dense_encode(m)).unwrap(), m);
        let t = suite().dense(m).unwrap();
        assert_eq!(t.qubits_sent, 3);
        assert_eq!(t.message, Some(m));
    }
    assert_eq!(dense_decode(&c6()).unwrap(), DenseMessage::new(0, 0, 0).unwrap());
    let product = Ket::basis(Label::numbered(6), 0).unwrap();
    match dense_decode(&product) {
        Err(Error::NotACodeword(f)) => assert!(f <= 0.25 + 1e-12),
        other => panic!("expected NotACodeword, got {other:?}"),
    }
}

#[test]
fn capacity_examples() {
    assert_abs_diff_eq!(capacity(&c6(), &Label::list(&DENSE_ALICE)).unwrap(), 5.0, epsilon = 1e-9);
    let bell = Ket::from_terms(&[(ONE, "00"), (ONE, "11")], true).unwrap();
    assert_abs_diff_eq!(capacity(&bell, &Label::list(&["1"])).unwrap(), 2.0, epsilon = 1e-9);
    let product = Ket::basis(Label::numbered(6), 0).unwrap();
    assert_abs_diff_eq!(capacity(&product, &Label::list(&DENSE_ALICE)).unwrap(), 3.0, epsilon = 1e-9);
    assert!(matches!(capacity(&c6(), &[]), Err(Error::BadPartition)));
}

#[test]
fn solo_guess_examples() {
    for p in [Protocol::Qis1, Protocol::Qis2] {
        let f = solo_guess_fidelity(p, &SecretState::basis(0)).unwrap();
        assert!((0.0..=1.0 + 1e-12).contains(&f));
        let g = solo_guess_fidelity(p, &SecretState::from_real([0.5, 0.5, -0.5, 0.5]).unwrap()).unwrap();
        assert!(g < 1.0 - 1e-6, "{p}: {g}");
    }
    // A computational-basis secret carries no phase, so Charlie can hold it exactly.
    let best = [Protocol::Qis1, Protocol::Qis2]
        .iter()
        .map(|&p| solo_guess_fidelity(p, &SecretState::basis(0)).unwrap())
        .fold(0.0, f64::max);
    assert_abs_diff_eq!(best, 1.0, epsilon = 1e-10);
}

#[test]
fn receivers_learn_nothing_before_classical_bits() {
    let mut r = rng(12);
    for p in [Protocol::Teleport, Protocol::Qis1, Protocol::Qis2] {
        let a = suite().receiver_states(p, &Payload::Secret(SecretState::haar(&mut r))).unwrap();
        let b = suite().receiver_states(p, &Payload::Secret(SecretState::haar(&mut r))).unwrap();
        for ((name, x), (_, y)) in a.iter().zip(&b) {
            assert!(x.trace_distance(y).unwrap() <= 1e-10, "{p} {name}");
        }
    }
}

#[test]
fn transcripts_are_reproducible() {
    let s = SecretState::haar(&mut rng(13));
    for seed in [0, 1, 99] {
        let a = suite().qis2(&s, &mut rng_for(seed, 0)).unwrap().with_seed(seed).to_json();
        let b = suite().qis2(&s, &mut rng_for(seed, 0)).unwrap().with_seed(seed).to_json();
        assert_eq!(a, b);
        assert!(!a.contains("elapsed"));
        let v: serde_json::Value = serde_json::from_str(&a).unwrap();
        for key in ["protocol", "seed", "assignment", "outcomes", "cbits", "corrections", "fidelity"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}

#[test]
fn transcript_cbits_match_budgets() {
    let mut r = rng(14);
    let s = SecretState::haar(&mut r);
    assert_eq!(suite().teleport(&s, &mut r).unwrap().cbits, 4);
    assert_eq!(suite().qis1(&s, &mut r).unwrap().cbits, 6);
    assert_eq!(suite().qis2(&s, &mut r).unwrap().cbits, 5);
    assert_eq!(suite().rsp(0.3, &mut r).unwrap().cbits, 2);
    assert_eq!(suite().dense(DenseMessage::from_index(17).unwrap()).unwrap().qubits_sent, 3);
}
