use approx::assert_abs_diff_eq;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qc6::check_orthonormal;
use qc6::protocols::table_context;
use qc6::qstate::{Ket, Label, SecretState};
use qc6::synth::*;
use qc6::tables::{embedded_errata, outcome_kets, ProtocolTable};

fn l(names: &[&str]) -> Vec<Label> {
    Label::list(names)
}

#[test]
fn residual_equal_to_target_needs_nothing() {
    let s = SecretState::haar(&mut ChaCha8Rng::seed_from_u64(11));
    let k = s.ket(l(&["3", "4"])).unwrap();
    let (op, tier) = synthesize_correction(&CorrectionProblem::single(&k, &k).unwrap()).unwrap();
    assert!(op.is_identity());
    assert_eq!(tier, Tier::Pauli);
    assert_eq!(op.to_string(), "I⊗I");
}

#[test]
fn beta_sign_is_undone_by_cz() {
    let labels = l(&["3", "4"]);
    let pairs = (0..4)
        .map(|i| {
            let t = Ket::basis(labels.clone(), i).unwrap();
            let r = if i == 3 { t.scaled(-qc6::qstate::ONE) } else { t.clone() };
            (r, t)
        })
        .collect();
    let problem = CorrectionProblem::new(pairs, true).unwrap();
    let (op, _) = synthesize_correction(&problem).unwrap();
    assert!(problem.verify(&op));
    assert_eq!(op.to_string(), "CZ");
    assert!(op.unitarity_error() < 1e-12);
}

#[test]
fn single_vector_completes_to_qubit_basis() {
    let zero = Ket::basis(l(&["a"]), 0).unwrap();
    let b = complete_basis("z", l(&["a"]), vec![zero]).unwrap();
    assert!(b.is_full());
    assert_eq!(b.listed(), 1);
    assert!(b.is_completion(1));
    let one = &b.vectors()[1];
    assert_abs_diff_eq!(one.amplitude("1").unwrap().norm(), 1.0, epsilon = 1e-12);
}

#[test]
fn empty_partial_gives_computational_basis() {
    let b = complete_basis("empty", l(&["a", "b"]), vec![]).unwrap();
    assert_eq!(b.vectors().len(), 4);
    assert_eq!(b.listed(), 0);
    for (i, v) in b.vectors().iter().enumerate() {
        assert_abs_diff_eq!(v.amplitudes()[i].norm(), 1.0, epsilon = 1e-12);
    }
}

#[test]
fn non_orthogonal_partial_is_refused() {
    let a = Ket::basis(l(&["a"]), 0).unwrap();
    let h = Ket::from_terms_with_labels(l(&["a"]), &[(qc6::qstate::ONE, "0"), (qc6::qstate::ONE, "1")], true).unwrap();
    assert!(matches!(complete_basis("bad", l(&["a"]), vec![a, h]), Err(qc6::Error::NotOrthonormal(_))));
}

#[test]
fn rsp_table_completes_on_the_equator() {
    let t = ProtocolTable::load_embedded("6").unwrap();
    let labels = l(&["1", "6", "2", "5"]);
    let phi = std::f64::consts::FRAC_PI_3;
    let listed = outcome_kets(&t, &SecretState::equatorial(phi), &labels).unwrap();
    let b = complete_basis("rsp", labels, listed).unwrap();
    assert_eq!(b.vectors().len(), 16);
    let g = check_orthonormal(b.vectors()).unwrap();
    assert!(g.pass);
    assert!(g.max_deviation() < 1e-10);
}

#[test]
fn shuffled_table1_has_no_consistent_assignment() {
    let mut t = ProtocolTable::load_embedded("1").unwrap().apply_errata(&embedded_errata()).0;
    let results: Vec<_> = t.rows.iter().map(|r| r.result.clone()).collect();
    let n = results.len();
    for (i, r) in t.rows.iter_mut().enumerate() {
        r.result = results[(i + 5) % n].clone();
    }
    let (shape, scenario) = table_context("1").unwrap();
    let r = infer_assignment(&t, &scenario, &shape).unwrap();
    assert_eq!(r.verdict, AssignmentVerdict::Inconsistent);
    assert!(!r.full_match());
}

#[test]
fn corrected_tables_certify_as_expected() {
    let expect = [
        ("1", AssignmentVerdict::Consistent, "b,a,1,6,2,5|3,4"),
        ("6", AssignmentVerdict::Consistent, "1,6,2,5|3,4"),
    ];
    for (id, verdict, assignment) in expect {
        let t = ProtocolTable::load_embedded(id).unwrap().apply_errata(&embedded_errata()).0;
        let (shape, scenario) = table_context(id).unwrap();
        let r = infer_assignment(&t, &scenario, &shape).unwrap();
        assert_eq!(r.verdict, verdict, "table {id}");
        assert_eq!(r.best.assignment, assignment, "table {id}");
    }
}

#[test]
fn histogram_counts_by_display() {
    let ops = [LocalOp::identity(), LocalOp::paulis(Some(Gate::X), None), LocalOp::identity()];
    let h = correction_histogram(&ops);
    assert_eq!(h["I⊗I"], 2);
    assert_eq!(h.values().sum::<usize>(), 3);
}
