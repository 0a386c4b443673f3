use approx::assert_abs_diff_eq;
use nalgebra::DMatrix;

use qc6::qstate::*;

fn z() -> DMatrix<C64> {
    DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![ONE, -ONE]))
}

// Graph state of the path 1–2–…–n built directly: every amplitude is
// 2^{-n/2} (−1)^{Σ x_a x_{a+1}}.
fn path_graph_state(n: usize) -> Ket {
    let scale = 0.5f64.powf(n as f64 / 2.0);
    let amps = (0..1usize << n)
        .map(|x| {
            let bits: Vec<usize> = (0..n).map(|p| (x >> (n - 1 - p)) & 1).collect();
            let s: usize = bits.windows(2).map(|w| w[0] * w[1]).sum();
            C64::new(if s % 2 == 0 { scale } else { -scale }, 0.0)
        })
        .collect();
    Ket::new(Label::numbered(n), amps).unwrap()
}

#[test]
fn cluster_chain_is_path_graph_state_up_to_local_z() {
    for n in 2..=6 {
        let mut k = cluster_chain(n).unwrap();
        for q in 2..=n {
            k = k.apply(&[Label::new(q.to_string())], &z()).unwrap();
        }
        let g = path_graph_state(n);
        assert_abs_diff_eq!(fidelity_up_to_phase(&k, &g).unwrap(), 1.0, epsilon = 1e-12);
    }
}

#[test]
fn two_site_cluster_is_one_ebit() {
    let k = cluster_chain(2).unwrap();
    assert_abs_diff_eq!(ebits(&k, &Label::list(&["1"])).unwrap(), 1.0, epsilon = 1e-10);
    assert!(cluster_chain(1).is_err());
}

#[test]
fn channel_amplitudes() {
    let k = c6();
    assert_eq!(k.n_qubits(), 6);
    assert_abs_diff_eq!(k.amplitude("000000").unwrap().re, 0.5, epsilon = 1e-15);
    assert_abs_diff_eq!(k.amplitude("111111").unwrap().re, -0.5, epsilon = 1e-15);
    assert_abs_diff_eq!(k.amplitude("000111").unwrap().re, 0.5, epsilon = 1e-15);
    assert_eq!(k.support().count(), 4);
    assert!(k.is_normalized());
}

#[test]
fn channel_cuts_carry_at_most_two_ebits() {
    let k = c6();
    let labels = Label::numbered(6);
    let mut best: f64 = 0.0;
    for mask in 1usize..(1 << 6) {
        if mask.count_ones() != 3 {
            continue;
        }
        let part: Vec<Label> = (0..6).filter(|i| mask >> i & 1 == 1).map(|i| labels[i].clone()).collect();
        best = best.max(ebits(&k, &part).unwrap());
    }
    assert_abs_diff_eq!(best, 2.0, epsilon = 1e-10);
    // 123|456 is the weakest cut.
    assert_abs_diff_eq!(ebits(&k, &Label::list(&["1", "2", "3"])).unwrap(), 1.0, epsilon = 1e-10);
}

#[test]
fn ghz_reduced_state_is_mixed() {
    let g = ghz(3).unwrap();
    let rho = g.reduced_density(&Label::list(&["1"])).unwrap();
    let mut ev = rho.eigenvalues().unwrap();
    ev.sort_by(f64::total_cmp);
    assert_abs_diff_eq!(ev[0], 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(ev[1], 0.5, epsilon = 1e-12);
    assert!(ghz(0).is_err());
}

#[test]
fn permute_then_back_is_identity() {
    let k = c6();
    let order = Label::list(&["4", "1", "6", "2", "5", "3"]);
    let back = k.permute(&order).unwrap().permute(&Label::numbered(6)).unwrap();
    assert_eq!(back.amplitudes(), k.amplitudes());
}

#[test]
fn bad_inputs_are_errors() {
    assert!(Ket::new(Label::list(&["a", "b"]), vec![ONE; 3]).is_err());
    assert!(Ket::new(Label::list(&["a", "a"]), vec![ONE; 4]).is_err());
    assert!(SecretState::new(ONE, ONE, ONE, ONE).is_err());
    assert!(ebits(&c6(), &[]).is_err());
}
