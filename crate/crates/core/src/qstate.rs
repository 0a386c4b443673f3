//! Dense state-vector algebra for small labelled qubit registers.
//!
//! Qubit labels are arbitrary short strings ("1".."6" for the cluster, "a" and
//! "b" for the payload). The first label of a [`Ket`] is the leftmost
//! character of every bitstring and the most significant bit of the amplitude
//! index.

use std::collections::HashSet;
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tol;

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Registers larger than this are rejected.
pub const MAX_QUBITS: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Label(String);

impl Label {
    pub fn new(name: impl Into<String>) -> Self {
        Label(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// `Label::list(&["a", "b"])`.
    pub fn list(names: &[&str]) -> Vec<Label> {
        names.iter().map(|n| Label::new(*n)).collect()
    }

    /// Labels "1".."n".
    pub fn numbered(n: usize) -> Vec<Label> {
        (1..=n).map(|i| Label(i.to_string())).collect()
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Label {
    fn from(s: &str) -> Self {
        Label::new(s)
    }
}

pub fn join_labels(labels: &[Label]) -> String {
    labels.iter().map(Label::as_str).collect::<Vec<_>>().join(",")
}

fn check_distinct(labels: &[Label]) -> Result<()> {
    let mut seen = HashSet::new();
    for l in labels {
        if !seen.insert(l) {
            return Err(Error::LabelCollision(l.to_string()));
        }
    }
    Ok(())
}

/// Bit of qubit `pos` (0 = most significant) in an `n`-qubit index.
#[inline]
pub fn bit_of(index: usize, pos: usize, n: usize) -> usize {
    (index >> (n - 1 - pos)) & 1
}

pub fn bitstring(index: usize, n: usize) -> String {
    (0..n).map(|p| if bit_of(index, p, n) == 1 { '1' } else { '0' }).collect()
}

pub fn parse_bitstring(bits: &str) -> Option<usize> {
    if bits.is_empty() || bits.len() > MAX_QUBITS {
        return None;
    }
    bits.chars().try_fold(0usize, |acc, c| match c {
        '0' => Some(acc << 1),
        '1' => Some((acc << 1) | 1),
        _ => None,
    })
}

/// A pure state over an ordered list of labelled qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct Ket {
    labels: Vec<Label>,
    amps: Vec<C64>,
}

impl Ket {
    pub fn new(labels: Vec<Label>, amps: Vec<C64>) -> Result<Self> {
        if labels.is_empty() || labels.len() > MAX_QUBITS {
            return Err(Error::InvalidCount(labels.len()));
        }
        check_distinct(&labels)?;
        if amps.len() != 1 << labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} amplitudes for {} qubits",
                amps.len(),
                labels.len()
            )));
        }
        Ok(Ket { labels, amps })
    }

    /// Computational basis state `index` over `labels`.
    pub fn basis(labels: Vec<Label>, index: usize) -> Result<Self> {
        let mut amps = vec![ZERO; 1 << labels.len()];
        if index >= amps.len() {
            return Err(Error::Invalid(format!("basis index {index} out of range")));
        }
        amps[index] = ONE;
        Ket::new(labels, amps)
    }

    /// Builds a ket from `(coefficient, bitstring)` terms over labels "1".."n".
    pub fn from_terms(terms: &[(C64, &str)], normalize: bool) -> Result<Self> {
        let n = terms.first().map(|(_, b)| b.len()).ok_or(Error::ZeroVector)?;
        Ket::from_terms_with_labels(Label::numbered(n), terms, normalize)
    }

    pub fn from_terms_with_labels(
        labels: Vec<Label>,
        terms: &[(C64, &str)],
        normalize: bool,
    ) -> Result<Self> {
        let n = labels.len();
        let mut amps = vec![ZERO; 1 << n.min(MAX_QUBITS)];
        let mut seen = HashSet::new();
        for (c, bits) in terms {
            if bits.len() != n {
                return Err(Error::LengthMismatch { expected: n, found: bits.len() });
            }
            let idx = parse_bitstring(bits)
                .ok_or_else(|| Error::Invalid(format!("`{bits}` is not a bitstring")))?;
            if !seen.insert(idx) {
                return Err(Error::DuplicateTerm(bits.to_string()));
            }
            amps[idx] = *c;
        }
        let ket = Ket::new(labels, amps)?;
        if normalize {
            ket.normalized()
        } else {
            Ok(ket)
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn amplitude(&self, bits: &str) -> Option<C64> {
        if bits.len() != self.n_qubits() {
            return None;
        }
        parse_bitstring(bits).map(|i| self.amps[i])
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= tol::ALGEBRAIC
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n <= f64::EPSILON {
            return Err(Error::ZeroVector);
        }
        Ok(self.scaled(C64::new(1.0 / n, 0.0)))
    }

    pub fn scaled(&self, c: C64) -> Self {
        Ket { labels: self.labels.clone(), amps: self.amps.iter().map(|a| a * c).collect() }
    }

    pub fn with_labels(mut self, labels: Vec<Label>) -> Result<Self> {
        if labels.len() != self.labels.len() {
            return Err(Error::DimensionMismatch("relabel with a different qubit count".into()));
        }
        check_distinct(&labels)?;
        self.labels = labels;
        Ok(self)
    }

    pub fn position(&self, label: &Label) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    /// `<self|other>`, requiring identical label order.
    pub fn inner(&self, other: &Ket) -> Result<C64> {
        if self.labels != other.labels {
            return Err(Error::DimensionMismatch(format!(
                "labels ({}) vs ({})",
                join_labels(&self.labels),
                join_labels(&other.labels)
            )));
        }
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum())
    }

    /// Inner product on amplitudes only, ignoring labels.
    pub fn inner_positional(&self, other: &Ket) -> Result<C64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!("{} vs {}", self.dim(), other.dim())));
        }
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum())
    }

    pub fn add(&self, other: &Ket) -> Result<Ket> {
        if self.labels != other.labels {
            return Err(Error::DimensionMismatch("adding kets over different labels".into()));
        }
        Ok(Ket {
            labels: self.labels.clone(),
            amps: self.amps.iter().zip(&other.amps).map(|(a, b)| a + b).collect(),
        })
    }

    /// `self ⊗ other`; the labels of `self` come first.
    pub fn tensor(&self, other: &Ket) -> Result<Ket> {
        let mut labels = self.labels.clone();
        labels.extend(other.labels.iter().cloned());
        if labels.len() > MAX_QUBITS {
            return Err(Error::InvalidCount(labels.len()));
        }
        check_distinct(&labels)?;
        let mut amps = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.amps {
            for b in &other.amps {
                amps.push(a * b);
            }
        }
        Ok(Ket { labels, amps })
    }

    /// Re-indexes amplitudes so bitstrings read in `order`.
    pub fn permute(&self, order: &[Label]) -> Result<Ket> {
        let n = self.n_qubits();
        if order.len() != n {
            return Err(Error::NotAPermutation);
        }
        let src: Vec<usize> = order
            .iter()
            .map(|l| self.position(l).map_err(|_| Error::NotAPermutation))
            .collect::<Result<_>>()?;
        check_distinct(order).map_err(|_| Error::NotAPermutation)?;
        let mut amps = vec![ZERO; self.dim()];
        for (old, a) in self.amps.iter().enumerate() {
            let mut new = 0usize;
            for &p in &src {
                new = (new << 1) | bit_of(old, p, n);
            }
            amps[new] = *a;
        }
        Ok(Ket { labels: order.to_vec(), amps })
    }

    /// Applies a `2^k × 2^k` matrix on `targets` (first target = most
    /// significant row/column bit).
    pub fn apply(&self, targets: &[Label], op: &DMatrix<C64>) -> Result<Ket> {
        let k = targets.len();
        if op.nrows() != 1 << k || op.ncols() != 1 << k {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} operator on {} qubits",
                op.nrows(),
                op.ncols(),
                k
            )));
        }
        check_distinct(targets)?;
        let n = self.n_qubits();
        let pos: Vec<usize> = targets.iter().map(|l| self.position(l)).collect::<Result<_>>()?;
        let mask: usize = pos.iter().map(|p| 1usize << (n - 1 - p)).sum();
        let sub = |idx: usize| pos.iter().fold(0usize, |acc, &p| (acc << 1) | bit_of(idx, p, n));
        let embed = |base: usize, s: usize| {
            pos.iter().enumerate().fold(base, |acc, (j, &p)| {
                acc | (((s >> (k - 1 - j)) & 1) << (n - 1 - p))
            })
        };
        let mut out = vec![ZERO; self.dim()];
        for (idx, a) in self.amps.iter().enumerate() {
            if *a == ZERO {
                continue;
            }
            let col = sub(idx);
            let base = idx & !mask;
            for row in 0..(1 << k) {
                let m = op[(row, col)];
                if m != ZERO {
                    out[embed(base, row)] += m * a;
                }
            }
        }
        Ok(Ket { labels: self.labels.clone(), amps: out })
    }

    /// Partial trace onto `keep`, in the order given.
    pub fn reduced_density(&self, keep: &[Label]) -> Result<DensityMatrix> {
        if keep.is_empty() {
            return Err(Error::BadPartition);
        }
        check_distinct(keep)?;
        let n = self.n_qubits();
        let kpos: Vec<usize> = keep.iter().map(|l| self.position(l)).collect::<Result<_>>()?;
        let rest: Vec<usize> = (0..n).filter(|p| !kpos.contains(p)).collect();
        let (dk, dr) = (1usize << kpos.len(), 1usize << rest.len());
        let mut a = DMatrix::<C64>::zeros(dk, dr);
        for (idx, amp) in self.amps.iter().enumerate() {
            let r = kpos.iter().fold(0, |acc, &p| (acc << 1) | bit_of(idx, p, n));
            let c = rest.iter().fold(0, |acc, &p| (acc << 1) | bit_of(idx, p, n));
            a[(r, c)] = *amp;
        }
        let rho = &a * a.adjoint();
        Ok(DensityMatrix { labels: keep.to_vec(), mat: rho })
    }

    /// `|self><self|`.
    pub fn projector(&self) -> DensityMatrix {
        let v = DMatrix::from_column_slice(self.dim(), 1, &self.amps);
        DensityMatrix { labels: self.labels.clone(), mat: &v * v.adjoint() }
    }

    /// Indices and amplitudes of nonzero entries.
    pub fn support(&self) -> impl Iterator<Item = (usize, C64)> + '_ {
        self.amps.iter().copied().enumerate().filter(|(_, a)| a.norm_sqr() > 0.0)
    }
}

impl fmt::Display for Ket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.n_qubits();
        let mut first = true;
        for (i, a) in self.support() {
            if a.norm() < 1e-12 {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({:.4}{:+.4}i)|{}>", a.re, a.im, bitstring(i, n))?;
        }
        if first {
            write!(f, "0")?;
        }
        write!(f, " on ({})", join_labels(&self.labels))
    }
}

/// A density matrix over labelled qubits.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    labels: Vec<Label>,
    mat: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn new(labels: Vec<Label>, mat: DMatrix<C64>) -> Result<Self> {
        if mat.nrows() != 1 << labels.len() || mat.ncols() != mat.nrows() {
            return Err(Error::DimensionMismatch("density matrix shape".into()));
        }
        Ok(DensityMatrix { labels, mat })
    }

    pub fn zeros(labels: Vec<Label>) -> Self {
        let d = 1 << labels.len();
        DensityMatrix { labels, mat: DMatrix::zeros(d, d) }
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let d = &self.mat - self.mat.adjoint();
        d.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `self += w · other`.
    pub fn accumulate(&mut self, w: f64, other: &DensityMatrix) -> Result<()> {
        if self.labels != other.labels {
            return Err(Error::DimensionMismatch("accumulating over different labels".into()));
        }
        self.mat += other.mat.scale(w);
        Ok(())
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let herr = self.hermiticity_error();
        if herr > tol::ALGEBRAIC {
            return Err(Error::NotHermitian(herr));
        }
        let eig = SymmetricEigen::new(self.mat.clone());
        let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        Ok(ev)
    }

    /// `<v|ρ|v>` for `v` over the same labels.
    pub fn expectation(&self, v: &Ket) -> Result<f64> {
        if v.labels() != self.labels.as_slice() {
            return Err(Error::DimensionMismatch("expectation over different labels".into()));
        }
        let col = DMatrix::from_column_slice(v.dim(), 1, v.amplitudes());
        Ok((col.adjoint() * &self.mat * &col)[(0, 0)].re)
    }

    /// Trace distance `½ Σ|λ(ρ−σ)|`.
    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64> {
        if self.labels != other.labels {
            return Err(Error::DimensionMismatch("trace distance over different labels".into()));
        }
        let diff = DensityMatrix { labels: self.labels.clone(), mat: &self.mat - &other.mat };
        Ok(0.5 * diff.eigenvalues()?.iter().map(|l| l.abs()).sum::<f64>())
    }

    /// Conjugation `U ρ U†` on all qubits.
    pub fn conjugate(&self, u: &DMatrix<C64>) -> Result<DensityMatrix> {
        if u.nrows() != self.dim() {
            return Err(Error::DimensionMismatch("conjugating operator".into()));
        }
        Ok(DensityMatrix { labels: self.labels.clone(), mat: u * &self.mat * u.adjoint() })
    }
}

/// Von Neumann entropy in bits.
pub fn entropy(rho: &DensityMatrix) -> Result<f64> {
    let ev = rho.eigenvalues()?;
    Ok(ev
        .into_iter()
        .map(|l| if l < tol::ALGEBRAIC { 0.0 } else { l })
        .filter(|&l| l > 0.0)
        .map(|l| -l * l.log2())
        .sum::<f64>()
        .max(0.0))
}

/// `|<a|b>|²`, ignoring global phase. Labels must agree.
pub fn fidelity_up_to_phase(a: &Ket, b: &Ket) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!("{} vs {}", a.dim(), b.dim())));
    }
    let b = if a.labels() == b.labels() { b.clone() } else { b.permute(a.labels())? };
    Ok(a.inner(&b)?.norm_sqr().min(1.0))
}

/// Entanglement entropy across `partition | complement`.
pub fn ebits(k: &Ket, partition: &[Label]) -> Result<f64> {
    if partition.is_empty() || partition.len() >= k.n_qubits() {
        return Err(Error::BadPartition);
    }
    entropy(&k.reduced_density(partition)?)
}

/// `(|0…0⟩ + |1…1⟩)/√2` over labels "1".."n".
pub fn ghz(n: usize) -> Result<Ket> {
    if n == 0 || n > MAX_QUBITS {
        return Err(Error::InvalidCount(n));
    }
    let mut amps = vec![ZERO; 1 << n];
    let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    amps[0] = h;
    amps[(1 << n) - 1] = h;
    Ket::new(Label::numbered(n), amps)
}

/// Linear cluster `2^{-n/2} ⊗_a (|0⟩_a σ_z^{(a+1)} + |1⟩_a)`, with the
/// σ_z of site `a` acting on site `a+1` and nothing past the last site.
///
/// Expanding the product, a bitstring `x` picks up a `-1` for every
/// neighbouring pair with `x_a = 0, x_{a+1} = 1`.
pub fn cluster_chain(n: usize) -> Result<Ket> {
    if !(2..=MAX_QUBITS).contains(&n) {
        return Err(Error::InvalidCount(n));
    }
    let scale = (0.5f64).powf(n as f64 / 2.0);
    let amps = (0..1usize << n)
        .map(|x| {
            let flips = (0..n - 1)
                .filter(|&a| bit_of(x, a, n) == 0 && bit_of(x, a + 1, n) == 1)
                .count();
            C64::new(if flips % 2 == 0 { scale } else { -scale }, 0.0)
        })
        .collect();
    Ket::new(Label::numbered(n), amps)
}

/// The six-qubit channel `½(|000000⟩ + |000111⟩ + |111000⟩ − |111111⟩)`.
pub fn c6() -> Ket {
    Ket::from_terms(
        &[(ONE, "000000"), (ONE, "000111"), (ONE, "111000"), (-ONE, "111111")],
        true,
    )
    .expect("static channel")
}

/// Two-qubit payload `α|00⟩ + μ|01⟩ + γ|10⟩ + β|11⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecretState {
    pub alpha: C64,
    pub mu: C64,
    pub gamma: C64,
    pub beta: C64,
}

impl SecretState {
    pub fn new(alpha: C64, mu: C64, gamma: C64, beta: C64) -> Result<Self> {
        let s = SecretState { alpha, mu, gamma, beta };
        let n = s.norm_sqr();
        if (n - 1.0).abs() > tol::ALGEBRAIC {
            return Err(Error::NotNormalized(n));
        }
        Ok(s)
    }

    /// Skips the norm check; used for basis payloads and formal evaluation.
    pub fn from_coeffs_unchecked(c: [C64; 4]) -> Self {
        SecretState { alpha: c[0], mu: c[1], gamma: c[2], beta: c[3] }
    }

    pub fn from_real(c: [f64; 4]) -> Result<Self> {
        SecretState::new(
            C64::new(c[0], 0.0),
            C64::new(c[1], 0.0),
            C64::new(c[2], 0.0),
            C64::new(c[3], 0.0),
        )
    }

    /// The `i`-th computational payload (α, μ, γ, β order).
    pub fn basis(i: usize) -> Self {
        let mut c = [ZERO; 4];
        c[i] = ONE;
        SecretState::from_coeffs_unchecked(c)
    }

    /// Four complex standard normals, normalized.
    pub fn haar<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let mut c = [ZERO; 4];
            for z in &mut c {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                *z = C64::new(re, im);
            }
            let n = c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if n > 1e-9 {
                for z in &mut c {
                    *z /= n;
                }
                return SecretState::from_coeffs_unchecked(c);
            }
        }
    }

    /// α = β = ½, μ = γ = ½e^{iφ}.
    pub fn equatorial(phi: f64) -> Self {
        let h = C64::new(0.5, 0.0);
        let p = C64::from_polar(0.5, phi);
        SecretState::from_coeffs_unchecked([h, p, p, h])
    }

    pub fn coeffs(&self) -> [C64; 4] {
        [self.alpha, self.mu, self.gamma, self.beta]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coeffs().iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn ket(&self, labels: Vec<Label>) -> Result<Ket> {
        Ket::new(labels, self.coeffs().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn c6_amplitudes() {
        let k = c6();
        assert_eq!(k.dim(), 64);
        assert_abs_diff_eq!(k.amplitudes()[0].re, 0.5);
        assert_abs_diff_eq!(k.amplitudes()[7].re, 0.5);
        assert_abs_diff_eq!(k.amplitudes()[56].re, 0.5);
        assert_abs_diff_eq!(k.amplitudes()[63].re, -0.5);
        assert!(k.is_normalized());
    }

    #[test]
    fn from_terms_basics_and_errors() {
        let k = Ket::from_terms(&[(ONE, "0")], false).unwrap();
        assert_eq!(k.amplitudes(), &[ONE, ZERO]);
        let bell = Ket::from_terms(&[(ONE, "00"), (ONE, "11")], true).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(bell.amplitudes()[0].re, h, epsilon = 1e-15);
        assert_abs_diff_eq!(bell.amplitudes()[3].re, h, epsilon = 1e-15);
        assert!(matches!(
            Ket::from_terms(&[(ONE, "00"), (ONE, "1")], false),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            Ket::from_terms(&[(ONE, "01"), (ONE, "01")], false),
            Err(Error::DuplicateTerm(_))
        ));
        assert!(matches!(Ket::from_terms(&[(ZERO, "01")], true), Err(Error::ZeroVector)));
    }

    #[test]
    fn ghz_small_cases() {
        assert!(ghz(0).is_err());
        let g1 = ghz(1).unwrap();
        assert_abs_diff_eq!(g1.amplitudes()[1].re, std::f64::consts::FRAC_1_SQRT_2);
        let g3 = ghz(3).unwrap();
        assert_abs_diff_eq!(g3.amplitudes()[0].re, std::f64::consts::FRAC_1_SQRT_2);
        assert_abs_diff_eq!(g3.amplitudes()[7].re, std::f64::consts::FRAC_1_SQRT_2);
        let g2 = ghz(2).unwrap();
        assert_abs_diff_eq!(ebits(&g2, &Label::list(&["1"])).unwrap(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn cluster_chain_rejects_short() {
        assert!(cluster_chain(1).is_err());
        assert!(cluster_chain(0).is_err());
    }

    #[test]
    fn tensor_and_permute() {
        let z = Ket::basis(Label::list(&["1"]), 0).unwrap();
        let o = Ket::basis(Label::list(&["2"]), 1).unwrap();
        let t = z.tensor(&o).unwrap();
        assert_eq!(t.amplitude("01"), Some(ONE));
        let p = t.permute(&Label::list(&["2", "1"])).unwrap();
        assert_eq!(p.amplitude("10"), Some(ONE));
        assert!(matches!(z.tensor(&z), Err(Error::LabelCollision(_))));
        assert!(matches!(t.permute(&Label::list(&["1", "3"])), Err(Error::NotAPermutation)));
        assert!(matches!(t.permute(&Label::list(&["1", "1"])), Err(Error::NotAPermutation)));
        let k = c6();
        assert_eq!(k.permute(k.labels()).unwrap(), k);
    }

    #[test]
    fn reduced_density_of_c6() {
        let k = c6();
        let rho = k.reduced_density(&Label::list(&["3", "4"])).unwrap();
        for l in rho.eigenvalues().unwrap() {
            assert_abs_diff_eq!(l, 0.25, epsilon = 1e-12);
        }
        let rho = k.reduced_density(&Label::list(&["1", "2", "3"])).unwrap();
        let ev = rho.eigenvalues().unwrap();
        assert_abs_diff_eq!(ev[7], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(ev[6], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(ev[5], 0.0, epsilon = 1e-12);
        assert!(k.reduced_density(&Label::list(&["9"])).is_err());
        let all = k.reduced_density(k.labels()).unwrap();
        assert_abs_diff_eq!(all.expectation(&k).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(entropy(&all).unwrap(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn entropy_values() {
        let mm = DensityMatrix::new(Label::numbered(2), DMatrix::identity(4, 4).scale(0.25))
            .unwrap();
        assert_abs_diff_eq!(entropy(&mm).unwrap(), 2.0, epsilon = 1e-12);
        let rho = c6().reduced_density(&Label::list(&["2", "3", "5"])).unwrap();
        assert_abs_diff_eq!(entropy(&rho).unwrap(), 2.0, epsilon = 1e-10);
        let mut bad = DMatrix::<C64>::zeros(2, 2);
        bad[(0, 1)] = c(1.0);
        let bad = DensityMatrix::new(Label::numbered(1), bad).unwrap();
        assert!(matches!(entropy(&bad), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn fidelity_examples() {
        let plus = Ket::from_terms(&[(ONE, "0"), (ONE, "1")], true).unwrap();
        let zero = Ket::from_terms(&[(ONE, "0")], false).unwrap();
        let one = Ket::basis(Label::numbered(1), 1).unwrap();
        assert_abs_diff_eq!(fidelity_up_to_phase(&plus, &zero).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(fidelity_up_to_phase(&zero, &one).unwrap(), 0.0);
        let k = c6();
        let rotated = k.scaled(C64::from_polar(1.0, 0.7));
        assert_abs_diff_eq!(fidelity_up_to_phase(&k, &rotated).unwrap(), 1.0, epsilon = 1e-12);
        assert!(fidelity_up_to_phase(&k, &zero).is_err());
    }

    #[test]
    fn ebits_examples() {
        let k = c6();
        assert_abs_diff_eq!(ebits(&k, &Label::list(&["3", "4"])).unwrap(), 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(ebits(&k, &Label::list(&["1"])).unwrap(), 1.0, epsilon = 1e-10);
        assert!(matches!(ebits(&k, &[]), Err(Error::BadPartition)));
        assert!(matches!(ebits(&k, k.labels()), Err(Error::BadPartition)));
    }

    #[test]
    fn apply_pauli_x() {
        let x = DMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]);
        let k = Ket::basis(Label::numbered(3), 0).unwrap();
        let out = k.apply(&Label::list(&["2"]), &x).unwrap();
        assert_eq!(out.amplitude("010"), Some(ONE));
    }

    #[test]
    fn secret_state_checks() {
        assert!(SecretState::from_real([1.0, 1.0, 0.0, 0.0]).is_err());
        let s = SecretState::from_real([0.5, 0.5, 0.5, 0.5]).unwrap();
        assert_eq!(s.ket(Label::list(&["a", "b"])).unwrap().dim(), 4);
        let e = SecretState::equatorial(1.0);
        assert_abs_diff_eq!(e.norm_sqr(), 1.0, epsilon = 1e-15);
    }
}
