//! Correction synthesis, basis completion and party-assignment inference.
//!
//! Corrections are two-qubit local Clifford operations of the shape
//! `phase · SWAP? · (post₀ ⊗ post₁) · CZ? · (pre₀ ⊗ pre₁)` found by a staged
//! search: Pauli products, then a global phase, then CZ, then SWAP, then
//! words in H and S.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use itertools::Itertools;
use nalgebra::{DMatrix, Matrix2, Matrix4};
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::measure::{check_orthonormal, MeasurementBasis};
use crate::qstate::{Ket, Label, C64, ONE, ZERO};
use crate::tables::{row_residuals, Candidate, JointState, ProtocolTable, Scenario, Scorer};
use crate::tol;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Gate {
    X,
    Y,
    Z,
    H,
    S,
}

impl Gate {
    pub fn matrix(self) -> Matrix2<C64> {
        let i = C64::new(0.0, 1.0);
        let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        match self {
            Gate::X => Matrix2::new(ZERO, ONE, ONE, ZERO),
            Gate::Y => Matrix2::new(ZERO, -i, i, ZERO),
            Gate::Z => Matrix2::new(ONE, ZERO, ZERO, -ONE),
            Gate::H => Matrix2::new(h, h, h, -h),
            Gate::S => Matrix2::new(ONE, ZERO, ZERO, i),
        }
    }

    fn symbol(self) -> char {
        match self {
            Gate::X => 'X',
            Gate::Y => 'Y',
            Gate::Z => 'Z',
            Gate::H => 'H',
            Gate::S => 'S',
        }
    }
}

const PAULIS: [Option<Gate>; 4] = [None, Some(Gate::X), Some(Gate::Y), Some(Gate::Z)];

/// Gates applied left to right.
pub fn word_matrix(word: &[Gate]) -> Matrix2<C64> {
    word.iter().fold(Matrix2::identity(), |acc, g| g.matrix() * acc)
}

fn word_str(word: &[Gate]) -> String {
    if word.is_empty() {
        "I".into()
    } else {
        word.iter().map(|g| g.symbol()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    One,
    MinusOne,
    I,
    MinusI,
}

impl Phase {
    pub const ALL: [Phase; 4] = [Phase::One, Phase::MinusOne, Phase::I, Phase::MinusI];

    pub fn value(self) -> C64 {
        match self {
            Phase::One => ONE,
            Phase::MinusOne => -ONE,
            Phase::I => C64::new(0.0, 1.0),
            Phase::MinusI => C64::new(0.0, -1.0),
        }
    }

    fn nearest(z: C64) -> Option<Phase> {
        Phase::ALL.into_iter().find(|p| (p.value() - z).norm() <= 1e-8)
    }
}

fn kron(a: &Matrix2<C64>, b: &Matrix2<C64>) -> Matrix4<C64> {
    Matrix4::from_fn(|r, c| a[(r / 2, c / 2)] * b[(r % 2, c % 2)])
}

fn cz() -> Matrix4<C64> {
    Matrix4::from_diagonal(&nalgebra::Vector4::new(ONE, ONE, ONE, -ONE))
}

fn swap() -> Matrix4<C64> {
    let mut m = Matrix4::zeros();
    for (r, c) in [(0, 0), (1, 2), (2, 1), (3, 3)] {
        m[(r, c)] = ONE;
    }
    m
}

/// A two-qubit local Clifford correction. Qubit 0 is the first receiver
/// label (most significant).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalOp {
    pub pre: [Vec<Gate>; 2],
    pub cz: bool,
    pub post: [Vec<Gate>; 2],
    pub swap: bool,
    pub phase: Phase,
}

impl Default for LocalOp {
    fn default() -> Self {
        LocalOp::identity()
    }
}

impl LocalOp {
    pub fn identity() -> Self {
        LocalOp { pre: [vec![], vec![]], cz: false, post: [vec![], vec![]], swap: false, phase: Phase::One }
    }

    pub fn paulis(p0: Option<Gate>, p1: Option<Gate>) -> Self {
        LocalOp { post: [p0.into_iter().collect(), p1.into_iter().collect()], ..LocalOp::identity() }
    }

    pub fn matrix4(&self) -> Matrix4<C64> {
        let pre = kron(&word_matrix(&self.pre[0]), &word_matrix(&self.pre[1]));
        let post = kron(&word_matrix(&self.post[0]), &word_matrix(&self.post[1]));
        let mut m = post * if self.cz { cz() * pre } else { pre };
        if self.swap {
            m = swap() * m;
        }
        m * self.phase.value()
    }

    pub fn matrix(&self) -> DMatrix<C64> {
        DMatrix::from_iterator(4, 4, self.matrix4().iter().copied())
    }

    pub fn is_identity(&self) -> bool {
        *self == LocalOp::identity()
    }

    pub fn unitarity_error(&self) -> f64 {
        let m = self.matrix4();
        (m * m.adjoint() - Matrix4::identity()).norm()
    }

    /// Applies the correction to `state` on `targets` (two labels).
    pub fn apply(&self, state: &Ket, targets: &[Label]) -> Result<Ket> {
        if targets.len() != 2 {
            return Err(Error::DimensionMismatch(format!("correction acts on 2 qubits, got {}", targets.len())));
        }
        state.apply(targets, &self.matrix())
    }

    /// Gate count, used to prefer short corrections.
    pub fn weight(&self) -> usize {
        self.pre.iter().chain(&self.post).map(Vec::len).sum::<usize>() + self.cz as usize + self.swap as usize
    }
}

/// Steps in application order separated by `;`; within a word gates also
/// apply left to right.
impl fmt::Display for LocalOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut steps = Vec::new();
        if !self.pre[0].is_empty() || !self.pre[1].is_empty() {
            steps.push(format!("{}⊗{}", word_str(&self.pre[0]), word_str(&self.pre[1])));
        }
        if self.cz {
            steps.push("CZ".into());
        }
        if !self.post[0].is_empty() || !self.post[1].is_empty() {
            steps.push(format!("{}⊗{}", word_str(&self.post[0]), word_str(&self.post[1])));
        }
        if self.swap {
            steps.push("SWAP".into());
        }
        match self.phase {
            Phase::One => {}
            Phase::MinusOne => steps.push("×(-1)".into()),
            Phase::I => steps.push("×i".into()),
            Phase::MinusI => steps.push("×(-i)".into()),
        }
        if steps.is_empty() {
            f.write_str("I⊗I")
        } else {
            f.write_str(&steps.join(" ; "))
        }
    }
}

impl Serialize for LocalOp {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Residual → target pairs a correction must map.
#[derive(Clone, Debug)]
pub struct CorrectionProblem {
    pub labels: Vec<Label>,
    pub pairs: Vec<(Ket, Ket)>,
    /// The pairs are columns of one linear map (basis payloads): a single
    /// scalar must relate every pair. Otherwise each pair is matched up to
    /// its own phase.
    pub linear: bool,
}

impl CorrectionProblem {
    pub fn single(residual: &Ket, target: &Ket) -> Result<Self> {
        CorrectionProblem::new(vec![(residual.clone(), target.clone())], false)
    }

    pub fn new(pairs: Vec<(Ket, Ket)>, linear: bool) -> Result<Self> {
        let labels = pairs.first().ok_or_else(|| Error::Invalid("empty correction problem".into()))?.0.labels().to_vec();
        if labels.len() != 2 {
            return Err(Error::DimensionMismatch(format!("corrections act on 2 qubits, got {}", labels.len())));
        }
        let pairs = pairs
            .into_iter()
            .map(|(r, t)| Ok((r.permute(&labels)?, t.permute(&labels)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(CorrectionProblem { labels, pairs, linear })
    }

    fn vec4(k: &Ket) -> nalgebra::Vector4<C64> {
        nalgebra::Vector4::from_iterator(k.amplitudes().iter().copied())
    }

    /// The scalar ω with `U r = ω t` (up to positive scale), if `u` solves
    /// the problem.
    fn solves(&self, u: &Matrix4<C64>) -> Option<C64> {
        if self.linear {
            let (mut rn, mut tn) = (0.0, 0.0);
            for (r, t) in &self.pairs {
                rn += r.norm_sqr();
                tn += t.norm_sqr();
            }
            if rn <= tol::PROB_FLOOR || tn <= tol::PROB_FLOOR {
                return None;
            }
            let scale = (rn / tn).sqrt();
            let mut overlap = ZERO;
            let images: Vec<_> = self.pairs.iter().map(|(r, _)| u * Self::vec4(r) / C64::from(scale)).collect();
            for ((_, t), img) in self.pairs.iter().zip(&images) {
                overlap += Self::vec4(t).dotc(img);
            }
            let omega = overlap / tn;
            let err: f64 = self
                .pairs
                .iter()
                .zip(&images)
                .map(|((_, t), img)| (img - Self::vec4(t) * omega).norm_squared())
                .sum::<f64>()
                / tn;
            (err.sqrt() <= tol::NUMERIC && (omega.norm() - 1.0).abs() <= tol::NUMERIC).then_some(omega)
        } else {
            for (r, t) in &self.pairs {
                let (r, t) = (Self::vec4(r), Self::vec4(t));
                let (rn, tn) = (r.norm(), t.norm());
                if rn <= tol::NUMERIC || tn <= tol::NUMERIC {
                    return None;
                }
                let f = (t.dotc(&(u * r)) / (rn * tn)).norm_sqr();
                if 1.0 - f > tol::NUMERIC {
                    return None;
                }
            }
            Some(ONE)
        }
    }

    pub fn verify(&self, op: &LocalOp) -> bool {
        match self.solves(&op.matrix4()) {
            Some(w) => !self.linear || (w - ONE).norm() <= 1e-8,
            None => false,
        }
    }

    /// `T R⁻¹` normalized, when the residual columns have full rank.
    fn required_unitary(&self) -> Option<Matrix4<C64>> {
        if !self.linear || self.pairs.len() != 4 {
            return None;
        }
        let r = Matrix4::from_columns(&self.pairs.iter().map(|(r, _)| Self::vec4(r)).collect::<Vec<_>>());
        let t = Matrix4::from_columns(&self.pairs.iter().map(|(_, t)| Self::vec4(t)).collect::<Vec<_>>());
        let u = t * r.try_inverse()?;
        let scale = (u.norm_squared() / 4.0).sqrt();
        let u = u / C64::from(scale);
        ((u * u.adjoint() - Matrix4::identity()).norm() <= 1e-8).then_some(u)
    }
}

/// Search tier at which a correction was found.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tier {
    Pauli,
    Phase,
    ControlledZ,
    Swap,
    Clifford,
}

fn finish(mut op: LocalOp, omega: C64, problem: &CorrectionProblem) -> Option<LocalOp> {
    if problem.linear {
        op.phase = Phase::nearest(omega.conj())?;
    }
    problem.verify(&op).then_some(op)
}

/// Single-qubit Cliffords modulo phase, as (word, matrix), shortest first.
fn clifford_words(with_pauli: bool) -> Vec<(Vec<Gate>, Matrix2<C64>)> {
    let mut words: Vec<Vec<Gate>> = vec![vec![]];
    for len in 1..=3 {
        words.extend((0..len).map(|_| [Gate::H, Gate::S]).multi_cartesian_product().map(|w| w.to_vec()));
    }
    let mut out: Vec<(Vec<Gate>, Matrix2<C64>)> = Vec::new();
    let paulis: &[Option<Gate>] = if with_pauli { &PAULIS } else { &PAULIS[..1] };
    let mut cands: Vec<Vec<Gate>> = Vec::new();
    for w in &words {
        for p in paulis {
            let mut g = w.clone();
            g.extend(p.iter().copied());
            cands.push(g);
        }
    }
    cands.sort_by_key(Vec::len);
    for g in cands {
        let m = word_matrix(&g);
        if !out.iter().any(|(_, o)| equal_mod_phase(o, &m).is_some()) {
            out.push((g, m));
        }
    }
    out
}

fn equal_mod_phase(a: &Matrix2<C64>, b: &Matrix2<C64>) -> Option<C64> {
    let ov = a.adjoint() * b;
    let w = ov.trace() / 2.0;
    ((w.norm() - 1.0).abs() <= 1e-8 && (b - a * w).norm() <= 1e-8).then_some(w)
}

/// Writes `m` as `a ⊗ b` if it factorizes.
fn factor(m: &Matrix4<C64>) -> Option<(Matrix2<C64>, Matrix2<C64>)> {
    let block = |i: usize, j: usize| Matrix2::from_fn(|k, l| m[(2 * i + k, 2 * j + l)]);
    let (bi, bj) = (0..2).cartesian_product(0..2).max_by(|&(a, b), &(c, d)| {
        block(a, b).norm().partial_cmp(&block(c, d).norm()).unwrap_or(Ordering::Equal)
    })?;
    let pivot = block(bi, bj);
    let pn = pivot.norm();
    if pn <= 1e-9 {
        return None;
    }
    let b = pivot * C64::from(std::f64::consts::SQRT_2 / pn);
    let a = Matrix2::from_fn(|i, j| b.dotc(&block(i, j)) / 2.0);
    ((kron(&a, &b) - m).norm() <= 1e-8).then_some((a, b))
}

fn lookup(table: &[(Vec<Gate>, Matrix2<C64>)], m: &Matrix2<C64>) -> Option<Vec<Gate>> {
    table.iter().find(|(_, t)| equal_mod_phase(t, m).is_some()).map(|(w, _)| w.clone())
}

/// Staged search for a local Clifford solving `problem`.
pub fn synthesize_correction(problem: &CorrectionProblem) -> Result<(LocalOp, Tier)> {
    let brute = |cz: bool, swap: bool, phases: bool| -> Option<LocalOp> {
        for (p0, p1) in PAULIS.iter().cartesian_product(PAULIS.iter()) {
            let op = LocalOp { cz, swap, ..LocalOp::paulis(*p0, *p1) };
            if let Some(w) = problem.solves(&op.matrix4()) {
                if !problem.linear || phases || (w - ONE).norm() <= 1e-8 {
                    if let Some(op) = finish(op, w, problem) {
                        return Some(op);
                    }
                }
            }
        }
        None
    };
    let staged = [
        (Tier::Pauli, false, false, false),
        (Tier::Phase, false, false, true),
        (Tier::ControlledZ, true, false, true),
        (Tier::Swap, false, true, true),
        (Tier::Swap, true, true, true),
    ];
    for (tier, cz, swap, phases) in staged {
        if let Some(op) = brute(cz, swap, phases) {
            return Ok((op, tier));
        }
    }
    let pre = clifford_words(false);
    let post = clifford_words(true);
    let mut pre_pairs: Vec<_> = pre.iter().cartesian_product(pre.iter()).collect();
    pre_pairs.sort_by_key(|(a, b)| a.0.len() + b.0.len());
    if let Some(u) = problem.required_unitary() {
        for ((w0, m0), (w1, m1)) in &pre_pairs {
            for (cz_on, sw) in [(false, false), (true, false), (false, true), (true, true)] {
                let mut rest = kron(m0, m1);
                if cz_on {
                    rest = cz() * rest;
                }
                let lhs = if sw { swap() * u } else { u };
                let Some((a, b)) = factor(&(lhs * rest.adjoint())) else { continue };
                let (Some(q0), Some(q1)) = (lookup(&post, &a), lookup(&post, &b)) else { continue };
                let op = LocalOp {
                    pre: [w0.clone(), w1.clone()],
                    cz: cz_on,
                    post: [q0, q1],
                    swap: sw,
                    phase: Phase::One,
                };
                if let Some(w) = problem.solves(&op.matrix4()) {
                    if let Some(op) = finish(op, w, problem) {
                        return Ok((op, Tier::Clifford));
                    }
                }
            }
        }
    } else {
        for ((w0, m0), (w1, m1)) in &pre_pairs {
            for (cz_on, sw) in [(false, false), (true, false), (false, true), (true, true)] {
                let mut base = kron(m0, m1);
                if cz_on {
                    base = cz() * base;
                }
                for ((q0, n0), (q1, n1)) in post.iter().cartesian_product(post.iter()) {
                    let mut m = kron(n0, n1) * base;
                    if sw {
                        m = swap() * m;
                    }
                    if let Some(w) = problem.solves(&m) {
                        let op = LocalOp {
                            pre: [w0.clone(), w1.clone()],
                            cz: cz_on,
                            post: [q0.clone(), q1.clone()],
                            swap: sw,
                            phase: Phase::One,
                        };
                        if let Some(op) = finish(op, w, problem) {
                            return Ok((op, Tier::Clifford));
                        }
                    }
                }
            }
        }
    }
    Err(Error::SynthesisFailed)
}

/// Completes orthonormal `partial` vectors over `targets` to a full basis by
/// Gram–Schmidt against the computational basis. Listed vectors keep their
/// indices; completion vectors follow.
pub fn complete_basis(name: &str, targets: Vec<Label>, partial: Vec<Ket>) -> Result<MeasurementBasis> {
    if partial.is_empty() {
        return Ok(MeasurementBasis::computational(targets)?.all_completion());
    }
    let basis = MeasurementBasis::new(name, targets.clone(), partial)?;
    let g = basis.gram()?;
    if !g.pass {
        return Err(Error::NotOrthonormal(g.max_deviation()));
    }
    let dim = 1usize << targets.len();
    let mut have: Vec<Vec<C64>> = basis.vectors().iter().map(|v| v.amplitudes().to_vec()).collect();
    let mut extra = Vec::new();
    for e in 0..dim {
        if have.len() == dim {
            break;
        }
        let mut v = vec![ZERO; dim];
        v[e] = ONE;
        for _ in 0..2 {
            for u in &have {
                let c: C64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                v.iter_mut().zip(u).for_each(|(x, y)| *x -= c * y);
            }
        }
        let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if n > 1e-6 {
            v.iter_mut().for_each(|z| *z /= n);
            extra.push(Ket::new(targets.clone(), v.clone())?);
            have.push(v);
        }
    }
    let full = basis.with_completion(extra);
    let g = check_orthonormal(full.vectors())?;
    if !g.pass || !full.is_full() {
        return Err(Error::NotOrthonormal(g.max_deviation()));
    }
    Ok(full)
}

/// The stated party split a table is checked against.
#[derive(Clone, Debug)]
pub struct InferenceShape {
    /// Qubits the sender always holds (the payload); empty for later stages.
    pub inputs: Vec<Label>,
    /// Qubits that may be measured or received.
    pub pool: Vec<Label>,
    /// Stated measured pool qubits, in stated order.
    pub stated_measured: Vec<Label>,
    /// Stated receiver qubits, in stated print order.
    pub stated_print: Vec<Label>,
}

impl InferenceShape {
    pub fn is_stated_split(&self, c: &Candidate) -> bool {
        let mut m: Vec<&Label> = c.measure_order.iter().filter(|l| !self.inputs.contains(l)).collect();
        let mut s: Vec<&Label> = self.stated_measured.iter().collect();
        m.sort();
        s.sort();
        m == s
    }

    fn preference(&self, c: &Candidate) -> (usize, bool, bool, bool) {
        let cluster: Vec<&Label> = c.measure_order.iter().filter(|l| !self.inputs.contains(l)).collect();
        let overlap = cluster.iter().filter(|l| self.stated_measured.contains(l)).count();
        let order_kept = cluster.iter().copied().eq(self.stated_measured.iter());
        let inputs_first = c.measure_order.iter().take(self.inputs.len()).all(|l| self.inputs.contains(l));
        let receivers_kept = c.print_order == self.stated_print;
        (overlap, order_kept, inputs_first, receivers_kept)
    }

    /// Orders candidates best-first among equal scores.
    pub fn compare(&self, a: &Candidate, b: &Candidate) -> Ordering {
        let (pa, pb) = (self.preference(a), self.preference(b));
        pb.cmp(&pa).then_with(|| a.encoding().cmp(&b.encoding()))
    }

    pub fn candidates(&self, width: usize) -> Result<Vec<Candidate>> {
        if self.inputs.len() > width || width - self.inputs.len() > self.pool.len() {
            return Err(Error::DimensionMismatch(format!(
                "cannot measure {width} qubits from {} inputs and a pool of {}",
                self.inputs.len(),
                self.pool.len()
            )));
        }
        let k = width - self.inputs.len();
        let mut out = Vec::new();
        for chosen in self.pool.iter().cloned().combinations(k) {
            let rest: Vec<Label> = self.pool.iter().filter(|l| !chosen.contains(l)).cloned().collect();
            let measured: Vec<Label> = self.inputs.iter().cloned().chain(chosen).collect();
            let prints: Vec<Vec<Label>> = rest.iter().cloned().permutations(rest.len()).collect();
            for m in measured.iter().cloned().permutations(width) {
                for p in &prints {
                    out.push(Candidate { measure_order: m.clone(), print_order: p.clone() });
                }
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AssignmentVerdict {
    /// The stated party split reproduces every row.
    Consistent,
    /// Only a different split reproduces every row.
    Repaired,
    /// No split reproduces every row.
    Inconsistent,
}

#[derive(Clone, Debug, Serialize)]
pub struct CandidateFit {
    pub assignment: String,
    pub matched_rows: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct AssignmentReport {
    pub table: String,
    pub verdict: AssignmentVerdict,
    pub rows: usize,
    pub candidates_scanned: usize,
    pub best: CandidateFit,
    /// Candidates sharing the best score.
    pub tied: usize,
    /// Best candidate that keeps the stated party split.
    pub stated: Option<CandidateFit>,
    #[serde(skip)]
    pub certified: Candidate,
    /// Tied best candidates, best first.
    #[serde(skip)]
    pub ranked: Vec<Candidate>,
}

impl AssignmentReport {
    pub fn full_match(&self) -> bool {
        self.best.matched_rows.len() == self.rows
    }
}

/// Scores every candidate assignment and reports the best.
pub fn infer_assignment(table: &ProtocolTable, scenario: &Scenario, shape: &InferenceShape) -> Result<AssignmentReport> {
    let scorer = Scorer::new(table, scenario)?;
    let cands = shape.candidates(table.width)?;
    let mut scored: Vec<(Candidate, Vec<usize>)> =
        cands.into_iter().map(|c| scorer.matching_rows(&c).map(|m| (c, m))).collect::<Result<_>>()?;
    scored.sort_by(|(a, ma), (b, mb)| mb.len().cmp(&ma.len()).then_with(|| shape.compare(a, b)));
    let (best, best_rows) = scored.first().cloned().ok_or_else(|| Error::NoConsistentAssignment(format!("table {} has no candidates", table.id)))?;
    let ranked: Vec<Candidate> =
        scored.iter().take_while(|(_, m)| m.len() == best_rows.len()).map(|(c, _)| c.clone()).collect();
    let stated = scored
        .iter()
        .find(|(c, _)| shape.is_stated_split(c))
        .map(|(c, m)| CandidateFit { assignment: c.encoding(), matched_rows: m.clone() });
    let rows = table.rows.len();
    let verdict = if stated.as_ref().is_some_and(|s| s.matched_rows.len() == rows) {
        AssignmentVerdict::Consistent
    } else if best_rows.len() == rows {
        AssignmentVerdict::Repaired
    } else {
        AssignmentVerdict::Inconsistent
    };
    Ok(AssignmentReport {
        table: table.id.clone(),
        verdict,
        rows,
        candidates_scanned: scored.len(),
        best: CandidateFit { assignment: best.encoding(), matched_rows: best_rows },
        tied: ranked.len(),
        stated,
        certified: best,
        ranked,
    })
}

/// Pre-state of a follow-up measurement: the first-stage residual of row 1
/// as a linear function of the payload.
pub fn follow_up_scenario(first: &ProtocolTable, scenario: &Scenario, c: &Candidate) -> Result<Scenario> {
    let basis = Scenario { payloads: scenario.payloads[..4].to_vec(), basis_payloads: 4, joint: scenario.joint.clone() };
    let cols = row_residuals(first, &basis, c, 0)?;
    let mut out = scenario.clone();
    out.joint = JointState::Linear(cols);
    Ok(out)
}

/// Infers a two-stage assignment: among the tied best first-stage
/// candidates, the first whose follow-up table also matches fully.
pub fn infer_two_stage(
    first: &ProtocolTable,
    scenario: &Scenario,
    shape: &InferenceShape,
    second: &ProtocolTable,
    stated_measured: &[Label],
    stated_print: &[Label],
) -> Result<(AssignmentReport, AssignmentReport)> {
    let stage1 = infer_assignment(first, scenario, shape)?;
    let mut fallback: Option<(AssignmentReport, AssignmentReport)> = None;
    for c in &stage1.ranked {
        let sc2 = follow_up_scenario(first, scenario, c)?;
        let shape2 = InferenceShape {
            inputs: vec![],
            pool: c.print_order.clone(),
            stated_measured: stated_measured.to_vec(),
            stated_print: stated_print.to_vec(),
        };
        let stage2 = infer_assignment(second, &sc2, &shape2)?;
        let mut s1 = stage1.clone();
        s1.certified = c.clone();
        s1.best.assignment = c.encoding();
        if stage2.full_match() {
            return Ok((s1, stage2));
        }
        let better = fallback.as_ref().is_none_or(|(_, f)| stage2.best.matched_rows.len() > f.best.matched_rows.len());
        if better {
            fallback = Some((s1, stage2));
        }
    }
    fallback.ok_or_else(|| Error::NoConsistentAssignment(format!("table {} has no tied candidates", first.id)))
}

/// Tallies how often each correction appears, for reporting.
pub fn correction_histogram<'a>(ops: impl IntoIterator<Item = &'a LocalOp>) -> HashMap<String, usize> {
    let mut h = HashMap::new();
    for op in ops {
        *h.entry(op.to_string()).or_insert(0) += 1;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels() -> Vec<Label> {
        Label::list(&["3", "4"])
    }

    fn pairs_for(u: &Matrix4<C64>) -> Vec<(Ket, Ket)> {
        (0..4)
            .map(|x| {
                let t = Ket::basis(labels(), x).unwrap();
                let v = CorrectionProblem::vec4(&t);
                let r = u.adjoint() * v;
                (Ket::new(labels(), r.iter().copied().collect()).unwrap(), t)
            })
            .collect()
    }

    #[test]
    fn pauli_correction_found_at_first_tier() {
        let op = LocalOp::paulis(Some(Gate::X), Some(Gate::Z));
        let p = CorrectionProblem::new(pairs_for(&op.matrix4()), true).unwrap();
        let (found, tier) = synthesize_correction(&p).unwrap();
        assert_eq!(tier, Tier::Pauli);
        assert_eq!(found, op);
    }

    #[test]
    fn phase_is_reported() {
        let op = LocalOp { phase: Phase::MinusOne, ..LocalOp::paulis(Some(Gate::Y), None) };
        let p = CorrectionProblem::new(pairs_for(&op.matrix4()), true).unwrap();
        let (found, tier) = synthesize_correction(&p).unwrap();
        assert!(tier <= Tier::Phase);
        assert!((found.matrix4() - op.matrix4()).norm() < 1e-12);
    }

    #[test]
    fn cnot_needs_clifford_tier() {
        let mut cnot = Matrix4::zeros();
        for (r, c) in [(0, 0), (1, 1), (2, 3), (3, 2)] {
            cnot[(r, c)] = ONE;
        }
        let p = CorrectionProblem::new(pairs_for(&cnot), true).unwrap();
        let (found, tier) = synthesize_correction(&p).unwrap();
        assert_eq!(tier, Tier::Clifford);
        assert!((found.matrix4() - cnot).norm() < 1e-9, "{found}");
    }

    #[test]
    fn non_clifford_fails() {
        let t = C64::from_polar(1.0, std::f64::consts::FRAC_PI_4);
        let m = Matrix4::from_diagonal(&nalgebra::Vector4::new(ONE, ONE, ONE, t));
        let p = CorrectionProblem::new(pairs_for(&m), true).unwrap();
        assert!(matches!(synthesize_correction(&p), Err(Error::SynthesisFailed)));
    }

    #[test]
    fn phase_free_single_pair() {
        let r = Ket::new(labels(), vec![ZERO, ONE, ZERO, ZERO]).unwrap();
        let t = Ket::new(labels(), vec![ZERO, ZERO, C64::new(0.0, 1.0), ZERO]).unwrap();
        let (op, _) = synthesize_correction(&CorrectionProblem::single(&r, &t).unwrap()).unwrap();
        assert!(op.unitarity_error() < 1e-12);
        let out = op.apply(&r, &labels()).unwrap();
        assert!(crate::qstate::fidelity_up_to_phase(&out, &t).unwrap() > 1.0 - 1e-12);
    }

    #[test]
    fn single_qubit_clifford_group_has_24_elements() {
        assert_eq!(clifford_words(true).len(), 24);
    }

    #[test]
    fn completes_a_basis() {
        let l = Label::list(&["1", "2"]);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let bell = Ket::new(l.clone(), vec![C64::from(h), ZERO, ZERO, C64::from(h)]).unwrap();
        let b = complete_basis("test", l, vec![bell]).unwrap();
        assert!(b.is_full());
        assert_eq!(b.listed(), 1);
        assert!(b.is_completion(3));
        assert!(b.gram().unwrap().pass);
    }

    #[test]
    fn stated_split_ranks_first_among_equals() {
        let shape = InferenceShape {
            inputs: Label::list(&["a"]),
            pool: Label::list(&["1", "2", "3"]),
            stated_measured: Label::list(&["2"]),
            stated_print: Label::list(&["1", "3"]),
        };
        let mut c = shape.candidates(2).unwrap();
        assert_eq!(c.len(), 3 * 2 * 2);
        c.sort_by(|a, b| shape.compare(a, b));
        assert_eq!(c[0].encoding(), "a,2|1,3");
    }
}
