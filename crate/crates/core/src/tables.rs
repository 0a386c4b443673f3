//! Measurement tables: a line-oriented text format, errata overlays, and
//! row-by-row validation against direct simulation.
//!
//! ```text
//! table 1 width 6
//! +1:000000 +1:100101 +1:011010 +1:111111 => +a:00 +m:01 +g:10 -b:11
//! ```
//!
//! The left side is the (unnormalized) measurement ket, the right side the
//! state left with the receivers. Coefficients are `1`, `a` `m` `g` `b` for
//! α μ γ β, optionally conjugated with a trailing `*`.

use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{check_orthonormal, GramReport};
use crate::qstate::{bit_of, join_labels, parse_bitstring, Ket, Label, SecretState, C64, ONE, ZERO};
use crate::tol;

pub mod data {
    //! The checked-in tables, embedded at build time.
    pub const TABLE1: &str = include_str!("../../../data/table1.qt");
    pub const TABLE2: &str = include_str!("../../../data/table2.qt");
    pub const TABLE3: &str = include_str!("../../../data/table3.qt");
    pub const TABLE4: &str = include_str!("../../../data/table4.qt");
    pub const TABLE5: &str = include_str!("../../../data/table5.qt");
    pub const TABLE6: &str = include_str!("../../../data/table6.qt");
    pub const ERRATA: &str = include_str!("../../../data/errata.qt");

    pub fn table(id: &str) -> Option<&'static str> {
        Some(match id {
            "1" => TABLE1,
            "2" => TABLE2,
            "3" => TABLE3,
            "4" => TABLE4,
            "5" => TABLE5,
            "6" => TABLE6,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Symbol {
    One,
    Alpha,
    Mu,
    Gamma,
    Beta,
}

impl Symbol {
    fn parse(s: &str) -> Option<Symbol> {
        Some(match s {
            "1" => Symbol::One,
            "a" => Symbol::Alpha,
            "m" => Symbol::Mu,
            "g" => Symbol::Gamma,
            "b" => Symbol::Beta,
            _ => return None,
        })
    }

    fn code(self) -> &'static str {
        match self {
            Symbol::One => "1",
            Symbol::Alpha => "a",
            Symbol::Mu => "m",
            Symbol::Gamma => "g",
            Symbol::Beta => "b",
        }
    }

    pub fn value(self, s: &SecretState) -> C64 {
        match self {
            Symbol::One => ONE,
            Symbol::Alpha => s.alpha,
            Symbol::Mu => s.mu,
            Symbol::Gamma => s.gamma,
            Symbol::Beta => s.beta,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Term {
    pub negative: bool,
    pub symbol: Symbol,
    pub conjugate: bool,
    pub bits: String,
}

impl Term {
    pub fn value(&self, s: &SecretState) -> C64 {
        let v = self.symbol.value(s);
        let v = if self.conjugate { v.conj() } else { v };
        if self.negative {
            -v
        } else {
            v
        }
    }

    fn index(&self) -> usize {
        parse_bitstring(&self.bits).expect("validated at parse time")
    }

    /// Parses `+a*:0101`; errors carry a column relative to the term start.
    pub fn parse(text: &str) -> std::result::Result<Term, (usize, String)> {
        let mut chars = text.chars();
        let negative = match chars.next() {
            Some('+') => false,
            Some('-') => true,
            _ => return Err((0, "term must start with `+` or `-`".into())),
        };
        let body = &text[1..];
        let (coeff, bits) =
            body.split_once(':').ok_or_else(|| (1, "expected `:` between coefficient and bits".into()))?;
        let (name, conjugate) = match coeff.strip_suffix('*') {
            Some(n) => (n, true),
            None => (coeff, false),
        };
        let symbol = Symbol::parse(name).ok_or((1, format!("?{coeff}")))?;
        if conjugate && symbol == Symbol::One {
            return Err((1, format!("?{coeff}")));
        }
        if bits.is_empty() || !bits.chars().all(|c| c == '0' || c == '1') {
            return Err((coeff.len() + 2, format!("`{bits}` is not a bitstring")));
        }
        if parse_bitstring(bits).is_none() {
            return Err((coeff.len() + 2, "bitstring too long".into()));
        }
        Ok(Term { negative, symbol, conjugate, bits: bits.to_string() })
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}{}:{}",
            if self.negative { '-' } else { '+' },
            self.symbol.code(),
            if self.conjugate { "*" } else { "" },
            self.bits
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Row {
    pub outcome: Vec<Term>,
    pub result: Vec<Term>,
}

impl Row {
    pub fn secret_dependent_outcome(&self) -> bool {
        self.outcome.iter().any(|t| t.symbol != Symbol::One)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Lhs,
    Rhs,
}

#[derive(Clone, Debug)]
pub struct ProtocolTable {
    pub id: String,
    pub width: usize,
    pub result_width: usize,
    pub rows: Vec<Row>,
    /// Source line of each row (1-based), for diagnostics.
    pub lines: Vec<usize>,
}

impl PartialEq for ProtocolTable {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id && self.width == other.width && self.rows == other.rows
    }
}

fn parse_error(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, column, message: message.into() }
}

pub fn parse_table(text: &str) -> Result<ProtocolTable> {
    let mut header: Option<(String, usize)> = None;
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    let mut result_width: Option<usize> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        let indent = content.len() - content.trim_start().len();
        let content = content.trim();
        if content.starts_with("table") {
            if header.is_some() {
                return Err(parse_error(line, indent + 1, "duplicate table header"));
            }
            let parts: Vec<&str> = content.split_whitespace().collect();
            if parts.len() != 4 || parts[0] != "table" || parts[2] != "width" {
                return Err(parse_error(line, indent + 1, "expected `table <id> width <int>`"));
            }
            let width: usize = parts[3]
                .parse()
                .ok()
                .filter(|w| (1..=10).contains(w))
                .ok_or_else(|| parse_error(line, indent + 1, format!("bad width `{}`", parts[3])))?;
            header = Some((parts[1].to_string(), width));
            continue;
        }
        let Some((_, width)) = &header else {
            return Err(parse_error(line, indent + 1, "row before table header"));
        };
        let (lhs, rhs) = content
            .split_once("=>")
            .ok_or_else(|| parse_error(line, indent + 1, "expected `=>` between outcome and result"))?;
        let side = |s: &str, offset: usize| -> Result<Vec<Term>> {
            let mut terms = Vec::new();
            let mut col = offset;
            for tok in s.split(' ') {
                if tok.is_empty() {
                    col += 1;
                    continue;
                }
                let t = Term::parse(tok).map_err(|(c, msg)| match msg.strip_prefix('?') {
                    Some(sym) => Error::UnknownSymbol { line, symbol: sym.to_string() },
                    None => parse_error(line, col + c + 1, msg),
                })?;
                terms.push(t);
                col += tok.len() + 1;
            }
            if terms.is_empty() {
                return Err(parse_error(line, offset + 1, "empty side"));
            }
            Ok(terms)
        };
        let outcome = side(lhs, indent)?;
        let result = side(rhs, indent + lhs.len() + 2)?;
        if let Some(t) = outcome.iter().find(|t| t.bits.len() != *width) {
            return Err(Error::Width {
                line,
                message: format!("outcome term `{t}` has {} bits, table width is {width}", t.bits.len()),
            });
        }
        let rw = result[0].bits.len();
        if let Some(t) = result.iter().find(|t| t.bits.len() != rw) {
            return Err(Error::Width { line, message: format!("result term `{t}` width differs within row") });
        }
        match result_width {
            Some(w) if w != rw => {
                return Err(Error::Width { line, message: format!("result width {rw}, earlier rows use {w}") })
            }
            _ => result_width = Some(rw),
        }
        rows.push(Row { outcome, result });
        lines.push(line);
    }
    let (id, width) = header.ok_or_else(|| parse_error(1, 1, "missing table header"))?;
    let result_width = result_width.ok_or_else(|| parse_error(1, 1, "table has no rows"))?;
    Ok(ProtocolTable { id, width, result_width, rows, lines })
}

impl ProtocolTable {
    pub fn to_text(&self) -> String {
        let mut out = format!("table {} width {}\n", self.id, self.width);
        for r in &self.rows {
            let side = |ts: &[Term]| ts.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(" ");
            out.push_str(&format!("{} => {}\n", side(&r.outcome), side(&r.result)));
        }
        out
    }

    pub fn load_embedded(id: &str) -> Result<ProtocolTable> {
        parse_table(data::table(id).ok_or_else(|| Error::Invalid(format!("no embedded table {id}")))?)
    }

    /// Applies the errata addressed to this table. Returns the patched table
    /// and the status of every erratum considered.
    pub fn apply_errata(&self, errata: &[Erratum]) -> (ProtocolTable, Vec<ErratumStatus>) {
        let mut out = self.clone();
        let mut statuses = Vec::new();
        for e in errata.iter().filter(|e| e.table == self.id) {
            let applied = out
                .rows
                .get_mut(e.row.wrapping_sub(1))
                .and_then(|r| match e.side {
                    Side::Lhs => r.outcome.get_mut(e.term.wrapping_sub(1)),
                    Side::Rhs => r.result.get_mut(e.term.wrapping_sub(1)),
                })
                .filter(|t| **t == e.printed && t.bits.len() == e.replacement.bits.len())
                .map(|t| *t = e.replacement.clone())
                .is_some();
            statuses.push(ErratumStatus { erratum: e.clone(), applied });
        }
        (out, statuses)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Erratum {
    pub table: String,
    pub row: usize,
    pub side: Side,
    pub term: usize,
    pub printed: Term,
    pub replacement: Term,
}

impl Serialize for Erratum {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Erratum", 6)?;
        st.serialize_field("table", &self.table)?;
        st.serialize_field("row", &self.row)?;
        st.serialize_field("side", &self.side)?;
        st.serialize_field("term", &self.term)?;
        st.serialize_field("printed", &self.printed.to_string())?;
        st.serialize_field("replacement", &self.replacement.to_string())?;
        st.end()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ErratumStatus {
    pub erratum: Erratum,
    /// False when the printed term was not found at the stated position.
    pub applied: bool,
}

/// `table row side term printed replacement`, one per line.
pub fn parse_errata(text: &str) -> Result<Vec<Erratum>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let f: Vec<&str> = content.split_whitespace().collect();
        if f.len() != 6 {
            return Err(parse_error(line, 1, "expected `table row side term printed replacement`"));
        }
        let num = |s: &str, col: usize| {
            s.parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| parse_error(line, col, format!("expected a positive integer, found `{s}`")))
        };
        let side = match f[2] {
            "lhs" => Side::Lhs,
            "rhs" => Side::Rhs,
            other => return Err(parse_error(line, 1, format!("side must be lhs or rhs, found `{other}`"))),
        };
        let term = |s: &str| Term::parse(s).map_err(|(c, m)| parse_error(line, c + 1, m));
        out.push(Erratum {
            table: f[0].to_string(),
            row: num(f[1], 1)?,
            side,
            term: num(f[3], 1)?,
            printed: term(f[4])?,
            replacement: term(f[5])?,
        });
    }
    Ok(out)
}

pub fn embedded_errata() -> Vec<Erratum> {
    parse_errata(data::ERRATA).expect("embedded errata parse")
}

/// The joint state a table's measurement acts on.
#[derive(Clone, Debug)]
pub enum JointState {
    /// `Σ_x c_x · columns[x]` for the payload `(c_0..c_3) = (α, μ, γ, β)`.
    Linear(Vec<Ket>),
    /// A payload-independent state; the payload enters through the
    /// measurement kets.
    Fixed(Ket),
}

impl JointState {
    /// `|x⟩_inputs ⊗ channel` columns.
    pub fn payload_times(inputs: &[Label], channel: &Ket) -> Result<JointState> {
        let cols = (0..4)
            .map(|x| Ket::basis(inputs.to_vec(), x).and_then(|b| b.tensor(channel)))
            .collect::<Result<_>>()?;
        Ok(JointState::Linear(cols))
    }

    pub fn labels(&self) -> &[Label] {
        match self {
            JointState::Linear(c) => c[0].labels(),
            JointState::Fixed(k) => k.labels(),
        }
    }

    pub fn at(&self, s: &SecretState) -> Result<Ket> {
        match self {
            JointState::Fixed(k) => Ok(k.clone()),
            JointState::Linear(cols) => {
                let coeffs = s.coeffs();
                let amps = (0..cols[0].dim())
                    .map(|i| cols.iter().zip(coeffs).map(|(c, w)| c.amplitudes()[i] * w).sum())
                    .collect();
                Ket::new(cols[0].labels().to_vec(), amps)
            }
        }
    }

    fn sparse_at(&self, s: &SecretState) -> Result<Vec<(usize, C64)>> {
        Ok(self.at(s)?.support().collect())
    }
}

/// Which labels the table's measurement ket reads, and in which order the
/// result states print the remaining qubits.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Candidate {
    pub measure_order: Vec<Label>,
    pub print_order: Vec<Label>,
}

impl Candidate {
    pub fn new(measure: &[&str], print: &[&str]) -> Self {
        Candidate { measure_order: Label::list(measure), print_order: Label::list(print) }
    }

    /// `a,b,1,6,2,5|3,4`.
    pub fn encoding(&self) -> String {
        format!("{}|{}", join_labels(&self.measure_order), join_labels(&self.print_order))
    }

    pub fn parse(spec: &str) -> Result<Candidate> {
        let (m, p) = spec
            .split_once('|')
            .ok_or_else(|| Error::Invalid(format!("assignment `{spec}` must look like `a,b,1,6,2,5|3,4`")))?;
        let list = |s: &str| -> Vec<Label> {
            s.split(',').map(str::trim).filter(|t| !t.is_empty()).map(Label::from).collect()
        };
        Ok(Candidate { measure_order: list(m), print_order: list(p) })
    }
}

impl fmt::Display for Candidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encoding())
    }
}

/// A table together with the state it is checked against and the payloads
/// used to probe it.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub joint: JointState,
    /// Probe payloads; for linear joints the first four are the basis.
    pub payloads: Vec<SecretState>,
    /// How many leading payloads are the computational basis.
    pub basis_payloads: usize,
}

impl Scenario {
    /// Basis payloads plus `random` Haar payloads drawn from `seed`.
    pub fn linear(joint: JointState, random: usize, seed: u64) -> Scenario {
        let mut payloads: Vec<SecretState> = (0..4).map(SecretState::basis).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        payloads.extend((0..random).map(|_| SecretState::haar(&mut rng)));
        Scenario { joint, payloads, basis_payloads: 4 }
    }

    pub fn fixed(joint: Ket, payloads: Vec<SecretState>) -> Scenario {
        Scenario { joint: JointState::Fixed(joint), payloads, basis_payloads: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RowVerdict {
    Match,
    PhaseMatch { phase_re: f64, phase_im: f64 },
    Mismatch { distance: f64 },
}

impl RowVerdict {
    pub fn is_match(&self) -> bool {
        !matches!(self, RowVerdict::Mismatch { .. })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RowReport {
    pub row: usize,
    pub line: usize,
    pub verdict: RowVerdict,
    /// Outcome probability for the first probe payload.
    pub probability: f64,
    /// A single sign flip that would make the row match, if one exists.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub near_miss: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub table: String,
    pub assignment: String,
    pub rows: Vec<RowReport>,
    pub matched: usize,
    pub phase_matched: usize,
    pub mismatched: usize,
    pub gram: GramReport,
    /// Verdicts on the basis payloads alone agree with verdicts on all payloads.
    pub payload_independent: bool,
}

impl ValidationReport {
    pub fn all_match(&self) -> bool {
        self.mismatched == 0
    }

    pub fn failing_rows(&self) -> Vec<usize> {
        self.rows.iter().filter(|r| !r.verdict.is_match()).map(|r| r.row).collect()
    }
}

/// Precomputed positions for one candidate against one joint state.
struct Placement {
    mpos: Vec<usize>,
    ppos: Vec<usize>,
    n: usize,
}

impl Placement {
    fn new(joint_labels: &[Label], c: &Candidate, table: &ProtocolTable) -> Result<Placement> {
        let n = joint_labels.len();
        let pos = |l: &Label| {
            joint_labels.iter().position(|j| j == l).ok_or_else(|| Error::UnknownLabel(l.to_string()))
        };
        let mpos: Vec<usize> = c.measure_order.iter().map(pos).collect::<Result<_>>()?;
        let ppos: Vec<usize> = c.print_order.iter().map(pos).collect::<Result<_>>()?;
        let mut all: Vec<usize> = mpos.iter().chain(&ppos).copied().collect();
        all.sort_unstable();
        all.dedup();
        if all.len() != n || mpos.len() + ppos.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "assignment {} does not partition ({})",
                c,
                join_labels(joint_labels)
            )));
        }
        if mpos.len() != table.width || ppos.len() != table.result_width {
            return Err(Error::DimensionMismatch(format!(
                "assignment {} measures {} and prints {} qubits; table {} has widths {} and {}",
                c,
                mpos.len(),
                ppos.len(),
                table.id,
                table.width,
                table.result_width
            )));
        }
        Ok(Placement { mpos, ppos, n })
    }

    fn extract(&self, idx: usize, pos: &[usize]) -> usize {
        pos.iter().fold(0, |acc, &p| (acc << 1) | bit_of(idx, p, self.n))
    }
}

fn dense(terms: &[Term], width: usize, s: &SecretState) -> Vec<C64> {
    let mut v = vec![ZERO; 1 << width];
    for t in terms {
        v[t.index()] += t.value(s);
    }
    v
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Oracle residual for one row and payload, indexed in print order. Also
/// returns the outcome probability.
fn residual(
    row: &Row,
    table: &ProtocolTable,
    place: &Placement,
    joint: &[(usize, C64)],
    s: &SecretState,
) -> (Vec<C64>, f64) {
    let mut o = dense(&row.outcome, table.width, s);
    let on = norm(&o);
    let mut r = vec![ZERO; 1 << table.result_width];
    if on <= f64::EPSILON {
        return (r, 0.0);
    }
    o.iter_mut().for_each(|z| *z /= on);
    for &(idx, a) in joint {
        let w = o[place.extract(idx, &place.mpos)];
        if w != ZERO {
            r[place.extract(idx, &place.ppos)] += w.conj() * a;
        }
    }
    let p = norm(&r).powi(2);
    (r, p)
}

#[derive(Clone, Copy, Debug)]
struct Fit {
    distance: f64,
    phase: C64,
    scale: f64,
}

fn fit(r: &[C64], p: &[C64]) -> Option<Fit> {
    let (rn, pn) = (norm(r), norm(p));
    if rn <= tol::NUMERIC && pn <= tol::NUMERIC {
        return None;
    }
    if rn <= tol::NUMERIC || pn <= tol::NUMERIC {
        return Some(Fit { distance: 1.0, phase: ONE, scale: 0.0 });
    }
    let c: C64 = p.iter().zip(r).map(|(a, b)| a.conj() * b).sum::<C64>() / (rn * pn);
    // ‖r̂ − c·p̂‖ directly; sqrt(1 − |c|²) loses half the digits.
    let distance = p
        .iter()
        .zip(r)
        .map(|(a, b)| (b / rn - c * a / pn).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let phase = if c.norm() > 0.0 { c / c.norm() } else { ONE };
    Some(Fit { distance, phase, scale: rn / pn })
}

fn verdict_from(fits: &[Fit]) -> RowVerdict {
    let Some(first) = fits.first() else {
        return RowVerdict::Mismatch { distance: 1.0 };
    };
    let mut worst = fits.iter().map(|f| f.distance).fold(0.0, f64::max);
    for f in fits {
        worst = worst.max((f.phase - first.phase).norm());
        if first.scale > 0.0 {
            worst = worst.max((f.scale / first.scale - 1.0).abs());
        }
    }
    if worst > tol::NUMERIC {
        RowVerdict::Mismatch { distance: worst }
    } else if (first.phase - ONE).norm() <= tol::NUMERIC {
        RowVerdict::Match
    } else {
        RowVerdict::PhaseMatch { phase_re: first.phase.re, phase_im: first.phase.im }
    }
}

fn row_verdict(
    row: &Row,
    table: &ProtocolTable,
    place: &Placement,
    joints: &[Vec<(usize, C64)>],
    payloads: &[SecretState],
) -> (RowVerdict, f64) {
    let mut fits = Vec::with_capacity(payloads.len());
    let mut prob0 = None;
    for (j, s) in joints.iter().zip(payloads) {
        let (r, p) = residual(row, table, place, j, s);
        prob0.get_or_insert(p);
        let printed = dense(&row.result, table.result_width, s);
        if let Some(f) = fit(&r, &printed) {
            fits.push(f);
        }
    }
    (verdict_from(&fits), prob0.unwrap_or(0.0))
}

/// Counts matching rows using the basis payloads only (all payloads when the
/// joint state is fixed). This is the scoring function behind assignment
/// inference.
pub struct Scorer<'a> {
    table: &'a ProtocolTable,
    joint_labels: Vec<Label>,
    joints: Vec<Vec<(usize, C64)>>,
    payloads: Vec<SecretState>,
}

impl<'a> Scorer<'a> {
    pub fn new(table: &'a ProtocolTable, scenario: &Scenario) -> Result<Self> {
        let k = if scenario.basis_payloads > 0 { scenario.basis_payloads } else { scenario.payloads.len() };
        let payloads = scenario.payloads[..k].to_vec();
        let joints = payloads.iter().map(|s| scenario.joint.sparse_at(s)).collect::<Result<_>>()?;
        Ok(Scorer { table, joint_labels: scenario.joint.labels().to_vec(), joints, payloads })
    }

    /// 1-based indices of rows that match under `c`.
    pub fn matching_rows(&self, c: &Candidate) -> Result<Vec<usize>> {
        let place = Placement::new(&self.joint_labels, c, self.table)?;
        Ok(self
            .table
            .rows
            .iter()
            .enumerate()
            .filter(|(_, row)| row_verdict(row, self.table, &place, &self.joints, &self.payloads).0.is_match())
            .map(|(i, _)| i + 1)
            .collect())
    }
}

fn near_miss(
    row: &Row,
    table: &ProtocolTable,
    place: &Placement,
    joints: &[Vec<(usize, C64)>],
    payloads: &[SecretState],
) -> Option<String> {
    let sides = [(Side::Lhs, row.outcome.len()), (Side::Rhs, row.result.len())];
    for (side, len) in sides {
        for k in 0..len {
            let mut trial = row.clone();
            let (label, t) = match side {
                Side::Lhs => ("measurement", &mut trial.outcome[k]),
                Side::Rhs => ("result", &mut trial.result[k]),
            };
            t.negative = !t.negative;
            let shown = t.to_string();
            if row_verdict(&trial, table, place, joints, payloads).0.is_match() {
                return Some(format!("{label} term {} would match as `{shown}`", k + 1));
            }
        }
    }
    None
}

/// Validates every row of `table` under assignment `c`.
pub fn validate_table(table: &ProtocolTable, scenario: &Scenario, c: &Candidate) -> Result<ValidationReport> {
    let place = Placement::new(scenario.joint.labels(), c, table)?;
    let joints: Vec<Vec<(usize, C64)>> =
        scenario.payloads.iter().map(|s| scenario.joint.sparse_at(s)).collect::<Result<_>>()?;
    let nb = scenario.basis_payloads;
    let mut rows = Vec::with_capacity(table.rows.len());
    let mut payload_independent = true;
    for (i, row) in table.rows.iter().enumerate() {
        let (verdict, probability) = row_verdict(row, table, &place, &joints, &scenario.payloads);
        if nb > 0 && nb < scenario.payloads.len() {
            let (basis_only, _) = row_verdict(row, table, &place, &joints[..nb], &scenario.payloads[..nb]);
            payload_independent &= basis_only.is_match() == verdict.is_match();
        }
        let near_miss = if verdict.is_match() {
            None
        } else {
            near_miss(row, table, &place, &joints, &scenario.payloads)
        };
        rows.push(RowReport { row: i + 1, line: table.lines.get(i).copied().unwrap_or(0), verdict, probability, near_miss });
    }
    let gram = outcome_gram(table, &scenario.payloads, &c.measure_order)?;
    let matched = rows.iter().filter(|r| matches!(r.verdict, RowVerdict::Match)).count();
    let phase_matched = rows.iter().filter(|r| matches!(r.verdict, RowVerdict::PhaseMatch { .. })).count();
    Ok(ValidationReport {
        table: table.id.clone(),
        assignment: c.encoding(),
        mismatched: rows.len() - matched - phase_matched,
        rows,
        matched,
        phase_matched,
        gram,
        payload_independent,
    })
}

/// Oracle residuals of one row (0-based) for every scenario payload, over
/// the candidate's print order. Not renormalized.
pub fn row_residuals(table: &ProtocolTable, scenario: &Scenario, c: &Candidate, row: usize) -> Result<Vec<Ket>> {
    let place = Placement::new(scenario.joint.labels(), c, table)?;
    let r = table.rows.get(row).ok_or_else(|| Error::Invalid(format!("table {} has no row {}", table.id, row + 1)))?;
    scenario
        .payloads
        .iter()
        .map(|s| {
            let joint = scenario.joint.sparse_at(s)?;
            Ket::new(c.print_order.clone(), residual(r, table, &place, &joint, s).0)
        })
        .collect()
}

/// Normalized measurement kets of every row for one payload.
pub fn outcome_kets(table: &ProtocolTable, s: &SecretState, labels: &[Label]) -> Result<Vec<Ket>> {
    table
        .rows
        .iter()
        .map(|r| Ket::new(labels.to_vec(), dense(&r.outcome, table.width, s))?.normalized())
        .collect()
}

/// Result states of every row for one payload, unnormalized.
pub fn result_kets(table: &ProtocolTable, s: &SecretState, labels: &[Label]) -> Result<Vec<Ket>> {
    table.rows.iter().map(|r| Ket::new(labels.to_vec(), dense(&r.result, table.result_width, s))).collect()
}

/// Worst Gram report of the measurement kets over the given payloads.
pub fn outcome_gram(table: &ProtocolTable, payloads: &[SecretState], labels: &[Label]) -> Result<GramReport> {
    let probe: Vec<SecretState> = if table.rows.iter().any(Row::secret_dependent_outcome) {
        payloads.to_vec()
    } else {
        payloads.iter().take(1).copied().collect()
    };
    let probe = if probe.is_empty() { vec![SecretState::basis(0)] } else { probe };
    let mut worst: Option<GramReport> = None;
    for s in &probe {
        let g = check_orthonormal(&outcome_kets(table, s, labels)?)?;
        if worst.as_ref().is_none_or(|w| g.max_deviation() > w.max_deviation()) {
            worst = Some(g);
        }
    }
    Ok(worst.expect("at least one probe"))
}

/// For every row, the largest overlap `|⟨k_i|k_j⟩|` with another row's
/// measurement ket, maximized over the probe payloads.
pub fn row_overlaps(table: &ProtocolTable, payloads: &[SecretState], labels: &[Label]) -> Result<Vec<f64>> {
    let probe: &[SecretState] = if table.rows.iter().any(Row::secret_dependent_outcome) {
        payloads
    } else {
        &payloads[..payloads.len().min(1)]
    };
    let mut worst = vec![0.0f64; table.rows.len()];
    for s in probe {
        let kets = outcome_kets(table, s, labels)?;
        for i in 0..kets.len() {
            for j in i + 1..kets.len() {
                let g = kets[i].inner_positional(&kets[j])?.norm();
                worst[i] = worst[i].max(g);
                worst[j] = worst[j].max(g);
            }
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug, Serialize)]
pub struct ErratumAudit {
    pub erratum: Erratum,
    /// The printed term was present at the stated position.
    pub found: bool,
    /// The printed row mismatches or overlaps another row.
    pub printed_row_fails: bool,
    /// With its row's errata applied, the row matches and is orthogonal to
    /// every other row.
    pub corrected_row_passes: bool,
    pub accepted: bool,
}

/// Audits the errata for `verbatim` under assignment `c`. Errata are
/// accepted per row: only when the printed row fails and the corrected row
/// passes. Returns the table with exactly the accepted errata applied.
pub fn audit_errata(
    verbatim: &ProtocolTable,
    errata: &[Erratum],
    scenario: &Scenario,
    c: &Candidate,
) -> Result<(ProtocolTable, Vec<ErratumAudit>)> {
    let (patched, statuses) = verbatim.apply_errata(errata);
    if statuses.is_empty() {
        return Ok((verbatim.clone(), vec![]));
    }
    let before = validate_table(verbatim, scenario, c)?;
    let after = validate_table(&patched, scenario, c)?;
    let ov_before = row_overlaps(verbatim, &scenario.payloads, &c.measure_order)?;
    let ov_after = row_overlaps(&patched, &scenario.payloads, &c.measure_order)?;
    let mut audits: Vec<ErratumAudit> = statuses
        .into_iter()
        .map(|st| {
            let i = st.erratum.row - 1;
            let printed_row_fails = before.rows.get(i).is_none_or(|r| !r.verdict.is_match())
                || ov_before.get(i).is_some_and(|&o| o > tol::NUMERIC);
            let corrected_row_passes = after.rows.get(i).is_some_and(|r| r.verdict.is_match())
                && ov_after.get(i).is_some_and(|&o| o <= tol::NUMERIC);
            ErratumAudit { erratum: st.erratum, found: st.applied, printed_row_fails, corrected_row_passes, accepted: false }
        })
        .collect();
    // A row's errata stand or fall together.
    let rows: Vec<usize> = audits.iter().map(|a| a.erratum.row).collect();
    for row in rows {
        let ok = audits
            .iter()
            .filter(|a| a.erratum.row == row)
            .all(|a| a.found && a.printed_row_fails && a.corrected_row_passes);
        audits.iter_mut().filter(|a| a.erratum.row == row).for_each(|a| a.accepted = ok);
    }
    let accepted: Vec<Erratum> = audits.iter().filter(|a| a.accepted).map(|a| a.erratum.clone()).collect();
    Ok((verbatim.apply_errata(&accepted).0, audits))
}

/// Symbol → count, for reporting.
pub fn symbol_set(table: &ProtocolTable) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for r in &table.rows {
        for t in r.outcome.iter().chain(&r.result) {
            let key = format!("{}{}", t.symbol.code(), if t.conjugate { "*" } else { "" });
            *m.entry(key).or_insert(0) += 1;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::c6;

    #[test]
    fn parses_table1_first_row() {
        let t = parse_table(
            "table 1 width 6\n+1:000000 +1:100101 +1:011010 +1:111111 => +a:00 +m:01 +g:10 -b:11\n",
        )
        .unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.width, 6);
        assert_eq!(t.result_width, 2);
        let r = &t.rows[0];
        assert_eq!(r.outcome[1].bits, "100101");
        assert!(r.result[3].negative);
        assert_eq!(r.result[3].symbol, Symbol::Beta);
    }

    #[test]
    fn conjugate_marker_is_kept() {
        let t = parse_table("table 6 width 4\n+a*:0101 => +a:00\n").unwrap();
        let term = &t.rows[0].outcome[0];
        assert!(term.conjugate);
        assert_eq!(term.symbol, Symbol::Alpha);
        assert_eq!(term.bits, "0101");
    }

    #[test]
    fn mixed_widths_are_rejected() {
        let e = parse_table("table 9 width 6\n+1:00000 +1:000000 => +a:00\n").unwrap_err();
        assert!(matches!(e, Error::Width { line: 2, .. }), "{e}");
        let e = parse_table("table 9 width 2\n+1:00 => +a:00\n+1:11 => +a:000\n").unwrap_err();
        assert!(matches!(e, Error::Width { line: 3, .. }), "{e}");
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let e = parse_table("table 1 width 2\n+1:00 +1:11 +a:01\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        let e = parse_table("table 1 width 2\n+1:00 => +z:01\n").unwrap_err();
        assert!(matches!(e, Error::UnknownSymbol { line: 2, .. }), "{e}");
        let e = parse_table("table 1 width 2\n+1:00 => +a:0x\n").unwrap_err();
        match e {
            Error::Parse { line, column, .. } => {
                assert_eq!(line, 2);
                assert_eq!(column, 13);
            }
            other => panic!("{other}"),
        }
        assert!(parse_table("+1:00 => +a:00\n").is_err());
        assert!(parse_table("table 1 width 2\n").is_err());
        assert!(matches!(parse_table("table 1 width 2\n+1*:00 => +a:00\n"), Err(Error::UnknownSymbol { .. })));
    }

    #[test]
    fn garbage_file_fails() {
        assert!(parse_table(include_str!("../../../data/garbage.qt")).is_err());
    }

    #[test]
    fn embedded_tables_parse() {
        for id in ["1", "2", "3", "4", "5", "6"] {
            let t = ProtocolTable::load_embedded(id).unwrap();
            assert_eq!(t.id, id);
        }
        assert_eq!(embedded_errata().len(), 23);
    }

    #[test]
    fn errata_apply_only_when_printed_term_matches() {
        let t = ProtocolTable::load_embedded("1").unwrap();
        let (patched, st) = t.apply_errata(&embedded_errata());
        assert!(st.iter().all(|s| s.applied));
        assert_eq!(patched.rows[8].outcome[3].bits, "110101");
        let (again, st) = patched.apply_errata(&embedded_errata());
        assert!(st.iter().all(|s| !s.applied));
        assert_eq!(again, patched);
    }

    #[test]
    fn table1_row1_matches_under_teleport_assignment() {
        let t = ProtocolTable::load_embedded("1").unwrap();
        let sc = Scenario::linear(JointState::payload_times(&Label::list(&["a", "b"]), &c6()).unwrap(), 5, 1);
        let c = Candidate::new(&["b", "a", "1", "6", "2", "5"], &["3", "4"]);
        let rep = validate_table(&t, &sc, &c).unwrap();
        assert_eq!(rep.rows[0].verdict, RowVerdict::Match);
        assert!((rep.rows[0].probability - 1.0 / 16.0).abs() < 1e-12);
        assert!(rep.payload_independent);
    }

    #[test]
    fn candidate_encoding_round_trip() {
        let c = Candidate::new(&["a", "b", "1"], &["2"]);
        assert_eq!(Candidate::parse(&c.encoding()).unwrap(), c);
        assert!(Candidate::parse("a,b").is_err());
    }
}
