//! Projective measurement over labelled qubit subsets.
//!
//! Measured qubits are removed from the register: a residual only carries the
//! labels that were not measured, in their prior order.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::qstate::{bit_of, parse_bitstring, Ket, Label, C64, ONE, ZERO};
use crate::tol;

#[derive(Clone, Debug)]
pub struct MeasurementBasis {
    name: String,
    targets: Vec<Label>,
    vectors: Vec<Ket>,
    /// Leading vectors that came from a table; the rest are completion.
    listed: usize,
}

impl MeasurementBasis {
    /// Every vector must be normalized and defined over `targets` (in any
    /// label order; it is permuted to match).
    pub fn new(name: impl Into<String>, targets: Vec<Label>, vectors: Vec<Ket>) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::Invalid("empty measurement basis".into()));
        }
        let vectors = vectors
            .into_iter()
            .map(|v| {
                if !v.is_normalized() {
                    return Err(Error::NotNormalized(v.norm_sqr()));
                }
                v.permute(&targets)
            })
            .collect::<Result<Vec<_>>>()?;
        if vectors.len() > 1 << targets.len() {
            return Err(Error::Invalid("more vectors than the dimension allows".into()));
        }
        let listed = vectors.len();
        Ok(MeasurementBasis { name: name.into(), targets, vectors, listed })
    }

    /// Computational basis over `targets`.
    pub fn computational(targets: Vec<Label>) -> Result<Self> {
        let vectors =
            (0..1usize << targets.len()).map(|i| Ket::basis(targets.clone(), i)).collect::<Result<_>>()?;
        MeasurementBasis::new("computational", targets, vectors)
    }

    pub(crate) fn all_completion(mut self) -> Self {
        self.listed = 0;
        self
    }

    pub(crate) fn with_completion(mut self, extra: Vec<Ket>) -> Self {
        self.vectors.extend(extra);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn targets(&self) -> &[Label] {
        &self.targets
    }

    pub fn vectors(&self) -> &[Ket] {
        &self.vectors
    }

    pub fn listed(&self) -> usize {
        self.listed
    }

    pub fn is_full(&self) -> bool {
        self.vectors.len() == 1 << self.targets.len()
    }

    pub fn is_completion(&self, index: usize) -> bool {
        index >= self.listed
    }

    pub fn gram(&self) -> Result<GramReport> {
        check_orthonormal(&self.vectors)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GramReport {
    pub vectors: usize,
    pub max_off_diagonal: f64,
    pub max_diagonal_deviation: f64,
    /// Pair with the largest off-diagonal overlap (0-based).
    pub worst_pair: Option<(usize, usize)>,
    pub pass: bool,
}

impl GramReport {
    pub fn max_deviation(&self) -> f64 {
        self.max_off_diagonal.max(self.max_diagonal_deviation)
    }
}

pub fn check_orthonormal(vectors: &[Ket]) -> Result<GramReport> {
    let first = vectors.first().ok_or_else(|| Error::Invalid("empty vector list".into()))?;
    if let Some(v) = vectors.iter().find(|v| v.dim() != first.dim()) {
        return Err(Error::DimensionMismatch(format!("{} vs {}", first.dim(), v.dim())));
    }
    let mut off = 0.0f64;
    let mut diag = 0.0f64;
    let mut worst = None;
    for (i, u) in vectors.iter().enumerate() {
        diag = diag.max((u.norm_sqr() - 1.0).abs());
        for (j, v) in vectors.iter().enumerate().skip(i + 1) {
            let g = u.inner_positional(v)?.norm();
            if g > off {
                off = g;
                worst = Some((i, j));
            }
        }
    }
    Ok(GramReport {
        vectors: vectors.len(),
        max_off_diagonal: off,
        max_diagonal_deviation: diag,
        worst_pair: worst,
        pass: off <= tol::NUMERIC && diag <= tol::NUMERIC,
    })
}

#[derive(Clone, Debug)]
pub struct Projection {
    pub probability: f64,
    /// Normalized when `probability > PROB_FLOOR`, raw otherwise.
    pub residual: Ket,
}

struct Layout {
    target_pos: Vec<usize>,
    rest_pos: Vec<usize>,
    rest_labels: Vec<Label>,
}

fn layout(state: &Ket, targets: &[Label]) -> Result<Layout> {
    let target_pos: Vec<usize> = targets.iter().map(|l| state.position(l)).collect::<Result<_>>()?;
    let rest_pos: Vec<usize> = (0..state.n_qubits()).filter(|p| !target_pos.contains(p)).collect();
    if rest_pos.is_empty() {
        return Err(Error::Invalid("projection would leave no unmeasured qubits".into()));
    }
    let rest_labels = rest_pos.iter().map(|&p| state.labels()[p].clone()).collect();
    Ok(Layout { target_pos, rest_pos, rest_labels })
}

/// `(⟨v| ⊗ I) |state⟩` without normalization.
pub fn project_unnormalized(state: &Ket, v: &Ket) -> Result<Ket> {
    let lay = layout(state, v.labels())?;
    let n = state.n_qubits();
    let mut out = vec![ZERO; 1 << lay.rest_pos.len()];
    let va = v.amplitudes();
    for (idx, a) in state.support() {
        let t = lay.target_pos.iter().fold(0, |acc, &p| (acc << 1) | bit_of(idx, p, n));
        let w = va[t];
        if w == ZERO {
            continue;
        }
        let r = lay.rest_pos.iter().fold(0, |acc, &p| (acc << 1) | bit_of(idx, p, n));
        out[r] += w.conj() * a;
    }
    Ket::new(lay.rest_labels, out)
}

pub fn project(state: &Ket, v: &Ket) -> Result<Projection> {
    if !v.is_normalized() {
        return Err(Error::NotNormalized(v.norm_sqr()));
    }
    let raw = project_unnormalized(state, v)?;
    let probability = raw.norm_sqr();
    let residual = if probability > tol::PROB_FLOOR { raw.normalized()? } else { raw };
    Ok(Projection { probability, residual })
}

pub fn outcome_probabilities(state: &Ket, basis: &MeasurementBasis) -> Result<Vec<f64>> {
    basis.vectors().iter().map(|v| project_unnormalized(state, v).map(|r| r.norm_sqr())).collect()
}

/// Samples one outcome of a full basis and returns it with the residual.
pub fn measure<R: Rng + ?Sized>(
    state: &Ket,
    basis: &MeasurementBasis,
    rng: &mut R,
) -> Result<(usize, Ket)> {
    if !basis.is_full() {
        return Err(Error::Invalid(format!("basis `{}` is partial; complete it first", basis.name())));
    }
    let probs = outcome_probabilities(state, basis)?;
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > tol::NUMERIC {
        return Err(Error::ProbabilitySum(total));
    }
    let r: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut pick = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if r < acc && *p > 0.0 {
            pick = k;
            break;
        }
    }
    let proj = project(state, &basis.vectors()[pick])?;
    Ok((pick, proj.residual))
}

/// An assignment of the four Bell states and the `|±⟩` pair.
#[derive(Clone, Debug)]
pub struct BellConvention {
    pub name: &'static str,
    pub psi_plus: Ket,
    pub psi_minus: Ket,
    pub phi_plus: Ket,
    pub phi_minus: Ket,
    pub plus: Ket,
    pub minus: Ket,
}

impl BellConvention {
    fn build(name: &'static str, psi: [&str; 2], phi: [&str; 2]) -> Self {
        let pair = |bits: [&str; 2], sign: f64| {
            Ket::from_terms(&[(ONE, bits[0]), (C64::new(sign, 0.0), bits[1])], true).expect("static")
        };
        BellConvention {
            name,
            psi_plus: pair(psi, 1.0),
            psi_minus: pair(psi, -1.0),
            phi_plus: pair(phi, 1.0),
            phi_minus: pair(phi, -1.0),
            plus: pair(["0", "1"], 1.0),
            minus: pair(["0", "1"], -1.0),
        }
    }

    /// ψ± = (|00⟩ ± |11⟩)/√2, φ± = (|01⟩ ± |10⟩)/√2.
    pub fn psi_even() -> Self {
        BellConvention::build("psi-even", ["00", "11"], ["01", "10"])
    }

    /// φ± = (|00⟩ ± |11⟩)/√2, ψ± = (|01⟩ ± |10⟩)/√2.
    pub fn phi_even() -> Self {
        BellConvention::build("phi-even", ["01", "10"], ["00", "11"])
    }

    pub fn all() -> [BellConvention; 2] {
        [BellConvention::psi_even(), BellConvention::phi_even()]
    }

    fn named(&self, name: &str) -> Option<&Ket> {
        Some(match name {
            "psi+" | "ψ+" => &self.psi_plus,
            "psi-" | "ψ-" => &self.psi_minus,
            "phi+" | "φ+" => &self.phi_plus,
            "phi-" | "φ-" => &self.phi_minus,
            "+" => &self.plus,
            "-" => &self.minus,
            _ => return None,
        })
    }
}

/// Positional amplitude vector used while expanding an expression.
#[derive(Clone, Debug)]
struct Amps {
    n: usize,
    v: Vec<C64>,
}

impl Amps {
    fn tensor(&self, o: &Amps) -> Amps {
        let mut v = Vec::with_capacity(self.v.len() * o.v.len());
        for a in &self.v {
            for b in &o.v {
                v.push(a * b);
            }
        }
        Amps { n: self.n + o.n, v }
    }

    fn axpy(&mut self, s: f64, o: &Amps) {
        for (a, b) in self.v.iter_mut().zip(&o.v) {
            *a += b * s;
        }
    }
}

struct ExprParser<'a> {
    src: Vec<char>,
    pos: usize,
    conv: &'a BellConvention,
}

impl ExprParser<'_> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse { line: 1, column: self.pos + 1, message: msg.into() })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Amps> {
        let mut sign = 1.0;
        if self.peek() == Some('-') {
            self.pos += 1;
            sign = -1.0;
        } else if self.peek() == Some('+') {
            self.pos += 1;
        }
        let first = self.product()?;
        let mut acc = Amps { n: first.n, v: vec![ZERO; first.v.len()] };
        acc.axpy(sign, &first);
        loop {
            let s = match self.peek() {
                Some('+') => 1.0,
                Some('-') => -1.0,
                _ => break,
            };
            self.pos += 1;
            let t = self.product()?;
            if t.n != acc.n {
                return Err(Error::DimensionMismatch(format!(
                    "summing {}-qubit and {}-qubit terms",
                    acc.n, t.n
                )));
            }
            acc.axpy(s, &t);
        }
        Ok(acc)
    }

    fn product(&mut self) -> Result<Amps> {
        let mut acc = self.factor()?;
        while matches!(self.peek(), Some('(') | Some('|')) {
            let f = self.factor()?;
            acc = acc.tensor(&f);
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Amps> {
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(')') {
                    return self.err("expected `)`");
                }
                self.pos += 1;
                Ok(e)
            }
            Some('|') => self.ket(),
            Some(c) => self.err(format!("unexpected `{c}`")),
            None => self.err("unexpected end of expression"),
        }
    }

    fn ket(&mut self) -> Result<Amps> {
        self.pos += 1;
        let start = self.pos;
        while self.pos < self.src.len() && !matches!(self.src[self.pos], '>' | '⟩') {
            self.pos += 1;
        }
        if self.pos >= self.src.len() {
            return self.err("unterminated ket");
        }
        let body: String = self.src[start..self.pos].iter().collect();
        self.pos += 1;
        let (sign, name) = match body.strip_prefix('-') {
            Some(rest) if !rest.is_empty() => (-1.0, rest),
            _ => (1.0, body.as_str()),
        };
        let ket = if let Some(idx) = parse_bitstring(name) {
            let mut v = vec![ZERO; 1 << name.len()];
            v[idx] = ONE;
            Amps { n: name.len(), v }
        } else {
            let k = self.conv.named(name).ok_or_else(|| Error::UnknownState(name.to_string()))?;
            Amps { n: k.n_qubits(), v: k.amplitudes().to_vec() }
        };
        let mut out = Amps { n: ket.n, v: vec![ZERO; ket.v.len()] };
        out.axpy(sign, &ket);
        Ok(out)
    }
}

/// Expands a sum of tensor products of named states into a normalized ket
/// over labels "1".."n".
///
/// Kets are written `|name>`: a bitstring, `psi±`, `phi±`, `+` or `-`; a
/// leading minus inside the ket (`|-phi+>`) negates it. Juxtaposition is the
/// tensor product.
pub fn expand_product_decomposition(expr: &str, conv: &BellConvention) -> Result<Ket> {
    let mut p = ExprParser { src: expr.chars().collect(), pos: 0, conv };
    let amps = p.expr()?;
    if p.peek().is_some() {
        return p.err("trailing input");
    }
    Ket::new(Label::numbered(amps.n), amps.v)?.normalized()
}
