//! The five protocols over the cluster channel, with transcripts.
//!
//! Measurement bases come from the (errata-applied) tables under the
//! assignment the inference pass certifies; corrections are synthesized
//! per outcome from the simulation itself and cached in a [`ProtocolSuite`].

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::measure::{measure, outcome_probabilities, project, project_unnormalized, MeasurementBasis};
use crate::qstate::{c6, entropy, fidelity_up_to_phase, DensityMatrix, Ket, Label, SecretState, C64};
use crate::synth::{
    complete_basis, follow_up_scenario, infer_assignment, infer_two_stage, synthesize_correction, AssignmentReport,
    AssignmentVerdict, CorrectionProblem, Gate, InferenceShape, LocalOp, Tier,
};
use crate::tables::{
    audit_errata, data, outcome_kets, parse_errata, parse_table, validate_table, Candidate, Erratum, ErratumAudit,
    JointState, ProtocolTable, Scenario, ValidationReport,
};
use crate::tol;

pub const INPUTS: [&str; 2] = ["a", "b"];
/// Qubits Alice encodes on in dense coding.
pub const DENSE_ALICE: [&str; 3] = ["1", "6", "4"];
pub const DENSE_BOB: [&str; 3] = ["2", "3", "5"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Teleport,
    Qis1,
    Qis2,
    Dense,
    Rsp,
}

impl Protocol {
    pub const ALL: [Protocol; 5] = [Protocol::Teleport, Protocol::Qis1, Protocol::Qis2, Protocol::Dense, Protocol::Rsp];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Teleport => "teleport",
            Protocol::Qis1 => "qis1",
            Protocol::Qis2 => "qis2",
            Protocol::Dense => "dense",
            Protocol::Rsp => "rsp",
        }
    }

    /// Classical bits sent per run.
    pub fn cbit_budget(self) -> usize {
        match self {
            Protocol::Teleport => 4,
            Protocol::Qis1 => 6,
            Protocol::Qis2 => 5,
            Protocol::Dense => 0,
            Protocol::Rsp => 2,
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown protocol `{s}` (teleport, qis1, qis2, dense, rsp)")))
    }
}

/// Per-trial generator: one ChaCha stream per trial index.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Rounds to 15 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.14e}").parse().unwrap_or(x)
}

fn ser_sig<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(round_sig(*x))
}

fn complex_pairs(v: &[C64]) -> Vec<[f64; 2]> {
    v.iter().map(|z| [round_sig(z.re), round_sig(z.im)]).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PartyQubits {
    pub party: String,
    pub qubits: Vec<Label>,
}

/// Which qubits each party holds, in the order they measure or print them.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct PartyAssignment {
    pub parties: Vec<PartyQubits>,
}

impl PartyAssignment {
    pub fn new(parties: Vec<(&str, Vec<Label>)>) -> Self {
        PartyAssignment {
            parties: parties.into_iter().map(|(p, q)| PartyQubits { party: p.to_string(), qubits: q }).collect(),
        }
    }

    pub fn qubits(&self, party: &str) -> Option<&[Label]> {
        self.parties.iter().find(|p| p.party == party).map(|p| p.qubits.as_slice())
    }

    /// The parties' qubits must partition `register`.
    pub fn validate(&self, register: &[Label]) -> Result<()> {
        let mut all: Vec<&Label> = self.parties.iter().flat_map(|p| &p.qubits).collect();
        let n = all.len();
        all.sort();
        all.dedup();
        if all.len() != n {
            return Err(Error::Invalid("a qubit is assigned to two parties".into()));
        }
        let mut reg: Vec<&Label> = register.iter().collect();
        reg.sort();
        if all != reg {
            return Err(Error::Invalid("assignment does not cover the register".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OutcomeRecord {
    pub party: String,
    pub basis: String,
    pub index: usize,
    #[serde(serialize_with = "ser_sig")]
    pub probability: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Message {
    pub from: String,
    pub to: String,
    pub cbits: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct StateRecord {
    pub labels: Vec<Label>,
    pub amplitudes: Vec<[f64; 2]>,
}

impl From<&Ket> for StateRecord {
    fn from(k: &Ket) -> Self {
        StateRecord { labels: k.labels().to_vec(), amplitudes: complex_pairs(k.amplitudes()) }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ProtocolTranscript {
    pub protocol: Protocol,
    pub seed: Option<u64>,
    pub assignment: PartyAssignment,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub secret: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<DenseMessage>,
    pub outcomes: Vec<OutcomeRecord>,
    pub messages: Vec<Message>,
    pub cbits: usize,
    pub qubits_sent: usize,
    pub corrections: Vec<LocalOp>,
    pub final_state: StateRecord,
    #[serde(serialize_with = "ser_sig")]
    pub fidelity: f64,
    /// Wall time; kept out of the JSON so transcripts are reproducible.
    #[serde(skip)]
    pub elapsed: Duration,
}

impl ProtocolTranscript {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcript serializes")
    }
}

/// The six tables plus the errata overlay.
#[derive(Clone, Debug)]
pub struct TableSet {
    pub tables: BTreeMap<String, ProtocolTable>,
    pub errata: Vec<Erratum>,
}

impl TableSet {
    pub fn embedded() -> Result<Self> {
        let mut tables = BTreeMap::new();
        for id in ["1", "2", "3", "4", "5", "6"] {
            tables.insert(id.to_string(), ProtocolTable::load_embedded(id)?);
        }
        Ok(TableSet { tables, errata: parse_errata(data::ERRATA)? })
    }

    /// Reads `table1.qt` … `table6.qt` and, if present, `errata.qt`.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut tables = BTreeMap::new();
        for id in ["1", "2", "3", "4", "5", "6"] {
            let t = parse_table(&std::fs::read_to_string(dir.join(format!("table{id}.qt")))?)?;
            if t.id != id {
                return Err(Error::Invalid(format!("table{id}.qt declares table {}", t.id)));
            }
            tables.insert(id.to_string(), t);
        }
        let e = dir.join("errata.qt");
        let errata = if e.exists() { parse_errata(&std::fs::read_to_string(e)?)? } else { vec![] };
        Ok(TableSet { tables, errata })
    }

    pub fn get(&self, id: &str) -> Result<&ProtocolTable> {
        self.tables.get(id).ok_or_else(|| Error::Invalid(format!("no table {id}")))
    }
}

fn inputs() -> Vec<Label> {
    Label::list(&INPUTS)
}

/// φ values probing the equatorial family.
pub fn phi_probe() -> Vec<f64> {
    (0..8).map(|j| 0.1 + j as f64 * std::f64::consts::TAU / 8.0).collect()
}

/// Stated split and oracle scenario for a first-stage table.
pub fn table_context(id: &str) -> Result<(InferenceShape, Scenario)> {
    let l = Label::list;
    let pool = Label::numbered(6);
    let linear = |seed: u64| -> Result<Scenario> {
        Ok(Scenario::linear(JointState::payload_times(&inputs(), &c6())?, 5, seed))
    };
    let shape = |inp: Vec<Label>, m: &[&str], p: &[&str]| InferenceShape {
        inputs: inp,
        pool: pool.clone(),
        stated_measured: l(m),
        stated_print: l(p),
    };
    Ok(match id {
        "1" => (shape(inputs(), &["1", "6", "2", "5"], &["3", "4"]), linear(0x7ab1e1)?),
        "2" => (shape(inputs(), &["1", "3"], &["5", "6", "2", "4"]), linear(0x7ab1e2)?),
        "4" => (shape(inputs(), &["1", "3", "5"], &["6", "2", "4"]), linear(0x7ab1e4)?),
        "6" => (
            shape(vec![], &["1", "6", "2", "5"], &["3", "4"]),
            Scenario::fixed(c6(), phi_probe().into_iter().map(SecretState::equatorial).collect()),
        ),
        other => return Err(Error::Invalid(format!("table {other} is not a first-stage table"))),
    })
}

/// Follow-up table of a two-stage protocol, with the stated Bob and
/// Charlie qubits.
pub fn follow_up_of(id: &str) -> Option<(&'static str, Vec<Label>, Vec<Label>)> {
    match id {
        "2" => Some(("3", Label::list(&["5", "6"]), Label::list(&["2", "4"]))),
        "4" => Some(("5", Label::list(&["6"]), Label::list(&["2", "4"]))),
        _ => None,
    }
}

/// The first-stage table a table belongs to.
pub fn parent_table(id: &str) -> &str {
    match id {
        "3" => "2",
        "5" => "4",
        other => other,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FollowUpCertification {
    pub table: String,
    pub verdict: AssignmentVerdict,
    pub assignment: AssignmentReport,
    pub certified: ValidationReport,
    pub stated: Option<ValidationReport>,
    #[serde(skip)]
    pub candidate: Candidate,
    #[serde(skip)]
    pub data: ProtocolTable,
}

/// Everything known about one table: audited errata, inferred assignment,
/// and row verdicts under the certified, stated and verbatim readings.
#[derive(Clone, Debug, Serialize)]
pub struct Certification {
    pub table: String,
    pub verdict: AssignmentVerdict,
    pub assignment: AssignmentReport,
    /// Errata-applied table under the certified assignment.
    pub certified: ValidationReport,
    /// Errata-applied table under the best assignment keeping the stated split.
    pub stated: Option<ValidationReport>,
    /// Table as printed under the certified assignment.
    pub verbatim: ValidationReport,
    pub errata: Vec<ErratumAudit>,
    pub follow_up: Option<FollowUpCertification>,
    #[serde(skip)]
    pub candidate: Candidate,
    #[serde(skip)]
    pub data: ProtocolTable,
    #[serde(skip)]
    pub scenario: Scenario,
}

impl Certification {
    /// Every row of the table (and its follow-up) reproduced by the oracle.
    pub fn fully_reproduced(&self) -> bool {
        self.certified.all_match()
            && self.certified.gram.pass
            && self.follow_up.as_ref().is_none_or(|f| f.certified.all_match() && f.certified.gram.pass)
    }

    /// `table N row R` for every row that does not reproduce.
    pub fn failing_rows(&self) -> Vec<String> {
        let mut out: Vec<String> =
            self.certified.failing_rows().iter().map(|r| format!("table {} row {r}", self.table)).collect();
        if let Some(f) = &self.follow_up {
            out.extend(f.certified.failing_rows().iter().map(|r| format!("table {} row {r}", f.table)));
        }
        out
    }
}

fn validate_stated(
    table: &ProtocolTable,
    scenario: &Scenario,
    report: &AssignmentReport,
) -> Result<Option<ValidationReport>> {
    report
        .stated
        .as_ref()
        .map(|s| Candidate::parse(&s.assignment).and_then(|c| validate_table(table, scenario, &c)))
        .transpose()
}

/// Certifies a first-stage table (1, 2, 4 or 6), including its follow-up.
pub fn certify(tables: &TableSet, id: &str) -> Result<Certification> {
    let verbatim = tables.get(id)?;
    let (shape, scenario) = table_context(id)?;
    let follow = follow_up_of(id);
    let run = |t: &ProtocolTable| -> Result<(AssignmentReport, Option<AssignmentReport>)> {
        match &follow {
            None => Ok((infer_assignment(t, &scenario, &shape)?, None)),
            Some((fid, bob, charlie)) => {
                let (a, b) = infer_two_stage(t, &scenario, &shape, tables.get(fid)?, bob, charlie)?;
                Ok((a, Some(b)))
            }
        }
    };
    let (all, _) = verbatim.apply_errata(&tables.errata);
    let (mut a1, mut a2) = run(&all)?;
    let (table, audits) = audit_errata(verbatim, &tables.errata, &scenario, &a1.certified)?;
    if table != all {
        (a1, a2) = run(&table)?;
    }
    let candidate = a1.certified.clone();
    let certified = validate_table(&table, &scenario, &candidate)?;
    let stated = validate_stated(&table, &scenario, &a1)?;
    let verbatim_report = validate_table(verbatim, &scenario, &candidate)?;
    let follow_up = match (&follow, a2) {
        (Some((fid, _, _)), Some(a2)) => {
            let ft = tables.get(fid)?;
            let sc2 = follow_up_scenario(&table, &scenario, &candidate)?;
            let c2 = a2.certified.clone();
            Some(FollowUpCertification {
                table: fid.to_string(),
                verdict: a2.verdict,
                certified: validate_table(ft, &sc2, &c2)?,
                stated: validate_stated(ft, &sc2, &a2)?,
                assignment: a2,
                candidate: c2,
                data: ft.clone(),
            })
        }
        _ => None,
    };
    Ok(Certification {
        table: id.to_string(),
        verdict: a1.verdict,
        assignment: a1,
        certified,
        stated,
        verbatim: verbatim_report,
        errata: audits,
        follow_up,
        candidate,
        data: table,
        scenario,
    })
}

/// Draws an outcome, refusing completion outcomes with non-negligible weight.
fn sample<R: Rng + ?Sized>(state: &Ket, basis: &MeasurementBasis, rng: &mut R) -> Result<(usize, Ket, f64)> {
    let probs = outcome_probabilities(state, basis)?;
    if let Some((index, &probability)) =
        probs.iter().enumerate().skip(basis.listed()).find(|(_, &p)| p > tol::COMPLETION_PROB)
    {
        return Err(Error::CompletionOutcome { index, probability });
    }
    let (k, residual) = measure(state, basis, rng)?;
    if basis.is_completion(k) {
        return Err(Error::CompletionOutcome { index: k, probability: probs[k] });
    }
    Ok((k, residual, probs[k]))
}

fn bits_for(n: usize) -> usize {
    n.next_power_of_two().trailing_zeros() as usize
}

const VERIFY_PAYLOADS: usize = 10;

fn linear_columns() -> Result<Vec<Ket>> {
    match JointState::payload_times(&inputs(), &c6())? {
        JointState::Linear(c) => Ok(c),
        JointState::Fixed(_) => unreachable!(),
    }
}

/// Synthesizes a correction from basis-payload residual columns and checks
/// it on random payloads via `residual_of`.
fn correction_for(
    columns: Vec<Ket>,
    receivers: &[Label],
    seed: u64,
    residual_of: impl Fn(&Ket) -> Result<Ket>,
) -> Result<(LocalOp, Tier)> {
    let pairs = columns
        .into_iter()
        .enumerate()
        .map(|(x, r)| Ok((r, Ket::basis(receivers.to_vec(), x)?)))
        .collect::<Result<Vec<_>>>()?;
    let (op, tier) = synthesize_correction(&CorrectionProblem::new(pairs, true)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..VERIFY_PAYLOADS {
        let s = SecretState::haar(&mut rng);
        let joint = s.ket(inputs())?.tensor(&c6())?;
        let r = residual_of(&joint)?.normalized()?;
        let out = op.apply(&r, receivers)?;
        if fidelity_up_to_phase(&out, &s.ket(receivers.to_vec())?)? < 1.0 - tol::NUMERIC {
            return Err(Error::SynthesisFailed);
        }
    }
    Ok((op, tier))
}

#[derive(Clone, Debug)]
pub struct TeleportSetup {
    pub alice: Vec<Label>,
    pub bob: Vec<Label>,
    pub basis: MeasurementBasis,
    pub corrections: Vec<LocalOp>,
    pub tiers: Vec<Tier>,
}

fn build_teleport(cert: &Certification) -> Result<TeleportSetup> {
    let alice = cert.candidate.measure_order.clone();
    let bob = cert.candidate.print_order.clone();
    let kets = outcome_kets(&cert.data, &SecretState::basis(0), &alice)?;
    let basis = complete_basis("table 1", alice.clone(), kets)?;
    let cols = linear_columns()?;
    let mut corrections = Vec::new();
    let mut tiers = Vec::new();
    for k in 0..basis.listed() {
        let v = &basis.vectors()[k];
        let columns = cols.iter().map(|c| project_unnormalized(c, v)?.permute(&bob)).collect::<Result<Vec<_>>>()?;
        let (op, tier) =
            correction_for(columns, &bob, 0x7e1e + k as u64, |j| project_unnormalized(j, v)?.permute(&bob))?;
        corrections.push(op);
        tiers.push(tier);
    }
    Ok(TeleportSetup { alice, bob, basis, corrections, tiers })
}

#[derive(Clone, Debug)]
pub struct QisSetup {
    pub protocol: Protocol,
    pub alice: Vec<Label>,
    /// Bob and Charlie's qubits in the order the first table prints them.
    pub receivers: Vec<Label>,
    pub bob: Vec<Label>,
    pub charlie: Vec<Label>,
    pub alice_basis: MeasurementBasis,
    pub bob_basis: MeasurementBasis,
    /// Indexed by Alice's then Bob's outcome.
    pub corrections: Vec<Vec<LocalOp>>,
}

impl QisSetup {
    fn after_alice(&self, joint: &Ket, k: usize) -> Result<Ket> {
        project_unnormalized(joint, &self.alice_basis.vectors()[k])?.permute(&self.receivers)
    }

    fn after_bob(&self, bc: &Ket, j: usize) -> Result<Ket> {
        project_unnormalized(bc, &self.bob_basis.vectors()[j])?.permute(&self.charlie)
    }
}

fn build_qis(protocol: Protocol, cert: &Certification) -> Result<QisSetup> {
    let f = cert
        .follow_up
        .as_ref()
        .ok_or_else(|| Error::NoConsistentAssignment(format!("table {} has no follow-up", cert.table)))?;
    let alice = cert.candidate.measure_order.clone();
    let receivers = cert.candidate.print_order.clone();
    let bob = f.candidate.measure_order.clone();
    let charlie = f.candidate.print_order.clone();
    let alice_basis = complete_basis(
        &format!("table {}", cert.table),
        alice.clone(),
        outcome_kets(&cert.data, &SecretState::basis(0), &alice)?,
    )?;
    let bob_basis = complete_basis(
        &format!("table {}", f.table),
        bob.clone(),
        outcome_kets(&f.data, &SecretState::basis(0), &bob)?,
    )?;
    let mut setup =
        QisSetup { protocol, alice, receivers, bob, charlie, alice_basis, bob_basis, corrections: Vec::new() };
    let cols = linear_columns()?;
    for k in 0..setup.alice_basis.listed() {
        let mut row = Vec::new();
        for j in 0..setup.bob_basis.listed() {
            let columns = cols
                .iter()
                .map(|c| setup.after_bob(&setup.after_alice(c, k)?, j))
                .collect::<Result<Vec<_>>>()?;
            let seed = 0x9150 + (k * 16 + j) as u64;
            let (op, _) = correction_for(columns, &setup.charlie, seed, |joint| {
                setup.after_bob(&setup.after_alice(joint, k)?, j)
            })?;
            row.push(op);
        }
        setup.corrections.push(row);
    }
    Ok(setup)
}

#[derive(Clone, Debug)]
pub struct RspSetup {
    pub alice: Vec<Label>,
    pub bob: Vec<Label>,
    pub table: ProtocolTable,
    pub corrections: Vec<LocalOp>,
}

impl RspSetup {
    pub fn basis(&self, phi: f64) -> Result<MeasurementBasis> {
        let kets = outcome_kets(&self.table, &SecretState::equatorial(phi), &self.alice)?;
        complete_basis("table 6", self.alice.clone(), kets)
    }
}

fn build_rsp(cert: &Certification) -> Result<RspSetup> {
    let mut setup = RspSetup {
        alice: cert.candidate.measure_order.clone(),
        bob: cert.candidate.print_order.clone(),
        table: cert.data.clone(),
        corrections: Vec::new(),
    };
    let grid: Vec<f64> = (0..5).map(|j| 0.37 + 1.1 * j as f64).collect();
    let bases = grid.iter().map(|&phi| setup.basis(phi)).collect::<Result<Vec<_>>>()?;
    let listed = bases[0].listed();
    for k in 0..listed {
        let pairs = grid
            .iter()
            .zip(&bases)
            .map(|(&phi, b)| {
                let r = project(&c6(), &b.vectors()[k])?.residual.permute(&setup.bob)?;
                Ok((r, SecretState::equatorial(phi).ket(setup.bob.clone())?))
            })
            .collect::<Result<Vec<_>>>()?;
        let (op, _) = synthesize_correction(&CorrectionProblem::new(pairs, false)?)?;
        setup.corrections.push(op);
    }
    Ok(setup)
}

/// Payload of one no-signaling probe.
#[derive(Clone, Copy, Debug)]
pub enum Payload {
    Secret(SecretState),
    Phi(f64),
    Message(DenseMessage),
}

/// Certified tables and cached corrections for every protocol.
#[derive(Debug)]
pub struct ProtocolSuite {
    pub tables: TableSet,
    pub certifications: BTreeMap<String, Certification>,
    teleport: std::result::Result<TeleportSetup, String>,
    qis1: std::result::Result<QisSetup, String>,
    qis2: std::result::Result<QisSetup, String>,
    rsp: std::result::Result<RspSetup, String>,
}

static EMBEDDED: OnceLock<ProtocolSuite> = OnceLock::new();

fn keep<T>(r: Result<T>) -> std::result::Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn setup<'a, T>(r: &'a std::result::Result<T, String>, what: &str) -> Result<&'a T> {
    r.as_ref().map_err(|e| Error::NoConsistentAssignment(format!("{what}: {e}")))
}

impl ProtocolSuite {
    /// Certifies all tables and synthesizes every correction. Setup failures
    /// are kept and surface when the affected protocol runs.
    pub fn load(tables: TableSet) -> Result<Self> {
        let mut certifications = BTreeMap::new();
        for id in ["1", "2", "4", "6"] {
            certifications.insert(id.to_string(), certify(&tables, id)?);
        }
        Ok(ProtocolSuite {
            teleport: keep(build_teleport(&certifications["1"])),
            qis1: keep(build_qis(Protocol::Qis1, &certifications["2"])),
            qis2: keep(build_qis(Protocol::Qis2, &certifications["4"])),
            rsp: keep(build_rsp(&certifications["6"])),
            tables,
            certifications,
        })
    }

    /// The suite built from the checked-in tables, built once.
    pub fn embedded() -> &'static ProtocolSuite {
        EMBEDDED.get_or_init(|| {
            ProtocolSuite::load(TableSet::embedded().expect("embedded tables parse")).expect("embedded tables certify")
        })
    }

    pub fn teleport_setup(&self) -> Result<&TeleportSetup> {
        setup(&self.teleport, "teleport")
    }

    pub fn qis_setup(&self, p: Protocol) -> Result<&QisSetup> {
        match p {
            Protocol::Qis1 => setup(&self.qis1, "qis1"),
            Protocol::Qis2 => setup(&self.qis2, "qis2"),
            other => Err(Error::Invalid(format!("{other} is not a splitting protocol"))),
        }
    }

    pub fn rsp_setup(&self) -> Result<&RspSetup> {
        setup(&self.rsp, "rsp")
    }

    pub fn teleport<R: Rng + ?Sized>(&self, secret: &SecretState, rng: &mut R) -> Result<ProtocolTranscript> {
        let t0 = Instant::now();
        let s = self.teleport_setup()?;
        let joint = secret.ket(inputs())?.tensor(&c6())?;
        let (k, residual, p) = sample(&joint, &s.basis, rng)?;
        let r = residual.permute(&s.bob)?;
        let out = s.corrections[k].apply(&r, &s.bob)?;
        let fidelity = fidelity_up_to_phase(&out, &secret.ket(s.bob.clone())?)?;
        let cbits = bits_for(s.basis.listed());
        Ok(ProtocolTranscript {
            protocol: Protocol::Teleport,
            seed: None,
            assignment: PartyAssignment::new(vec![("alice", s.alice.clone()), ("bob", s.bob.clone())]),
            secret: Some(complex_pairs(&secret.coeffs())),
            phi: None,
            message: None,
            outcomes: vec![OutcomeRecord { party: "alice".into(), basis: s.basis.name().into(), index: k, probability: p }],
            messages: vec![Message { from: "alice".into(), to: "bob".into(), cbits }],
            cbits,
            qubits_sent: 0,
            corrections: vec![s.corrections[k].clone()],
            final_state: StateRecord::from(&out),
            fidelity,
            elapsed: t0.elapsed(),
        })
    }

    pub fn qis<R: Rng + ?Sized>(&self, p: Protocol, secret: &SecretState, rng: &mut R) -> Result<ProtocolTranscript> {
        let t0 = Instant::now();
        let s = self.qis_setup(p)?;
        let joint = secret.ket(inputs())?.tensor(&c6())?;
        let (k, r1, p1) = sample(&joint, &s.alice_basis, rng)?;
        let r1 = r1.permute(&s.receivers)?;
        let (j, r2, p2) = sample(&r1, &s.bob_basis, rng)?;
        let r2 = r2.permute(&s.charlie)?;
        let op = &s.corrections[k][j];
        let out = op.apply(&r2, &s.charlie)?;
        let fidelity = fidelity_up_to_phase(&out, &secret.ket(s.charlie.clone())?)?;
        let (ca, cb) = (bits_for(s.alice_basis.listed()), bits_for(s.bob_basis.listed()));
        Ok(ProtocolTranscript {
            protocol: p,
            seed: None,
            assignment: PartyAssignment::new(vec![
                ("alice", s.alice.clone()),
                ("bob", s.bob.clone()),
                ("charlie", s.charlie.clone()),
            ]),
            secret: Some(complex_pairs(&secret.coeffs())),
            phi: None,
            message: None,
            outcomes: vec![
                OutcomeRecord { party: "alice".into(), basis: s.alice_basis.name().into(), index: k, probability: p1 },
                OutcomeRecord { party: "bob".into(), basis: s.bob_basis.name().into(), index: j, probability: p2 },
            ],
            messages: vec![
                Message { from: "alice".into(), to: "charlie".into(), cbits: ca },
                Message { from: "bob".into(), to: "charlie".into(), cbits: cb },
            ],
            cbits: ca + cb,
            qubits_sent: 0,
            corrections: vec![op.clone()],
            final_state: StateRecord::from(&out),
            fidelity,
            elapsed: t0.elapsed(),
        })
    }

    pub fn qis1<R: Rng + ?Sized>(&self, secret: &SecretState, rng: &mut R) -> Result<ProtocolTranscript> {
        self.qis(Protocol::Qis1, secret, rng)
    }

    pub fn qis2<R: Rng + ?Sized>(&self, secret: &SecretState, rng: &mut R) -> Result<ProtocolTranscript> {
        self.qis(Protocol::Qis2, secret, rng)
    }

    pub fn rsp<R: Rng + ?Sized>(&self, phi: f64, rng: &mut R) -> Result<ProtocolTranscript> {
        let t0 = Instant::now();
        let s = self.rsp_setup()?;
        let secret = SecretState::equatorial(phi);
        let basis = s.basis(phi)?;
        let (k, residual, p) = sample(&c6(), &basis, rng)?;
        let r = residual.permute(&s.bob)?;
        let out = s.corrections[k].apply(&r, &s.bob)?;
        let fidelity = fidelity_up_to_phase(&out, &secret.ket(s.bob.clone())?)?;
        let cbits = bits_for(basis.listed());
        Ok(ProtocolTranscript {
            protocol: Protocol::Rsp,
            seed: None,
            assignment: PartyAssignment::new(vec![("alice", s.alice.clone()), ("bob", s.bob.clone())]),
            secret: Some(complex_pairs(&secret.coeffs())),
            phi: Some(round_sig(phi)),
            message: None,
            outcomes: vec![OutcomeRecord { party: "alice".into(), basis: basis.name().into(), index: k, probability: p }],
            messages: vec![Message { from: "alice".into(), to: "bob".into(), cbits }],
            cbits,
            qubits_sent: 0,
            corrections: vec![s.corrections[k].clone()],
            final_state: StateRecord::from(&out),
            fidelity,
            elapsed: t0.elapsed(),
        })
    }

    /// Dense coding: Alice encodes, sends her three qubits, Bob decodes.
    pub fn dense(&self, msg: DenseMessage) -> Result<ProtocolTranscript> {
        let t0 = Instant::now();
        let state = dense_encode(msg);
        let decoded = dense_decode(&state)?;
        let fidelity = fidelity_up_to_phase(&dense_encode(decoded), &state)?;
        Ok(ProtocolTranscript {
            protocol: Protocol::Dense,
            seed: None,
            assignment: PartyAssignment::new(vec![
                ("alice", Label::list(&DENSE_ALICE)),
                ("bob", Label::list(&DENSE_BOB)),
            ]),
            secret: None,
            phi: None,
            message: Some(decoded),
            outcomes: vec![OutcomeRecord {
                party: "bob".into(),
                basis: "dense codewords".into(),
                index: decoded.index(),
                probability: fidelity,
            }],
            messages: vec![],
            cbits: 0,
            qubits_sent: DENSE_ALICE.len(),
            corrections: vec![],
            final_state: StateRecord::from(&state),
            fidelity,
            elapsed: t0.elapsed(),
        })
    }

    /// Probabilities of every outcome of Alice's (first) measurement,
    /// listed outcomes first.
    pub fn alice_probabilities(&self, p: Protocol, payload: &Payload) -> Result<Vec<f64>> {
        match (p, payload) {
            (Protocol::Teleport, Payload::Secret(s)) => {
                outcome_probabilities(&s.ket(inputs())?.tensor(&c6())?, &self.teleport_setup()?.basis)
            }
            (Protocol::Qis1 | Protocol::Qis2, Payload::Secret(s)) => {
                outcome_probabilities(&s.ket(inputs())?.tensor(&c6())?, &self.qis_setup(p)?.alice_basis)
            }
            (Protocol::Rsp, Payload::Phi(phi)) => outcome_probabilities(&c6(), &self.rsp_setup()?.basis(*phi)?),
            _ => Err(Error::Invalid(format!("no sender measurement for {p} with this payload"))),
        }
    }

    /// Bob's outcome probabilities in a splitting protocol, conditioned on
    /// each of Alice's listed outcomes.
    pub fn bob_conditional_probabilities(&self, p: Protocol, secret: &SecretState) -> Result<Vec<Vec<f64>>> {
        let s = self.qis_setup(p)?;
        let joint = secret.ket(inputs())?.tensor(&c6())?;
        (0..s.alice_basis.listed())
            .map(|k| {
                let r = project(&joint, &s.alice_basis.vectors()[k])?.residual.permute(&s.receivers)?;
                outcome_probabilities(&r, &s.bob_basis)
            })
            .collect()
    }

    /// How well Charlie guesses the secret from Alice's message alone: the
    /// Alice-outcome average of `⟨ψ|U ρ_C U†|ψ⟩`, where `ρ_C` is Charlie's
    /// state with Bob's qubits traced out and `U` the correction for Bob's
    /// first outcome.
    pub fn solo_guess_fidelity(&self, p: Protocol, secret: &SecretState) -> Result<f64> {
        let s = self.qis_setup(p)?;
        let joint = secret.ket(inputs())?.tensor(&c6())?;
        let target = secret.ket(s.charlie.clone())?;
        let mut total = 0.0;
        for k in 0..s.alice_basis.listed() {
            let r = s.after_alice(&joint, k)?;
            if r.norm_sqr() <= tol::PROB_FLOOR {
                continue;
            }
            // Unnormalized residual: the reduced matrix carries weight p_k.
            let rho = r.reduced_density(&s.charlie)?;
            total += rho.conjugate(&s.corrections[k][0].matrix())?.expectation(&target)?;
        }
        Ok(total)
    }

    /// Each receiver's state before any classical bit arrives, averaged over
    /// all sender outcomes.
    pub fn receiver_states(&self, p: Protocol, payload: &Payload) -> Result<Vec<(String, DensityMatrix)>> {
        let avg = |states: &[Ket], labels: &[Label]| -> Result<DensityMatrix> {
            let mut acc = DensityMatrix::zeros(labels.to_vec());
            for r in states {
                if r.norm_sqr() > tol::PROB_FLOOR {
                    acc.accumulate(1.0, &r.reduced_density(labels)?)?;
                }
            }
            Ok(acc)
        };
        match (p, payload) {
            (Protocol::Teleport, Payload::Secret(secret)) => {
                let s = self.teleport_setup()?;
                let joint = secret.ket(inputs())?.tensor(&c6())?;
                let rs = s
                    .basis
                    .vectors()
                    .iter()
                    .map(|v| project_unnormalized(&joint, v)?.permute(&s.bob))
                    .collect::<Result<Vec<_>>>()?;
                Ok(vec![("bob".into(), avg(&rs, &s.bob)?)])
            }
            (Protocol::Qis1 | Protocol::Qis2, Payload::Secret(secret)) => {
                let s = self.qis_setup(p)?;
                let joint = secret.ket(inputs())?.tensor(&c6())?;
                let first = (0..s.alice_basis.vectors().len())
                    .map(|k| s.after_alice(&joint, k))
                    .collect::<Result<Vec<_>>>()?;
                let mut second = Vec::new();
                for r in &first {
                    for j in 0..s.bob_basis.vectors().len() {
                        second.push(s.after_bob(r, j)?);
                    }
                }
                Ok(vec![
                    ("bob+charlie".into(), avg(&first, &s.receivers)?),
                    ("bob".into(), avg(&first, &s.bob)?),
                    ("charlie".into(), avg(&first, &s.charlie)?),
                    ("charlie after bob".into(), avg(&second, &s.charlie)?),
                ])
            }
            (Protocol::Rsp, Payload::Phi(phi)) => {
                let s = self.rsp_setup()?;
                let basis = s.basis(*phi)?;
                let rs = basis
                    .vectors()
                    .iter()
                    .map(|v| project_unnormalized(&c6(), v)?.permute(&s.bob))
                    .collect::<Result<Vec<_>>>()?;
                Ok(vec![("bob".into(), avg(&rs, &s.bob)?)])
            }
            (Protocol::Dense, Payload::Message(m)) => {
                let bob = Label::list(&DENSE_BOB);
                Ok(vec![("bob".into(), dense_encode(*m).reduced_density(&bob)?)])
            }
            _ => Err(Error::Invalid(format!("payload does not fit protocol {p}"))),
        }
    }
}

pub fn teleport<R: Rng + ?Sized>(secret: &SecretState, rng: &mut R) -> Result<ProtocolTranscript> {
    ProtocolSuite::embedded().teleport(secret, rng)
}

pub fn qis1<R: Rng + ?Sized>(secret: &SecretState, rng: &mut R) -> Result<ProtocolTranscript> {
    ProtocolSuite::embedded().qis1(secret, rng)
}

pub fn qis2<R: Rng + ?Sized>(secret: &SecretState, rng: &mut R) -> Result<ProtocolTranscript> {
    ProtocolSuite::embedded().qis2(secret, rng)
}

pub fn rsp<R: Rng + ?Sized>(phi: f64, rng: &mut R) -> Result<ProtocolTranscript> {
    ProtocolSuite::embedded().rsp(phi, rng)
}

pub fn solo_guess_fidelity(p: Protocol, secret: &SecretState) -> Result<f64> {
    ProtocolSuite::embedded().solo_guess_fidelity(p, secret)
}

/// Five bits as two Pauli indices (I, X, Y, Z → 0–3) and one of {I, X}.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct DenseMessage {
    pub u1: u8,
    pub u2: u8,
    pub u3: u8,
}

impl DenseMessage {
    pub fn new(u1: u8, u2: u8, u3: u8) -> Result<Self> {
        if u1 > 3 || u2 > 3 || u3 > 1 {
            return Err(Error::Invalid(format!("dense message ({u1},{u2},{u3}) out of range")));
        }
        Ok(DenseMessage { u1, u2, u3 })
    }

    /// Big-endian: `u1` is the top two bits, `u3` the lowest.
    pub fn from_index(i: usize) -> Result<Self> {
        if i >= 32 {
            return Err(Error::Invalid(format!("dense message index {i} is not in 0..32")));
        }
        DenseMessage::new((i >> 3) as u8, ((i >> 1) & 3) as u8, (i & 1) as u8)
    }

    pub fn index(&self) -> usize {
        (self.u1 as usize) << 3 | (self.u2 as usize) << 1 | self.u3 as usize
    }

    pub fn all() -> impl Iterator<Item = DenseMessage> {
        (0..32).map(|i| DenseMessage::from_index(i).expect("in range"))
    }
}

fn pauli(i: u8) -> DMatrix<C64> {
    let m = match i {
        1 => Gate::X.matrix(),
        2 => Gate::Y.matrix(),
        3 => Gate::Z.matrix(),
        _ => nalgebra::Matrix2::identity(),
    };
    DMatrix::from_iterator(2, 2, m.iter().copied())
}

/// `U₁ ⊗ U₂ ⊗ U₃` on qubits 1, 6, 4 of the channel.
pub fn dense_encode(msg: DenseMessage) -> Ket {
    let mut k = c6();
    for (q, u) in DENSE_ALICE.iter().zip([msg.u1, msg.u2, msg.u3]) {
        if u != 0 {
            k = k.apply(&[Label::from(*q)], &pauli(u)).expect("channel labels");
        }
    }
    k
}

fn codewords() -> &'static [Ket] {
    static CODEWORDS: OnceLock<Vec<Ket>> = OnceLock::new();
    CODEWORDS.get_or_init(|| DenseMessage::all().map(dense_encode).collect())
}

/// The message whose codeword matches `state` with fidelity 1.
pub fn dense_decode(state: &Ket) -> Result<DenseMessage> {
    let mut best = (0usize, 0.0f64);
    for (i, c) in codewords().iter().enumerate() {
        let f = fidelity_up_to_phase(c, state)?;
        if f > best.1 {
            best = (i, f);
        }
    }
    if best.1 < 1.0 - tol::NUMERIC {
        return Err(Error::NotACodeword(best.1));
    }
    DenseMessage::from_index(best.0)
}

/// `log₂ d_A + S(ρ_B) − S(ρ_AB)` with B the complement of `alice`.
pub fn capacity(channel: &Ket, alice: &[Label]) -> Result<f64> {
    if alice.is_empty() || alice.len() >= channel.n_qubits() {
        return Err(Error::BadPartition);
    }
    for l in alice {
        channel.position(l)?;
    }
    let bob: Vec<Label> = channel.labels().iter().filter(|l| !alice.contains(l)).cloned().collect();
    let s_b = entropy(&channel.normalized()?.reduced_density(&bob)?)?;
    let s_ab = entropy(&channel.normalized()?.projector())?;
    Ok(alice.len() as f64 + s_b - s_ab)
}
