//! Command-line front end. Exit codes: 0 success, 1 verification failure,
//! 2 usage or input error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::acceptance::run_acceptance;
use crate::error::Error;
use crate::protocols::{
    certify, parent_table, rng_for, round_sig, table_context, DenseMessage, Protocol, ProtocolSuite,
    ProtocolTranscript, TableSet,
};
use crate::qstate::{SecretState, C64};
use crate::synth::{infer_assignment, infer_two_stage};
use crate::tables::{outcome_gram, parse_errata, parse_table, validate_table, Candidate, ProtocolTable};
use crate::tol;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

const DEFAULT_SEED: u64 = 7;

// Like println!, but a closed stdout (e.g. piped into `head`) is not an error.
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout().lock(), $($t)*);
    }};
}

#[derive(Debug, Parser)]
#[command(name = "qc6", version, about = "Six-qubit cluster-state protocol simulator and table verifier")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one protocol and print its transcript.
    Run(RunArgs),
    /// Run many seeded trials of one protocol.
    Fuzz(FuzzArgs),
    /// Validate a table file row by row and infer its qubit assignment.
    Verify(TableArgs),
    /// Infer the qubit assignment of a table file.
    Infer(TableArgs),
    /// Run the full acceptance suite.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Seed for every random choice.
    #[arg(long, env = "QC6_SEED")]
    pub seed: Option<u64>,
    /// Directory with table1.qt … table6.qt and errata.qt (default: built-in copies).
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Write the JSON tree here (`-` for stdout).
    #[arg(long, alias = "out")]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub protocol: String,
    /// Four comma-separated amplitudes (α,μ,γ,β), e.g. `0.5,0.5i,0.5,-0.5`, or `random`.
    #[arg(long, default_value = "random")]
    pub secret: String,
    /// Phase for remote state preparation, in radians.
    #[arg(long)]
    pub phi: Option<f64>,
    /// Dense-coding message: an index 0–31 or `u1,u2,u3`.
    #[arg(long)]
    pub message: Option<String>,
    /// Fidelity tolerance.
    #[arg(long, default_value_t = tol::NUMERIC)]
    pub tol: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct FuzzArgs {
    #[arg(long)]
    pub protocol: String,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = tol::NUMERIC)]
    pub tol: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct TableArgs {
    /// Table file in the line format.
    #[arg(long)]
    pub table: PathBuf,
    /// Also validate under this assignment, e.g. `a,b,1,6,2,5|3,4`.
    #[arg(long)]
    pub assignment: Option<String>,
    /// Errata file (default: the one in --data-dir, else built-in).
    #[arg(long)]
    pub errata: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: Common,
}

/// Failure classes, mapped onto exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failed(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse { .. }
            | Error::Width { .. }
            | Error::UnknownSymbol { .. }
            | Error::Io(_)
            | Error::NotNormalized(_)
            | Error::ZeroVector => CliError::Usage(e.to_string()),
            other => CliError::Failed(other.to_string()),
        }
    }
}

type CliResult = std::result::Result<i32, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Entry point; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            EXIT_USAGE
        }
        Err(CliError::Failed(m)) => {
            eprintln!("verification failed: {m}");
            EXIT_FAIL
        }
    }
}

fn dispatch(cmd: Command) -> CliResult {
    match cmd {
        Command::Run(a) => cmd_run(&a),
        Command::Fuzz(a) => cmd_fuzz(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::Infer(a) => cmd_infer(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

fn emit<T: Serialize>(common: &Common, value: &T) -> std::result::Result<(), CliError> {
    let Some(path) = &common.json else { return Ok(()) };
    let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
    if path.as_os_str() == "-" {
        say!("{}", text.trim_end());
        Ok(())
    } else {
        std::fs::write(path, text).map_err(|e| usage(format!("{}: {e}", path.display())))
    }
}

fn quiet(common: &Common) -> bool {
    common.json.as_deref().is_some_and(|p| p.as_os_str() == "-")
}

fn table_set(common: &Common) -> std::result::Result<TableSet, CliError> {
    match &common.data_dir {
        Some(d) => Ok(TableSet::from_dir(d)?),
        None => Ok(TableSet::embedded()?),
    }
}

fn load_suite(common: &Common) -> std::result::Result<SuiteRef, CliError> {
    match &common.data_dir {
        Some(_) => Ok(SuiteRef::Owned(Box::new(ProtocolSuite::load(table_set(common)?)?))),
        None => Ok(SuiteRef::Shared(ProtocolSuite::embedded())),
    }
}

enum SuiteRef {
    Shared(&'static ProtocolSuite),
    Owned(Box<ProtocolSuite>),
}

impl std::ops::Deref for SuiteRef {
    type Target = ProtocolSuite;
    fn deref(&self) -> &ProtocolSuite {
        match self {
            SuiteRef::Shared(s) => s,
            SuiteRef::Owned(s) => s,
        }
    }
}

fn parse_protocol(s: &str) -> std::result::Result<Protocol, CliError> {
    s.parse().map_err(|e: Error| usage(e.to_string()))
}

/// `random`, or four comma-separated complex numbers, normalized.
pub fn parse_secret(spec: &str) -> std::result::Result<Option<SecretState>, Error> {
    if spec == "random" {
        return Ok(None);
    }
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(Error::Invalid(format!("secret needs 4 amplitudes, got {}", parts.len())));
    }
    let mut c = [C64::new(0.0, 0.0); 4];
    for (z, p) in c.iter_mut().zip(&parts) {
        *z = p.parse::<C64>().map_err(|_| Error::Invalid(format!("bad amplitude `{p}`")))?;
    }
    let n = c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroVector);
    }
    Ok(Some(SecretState::from_coeffs_unchecked(c.map(|z| z / n))))
}

pub fn parse_message(spec: &str) -> std::result::Result<DenseMessage, Error> {
    let bad = || Error::Invalid(format!("bad dense message `{spec}`"));
    if let Ok(i) = spec.trim().parse::<usize>() {
        return DenseMessage::from_index(i);
    }
    let u: Vec<u8> = spec.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?;
    match u[..] {
        [a, b, c] => DenseMessage::new(a, b, c),
        _ => Err(bad()),
    }
}

fn check_tol(t: f64) -> std::result::Result<(), CliError> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(usage(format!("tolerance must be positive, got {t}")))
    }
}

fn one_run(
    suite: &ProtocolSuite,
    p: Protocol,
    secret: Option<SecretState>,
    phi: Option<f64>,
    message: Option<DenseMessage>,
    seed: u64,
    stream: u64,
) -> std::result::Result<ProtocolTranscript, CliError> {
    use rand::Rng;
    let mut rng = rng_for(seed, stream);
    let t = match p {
        Protocol::Rsp => {
            let phi = phi.unwrap_or_else(|| rng.random_range(0.0..std::f64::consts::TAU));
            suite.rsp(phi, &mut rng)?
        }
        Protocol::Dense => {
            let m = match message {
                Some(m) => m,
                None => DenseMessage::from_index(rng.random_range(0..32))?,
            };
            suite.dense(m)?
        }
        _ => {
            let s = secret.unwrap_or_else(|| SecretState::haar(&mut rng));
            match p {
                Protocol::Teleport => suite.teleport(&s, &mut rng)?,
                _ => suite.qis(p, &s, &mut rng)?,
            }
        }
    };
    Ok(t.with_seed(seed))
}

pub fn cmd_run(a: &RunArgs) -> CliResult {
    let p = parse_protocol(&a.protocol)?;
    check_tol(a.tol)?;
    let secret = parse_secret(&a.secret).map_err(|e| usage(e.to_string()))?;
    let message = a.message.as_deref().map(parse_message).transpose().map_err(|e| usage(e.to_string()))?;
    let seed = a.common.seed.unwrap_or(DEFAULT_SEED);
    let suite = load_suite(&a.common)?;
    let t = one_run(&suite, p, secret, a.phi, message, seed, 0)?;
    let ok = t.fidelity >= 1.0 - a.tol;
    if !quiet(&a.common) {
        say!(
            "{}: fidelity {:.12}, {} cbits, correction {}",
            p,
            t.fidelity,
            t.cbits,
            if t.corrections.is_empty() {
                "none".to_string()
            } else {
                t.corrections.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", ")
            }
        );
        if a.common.json.is_none() {
            say!("{}", t.to_json());
        }
    }
    emit(&a.common, &t)?;
    Ok(if ok { EXIT_OK } else { EXIT_FAIL })
}

#[derive(Debug, Serialize)]
pub struct FuzzReport {
    pub protocol: Protocol,
    pub seed: u64,
    pub trials: usize,
    pub min_fidelity: f64,
    pub mean_fidelity: f64,
    pub failures: usize,
    pub cbits: BTreeMap<usize, usize>,
    pub outcomes: BTreeMap<String, usize>,
    pub corrections: BTreeMap<String, usize>,
}

/// Trial `i` draws from stream `i` of the seed, so shards are independent.
pub fn fuzz(suite: &ProtocolSuite, p: Protocol, trials: usize, seed: u64, tolerance: f64) -> crate::error::Result<FuzzReport> {
    let mut r = FuzzReport {
        protocol: p,
        seed,
        trials,
        min_fidelity: 1.0,
        mean_fidelity: 0.0,
        failures: 0,
        cbits: BTreeMap::new(),
        outcomes: BTreeMap::new(),
        corrections: BTreeMap::new(),
    };
    for i in 0..trials {
        let t = one_run(suite, p, None, None, None, seed, i as u64).map_err(|e| match e {
            CliError::Usage(m) | CliError::Failed(m) => Error::Invalid(m),
        })?;
        r.min_fidelity = r.min_fidelity.min(t.fidelity);
        r.mean_fidelity += t.fidelity;
        if t.fidelity < 1.0 - tolerance {
            r.failures += 1;
        }
        *r.cbits.entry(t.cbits).or_default() += 1;
        let key = t.outcomes.iter().map(|o| o.index.to_string()).collect::<Vec<_>>().join(",");
        *r.outcomes.entry(key).or_default() += 1;
        for c in &t.corrections {
            *r.corrections.entry(c.to_string()).or_default() += 1;
        }
    }
    if trials > 0 {
        r.mean_fidelity = round_sig(r.mean_fidelity / trials as f64);
    }
    r.min_fidelity = round_sig(r.min_fidelity);
    Ok(r)
}

pub fn cmd_fuzz(a: &FuzzArgs) -> CliResult {
    let p = parse_protocol(&a.protocol)?;
    check_tol(a.tol)?;
    let seed = a.common.seed.unwrap_or(DEFAULT_SEED);
    let suite = load_suite(&a.common)?;
    let r = fuzz(&suite, p, a.trials, seed, a.tol)?;
    if !quiet(&a.common) {
        say!(
            "{p}: {} trials, min fidelity {:.12}, mean {:.12}, {} failures, cbits {:?}",
            r.trials, r.min_fidelity, r.mean_fidelity, r.failures, r.cbits
        );
    }
    emit(&a.common, &r)?;
    Ok(if r.failures == 0 { EXIT_OK } else { EXIT_FAIL })
}

/// Reads the table file and slots it into the table set it belongs to.
fn table_input(a: &TableArgs) -> std::result::Result<(TableSet, ProtocolTable), CliError> {
    let text = std::fs::read_to_string(&a.table).map_err(|e| usage(format!("{}: {e}", a.table.display())))?;
    let table = parse_table(&text).map_err(|e| usage(format!("{}: {e}", a.table.display())))?;
    if !["1", "2", "3", "4", "5", "6"].contains(&table.id.as_str()) {
        return Err(usage(format!("table id `{}` is not one of 1–6", table.id)));
    }
    let mut set = table_set(&a.common)?;
    if let Some(e) = &a.errata {
        let text = read(e)?;
        set.errata = parse_errata(&text).map_err(|err| usage(format!("{}: {err}", e.display())))?;
    }
    set.tables.insert(table.id.clone(), table.clone());
    Ok((set, table))
}

fn read(p: &Path) -> std::result::Result<String, CliError> {
    std::fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))
}

pub fn cmd_verify(a: &TableArgs) -> CliResult {
    let (set, table) = table_input(a)?;
    let parent = parent_table(&table.id).to_string();
    let cert = certify(&set, &parent)?;
    // The report concerns the file's own table, which may be the follow-up.
    let (verdict, assignment, report, data) = if parent == table.id {
        (cert.verdict, &cert.assignment, &cert.certified, &cert.data)
    } else {
        let f = cert.follow_up.as_ref().ok_or_else(|| CliError::Failed("no follow-up".into()))?;
        (f.verdict, &f.assignment, &f.certified, &f.data)
    };
    let gram_labels = Candidate::parse(&assignment.best.assignment)?.measure_order;
    let gram = outcome_gram(data, &cert.scenario.payloads[..1], &gram_labels)?;
    let custom = match &a.assignment {
        Some(spec) => {
            let c = Candidate::parse(spec).map_err(|e| usage(e.to_string()))?;
            if parent != table.id {
                return Err(usage("--assignment is only supported for first-stage tables (1, 2, 4, 6)"));
            }
            Some(validate_table(&cert.data, &cert.scenario, &c).map_err(|e| usage(e.to_string()))?)
        }
        None => None,
    };
    let ok = report.all_match() && report.gram.pass;
    if !quiet(&a.common) {
        say!(
            "table {}: {} under {} ({}/{} rows match), gram max deviation {:.1e}",
            table.id,
            serde_json::to_value(verdict).expect("enum").as_str().unwrap_or("?"),
            assignment.best.assignment,
            report.matched,
            report.rows.len(),
            gram.max_deviation()
        );
        if let Some(s) = &assignment.stated {
            let n = s.matched_rows.len();
            say!("  stated split best reading {}: {n}/{} rows match", s.assignment, assignment.rows);
        }
        for r in report.rows.iter().filter(|r| !r.verdict.is_match()) {
            say!("  row {} (line {}): {:?}", r.row, r.line, r.verdict);
        }
        let rejected: Vec<_> = cert.errata.iter().filter(|e| !e.accepted).collect();
        if parent == table.id && !cert.errata.is_empty() {
            say!("  errata: {} accepted, {} rejected", cert.errata.len() - rejected.len(), rejected.len());
        }
        if let Some(c) = &custom {
            say!("  under {}: {}/{} rows match", c.assignment, c.matched, c.rows.len());
        }
    }
    let out = json!({
        "table": table.id,
        "pass": ok,
        "verdict": verdict,
        "validation": report,
        "gram": gram,
        "assignment": assignment,
        "certification": if parent == table.id { serde_json::to_value(&cert).ok() } else { None },
        "custom": custom,
    });
    emit(&a.common, &out)?;
    Ok(if ok { EXIT_OK } else { EXIT_FAIL })
}

pub fn cmd_infer(a: &TableArgs) -> CliResult {
    let (set, table) = table_input(a)?;
    let parent = parent_table(&table.id).to_string();
    let (shape, scenario) = table_context(&parent)?;
    let first = set.get(&parent)?.apply_errata(&set.errata).0;
    let reports = match crate::protocols::follow_up_of(&parent) {
        Some((fid, bob, charlie)) => {
            let (s1, s2) = infer_two_stage(&first, &scenario, &shape, set.get(fid)?, &bob, &charlie)?;
            vec![s1, s2]
        }
        None => vec![infer_assignment(&first, &scenario, &shape)?],
    };
    let mine = reports.iter().find(|r| r.table == table.id).expect("own table inferred");
    if !quiet(&a.common) {
        for r in &reports {
            say!(
                "table {}: {} best {} ({}/{} rows, {} tied of {} scanned){}",
                r.table,
                serde_json::to_value(r.verdict).expect("enum").as_str().unwrap_or("?"),
                r.best.assignment,
                r.best.matched_rows.len(),
                r.rows,
                r.tied,
                r.candidates_scanned,
                r.stated
                    .as_ref()
                    .map(|s| format!("; stated split best {} ({}/{})", s.assignment, s.matched_rows.len(), r.rows))
                    .unwrap_or_default()
            );
        }
    }
    emit(&a.common, &reports)?;
    Ok(if mine.full_match() { EXIT_OK } else { EXIT_FAIL })
}

pub fn cmd_report(a: &ReportArgs) -> CliResult {
    let started = Instant::now();
    let seed = a.common.seed.unwrap_or(DEFAULT_SEED);
    let suite = load_suite(&a.common)?;
    let report = run_acceptance(&suite, seed, started);
    if !quiet(&a.common) {
        for c in &report.criteria {
            say!("{}", c.line());
        }
        for b in &report.bell_conventions {
            say!(
                "       bell {} ({}): fidelity {:.6}{}",
                b.convention,
                b.reading,
                b.fidelity,
                if b.reproduces { " reproduces table 1 row 1" } else { "" }
            );
        }
        say!(
            "{} in {:.1} s",
            if report.pass { "all criteria pass" } else { "SOME CRITERIA FAIL" },
            report.elapsed.as_secs_f64()
        );
    }
    emit(&a.common, &report)?;
    Ok(if report.pass { EXIT_OK } else { EXIT_FAIL })
}
