//! Python bindings. Reports cross the boundary as JSON strings; callers
//! decode them with `json.loads`.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use qc6::protocols::{certify, rng_for, TableSet};
use qc6::qstate::{c6, ebits as core_ebits};
use qc6::tables::parse_table;
use qc6::{DenseMessage, Error, Label, Protocol, ProtocolSuite, ProtocolTranscript, C64};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        Error::SynthesisFailed => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

macro_rules! to_json {
    ($v:expr) => {
        serde_json::to_string($v).expect("serializable")
    };
}

/// Two-qubit payload `α|00⟩ + μ|01⟩ + γ|10⟩ + β|11⟩`.
#[pyclass(name = "SecretState", frozen, from_py_object)]
#[derive(Clone)]
struct PySecret(qc6::SecretState);

#[pymethods]
impl PySecret {
    #[new]
    fn new(alpha: C64, mu: C64, gamma: C64, beta: C64) -> PyResult<Self> {
        qc6::SecretState::new(alpha, mu, gamma, beta).map(PySecret).map_err(py_err)
    }

    #[staticmethod]
    fn haar(seed: u64) -> Self {
        PySecret(qc6::SecretState::haar(&mut rng_for(seed, 0)))
    }

    #[staticmethod]
    fn equatorial(phi: f64) -> Self {
        PySecret(qc6::SecretState::equatorial(phi))
    }

    fn coeffs(&self) -> Vec<C64> {
        self.0.coeffs().to_vec()
    }

    fn __repr__(&self) -> String {
        let c = self.0.coeffs();
        format!("SecretState({}, {}, {}, {})", c[0], c[1], c[2], c[3])
    }
}

/// One protocol run.
#[pyclass(name = "Transcript", frozen)]
struct PyTranscript(ProtocolTranscript);

#[pymethods]
impl PyTranscript {
    #[getter]
    fn protocol(&self) -> &'static str {
        self.0.protocol.name()
    }

    #[getter]
    fn fidelity(&self) -> f64 {
        self.0.fidelity
    }

    #[getter]
    fn cbits(&self) -> usize {
        self.0.cbits
    }

    #[getter]
    fn corrections(&self) -> Vec<String> {
        self.0.corrections.iter().map(ToString::to_string).collect()
    }

    #[getter]
    fn outcomes(&self) -> Vec<String> {
        self.0.messages.iter().map(|m| to_json!(m)).collect()
    }

    fn final_state(&self) -> (Vec<String>, Vec<C64>) {
        let s = &self.0.final_state;
        (
            s.labels.iter().map(|l| l.as_str().to_string()).collect(),
            s.amplitudes.iter().map(|[re, im]| C64::new(*re, *im)).collect(),
        )
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    fn __repr__(&self) -> String {
        format!("Transcript({}, fidelity={:.12}, cbits={})", self.0.protocol.name(), self.0.fidelity, self.0.cbits)
    }
}

fn suite() -> &'static ProtocolSuite {
    ProtocolSuite::embedded()
}

fn secret_or_random(secret: Option<PySecret>, seed: u64) -> qc6::SecretState {
    secret.map(|s| s.0).unwrap_or_else(|| qc6::SecretState::haar(&mut rng_for(seed, u64::MAX)))
}

#[pyfunction]
#[pyo3(signature = (secret=None, seed=7))]
fn teleport(secret: Option<PySecret>, seed: u64) -> PyResult<PyTranscript> {
    let s = secret_or_random(secret, seed);
    let t = suite().teleport(&s, &mut rng_for(seed, 0)).map_err(py_err)?;
    Ok(PyTranscript(t.with_seed(seed)))
}

#[pyfunction]
#[pyo3(signature = (protocol, secret=None, seed=7))]
fn qis(protocol: u8, secret: Option<PySecret>, seed: u64) -> PyResult<PyTranscript> {
    let p = match protocol {
        1 => Protocol::Qis1,
        2 => Protocol::Qis2,
        _ => return Err(PyValueError::new_err("protocol must be 1 or 2")),
    };
    let s = secret_or_random(secret, seed);
    let t = suite().qis(p, &s, &mut rng_for(seed, 0)).map_err(py_err)?;
    Ok(PyTranscript(t.with_seed(seed)))
}

#[pyfunction]
#[pyo3(signature = (phi, seed=7))]
fn rsp(phi: f64, seed: u64) -> PyResult<PyTranscript> {
    let t = suite().rsp(phi, &mut rng_for(seed, 0)).map_err(py_err)?;
    Ok(PyTranscript(t.with_seed(seed)))
}

#[pyfunction]
fn dense(u1: u8, u2: u8, u3: u8) -> PyResult<PyTranscript> {
    let msg = DenseMessage::new(u1, u2, u3).map_err(py_err)?;
    suite().dense(msg).map(PyTranscript).map_err(py_err)
}

/// Seeded trials of one protocol; returns the summary as JSON.
#[pyfunction]
#[pyo3(signature = (protocol, trials=1000, seed=7, tolerance=1e-9))]
fn fuzz(protocol: &str, trials: usize, seed: u64, tolerance: f64) -> PyResult<String> {
    let p: Protocol = protocol.parse().map_err(py_err)?;
    qc6::cli::fuzz(suite(), p, trials, seed, tolerance).map(|r| to_json!(&r)).map_err(py_err)
}

/// Certifies a table given in the line format against the built-in set,
/// replacing the built-in copy with the same id.
#[pyfunction]
#[pyo3(signature = (text=None, table_id="1"))]
fn certify_table(text: Option<&str>, table_id: &str) -> PyResult<String> {
    let mut set = TableSet::embedded().map_err(py_err)?;
    let id = match text {
        Some(text) => {
            let t = parse_table(text).map_err(py_err)?;
            let id = t.id.clone();
            set.tables.insert(id.clone(), t);
            id
        }
        None => table_id.to_string(),
    };
    let parent = qc6::protocols::parent_table(&id).to_string();
    certify(&set, &parent).map(|c| to_json!(&c)).map_err(py_err)
}

/// Entanglement (ebits) of the channel across `partition | rest`.
#[pyfunction]
fn channel_ebits(partition: Vec<String>) -> PyResult<f64> {
    let labels: Vec<Label> = partition.into_iter().map(Label::new).collect();
    core_ebits(&c6(), &labels).map_err(py_err)
}

#[pyfunction]
fn channel_amplitudes() -> Vec<C64> {
    c6().into_amplitudes()
}

/// The full acceptance report as JSON.
#[pyfunction]
#[pyo3(signature = (seed=7))]
fn report(seed: u64) -> String {
    qc6::acceptance::run_acceptance(suite(), seed, std::time::Instant::now()).to_json()
}

#[pymodule]
#[pyo3(name = "qc6")]
fn qc6_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySecret>()?;
    m.add_class::<PyTranscript>()?;
    m.add_function(wrap_pyfunction!(teleport, m)?)?;
    m.add_function(wrap_pyfunction!(qis, m)?)?;
    m.add_function(wrap_pyfunction!(rsp, m)?)?;
    m.add_function(wrap_pyfunction!(dense, m)?)?;
    m.add_function(wrap_pyfunction!(fuzz, m)?)?;
    m.add_function(wrap_pyfunction!(certify_table, m)?)?;
    m.add_function(wrap_pyfunction!(channel_ebits, m)?)?;
    m.add_function(wrap_pyfunction!(channel_amplitudes, m)?)?;
    m.add_function(wrap_pyfunction!(report, m)?)?;
    Ok(())
}
