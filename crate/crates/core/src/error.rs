use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("bitstring length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("duplicate basis term |{0}>")]
    DuplicateTerm(String),
    #[error("cannot normalize the zero vector")]
    ZeroVector,
    #[error("invalid qubit count {0}")]
    InvalidCount(usize),
    #[error("labels must be pairwise distinct, `{0}` repeats")]
    LabelCollision(String),
    #[error("unknown qubit label `{0}`")]
    UnknownLabel(String),
    #[error("requested order is not a permutation of the ket labels")]
    NotAPermutation,
    #[error("partition must be a nonempty proper subset of the labels")]
    BadPartition,
    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("state is not normalized (norm^2 = {0})")]
    NotNormalized(f64),
    #[error("outcome probabilities sum to {0}, not 1")]
    ProbabilitySum(f64),
    #[error("vectors are not orthonormal (max deviation {0:e})")]
    NotOrthonormal(f64),
    #[error("unknown named state `{0}`")]
    UnknownState(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("line {line}: {message}")]
    Width { line: usize, message: String },
    #[error("line {line}: unknown coefficient symbol `{symbol}`")]
    UnknownSymbol { line: usize, symbol: String },
    #[error("no correction in the gate menu maps the residual onto the target")]
    SynthesisFailed,
    #[error("no table-consistent assignment: {0}")]
    NoConsistentAssignment(String),
    #[error("state does not match any dense-coding codeword (best fidelity {0})")]
    NotACodeword(f64),
    #[error("completion outcome {index} observed with probability {probability:e}")]
    CompletionOutcome { index: usize, probability: f64 },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
