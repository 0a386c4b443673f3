//! Simulator and verifier for quantum protocols over the six-qubit cluster
//! state `½(|000000⟩ + |000111⟩ + |111000⟩ − |111111⟩)`.

pub mod acceptance;
pub mod cli;
pub mod error;
pub mod measure;
pub mod protocols;
pub mod qstate;
pub mod synth;
pub mod tables;
pub mod tol;

pub use error::{Error, Result};
pub use measure::{check_orthonormal, measure, project, GramReport, MeasurementBasis};
pub use protocols::{DenseMessage, Protocol, ProtocolSuite, ProtocolTranscript, TableSet};
pub use qstate::{c6, DensityMatrix, Ket, Label, SecretState, C64};
pub use synth::{synthesize_correction, AssignmentReport, LocalOp};
pub use tables::{parse_table, validate_table, ProtocolTable, ValidationReport};
