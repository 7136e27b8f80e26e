//! Pipeline orchestration behind the `steer` binary: simulate, reconstruct,
//! certify, extract, report, plus certification sweeps over η and V.
//!
//! Every stage reads its inputs from, and writes its outputs to, one run
//! directory, so any stage can be rerun on its own.

pub mod config;
pub mod pipeline;
pub mod report;
pub mod sweep;

use thiserror::Error;

pub use config::PipelineConfig;
pub use report::RunReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    /// Bad invocation or configuration.
    Usage,
    /// No min-entropy certified.
    Certification,
    /// Min-entropy certified but no extractable bits.
    Parameters,
    Io,
    Numerical,
}

impl FailureKind {
    pub fn exit_code(self) -> u8 {
        match self {
            FailureKind::Usage => 1,
            FailureKind::Certification => 2,
            FailureKind::Parameters => 3,
            FailureKind::Io => 4,
            FailureKind::Numerical => 5,
        }
    }
}

#[derive(Debug, Clone, Error)]
#[error("{stage}: {message}")]
pub struct Failure {
    pub kind: FailureKind,
    pub stage: &'static str,
    pub message: String,
}

impl Failure {
    pub fn new(kind: FailureKind, stage: &'static str, message: impl Into<String>) -> Failure {
        Failure { kind, stage, message: message.into() }
    }

    pub fn exit_code(&self) -> u8 {
        self.kind.exit_code()
    }
}

/// Shorthands for `map_err`.
pub(crate) fn io_err<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> Failure {
    move |e| Failure::new(FailureKind::Io, stage, e.to_string())
}

pub(crate) fn num_err<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> Failure {
    move |e| Failure::new(FailureKind::Numerical, stage, e.to_string())
}
