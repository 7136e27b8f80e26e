//! One-sided device-independent randomness from quantum steering.
//!
//! The crate covers the whole chain: two-qubit linear algebra, a small
//! primal-dual SDP solver, assemblage construction and maximum-likelihood
//! reconstruction, min-entropy certification, a photonic experiment
//! simulator, and a Trevisan extractor built from a block weak design and the
//! Reed-Solomon-Hadamard one-bit extractor.
//!
//! Data-parallel loops (extractor output bits, bootstrap resamples, parameter
//! sweeps) run on rayon when the `parallel` feature is enabled (the default)
//! and sequentially otherwise; results are identical either way.

pub mod assemblage;
pub mod bits;
pub mod certification;
pub mod extractor;
pub mod linalg;
pub mod par;
pub mod sdp;
pub mod simulator;

pub use linalg::{ComplexMatrix, DensityMatrix};
pub use par::Execution;
pub use bits::BitString;
pub use assemblage::{Assemblage, MeasurementSet, TomographyCounts};
pub use certification::CertificationResult;
