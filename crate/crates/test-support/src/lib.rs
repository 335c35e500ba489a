//! Independent reference implementations used as oracles by the test suites.
//!
//! Nothing in here may call into the `dadmm` crate: every routine recomputes
//! its answer from first principles (1-D searches, brute-force enumeration,
//! dense matrix powers) so that agreement with the library is meaningful
//! evidence rather than a tautology.

pub mod calculus;
pub mod graph;
pub mod prox;
pub mod scalar;
