//! Empirical thresholds for recovering structured matrices from linear trace
//! measurements `b_j = Tr(A_j^T P)`.
//!
//! The guide under `book/` walks through the modules; its snippets run as doc-tests.

pub mod ensemble;
pub mod error;
pub mod harness;
pub mod identifiability;
pub mod io;
pub mod linalg;
pub mod model;
pub mod recovery;
pub mod rng;
pub mod variety;

pub use error::{Error, Result};
pub use model::{realify, trace_inner, DenseMatrix, FieldTag, MeasurementVector, C64};
pub use rng::SeedStream;
pub use variety::{
    ambient_dim, delta_spec, sample_point, tangent_basis, variety_dim, TangentBasis, VarietyKind,
    VarietySpec,
};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/varieties.md")]
    mod varieties {}
    #[doc = include_str!("../../../book/src/measurements.md")]
    mod measurements {}
    #[doc = include_str!("../../../book/src/identifiability.md")]
    mod identifiability {}
    #[doc = include_str!("../../../book/src/recovery.md")]
    mod recovery {}
    #[doc = include_str!("../../../book/src/sweeps.md")]
    mod sweeps {}
}
