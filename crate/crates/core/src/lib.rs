//! Human and automatic evaluation tooling for speech translation.
//!
//! The pipeline: resegment system outputs onto the reference segmentation
//! ([`align`]), score them with lexical metrics ([`metrics`]), run a direct
//! assessment campaign over a seeded sample of segments ([`da`],
//! [`campaign`]), and correlate human and automatic system-level scores
//! ([`stats`]).

pub mod align;
pub mod campaign;
pub mod da;
pub mod error;
pub mod evalset;
pub mod metrics;
pub mod stats;
pub mod textproc;
mod tsv;

pub use error::{Error, Result};
