//! Measures how well a language model's next-word distributions reproduce
//! the variability of a human population.
//!
//! Human answers and model generations are both turned into per-context
//! categorical distributions ([`cpd::Cpd`]), compared with total variation
//! distance and calibration error, and probed with oracle controls and
//! diagnostic analyses.

pub mod abstraction;
pub mod ard;
pub mod cpd;
pub mod corpus;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod report;
pub mod sampler;
pub mod util;

pub use error::{Error, Result};
