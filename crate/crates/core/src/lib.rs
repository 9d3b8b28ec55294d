//! Simulator for storage of polarization ⊗ energy-time hyperentangled photon
//! pairs in an atomic-frequency-comb solid-state memory.
//!
//! The crate pairs an analytic engine (Born-rule outcome tables and closed-form
//! rates) with a seeded Monte Carlo engine that produces detector timestamps.

// `!(x > 0.0)` style guards deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod afc_memory;
pub mod analyzers;
pub mod chsh_analysis;
pub mod detection_counting;
pub mod error;
pub mod experiment;
pub mod quantum_state;
pub mod rng;
pub mod source;

pub use error::{Error, Result};
