//! Fuzzy weighted conjunctive rule learning for regression on binarized
//! tabular data.
//!
//! The pipeline turns a raw table into fuzzy binary features
//! ([`features`]), optionally tightens it against a lightweight ontology
//! ([`ontology`]), trains a set of weighted conjunctive rules by gradient
//! descent ([`model`], [`loss`], [`grad`], [`train`]) and renders the
//! learned rules and per-prediction explanations as plain text
//! ([`explain`]). [`eval`] holds the error reporting, a ridge baseline
//! and a synthetic planted-rule generator used to score rule recovery.

pub mod error;
pub mod eval;
pub mod explain;
pub mod features;
pub mod grad;
pub mod io;
pub mod loss;
pub mod model;
pub mod ontology;
pub mod train;

mod linalg;
mod stats;

pub use error::{Error, Result};
