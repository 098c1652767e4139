//! Item-response-theory characterization of classification instances.
//!
//! The pipeline: load a binary dataset ([`dataset`]), let a population of
//! randomly configured classifiers ([`learners`]) answer every instance under
//! cross-validation ([`response`]), fit a three-parameter logistic item model
//! per instance ([`irt`]), split the data by the fitted parameters
//! ([`partition`]), tune and score each learner family on every split
//! ([`evaluation`]) and compare the splits with rank tests ([`stats`]).

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod irt;
pub mod learners;
pub mod partition;
pub mod response;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
