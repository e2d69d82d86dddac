//! Class-level keyword extraction for multilabel text classifiers.
//!
//! Each round splits the corpus, trains a small classifier and attributes its
//! true-positive predictions to input words with Integrated Gradients. Word
//! selections are then aggregated across rounds and filtered by selection
//! frequency and document frequency.

pub mod attribution;
pub mod corpus;
pub mod error;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod verify;

pub use error::{Error, Result};
