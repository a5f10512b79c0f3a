//! Cross-scene adaptive model selection.
//!
//! Offline, a labelled, scene-annotated dataset is profiled into a repository
//! of small scene-specialised classifiers, a set of allocation labels collected
//! by Thompson sampling, and a decision model that scores every repository
//! model's suitability for a sample. Online, each frame ranks the repository,
//! an LFU cache decides which model actually serves it, and trace metrics
//! record windowed F1, cache misses and scene durations.

pub mod artifact;
pub mod config;
pub mod dataset;
pub mod decision;
pub mod error;
pub mod kmeans;
pub mod learners;
pub mod metrics;
pub mod pipeline;
pub mod profiling;
pub mod rng;
pub mod runtime;
pub mod sampling;
pub mod store;

pub use error::{Error, Result};
