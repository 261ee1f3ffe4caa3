//! Uncertainty scoring for sampled LLM answers based on the effective rank of
//! their hidden-state embeddings, together with the usual baselines
//! (Eigenscore, semantic entropy variants, length-normalised entropy),
//! ROUGE-L labelling, AUROC evaluation and a toy-model simulator for how
//! sampling noise and parameter uncertainty propagate through a recurrence.

pub mod annotation;
pub mod data_model;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod semantic;
pub mod sim;
pub mod spectral;
pub mod synthetic;
pub mod text;

pub use error::{Error, Result};
