//! Multimodal, multilingual sememe prediction for synset-level lexical entries.
//!
//! The crate covers corpus loading and synthetic fixtures, sequence
//! construction, a small trainable text encoder, image curation, the
//! prediction model and its training loop, and evaluation.

pub mod autodiff;
pub mod cli;
pub mod curation;
pub mod dataset;
pub mod encoders;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod sequencing;
pub mod training;

pub use error::{Error, Result};
