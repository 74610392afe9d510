//! Contactless fingerprint toolkit built around ridge/valley collaboration.
//!
//! Pipeline: color capture → grayscale (ordinary or Luma) → optional
//! inversion → enhancement → minutiae → cylinder matching → all-to-all
//! scoring → score fusion and ROC/EER/GAR evaluation.

pub mod enhance;
pub mod error;
pub mod experiment;
pub mod features;
pub mod fusion_eval;
pub mod imaging;
pub mod matcher;
pub mod synth;

pub use error::{Error, Result};
