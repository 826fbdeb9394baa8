//! Viral event detection from censored cascades via deep survival analysis.
//!
//! The pipeline observes the first hours of an information cascade, fits a
//! parametric survival curve with a recurrent model (`gamma`), and classifies
//! the inferred curve with a convolutional discriminator (`delta`).

pub mod cascade;
pub mod delta;
pub mod error;
pub mod eval;
pub mod gamma;
pub mod ingest;
pub mod survdist;
pub mod synth;
pub mod tensorkit;

pub use cascade::{BinnedCascade, Cascade, LabeledCascade, Virality, ViralityConfig};
pub use error::VedsaError;
pub use survdist::{DistFamily, DistParams};
