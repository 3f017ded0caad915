//! Learning a binary classifier from several conflicting annotators whose
//! reliability depends on the input, and scoring each annotator's
//! trustworthiness without access to ground truth.
//!
//! The model math is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what the file formats and the command
//! line tool use.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod model;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod sweep;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
pub use evaluation::RankBy;
pub use scalar::Scalar;
pub use synth::{AdversarySpec, SynthConfig};
pub use training::{FitConfig, FitTrace};

pub type Dataset = dataset::Dataset<f64>;
pub type Standardization = dataset::Standardization<f64>;
pub type ModelParams = model::ModelParams<f64>;
pub type GroundTruthParams = model::GroundTruthParams<f64>;
pub type AnnotatorParams = model::AnnotatorParams<f64>;
pub type AnnotatorReport = evaluation::AnnotatorReport<f64>;
pub type AdversarialScore = evaluation::AdversarialScore<f64>;

pub type Dataset32 = dataset::Dataset<f32>;
pub type ModelParams32 = model::ModelParams<f32>;
