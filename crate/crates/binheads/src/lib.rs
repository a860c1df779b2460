//! One-vs-rest classification with per-class-threshold out-of-distribution
//! detection.
//!
//! The toolkit centres on a "binary heads" classifier: a shared MLP trunk
//! feeding one independent sigmoid head per class. A per-class threshold
//! vector gates each head; a sample whose every gated head stays silent is
//! declared out-of-distribution (OOD). The crate provides:
//!
//! - the gated decision rule plus argmax / max-softmax-probability / energy
//!   baselines ([`decision`]),
//! - balanced-accuracy metrics that account for an OOD row ([`metrics`]),
//! - coordinate-descent threshold calibration, global-threshold calibration
//!   for the baselines, and temperature fitting ([`calibrate`]),
//! - a small from-scratch MLP with sigmoid-head and softmax-head training
//!   ([`nnet`]),
//! - synthetic clustered datasets with group-aware splits and CSV
//!   persistence ([`data`]),
//! - an experiment harness: config files, OOD-mixture sweeps, reports and
//!   SVG charts ([`harness`]).
//!
//! Everything is deterministic given a seed. See the crate examples for
//! runnable walkthroughs of each capability.

pub mod calibrate;
pub mod data;
pub mod decision;
pub mod error;
mod fsutil;
pub mod harness;
pub mod metrics;
pub mod nnet;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    FeatureMatrix, Label, LabelVector, Prediction, ScoreKind, ScoreMatrix, ThresholdVector,
    OOD_LABEL,
};
