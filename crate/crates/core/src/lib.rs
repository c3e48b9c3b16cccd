//! Ventricular tachyarrhythmia prediction from RR-interval tachograms.
//!
//! The pipeline runs in stages: [`dataset`] loads tachograms and applies the
//! decision boundary, [`features`] turns each record into a feature vector,
//! [`nn`] holds the multi-task network, [`optim`] trains it with AdaDelta,
//! and [`eval`] runs stratified cross-validation and the ablation grid.
//! [`model`] bundles a trained network with its scalers for scoring, and
//! [`cli`] implements the `vtapred` binary.

// `!(x > 0.0)` is used deliberately so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod model;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod synthetic;

pub use error::{Error, Result};
