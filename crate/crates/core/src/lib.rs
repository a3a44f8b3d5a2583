//! Local contrast learning on CPU.
//!
//! A one-shot classifier is trained by repeatedly sampling a *local
//! cognitive context* (one recognizing image plus `L` shuffled contrastive
//! images, exactly one of which shares its category), pairing the
//! recognizing image with each contrastive image, embedding every pair with
//! a weight-shared pre-activation residual network, and letting a single
//! dense layer over all `L` embeddings score which contrastive object is the
//! positive one. The lowest activation wins.
//!
//! Module map:
//!
//! - [`tensor`]: row-major tensors, a reverse-mode autodiff tape, gradient checking
//! - [`model`]: network shape, parameters, forward passes, loss and prediction
//! - [`sampler`]: context sampling, batches, test trials and trial accounting
//! - [`dataset`]: image ingestion, resizing, rotation augmentation, splits, synthetic glyphs, trial manifests
//! - [`trainer`]: initialisation, learning-rate schedule, momentum SGD, checkpoints
//! - [`evaluator`]: one-shot / few-shot accuracy with confidence intervals
//! - [`cli`]: config file handling and the `lcl` subcommands

pub mod cli;
pub mod dataset;
pub mod error;
pub mod evaluator;
pub mod model;
pub mod sampler;
pub mod tensor;
pub mod trainer;

pub use error::{LclError, Result};
