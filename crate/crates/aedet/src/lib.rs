//! Autoencoder-based image anomaly detection.
//!
//! The pipeline has three stages: a convolutional autoencoder is trained to
//! reconstruct normal (OK) samples only, per-sample feature vectors are
//! extracted from original/reconstruction pairs, and a one-class classifier
//! fitted on the training features scores unseen samples. A decision
//! threshold picked at the equal-error-rate point on validation scores turns
//! scores into OK/NOK decisions.
//!
//! Modules mirror the stages: [`dataset`] (annotations, labels, splits,
//! canonical resizing, augmentation), [`autoencoder`] (model cores, conv
//! pairs, training, checkpoints), [`features`] (block descriptors and the
//! six extractor kinds), [`oneclass`] (scaling, classifiers, thresholds),
//! [`evaluation`] (metrics, ROC, reports) and [`runner`] (configuration,
//! single experiments, the combination grid, tables and plots).

pub mod autoencoder;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod exec;
pub mod features;
pub mod hash;
pub mod image;
pub mod nn;
pub mod oneclass;
pub mod runner;

pub use error::{Error, Result};
