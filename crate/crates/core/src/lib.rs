//! Spectral collaborative filtering for implicit feedback.
//!
//! The pipeline ingests raw user/item interaction logs, builds hypergraph
//! Laplacians on both sides of the interaction matrix, extracts spectral
//! features from their smallest eigenpairs, clusters vertices into latent
//! communities/categories, and trains a matrix-factorization predictor with
//! a spectrum-enhanced pairwise ranking objective (SPLR). Popularity,
//! pointwise, and BPR baselines plus a top-n ranking evaluation harness are
//! included so models can be compared under one protocol.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod matrix;
pub mod model;
pub mod preference;
pub mod spectral;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
