//! Generation, verification and completion of mathematical identities with
//! tree-structured neural models.
//!
//! The crate is organized bottom-up:
//!
//! - [`expr`]: grammar, expression trees and the prefix text format
//! - [`eval`]: real-valued evaluation and the sampling identity oracle
//! - [`datagen`]: axioms, mutation and rewrite generators, datasets
//! - [`autodiff`]: reverse-mode differentiation on a per-example tape
//! - [`models`]: tree and chain networks, number autoencoder, checkpoints
//! - [`training`]: Adam training loop, metrics and threshold calibration
//! - [`tasks`]: generalization, extrapolation and completion experiments
//! - [`config`]: run configuration file

pub mod autodiff;
pub mod config;
pub mod datagen;
pub mod eval;
pub mod expr;
pub mod models;
pub mod tasks;
pub mod training;
