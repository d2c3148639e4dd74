//! Compressive acquisition and recovery of videos modeled as linear
//! dynamical systems.
//!
//! The library simulates a single-pixel-camera style acquisition that takes
//! two kinds of per-frame measurements — a fixed set of *common* projections
//! and per-frame *innovation* projections — then recovers the scene in two
//! steps: the low-dimensional state trajectory from the common measurements
//! (block-Hankel factorization, with nuclear-norm completion when frames are
//! missing), and the high-dimensional observation matrix from all
//! measurements (model-based CoSAMP with row-group sparsity). Evaluation
//! utilities cover reconstruction SNR, subspace registration and
//! Procrustes-distance classification of fitted models.
//!
//! Start with the runnable examples (`cargo run --example ...`); each one
//! demonstrates a single capability end to end. The `cslds` binary drives
//! the same pipeline from flat key-value config files.

pub mod acquisition;
pub mod cg;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod lds;
pub mod linalg;
pub mod obs_recovery;
pub mod pipeline;
pub mod state_estim;
pub mod texture;
pub mod transforms;

pub use error::{Error, Result};
