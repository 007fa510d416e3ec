//! Dual-level contrastive learning for multi-view multi-label classification
//! with missing views and missing labels.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: matrices, reverse-mode tape, gradient checking
//! - [`data`]: datasets, indicator matrices, input masks, I/O
//! - [`model`]: shared/private encoders, decoders, projections, fusion, classifier
//! - [`losses`]: reconstruction, instance/label contrastive, masked BCE, total
//! - [`metrics`]: AP, 1-HL, 1-RL, AUC, OneError, Coverage
//! - [`train`]: Adam, the training loop, checkpoints, channel similarity
//! - [`cli`]: the `dcl` command line front end

pub mod cli;
pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod train;

pub use error::{DclError, Result};
pub use numerics::Matrix;
