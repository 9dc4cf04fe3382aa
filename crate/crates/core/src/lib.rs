//! Cross-lingual cross-modal knowledge distillation for multilingual
//! text-video retrieval.
//!
//! Frozen teacher encoders score English captions against videos; their
//! pooled similarity matrices become soft targets for a multilingual
//! student trained with a blend of the contrastive (NCE) loss and a
//! soft-target cross entropy.

pub mod data;
pub mod distill;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod kernel;
pub mod model;
pub mod objectives;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
