//! A2XP: domain generalization by attending to expert prompts.
//!
//! Experts are additive border prompts adapted per source domain against a
//! frozen classifier. A learned cross-attention over the normalized experts
//! then mixes them per image, so unseen-domain inputs receive an
//! image-specific prompt without touching the classifier's parameters.
//!
//! The crate is organized around the two training phases plus the
//! surrounding experiment machinery:
//!
//! - [`prompt`]: border prompts, init strategies, the expert bank
//! - [`nn`]: the small sequential networks and optimizers
//! - [`objective`]: the frozen classifier adapter and KL loss
//! - [`mixer`]: query/key embedding and attention mixing
//! - [`adapt`]: phase 1, per-domain expert adaptation
//! - [`generalize`]: phase 2, head training with LR schedule
//! - [`data`]: multi-domain datasets, synthetic shapes, LODO splits
//! - [`eval`]: accuracy protocols, attention analysis, memory accounting
//! - [`stats`]: repeated-measures ANOVA
//! - [`experiment`]: configs, run directories, and the CLI commands

pub mod adapt;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod generalize;
pub mod mixer;
pub mod nn;
pub mod objective;
pub mod prompt;
pub mod stats;
pub mod tensor;
pub mod util;

pub use error::{Error, Result};
