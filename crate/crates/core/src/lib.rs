//! Entropy-preserving distribution matching on tabular categorical models.
//!
//! The crate implements cross-entropy and GEM training objectives together
//! with the logit-flow view of their gradients, the closed-form GEM
//! equilibrium, autoregressive training with data reset, diversity metrics
//! and a config-driven experiment harness.

pub mod dist;
pub mod error;
pub mod flow;
pub mod harness;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod record;
pub mod sequential;

pub use dist::{entropy, forward_kl, log_softmax, reverse_kl, sharpen, softmax, LogitVector, ProbVector};
pub use error::{GemError, Result};
pub use losses::{HFunction, LossKind, LossSpec};
pub use models::{closed_form_equilibrium, OptimizerConfig, OptimizerKind, OptimizerState, TabularModel, Target};
pub use record::RunRecord;
pub use sequential::{ContextKey, DecodeConfig, TokenSequence};
