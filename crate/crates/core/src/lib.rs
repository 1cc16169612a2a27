//! Semantic-context contextual bandits.
//!
//! * [`numerics`], [`features`], [`agents`]: shared-model LinUCB over either
//!   semantic `[q; φ; qᵀφ; 1]` or one-hot `[q; e_j; 1]` features.
//! * [`toyenv`], [`simulate`], [`metrics`]: the static and continual toy
//!   environments, the per-run driver and regret/reward accounting.
//! * [`presentation`], [`policy`]: the four action-context modes and the
//!   language-model backends (remote endpoint or deterministic stubs).
//! * [`embedding`], [`fireact`]: retrieval over a tool catalog followed by
//!   policy selection among the retrieved candidates.
//! * [`icl`]: in-context bandit scenarios played turn by turn through a
//!   policy backend.

pub mod agents;
pub mod embedding;
pub mod error;
pub mod features;
pub mod fireact;
pub mod icl;
pub mod metrics;
pub mod numerics;
pub mod policy;
pub mod presentation;
pub mod seeding;
pub mod simulate;
pub mod toyenv;

pub use error::{Error, Result};
