//! Self-evaluation decoding engine.
//!
//! An autoregressive decoding library built around uncertainty-aware token
//! selection. At positions where the next-token distribution is too flat to
//! trust (chaotic points), the engine speculates a full continuation for each
//! of the top-k candidate tokens, asks an evaluator how likely each
//! continuation is to be correct, and commits the token with the best fused
//! propensity score. Greedy, beam, and nucleus decoding are provided both as
//! standalone baselines and as the speculation machinery.
//!
//! Everything is deterministic: models are scripted tables or n-gram counts,
//! sampling runs on a pinned counter-based RNG, and a brute-force oracle
//! module re-derives every chaotic-point decision independently so the engine
//! can be checked exactly.

pub mod core;
pub mod decoders;
pub mod detection;
mod error;
pub mod fixtures;
pub mod harness;
pub mod models;
pub mod oracle;
pub mod sed;

pub use error::{Error, Result};

/// Version stamp written into trace headers; bump on any change that can
/// alter emitted bytes.
pub const ENGINE_VERSION: &str = concat!("sed-engine/", env!("CARGO_PKG_VERSION"));
