//! Entropy-driven control for autoregressive decoding.
//!
//! Entropy of the next-token distribution is treated as the state variable
//! of the decoder. Its irreversible decrease, accumulated as *entropic time*,
//! measures progress, and three local controllers act on it:
//!
//! * [`scheduler`] advances the sequences that resolve the most uncertainty
//!   per unit cost,
//! * [`pruner`] drops KV blocks that carry little attention-weighted
//!   surprisal,
//! * [`controller`] adjusts the sampling temperature toward a target entropy.
//!
//! [`engine`] couples them in a deterministic closed-loop simulator driven by
//! the synthetic workloads in [`workload`], and runs the ablation suite.

pub mod calibration;
pub mod controller;
pub mod engine;
pub mod entropic_time;
pub mod entropy;
pub mod error;
pub mod pruner;
pub mod scheduler;
pub mod workload;

pub use error::{Error, Result};
