//! Fused, FIFO-based sliding-window attention.
//!
//! The crate is organised around four layers:
//!
//! * [`numerics`] holds the functional ground truth: a literal three-step
//!   dense attention, a masked variant, the fused row-wise kernel (softmax
//!   denominator applied after the `S'·V` product), the streaming FIFO
//!   dataflow that loads every K/V row exactly once, and the sliding-chunks
//!   baseline with its redundant-MAC accounting.
//! * [`patterns`] generates static attention patterns: banded window,
//!   global tokens, statically seeded random tokens, and the chunk plan.
//! * [`pipeline`] is a transaction-level, cycle-annotated model of the
//!   six-stage attention-core pipeline, co-simulated against [`numerics`].
//! * [`cost`] provides analytical FLOP / memory-traffic / energy models.
//!
//! [`cli`] ties everything together behind the `winattn` binary.

pub mod cli;
pub mod cost;
pub mod error;
pub mod numerics;
pub mod patterns;
pub mod pipeline;
pub mod rng;

pub use error::{Error, Result};
pub use numerics::{AttentionConfig, DenseMatrix, NumericMode, ScalarPrecision};
pub use patterns::{AttendSet, Provenance};
