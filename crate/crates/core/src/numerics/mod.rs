//! Functional attention kernels.
//!
//! Everything here works on [`DenseMatrix`] in double precision unless the
//! config asks for [`ScalarPrecision::Single`], in which case the fused
//! streaming kernel evaluates in `f32` and widens the result.

mod chunks;
mod config;
mod dense;
mod fused;
mod matrix;
mod streaming;

pub use chunks::{sliding_chunks_attention, sliding_chunks_attention_padded, ChunkedAttention};
pub use config::{AttentionConfig, NumericMode, ScalarPrecision};
pub use dense::{dense_attention, masked_dense_attention, softmax_row};
pub use fused::{fused_row_attention, fused_row_kernel, FusedRow};
pub use matrix::{max_relative_error, DenseMatrix};
pub use streaming::{streaming_window_attention, KvFifo, StreamingOutput, TrafficCounters};

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
