//! Analytical cost models: FLOPs and memory operations per transformer
//! component, peak attention memory, and energy from cycle counts.
//!
//! Counting conventions (one layer, one sequence, multiplied by `layers`):
//!
//! | quantity            | formula                                             |
//! |---------------------|-----------------------------------------------------|
//! | linear FLOPs        | `8 N d²` (Q, K, V and output projections)            |
//! | FFN FLOPs           | `4 f N d²`                                           |
//! | dense attention     | `4 N² d`                                             |
//! | window attention    | `4 N (2w) d`                                         |
//! | sliding chunks      | window FLOPs `/ (1 - (1/2 - 1/(4c)))`, `c = N/w - 1` |
//!
//! A MAC counts as two FLOPs. Memory operations use the same structure with
//! bytes: every projection reads its input and weights and writes its output,
//! dense attention round-trips the `N x N` score matrix per head, sliding
//! chunks round-trip the `c` dense `2w x 2w` blocks, and the fused window
//! kernel only streams Q, K, V in and Z out.

mod energy;

pub use energy::{energy_per_attention, energy_report, EnergyRow, EnergySpec};

use std::io::Write;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::patterns::{chunk_redundancy_ratio, ChunkPlan};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelDims {
    pub d_model: usize,
    pub heads: usize,
    pub head_dim: usize,
    /// FFN hidden width is `ffn_mult * d_model`.
    pub ffn_mult: f64,
    pub layers: usize,
    pub bytes_per_scalar: usize,
}

impl Default for ModelDims {
    /// BERT-base-like shape; the reference figures leave the model unstated.
    fn default() -> Self {
        Self {
            d_model: 768,
            heads: 12,
            head_dim: 64,
            ffn_mult: 4.0,
            layers: 1,
            bytes_per_scalar: 2,
        }
    }
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.heads == 0 || self.head_dim == 0 || self.layers == 0 {
            return Err(Error::invalid("model dimensions must be positive"));
        }
        if self.heads * self.head_dim != self.d_model {
            return Err(Error::invalid(format!(
                "heads ({}) x head_dim ({}) != d_model ({})",
                self.heads, self.head_dim, self.d_model
            )));
        }
        if !(self.ffn_mult.is_finite() && self.ffn_mult > 0.0) {
            return Err(Error::invalid("ffn_mult must be positive"));
        }
        if self.bytes_per_scalar == 0 {
            return Err(Error::invalid("bytes_per_scalar must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "half_window")]
pub enum AttnKind {
    Dense,
    Window(usize),
    SlidingChunks(usize),
}

impl AttnKind {
    pub fn name(self) -> &'static str {
        match self {
            AttnKind::Dense => "dense",
            AttnKind::Window(_) => "window",
            AttnKind::SlidingChunks(_) => "sliding_chunks",
        }
    }

    pub fn half_window(self) -> Option<usize> {
        match self {
            AttnKind::Dense => None,
            AttnKind::Window(w) | AttnKind::SlidingChunks(w) => Some(w),
        }
    }

    /// Every kind for one half-window, in report order.
    pub fn all(half_window: usize) -> [AttnKind; 3] {
        [AttnKind::Dense, AttnKind::Window(half_window), AttnKind::SlidingChunks(half_window)]
    }
}

/// Per-component breakdown; one CSV row per `(seq_len, kind)`.
///
/// Columns: `seq_len, kind, half_window, flops_linear, flops_attention,
/// flops_ffn, mops_linear, mops_attention, mops_ffn, attention_flop_share,
/// attention_mop_share, peak_memory_bytes, offchip_bytes, chunk_count,
/// redundancy`. `half_window` and `chunk_count` are 0 where they do not apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub seq_len: usize,
    pub kind: String,
    pub half_window: usize,
    pub flops_linear: f64,
    pub flops_attention: f64,
    pub flops_ffn: f64,
    pub mops_linear: f64,
    pub mops_attention: f64,
    pub mops_ffn: f64,
    pub attention_flop_share: f64,
    pub attention_mop_share: f64,
    pub peak_memory_bytes: f64,
    pub offchip_bytes: f64,
    pub chunk_count: usize,
    pub redundancy: f64,
}

impl CostReport {
    pub fn total_flops(&self) -> f64 {
        self.flops_linear + self.flops_attention + self.flops_ffn
    }

    pub fn total_mops(&self) -> f64 {
        self.mops_linear + self.mops_attention + self.mops_ffn
    }

    /// `(linear, attention, ffn)` FLOP fractions; they sum to one.
    pub fn flop_shares(&self) -> (f64, f64, f64) {
        let t = self.total_flops();
        (self.flops_linear / t, self.flops_attention / t, self.flops_ffn / t)
    }

    pub fn mop_shares(&self) -> (f64, f64, f64) {
        let t = self.total_mops();
        (self.mops_linear / t, self.mops_attention / t, self.mops_ffn / t)
    }
}

/// Chunks needed to cover `n` tokens (after padding to a multiple of `w`).
pub fn chunk_count_for(n: usize, w: usize) -> usize {
    ChunkPlan::padded_len(n, w) / w.max(1) - 1
}

fn ratio_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// The window never covers more than the sequence, so `2w >= N` reduces to
/// dense attention without edge truncation.
fn effective_window(n: usize, w: usize) -> f64 {
    (2 * w).min(n) as f64
}

fn chunk_geometry(n: usize, w: usize) -> Result<(usize, Ratio<u64>)> {
    if w == 0 {
        return Err(Error::invalid("half_window must be at least 1"));
    }
    let c = chunk_count_for(n, w);
    Ok((c, chunk_redundancy_ratio(c as u64)?))
}

/// FLOPs, memory operations and memory footprint of one sequence of length `n`.
pub fn flops_breakdown(dims: &ModelDims, n: usize, kind: AttnKind) -> Result<CostReport> {
    dims.validate()?;
    if n == 0 {
        return Err(Error::invalid("seq_len must be positive"));
    }
    let nf = n as f64;
    let d = dims.d_model as f64;
    let heads = dims.heads as f64;
    let b = dims.bytes_per_scalar as f64;
    let layers = dims.layers as f64;
    let hidden = dims.ffn_mult * d;

    let flops_linear = 8.0 * nf * d * d;
    let flops_ffn = 4.0 * dims.ffn_mult * nf * d * d;
    // Four projections, each reading N x d, writing N x d, reading d x d weights.
    let mops_linear = 4.0 * (2.0 * nf * d + d * d) * b;
    // Two matmuls: N x d -> N x f -> N x d.
    let mops_ffn = (2.0 * nf * d + 2.0 * nf * hidden + 2.0 * d * hidden) * b;
    // Q, K, V in and Z out.
    let qkvz = 4.0 * nf * d * b;

    let (flops_attention, mops_attention, chunk_count, redundancy) = match kind {
        AttnKind::Dense => (4.0 * nf * nf * d, qkvz + 2.0 * heads * nf * nf * b, 0, 0.0),
        AttnKind::Window(w) => {
            if w == 0 {
                return Err(Error::invalid("half_window must be at least 1"));
            }
            (4.0 * nf * effective_window(n, w) * d, qkvz, 0, 0.0)
        }
        AttnKind::SlidingChunks(w) => {
            let (c, ratio) = chunk_geometry(n, w)?;
            let useful = 4.0 * nf * effective_window(n, w) * d;
            let block = (2 * w) as f64;
            (
                useful / (1.0 - ratio_f64(ratio)),
                qkvz + 2.0 * heads * c as f64 * block * block * b,
                c,
                ratio_f64(ratio),
            )
        }
    };

    let peak = heads * memory_peak(kind, n, dims.head_dim, dims.bytes_per_scalar)?;
    let flops_linear = flops_linear * layers;
    let flops_attention = flops_attention * layers;
    let flops_ffn = flops_ffn * layers;
    let mops_linear = mops_linear * layers;
    let mops_attention = mops_attention * layers;
    let mops_ffn = mops_ffn * layers;
    let total_flops = flops_linear + flops_attention + flops_ffn;
    let total_mops = mops_linear + mops_attention + mops_ffn;

    Ok(CostReport {
        seq_len: n,
        kind: kind.name().to_string(),
        half_window: kind.half_window().unwrap_or(0),
        flops_linear,
        flops_attention,
        flops_ffn,
        mops_linear,
        mops_attention,
        mops_ffn,
        attention_flop_share: flops_attention / total_flops,
        attention_mop_share: mops_attention / total_mops,
        peak_memory_bytes: peak,
        offchip_bytes: total_mops,
        chunk_count,
        redundancy,
    })
}

/// Peak memory of one attention head in bytes.
///
/// Dense keeps the full score matrix (`N² b`) next to Q, K, V (`3 N H b`).
/// The fused window design keeps Q, K, V off-chip plus on-chip K/V FIFOs,
/// one query row and one score row: `(2·2w·H + 2H + 2w) b`. Sliding chunks
/// hold `c` dense blocks of scores and probabilities.
pub fn memory_peak(kind: AttnKind, n: usize, head_dim: usize, bytes_per_scalar: usize) -> Result<f64> {
    if n == 0 || head_dim == 0 || bytes_per_scalar == 0 {
        return Err(Error::invalid("memory_peak arguments must be positive"));
    }
    let nf = n as f64;
    let h = head_dim as f64;
    let b = bytes_per_scalar as f64;
    let operands = 3.0 * nf * h * b;
    Ok(match kind {
        AttnKind::Dense => nf * nf * b + operands,
        AttnKind::Window(w) => {
            if w == 0 {
                return Err(Error::invalid("half_window must be at least 1"));
            }
            let win = (2 * w) as f64;
            operands + (2.0 * win * h + 2.0 * h + win) * b
        }
        AttnKind::SlidingChunks(w) => {
            let (c, _) = chunk_geometry(n, w)?;
            let block = (2 * w) as f64;
            c as f64 * block * block * 2.0 * b + operands
        }
    })
}

/// All kinds for every `n` in `grid`, sorted by `(seq_len, kind)`.
pub fn sweep(dims: &ModelDims, grid: &[usize], half_window: usize) -> Result<Vec<CostReport>> {
    let mut cells: Vec<(usize, AttnKind)> = grid
        .iter()
        .flat_map(|&n| AttnKind::all(half_window).map(|k| (n, k)))
        .collect();
    cells.sort();
    cells.dedup();
    cells.into_iter().map(|(n, k)| flops_breakdown(dims, n, k)).collect()
}

/// Powers of two from 128 to 16384.
pub fn default_grid() -> Vec<usize> {
    (7..=14).map(|p| 1usize << p).collect()
}

pub fn write_reports_csv<W: Write>(reports: &[CostReport], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for r in reports {
        writer.serialize(r)?;
    }
    writer.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn reports_to_json(reports: &[CostReport]) -> Result<String> {
    let mut s = serde_json::to_string_pretty(reports)?;
    s.push('\n');
    Ok(s)
}
