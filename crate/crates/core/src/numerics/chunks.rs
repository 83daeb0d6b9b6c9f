use super::dense::{check_qkv, softmax_row};
use super::{dot, DenseMatrix};
use crate::error::{Error, Result};
use crate::patterns::ChunkPlan;

#[derive(Debug, Clone)]
pub struct ChunkedAttention {
    pub z: DenseMatrix,
    pub chunk_count: usize,
    /// All multiply-accumulates of the dense chunk products (`QK^T` and `S'V`).
    pub mac_count: u64,
    /// MACs spent on score entries that were masked out: out-of-band corners
    /// and overlap entries already owned by an earlier chunk.
    pub redundant_mac_count: u64,
}

/// Banded attention computed the way the sliding-chunks baseline does it:
/// dense `2w x 2w` products over overlapping diagonal chunks, then masking.
///
/// `N` must be a multiple of `w` and at least `2w`; see
/// [`sliding_chunks_attention_padded`] for other lengths.
pub fn sliding_chunks_attention(q: &DenseMatrix, k: &DenseMatrix, v: &DenseMatrix, half_window: usize) -> Result<ChunkedAttention> {
    check_qkv(q, k, v)?;
    let plan = ChunkPlan::new(q.rows(), half_window)?;
    chunked(q, k, v, &plan, q.rows())
}

/// Pads `N` with zero rows up to the next accepted length. Padding rows and
/// columns are masked, their outputs dropped and their MACs left out of both
/// counters.
pub fn sliding_chunks_attention_padded(
    q: &DenseMatrix,
    k: &DenseMatrix,
    v: &DenseMatrix,
    half_window: usize,
) -> Result<ChunkedAttention> {
    check_qkv(q, k, v)?;
    if half_window == 0 {
        return Err(Error::invalid("half_window must be at least 1"));
    }
    let (n, h) = (q.rows(), q.cols());
    let padded = ChunkPlan::padded_len(n, half_window);
    let pad = |m: &DenseMatrix| {
        let mut data = m.data().to_vec();
        data.resize(padded * h, 0.0);
        DenseMatrix::new(padded, h, data)
    };
    let plan = ChunkPlan::new(padded, half_window)?;
    chunked(&pad(q)?, &pad(k)?, &pad(v)?, &plan, n)
}

fn chunked(q: &DenseMatrix, k: &DenseMatrix, v: &DenseMatrix, plan: &ChunkPlan, real_len: usize) -> Result<ChunkedAttention> {
    let (h, w) = (q.cols(), plan.half_window);
    let n = real_len;
    let band = 2 * w;
    // Band storage: entry (i, j) lives at i * 2w + (j + w - i).
    let mut scores = vec![f64::NEG_INFINITY; n * band];
    let mut owner = vec![usize::MAX; n * band];
    let in_band = |i: usize, j: usize| j + w >= i && j < i + w && j < n;
    let slot = |i: usize, j: usize| i * band + (j + w - i);

    let mut entries = 0u64;
    let mut redundant = 0u64;
    for chunk in &plan.chunks {
        for i in chunk.start..chunk.end.min(n) {
            for j in chunk.start..chunk.end.min(n) {
                entries += 1;
                let s = dot(q.row(i), k.row(j));
                if in_band(i, j) && owner[slot(i, j)] == usize::MAX {
                    owner[slot(i, j)] = chunk.index;
                    scores[slot(i, j)] = s;
                } else {
                    redundant += 1;
                }
            }
        }
    }

    // Row softmax over the band; masked entries are -inf and vanish.
    let mut probs = vec![0.0; n * band];
    for i in 0..n {
        let row = &scores[i * band..(i + 1) * band];
        let live: Vec<f64> = row.iter().copied().filter(|s| s.is_finite()).collect();
        let p = softmax_row(&live)?;
        let mut it = p.into_iter();
        for (dst, s) in probs[i * band..(i + 1) * band].iter_mut().zip(row) {
            if s.is_finite() {
                *dst = it.next().unwrap_or(0.0);
            }
        }
    }

    // Chunk-wise S'V: every chunk multiplies its full 2w x 2w block, entries
    // it does not own carry probability zero.
    let mut out = vec![0.0; n * h];
    for chunk in &plan.chunks {
        for i in chunk.start..chunk.end.min(n) {
            let zi = &mut out[i * h..(i + 1) * h];
            for j in chunk.start..chunk.end.min(n) {
                let p = if in_band(i, j) && owner[slot(i, j)] == chunk.index {
                    probs[slot(i, j)]
                } else {
                    0.0
                };
                for (acc, vj) in zi.iter_mut().zip(v.row(j)) {
                    *acc += p * vj;
                }
            }
        }
    }

    let macs_per_entry = 2 * h as u64;
    Ok(ChunkedAttention {
        z: DenseMatrix::from_output(n, h, out, "Stabilized")?,
        chunk_count: plan.chunk_count(),
        mac_count: entries * macs_per_entry,
        redundant_mac_count: redundant * macs_per_entry,
    })
}
