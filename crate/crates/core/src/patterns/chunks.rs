use num_rational::Ratio;

use crate::error::{Error, Result};

/// One dense `2w x 2w` block of the sliding-chunks scheme, covering rows and
/// columns `start..end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Chunk {
    pub index: usize,
    pub start: usize,
    pub end: usize,
}

/// Chunks of width `2w` laid along the diagonal with stride `w`, so
/// consecutive chunks overlap by `w` rows and `w` columns. A sequence of
/// length `N` (a multiple of `w`, at least `2w`) needs `N / w - 1` chunks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkPlan {
    pub seq_len: usize,
    pub half_window: usize,
    pub chunk_width: usize,
    pub overlap: usize,
    pub chunks: Vec<Chunk>,
}

impl ChunkPlan {
    pub fn new(seq_len: usize, half_window: usize) -> Result<Self> {
        let w = half_window;
        if w == 0 {
            return Err(Error::invalid("half_window must be at least 1"));
        }
        if seq_len < 2 * w {
            return Err(Error::invalid(format!("seq_len {seq_len} shorter than one chunk (2w = {})", 2 * w)));
        }
        if !seq_len.is_multiple_of(w) {
            return Err(Error::invalid(format!(
                "seq_len {seq_len} is not a multiple of w = {w}; pad the sequence first"
            )));
        }
        let count = seq_len / w - 1;
        let chunks = (0..count)
            .map(|index| Chunk {
                index,
                start: index * w,
                end: index * w + 2 * w,
            })
            .collect();
        Ok(Self {
            seq_len,
            half_window: w,
            chunk_width: 2 * w,
            overlap: w,
            chunks,
        })
    }

    pub fn chunk_count(&self) -> usize {
        self.chunks.len()
    }

    /// Sequence length rounded up so that [`ChunkPlan::new`] accepts it.
    pub fn padded_len(seq_len: usize, half_window: usize) -> usize {
        let w = half_window.max(1);
        seq_len.max(2 * w).div_ceil(w) * w
    }
}

/// Fraction of dense-chunk work spent on overlaps and out-of-band corners:
/// `1/2 - 1/(4c)`.
pub fn chunk_redundancy_ratio(chunks: u64) -> Result<Ratio<u64>> {
    if chunks == 0 {
        return Err(Error::invalid("chunk count must be at least 1"));
    }
    Ok(Ratio::new(2 * chunks - 1, 4 * chunks))
}
