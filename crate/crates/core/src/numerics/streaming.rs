use serde::{Deserialize, Serialize};

use super::dense::check_qkv;
use super::fused::fused_row_kernel;
use super::{AttentionConfig, DenseMatrix, ScalarPrecision};
use crate::error::{Error, Result};
use crate::patterns::row_random_indices;

/// Off-chip row reads performed by a streaming run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficCounters {
    pub q_rows: u64,
    pub window_k_rows: u64,
    pub window_v_rows: u64,
    pub global_k_rows: u64,
    pub global_v_rows: u64,
    pub random_k_rows: u64,
    pub random_v_rows: u64,
    /// Window slots overwritten while still holding a valid row.
    pub evictions: u64,
    /// Window slots cleared because the entering row was past the end.
    pub invalidations: u64,
}

impl TrafficCounters {
    pub fn k_rows(&self) -> u64 {
        self.window_k_rows + self.global_k_rows + self.random_k_rows
    }

    pub fn v_rows(&self) -> u64 {
        self.window_v_rows + self.global_v_rows + self.random_v_rows
    }

    pub fn total_rows(&self) -> u64 {
        self.q_rows + self.k_rows() + self.v_rows()
    }
}

/// Fixed-capacity K/V ring with a moving replacement pointer.
///
/// Each slot holds one K row and the V row with the same source index, or
/// nothing (invalid).
#[derive(Debug, Clone)]
pub struct KvFifo {
    head_dim: usize,
    k: Vec<f64>,
    v: Vec<f64>,
    source: Vec<Option<usize>>,
    next: usize,
}

impl KvFifo {
    pub fn new(capacity: usize, head_dim: usize, start_slot: usize) -> Self {
        assert!(capacity > 0, "FIFO capacity must be positive");
        Self {
            head_dim,
            k: vec![0.0; capacity * head_dim],
            v: vec![0.0; capacity * head_dim],
            source: vec![None; capacity],
            next: start_slot % capacity,
        }
    }

    /// Ring for a half-window `w`: `2w` slots, pointer placed so that row `j`
    /// lands in slot `(j + w + 1) mod 2w`; in steady state the row entering
    /// at query row `i` (that is `i + w - 1`) takes slot `i mod 2w`.
    pub fn for_window(half_window: usize, head_dim: usize) -> Self {
        let cap = 2 * half_window;
        Self::new(cap, head_dim, (half_window + 1) % cap)
    }

    pub fn capacity(&self) -> usize {
        self.source.len()
    }

    pub fn pointer(&self) -> usize {
        self.next
    }

    /// Write `(k, v)` for `row` at the pointer. Returns the slot and the row
    /// it displaced, if any.
    pub fn push(&mut self, row: usize, k: &[f64], v: &[f64]) -> (usize, Option<usize>) {
        let slot = self.next;
        let range = slot * self.head_dim..(slot + 1) * self.head_dim;
        self.k[range.clone()].copy_from_slice(k);
        self.v[range].copy_from_slice(v);
        let old = self.source[slot].replace(row);
        self.next = (slot + 1) % self.capacity();
        (slot, old)
    }

    /// Clear the slot at the pointer and advance.
    pub fn invalidate(&mut self) -> (usize, Option<usize>) {
        let slot = self.next;
        let old = self.source[slot].take();
        self.next = (slot + 1) % self.capacity();
        (slot, old)
    }

    pub fn source(&self, slot: usize) -> Option<usize> {
        self.source[slot]
    }

    /// Sorted source rows of all valid slots.
    pub fn valid_sources(&self) -> Vec<usize> {
        let mut rows: Vec<usize> = self.source.iter().flatten().copied().collect();
        rows.sort_unstable();
        rows
    }

    /// Valid `(K, V)` pairs in slot order.
    pub fn valid_pairs(&self) -> impl Iterator<Item = (&[f64], &[f64])> + '_ {
        let h = self.head_dim;
        self.source
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_some())
            .map(move |(slot, _)| (&self.k[slot * h..(slot + 1) * h], &self.v[slot * h..(slot + 1) * h]))
    }
}

#[derive(Debug, Clone)]
pub struct StreamingOutput {
    pub z: DenseMatrix,
    pub traffic: TrafficCounters,
}

/// Row-major fused attention over the configured pattern with K/V held in a
/// `2w`-slot FIFO, globals pinned in dedicated buffers and random tokens
/// refreshed per row.
///
/// Row order is `0..N`; per row the pairs are consumed as window slots in
/// slot order, then active globals, then random tokens in draw order.
pub fn streaming_window_attention(
    q: &DenseMatrix,
    k: &DenseMatrix,
    v: &DenseMatrix,
    config: &AttentionConfig,
) -> Result<StreamingOutput> {
    check_qkv(q, k, v)?;
    config.validate()?;
    let (n, h, w) = (config.seq_len, config.head_dim, config.half_window);
    if q.rows() != n || q.cols() != h {
        return Err(Error::DimensionMismatch(format!(
            "config is {n}x{h}, inputs are {}x{}",
            q.rows(),
            q.cols()
        )));
    }

    let mut traffic = TrafficCounters::default();
    let mut fifo = KvFifo::for_window(w, h);

    // Pinned global buffers, loaded once before the first row.
    let globals: Vec<(usize, Vec<f64>, Vec<f64>)> = config
        .global_tokens
        .iter()
        .map(|&g| (g, k.row(g).to_vec(), v.row(g).to_vec()))
        .collect();
    traffic.global_k_rows += globals.len() as u64;
    traffic.global_v_rows += globals.len() as u64;

    let r = config.random_per_row;
    let mut rand_k = vec![0.0; r * h];
    let mut rand_v = vec![0.0; r * h];
    let scale = config.score_scale();
    let mut out = Vec::with_capacity(n * h);

    for i in 0..n {
        traffic.q_rows += 1;
        let q_row = q.row(i);

        if i == 0 {
            for j in 0..(w - 1).min(n) {
                fifo.push(j, k.row(j), v.row(j));
                traffic.window_k_rows += 1;
                traffic.window_v_rows += 1;
            }
        }
        let entering = i + w - 1;
        if entering < n {
            let (_, evicted) = fifo.push(entering, k.row(entering), v.row(entering));
            traffic.window_k_rows += 1;
            traffic.window_v_rows += 1;
            traffic.evictions += u64::from(evicted.is_some());
        } else {
            fifo.invalidate();
            traffic.invalidations += 1;
        }
        debug_assert_eq!(
            fifo.valid_sources(),
            crate::patterns::window_range(i, n, w).collect::<Vec<_>>()
        );

        let drawn = row_random_indices(config, i)?;
        for (slot, &j) in drawn.iter().enumerate() {
            rand_k[slot * h..(slot + 1) * h].copy_from_slice(k.row(j));
            rand_v[slot * h..(slot + 1) * h].copy_from_slice(v.row(j));
        }
        traffic.random_k_rows += drawn.len() as u64;
        traffic.random_v_rows += drawn.len() as u64;

        let pairs = fifo
            .valid_pairs()
            .chain(
                globals
                    .iter()
                    .filter(|(g, _, _)| !config.in_window(i, *g))
                    .map(|(_, gk, gv)| (gk.as_slice(), gv.as_slice())),
            )
            .chain(rand_k.chunks_exact(h).zip(rand_v.chunks_exact(h)).take(drawn.len()));

        let (z, _, _) = match config.precision {
            ScalarPrecision::Double => fused_row_kernel::<f64, _>(q_row, pairs, config.mode, scale),
            ScalarPrecision::Single => fused_row_kernel::<f32, _>(q_row, pairs, config.mode, scale),
        }
        .map_err(|e| e.at_row(i))?;
        out.extend_from_slice(&z);
    }

    let z = DenseMatrix::from_output(n, h, out, config.mode.name())?;
    Ok(StreamingOutput { z, traffic })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{dense_attention, masked_dense_attention, max_relative_error, NumericMode};
    use crate::patterns::build_attend_sets;
    use crate::rng::qkv;

    #[test]
    fn fifo_slot_mapping() {
        let w = 3;
        let mut fifo = KvFifo::for_window(w, 1);
        let row = [0.0];
        for j in 0..w - 1 {
            fifo.push(j, &row, &row);
        }
        for i in 0..20 {
            let (slot, _) = fifo.push(i + w - 1, &row, &row);
            assert_eq!(slot, i % (2 * w));
        }
    }

    #[test]
    fn full_window_rows_are_dense() {
        // With 2w = N only row w sees the whole sequence; the others are clipped.
        let (q, k, v) = qkv(8, 4, 3, 1.0);
        let cfg = AttentionConfig::window(8, 4, 4);
        let out = streaming_window_attention(&q, &k, &v, &cfg).unwrap();
        let dense = dense_attention(&q, &k, &v, false).unwrap();
        for (a, b) in out.z.row(4).iter().zip(dense.row(4)) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        assert!(max_relative_error(&out.z, &dense).unwrap() > 1e-6);
    }

    #[test]
    fn matches_masked_oracle() {
        let (q, k, v) = qkv(64, 8, 17, 1.0);
        let cfg = AttentionConfig::window(64, 8, 4);
        let out = streaming_window_attention(&q, &k, &v, &cfg).unwrap();
        let oracle = masked_dense_attention(&q, &k, &v, &build_attend_sets(&cfg).unwrap(), false).unwrap();
        assert!(max_relative_error(&out.z, &oracle).unwrap() <= 1e-10);
    }

    #[test]
    fn load_once_traffic() {
        let (q, k, v) = qkv(64, 8, 1, 1.0);
        for w in [1, 4, 16, 32] {
            let out = streaming_window_attention(&q, &k, &v, &AttentionConfig::window(64, 8, w)).unwrap();
            let t = out.traffic;
            assert_eq!(t.window_k_rows, 64);
            assert_eq!(t.window_v_rows, 64);
            assert_eq!(t.q_rows, 64);
            assert_eq!(t.total_rows(), 3 * 64);
            assert_eq!(t.invalidations as usize, w - 1);
        }
    }

    #[test]
    fn globals_and_random_match_oracle() {
        let (q, k, v) = qkv(40, 4, 8, 1.0);
        let cfg = AttentionConfig::window(40, 4, 3)
            .with_globals([0, 5, 39])
            .with_random(4, 77)
            .with_scale_scores(true);
        let out = streaming_window_attention(&q, &k, &v, &cfg).unwrap();
        let oracle = masked_dense_attention(&q, &k, &v, &build_attend_sets(&cfg).unwrap(), true).unwrap();
        assert!(max_relative_error(&out.z, &oracle).unwrap() <= 1e-10);
        assert_eq!(out.traffic.global_k_rows, 3);
        assert_eq!(out.traffic.random_k_rows, 40 * 4);
    }

    #[test]
    fn raw_overflow_names_row() {
        let (q, k, v) = qkv(16, 16, 2, 1.0);
        let q = q.scaled(60.0).unwrap();
        let k = k.scaled(60.0).unwrap();
        let cfg = AttentionConfig::window(16, 16, 2).with_mode(NumericMode::Raw);
        match streaming_window_attention(&q, &k, &v, &cfg) {
            Err(Error::NumericOverflow { row: Some(_), mode, .. }) => assert_eq!(mode, "Raw"),
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn single_precision_option() {
        let (q, k, v) = qkv(32, 8, 4, 1.0);
        let cfg = AttentionConfig::window(32, 8, 4);
        let double = streaming_window_attention(&q, &k, &v, &cfg).unwrap();
        let single = streaming_window_attention(&q, &k, &v, &cfg.clone().with_precision(ScalarPrecision::Single)).unwrap();
        let err = max_relative_error(&single.z, &double.z).unwrap();
        assert!(err > 0.0 && err < 1e-5, "{err}");
    }
}
