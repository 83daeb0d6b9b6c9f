//! Static attention patterns.
//!
//! A row attends to the union of three sources, resolved with precedence
//! window > global > random so every column has exactly one provenance:
//!
//! * window: `{i - w, ..., i + w - 1}` clipped to `[0, N)`
//! * global: the configured token indices (attended by every row)
//! * random: `r` extra tokens per row, drawn from the counter generator in
//!   [`crate::rng`] keyed by `(random_seed, row)`, skipping anything already
//!   in the window or global set.
//!
//! Random draw `k` of row `i` is `x = CounterRng::new(seed, i).draw(k)`;
//! draws in the biased tail `x >= N * floor(2^64 / N)` are rejected, the
//! candidate is `x mod N`, and candidates already excluded or already drawn
//! are skipped. Output order is draw order.

mod chunks;
mod json;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use chunks::{chunk_redundancy_ratio, Chunk, ChunkPlan};
pub use json::{attend_sets_from_json, attend_sets_to_json, AttendSetsDoc};

use crate::error::{Error, Result};
use crate::numerics::AttentionConfig;
use crate::rng::CounterRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Window,
    Global,
    Random,
}

/// Sorted attended columns of one row, each tagged with its source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttendSet {
    pub row: usize,
    pub cols: Vec<usize>,
    pub provenance: Vec<Provenance>,
}

impl AttendSet {
    /// Build from unsorted `(col, provenance)` entries. Duplicated columns keep
    /// the highest-precedence provenance.
    pub fn from_entries(row: usize, mut entries: Vec<(usize, Provenance)>) -> Self {
        entries.sort_unstable();
        entries.dedup_by_key(|e| e.0);
        let (cols, provenance) = entries.into_iter().unzip();
        Self { row, cols, provenance }
    }

    pub fn window_only(row: usize, cols: Vec<usize>) -> Self {
        Self::from_entries(row, cols.into_iter().map(|c| (c, Provenance::Window)).collect())
    }

    pub fn len(&self) -> usize {
        self.cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cols.is_empty()
    }

    pub fn contains(&self, col: usize) -> bool {
        self.cols.binary_search(&col).is_ok()
    }

    pub fn count(&self, which: Provenance) -> usize {
        self.provenance.iter().filter(|&&p| p == which).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, Provenance)> + '_ {
        self.cols.iter().copied().zip(self.provenance.iter().copied())
    }

    /// Checks sortedness, bounds, non-emptiness and the provenance pairing.
    pub fn validate(&self, seq_len: usize) -> Result<()> {
        if self.cols.is_empty() {
            return Err(Error::invalid(format!("row {} has an empty attend set", self.row)));
        }
        if self.cols.len() != self.provenance.len() {
            return Err(Error::invalid(format!("row {}: provenance length mismatch", self.row)));
        }
        if self.cols.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::invalid(format!("row {}: columns not strictly increasing", self.row)));
        }
        if self.cols.last().is_some_and(|&c| c >= seq_len) {
            return Err(Error::invalid(format!("row {}: column out of range", self.row)));
        }
        Ok(())
    }
}

/// `[max(0, i - w), min(N - 1, i + w - 1)]` as a range.
pub fn window_range(i: usize, n: usize, w: usize) -> std::ops::Range<usize> {
    i.saturating_sub(w)..(i + w).min(n)
}

pub fn window_attend_set(i: usize, n: usize, w: usize) -> Result<AttendSet> {
    if i >= n {
        return Err(Error::invalid(format!("row {i} out of range for seq_len {n}")));
    }
    if w == 0 {
        return Err(Error::invalid("half_window must be at least 1"));
    }
    Ok(AttendSet::window_only(i, window_range(i, n, w).collect()))
}

/// `r` distinct indices in `[0, N)` outside `excluded`, a pure function of
/// `(i, seed)` for fixed `(r, N, excluded)`.
pub fn random_indices(i: usize, seed: u64, r: usize, n: usize, excluded: &BTreeSet<usize>) -> Result<Vec<usize>> {
    if r == 0 {
        return Ok(Vec::new());
    }
    let blocked = excluded.range(..n).count();
    if r + blocked > n {
        return Err(Error::invalid(format!(
            "cannot draw {r} random tokens: only {} of {n} columns are free",
            n - blocked
        )));
    }
    let rng = CounterRng::new(seed, i as u64);
    let n64 = n as u64;
    // 2^64 mod n; draws at or above 2^64 - tail would bias the modulo.
    let tail = (u64::MAX % n64 + 1) % n64;
    let limit = 0u64.wrapping_sub(tail);
    let mut chosen = Vec::with_capacity(r);
    let mut counter = 0u64;
    while chosen.len() < r {
        let x = rng.draw(counter);
        counter += 1;
        if tail != 0 && x >= limit {
            continue;
        }
        let cand = (x % n64) as usize;
        if excluded.contains(&cand) || chosen.contains(&cand) {
            continue;
        }
        chosen.push(cand);
    }
    Ok(chosen)
}

/// Random tokens of row `i` under `config`, excluding its window and globals.
pub fn row_random_indices(config: &AttentionConfig, i: usize) -> Result<Vec<usize>> {
    if config.random_per_row == 0 {
        return Ok(Vec::new());
    }
    let n = config.seq_len;
    let mut excluded: BTreeSet<usize> = window_range(i, n, config.half_window).collect();
    excluded.extend(config.global_tokens.iter().copied());
    random_indices(i, config.random_seed, config.random_per_row, n, &excluded)
}

/// Per-row union of window, global and random tokens.
pub fn build_attend_sets(config: &AttentionConfig) -> Result<Vec<AttendSet>> {
    config.validate()?;
    let n = config.seq_len;
    (0..n)
        .map(|i| {
            let mut entries: Vec<(usize, Provenance)> = window_range(i, n, config.half_window)
                .map(|c| (c, Provenance::Window))
                .collect();
            entries.extend(config.global_tokens.iter().map(|&g| (g, Provenance::Global)));
            entries.extend(row_random_indices(config, i)?.into_iter().map(|c| (c, Provenance::Random)));
            Ok(AttendSet::from_entries(i, entries))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_examples() {
        assert_eq!(window_attend_set(10, 100, 2).unwrap().cols, vec![8, 9, 10, 11]);
        assert_eq!(window_attend_set(0, 100, 2).unwrap().cols, vec![0, 1]);
        assert_eq!(window_attend_set(99, 100, 2).unwrap().cols, vec![97, 98, 99]);
        assert!(window_attend_set(100, 100, 2).is_err());
        assert!(window_attend_set(1, 100, 0).is_err());
    }

    #[test]
    fn random_examples() {
        let none = BTreeSet::new();
        assert!(random_indices(3, 9, 0, 64, &none).unwrap().is_empty());
        assert_eq!(
            random_indices(10, 42, 4, 64, &none).unwrap(),
            random_indices(10, 42, 4, 64, &none).unwrap()
        );

        let excluded: BTreeSet<usize> = window_range(10, 64, 4).collect();
        let got = random_indices(10, 42, 4, 64, &excluded).unwrap();
        assert_eq!(got.len(), 4);
        let distinct: BTreeSet<_> = got.iter().copied().collect();
        assert_eq!(distinct.len(), 4);
        assert!(got.iter().all(|c| *c < 64 && !excluded.contains(c)));
    }

    #[test]
    fn random_infeasible() {
        let excluded: BTreeSet<usize> = (0..6).collect();
        assert!(random_indices(0, 1, 3, 8, &excluded).is_err());
        // Exactly saturating is allowed and must terminate.
        let got = random_indices(0, 1, 2, 8, &excluded).unwrap();
        let mut sorted = got.clone();
        sorted.sort();
        assert_eq!(sorted, vec![6, 7]);
    }

    #[test]
    fn random_depends_on_row_and_seed() {
        let none = BTreeSet::new();
        let a = random_indices(1, 5, 8, 1 << 20, &none).unwrap();
        assert_ne!(a, random_indices(2, 5, 8, 1 << 20, &none).unwrap());
        assert_ne!(a, random_indices(1, 6, 8, 1 << 20, &none).unwrap());
    }

    #[test]
    fn window_only_config_matches_window_sets() {
        let cfg = AttentionConfig::window(20, 4, 3);
        let sets = build_attend_sets(&cfg).unwrap();
        for (i, s) in sets.iter().enumerate() {
            assert_eq!(s, &window_attend_set(i, 20, 3).unwrap());
        }
    }

    #[test]
    fn full_window() {
        // 2w = N: row w spans everything, rows towards the edges are clipped.
        let sets = build_attend_sets(&AttentionConfig::window(16, 2, 8)).unwrap();
        assert_eq!(sets[8].cols, (0..16).collect::<Vec<_>>());
        assert_eq!(sets[0].cols, (0..8).collect::<Vec<_>>());
        assert_eq!(sets[15].cols, (7..16).collect::<Vec<_>>());
        assert!(sets.iter().all(|s| s.len() <= 16));
    }

    #[test]
    fn precedence_window_over_global() {
        let cfg = AttentionConfig::window(16, 2, 2).with_globals([0, 9]).with_random(2, 3);
        let sets = build_attend_sets(&cfg).unwrap();
        // Row 9 has global token 9 inside its own window.
        let s = &sets[9];
        let pos = s.cols.binary_search(&9).unwrap();
        assert_eq!(s.provenance[pos], Provenance::Window);
        assert_eq!(s.count(Provenance::Global), 1);
        assert_eq!(s.count(Provenance::Random), 2);
        for s in &sets {
            s.validate(16).unwrap();
        }
    }

    #[test]
    fn bigbird_interior_rows() {
        let cfg = AttentionConfig::window(4096, 64, 96)
            .with_globals(0..128)
            .with_random(192, 2024);
        let sets = build_attend_sets(&cfg).unwrap();
        let interior = (128 + 96)..(4096 - 96);
        for s in &sets[interior] {
            assert_eq!(s.len(), 512);
            assert_eq!(s.count(Provenance::Window), 192);
            assert_eq!(s.count(Provenance::Global), 128);
            assert_eq!(s.count(Provenance::Random), 192);
        }
    }
}
