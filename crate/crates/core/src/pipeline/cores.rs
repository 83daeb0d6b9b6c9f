use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{AttentionConfig, DenseMatrix};
use crate::patterns::row_random_indices;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pinning {
    /// Window core, part of the FIFO ring.
    None,
    Global,
    Random,
}

/// One attention core: a stationary `(K_j, V_j)` pair and its per-row outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionCoreState {
    pub core_id: usize,
    pub k_buf: Vec<f64>,
    pub v_buf: Vec<f64>,
    /// Row held in the buffers; `None` means the core is invalid.
    pub source_row: Option<usize>,
    pub s_prime: f64,
    pub z_slice: Vec<f64>,
    pub pinned: Pinning,
}

impl AttentionCoreState {
    fn new(core_id: usize, head_dim: usize, pinned: Pinning) -> Self {
        Self {
            core_id,
            k_buf: vec![0.0; head_dim],
            v_buf: vec![0.0; head_dim],
            source_row: None,
            s_prime: 0.0,
            z_slice: vec![0.0; head_dim],
            pinned,
        }
    }

    pub fn valid(&self) -> bool {
        self.source_row.is_some()
    }

    /// K and V always come from the same source row.
    fn fill(&mut self, row: usize, k: &DenseMatrix, v: &DenseMatrix) -> Option<usize> {
        self.k_buf.copy_from_slice(k.row(row));
        self.v_buf.copy_from_slice(v.row(row));
        self.source_row.replace(row)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoreAllocation {
    pub window: usize,
    pub global: usize,
    pub random: usize,
}

impl CoreAllocation {
    pub fn for_config(config: &AttentionConfig) -> Self {
        Self {
            window: config.window_len(),
            global: config.global_tokens.len(),
            random: config.random_per_row,
        }
    }

    pub fn total(&self) -> usize {
        self.window + self.global + self.random
    }
}

/// `2w` window cores, then one pinned core per global token, then `r`
/// random cores. All start invalid.
pub fn init_cores(config: &AttentionConfig) -> Vec<AttentionCoreState> {
    let alloc = CoreAllocation::for_config(config);
    let h = config.head_dim;
    let roles = std::iter::repeat_n(Pinning::None, alloc.window)
        .chain(std::iter::repeat_n(Pinning::Global, alloc.global))
        .chain(std::iter::repeat_n(Pinning::Random, alloc.random));
    roles
        .enumerate()
        .map(|(id, role)| AttentionCoreState::new(id, h, role))
        .collect()
}

/// Fill the global cores once, before the first row. Returns rows fetched
/// (each one K row plus one V row).
pub fn preload_globals(cores: &mut [AttentionCoreState], k: &DenseMatrix, v: &DenseMatrix, config: &AttentionConfig) -> u64 {
    let base = config.window_len();
    for (offset, &g) in config.global_tokens.iter().enumerate() {
        cores[base + offset].fill(g, k, v);
    }
    config.global_tokens.len() as u64
}

/// What one LOAD step read from off-chip memory.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub q_fetches: u64,
    /// Window K/V pairs fetched (warm-up fills included on row 0).
    pub window_fetches: u64,
    pub random_fetches: u64,
    /// Window core refreshed for this row, and the row it displaced.
    pub refreshed_core: Option<usize>,
    pub evicted_row: Option<usize>,
    /// Window core cleared because the entering row is past the end.
    pub invalidated_core: Option<usize>,
}

impl LoadReport {
    pub fn rows_fetched(&self) -> u64 {
        self.q_fetches + 2 * (self.window_fetches + self.random_fetches)
    }
}

/// Refresh the cores for query row `i`: window slot `i mod 2w` takes row
/// `i + w - 1` (or is invalidated past the end), random cores take this
/// row's random tokens, global cores are untouched.
pub fn load_stage(
    i: usize,
    cores: &mut [AttentionCoreState],
    k: &DenseMatrix,
    v: &DenseMatrix,
    config: &AttentionConfig,
) -> Result<LoadReport> {
    let (n, w) = (config.seq_len, config.half_window);
    if i >= n {
        return Err(Error::invalid(format!("row {i} out of range for seq_len {n}")));
    }
    let alloc = CoreAllocation::for_config(config);
    if cores.len() != alloc.total() {
        return Err(Error::invalid(format!("{} cores for an allocation of {}", cores.len(), alloc.total())));
    }
    let ring = alloc.window;
    let mut report = LoadReport {
        q_fetches: 1,
        ..LoadReport::default()
    };

    if i == 0 {
        for j in 0..(w - 1).min(n) {
            cores[(j + w + 1) % ring].fill(j, k, v);
            report.window_fetches += 1;
        }
    }
    let slot = i % ring;
    let entering = i + w - 1;
    if entering < n {
        report.evicted_row = cores[slot].fill(entering, k, v);
        report.refreshed_core = Some(slot);
        report.window_fetches += 1;
    } else {
        cores[slot].source_row = None;
        report.invalidated_core = Some(slot);
    }

    let drawn = row_random_indices(config, i)?;
    let base = alloc.window + alloc.global;
    for (offset, &j) in drawn.iter().enumerate() {
        cores[base + offset].fill(j, k, v);
    }
    report.random_fetches = drawn.len() as u64;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patterns::window_range;
    use crate::rng::qkv;

    fn window_sources(cores: &[AttentionCoreState]) -> Vec<usize> {
        let mut v: Vec<usize> = cores
            .iter()
            .filter(|c| c.pinned == Pinning::None)
            .filter_map(|c| c.source_row)
            .collect();
        v.sort();
        v
    }

    #[test]
    fn allocations() {
        let longformer = AttentionConfig::window(4096, 64, 256);
        let cores = init_cores(&longformer);
        assert_eq!(cores.len(), 512);
        assert!(cores.iter().all(|c| c.pinned == Pinning::None && !c.valid()));

        let bigbird = AttentionConfig::window(4096, 64, 96).with_globals(0..128).with_random(192, 3);
        let alloc = CoreAllocation::for_config(&bigbird);
        assert_eq!((alloc.window, alloc.global, alloc.random), (192, 128, 192));
        let cores = init_cores(&bigbird);
        assert_eq!(cores.len(), 512);
        assert_eq!(cores.iter().filter(|c| c.pinned == Pinning::Global).count(), 128);

        assert_eq!(init_cores(&AttentionConfig::window(4, 2, 1)).len(), 2);
    }

    #[test]
    fn steady_state_and_boundaries() {
        let (n, w) = (20, 3);
        let cfg = AttentionConfig::window(n, 2, w).with_random(2, 9);
        let (_, k, v) = qkv(n, 2, 1, 1.0);
        let mut cores = init_cores(&cfg);
        let mut window_total = 0;
        for i in 0..n {
            let r = load_stage(i, &mut cores, &k, &v, &cfg).unwrap();
            window_total += r.window_fetches;
            assert_eq!(r.random_fetches, 2);
            assert_eq!(window_sources(&cores), window_range(i, n, w).collect::<Vec<_>>());
            if i == 0 {
                assert_eq!(r.window_fetches, w as u64);
            } else if i + w - 1 < n {
                assert_eq!(r.window_fetches, 1);
                assert_eq!(r.refreshed_core, Some(i % (2 * w)));
            } else {
                assert_eq!(r.window_fetches, 0);
                assert_eq!(r.invalidated_core, Some(i % (2 * w)));
            }
        }
        assert_eq!(window_total, n as u64);
        assert!(load_stage(n, &mut cores, &k, &v, &cfg).is_err());
    }

    #[test]
    fn coherent_pairs() {
        let cfg = AttentionConfig::window(16, 3, 2).with_globals([7]).with_random(1, 4);
        let (_, k, v) = qkv(16, 3, 5, 1.0);
        let mut cores = init_cores(&cfg);
        preload_globals(&mut cores, &k, &v, &cfg);
        for i in 0..16 {
            load_stage(i, &mut cores, &k, &v, &cfg).unwrap();
            for c in cores.iter().filter(|c| c.valid()) {
                let src = c.source_row.unwrap();
                assert_eq!(c.k_buf, k.row(src));
                assert_eq!(c.v_buf, v.row(src));
            }
        }
        assert_eq!(cores[4].source_row, Some(7));
    }
}
