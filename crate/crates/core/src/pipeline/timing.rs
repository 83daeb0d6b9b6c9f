use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::AttentionConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    Fp16,
    Fp32,
}

impl Precision {
    /// Initiation interval of the pipelined MAC.
    pub fn mac_ii(self) -> u64 {
        match self {
            Precision::Fp16 => 3,
            Precision::Fp32 => 4,
        }
    }

    /// Fixed QK overhead, fitted at H = 64 (201 cycles FP16, 264 cycles FP32).
    fn qk_overhead(self) -> u64 {
        match self {
            Precision::Fp16 => 9,
            Precision::Fp32 => 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Load,
    Qk,
    Sv,
    Zred1,
    Rowsum1,
    Zred2,
    Rowsum2,
    DivOut,
    /// Random-core prefetch lane, off the main chain.
    RandomLoad,
}

impl Stage {
    pub const CHAIN: [Stage; 8] = [
        Stage::Load,
        Stage::Qk,
        Stage::Sv,
        Stage::Zred1,
        Stage::Rowsum1,
        Stage::Zred2,
        Stage::Rowsum2,
        Stage::DivOut,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Load => "load",
            Stage::Qk => "qk",
            Stage::Sv => "sv",
            Stage::Zred1 => "zred1",
            Stage::Rowsum1 => "rowsum1",
            Stage::Zred2 => "zred2",
            Stage::Rowsum2 => "rowsum2",
            Stage::DivOut => "div_out",
            Stage::RandomLoad => "random_load",
        }
    }

    /// Pipeline step index; parallel pairs share one step.
    pub fn step(self) -> Option<usize> {
        match self {
            Stage::Load => Some(0),
            Stage::Qk => Some(1),
            Stage::Sv => Some(2),
            Stage::Zred1 | Stage::Rowsum1 => Some(3),
            Stage::Zred2 | Stage::Rowsum2 => Some(4),
            Stage::DivOut => Some(5),
            Stage::RandomLoad => None,
        }
    }
}

/// Per-stage latencies in cycles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineTiming {
    pub load: u64,
    /// Random-core refresh lane; `0` when there are no random cores.
    #[serde(default)]
    pub random_load: u64,
    pub qk: u64,
    pub sv: u64,
    pub zred1: u64,
    pub zred2: u64,
    pub rowsum1: u64,
    pub rowsum2: u64,
    pub div_out: u64,
    pub mac_ii: u64,
    pub precision: Precision,
}

impl PipelineTiming {
    /// Synthesis-report timings at FP16, H = 64, 2w = 512.
    pub const REFERENCE_FP16: PipelineTiming = PipelineTiming {
        load: 66,
        random_load: 0,
        qk: 201,
        sv: 197,
        zred1: 195,
        zred2: 66,
        rowsum1: 195,
        rowsum2: 27,
        div_out: 179,
        mac_ii: 3,
        precision: Precision::Fp16,
    };

    pub fn latency(&self, stage: Stage) -> u64 {
        match stage {
            Stage::Load => self.load,
            Stage::Qk => self.qk,
            Stage::Sv => self.sv,
            Stage::Zred1 => self.zred1,
            Stage::Rowsum1 => self.rowsum1,
            Stage::Zred2 => self.zred2,
            Stage::Rowsum2 => self.rowsum2,
            Stage::DivOut => self.div_out,
            Stage::RandomLoad => self.random_load,
        }
    }

    /// Occupancy of each of the six steps (pairs count once, at their max).
    pub fn step_latencies(&self) -> [u64; 6] {
        [
            self.load,
            self.qk,
            self.sv,
            self.zred1.max(self.rowsum1),
            self.zred2.max(self.rowsum2),
            self.div_out,
        ]
    }

    /// Cycles between successive rows entering the pipeline.
    pub fn initiation_interval(&self) -> u64 {
        self.step_latencies().into_iter().max().unwrap_or(0).max(self.random_load)
    }

    /// Latency of one row through the whole chain.
    pub fn fill_cycles(&self) -> u64 {
        self.step_latencies().iter().sum()
    }

    /// `fill + (N - 1) * II`.
    pub fn closed_form_total_cycles(&self, rows: usize) -> u64 {
        match rows {
            0 => 0,
            n => self.fill_cycles() + (n as u64 - 1) * self.initiation_interval(),
        }
    }

    pub fn with_load(mut self, load: u64) -> Self {
        self.load = load;
        self
    }

    pub fn with_random_load(mut self, random_load: u64) -> Self {
        self.random_load = random_load;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(stage) = Stage::CHAIN.into_iter().find(|&s| self.latency(s) == 0) {
            return Err(Error::Config(format!("stage {} has zero latency", stage.name())));
        }
        Ok(())
    }
}

/// Stage latencies for a shape.
///
/// Linear in `H` with constant overheads fitted so that `(Fp16, 64, 256)`
/// reproduces [`PipelineTiming::REFERENCE_FP16`] exactly; the FP32 MAC runs
/// at II = 4 with its QK overhead fitted to a 264-cycle interval. The
/// second reduction level scales with the number of `H`-wide core groups.
pub fn default_timing(precision: Precision, head_dim: usize, half_window: usize) -> PipelineTiming {
    let h = head_dim.max(1) as u64;
    let groups = (2 * half_window.max(1) as u64).div_ceil(h);
    let ii = precision.mac_ii();
    PipelineTiming {
        load: h + 2,
        random_load: 0,
        qk: ii * h + precision.qk_overhead(),
        sv: ii * h + 5,
        zred1: ii * h + 3,
        zred2: ii * groups + 42,
        rowsum1: ii * h + 3,
        rowsum2: ii * groups + 3,
        div_out: 2 * h + 51,
        mac_ii: ii,
        precision,
    }
}

/// Latency of refreshing the random cores for one row (195 cycles at H = 64).
pub fn random_load_latency(head_dim: usize) -> u64 {
    3 * head_dim.max(1) as u64 + 3
}

/// [`default_timing`] plus the random lane when the config has random tokens.
pub fn timing_for_config(precision: Precision, config: &AttentionConfig) -> PipelineTiming {
    let t = default_timing(precision, config.head_dim, config.half_window);
    if config.random_per_row > 0 {
        t.with_random_load(random_load_latency(config.head_dim))
    } else {
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_shape_reproduces_table() {
        let t = default_timing(Precision::Fp16, 64, 256);
        assert_eq!(t, PipelineTiming::REFERENCE_FP16);
        let lat = [t.load, t.qk, t.sv, t.zred1, t.zred2, t.rowsum1, t.rowsum2, t.div_out];
        assert_eq!(lat, [66, 201, 197, 195, 66, 195, 27, 179]);
        assert_eq!(t.initiation_interval(), 201);
        assert_eq!(t.fill_cycles(), 904);
    }

    #[test]
    fn fp32_interval() {
        let t = default_timing(Precision::Fp32, 64, 256);
        assert_eq!(t.initiation_interval(), 264);
        assert_eq!(t.qk, 264);
    }

    #[test]
    fn smaller_head_dim() {
        let t = default_timing(Precision::Fp16, 32, 256);
        assert_eq!(t.qk, 3 * 32 + (201 - 3 * 64));
        assert_eq!(t.qk, 105);
        let mut prev = 0;
        for h in [8, 16, 32, 64, 128] {
            let qk = default_timing(Precision::Fp16, h, 256).qk;
            assert!(qk > prev);
            prev = qk;
        }
    }

    #[test]
    fn random_lane_reference() {
        assert_eq!(random_load_latency(64), 195);
        let cfg = AttentionConfig::window(4096, 64, 96).with_globals(0..128).with_random(192, 1);
        let t = timing_for_config(Precision::Fp16, &cfg);
        assert_eq!(t.random_load, 195);
        assert_eq!(t.initiation_interval(), 201);
    }

    #[test]
    fn closed_form() {
        let t = PipelineTiming::REFERENCE_FP16;
        assert_eq!(t.closed_form_total_cycles(1), 904);
        assert_eq!(t.closed_form_total_cycles(4096), 904 + 4095 * 201);
        assert_eq!(t.closed_form_total_cycles(4096), 823_999);
        assert_eq!(t.closed_form_total_cycles(0), 0);
    }

    #[test]
    fn zero_latency_rejected() {
        assert!(PipelineTiming::REFERENCE_FP16.with_load(0).validate().is_err());
        assert!(PipelineTiming::REFERENCE_FP16.validate().is_ok());
    }
}
