use std::path::{Path, PathBuf};

use clap::{Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::cost::{default_grid, EnergySpec, ModelDims};
use crate::error::{Error, Result};
use crate::numerics::{AttentionConfig, NumericMode, ScalarPrecision};
use crate::pipeline::{timing_for_config, PipelineTiming, Precision};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Subcommand)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Check streaming, sliding-chunks and masked-dense attention against each other.
    Verify,
    /// Run the cycle-level pipeline model and co-simulate its output.
    Simulate,
    /// Sweep the analytical cost models over a grid of sequence lengths.
    Analyze,
    /// Emit the attend sets of the configured pattern.
    Patterns,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// Per-stage latency overrides applied on top of the derived timing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingOverrides {
    pub load: Option<u64>,
    pub random_load: Option<u64>,
    pub qk: Option<u64>,
    pub sv: Option<u64>,
    pub zred1: Option<u64>,
    pub zred2: Option<u64>,
    pub rowsum1: Option<u64>,
    pub rowsum2: Option<u64>,
    pub div_out: Option<u64>,
}

impl TimingOverrides {
    pub fn apply(&self, mut t: PipelineTiming) -> PipelineTiming {
        let pairs = [
            (self.load, &mut t.load),
            (self.random_load, &mut t.random_load),
            (self.qk, &mut t.qk),
            (self.sv, &mut t.sv),
            (self.zred1, &mut t.zred1),
            (self.zred2, &mut t.zred2),
            (self.rowsum1, &mut t.rowsum1),
            (self.rowsum2, &mut t.rowsum2),
            (self.div_out, &mut t.div_out),
        ];
        for (over, slot) in pairs {
            if let Some(v) = over {
                *slot = v;
            }
        }
        t
    }
}

/// Everything a command needs. Read from a JSON file (every key optional),
/// then overridden by command-line flags.
///
/// `seed` drives the synthetic Q/K/V matrices (uniform in
/// `[-input_scale, input_scale]`); the random-token pattern uses
/// `random_seed` when given and `seed` otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub seq_len: usize,
    pub head_dim: usize,
    pub half_window: usize,
    pub global_tokens: Vec<usize>,
    pub random_per_row: usize,
    pub random_seed: Option<u64>,
    pub scale_scores: bool,
    pub mode: NumericMode,
    pub scalar_precision: ScalarPrecision,
    pub seed: u64,
    pub input_scale: f64,
    /// Seeds `seed, seed + 1, ...` checked by `verify`.
    pub cases: usize,
    pub precision: Precision,
    pub timing: TimingOverrides,
    pub energy: Vec<EnergySpec>,
    pub model: ModelDims,
    pub grid: Vec<usize>,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            seq_len: 256,
            head_dim: 64,
            half_window: 32,
            global_tokens: Vec::new(),
            random_per_row: 0,
            random_seed: None,
            scale_scores: false,
            mode: NumericMode::Stabilized,
            scalar_precision: ScalarPrecision::Double,
            seed: 7,
            input_scale: 1.0,
            cases: 3,
            precision: Precision::Fp16,
            timing: TimingOverrides::default(),
            energy: Vec::new(),
            model: ModelDims::default(),
            grid: default_grid(),
            out: None,
            format: OutputFormat::Csv,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("bad run config: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn attention(&self) -> AttentionConfig {
        self.attention_with_seed(self.seed)
    }

    /// The attention config for data seed `seed` (pattern seed fixed unless
    /// it follows the data seed).
    pub fn attention_with_seed(&self, seed: u64) -> AttentionConfig {
        AttentionConfig {
            seq_len: self.seq_len,
            head_dim: self.head_dim,
            half_window: self.half_window,
            global_tokens: self.global_tokens.clone(),
            random_per_row: self.random_per_row,
            random_seed: self.random_seed.unwrap_or(seed),
            scale_scores: self.scale_scores,
            mode: self.mode,
            precision: self.scalar_precision,
        }
    }

    pub fn timing(&self) -> PipelineTiming {
        self.timing.apply(timing_for_config(self.precision, &self.attention()))
    }

    /// Everything is checked here, before any command runs.
    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string());
        self.attention().validate().map_err(cfg)?;
        self.timing().validate().map_err(cfg)?;
        self.model.validate().map_err(cfg)?;
        for spec in &self.energy {
            spec.validate().map_err(cfg)?;
        }
        if !(self.input_scale.is_finite() && self.input_scale > 0.0) {
            return Err(Error::Config("input_scale must be positive".into()));
        }
        if self.cases == 0 {
            return Err(Error::Config("cases must be at least 1".into()));
        }
        if self.grid.is_empty() || self.grid.contains(&0) {
            return Err(Error::Config("grid needs at least one positive length".into()));
        }
        Ok(())
    }
}

/// Parse `"0,1,5-9"` into `[0, 1, 5, 6, 7, 8, 9]`. Ranges are inclusive.
pub fn parse_index_list(text: &str) -> std::result::Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let num = |s: &str| s.trim().parse::<usize>().map_err(|e| format!("'{s}': {e}"));
        match item.split_once('-') {
            Some((a, b)) => {
                let (a, b) = (num(a)?, num(b)?);
                if b < a {
                    return Err(format!("empty range '{item}'"));
                }
                out.extend(a..=b);
            }
            None => out.push(num(item)?),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(c.attention().random_seed, 7);
    }

    #[test]
    fn partial_json_and_unknown_keys() {
        let c = RunConfig::from_json(r#"{"seq_len": 64, "mode": "raw", "timing": {"load": 195}}"#).unwrap();
        assert_eq!(c.seq_len, 64);
        assert_eq!(c.mode, NumericMode::Raw);
        assert_eq!(c.timing().load, 195);
        assert!(RunConfig::from_json(r#"{"seq_length": 64}"#).is_err());
        assert!(RunConfig::from_json(r#"{"timing": {"lod": 1}}"#).is_err());
    }

    #[test]
    fn index_lists() {
        assert_eq!(parse_index_list("0,3-5, 9").unwrap(), vec![0, 3, 4, 5, 9]);
        assert_eq!(parse_index_list("").unwrap(), Vec::<usize>::new());
        assert!(parse_index_list("4-2").is_err());
        assert!(parse_index_list("x").is_err());
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let c = RunConfig {
            half_window: 200,
            ..RunConfig::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }
}
