use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How exponentials in the fused kernel are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NumericMode {
    /// `exp(S)` taken directly; the denominator is the raw sum of exponentials.
    Raw,
    /// Running row maximum subtracted before exponentiation, with the
    /// numerator accumulator and row sum rescaled whenever the maximum grows.
    #[default]
    #[serde(alias = "stable")]
    Stabilized,
}

impl NumericMode {
    pub fn name(self) -> &'static str {
        match self {
            NumericMode::Raw => "Raw",
            NumericMode::Stabilized => "Stabilized",
        }
    }
}

/// Arithmetic width used by the fused streaming kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarPrecision {
    #[default]
    Double,
    Single,
}

/// Shape and sparsity pattern of one attention head.
///
/// The window of row `i` is `{i - w, ..., i + w - 1}` clipped to `[0, N)`:
/// exactly `2w` candidate tokens including the row itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionConfig {
    pub seq_len: usize,
    pub head_dim: usize,
    pub half_window: usize,
    #[serde(default)]
    pub global_tokens: Vec<usize>,
    #[serde(default)]
    pub random_per_row: usize,
    #[serde(default)]
    pub random_seed: u64,
    #[serde(default)]
    pub scale_scores: bool,
    #[serde(default)]
    pub mode: NumericMode,
    #[serde(default)]
    pub precision: ScalarPrecision,
}

impl AttentionConfig {
    /// Window-only config with default numerics (stabilized, unscaled, f64).
    pub fn window(seq_len: usize, head_dim: usize, half_window: usize) -> Self {
        Self {
            seq_len,
            head_dim,
            half_window,
            global_tokens: Vec::new(),
            random_per_row: 0,
            random_seed: 0,
            scale_scores: false,
            mode: NumericMode::Stabilized,
            precision: ScalarPrecision::Double,
        }
    }

    pub fn with_globals(mut self, globals: impl IntoIterator<Item = usize>) -> Self {
        self.global_tokens = globals.into_iter().collect();
        self
    }

    pub fn with_random(mut self, per_row: usize, seed: u64) -> Self {
        self.random_per_row = per_row;
        self.random_seed = seed;
        self
    }

    pub fn with_mode(mut self, mode: NumericMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_scale_scores(mut self, on: bool) -> Self {
        self.scale_scores = on;
        self
    }

    pub fn with_precision(mut self, precision: ScalarPrecision) -> Self {
        self.precision = precision;
        self
    }

    /// `2w`, the number of window attention cores / FIFO slots.
    #[inline]
    pub fn window_len(&self) -> usize {
        2 * self.half_window
    }

    /// Multiplier applied to `q . k`.
    pub fn score_scale(&self) -> f64 {
        score_scale(self.head_dim, self.scale_scores)
    }

    pub fn is_window_only(&self) -> bool {
        self.global_tokens.is_empty() && self.random_per_row == 0
    }

    /// Is `j` inside the (clipped) window of row `i`?
    #[inline]
    pub fn in_window(&self, i: usize, j: usize) -> bool {
        j + self.half_window >= i && j < i + self.half_window && j < self.seq_len
    }

    pub fn validate(&self) -> Result<()> {
        self.check(false)
    }

    /// [`validate`](Self::validate), except that a window-only pattern may
    /// be wider than the sequence. Hardware sized for `2w` window cores can
    /// still be fed a short input; every window is then clipped to `[0, N)`
    /// and the surplus cores stay invalid.
    pub fn validate_allow_short(&self) -> Result<()> {
        self.check(self.is_window_only())
    }

    fn check(&self, allow_short: bool) -> Result<()> {
        let n = self.seq_len;
        if n == 0 {
            return Err(Error::invalid("seq_len must be positive"));
        }
        if self.head_dim == 0 {
            return Err(Error::invalid("head_dim must be positive"));
        }
        if self.half_window == 0 {
            return Err(Error::invalid("half_window must be at least 1"));
        }
        if self.window_len() > n && !allow_short {
            return Err(Error::invalid(format!(
                "window 2w = {} exceeds seq_len {n}",
                self.window_len()
            )));
        }
        let mut seen = self.global_tokens.clone();
        seen.sort_unstable();
        if let Some(&g) = seen.iter().find(|&&g| g >= n) {
            return Err(Error::invalid(format!("global token {g} out of range for seq_len {n}")));
        }
        if seen.windows(2).any(|p| p[0] == p[1]) {
            return Err(Error::invalid("duplicate global token index"));
        }
        let demand = self.random_per_row + self.global_tokens.len() + self.window_len();
        if demand > n && !allow_short {
            return Err(Error::invalid(format!(
                "r + |global| + 2w = {demand} exceeds seq_len {n}"
            )));
        }
        Ok(())
    }
}

pub(crate) fn score_scale(head_dim: usize, scale_scores: bool) -> f64 {
    if scale_scores {
        1.0 / (head_dim as f64).sqrt()
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_membership() {
        let c = AttentionConfig::window(100, 4, 2);
        let members: Vec<_> = (0..100).filter(|&j| c.in_window(10, j)).collect();
        assert_eq!(members, vec![8, 9, 10, 11]);
        let members: Vec<_> = (0..100).filter(|&j| c.in_window(99, j)).collect();
        assert_eq!(members, vec![97, 98, 99]);
    }

    #[test]
    fn validation() {
        assert!(AttentionConfig::window(8, 4, 4).validate().is_ok());
        assert!(AttentionConfig::window(8, 4, 5).validate().is_err());
        assert!(AttentionConfig::window(8, 4, 0).validate().is_err());
        assert!(AttentionConfig::window(8, 0, 1).validate().is_err());
        assert!(AttentionConfig::window(8, 4, 1).with_globals([8]).validate().is_err());
        assert!(AttentionConfig::window(8, 4, 1).with_globals([3, 3]).validate().is_err());
        assert!(AttentionConfig::window(8, 4, 2).with_globals([0]).with_random(3, 1).validate().is_ok());
        assert!(AttentionConfig::window(8, 4, 2).with_globals([0]).with_random(4, 1).validate().is_err());
    }

    #[test]
    fn mode_aliases() {
        let m: NumericMode = serde_json::from_str("\"raw\"").unwrap();
        assert_eq!(m, NumericMode::Raw);
        let m: NumericMode = serde_json::from_str("\"stable\"").unwrap();
        assert_eq!(m, NumericMode::Stabilized);
    }
}
