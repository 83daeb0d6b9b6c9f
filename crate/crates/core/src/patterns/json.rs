//! JSON form of a pattern:
//!
//! ```json
//! { "seq_len": 6, "half_window": 1, "global_tokens": [0],
//!   "random_per_row": 0, "random_seed": 0,
//!   "rows": [ { "row": 0, "cols": [0], "provenance": ["window"] }, ... ] }
//! ```

use serde::{Deserialize, Serialize};

use super::AttendSet;
use crate::error::{Error, Result};
use crate::numerics::AttentionConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttendSetsDoc {
    pub seq_len: usize,
    pub half_window: usize,
    pub global_tokens: Vec<usize>,
    pub random_per_row: usize,
    pub random_seed: u64,
    pub rows: Vec<AttendSet>,
}

pub fn attend_sets_to_json(config: &AttentionConfig, sets: &[AttendSet]) -> Result<String> {
    let doc = AttendSetsDoc {
        seq_len: config.seq_len,
        half_window: config.half_window,
        global_tokens: config.global_tokens.clone(),
        random_per_row: config.random_per_row,
        random_seed: config.random_seed,
        rows: sets.to_vec(),
    };
    let mut out = serde_json::to_string_pretty(&doc)?;
    out.push('\n');
    Ok(out)
}

/// Parse and check every row against the set invariants.
pub fn attend_sets_from_json(text: &str) -> Result<AttendSetsDoc> {
    let doc: AttendSetsDoc = serde_json::from_str(text)?;
    if doc.rows.len() != doc.seq_len {
        return Err(Error::invalid(format!("{} rows for seq_len {}", doc.rows.len(), doc.seq_len)));
    }
    for (i, set) in doc.rows.iter().enumerate() {
        if set.row != i {
            return Err(Error::invalid(format!("row {i} labelled {}", set.row)));
        }
        set.validate(doc.seq_len)?;
    }
    Ok(doc)
}
