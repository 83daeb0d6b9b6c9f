use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{CoreAllocation, PipelineTiming, Precision, Stage};
use crate::error::{Error, Result};
use crate::numerics::TrafficCounters;

/// `[start, end)` occupancy of one stage by one row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageEvent {
    pub row: usize,
    pub stage: Stage,
    pub start_cycle: u64,
    pub end_cycle: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowRecord {
    pub row: usize,
    pub refreshed_core: Option<usize>,
    pub evicted_row: Option<usize>,
    pub invalidated_core: Option<usize>,
    pub rows_fetched: u64,
    /// Valid window cores held exactly the row's window when it entered QK.
    pub window_matches: bool,
}

/// Totals of one run, serialised as the JSON summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub seq_len: usize,
    pub head_dim: usize,
    pub half_window: usize,
    pub precision: Precision,
    pub timing: PipelineTiming,
    pub cores: CoreAllocation,
    pub initiation_interval: u64,
    pub fill_cycles: u64,
    pub total_cycles: u64,
    pub closed_form_total_cycles: u64,
    pub traffic: TrafficCounters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub rows: Vec<RowRecord>,
    /// Sorted by row, then by stage.
    pub events: Vec<StageEvent>,
    pub summary: SimSummary,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    row: usize,
    stage: &'a str,
    start_cycle: u64,
    end_cycle: u64,
}

impl SimTrace {
    /// CSV with header `row,stage,start_cycle,end_cycle`, one line per event.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        for e in &self.events {
            writer.serialize(CsvRow {
                row: e.row,
                stage: e.stage.name(),
                start_cycle: e.start_cycle,
                end_cycle: e.end_cycle,
            })?;
        }
        writer.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn summary_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.summary)?;
        s.push('\n');
        Ok(s)
    }

    /// Chain order per row, exclusive stage occupancy across rows, and the
    /// window-content check at QK entry.
    pub fn check_invariants(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::invalid(format!("trace invariant violated: {msg}")));

        for r in &self.rows {
            if !r.window_matches {
                return fail(format!("row {} saw the wrong window at QK", r.row));
            }
        }

        let mut by_row: Vec<Vec<&StageEvent>> = vec![Vec::new(); self.summary.seq_len];
        for e in &self.events {
            if e.end_cycle <= e.start_cycle {
                return fail(format!("row {} {} has empty interval", e.row, e.stage.name()));
            }
            by_row[e.row].push(e);
        }
        for (row, evs) in by_row.iter().enumerate() {
            for step in 0..5 {
                let done = evs.iter().filter(|e| e.stage.step() == Some(step)).map(|e| e.end_cycle).max();
                let next = evs.iter().filter(|e| e.stage.step() == Some(step + 1)).map(|e| e.start_cycle).min();
                match (done, next) {
                    (Some(d), Some(n)) if n >= d => {}
                    _ => return fail(format!("row {row}: step {step} -> {} out of order", step + 1)),
                }
            }
            let qk = evs.iter().find(|e| e.stage == Stage::Qk).map(|e| e.start_cycle);
            if let (Some(qk), Some(lane)) = (qk, evs.iter().find(|e| e.stage == Stage::RandomLoad)) {
                if lane.end_cycle > qk {
                    return fail(format!("row {row}: random refresh ends after QK entry"));
                }
            }
        }

        for stage in Stage::CHAIN.into_iter().chain([Stage::RandomLoad]) {
            let mut evs: Vec<&StageEvent> = self.events.iter().filter(|e| e.stage == stage).collect();
            evs.sort_by_key(|e| e.start_cycle);
            for pair in evs.windows(2) {
                if pair[1].start_cycle < pair[0].end_cycle {
                    return fail(format!(
                        "rows {} and {} overlap in {}",
                        pair[0].row,
                        pair[1].row,
                        stage.name()
                    ));
                }
            }
        }
        Ok(())
    }
}
