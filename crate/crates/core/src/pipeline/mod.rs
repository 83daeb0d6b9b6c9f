//! Transaction-level, cycle-annotated model of the attention-core pipeline.
//!
//! Six pipeline steps, each holding at most one query row:
//!
//! ```text
//! LOAD -> QK -> SV -> {ZRED1 || ROWSUM1} -> {ZRED2 || ROWSUM2} -> DIV&OUT
//! ```
//!
//! Window cores form a `2w`-entry ring refreshed one core per row (slot
//! `i mod 2w` receives row `i + w - 1`). Global cores are preloaded once.
//! Random cores are refreshed every row by a prefetch lane that fills
//! shadow buffers while the previous row computes.

mod cores;
mod sim;
mod timing;
mod trace;

pub use cores::{init_cores, load_stage, preload_globals, AttentionCoreState, CoreAllocation, LoadReport, Pinning};
pub use sim::{simulate_sequence, PipelineSimulator};
pub use timing::{default_timing, random_load_latency, timing_for_config, PipelineTiming, Precision, Stage};
pub use trace::{RowRecord, SimSummary, SimTrace, StageEvent};
