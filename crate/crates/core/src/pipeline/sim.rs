use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::cores::{init_cores, load_stage, preload_globals, AttentionCoreState, CoreAllocation, Pinning};
use super::trace::{RowRecord, SimSummary, SimTrace, StageEvent};
use super::{PipelineTiming, Stage};
use crate::error::{Error, Result};
use crate::numerics::{dot, AttentionConfig, DenseMatrix, NumericMode, TrafficCounters};
use crate::patterns::window_range;

const STEPS: usize = 6;

/// A query row travelling down the pipeline with its partial results.
#[derive(Debug)]
struct Token {
    row: usize,
    /// Score per core, `None` for cores that do not take part in this row.
    scores: Vec<Option<f64>>,
    /// Per-core `S'` and `Z` slices after SV.
    s_prime: Vec<f64>,
    z_slices: Vec<f64>,
    /// Per-group partial sums after ZRED1 / ROWSUM1.
    z_groups: Vec<f64>,
    sum_groups: Vec<f64>,
    z: Vec<f64>,
    row_sum: f64,
}

#[derive(Debug, Default)]
struct StepSlot {
    occupant: Option<Token>,
    busy_until: u64,
}

/// Event-driven simulator over one attention head.
pub struct PipelineSimulator<'a> {
    config: &'a AttentionConfig,
    timing: PipelineTiming,
    q: &'a DenseMatrix,
    k: &'a DenseMatrix,
    v: &'a DenseMatrix,
    cores: Vec<AttentionCoreState>,
    steps: [StepSlot; STEPS],
    events: BinaryHeap<Reverse<u64>>,
    next_row: usize,
    /// Cycle at which the random cores hold each row's tokens (shadow buffers).
    random_ready: Vec<u64>,
    output: Vec<f64>,
    retired: usize,
    trace_events: Vec<StageEvent>,
    rows: Vec<RowRecord>,
    traffic: TrafficCounters,
    now: u64,
}

impl<'a> PipelineSimulator<'a> {
    pub fn new(
        q: &'a DenseMatrix,
        k: &'a DenseMatrix,
        v: &'a DenseMatrix,
        config: &'a AttentionConfig,
        timing: PipelineTiming,
    ) -> Result<Self> {
        config.validate_allow_short()?;
        timing.validate()?;
        let (n, h) = (config.seq_len, config.head_dim);
        for (name, m) in [("Q", q), ("K", k), ("V", v)] {
            if m.rows() != n || m.cols() != h {
                return Err(Error::DimensionMismatch(format!(
                    "{name} is {}x{}, config is {n}x{h}",
                    m.rows(),
                    m.cols()
                )));
            }
        }
        let mut random_ready = vec![u64::MAX; n];
        random_ready[0] = 0;
        Ok(Self {
            config,
            timing,
            q,
            k,
            v,
            cores: init_cores(config),
            steps: Default::default(),
            events: BinaryHeap::new(),
            next_row: 0,
            random_ready,
            output: vec![0.0; n * h],
            retired: 0,
            trace_events: Vec::with_capacity(n * 9),
            rows: Vec::with_capacity(n),
            traffic: TrafficCounters::default(),
            now: 0,
        })
    }

    pub fn cores(&self) -> &[AttentionCoreState] {
        &self.cores
    }

    fn has_random_lane(&self) -> bool {
        self.timing.random_load > 0
    }

    pub fn run(mut self) -> Result<(DenseMatrix, SimTrace)> {
        let n = self.config.seq_len;
        let globals = preload_globals(&mut self.cores, self.k, self.v, self.config);
        self.traffic.global_k_rows = globals;
        self.traffic.global_v_rows = globals;

        self.advance()?;
        while self.retired < n {
            let Reverse(t) = self
                .events
                .pop()
                .ok_or_else(|| Error::invalid("pipeline deadlocked with rows in flight"))?;
            self.now = t;
            self.advance()?;
        }

        let total_cycles = self.now;
        let t = self.timing;
        let summary = SimSummary {
            seq_len: n,
            head_dim: self.config.head_dim,
            half_window: self.config.half_window,
            precision: t.precision,
            timing: t,
            cores: CoreAllocation::for_config(self.config),
            initiation_interval: t.initiation_interval(),
            fill_cycles: t.fill_cycles(),
            total_cycles,
            closed_form_total_cycles: t.closed_form_total_cycles(n),
            traffic: self.traffic,
        };
        let mut events = self.trace_events;
        events.sort_by_key(|e| (e.row, e.stage));
        let z = DenseMatrix::from_output(n, self.config.head_dim, self.output, self.config.mode.name())?;
        Ok((
            z,
            SimTrace {
                rows: self.rows,
                events,
                summary,
            },
        ))
    }

    /// Move every row that can move at `self.now`, downstream first, until
    /// nothing changes.
    fn advance(&mut self) -> Result<()> {
        loop {
            let mut moved = false;
            for s in (0..STEPS).rev() {
                let done = self.steps[s].occupant.is_some() && self.steps[s].busy_until <= self.now;
                if !done {
                    continue;
                }
                if s == STEPS - 1 {
                    let token = self.steps[s].occupant.take().expect("checked");
                    self.retire(token);
                    moved = true;
                } else if self.steps[s + 1].occupant.is_none() && self.may_enter(s + 1) {
                    let token = self.steps[s].occupant.take().expect("checked");
                    self.enter(s + 1, token)?;
                    moved = true;
                }
            }
            if self.steps[0].occupant.is_none() && self.next_row < self.config.seq_len {
                let token = Token {
                    row: self.next_row,
                    scores: Vec::new(),
                    s_prime: Vec::new(),
                    z_slices: Vec::new(),
                    z_groups: Vec::new(),
                    sum_groups: Vec::new(),
                    z: Vec::new(),
                    row_sum: 0.0,
                };
                self.next_row += 1;
                self.enter(0, token)?;
                moved = true;
            }
            if !moved {
                return Ok(());
            }
        }
    }

    fn may_enter(&self, step: usize) -> bool {
        if step != 1 {
            return true;
        }
        let row = self.steps[0].occupant.as_ref().map(|t| t.row).expect("LOAD occupied");
        !self.has_random_lane() || self.random_ready[row] <= self.now
    }

    fn record(&mut self, row: usize, stage: Stage, start: u64) -> u64 {
        let end = start + self.timing.latency(stage);
        self.trace_events.push(StageEvent {
            row,
            stage,
            start_cycle: start,
            end_cycle: end,
        });
        end
    }

    fn enter(&mut self, step: usize, mut token: Token) -> Result<()> {
        let now = self.now;
        let row = token.row;
        let busy_until = match step {
            0 => self.record(row, Stage::Load, now),
            1 => {
                self.commit_load(row)?;
                self.compute_scores(&mut token);
                if self.has_random_lane() && row + 1 < self.config.seq_len {
                    let end = self.record(row + 1, Stage::RandomLoad, now);
                    self.random_ready[row + 1] = end;
                    self.events.push(Reverse(end));
                }
                self.record(row, Stage::Qk, now)
            }
            2 => {
                self.compute_sv(&mut token)?;
                self.record(row, Stage::Sv, now)
            }
            3 => {
                self.reduce_groups(&mut token);
                self.record(row, Stage::Zred1, now).max(self.record(row, Stage::Rowsum1, now))
            }
            4 => {
                token.z = sum_groups(&token.z_groups, self.config.head_dim);
                token.row_sum = token.sum_groups.iter().sum();
                self.record(row, Stage::Zred2, now).max(self.record(row, Stage::Rowsum2, now))
            }
            5 => {
                self.divide(&mut token)?;
                self.record(row, Stage::DivOut, now)
            }
            _ => unreachable!("six pipeline steps"),
        };
        self.steps[step] = StepSlot {
            occupant: Some(token),
            busy_until,
        };
        self.events.push(Reverse(busy_until));
        Ok(())
    }

    fn commit_load(&mut self, row: usize) -> Result<()> {
        let report = load_stage(row, &mut self.cores, self.k, self.v, self.config)?;
        self.traffic.q_rows += report.q_fetches;
        self.traffic.window_k_rows += report.window_fetches;
        self.traffic.window_v_rows += report.window_fetches;
        self.traffic.random_k_rows += report.random_fetches;
        self.traffic.random_v_rows += report.random_fetches;
        self.traffic.evictions += u64::from(report.evicted_row.is_some());
        self.traffic.invalidations += u64::from(report.invalidated_core.is_some());

        let mut held: Vec<usize> = self
            .cores
            .iter()
            .filter(|c| c.pinned == Pinning::None)
            .filter_map(|c| c.source_row)
            .collect();
        held.sort_unstable();
        let expected: Vec<usize> = window_range(row, self.config.seq_len, self.config.half_window).collect();
        self.rows.push(RowRecord {
            row,
            refreshed_core: report.refreshed_core,
            evicted_row: report.evicted_row,
            invalidated_core: report.invalidated_core,
            rows_fetched: report.rows_fetched(),
            window_matches: held == expected,
        });
        Ok(())
    }

    /// QK: every participating core forms `S_ij = Q_i . K_j`.
    fn compute_scores(&self, token: &mut Token) {
        let q_row = self.q.row(token.row);
        let scale = self.config.score_scale();
        token.scores = self
            .cores
            .iter()
            .map(|c| {
                let src = c.source_row?;
                if c.pinned == Pinning::Global && self.config.in_window(token.row, src) {
                    return None;
                }
                Some(dot(q_row, &c.k_buf) * scale)
            })
            .collect();
    }

    /// SV: exponentiate and scale the core's own V row.
    fn compute_sv(&mut self, token: &mut Token) -> Result<()> {
        let h = self.config.head_dim;
        let mode = self.config.mode;
        let shift = match mode {
            NumericMode::Raw => 0.0,
            NumericMode::Stabilized => token.scores.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max),
        };
        token.s_prime = vec![0.0; self.cores.len()];
        token.z_slices = vec![0.0; self.cores.len() * h];
        for (idx, core) in self.cores.iter_mut().enumerate() {
            let p = token.scores[idx].map_or(0.0, |s| (s - shift).exp());
            if !p.is_finite() {
                return Err(Error::NumericOverflow {
                    mode: mode.name(),
                    row: Some(token.row),
                    detail: format!("exp overflow in core {idx}"),
                });
            }
            core.s_prime = p;
            for (z, v) in core.z_slice.iter_mut().zip(&core.v_buf) {
                *z = p * v;
            }
            token.s_prime[idx] = p;
            token.z_slices[idx * h..(idx + 1) * h].copy_from_slice(&core.z_slice);
        }
        Ok(())
    }

    /// ZRED1 / ROWSUM1: cores summed in groups of `H`.
    fn reduce_groups(&self, token: &mut Token) {
        let h = self.config.head_dim;
        let group_rows = h.max(1);
        token.z_groups = token
            .z_slices
            .chunks(group_rows * h)
            .flat_map(|group| sum_groups(group, h))
            .collect();
        token.sum_groups = token.s_prime.chunks(group_rows).map(|g| g.iter().sum()).collect();
    }

    fn divide(&mut self, token: &mut Token) -> Result<()> {
        if !(token.row_sum.is_finite() && token.row_sum > 0.0) {
            return Err(Error::NumericOverflow {
                mode: self.config.mode.name(),
                row: Some(token.row),
                detail: "row sum is zero or not finite".into(),
            });
        }
        for z in token.z.iter_mut() {
            *z /= token.row_sum;
        }
        Ok(())
    }

    fn retire(&mut self, token: Token) {
        let h = self.config.head_dim;
        self.output[token.row * h..(token.row + 1) * h].copy_from_slice(&token.z);
        self.retired += 1;
    }
}

/// Element-wise sum of consecutive `h`-vectors.
fn sum_groups(flat: &[f64], h: usize) -> Vec<f64> {
    let mut acc = vec![0.0; h];
    for part in flat.chunks_exact(h) {
        for (a, x) in acc.iter_mut().zip(part) {
            *a += x;
        }
    }
    acc
}

/// Run `Q, K, V` through the pipeline model: functional output plus trace.
pub fn simulate_sequence(
    q: &DenseMatrix,
    k: &DenseMatrix,
    v: &DenseMatrix,
    config: &AttentionConfig,
    timing: PipelineTiming,
) -> Result<(DenseMatrix, SimTrace)> {
    PipelineSimulator::new(q, k, v, config, timing)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{max_relative_error, streaming_window_attention};
    use crate::pipeline::{default_timing, timing_for_config, Precision};
    use crate::rng::qkv;

    #[test]
    fn single_row_is_fill_only() {
        let cfg = AttentionConfig::window(2, 4, 1);
        let (q, k, v) = qkv(2, 4, 1, 1.0);
        let (_, trace) = simulate_sequence(&q, &k, &v, &cfg, PipelineTiming::REFERENCE_FP16).unwrap();
        assert_eq!(trace.summary.total_cycles, 904 + 201);

    }

    #[test]
    fn short_sequence_on_wide_pipeline() {
        let cfg = AttentionConfig::window(1, 64, 256);
        let (q, k, v) = qkv(1, 64, 4, 1.0);
        let (z, trace) = simulate_sequence(&q, &k, &v, &cfg, PipelineTiming::REFERENCE_FP16).unwrap();
        assert_eq!(trace.summary.total_cycles, 904);
        assert_eq!(z.row(0), v.row(0));
        trace.check_invariants().unwrap();
        assert_eq!(trace.summary.traffic.k_rows(), 1);

        let with_globals = AttentionConfig::window(4, 4, 4).with_globals([0]);
        let (q, k, v) = qkv(4, 4, 4, 1.0);
        assert!(simulate_sequence(&q, &k, &v, &with_globals, PipelineTiming::REFERENCE_FP16).is_err());
    }

    #[test]
    fn matches_closed_form_and_invariants() {
        let cfg = AttentionConfig::window(100, 4, 4);
        let (q, k, v) = qkv(100, 4, 2, 1.0);
        let (_, trace) = simulate_sequence(&q, &k, &v, &cfg, PipelineTiming::REFERENCE_FP16).unwrap();
        assert_eq!(trace.summary.total_cycles, 904 + 99 * 201);
        assert_eq!(trace.summary.total_cycles, trace.summary.closed_form_total_cycles);
        trace.check_invariants().unwrap();
        assert_eq!(trace.events.len(), 100 * 8);
    }

    #[test]
    fn cosim_matches_streaming() {
        let cfg = AttentionConfig::window(48, 8, 4).with_globals([0, 20]).with_random(3, 5);
        let (q, k, v) = qkv(48, 8, 6, 1.0);
        let timing = timing_for_config(Precision::Fp16, &cfg);
        let (z, trace) = simulate_sequence(&q, &k, &v, &cfg, timing).unwrap();
        let streamed = streaming_window_attention(&q, &k, &v, &cfg).unwrap();
        assert!(max_relative_error(&z, &streamed.z).unwrap() <= 1e-10);
        assert_eq!(trace.summary.traffic, streamed.traffic);
        trace.check_invariants().unwrap();
    }

    #[test]
    fn random_lane_hidden() {
        let cfg = AttentionConfig::window(64, 4, 2).with_random(2, 1);
        let (q, k, v) = qkv(64, 4, 3, 1.0);
        let base = PipelineTiming::REFERENCE_FP16;
        let (_, plain) = simulate_sequence(&q, &k, &v, &cfg, base).unwrap();
        let (_, lane) = simulate_sequence(&q, &k, &v, &cfg, base.with_random_load(195)).unwrap();
        assert_eq!(plain.summary.total_cycles, lane.summary.total_cycles);
        lane.check_invariants().unwrap();
        let (_, slow) = simulate_sequence(&q, &k, &v, &cfg, base.with_random_load(250)).unwrap();
        assert_eq!(slow.summary.total_cycles, 904 + 63 * 250);
        assert_eq!(slow.summary.total_cycles, slow.summary.closed_form_total_cycles);
    }

    #[test]
    fn raw_overflow_reports_row() {
        let cfg = AttentionConfig::window(8, 4, 2).with_mode(NumericMode::Raw);
        let (q, k, v) = qkv(8, 4, 3, 1.0);
        let q = q.scaled(400.0).unwrap();
        let k = k.scaled(400.0).unwrap();
        let err = simulate_sequence(&q, &k, &v, &cfg, default_timing(Precision::Fp16, 4, 2)).unwrap_err();
        assert!(matches!(err, Error::NumericOverflow { row: Some(_), .. }));
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let cfg = AttentionConfig::window(8, 4, 2);
        let (q, k, v) = qkv(8, 3, 3, 1.0);
        assert!(simulate_sequence(&q, &k, &v, &cfg, PipelineTiming::REFERENCE_FP16).is_err());
    }
}
