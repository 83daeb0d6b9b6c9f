use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::config::{OutputFormat, RunConfig};
use crate::cost::{chunk_count_for, energy_report, sweep, CostReport, EnergyRow};
use crate::error::{Error, Result};
use crate::numerics::{
    dense_attention, masked_dense_attention, max_relative_error, sliding_chunks_attention_padded,
    streaming_window_attention, DenseMatrix,
};
use crate::patterns::{attend_sets_to_json, build_attend_sets, chunk_redundancy_ratio, window_attend_set, window_range};
use crate::pipeline::{simulate_sequence, SimSummary};
use crate::rng::qkv;

pub const STREAMING_TOLERANCE: f64 = 1e-10;
pub const CHUNKS_TOLERANCE: f64 = 1e-12;
pub const COSIM_TOLERANCE: f64 = 1e-10;

/// Max relative error of one comparison on one seeded case.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairCheck {
    pub pair: &'static str,
    pub seq_len: usize,
    pub half_window: usize,
    pub seed: u64,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<PairCheck>,
    /// Worst error per pair over the family, in check order.
    pub worst: Vec<(String, f64)>,
    /// Rows whose clipped window is the whole sequence (compared with dense).
    pub full_window_rows: Vec<usize>,
    pub failures: Vec<String>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn render(&self, format: OutputFormat) -> Result<String> {
        match format {
            OutputFormat::Json => json(self),
            OutputFormat::Csv => {
                let mut out = String::from("pair,seq_len,half_window,seed,max_rel_err,tolerance,status\n");
                for c in &self.checks {
                    let status = if c.passed { "pass" } else { "FAIL" };
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{:e},{:e},{status}",
                        c.pair, c.seq_len, c.half_window, c.seed, c.max_rel_err, c.tolerance
                    );
                }
                Ok(out)
            }
        }
    }
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn inputs(config: &RunConfig, seed: u64) -> Result<(DenseMatrix, DenseMatrix, DenseMatrix)> {
    Ok(qkv(config.seq_len, config.head_dim, seed, config.input_scale))
}

/// Streaming vs masked dense vs sliding chunks over seeds `seed..seed+cases`.
///
/// A numeric overflow (raw mode on large inputs) is returned as an error with
/// the offending row; tolerance breaches are listed in `failures`.
pub fn cmd_verify(config: &RunConfig) -> Result<VerifyReport> {
    config.validate()?;
    let (n, w) = (config.seq_len, config.half_window);
    let full_window_rows: Vec<usize> = (0..n).filter(|&i| window_range(i, n, w) == (0..n)).collect();
    let mut checks = Vec::new();

    for seed in config.seed..config.seed + config.cases as u64 {
        let attn = config.attention_with_seed(seed);
        let (q, k, v) = inputs(config, seed)?;
        let sets = build_attend_sets(&attn)?;
        let oracle = masked_dense_attention(&q, &k, &v, &sets, attn.scale_scores)?;
        let streamed = streaming_window_attention(&q, &k, &v, &attn).map_err(|e| annotate(e, n, w, seed))?;
        let mut push = |pair: &'static str, err: f64, tolerance: f64| {
            checks.push(PairCheck {
                pair,
                seq_len: n,
                half_window: w,
                seed,
                max_rel_err: err,
                tolerance,
                passed: err <= tolerance,
            });
        };
        push(
            "streaming_vs_masked",
            max_relative_error(&streamed.z, &oracle)?,
            STREAMING_TOLERANCE,
        );

        // Sliding chunks only express the band, so they get a band-only oracle.
        let band: Vec<_> = (0..n).map(|i| window_attend_set(i, n, w)).collect::<Result<_>>()?;
        let band_oracle = masked_dense_attention(&q, &k, &v, &band, attn.scale_scores)?;
        if !attn.scale_scores {
            let chunked = sliding_chunks_attention_padded(&q, &k, &v, w)?;
            push("chunks_vs_masked", max_relative_error(&chunked.z, &band_oracle)?, CHUNKS_TOLERANCE);
        }

        if !full_window_rows.is_empty() {
            let dense = dense_attention(&q, &k, &v, attn.scale_scores)?;
            let pick = |m: &DenseMatrix| {
                DenseMatrix::from_rows(&full_window_rows.iter().map(|&i| m.row(i)).collect::<Vec<_>>())
            };
            push(
                "streaming_vs_dense_full_rows",
                max_relative_error(&pick(&streamed.z)?, &pick(&dense)?)?,
                STREAMING_TOLERANCE,
            );
        }
    }

    let mut worst: Vec<(String, f64)> = Vec::new();
    for c in &checks {
        match worst.iter_mut().find(|(p, _)| p == c.pair) {
            Some((_, e)) => *e = e.max(c.max_rel_err),
            None => worst.push((c.pair.to_string(), c.max_rel_err)),
        }
    }
    let failures = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| {
            format!(
                "{} error {:e} exceeds {:e} at (N={}, w={}, seed={})",
                c.pair, c.max_rel_err, c.tolerance, c.seq_len, c.half_window, c.seed
            )
        })
        .collect();
    Ok(VerifyReport {
        checks,
        worst,
        full_window_rows,
        failures,
    })
}

fn annotate(err: Error, n: usize, w: usize, seed: u64) -> Error {
    match err {
        Error::NumericOverflow { mode, row, detail } => Error::NumericOverflow {
            mode,
            row,
            detail: format!("{detail} (N={n}, w={w}, seed={seed})"),
        },
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateReport {
    pub summary: SimSummary,
    pub closed_form_matches: bool,
    pub cosim_max_rel_error: f64,
    /// Q/K/V fetched exactly `N` times each (window-only configs).
    pub load_once: Option<bool>,
    pub energy: Vec<EnergyRow>,
    pub failures: Vec<String>,
    #[serde(skip)]
    pub trace_csv: String,
    #[serde(skip)]
    pub trace_json: String,
}

impl SimulateReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn summary_json(&self) -> Result<String> {
        json(self)
    }
}

/// Event-driven pipeline run plus every check that ties it to the closed
/// form and to the streaming reference.
pub fn cmd_simulate(config: &RunConfig) -> Result<SimulateReport> {
    config.validate()?;
    let attn = config.attention();
    let timing = config.timing();
    let (q, k, v) = inputs(config, config.seed)?;
    let (z, trace) = simulate_sequence(&q, &k, &v, &attn, timing)
        .map_err(|e| annotate(e, attn.seq_len, attn.half_window, config.seed))?;
    let streamed = streaming_window_attention(&q, &k, &v, &attn)?;

    let mut failures = Vec::new();
    if let Err(e) = trace.check_invariants() {
        failures.push(e.to_string());
    }
    let s = &trace.summary;
    let closed_form_matches = s.total_cycles == s.closed_form_total_cycles;
    if !closed_form_matches {
        failures.push(format!(
            "simulated {} cycles, closed form predicts {}",
            s.total_cycles, s.closed_form_total_cycles
        ));
    }
    let cosim = max_relative_error(&z, &streamed.z)?;
    if cosim > COSIM_TOLERANCE {
        failures.push(format!("co-simulation error {cosim:e} exceeds {COSIM_TOLERANCE:e}"));
    }
    if s.traffic != streamed.traffic {
        failures.push("pipeline and streaming traffic counters disagree".into());
    }
    let load_once = attn.is_window_only().then(|| {
        let n = attn.seq_len as u64;
        let t = &s.traffic;
        t.q_rows == n && t.k_rows() == n && t.v_rows() == n
    });
    if load_once == Some(false) {
        failures.push(format!("off-chip fetches differ from N = {}", attn.seq_len));
    }

    let entries: Vec<_> = config.energy.iter().map(|e| (e.clone(), s.total_cycles)).collect();
    let energy = energy_report(&entries)?;

    let mut csv_buf = Vec::new();
    trace.write_csv(&mut csv_buf)?;
    let trace_csv = String::from_utf8(csv_buf).map_err(|e| Error::invalid(e.to_string()))?;
    let trace_json = json(&trace.events)?;

    Ok(SimulateReport {
        summary: trace.summary,
        closed_form_matches,
        cosim_max_rel_error: cosim,
        load_once,
        energy,
        failures,
        trace_csv,
        trace_json,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyzeReport {
    pub rows: Vec<CostReport>,
    pub failures: Vec<String>,
}

impl AnalyzeReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn render(&self, format: OutputFormat) -> Result<String> {
        match format {
            OutputFormat::Json => json(&self.rows),
            OutputFormat::Csv => {
                let mut buf = Vec::new();
                crate::cost::write_reports_csv(&self.rows, &mut buf)?;
                String::from_utf8(buf).map_err(|e| Error::invalid(e.to_string()))
            }
        }
    }
}

/// Cost rows for every `(N, kind)` of the grid, sorted by `N` then kind.
pub fn cmd_analyze(config: &RunConfig) -> Result<AnalyzeReport> {
    config.validate()?;
    let rows = sweep(&config.model, &config.grid, config.half_window)?;
    let mut failures = Vec::new();
    for r in &rows {
        let values = [
            r.flops_linear,
            r.flops_attention,
            r.flops_ffn,
            r.mops_linear,
            r.mops_attention,
            r.mops_ffn,
            r.peak_memory_bytes,
        ];
        if values.iter().any(|x| !x.is_finite() || *x < 0.0) {
            failures.push(format!("negative or non-finite cost at N={} ({})", r.seq_len, r.kind));
        }
        let (a, b, c) = r.flop_shares();
        if (a + b + c - 1.0).abs() > 1e-12 {
            failures.push(format!("FLOP shares do not sum to one at N={} ({})", r.seq_len, r.kind));
        }
        if r.kind == "sliding_chunks" {
            let cnt = chunk_count_for(r.seq_len, config.half_window);
            let expect = chunk_redundancy_ratio(cnt as u64)?;
            let expect = *expect.numer() as f64 / *expect.denom() as f64;
            if r.chunk_count != cnt || r.redundancy != expect {
                failures.push(format!("redundancy column off at N={}", r.seq_len));
            }
        }
    }
    Ok(AnalyzeReport { rows, failures })
}

/// Attend sets as JSON, or one `row,col,provenance` line per entry as CSV.
pub fn cmd_patterns(config: &RunConfig) -> Result<String> {
    config.validate()?;
    let attn = config.attention();
    let sets = build_attend_sets(&attn)?;
    match config.format {
        OutputFormat::Json => attend_sets_to_json(&attn, &sets),
        OutputFormat::Csv => {
            let mut out = String::from("row,col,provenance\n");
            for set in &sets {
                for (col, prov) in set.iter() {
                    let label = serde_json::to_value(prov)?;
                    let _ = writeln!(out, "{},{col},{}", set.row, label.as_str().unwrap_or_default());
                }
            }
            Ok(out)
        }
    }
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}
