//! The six-step attention-core pipeline on a Longformer-sized head
//! (N = 4096, H = 64, 2w = 512), co-simulated against the streaming kernel.
//!
//! ```text
//! cargo run --release --example pipeline_longformer
//! ```

use winattn::numerics::{max_relative_error, streaming_window_attention};
use winattn::pipeline::{default_timing, random_load_latency, simulate_sequence, PipelineTiming, Precision};
use winattn::rng::qkv;
use winattn::AttentionConfig;

fn main() -> winattn::Result<()> {
    let config = AttentionConfig::window(4096, 64, 256);
    let (q, k, v) = qkv(4096, 64, 1, 1.0);

    for precision in [Precision::Fp16, Precision::Fp32] {
        let timing = default_timing(precision, 64, 256);
        let (z, trace) = simulate_sequence(&q, &k, &v, &config, timing)?;
        trace.check_invariants()?;
        let s = &trace.summary;
        println!(
            "{precision:?}: II={} fill={} total={} (closed form {})",
            s.initiation_interval, s.fill_cycles, s.total_cycles, s.closed_form_total_cycles
        );
        if precision == Precision::Fp16 {
            let reference = streaming_window_attention(&q, &k, &v, &config)?;
            println!("  co-simulation error {:.2e}", max_relative_error(&z, &reference.z)?);
            println!("  fetches Q={} K={} V={}", s.traffic.q_rows, s.traffic.k_rows(), s.traffic.v_rows());
        }
    }

    // A slower random-core refresh stays hidden until it exceeds the interval.
    let small = AttentionConfig::window(256, 64, 32).with_random(8, 1);
    let (q, k, v) = qkv(256, 64, 2, 1.0);
    for lane in [0, random_load_latency(64), 260] {
        let timing = PipelineTiming::REFERENCE_FP16.with_random_load(lane);
        let (_, trace) = simulate_sequence(&q, &k, &v, &small, timing)?;
        println!("random refresh {lane:>3} cycles -> total {}", trace.summary.total_cycles);
    }

    let mut first_rows = Vec::new();
    let (_, trace) = simulate_sequence(&q, &k, &v, &AttentionConfig::window(256, 64, 32), PipelineTiming::REFERENCE_FP16)?;
    trace.write_csv(&mut first_rows)?;
    let text = String::from_utf8_lossy(&first_rows);
    println!("first trace lines:");
    for line in text.lines().take(6) {
        println!("  {line}");
    }
    Ok(())
}
