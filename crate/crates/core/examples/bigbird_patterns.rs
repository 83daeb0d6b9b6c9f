//! A BigBird-style pattern: window, global and statically seeded random
//! tokens, with the attention-core split that serves it.
//!
//! ```text
//! cargo run --example bigbird_patterns
//! ```

use winattn::numerics::{masked_dense_attention, max_relative_error, streaming_window_attention};
use winattn::patterns::{attend_sets_to_json, build_attend_sets};
use winattn::pipeline::CoreAllocation;
use winattn::rng::qkv;
use winattn::{AttentionConfig, Provenance};

fn main() -> winattn::Result<()> {
    let config = AttentionConfig::window(4096, 64, 96)
        .with_globals(0..128)
        .with_random(192, 2024);
    let sets = build_attend_sets(&config)?;
    let cores = CoreAllocation::for_config(&config);
    println!("cores: window {} / global {} / random {}", cores.window, cores.global, cores.random);
    for i in [0, 150, 2048, 4095] {
        let s = &sets[i];
        println!(
            "row {i:>4}: {} columns ({} window, {} global, {} random)",
            s.len(),
            s.count(Provenance::Window),
            s.count(Provenance::Global),
            s.count(Provenance::Random)
        );
    }

    // A small instance: the streaming kernel agrees with the masked oracle.
    let small = AttentionConfig::window(32, 8, 3).with_globals([0, 16]).with_random(2, 5);
    let (q, k, v) = qkv(32, 8, 9, 1.0);
    let streamed = streaming_window_attention(&q, &k, &v, &small)?;
    let oracle = masked_dense_attention(&q, &k, &v, &build_attend_sets(&small)?, false)?;
    println!("streaming vs masked dense: {:.2e}", max_relative_error(&streamed.z, &oracle)?);

    let tiny = AttentionConfig::window(6, 2, 1).with_globals([0]).with_random(1, 3);
    print!("{}", attend_sets_to_json(&tiny, &build_attend_sets(&tiny)?)?);
    Ok(())
}
