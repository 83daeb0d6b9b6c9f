//! The streaming dataflow: K/V rows enter a `2w`-slot FIFO once each, and
//! every query row sees exactly its window.
//!
//! ```text
//! cargo run --example streaming_fifo
//! ```

use winattn::numerics::{masked_dense_attention, max_relative_error, streaming_window_attention, KvFifo};
use winattn::patterns::{build_attend_sets, window_range};
use winattn::rng::qkv;
use winattn::AttentionConfig;

fn main() -> winattn::Result<()> {
    let (n, h, w) = (12, 4, 3);

    // Walk the FIFO by hand for a few rows.
    let (q, k, v) = qkv(n, h, 11, 1.0);
    let mut fifo = KvFifo::for_window(w, h);
    for j in 0..w - 1 {
        fifo.push(j, k.row(j), v.row(j));
    }
    for i in 0..n {
        let entering = i + w - 1;
        let note = if entering < n {
            let (slot, evicted) = fifo.push(entering, k.row(entering), v.row(entering));
            match evicted {
                Some(old) => format!("row {entering} -> slot {slot}, evicts row {old}"),
                None => format!("row {entering} -> slot {slot}"),
            }
        } else {
            let (slot, _) = fifo.invalidate();
            format!("slot {slot} invalidated")
        };
        let held = fifo.valid_sources();
        assert_eq!(held, window_range(i, n, w).collect::<Vec<_>>());
        println!("query {i:>2}: {note:<28} window {held:?}");
    }

    let config = AttentionConfig::window(n, h, w);
    let out = streaming_window_attention(&q, &k, &v, &config)?;
    let oracle = masked_dense_attention(&q, &k, &v, &build_attend_sets(&config)?, false)?;
    println!("max relative error vs masked dense: {:.2e}", max_relative_error(&out.z, &oracle)?);
    let t = out.traffic;
    println!(
        "fetches: Q={} K={} V={} (N = {n}); evictions={} invalidations={}",
        t.q_rows,
        t.k_rows(),
        t.v_rows(),
        t.evictions,
        t.invalidations
    );
    Ok(())
}
