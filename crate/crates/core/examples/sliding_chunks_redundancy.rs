//! The sliding-chunks baseline computes dense `2w x 2w` blocks along the
//! diagonal. Counting its wasted MACs reproduces `1/2 - 1/(4c)` exactly.
//!
//! ```text
//! cargo run --example sliding_chunks_redundancy
//! ```

use num_rational::Ratio;
use winattn::numerics::{masked_dense_attention, max_relative_error, sliding_chunks_attention};
use winattn::patterns::{chunk_redundancy_ratio, window_attend_set};
use winattn::rng::qkv;

fn main() -> winattn::Result<()> {
    let (h, w) = (4, 4);
    println!("{:>3} {:>5} {:>10} {:>10} {:>9} {:>9}", "c", "N", "MACs", "redundant", "counted", "formula");
    for c in [1usize, 2, 4, 8, 16, 32, 64] {
        let n = (c + 1) * w;
        let (q, k, v) = qkv(n, h, c as u64, 1.0);
        let out = sliding_chunks_attention(&q, &k, &v, w)?;
        let counted = Ratio::new(out.redundant_mac_count, out.mac_count);
        let formula = chunk_redundancy_ratio(c as u64)?;
        assert_eq!(counted, formula);
        println!(
            "{c:>3} {n:>5} {:>10} {:>10} {:>9} {:>9}",
            out.mac_count, out.redundant_mac_count, counted, formula
        );
    }

    let n = 64;
    let (q, k, v) = qkv(n, h, 1, 1.0);
    let sets: Vec<_> = (0..n).map(|i| window_attend_set(i, n, w)).collect::<Result<_, _>>()?;
    let oracle = masked_dense_attention(&q, &k, &v, &sets, false)?;
    let chunked = sliding_chunks_attention(&q, &k, &v, w)?;
    println!("chunks vs masked dense: {:.2e}", max_relative_error(&chunked.z, &oracle)?);
    Ok(())
}
