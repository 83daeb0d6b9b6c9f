//! One query row through the fused kernel: the numerator is accumulated pair
//! by pair and the softmax denominator is applied once at the end.
//!
//! ```text
//! cargo run --example fused_kernel
//! ```

use winattn::numerics::{fused_row_attention, softmax_row};
use winattn::rng::qkv;
use winattn::NumericMode;

fn main() -> winattn::Result<()> {
    let (n, h) = (16, 8);
    let (q, k, v) = qkv(n, h, 3, 1.0);
    let query = q.row(5);
    let k_rows: Vec<&[f64]> = (0..n).map(|j| k.row(j)).collect();
    let v_rows: Vec<&[f64]> = (0..n).map(|j| v.row(j)).collect();

    // Reference: softmax over all scores first, then weight V.
    let scores: Vec<f64> = k_rows.iter().map(|kr| kr.iter().zip(query).map(|(a, b)| a * b).sum()).collect();
    let probs = softmax_row(&scores)?;
    let mut reference = vec![0.0; h];
    for (p, vr) in probs.iter().zip(&v_rows) {
        for (acc, x) in reference.iter_mut().zip(*vr) {
            *acc += p * x;
        }
    }

    for mode in [NumericMode::Raw, NumericMode::Stabilized] {
        let row = fused_row_attention(query, &k_rows, &v_rows, mode, false)?;
        let err = row
            .z
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!(
            "{:<10} row_sum={:>10.6} max_score={:>8.4} max|diff|={err:.2e}",
            mode.name(),
            row.row_sum,
            row.max_score
        );
    }

    // Large scores overflow exp() in raw mode; the stabilized kernel is fine.
    let big: Vec<f64> = query.iter().map(|x| x * 400.0).collect();
    match fused_row_attention(&big, &k_rows, &v_rows, NumericMode::Raw, false) {
        Ok(_) => println!("raw mode survived scaled inputs"),
        Err(e) => println!("raw mode on scaled inputs: {e}"),
    }
    let ok = fused_row_attention(&big, &k_rows, &v_rows, NumericMode::Stabilized, false)?;
    println!("stabilized on scaled inputs: row_sum={:.6}", ok.row_sum);
    Ok(())
}
