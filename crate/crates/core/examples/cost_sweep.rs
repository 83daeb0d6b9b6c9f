//! FLOP, memory-traffic and memory-footprint trends over sequence length,
//! plus energy per attention for user-supplied operating points.
//!
//! ```text
//! cargo run --example cost_sweep
//! ```

use winattn::cost::{default_grid, energy_report, memory_peak, sweep, AttnKind, EnergySpec, ModelDims};

fn main() -> winattn::Result<()> {
    let dims = ModelDims::default();
    let w = 256;
    let rows = sweep(&dims, &default_grid(), w)?;
    println!("{:>6} {:>15} {:>12} {:>12} {:>12}", "N", "kind", "attn FLOP%", "attn MOP%", "peak MiB");
    for r in &rows {
        println!(
            "{:>6} {:>15} {:>11.2}% {:>11.2}% {:>12.2}",
            r.seq_len,
            r.kind,
            100.0 * r.attention_flop_share,
            100.0 * r.attention_mop_share,
            r.peak_memory_bytes / (1024.0 * 1024.0)
        );
    }

    println!("\nper-head memory at H=64, fp32:");
    for n in [1024, 4096, 16384] {
        let dense = memory_peak(AttnKind::Dense, n, 64, 4)?;
        let window = memory_peak(AttnKind::Window(w), n, 64, 4)?;
        println!("  N={n:>5}: dense {:>10.1} KiB, fused window {:>8.1} KiB", dense / 1024.0, window / 1024.0);
    }

    // Clock and power are inputs; these are illustrative, not measured.
    let fpga = EnergySpec::new("accelerator", 200e6, 30.0)?;
    let gpu = EnergySpec::new("gpu", 1.4e9, 300.0)?;
    for row in energy_report(&[(fpga, 823_999), (gpu, 450_000)])? {
        println!(
            "{:<12} {:>8} cycles {:.4} J (x{:.2})",
            row.label, row.cycles, row.joules, row.ratio_to_first
        );
    }
    Ok(())
}
