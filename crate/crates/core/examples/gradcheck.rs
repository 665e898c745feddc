//! Compare BPTT gradients with central finite differences on small random
//! networks.
//!
//! `cargo run --example gradcheck -- [seeds]`

use cdm_lstm::gradcheck::{gradcheck, GradcheckConfig};

fn main() -> cdm_lstm::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let report = gradcheck(&GradcheckConfig {
            seed,
            ..Default::default()
        })?;
        println!(
            "seed {seed:>2}: {} parameters, max rel. error {:.3e}, max abs. error {:.1e} ({})",
            report.checked, report.max_rel_error, report.max_abs_error, report.worst_tensor
        );
        worst = worst.max(report.max_rel_error);
    }
    println!("worst over {seeds} seeds: {worst:.3e}");

    let corrupted = gradcheck(&GradcheckConfig {
        corrupt: true,
        ..Default::default()
    })?;
    println!(
        "corrupted w_hh gradient: max rel. error {:.3e}, passed = {}",
        corrupted.max_rel_error, corrupted.passed
    );
    Ok(())
}
