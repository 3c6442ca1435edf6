//! MSE rate sweep from a JSON config (default: the shipped main-estimator sweep).
//!
//! `cargo run --release --example rate_sweep -- crates/core/configs/alt_sweep.json`

use std::path::PathBuf;

use bifbm::harness::{run_rate_sweep, ExperimentConfig};

fn main() -> bifbm::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/rate_sweep.json")));
    let cfg = ExperimentConfig::from_file(&path)?;
    let result = run_rate_sweep(&cfg, |line| eprintln!("{line}"))?;
    println!("{:>8} {:>10} {:>12} {:>10}", "eps", "bandwidth", "sup MSE", "MC se");
    for row in &result.rates {
        println!("{:>8} {:>10.5} {:>12.5e} {:>10.2e}", row.eps, row.bandwidth, row.sup_mse, row.mc_se);
    }
    println!("{}", result.headline());
    Ok(())
}
