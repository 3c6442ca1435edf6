//! Exact sampling of bifractional Brownian motion on a grid.
//!
//! Run with `cargo run --release --example sample_paths`.

use bifbm::sampler::self_similarity_check;
use bifbm::stats::mean_var;
use bifbm::{BifBmParams, CovFactor, TimeGrid};

fn main() -> bifbm::Result<()> {
    let params = BifBmParams::new(0.75, 0.8)?;
    let grid = TimeGrid::new(1.0, 64)?;
    let factor = CovFactor::build(&params, grid)?;
    let paths = factor.sample_paths(4000, 42)?;

    println!("H = {}, K = {}, HK = {}", params.h(), params.k(), params.hk());
    println!("{:>6} {:>12} {:>12}", "t", "Var W_t", "t^(2HK)");
    for i in [8, 16, 32, 64] {
        let t = grid.time(i);
        let values: Vec<f64> = paths.iter().map(|p| p.values[i]).collect();
        let (_, var) = mean_var(&values);
        println!("{t:>6.3} {var:>12.5} {:>12.5}", t.powf(2.0 * params.hk()));
    }

    let (lo, hi) = params.increment_bounds(0.2, 0.7)?;
    println!(
        "E(W_0.7 - W_0.2)^2 = {:.5} lies in [{lo:.5}, {hi:.5}]",
        params.increment_variance(0.2, 0.7)?
    );

    let report = self_similarity_check(&params, 1.0, 4.0, 2000, 7)?;
    println!("W_4 vs 4^HK W_1: KS p-value {:.3}", report.ks.p_value);
    Ok(())
}
