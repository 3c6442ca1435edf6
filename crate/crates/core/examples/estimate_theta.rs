//! The kernel estimator of `θ(t)` on a single trajectory with a smooth,
//! time-varying trend and a fourth-order kernel.

use bifbm::estimator::{bandwidth, eval_points, EstimateSeries, DEFAULT_WINDOW};
use bifbm::kernel::Kernel;
use bifbm::sde::{simulate, Scheme};
use bifbm::{BifBmParams, CovFactor, TimeGrid, TrendExpr};

fn main() -> bifbm::Result<()> {
    let params = BifBmParams::new(0.8, 0.9)?;
    let theta = TrendExpr::parse("0.8 + 0.4*sin(6.283185307179586*t)")?;
    let grid = TimeGrid::new(1.0, 4096)?;
    let kernel = Kernel::poly(2)?;
    let k = 2;
    let w = CovFactor::build(&params, grid)?.sample_stream(11, 0);

    for eps in [1e-2, 1e-3, 1e-4] {
        let x = simulate(&theta, 2.0, eps, &w, Scheme::IntegratingFactor)?;
        let phi = bandwidth(eps, k, params.hk())?;
        let points = eval_points(1.0, DEFAULT_WINDOW, &kernel, phi, 7)?;
        let series = EstimateSeries::compute(&x, &kernel, phi, &points, 1e-4)?;
        println!("eps = {eps:e}, bandwidth = {phi:.4}");
        for (t, est) in points.iter().zip(&series.theta_hat) {
            let truth = theta.eval(*t)?;
            match est {
                Some(v) => println!("  t = {t:.3}  theta = {truth:.4}  estimate = {v:.4}"),
                None => println!("  t = {t:.3}  theta = {truth:.4}  estimate undefined"),
            }
        }
    }
    Ok(())
}
