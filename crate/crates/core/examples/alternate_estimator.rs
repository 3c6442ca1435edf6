//! The truncated estimator built from `Y_t = ∫ I(A_s) dX_s / X_s`, where the
//! indicator switches off for good once `X` drops below `½ x0 e^{-Lt}`.

use bifbm::estimator::{alt_bandwidth, build_auxiliary, estimate_theta_alt};
use bifbm::kernel::Kernel;
use bifbm::sde::{simulate, Scheme};
use bifbm::{BifBmParams, CovFactor, TimeGrid, TrendExpr};

fn main() -> bifbm::Result<()> {
    let params = BifBmParams::new(0.9, 0.7)?;
    let theta = TrendExpr::parse("0.5 - 0.3*t")?;
    let bound = theta.sup_bound(1.0, 2000)?;
    let grid = TimeGrid::new(1.0, 2048)?;
    let factor = CovFactor::build(&params, grid)?;
    let kernel = Kernel::uniform();
    let rho = 2.0;

    for eps in [0.3, 0.05] {
        let phi = alt_bandwidth(eps, rho, params.hk())?;
        let mut failures = 0;
        let mut sq = 0.0;
        let reps = 200;
        for r in 0..reps {
            let w = factor.sample_stream(5, r);
            let x = simulate(&theta, 1.0, eps, &w, Scheme::IntegratingFactor)?;
            let input = build_auxiliary(&x, 1.0, bound, eps)?;
            failures += usize::from(!input.event_holds());
            sq += (estimate_theta_alt(&input, &kernel, phi, 0.5)? - theta.eval(0.5)?).powi(2);
        }
        println!(
            "eps = {eps}: bandwidth {phi:.4}, MSE at t = 0.5 {:.3e}, event failed on {failures}/{reps} paths",
            sq / reps as f64
        );
    }
    Ok(())
}
