//! One noise path, several noise levels: the observed trajectory collapses
//! onto the limit path `x_t = x0 exp(∫θ)` as `ε` shrinks.

use bifbm::sde::{limit_path, Propagator, Scheme};
use bifbm::{BifBmParams, CovFactor, TimeGrid, TrendExpr};

fn main() -> bifbm::Result<()> {
    let theta = TrendExpr::parse("1 - 2*t + 0.5*sin(8*t)")?;
    let grid = TimeGrid::new(2.0, 1024)?;
    let noise = CovFactor::build(&BifBmParams::new(0.9, 0.7)?, grid)?.sample_stream(3, 0);
    let limit = limit_path(&theta, 1.0, grid)?;

    for scheme in [Scheme::IntegratingFactor, Scheme::Euler] {
        let prop = Propagator::new(&theta, grid, scheme)?;
        for eps in [0.5, 0.1, 0.01] {
            let x = prop.propagate(1.0, eps, &noise)?;
            let gap = x.values.iter().zip(&limit.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            println!("{scheme:?} eps = {eps:<5} X_T = {:.5} x_T = {:.5} sup|X - x| = {gap:.3e}", x.terminal(), limit.terminal());
        }
    }
    Ok(())
}
