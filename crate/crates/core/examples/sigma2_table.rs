//! Limiting variance of the normalized kernel-weighted noise integral.

use bifbm::asymptotics::{normalized_integral_variance, sigma2, Sigma2Convention};
use bifbm::kernel::Kernel;
use bifbm::{BifBmParams, TimeGrid};

fn main() -> bifbm::Result<()> {
    let kernels = [Kernel::uniform(), Kernel::poly(0)?, Kernel::poly(2)?, Kernel::poly(4)?];
    println!("{:>5} {:>5} {:>8} {:>12} {:>12}", "H", "K", "kernel", "stationary", "with alpha");
    for (h, k) in [(0.7, 1.0), (0.9, 0.7), (0.75, 0.8), (0.95, 0.6)] {
        let p = BifBmParams::new(h, k)?;
        for g in &kernels {
            let a = sigma2(&p, g, 1e-9, Sigma2Convention::Stationary)?;
            let b = sigma2(&p, g, 1e-7, Sigma2Convention::WithAlphaAbs)?;
            println!("{h:>5} {k:>5} {:>8} {:>12.8} {:>12.8}", g.name(), a.value, b.value);
        }
    }

    // Finite bandwidths approach the stationary value.
    let p = BifBmParams::new(0.9, 0.7)?;
    let g = Kernel::poly(2)?;
    let grid = TimeGrid::new(1.0, 4000)?;
    for phi in [0.2, 0.1, 0.05] {
        let v = normalized_integral_variance(&p, &g, phi, 0.5, grid)?;
        println!("phi = {phi}: exact finite-bandwidth variance {v:.6}");
    }
    println!("limit: {:.6}", sigma2(&p, &g, 1e-9, Sigma2Convention::Stationary)?.value);
    Ok(())
}
