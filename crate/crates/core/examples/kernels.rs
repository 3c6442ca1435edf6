//! Compactly supported kernels and their moments.

use bifbm::kernel::{Kernel, MAX_POLY_ORDER};

fn main() -> bifbm::Result<()> {
    let mut kernels = vec![Kernel::uniform()];
    for k in 0..=MAX_POLY_ORDER {
        kernels.push(Kernel::poly(k)?);
    }
    for g in &kernels {
        let moments: Vec<String> = (0..=g.order() + 1).map(|j| format!("{:+.3e}", g.moment(j))).collect();
        println!("{:>8} support {:?} order {}  moments {}", g.name(), g.support(), g.order(), moments.join(" "));
    }
    Ok(())
}
