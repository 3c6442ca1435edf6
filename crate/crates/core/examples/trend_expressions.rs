//! Trend expressions: parsing, evaluation, bounds and numerical derivatives.

use bifbm::trend::derivative_num;
use bifbm::TrendExpr;

fn main() -> bifbm::Result<()> {
    let theta = TrendExpr::parse("exp(-t) * cos(3*t) + 2^-1")?;
    println!("parsed: {}", theta.root());
    println!("theta(0.4) = {:.6}", theta.eval(0.4)?);
    println!("sup |theta| on [0, 2] (inflated): {:.6}", theta.sup_bound(2.0, 4000)?);
    for order in 1..=4 {
        let d = derivative_num(|t| theta.eval(t).unwrap_or(f64::NAN), 1.0, order, 1e-2, (0.0, 2.0))?;
        println!("derivative of order {order} at t = 1: {d:.6}");
    }
    for bad in ["2*+*t", "sin(t", "tau + 1"] {
        if let Err(e) = TrendExpr::parse(bad) {
            println!("{bad:>8}: {e}");
        }
    }
    Ok(())
}
