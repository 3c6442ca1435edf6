//! Normality of the rescaled estimation error at one time point, against the
//! Gaussian limit with variance `σ²`. A second run uses a wrong normalizing
//! exponent to show the variance ratio drifting with `ε`.

use bifbm::harness::{run_normality, ExperimentConfig};

fn main() -> bifbm::Result<()> {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/normality.json"))?;
    let mut value: serde_json::Value = serde_json::from_str(&text).map_err(std::io::Error::other)?;
    value["experiment"]["replications"] = 400.into();
    value["experiment"]["eps"] = serde_json::json!([0.05, 0.02]);

    let right = run_normality(&ExperimentConfig::from_value(value.clone())?, |_| {})?;
    value["experiment"]["normalization_exponent"] = 1.0.into();
    let wrong = run_normality(&ExperimentConfig::from_value(value)?, |_| {})?;

    for (label, result) in [("theoretical exponent", &right), ("exponent 1", &wrong)] {
        println!("{label}");
        for row in &result.normality {
            println!(
                "  eps = {:<5} Var(Z)/sigma2 = {:.3}  AD p = {:.3}  KS p = {:.3}",
                row.eps, row.variance_ratio, row.anderson_darling.p_value, row.kolmogorov_smirnov.p_value
            );
        }
    }
    Ok(())
}
