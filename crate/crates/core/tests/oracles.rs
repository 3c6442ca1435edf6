//! Cross-checks between independent routes to the same quantity.

use bifbm::harness::{fit_loglog_slope, run_lemma31, run_normality, run_rate_sweep, ExperimentConfig};
use bifbm::sde::{limit_path, simulate, Scheme};
use bifbm::{BifBmParams, CovFactor, TimeGrid, TrendExpr};

fn cfg(json: serde_json::Value) -> ExperimentConfig {
    ExperimentConfig::from_json(&json.to_string()).unwrap()
}

#[test]
fn euler_converges_to_integrating_factor_at_order_one() {
    let p = BifBmParams::new(0.8, 0.9).unwrap();
    let fine = TimeGrid::new(1.0, 2048).unwrap();
    let th = TrendExpr::parse("0.5 + sin(3*t)").unwrap();
    let paths = CovFactor::build(&p, fine).unwrap().sample_paths(20, 9).unwrap();
    let mut dts = Vec::new();
    let mut errs = Vec::new();
    for factor in [8, 4, 2] {
        let mut total = 0.0;
        for w in &paths {
            let w = w.coarsen(factor).unwrap();
            let a = simulate(&th, 1.0, 0.1, &w, Scheme::Euler).unwrap();
            let b = simulate(&th, 1.0, 0.1, &w, Scheme::IntegratingFactor).unwrap();
            total += a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        }
        dts.push(w_dt(factor));
        errs.push(total / paths.len() as f64);
    }
    let (slope, _) = fit_loglog_slope(&dts, &errs).unwrap();
    assert!((slope - 1.0).abs() < 0.2, "slope {slope}, errors {errs:?}");
}

fn w_dt(factor: usize) -> f64 {
    factor as f64 / 2048.0
}

#[test]
fn deviation_is_linear_in_eps() {
    let p = BifBmParams::new(0.9, 0.7).unwrap();
    let g = TimeGrid::new(2.0, 512).unwrap();
    let th = TrendExpr::parse("1 - t + 0.2*cos(5*t)").unwrap();
    let w = CovFactor::build(&p, g).unwrap().sample_stream(4, 0);
    let base = simulate(&th, 1.5, 0.0, &w, Scheme::IntegratingFactor).unwrap();
    let unit = simulate(&th, 1.5, 1.0, &w, Scheme::IntegratingFactor).unwrap();
    let x = simulate(&th, 1.5, 0.37, &w, Scheme::IntegratingFactor).unwrap();
    for i in 0..x.len() {
        let predicted = base.values[i] + 0.37 * (unit.values[i] - base.values[i]);
        assert!((x.values[i] - predicted).abs() < 1e-12 * (1.0 + x.values[i].abs()));
    }
    let limit = limit_path(&th, 1.5, g).unwrap();
    let gap = base.values.iter().zip(&limit.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(gap < 1e-8, "{gap}");
}

#[test]
fn envelope_holds_for_time_varying_trend() {
    let c = cfg(serde_json::json!({
        "model": {"theta": "0.3 + 0.6*sin(4*t)", "x0": 2.0, "H": 0.7, "K": 0.9, "T": 1.5},
        "grid": {"n": 512},
        "experiment": {"eps": [0.2, 0.05], "replications": 300, "seed": 21}
    }));
    let r = run_lemma31(&c, |_| {}).unwrap();
    for row in &r.lemma {
        assert_eq!(row.running_sup_violations, 0);
        assert!(row.sup_mse <= row.mse_bound);
    }
}

#[test]
fn event_failures_shrink_with_noise() {
    let c = cfg(serde_json::json!({
        "model": {"theta": "-0.5", "x0": 0.5, "H": 0.8, "K": 0.9, "T": 1.0},
        "grid": {"n": 512},
        "experiment": {"eps": [0.6, 0.3, 0.05], "replications": 200, "seed": 8,
                        "estimator": "alternate", "rho": 1.5}
    }));
    let r = run_rate_sweep(&c, |_| {}).unwrap();
    let fails: Vec<usize> = r.rates.iter().map(|row| row.event_failures).collect();
    assert!(fails[0] > 0, "{fails:?}");
    assert!(fails.windows(2).all(|w| w[1] <= w[0]), "{fails:?}");
    assert_eq!(fails[2], 0);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let c = cfg(serde_json::json!({
        "model": {"theta": "0.5", "x0": 1.0, "H": 0.9, "K": 0.7, "T": 1.0},
        "grid": {"n": 256},
        "experiment": {"eps": [0.2, 0.1, 0.05], "replications": 120, "seed": 1, "coupled": true}
    }));
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let a = one.install(|| run_rate_sweep(&c, |_| {}).unwrap());
    let b = three.install(|| run_rate_sweep(&c, |_| {}).unwrap());
    assert_eq!(a, b);
}

#[test]
fn wrong_normalization_drifts_across_eps() {
    let base = serde_json::json!({
        "model": {"theta": "0.5", "x0": 1.0, "H": 0.9, "K": 0.7, "T": 1.0},
        "grid": {"n": 2048},
        "experiment": {"eps": [0.05, 0.02], "replications": 400, "seed": 31}
    });
    let mut wrong = base.clone();
    wrong["experiment"]["normalization_exponent"] = serde_json::json!(1.0);
    let right = run_normality(&cfg(base), |_| {}).unwrap();
    let wrong = run_normality(&cfg(wrong), |_| {}).unwrap();
    let drift = |r: &bifbm::harness::ExperimentResult| r.normality[1].variance_ratio / r.normality[0].variance_ratio;
    assert!(drift(&wrong) > 1.3, "wrong exponent drift {}", drift(&wrong));
    let d = drift(&right);
    assert!(d > 0.75 && d < 1.33, "theoretical exponent drift {d}");
    assert!(right.normality.iter().all(|row| (0.8..=1.2).contains(&row.variance_ratio)));
}
