use hypersmc::experiments::toy::{baseline_eb_toy, baseline_fb_toy};
use hypersmc::experiments::{ParamEstimate, SmcSettings, ToyOracle};
use hypersmc::hyper::{HyperPrior, PriorFamily};
use hypersmc::models::toy::{generate_toy_data, ToyDataConfig, ToyModel};

fn mu_pm(e: &ParamEstimate) -> f64 {
    match e {
        ParamEstimate::Mu { posterior_mean, .. } => *posterior_mean,
        _ => panic!("not a toy estimate"),
    }
}

/// Mean and standard error over repeated runs.
fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    (m, sd / n.sqrt())
}

#[test]
fn noise_free_data_pins_mu() {
    let cfg = ToyDataConfig { zero_noise: true, ..ToyDataConfig::default() };
    let ds = generate_toy_data(1, &cfg);
    let model = ToyModel::from_dataset(&ds, 0.05).unwrap();
    let settings = SmcSettings::toy();
    // all prior mass near the smallest noise level
    let prior = HyperPrior::new(PriorFamily::Gamma { shape: 1.0, scale: 0.01 }, (0.05, 10.0)).unwrap();
    let b = baseline_fb_toy(&model, &prior, &settings, 3).unwrap();
    assert!(mu_pm(&b.result.estimate).abs() < 0.05, "{:?}", b.result.estimate);
    assert!(b.result.theta_pm < 0.2, "{}", b.result.theta_pm);
}

#[test]
fn baseline_fb_theta_mean_matches_quadrature() {
    let ds = generate_toy_data(2, &ToyDataConfig::default());
    let model = ToyModel::from_dataset(&ds, 0.05).unwrap();
    let settings = SmcSettings::toy();
    let prior = settings.default_prior().unwrap();
    let oracle = ToyOracle::new(&model, 4001);
    let joint = oracle.joint(&prior);
    let pms: Vec<f64> = (0..10)
        .map(|s| baseline_fb_toy(&model, &prior, &settings, 50 + s).unwrap().result.theta_pm)
        .collect();
    let (m, se) = mean_se(&pms);
    let truth = joint.theta_mean();
    assert!((m - truth).abs() < 3.0 * se + 1e-4, "{m} ± {se} vs {truth}");
}

#[test]
fn baseline_eb_selects_the_oracle_mode_and_conditions_on_it() {
    let settings = SmcSettings::toy();
    let prior = settings.default_prior().unwrap();
    for seed in [3, 4, 5] {
        let ds = generate_toy_data(seed, &ToyDataConfig::default());
        let model = ToyModel::from_dataset(&ds, 0.05).unwrap();
        let oracle = ToyOracle::new(&model, 4001);
        let map = oracle.joint(&prior).theta_map();
        let b = baseline_eb_toy(&model, &prior, &settings, ds.theta_true, 1).unwrap();
        let step = b.theta_grid[1] - b.theta_grid[0];
        assert!((b.theta_hat - map).abs() <= step, "seed {seed}: {} vs {map} (step {step})", b.theta_hat);
        assert_eq!(b.trace.last().theta, Some(b.theta_hat));
    }

    let ds = generate_toy_data(6, &ToyDataConfig::default());
    let model = ToyModel::from_dataset(&ds, 0.05).unwrap();
    let oracle = ToyOracle::new(&model, 4001);
    let runs: Vec<_> = (0..10)
        .map(|s| baseline_eb_toy(&model, &prior, &settings, ds.theta_true, 200 + s).unwrap())
        .collect();
    let theta_hat = runs[0].theta_hat;
    assert!(runs.iter().all(|r| r.theta_hat == theta_hat));
    let pms: Vec<f64> = runs.iter().map(|r| mu_pm(&r.result.estimate)).collect();
    let (m, se) = mean_se(&pms);
    let truth = oracle.mu_mean(theta_hat);
    assert!((m - truth).abs() < 3.0 * se + 1e-4, "{m} ± {se} vs {truth}");
}

#[test]
fn baselines_are_deterministic() {
    let ds = generate_toy_data(7, &ToyDataConfig::default());
    let model = ToyModel::from_dataset(&ds, 0.05).unwrap();
    let settings = SmcSettings::toy();
    let prior = settings.default_prior().unwrap();
    let a = baseline_fb_toy(&model, &prior, &settings, 9).unwrap();
    let b = baseline_fb_toy(&model, &prior, &settings, 9).unwrap();
    assert_eq!(a.trace.to_json().unwrap(), b.trace.to_json().unwrap());
    assert_eq!(a.result.estimate, b.result.estimate);
}
