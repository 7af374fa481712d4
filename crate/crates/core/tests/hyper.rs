use hypersmc::experiments::{SmcSettings, ToyOracle};
use hypersmc::hyper::{
    anchor_iteration, build_ledger, eb_select, fb_average, hyper_posterior, reweight_to_theta, sensitivity_reweight,
    theta_estimators, HyperPrior, PriorFamily, WeightedSample,
};
use hypersmc::models::toy::{generate_toy_data, ToyDataConfig, ToyModel};
use hypersmc::smc::{run_sampler, RunTrace, SnapshotPolicy, TemperedModel, TemperingSchedule, SamplerConfig};
use hypersmc::SmcError;

fn toy(seed: u64) -> ToyModel {
    ToyModel::from_dataset(&generate_toy_data(seed, &ToyDataConfig::default()), 0.05).unwrap()
}

fn run(model: &ToyModel, seed: u64) -> RunTrace {
    let cfg = SmcSettings::toy().sampler_config(seed, 0.05, SnapshotPolicy::All).unwrap();
    run_sampler(model, &cfg).unwrap()
}

fn prior() -> HyperPrior {
    HyperPrior::default_gamma(0.05, 10.0).unwrap()
}

#[test]
fn single_step_ledger_sits_at_theta_star() {
    let model = toy(1);
    let cfg = SamplerConfig::new(50, TemperingSchedule::explicit(vec![0.0, 1.0]).unwrap(), 3, 0.05);
    let trace = run_sampler(&model, &cfg).unwrap();
    let ledger = build_ledger(&trace).unwrap();
    assert_eq!(ledger.entries.len(), 1);
    assert_eq!(ledger.entries[0].theta, 0.05);
    assert_eq!(ledger.entries[0].log_evidence, trace.last().log_evidence);
}

#[test]
fn ledger_follows_the_ladder() {
    let model = toy(2);
    let trace = run(&model, 1);
    let ledger = build_ledger(&trace).unwrap();
    assert_eq!(ledger.entries.len(), 500);
    assert!(ledger.entries.windows(2).all(|w| w[1].theta < w[0].theta && w[1].t == w[0].t + 1));
    assert!(ledger.entries.iter().all(|e| e.log_evidence.is_finite()));
    for e in &ledger.entries {
        let alpha = trace.records[e.t].alpha;
        assert!((e.theta - 0.05 / alpha.sqrt()).abs() < 1e-12 * e.theta);
    }
    let mut csv = Vec::new();
    ledger.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().count(), 501);
    assert!(text.starts_with("theta,log_evidence"));
}

#[test]
fn reweighting_to_the_own_level_is_the_identity_and_reversible() {
    let model = toy(3);
    let trace = run(&model, 2);
    let t = 420;
    let theta_t = trace.records[t].theta.unwrap();
    let same = reweight_to_theta(&trace, t, theta_t, &model).unwrap();
    let snap = trace.snapshot(t).unwrap();
    for (a, b) in same.weights.iter().zip(&snap.weights) {
        assert!((a - b).abs() < 1e-12);
    }
    let base = WeightedSample::from_trace(&trace, t).unwrap();
    let (there, _) = base.retarget(&model, 0.9 * theta_t).unwrap();
    assert!(there.weights != base.weights);
    let (back, _) = there.retarget(&model, theta_t).unwrap();
    for (a, b) in back.weights.iter().zip(&base.weights) {
        assert!((a - b).abs() < 1e-10);
    }
    for (a, b) in back.log_likelihoods.iter().zip(&base.log_likelihoods) {
        assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
    }
}

#[test]
fn analysis_of_a_trace_costs_no_model_evaluations() {
    let model = toy(4);
    let trace = run(&model, 3);
    let before = model.evaluations();
    let ledger = build_ledger(&trace).unwrap();
    let post = hyper_posterior(&ledger, &prior()).unwrap();
    let eb = eb_select(&post).unwrap();
    let k = anchor_iteration(&ledger.thetas(), eb.theta).unwrap();
    let sample = reweight_to_theta(&trace, ledger.entries[k].t, eb.theta, &model).unwrap();
    let fb = fb_average(&trace, &prior()).unwrap();
    let _ = fb.map_of(|c| c[0]).unwrap();
    let other = HyperPrior::new(PriorFamily::LogUniform, (0.05, 10.0)).unwrap();
    let _ = sensitivity_reweight(&fb, &other).unwrap();
    assert_eq!(model.evaluations(), before);
    assert!(sample.ess > 5.0);
    // EB selection and the FB mode come from the same objective
    assert_eq!(theta_estimators(&post).map, eb.theta);
}

#[test]
fn recycled_weights_normalize_and_count_every_knot_in_support() {
    let model = toy(5);
    let trace = run(&model, 4);
    let p = HyperPrior::default_gamma(0.05, 1.0).unwrap();
    let fb = fb_average(&trace, &p).unwrap();
    let knots = trace.records.iter().filter(|r| r.theta.is_some_and(|t| p.contains(t))).count();
    assert_eq!(fb.iterations.len(), knots);
    assert_eq!(fb.n_samples(), 100 * knots);
    assert!(fb.n_samples() > 100);
    assert!((fb.total_weight() - 1.0).abs() < 1e-12);
    let omega: f64 = fb.samples().map(|(_, w)| w).sum();
    assert!((omega - 1.0).abs() < 1e-12);
}

#[test]
fn single_knot_support_collapses_to_that_snapshot() {
    let model = toy(6);
    let trace = run(&model, 5);
    let t = 300;
    let th = trace.records[t].theta.unwrap();
    let (up, down) = (trace.records[t - 1].theta.unwrap(), trace.records[t + 1].theta.unwrap());
    let narrow = HyperPrior::new(PriorFamily::Uniform, ((th + down) / 2.0, (th + up) / 2.0)).unwrap();
    let fb = fb_average(&trace, &narrow).unwrap();
    assert_eq!(fb.iterations.len(), 1);
    assert_eq!(fb.iterations[0].t, t);
    let snap = trace.snapshot(t).unwrap();
    for ((c, w), (sc, sw)) in fb.samples().zip(snap.states.iter().zip(&snap.weights)) {
        assert_eq!(c, sc.as_slice());
        assert!((w - sw).abs() < 1e-15);
    }
}

#[test]
fn theta_marginal_is_the_posterior_at_the_knots() {
    let model = toy(7);
    let trace = run(&model, 6);
    let p = prior();
    let post = hyper_posterior(&build_ledger(&trace).unwrap(), &p).unwrap();
    let fb = fb_average(&trace, &p).unwrap();
    // mass_t = density(theta_t) g_t / sum_s density(theta_s) g_s
    let z: f64 = fb.iterations.iter().map(|it| post.density(it.theta) * it.g).sum();
    for it in &fb.iterations {
        let expect = post.density(it.theta) * it.g / z;
        assert!((it.mass - expect).abs() < 1e-10, "t={}: {} vs {}", it.t, it.mass, expect);
    }
}

#[test]
fn common_evidence_offset_leaves_recycled_weights_unchanged() {
    let model = toy(8);
    let trace = run(&model, 7);
    let mut shifted = trace.clone();
    for r in &mut shifted.records {
        r.log_evidence += 123.456;
    }
    let a = fb_average(&trace, &prior()).unwrap();
    let b = fb_average(&shifted, &prior()).unwrap();
    for (x, y) in a.iterations.iter().zip(&b.iterations) {
        assert!((x.mass - y.mass).abs() < 1e-12 * x.mass.max(1e-300));
    }
}

#[test]
fn prior_swap_reuses_stored_quantities() {
    let model = toy(9);
    let trace = run(&model, 8);
    let p = prior();
    let fb = fb_average(&trace, &p).unwrap();
    let again = sensitivity_reweight(&fb, &p).unwrap();
    assert_eq!(fb.iterations, again.iterations);
    // a prior with more mass at large theta pulls the posterior mean up
    let wide = HyperPrior::new(PriorFamily::Gamma { shape: 2.0, scale: 2.0 }, p.support).unwrap();
    let swapped = sensitivity_reweight(&fb, &wide).unwrap();
    assert!(swapped.theta_mean() > fb.theta_mean());
    let direct = hyper_posterior(&build_ledger(&trace).unwrap(), &wide).unwrap();
    assert!(direct.posterior_mean() > hyper_posterior(&build_ledger(&trace).unwrap(), &p).unwrap().posterior_mean());
}

#[test]
fn recycling_needs_snapshots() {
    let model = toy(10);
    let cfg = SmcSettings::toy().sampler_config(1, 0.05, SnapshotPolicy::LastOnly).unwrap();
    let trace = run_sampler(&model, &cfg).unwrap();
    assert!(matches!(fb_average(&trace, &prior()), Err(SmcError::MissingSnapshot(_))));
    // the ledger needs no snapshots
    assert!(build_ledger(&trace).is_ok());
}

#[test]
fn reweighted_mean_matches_quadrature_at_the_selected_level() {
    let seeds = 12;
    let model = toy(11);
    let oracle = ToyOracle::new(&model, 4001);
    let mut diffs = Vec::new();
    for s in 0..seeds {
        let trace = run(&model, 100 + s);
        let ledger = build_ledger(&trace).unwrap();
        let eb = eb_select(&hyper_posterior(&ledger, &prior()).unwrap()).unwrap();
        let k = anchor_iteration(&ledger.thetas(), eb.theta).unwrap();
        let sample = reweight_to_theta(&trace, ledger.entries[k].t, eb.theta, &model).unwrap();
        diffs.push(sample.mean_of(|c| c[0]) - oracle.mu_mean(eb.theta));
    }
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!(mean.abs() < 3.0 * sd / n.sqrt() + 1e-4, "bias {mean}, sd {sd}");
}
