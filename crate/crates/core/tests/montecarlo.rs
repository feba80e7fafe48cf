use ccs_core::simlab::{
    run_monte_carlo, run_monte_carlo_multi, summarize_metrics, ScenarioConfig, Study,
};

fn small(study: Study, label: char, reps: usize) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::new(study, label, 300, reps, 21);
    cfg.n_truth = 20_000;
    cfg
}

#[test]
fn one_replicate_reports_its_own_error_and_flags_the_spread() {
    let t = run_monte_carlo(&small(Study::Three, 'a', 1)).unwrap();
    assert_eq!(t.rows.len(), 10);
    assert_eq!(t.delta_rows.len(), 5);
    for r in t.rows.iter().chain(&t.delta_rows) {
        assert_eq!(r.metrics.reps, 1);
        assert!(!r.metrics.sd_defined);
        assert_eq!(r.metrics.sd, 0.0);
        assert_eq!(r.metrics.rmse, r.metrics.bias.abs());
        assert!(r.metrics.coverage == 0.0 || r.metrics.coverage == 1.0);
    }
}

#[test]
fn metrics_of_a_known_sample() {
    let points = [0.1, 0.3, 0.2];
    let ses = [0.05, 0.05, 0.2];
    let cis: Vec<(f64, f64)> = points
        .iter()
        .zip(&ses)
        .map(|(p, s)| (p - 1.96 * s, p + 1.96 * s))
        .collect();
    let m = summarize_metrics(&points, &ses, &cis, 0.25);
    assert!((m.bias - (-0.05)).abs() < 1e-15);
    assert!((m.mean_se - 0.1).abs() < 1e-15);
    assert!((m.sd - 0.1).abs() < 1e-15);
    assert!((m.coverage - 2.0 / 3.0).abs() < 1e-15);
    let rmse = ((0.15f64.powi(2) + 0.05f64.powi(2) + 0.05f64.powi(2)) / 3.0).sqrt();
    assert!((m.rmse - rmse).abs() < 1e-15);
}

#[test]
fn results_do_not_depend_on_the_thread_count() {
    let cfg = small(Study::Two, 'd', 6);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| run_monte_carlo_multi(&cfg, &['a', 'd']).unwrap())
    };
    let one = serde_json::to_string(&run(1)).unwrap();
    assert_eq!(one, serde_json::to_string(&run(3)).unwrap());
}

#[test]
fn scenarios_share_replicate_data() {
    let cfg = small(Study::Three, 'a', 4);
    let multi = run_monte_carlo_multi(&cfg, &['a', 'c']).unwrap();
    let single = run_monte_carlo(&ScenarioConfig {
        misspec: 'c',
        ..cfg.clone()
    })
    .unwrap();
    assert_eq!(
        serde_json::to_string(&multi[1]).unwrap(),
        serde_json::to_string(&single).unwrap()
    );
    // Scenario (c) leaves the consent model untouched, so nu A1 is unchanged.
    let nu = |t: &ccs_core::simlab::MetricsTable| {
        t.rows
            .iter()
            .filter(|r| r.estimator == "A1")
            .map(|r| r.metrics.bias)
            .collect::<Vec<_>>()
    };
    assert_eq!(nu(&multi[0]), nu(&multi[1]));
}

#[test]
fn invalid_configurations_are_rejected() {
    assert!(run_monte_carlo(&small(Study::One, 'e', 2)).is_err());
    assert!(run_monte_carlo(&small(Study::Three, 'a', 0)).is_err());
    let mut cfg = small(Study::Three, 'a', 2);
    cfg.k = 0;
    assert!(run_monte_carlo(&cfg).is_err());
}
