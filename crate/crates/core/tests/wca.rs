use lfc_core::wca::functions::{rosenbrock, sphere};
use lfc_core::wca::*;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

fn check_invariants(state: &WcaState, bounds: &Bounds, config: &WcaConfig, prev_best: Option<f64>) {
    let pop: Vec<&Candidate> = state.population().collect();
    assert_eq!(pop.len(), config.n_pop);
    assert_eq!(state.rivers.len(), config.n_sr - 1);
    assert_eq!(state.assignment.len(), state.streams.len());
    for c in &pop {
        assert!(bounds.contains(&c.position), "out of bounds: {:?}", c.position);
        assert!(c.cost.is_finite());
        assert!(state.sea.cost <= c.cost);
    }
    let counts = state.stream_counts();
    assert_eq!(counts.iter().sum::<usize>(), config.n_raindrops());
    assert!(counts.iter().all(|&k| k >= 1), "{counts:?}");
    for (i, c) in state.history.iter().enumerate() {
        assert_eq!(*c, state.history[..=i].iter().copied().fold(f64::INFINITY, f64::min));
    }
    if let Some(prev) = prev_best {
        assert!(state.sea.cost <= prev);
    }
    assert!(state.d_max >= 0.0);
}

#[test]
fn invariants_hold_every_iteration() {
    let bounds = Bounds::uniform(3, -5.0, 5.0).unwrap();
    for seed in 0..10 {
        for fitness_inverted in [false, true] {
            let config = WcaConfig { seed, max_it: 60, fitness_inverted, ..WcaConfig::default() };
            let mut state = WcaState::initialize(&rosenbrock, &bounds, &config).unwrap();
            check_invariants(&state, &bounds, &config, None);
            for _ in 0..config.max_it {
                let before = state.sea.cost;
                state.step(&rosenbrock, &bounds, &config).unwrap();
                check_invariants(&state, &bounds, &config, Some(before));
                assert_eq!(*state.history.last().unwrap(), state.sea.cost);
            }
            assert_eq!(state.history.len(), config.max_it);
        }
    }
}

#[test]
fn runs_are_deterministic() {
    let bounds = Bounds::uniform(4, -2.0, 3.0).unwrap();
    let config = WcaConfig { seed: 42, ..WcaConfig::default() };
    let a = minimize(&rosenbrock, &bounds, &config).unwrap();
    let b = minimize(&rosenbrock, &bounds, &config).unwrap();
    assert_eq!(a, b);
    let other = minimize(&rosenbrock, &bounds, &WcaConfig { seed: 43, ..config }).unwrap();
    assert_ne!(a.best.position, other.best.position);
}

#[test]
fn thread_count_does_not_change_results() {
    let bounds = Bounds::uniform(2, -5.0, 5.0).unwrap();
    let config = WcaConfig { seed: 3, ..WcaConfig::default() };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let single = pool.install(|| minimize(&sphere, &bounds, &config).unwrap());
    assert_eq!(single, minimize(&sphere, &bounds, &config).unwrap());
}

#[test]
fn evaporation_rerains_on_long_runs() {
    let bounds = Bounds::uniform(2, -5.0, 5.0).unwrap();
    for seed in 0..3 {
        let config = WcaConfig { seed, max_it: 200, ..WcaConfig::default() };
        let out = minimize(&sphere, &bounds, &config).unwrap();
        assert!(out.rerain_events > 0, "seed {seed}");
    }
}

#[test]
fn evaluation_count_matches_budget() {
    let bounds = Bounds::uniform(2, -5.0, 5.0).unwrap();
    let config = WcaConfig { max_it: 5, d_max0: 1e-300, ..WcaConfig::default() };
    let out = minimize(&sphere, &bounds, &config).unwrap();
    assert_eq!(out.rerain_events, 0);
    assert_eq!(out.evaluations, config.n_pop + config.max_it * (config.n_pop - 1));
}

#[test]
fn benchmark_medians() {
    let bounds = Bounds::uniform(2, -5.0, 5.0).unwrap();
    let run = |f: fn(&[f64]) -> f64| -> f64 {
        median((0..10).map(|seed| minimize(&f, &bounds, &WcaConfig { seed, ..WcaConfig::default() }).unwrap().best.cost).collect())
    };
    let s = run(sphere);
    let r = run(rosenbrock);
    assert!(s < 1e-3, "sphere median {s}");
    assert!(r < 1e-1, "rosenbrock median {r}");
}

#[test]
fn objective_failure_after_repeated_non_finite_costs() {
    let bounds = Bounds::uniform(2, -1.0, 1.0).unwrap();
    let nan = |_: &[f64]| f64::NAN;
    assert!(matches!(
        WcaState::initialize(&nan, &bounds, &WcaConfig::default()),
        Err(WcaError::ObjectiveFailure)
    ));
}
