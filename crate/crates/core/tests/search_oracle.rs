mod common;

use std::path::PathBuf;

use bayesfp::data::load_predictor_csv;
use bayesfp::evidence::{ModelEvaluator, PriorConfig};
use bayesfp::rng::chain_rng;
use bayesfp::search::{gmjmcmc, mjmcmc_step, ChainState, Explorer, MjmcmcParams, Population, SearchConfig, VisitLog};
use bayesfp::simharness::{art_schema, run_replicate};
use bayesfp_oracle::{exhaustive_posterior, EnumerableUniverse, OraclePrior};
use common::{model_of, ten_feature_case, ten_feature_universe};

fn small_search(population_size: usize, seed: u64) -> SearchConfig {
    SearchConfig {
        population_size,
        q: 6,
        d: Some(3),
        n_init: 100,
        n_expl: 100,
        n_final: 400,
        n_populations: 4,
        seed,
        ..SearchConfig::default()
    }
}

#[test]
fn search_never_beats_and_finds_the_exhaustive_optimum() {
    let (ds, features, oracle) = ten_feature_case(80, 21);
    let exact = exhaustive_posterior(&oracle, &OraclePrior { q: 6, d: Some(3) });
    let map = exact
        .iter()
        .map(|o| o.log_marglik + o.log_prior)
        .fold(f64::NEG_INFINITY, f64::max);
    let universe = ten_feature_universe(&features);
    for (size, seed) in [(10, 1), (6, 2), (6, 3)] {
        let cfg = small_search(size, seed);
        let ev = ModelEvaluator::new(ds.clone(), cfg.prior());
        let log = gmjmcmc(&ev, &universe, &cfg, &[], ds.n(), 0);
        let (_, best) = log.best().unwrap();
        assert!(best <= map + 1e-9, "{best} > {map}");
        assert!((best - map).abs() < 1e-9, "size {size} seed {seed}: {best} vs {map}");
    }
}

#[test]
fn mjmcmc_visits_states_in_proportion_to_posterior() {
    // Eight rows keep the posterior spread over all eight models.
    let (ds, features, oracle) = ten_feature_case(8, 4);
    let keep = [0usize, 5, 9];
    let sub = EnumerableUniverse {
        features: keep.iter().map(|&k| oracle.features[k].clone()).collect(),
        y: oracle.y.clone(),
    };
    let exact = exhaustive_posterior(&sub, &OraclePrior { q: 3, d: None });
    assert_eq!(exact.len(), 8);
    let pop = Population {
        features: keep.iter().map(|&k| features[k].clone()).collect(),
        generation: 0,
    };
    let prior = PriorConfig {
        q: 3,
        d: None,
        ..PriorConfig::default()
    };
    let ev = ModelEvaluator::new(ds, prior);
    let mut log = VisitLog::new();
    let mut ex = Explorer::new(&ev, &pop, &mut log);
    let params = MjmcmcParams {
        greedy_steps: 6,
        ..MjmcmcParams::default()
    };
    let mut state = ChainState {
        gamma: vec![false; 3],
        log_post: ex.log_post(&[false; 3]),
    };
    let mut rng = chain_rng(17, 0);
    let steps = 40_000;
    let mut counts = [0usize; 8];
    for _ in 0..steps {
        mjmcmc_step(&mut state, &mut ex, &params, &mut rng);
        let mask = state.gamma.iter().enumerate().fold(0, |m, (k, &b)| m | (usize::from(b) << k));
        counts[mask] += 1;
    }
    let tv: f64 = exact
        .iter()
        .map(|o| (counts[o.mask as usize] as f64 / steps as f64 - o.weight).abs())
        .sum::<f64>()
        / 2.0;
    assert!(tv < 0.05, "total variation {tv}");
    assert!(exact.iter().filter(|o| o.weight > 0.02).count() >= 3);
    for o in &exact {
        let logged = log.get(&model_of(o.mask, &pop.features)).unwrap();
        assert!((logged.log_posterior() - (o.log_marglik + o.log_prior)).abs() < 1e-10);
    }
}

#[test]
fn ideal_replicate_visits_the_true_model() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/art_predictors.csv");
    let predictors = load_predictor_csv(&path, &art_schema()).unwrap();
    let cfg = SearchConfig {
        population_size: 20,
        q: 20,
        d: Some(16),
        n_init: 50,
        n_expl: 50,
        n_final: 100,
        n_populations: 3,
        ..SearchConfig::default()
    };
    let r = run_replicate(&predictors, 1e-4, 0, 5, &cfg, true).unwrap();
    assert!(r.true_visited);
    assert!(r.best_lp >= r.true_lp);
    assert!(r.true_lp.is_finite());
}
