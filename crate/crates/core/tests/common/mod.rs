#![allow(dead_code)]

use std::sync::Arc;

use bayesfp::data::{Column, ColumnKind, Dataset, Response};
use bayesfp::evidence::Model;
use bayesfp::transforms::{Feature, FeatureUniverse, Power, Transform};
use bayesfp_oracle::{EnumerableUniverse, OracleFeature};
use bayesfp::rng::chain_rng;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Positive continuous predictors `x1..xk` drawn uniformly from [0.5, 5].
pub fn positive_predictors(n: usize, k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = chain_rng(seed, 7);
    (0..k)
        .map(|_| (0..n).map(|_| rng.random_range(0.5..5.0)).collect())
        .collect()
}

pub fn gaussian_noise(n: usize, sd: f64, seed: u64) -> Vec<f64> {
    let mut rng = chain_rng(seed, 8);
    let normal = Normal::new(0.0, sd).unwrap();
    (0..n).map(|_| normal.sample(&mut rng)).collect()
}

pub fn continuous_dataset(xs: &[Vec<f64>], response: Response) -> Dataset {
    let cols = xs
        .iter()
        .enumerate()
        .map(|(j, x)| Column::new(&format!("x{}", j + 1), x.clone(), ColumnKind::Continuous))
        .collect();
    Dataset::new(cols, response).unwrap()
}

const LN2: f64 = std::f64::consts::LN_2;

/// Ten features over three predictors with columns written out by hand.
pub fn ten_feature_case(n: usize, seed: u64) -> (Arc<bayesfp::Dataset>, Vec<Feature>, EnumerableUniverse) {
    let xs = positive_predictors(n, 3, seed);
    let noise = gaussian_noise(n, 0.5, seed);
    let y: Vec<f64> = (0..n)
        .map(|i| 1.0 + xs[0][i].sqrt() + 0.5 * xs[1][i] - 0.3 * xs[2][i].ln() + noise[i])
        .collect();
    let ds = Arc::new(continuous_dataset(&xs, Response::gaussian(y.clone())));
    let s1 = 1.0 + LN2;
    let s2 = 1.0 + 4f64.ln();
    type Spec = (usize, Transform, fn(f64) -> f64, f64);
    let specs: [Spec; 10] = [
        (0, Transform::IDENTITY, |x| x, 1.0),
        (0, Transform::simple(Power::Half), |x| x.sqrt(), s1),
        (0, Transform::simple(Power::Log), |x| x.ln(), s1),
        (0, Transform::new(Power::Half, true), |x| x.sqrt() * x.ln(), s2),
        (1, Transform::IDENTITY, |x| x, 1.0),
        (1, Transform::simple(Power::NegOne), |x| 1.0 / x, s1),
        (1, Transform::simple(Power::Two), |x| x * x, s1),
        (2, Transform::IDENTITY, |x| x, 1.0),
        (2, Transform::simple(Power::Log), |x| x.ln(), s1),
        (2, Transform::new(Power::Log, true), |x| x.ln() * x.ln(), s2),
    ];
    let features = specs.iter().map(|(j, t, _, _)| Feature::single(*j, *t)).collect();
    let oracle = EnumerableUniverse {
        features: specs
            .iter()
            .map(|(j, _, f, cost)| OracleFeature {
                column: xs[*j].iter().map(|&v| f(v)).collect(),
                predictors: vec![*j],
                cost: *cost,
            })
            .collect(),
        y,
    };
    (ds, features, oracle)
}

pub fn model_of(mask: u32, features: &[Feature]) -> Model {
    Model::new(
        (0..features.len())
            .filter(|k| mask & (1 << k) != 0)
            .map(|k| features[k].clone())
            .collect(),
    )
}

/// The search universe holding exactly the ten features.
pub fn ten_feature_universe(features: &[Feature]) -> FeatureUniverse {
    let mut allowed = vec![Vec::new(); 3];
    for f in features {
        let fa = &f.factors()[0];
        allowed[fa.predictor].push(fa.transform);
    }
    FeatureUniverse {
        order1: features.to_vec(),
        allowed,
        order_cap: 1,
    }
}
