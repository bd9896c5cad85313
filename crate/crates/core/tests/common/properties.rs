//! Randomized invariants shared by the `properties` test target and the
//! acceptance suite. Each check runs `CASES` generated inputs.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use bayesfp::data::{split, Column, ColumnKind, Dataset, Response};
use bayesfp::evidence::{fit_model, log_model_prior, pic, Evidence, Model, ModelEvaluator, PriorConfig, Scorer};
use bayesfp::likelihoods::{cox_loglik, cox_score, logistic_loglik, logistic_score, FitControl};
use bayesfp::linalg::Matrix;
use bayesfp::metrics::{concordance_index, CensoringModel};
use bayesfp::posterior::renormalize;
use bayesfp::search::{gmjmcmc, SearchConfig, VisitLog};
use bayesfp::transforms::{
    apply_transform, enumerate_terms, required_shift, Factor, Feature, Power, Transform, TransformSet,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

pub const CASES: u32 = 100;

fn runner() -> TestRunner {
    TestRunner::new(Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    })
}

fn transform() -> impl Strategy<Value = Transform> {
    (0usize..8, any::<bool>()).prop_map(|(p, l)| {
        let power = Power::ALL[p];
        if power == Power::One && !l {
            Transform::IDENTITY
        } else {
            Transform::new(power, l)
        }
    })
}

fn feature(predictors: usize, max_order: usize) -> impl Strategy<Value = Feature> {
    prop::collection::vec((0..predictors, transform()), 1..=max_order).prop_filter_map("repeated predictor", |fs| {
        Feature::from_factors(
            fs.into_iter()
                .map(|(predictor, transform)| Factor { predictor, transform })
                .collect(),
        )
    })
}

fn model(predictors: usize, max_order: usize, max_len: usize) -> impl Strategy<Value = Model> {
    prop::collection::vec(feature(predictors, max_order), 0..=max_len).prop_map(Model::new)
}

/// Small Gaussian data set with three positive predictors.
fn gaussian_data() -> impl Strategy<Value = Dataset> {
    (20usize..40)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(prop::collection::vec(0.2f64..6.0, n), 3),
                prop::collection::vec(-1.0f64..1.0, n),
            )
        })
        .prop_map(|(xs, noise)| {
            let y: Vec<f64> = (0..noise.len())
                .map(|i| xs[0][i].sqrt() + 0.5 * xs[1][i] + noise[i])
                .collect();
            let cols = xs
                .into_iter()
                .enumerate()
                .map(|(j, x)| Column::new(&format!("x{}", j + 1), x, ColumnKind::Continuous))
                .collect();
            Dataset::new(cols, Response::gaussian(y)).unwrap()
        })
}

/// Adding a feature never raises the log prior, and an admissible model's
/// prior equals minus its summed penalties times `log n`.
pub fn prior_monotonicity() -> Result<(), String> {
    let prior = PriorConfig {
        q: 8,
        d: Some(3),
        max_order: 3,
        ..PriorConfig::default()
    };
    runner()
        .run(&(model(4, 3, 6), feature(4, 3), 10usize..5000), |(m, extra, n)| {
            let base = log_model_prior(&m, &prior, n);
            let mut fs = m.features().to_vec();
            fs.push(extra);
            let bigger = Model::new(fs);
            prop_assert!(log_model_prior(&bigger, &prior, n) <= base);
            if base.is_finite() {
                let direct: f64 = -m.features().iter().map(|f| prior.feature_penalty(f)).sum::<f64>() * (n as f64).ln();
                prop_assert!((base - direct).abs() <= 1e-9 * (1.0 + direct.abs()));
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

/// `PIC = -2 (log marginal likelihood + log prior)` for every admissible fitted model.
pub fn pic_duality() -> Result<(), String> {
    let prior = PriorConfig::default();
    runner()
        .run(&(gaussian_data(), model(3, 1, 3)), |(ds, m)| {
            let n = ds.n();
            let Ok(fit) = fit_model(&m, &ds, None, FitControl::default()) else {
                return Ok(());
            };
            let lp = log_model_prior(&m, &prior, n);
            if !lp.is_finite() {
                return Ok(());
            }
            let lm = bayesfp::evidence::log_marginal_likelihood(&fit, &m, n);
            let p = pic(&fit, &m, &prior, n);
            prop_assert!((p + 2.0 * (lm + lp)).abs() <= 1e-9 * (1.0 + p.abs()));
            Ok(())
        })
        .map_err(|e| e.to_string())
}

fn central_difference(f: impl Fn(&[f64]) -> f64, beta: &[f64], k: usize) -> f64 {
    let h = 1e-6;
    let mut up = beta.to_vec();
    let mut down = beta.to_vec();
    up[k] += h;
    down[k] -= h;
    (f(&up) - f(&down)) / (2.0 * h)
}

/// Analytic logistic and Cox scores agree with finite differences.
pub fn gradient_checks() -> Result<(), String> {
    let inputs = (10usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(-2.0f64..2.0, n),
            prop::collection::vec(-2.0f64..2.0, n),
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec(0.1f64..5.0, n),
            prop::collection::vec(-1.5f64..1.5, 3),
        )
    });
    runner()
        .run(&inputs, |(x1, x2, flags, times, beta)| {
            let n = x1.len();
            let ones = vec![1.0; n];
            let y: Vec<f64> = flags.iter().map(|&b| f64::from(u8::from(b))).collect();
            let design = Matrix::from_columns(n, &[ones, x1.clone(), x2.clone()]).unwrap();
            let score = logistic_score(&design, &y, &beta);
            for (k, s) in score.iter().enumerate() {
                let fd = central_difference(|b| logistic_loglik(&design, &y, b), &beta, k);
                prop_assert!((s - fd).abs() <= 1e-5 * (1.0 + fd.abs()), "logistic {k}: {s} vs {fd}");
            }
            let cox_design = Matrix::from_columns(n, &[x1, x2]).unwrap();
            let b = &beta[..2];
            let score = cox_score(&cox_design, &times, &flags, b);
            for (k, s) in score.iter().enumerate() {
                let fd = central_difference(|bb| cox_loglik(&cox_design, &times, &flags, bb), b, k);
                prop_assert!((s - fd).abs() <= 1e-5 * (1.0 + fd.abs()), "cox {k}: {s} vs {fd}");
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

/// The concordance index depends on the linear predictor only through its ranks.
pub fn cindex_transform_invariance() -> Result<(), String> {
    let inputs = (8usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(-3.0f64..3.0, n),
            prop::collection::vec(1u32..20, n),
            prop::collection::vec(prop::bool::weighted(0.6), n),
            0.1f64..3.0,
        )
    });
    runner()
        .run(&inputs, |(lp, t, status, scale)| {
            let times: Vec<f64> = t.iter().map(|&v| f64::from(v)).collect();
            let cens = CensoringModel::fit(&times, &status);
            let Ok(base) = concordance_index(&lp, &times, &status, &cens) else {
                return Ok(());
            };
            let mapped: Vec<f64> = lp.iter().map(|v| (scale * v).exp() + 2.0).collect();
            let other = concordance_index(&mapped, &times, &status, &cens).unwrap();
            prop_assert!((base.value - other.value).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&base.value));
            Ok(())
        })
        .map_err(|e| e.to_string())
}

/// Renormalized weights are a probability vector and inclusion probabilities
/// lie in [0, 1].
pub fn weight_normalization() -> Result<(), String> {
    let inputs = (gaussian_data(), prop::collection::vec(model(3, 1, 3), 1..12));
    runner()
        .run(&inputs, |(ds, models)| {
            let ds = Arc::new(ds);
            let ev = ModelEvaluator::new(ds.clone(), PriorConfig::default());
            let log: VisitLog = models
                .into_iter()
                .map(|m| {
                    let e = ev.evaluate(&m);
                    (m, e)
                })
                .collect();
            let Ok(summary) = renormalize(&log, &ds) else {
                return Ok(());
            };
            let total: f64 = summary.models.iter().map(|w| w.weight).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(summary.models.iter().all(|w| w.weight >= 0.0));
            prop_assert!(summary.inclusion.values().all(|p| (0.0..=1.0 + 1e-12).contains(p)));
            Ok(())
        })
        .map_err(|e| e.to_string())
}

fn table_log(models: Vec<(Model, f64)>) -> VisitLog {
    models
        .into_iter()
        .map(|(m, lp)| {
            (
                m,
                Arc::new(Evidence {
                    log_prior: 0.0,
                    log_marglik: lp,
                    fit: None,
                }),
            )
        })
        .collect()
}

/// Merging is idempotent and order-independent in content.
pub fn merge_idempotence() -> Result<(), String> {
    let entries = || prop::collection::vec((model(4, 2, 3), -50.0f64..0.0), 0..15);
    runner()
        .run(&(entries(), entries()), |(a, b)| {
            let la = table_log(a);
            let lb = table_log(b);
            let mut self_merge = la.clone();
            self_merge.merge(la.clone());
            prop_assert_eq!(&self_merge, &la);
            // Evidence is keyed by model, so only compare model sets across logs.
            let mut ab = la.clone();
            ab.merge(lb.clone());
            let mut ba = lb.clone();
            ba.merge(la.clone());
            let keys = |l: &VisitLog| l.iter().map(|(m, _)| m.clone()).collect::<BTreeSet<_>>();
            prop_assert_eq!(keys(&ab), keys(&ba));
            let mut twice = ab.clone();
            twice.merge(lb);
            prop_assert_eq!(twice, ab);
            Ok(())
        })
        .map_err(|e| e.to_string())
}

/// Two chains with the same seed visit the same models with the same evidence.
pub fn determinism() -> Result<(), String> {
    runner()
        .run(&(gaussian_data(), any::<u64>()), |(ds, seed)| {
            let ds = Arc::new(ds);
            let cfg = SearchConfig {
                population_size: 5,
                q: 4,
                n_init: 10,
                n_expl: 10,
                n_final: 20,
                n_populations: 3,
                seed,
                ..SearchConfig::default()
            };
            let universe = enumerate_terms(&ds, 1, TransformSet::Fp1);
            let run = || {
                let ev = ModelEvaluator::new(ds.clone(), cfg.prior());
                gmjmcmc(&ev, &universe, &cfg, &[], ds.n(), 0)
            };
            let (a, b) = (run(), run());
            prop_assert_eq!(a.len(), b.len());
            for ((ma, ea), (mb, eb)) in a.iter().zip(b.iter()) {
                prop_assert_eq!(ma, mb);
                prop_assert!(ea.log_posterior().to_bits() == eb.log_posterior().to_bits());
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

/// Every transform of a shifted column is finite for moderate inputs.
pub fn transforms_finite() -> Result<(), String> {
    let inputs = (prop::collection::vec(-1e3f64..1e3, 1..30), transform());
    runner()
        .run(&inputs, |(x, t)| {
            let shift = required_shift(&x);
            let out = apply_transform(&x, t, shift).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert!(out.iter().all(|v| v.is_finite()));
            prop_assert_eq!(out.len(), x.len());
            Ok(())
        })
        .map_err(|e| e.to_string())
}

/// Features and models are canonical: factor and feature order do not matter.
pub fn order_invariance() -> Result<(), String> {
    let inputs = (
        prop::collection::vec((0usize..6, transform()), 1..4),
        prop::collection::vec(feature(5, 2), 0..6),
        any::<u64>(),
    );
    runner()
        .run(&inputs, |(factors, features, seed)| {
            let fs: Vec<Factor> = factors
                .into_iter()
                .map(|(predictor, transform)| Factor { predictor, transform })
                .collect();
            let mut rev = fs.clone();
            rev.reverse();
            prop_assert_eq!(Feature::from_factors(fs), Feature::from_factors(rev));
            let mut shuffled = features.clone();
            let k = if shuffled.is_empty() { 0 } else { (seed as usize) % shuffled.len() };
            shuffled.rotate_left(k);
            shuffled.reverse();
            prop_assert_eq!(Model::new(features), Model::new(shuffled));
            Ok(())
        })
        .map_err(|e| e.to_string())
}

/// A split partitions the rows.
pub fn split_partition() -> Result<(), String> {
    let inputs = (4usize..60, 0.1f64..0.9, any::<u64>(), any::<bool>());
    runner()
        .run(&inputs, |(n, frac, seed, stratify)| {
            let ids: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let status: Vec<bool> = (0..n).map(|i| i % 3 != 0).collect();
            let times: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
            let ds = Dataset::new(
                vec![Column::new("id", ids, ColumnKind::Continuous)],
                Response::survival(times, status),
            )
            .unwrap();
            let Ok((train, test)) = split(&ds, frac, seed, stratify) else {
                return Ok(());
            };
            let mut all: Vec<f64> = train.columns()[0].values.clone();
            all.extend(&test.columns()[0].values);
            all.sort_by(f64::total_cmp);
            prop_assert_eq!(all, (0..n).map(|i| i as f64).collect::<Vec<_>>());
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub type Check = (&'static str, fn() -> Result<(), String>);

pub const ALL: [Check; 10] = [
    ("prior monotonicity", prior_monotonicity),
    ("PIC/posterior duality", pic_duality),
    ("gradient checks", gradient_checks),
    ("C-index transform invariance", cindex_transform_invariance),
    ("weight normalization", weight_normalization),
    ("merge idempotence", merge_idempotence),
    ("determinism under fixed seeds", determinism),
    ("transforms finite", transforms_finite),
    ("feature order invariance", order_invariance),
    ("split partition", split_partition),
];
