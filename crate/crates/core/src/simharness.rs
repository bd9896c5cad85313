//! The modified ART simulation: response generation from the known
//! fractional-polynomial truth, the noise grid, replicate orchestration and
//! TPR/FDR aggregation.

use std::collections::BTreeSet;
use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{ColumnSpec, DataError, Dataset, Response, Schema, SchemaKind};
use crate::evidence::{Model, ModelEvaluator, Scorer};
use crate::metrics::selection_rates;
use crate::posterior::{renormalize, PosteriorError};
use crate::rng::chain_rng;
use crate::search::{run_parallel, SearchConfig, SearchError};
use crate::transforms::{enumerate_terms, feature_variables, Feature, TransformError};

/// The nine true terms, all with coefficient 1.
pub const ART_TRUTH: [&str; 9] = [
    "x1^(0.5)",
    "x1",
    "x3^(-0.5)",
    "x3^(-0.5)*log(x3)",
    "x4a",
    "x5^(-1)",
    "log(x6)",
    "x8",
    "x10",
];

/// Offset inside the logarithms of the true model.
pub const LOG_EPSILON: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("ART column `{0}` missing from predictor data")]
    MissingColumn(&'static str),
    #[error("row {row}: true mean is not finite")]
    NonFinite { row: usize },
    #[error("noise variance must be positive, got {0}")]
    Variance(f64),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Posterior(#[from] PosteriorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Column kinds of the ART predictor file; x4 is ordered and x9 unordered,
/// both with levels 1, 2, 3 and level 1 as baseline.
pub fn art_schema() -> Schema {
    let levels = || ColumnSpec::Levels {
        kind: SchemaKind::Categorical,
        levels: vec!["1".into(), "2".into(), "3".into()],
    };
    let mut s = Schema::new();
    for c in ["x1", "x3", "x5", "x6", "x7", "x10"] {
        s.insert(c.into(), ColumnSpec::Kind(SchemaKind::Continuous));
    }
    for b in ["x2", "x8"] {
        s.insert(b.into(), ColumnSpec::Kind(SchemaKind::Binary));
    }
    s.insert("x4".into(), levels());
    s.insert("x9".into(), levels());
    s
}

pub fn truth_features(ds: &Dataset) -> Result<Vec<Feature>, TransformError> {
    let names = ds.names();
    ART_TRUTH.iter().map(|l| Feature::parse(l, &names)).collect()
}

/// Variables (source names) of the true model.
pub fn truth_variables() -> BTreeSet<String> {
    ["x1", "x3", "x4", "x5", "x6", "x8", "x10"]
        .into_iter()
        .map(String::from)
        .collect()
}

fn column<'a>(ds: &'a Dataset, name: &'static str) -> Result<&'a [f64], SimError> {
    ds.column_index(name)
        .map(|j| ds.columns()[j].values.as_slice())
        .ok_or(SimError::MissingColumn(name))
}

/// `E[y | x]` under the true model, evaluated directly.
pub fn true_mean(ds: &Dataset) -> Result<Vec<f64>, SimError> {
    let x1 = column(ds, "x1")?;
    let x3 = column(ds, "x3")?;
    let x4a = column(ds, "x4a")?;
    let x5 = column(ds, "x5")?;
    let x6 = column(ds, "x6")?;
    let x8 = column(ds, "x8")?;
    let x10 = column(ds, "x10")?;
    (0..ds.n())
        .map(|i| {
            let v = x1[i].sqrt()
                + x1[i]
                + x3[i].powf(-0.5)
                + x3[i].powf(-0.5) * (x3[i] + LOG_EPSILON).ln()
                + x4a[i]
                + 1.0 / x5[i]
                + (x6[i] + LOG_EPSILON).ln()
                + x8[i]
                + x10[i];
            if v.is_finite() {
                Ok(v)
            } else {
                Err(SimError::NonFinite { row: i })
            }
        })
        .collect()
}

/// Predictors with a fresh Gaussian response `y = E[y | x] + N(0, sigma2)`.
pub fn generate_response(predictors: &Dataset, sigma2: f64, seed: u64) -> Result<Dataset, SimError> {
    if !(sigma2 > 0.0) {
        return Err(SimError::Variance(sigma2));
    }
    let mean = true_mean(predictors)?;
    let noise = Normal::new(0.0, sigma2.sqrt()).map_err(|_| SimError::Variance(sigma2))?;
    let mut rng = chain_rng(seed, 0);
    let y = mean.iter().map(|m| m + noise.sample(&mut rng)).collect();
    Ok(predictors.with_response(Response::gaussian(y))?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioGrid {
    pub variances: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
}

impl ScenarioGrid {
    /// Five noise levels, ten replicates.
    pub fn desk(seed: u64) -> Self {
        ScenarioGrid {
            variances: vec![10.0, 1.0, 0.01, 1e-4, 1e-10],
            replicates: 10,
            seed,
        }
    }

    /// All sixteen noise levels.
    pub fn full(seed: u64) -> Self {
        ScenarioGrid {
            variances: vec![
                100.0, 50.0, 25.0, 10.0, 5.0, 1.0, 0.1, 0.01, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9,
                1e-10,
            ],
            replicates: 10,
            seed,
        }
    }
}

/// Independent 64-bit seed for replicate `rep` of scenario `k`.
pub fn derive_seed(base: u64, k: usize, rep: usize) -> u64 {
    chain_rng(base, ((k as u64) << 32) | rep as u64).random()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub sigma2: f64,
    pub replicate: usize,
    pub tpr_f: f64,
    pub fdr_f: f64,
    pub tpr_v: f64,
    pub fdr_v: f64,
    pub best_lp: f64,
    pub true_lp: f64,
    /// Whether the true model was among the visited models.
    pub true_visited: bool,
    pub mpm: Vec<String>,
}

/// One search on one simulated data set.
pub fn run_replicate(
    predictors: &Dataset,
    sigma2: f64,
    replicate: usize,
    noise_seed: u64,
    cfg: &SearchConfig,
    ideal: bool,
) -> Result<ReplicateResult, SimError> {
    let ds = Arc::new(generate_response(predictors, sigma2, noise_seed)?);
    let truth = truth_features(&ds)?;
    let mut cfg = cfg.clone();
    if ideal {
        cfg.pinned = ART_TRUTH.iter().map(|s| s.to_string()).collect();
    }
    cfg.validate()?;
    let pinned = cfg.resolve_pinned(&ds)?;
    let evaluator = ModelEvaluator::new(ds.clone(), cfg.prior());
    let universe = enumerate_terms(&ds, cfg.max_order, cfg.transform_set);
    let log = run_parallel(&evaluator, &universe, &cfg, &pinned, ds.n());
    let summary = renormalize(&log, &ds)?;
    let names = ds.names();
    let truth_model = Model::new(truth);
    let true_lp = evaluator.evaluate(&truth_model).log_posterior();
    let selected: BTreeSet<String> = summary.mpm.labels(&names).into_iter().collect();
    let truth_labels: BTreeSet<String> = truth_model.labels(&names).into_iter().collect();
    let functional = selection_rates(&selected, &truth_labels);
    let vars: BTreeSet<String> = summary
        .mpm
        .features()
        .iter()
        .flat_map(|f| feature_variables(f, &ds))
        .collect();
    let variable = selection_rates(&vars, &truth_variables());
    Ok(ReplicateResult {
        sigma2,
        replicate,
        tpr_f: functional.tpr,
        fdr_f: functional.fdr,
        tpr_v: variable.tpr,
        fdr_v: variable.fdr,
        best_lp: log.best().map_or(f64::NEG_INFINITY, |(_, lp)| lp),
        true_lp,
        true_visited: log.contains(&truth_model),
        mpm: summary.mpm.labels(&names),
    })
}

/// Every (noise level, replicate) pair of the grid; results are ordered by
/// grid position regardless of completion order.
pub fn run_scenario(
    predictors: &Dataset,
    grid: &ScenarioGrid,
    cfg: &SearchConfig,
    ideal: bool,
) -> Result<Vec<ReplicateResult>, SimError> {
    let jobs: Vec<(usize, f64, usize)> = grid
        .variances
        .iter()
        .enumerate()
        .flat_map(|(k, &s2)| (0..grid.replicates).map(move |r| (k, s2, r)))
        .collect();
    jobs.par_iter()
        .map(|&(k, s2, r)| {
            let mut c = cfg.clone();
            c.seed = derive_seed(cfg.seed, k, r);
            run_replicate(predictors, s2, r, derive_seed(grid.seed, k, r), &c, ideal)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub sigma2: f64,
    pub replicates: usize,
    pub tpr_f: f64,
    pub fdr_f: f64,
    pub tpr_v: f64,
    pub fdr_v: f64,
}

/// Mean rates per noise level, in order of first appearance.
pub fn aggregate(results: &[ReplicateResult]) -> Vec<ScenarioSummary> {
    let mut levels: Vec<f64> = Vec::new();
    for r in results {
        if !levels.contains(&r.sigma2) {
            levels.push(r.sigma2);
        }
    }
    levels
        .into_iter()
        .map(|s2| {
            let rows: Vec<&ReplicateResult> = results.iter().filter(|r| r.sigma2 == s2).collect();
            let mean = |f: fn(&ReplicateResult) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / rows.len() as f64;
            ScenarioSummary {
                sigma2: s2,
                replicates: rows.len(),
                tpr_f: mean(|r| r.tpr_f),
                fdr_f: mean(|r| r.fdr_f),
                tpr_v: mean(|r| r.tpr_v),
                fdr_v: mean(|r| r.fdr_v),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub sigma2: f64,
    pub best_lp: f64,
    pub true_lp: f64,
}

/// Per noise level, the best visited log posterior over replicates next to
/// the true model's log posterior on the same replicate.
pub fn best_posterior_trace(results: &[ReplicateResult]) -> Vec<TracePoint> {
    aggregate(results)
        .iter()
        .map(|s| {
            let best = results
                .iter()
                .filter(|r| r.sigma2 == s.sigma2)
                .max_by(|a, b| a.best_lp.total_cmp(&b.best_lp))
                .expect("every level has a replicate");
            TracePoint {
                sigma2: s.sigma2,
                best_lp: best.best_lp,
                true_lp: best.true_lp,
            }
        })
        .collect()
}

pub fn write_results_csv<W: Write>(results: &[ReplicateResult], w: W) -> Result<(), SimError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["sigma2", "replicate", "tpr_f", "fdr_f", "tpr_v", "fdr_v", "best_lp", "true_lp"])?;
    for r in results {
        out.write_record([
            r.sigma2.to_string(),
            r.replicate.to_string(),
            r.tpr_f.to_string(),
            r.fdr_f.to_string(),
            r.tpr_v.to_string(),
            r.fdr_v.to_string(),
            r.best_lp.to_string(),
            r.true_lp.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_trace_csv<W: Write>(trace: &[TracePoint], w: W) -> Result<(), SimError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["sigma2", "best_lp", "true_lp"])?;
    for t in trace {
        out.write_record([t.sigma2.to_string(), t.best_lp.to_string(), t.true_lp.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Synthetic stand-in for the ART predictor matrix: ten correlated
/// breast-cancer-like variables drawn through a two-factor Gaussian copula.
/// Returns CSV text with columns x1..x10.
pub fn synthesize_art_predictors(n: usize, seed: u64) -> String {
    let mut rng = chain_rng(seed, 0);
    let mut z = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut out = String::from("x1,x2,x3,x4,x5,x6,x7,x8,x9,x10\n");
    for _ in 0..n {
        let (age, tumour) = (z(), z());
        let mix = |a: f64, f: f64, e: f64| a * f + (1.0 - a * a).sqrt() * e;
        let x1 = (53.0 + 10.0 * mix(0.9, age, z())).clamp(21.0, 80.0);
        let x2 = u8::from(mix(0.8, age, z()) > 0.0);
        let x3 = (3.0 + 0.55 * mix(0.5, tumour, z())).exp().clamp(3.0, 120.0);
        let g = mix(0.5, tumour, z());
        let x4 = if g < -1.036 { 1 } else if g < 0.674 { 2 } else { 3 };
        let x5 = 1.0 + (0.8 + 0.9 * mix(0.6, tumour, z())).exp().floor();
        let h = mix(-0.3, tumour, z());
        let x6 = if h < -0.674 { 0.0 } else { (3.5 + 1.5 * z()).exp().min(2500.0) };
        let e = mix(0.6, h, z());
        let x7 = if e < -1.28 { 0.0 } else { (3.8 + 1.2 * z()).exp().min(2000.0) };
        let x8 = u8::from(mix(-0.3, tumour, z()) > 0.385);
        let u = z();
        let x9 = if u < -0.253 { 1 } else if u < 0.674 { 2 } else { 3 };
        let x10 = z();
        out.push_str(&format!(
            "{x1:.1},{x2},{x3:.1},{x4},{x5},{x6:.1},{x7:.1},{x8},{x9},{x10:.4}\n"
        ));
    }
    out
}
