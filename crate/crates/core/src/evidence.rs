//! Model prior, BIC-form marginal likelihood, PIC and the shared evidence cache.

use std::collections::BTreeMap;
use std::sync::Arc;

use dashmap::DashMap;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Family};
use crate::likelihoods::{fit_cox, fit_gaussian, fit_logistic, FitControl, FitError, FitResult};
use crate::linalg::Matrix;
use crate::transforms::{ColumnCache, Feature, TransformClass, TransformError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    /// Maximum number of terms.
    pub q: usize,
    /// Maximum number of terms using any one predictor; `None` is unbounded.
    pub d: Option<usize>,
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
    /// Maximum number of factors in a feature.
    pub max_order: usize,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            q: 20,
            d: Some(2),
            s0: 1.0,
            s1: 1.0 + 2f64.ln(),
            s2: 1.0 + 4f64.ln(),
            max_order: 1,
        }
    }
}

impl PriorConfig {
    pub fn penalty(&self, class: TransformClass) -> f64 {
        match class {
            TransformClass::F0 => self.s0,
            TransformClass::F1 => self.s1,
            TransformClass::F2 => self.s2,
        }
    }

    /// Sum of the class penalties of a feature's factors.
    pub fn feature_penalty(&self, f: &Feature) -> f64 {
        f.factors()
            .iter()
            .map(|fa| self.penalty(fa.transform.class()))
            .sum()
    }
}

/// A set of included features, kept sorted and duplicate free.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Model {
    features: Vec<Feature>,
}

impl Model {
    pub fn new(mut features: Vec<Feature>) -> Self {
        features.sort();
        features.dedup();
        Model { features }
    }

    pub fn null() -> Self {
        Model::default()
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn contains(&self, f: &Feature) -> bool {
        self.features.binary_search(f).is_ok()
    }

    pub fn labels<S: AsRef<str>>(&self, names: &[S]) -> Vec<String> {
        let mut labels: Vec<String> = self.features.iter().map(|f| f.label(names)).collect();
        labels.sort();
        labels
    }

    /// Stable string key: sorted feature labels joined by `+`.
    pub fn signature<S: AsRef<str>>(&self, names: &[S]) -> String {
        self.labels(names).join("+")
    }
}

/// Log prior of a model; `-inf` when a constraint excludes it.
pub fn log_model_prior(m: &Model, cfg: &PriorConfig, n: usize) -> f64 {
    if m.len() > cfg.q || m.features().iter().any(|f| f.order() > cfg.max_order) {
        return f64::NEG_INFINITY;
    }
    if let Some(d) = cfg.d {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for j in m.features().iter().flat_map(|f| f.predictors()) {
            *counts.entry(j).or_default() += 1;
        }
        if counts.values().any(|&c| c > d) {
            return f64::NEG_INFINITY;
        }
    }
    let ln_n = (n as f64).ln();
    -m.features()
        .iter()
        .map(|f| cfg.feature_penalty(f))
        .sum::<f64>()
        * ln_n
}

/// BIC-form log marginal likelihood: `loglik - |m|/2 log n`.
pub fn log_marginal_likelihood(fit: &FitResult, m: &Model, n: usize) -> f64 {
    fit.loglik - m.len() as f64 / 2.0 * (n as f64).ln()
}

/// `-2 loglik + (|m| + Σ 2 s_k) log n`.
pub fn pic(fit: &FitResult, m: &Model, cfg: &PriorConfig, n: usize) -> f64 {
    let p = m.len() as f64
        + m.features()
            .iter()
            .map(|f| 2.0 * cfg.feature_penalty(f))
            .sum::<f64>();
    -2.0 * fit.loglik + p * (n as f64).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub log_prior: f64,
    pub log_marglik: f64,
    #[serde(skip)]
    pub fit: Option<Arc<FitResult>>,
}

impl Evidence {
    pub fn excluded() -> Self {
        Evidence {
            log_prior: f64::NEG_INFINITY,
            log_marglik: f64::NEG_INFINITY,
            fit: None,
        }
    }

    pub fn log_posterior(&self) -> f64 {
        if self.log_prior == f64::NEG_INFINITY || self.log_marglik == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.log_prior + self.log_marglik
        }
    }

    pub fn is_valid(&self) -> bool {
        self.log_posterior().is_finite()
    }
}

/// Anything that can score a model; the search only needs this.
pub trait Scorer: Sync {
    fn evaluate(&self, m: &Model) -> Arc<Evidence>;
}

#[derive(Debug, thiserror::Error)]
pub enum DesignError {
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

/// Design matrix of a model on `ds`: intercept (unless Cox) then features in model order.
pub fn design_matrix(m: &Model, ds: &Dataset, cache: Option<&ColumnCache>) -> Result<Matrix, TransformError> {
    let n = ds.n();
    let mut cols: Vec<Arc<Vec<f64>>> = Vec::with_capacity(m.len() + 1);
    if ds.family().has_intercept() {
        cols.push(Arc::new(vec![1.0; n]));
    }
    for f in m.features() {
        cols.push(match cache {
            Some(c) => c.get_or_eval(f, ds)?,
            None => Arc::new(crate::transforms::evaluate_feature(f, ds)?),
        });
    }
    let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
    Ok(Matrix::from_columns(n, &refs).expect("feature columns have n rows"))
}

/// Maximum-likelihood fit of a model on `ds`.
pub fn fit_model(
    m: &Model,
    ds: &Dataset,
    cache: Option<&ColumnCache>,
    ctl: FitControl,
) -> Result<FitResult, DesignError> {
    let x = design_matrix(m, ds, cache)?;
    let resp = ds.response();
    let fit = match ds.family() {
        Family::Gaussian => fit_gaussian(&x, &resp.y)?,
        Family::Bernoulli => fit_logistic(&x, &resp.y, ctl)?,
        Family::TimeToEvent => fit_cox(&x, &resp.y, resp.events(), ctl)?,
    };
    Ok(fit)
}

/// Scores models on one dataset and memoizes the results.
#[derive(Debug)]
pub struct ModelEvaluator {
    ds: Arc<Dataset>,
    prior: PriorConfig,
    control: FitControl,
    columns: ColumnCache,
    cache: DashMap<Model, Arc<Evidence>>,
}

impl ModelEvaluator {
    pub fn new(ds: Arc<Dataset>, prior: PriorConfig) -> Self {
        ModelEvaluator {
            ds,
            prior,
            control: FitControl::default(),
            columns: ColumnCache::new(),
            cache: DashMap::new(),
        }
    }

    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.ds
    }

    pub fn prior(&self) -> &PriorConfig {
        &self.prior
    }

    pub fn cached_models(&self) -> usize {
        self.cache.len()
    }

    pub fn is_cached(&self, m: &Model) -> bool {
        self.cache.contains_key(m)
    }

    fn compute(&self, m: &Model) -> Evidence {
        let n = self.ds.n();
        let log_prior = log_model_prior(m, &self.prior, n);
        if log_prior == f64::NEG_INFINITY {
            return Evidence::excluded();
        }
        match fit_model(m, &self.ds, Some(&self.columns), self.control) {
            Ok(fit) if fit.converged => Evidence {
                log_prior,
                log_marglik: log_marginal_likelihood(&fit, m, n),
                fit: Some(Arc::new(fit)),
            },
            // Separated or failed fits are visited but scored out.
            _ => Evidence {
                log_prior,
                log_marglik: f64::NEG_INFINITY,
                fit: None,
            },
        }
    }
}

impl Scorer for ModelEvaluator {
    fn evaluate(&self, m: &Model) -> Arc<Evidence> {
        if let Some(e) = self.cache.get(m) {
            return e.clone();
        }
        // Computed outside the map lock; a racing duplicate is simply dropped.
        let e = Arc::new(self.compute(m));
        self.cache.entry(m.clone()).or_insert(e).clone()
    }
}
