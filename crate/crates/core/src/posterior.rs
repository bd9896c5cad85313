//! Posterior summaries over the visited models: weights, inclusion
//! probabilities, the median probability model, predictions and survival curves.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Column, ColumnKind, Dataset, Family};
use crate::evidence::{design_matrix, fit_model, DesignError, Model};
use crate::likelihoods::FitControl;
use crate::search::VisitLog;
use crate::transforms::{ColumnCache, Feature, TransformError};

#[derive(Debug, Error)]
pub enum PosteriorError {
    #[error("no valid models visited")]
    NoValidModels,
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error("model {0} has no fitted coefficients")]
    MissingFit(String),
    #[error("survival curves need a time-to-event dataset")]
    NotSurvival,
    #[error("report is for family {report:?}, data is {data:?}")]
    FamilyMismatch { report: Family, data: Family },
    #[error("column `{0}` in the data does not match the report")]
    ColumnMismatch(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedModel {
    pub model: Model,
    pub weight: f64,
    pub log_marglik: f64,
    pub log_prior: f64,
    pub coefficients: Option<Vec<f64>>,
}

impl WeightedModel {
    pub fn log_posterior(&self) -> f64 {
        self.log_marglik + self.log_prior
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub family: Family,
    /// Models with positive weight, heaviest first.
    pub models: Vec<WeightedModel>,
    pub inclusion: BTreeMap<Feature, f64>,
    /// Keyed by source variable name.
    pub variable_inclusion: BTreeMap<String, f64>,
    pub mpm: Model,
    pub mpm_coefficients: Option<Vec<f64>>,
    pub best: Model,
}

/// Posterior weights over the finite-evidence models of `log`. `train` is the
/// data the log was scored on; it names variables and refits the median
/// probability model when that model was never visited.
pub fn renormalize(log: &VisitLog, train: &Dataset) -> Result<PosteriorSummary, PosteriorError> {
    let entries: Vec<(&Model, f64, &crate::evidence::Evidence)> = log
        .iter()
        .map(|(m, e)| (m, e.log_posterior(), e.as_ref()))
        .filter(|(_, lp, _)| lp.is_finite())
        .collect();
    let max = entries
        .iter()
        .map(|(_, lp, _)| *lp)
        .reduce(f64::max)
        .ok_or(PosteriorError::NoValidModels)?;
    let total: f64 = entries.iter().map(|(_, lp, _)| (lp - max).exp()).sum();
    let mut models: Vec<WeightedModel> = entries
        .iter()
        .map(|(m, lp, e)| WeightedModel {
            model: (*m).clone(),
            weight: (lp - max).exp() / total,
            log_marglik: e.log_marglik,
            log_prior: e.log_prior,
            coefficients: e.fit.as_ref().map(|f| f.coefficients.clone()),
        })
        .filter(|w| w.weight > 0.0)
        .collect();
    // Best model: heaviest; ties resolved by model order (entries are sorted).
    let best = entries
        .iter()
        .fold(None::<(&Model, f64)>, |acc, (m, lp, _)| match acc {
            Some((_, b)) if b >= *lp => acc,
            _ => Some((m, *lp)),
        })
        .map(|(m, _)| m.clone())
        .unwrap_or_default();
    models.sort_by(|a, b| b.weight.total_cmp(&a.weight).then_with(|| a.model.cmp(&b.model)));
    let (inclusion, variable_inclusion) = inclusion_tables(&models, train.columns());
    let mpm = median_probability_model(&inclusion);
    let mpm_coefficients = match models.iter().find(|w| w.model == mpm) {
        Some(w) => w.coefficients.clone(),
        None => fit_model(&mpm, train, None, FitControl::default())
            .ok()
            .map(|f| f.coefficients),
    };
    Ok(PosteriorSummary {
        family: train.family(),
        models,
        inclusion,
        variable_inclusion,
        mpm,
        mpm_coefficients,
        best,
    })
}

fn inclusion_tables(
    models: &[WeightedModel],
    columns: &[Column],
) -> (BTreeMap<Feature, f64>, BTreeMap<String, f64>) {
    let mut inclusion: BTreeMap<Feature, f64> = BTreeMap::new();
    let mut variables: BTreeMap<String, f64> = columns.iter().map(|c| (c.source.clone(), 0.0)).collect();
    for w in models {
        let mut sources = BTreeSet::new();
        for f in w.model.features() {
            *inclusion.entry(f.clone()).or_default() += w.weight;
            for j in f.predictors() {
                sources.insert(&columns[j].source);
            }
        }
        for s in sources {
            *variables.entry(s.clone()).or_default() += w.weight;
        }
    }
    inclusion.values_mut().for_each(|p| *p = p.min(1.0));
    variables.values_mut().for_each(|p| *p = p.min(1.0));
    (inclusion, variables)
}

/// Features with inclusion probability strictly above 0.5.
pub fn median_probability_model(inclusion: &BTreeMap<Feature, f64>) -> Model {
    Model::new(
        inclusion
            .iter()
            .filter(|(_, &p)| p > 0.5)
            .map(|(f, _)| f.clone())
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionMode {
    #[default]
    #[serde(alias = "model-averaged")]
    Averaged,
    Mpm,
    Best,
}

fn coef(w: &WeightedModel) -> Result<&[f64], PosteriorError> {
    w.coefficients
        .as_deref()
        .ok_or_else(|| PosteriorError::MissingFit(format!("{:?}", w.model)))
}

/// Models and weights used for a prediction mode.
fn predictive_set(
    summary: &PosteriorSummary,
    mode: PredictionMode,
) -> Result<Vec<(&Model, f64, &[f64])>, PosteriorError> {
    match mode {
        PredictionMode::Averaged => summary
            .models
            .iter()
            .map(|w| Ok((&w.model, w.weight, coef(w)?)))
            .collect(),
        PredictionMode::Best => {
            let w = summary
                .models
                .iter()
                .find(|w| w.model == summary.best)
                .ok_or(PosteriorError::NoValidModels)?;
            Ok(vec![(&w.model, 1.0, coef(w)?)])
        }
        PredictionMode::Mpm => {
            let c = summary
                .mpm_coefficients
                .as_deref()
                .ok_or_else(|| PosteriorError::MissingFit(format!("{:?}", summary.mpm)))?;
            Ok(vec![(&summary.mpm, 1.0, c)])
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Gaussian: fitted means; Bernoulli: probabilities of class 1; Cox: linear
/// predictors (log relative risk). `new` must be aligned to the training columns.
pub fn predict(
    summary: &PosteriorSummary,
    new: &Dataset,
    mode: PredictionMode,
) -> Result<Vec<f64>, PosteriorError> {
    let cache = ColumnCache::new();
    let mut out = vec![0.0; new.n()];
    for (model, weight, coef) in predictive_set(summary, mode)? {
        let x = design_matrix(model, new, Some(&cache))?;
        let eta = x.mul_vec(coef);
        for (o, e) in out.iter_mut().zip(eta) {
            *o += weight
                * match summary.family {
                    Family::Bernoulli => sigmoid(e),
                    _ => e,
                };
        }
    }
    Ok(out)
}

/// Class labels `p >= 0.5`.
pub fn classify(probabilities: &[f64]) -> Vec<f64> {
    probabilities
        .iter()
        .map(|&p| if p >= 0.5 { 1.0 } else { 0.0 })
        .collect()
}

/// Breslow cumulative baseline hazard as a step function.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineHazard {
    pub times: Vec<f64>,
    pub cumulative: Vec<f64>,
}

impl BaselineHazard {
    /// `lp` are linear predictors on the training rows.
    pub fn breslow(times: &[f64], status: &[bool], lp: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..times.len()).collect();
        order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
        let risk: Vec<f64> = lp.iter().map(|e| e.exp()).collect();
        // Risk-set sums from the right.
        let mut at_risk = vec![0.0; order.len() + 1];
        for k in (0..order.len()).rev() {
            at_risk[k] = at_risk[k + 1] + risk[order[k]];
        }
        let mut out_t = Vec::new();
        let mut out_h = Vec::new();
        let mut cum = 0.0;
        let mut k = 0;
        while k < order.len() {
            let t = times[order[k]];
            let start = k;
            let mut deaths = 0usize;
            while k < order.len() && times[order[k]] == t {
                if status[order[k]] {
                    deaths += 1;
                }
                k += 1;
            }
            if deaths > 0 {
                cum += deaths as f64 / at_risk[start];
                out_t.push(t);
                out_h.push(cum);
            }
        }
        BaselineHazard {
            times: out_t,
            cumulative: out_h,
        }
    }

    /// Λ₀(t), right-continuous, flat beyond the last event.
    pub fn at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            0.0
        } else {
            self.cumulative[k - 1]
        }
    }
}

/// Model-averaged survival probabilities, one row per subject of `new` and
/// one column per grid time.
pub fn survival_curve(
    summary: &PosteriorSummary,
    train: &Dataset,
    new: &Dataset,
    grid: &[f64],
    mode: PredictionMode,
) -> Result<Vec<Vec<f64>>, PosteriorError> {
    if train.family() != Family::TimeToEvent {
        return Err(PosteriorError::NotSurvival);
    }
    let resp = train.response();
    let train_cache = ColumnCache::new();
    let new_cache = ColumnCache::new();
    let mut out = vec![vec![0.0; grid.len()]; new.n()];
    for (model, weight, coef) in predictive_set(summary, mode)? {
        let lp_train = design_matrix(model, train, Some(&train_cache))?.mul_vec(coef);
        let center = lp_train.iter().sum::<f64>() / lp_train.len() as f64;
        let centered: Vec<f64> = lp_train.iter().map(|v| v - center).collect();
        let base = BaselineHazard::breslow(&resp.y, resp.events(), &centered);
        let hazards: Vec<f64> = grid.iter().map(|&t| base.at(t)).collect();
        let lp_new = design_matrix(model, new, Some(&new_cache))?.mul_vec(coef);
        for (row, lp) in out.iter_mut().zip(lp_new) {
            let rr = (lp - center).exp();
            for (s, h) in row.iter_mut().zip(&hazards) {
                *s += weight * (-h * rr).exp();
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportColumn {
    pub name: String,
    pub kind: ColumnKind,
    pub source: String,
    pub min: f64,
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportModel {
    pub features: Vec<String>,
    pub log_marglik: f64,
    pub log_prior: f64,
    pub weight: f64,
    /// In `features` order, intercept first when the family has one.
    pub coefficients: Vec<f64>,
}

/// Serializable posterior report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub family: Family,
    pub response: String,
    pub columns: Vec<ReportColumn>,
    pub n_visited: usize,
    pub models: Vec<ReportModel>,
    pub inclusion: BTreeMap<String, f64>,
    pub variable_inclusion: BTreeMap<String, f64>,
    pub mpm: Vec<String>,
    pub mpm_coefficients: Option<Vec<f64>>,
    pub best: Vec<String>,
}

/// Inclusion probabilities at or above this value are listed in reports.
pub const REPORT_INCLUSION_FLOOR: f64 = 0.1;

/// Reorders coefficients from model order to label order (and back).
fn label_order<S: AsRef<str>>(model: &Model, names: &[S]) -> Vec<usize> {
    let labels: Vec<String> = model.features().iter().map(|f| f.label(names)).collect();
    let mut idx: Vec<usize> = (0..labels.len()).collect();
    idx.sort_by(|&a, &b| labels[a].cmp(&labels[b]));
    idx
}

fn to_label_order(coef: &[f64], order: &[usize], intercept: bool) -> Vec<f64> {
    let off = usize::from(intercept);
    let mut out: Vec<f64> = coef[..off].to_vec();
    out.extend(order.iter().map(|&i| coef[off + i]));
    out
}

fn from_label_order(coef: &[f64], order: &[usize], intercept: bool) -> Vec<f64> {
    let off = usize::from(intercept);
    let mut out = coef.to_vec();
    for (k, &i) in order.iter().enumerate() {
        out[off + i] = coef[off + k];
    }
    out
}

impl PosteriorSummary {
    pub fn to_report(&self, train: &Dataset, n_visited: usize) -> Report {
        let names = train.names();
        let intercept = self.family.has_intercept();
        let models = self
            .models
            .iter()
            .map(|w| {
                let order = label_order(&w.model, &names);
                ReportModel {
                    features: w.model.labels(&names),
                    log_marglik: w.log_marglik,
                    log_prior: w.log_prior,
                    weight: w.weight,
                    coefficients: w
                        .coefficients
                        .as_deref()
                        .map(|c| to_label_order(c, &order, intercept))
                        .unwrap_or_default(),
                }
            })
            .collect();
        let inclusion = self
            .inclusion
            .iter()
            .filter(|(_, &p)| p >= REPORT_INCLUSION_FLOOR)
            .map(|(f, &p)| (f.label(&names), p))
            .collect();
        let mpm_order = label_order(&self.mpm, &names);
        Report {
            family: self.family,
            response: train.response_name().to_string(),
            columns: train
                .columns()
                .iter()
                .map(|c| ReportColumn {
                    name: c.name.clone(),
                    kind: c.kind,
                    source: c.source.clone(),
                    min: c.min,
                    shift: c.shift,
                })
                .collect(),
            n_visited,
            models,
            inclusion,
            variable_inclusion: self.variable_inclusion.clone(),
            mpm: self.mpm.labels(&names),
            mpm_coefficients: self
                .mpm_coefficients
                .as_deref()
                .map(|c| to_label_order(c, &mpm_order, intercept)),
            best: self.best.labels(&names),
        }
    }

    /// Rebuilds a summary from a report; inclusion below the report floor is lost.
    pub fn from_report(report: &Report) -> Result<PosteriorSummary, PosteriorError> {
        let names: Vec<&str> = report.columns.iter().map(|c| c.name.as_str()).collect();
        let intercept = report.family.has_intercept();
        let parse_model = |labels: &[String]| -> Result<Model, PosteriorError> {
            Ok(Model::new(
                labels
                    .iter()
                    .map(|l| Feature::parse(l, &names))
                    .collect::<Result<Vec<_>, _>>()?,
            ))
        };
        let models = report
            .models
            .iter()
            .map(|rm| {
                let model = parse_model(&rm.features)?;
                let order = label_order(&model, &names);
                Ok(WeightedModel {
                    coefficients: Some(from_label_order(&rm.coefficients, &order, intercept)),
                    model,
                    weight: rm.weight,
                    log_marglik: rm.log_marglik,
                    log_prior: rm.log_prior,
                })
            })
            .collect::<Result<Vec<_>, PosteriorError>>()?;
        let inclusion = report
            .inclusion
            .iter()
            .map(|(l, &p)| Ok((Feature::parse(l, &names)?, p)))
            .collect::<Result<BTreeMap<_, _>, PosteriorError>>()?;
        let mpm = parse_model(&report.mpm)?;
        let mpm_order = label_order(&mpm, &names);
        Ok(PosteriorSummary {
            family: report.family,
            models,
            inclusion,
            variable_inclusion: report.variable_inclusion.clone(),
            mpm_coefficients: report
                .mpm_coefficients
                .as_deref()
                .map(|c| from_label_order(c, &mpm_order, intercept)),
            mpm,
            best: parse_model(&report.best)?,
        })
    }
}

impl Report {
    /// Columns in report order with the fitted kinds and shifts.
    pub fn reference_columns(&self) -> Vec<Column> {
        self.columns
            .iter()
            .map(|c| Column {
                name: c.name.clone(),
                values: Vec::new(),
                kind: c.kind,
                source: c.source.clone(),
                min: c.min,
                shift: c.shift,
            })
            .collect()
    }

    /// Human-readable inclusion table: one `probability  feature` line per
    /// feature, highest first.
    pub fn inclusion_table(&self) -> String {
        let mut rows: Vec<(&String, f64)> = self.inclusion.iter().map(|(f, &p)| (f, p)).collect();
        rows.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let mut out = String::from("inclusion  feature\n");
        for (f, p) in rows {
            out.push_str(&format!("{p:9.4}  {f}\n"));
        }
        out
    }
}
