//! Selection, regression, classification and survival metrics.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("no comparable pairs")]
    NoComparablePairs,
    #[error("integration grid must be increasing and start at 0 or later")]
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub tpr: f64,
    pub fdr: f64,
}

/// TPR and FDR of a selected set against a true set (features or variables).
/// FDR of an empty selection is 0.
pub fn selection_rates<T: Ord>(selected: &BTreeSet<T>, truth: &BTreeSet<T>) -> Rates {
    let tp = selected.intersection(truth).count() as f64;
    let tpr = if truth.is_empty() { 1.0 } else { tp / truth.len() as f64 };
    let fdr = (selected.len() as f64 - tp) / selected.len().max(1) as f64;
    Rates { tpr, fdr }
}

fn check_len(a: usize, b: usize) -> Result<(), MetricError> {
    if a != b {
        Err(MetricError::Length(a, b))
    } else if a == 0 {
        Err(MetricError::Empty)
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionMetrics {
    pub rmse: f64,
    pub mae: f64,
    /// `None` when either vector has zero variance.
    pub corr: Option<f64>,
}

pub fn regression_metrics(yhat: &[f64], y: &[f64]) -> Result<RegressionMetrics, MetricError> {
    check_len(yhat.len(), y.len())?;
    let n = y.len() as f64;
    let rmse = (yhat.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n).sqrt();
    let mae = yhat.iter().zip(y).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
    Ok(RegressionMetrics {
        rmse,
        mae,
        corr: pearson(yhat, y),
    })
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        None
    } else {
        Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassificationMetrics {
    pub acc: f64,
    /// `None` without positives.
    pub fnr: Option<f64>,
    /// `None` without negatives.
    pub fpr: Option<f64>,
}

pub fn classification_metrics(yhat: &[f64], y: &[f64]) -> Result<ClassificationMetrics, MetricError> {
    check_len(yhat.len(), y.len())?;
    let (mut tp, mut tn, mut fp, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &t) in yhat.iter().zip(y) {
        match (p == 1.0, t == 1.0) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
        }
    }
    let ratio = |a: usize, b: usize| (a + b > 0).then(|| a as f64 / (a + b) as f64);
    Ok(ClassificationMetrics {
        acc: (tp + tn) as f64 / y.len() as f64,
        fnr: ratio(fn_, tp),
        fpr: ratio(fp, tn),
    })
}

/// Kaplan–Meier estimate of the censoring survival function Ĝ.
#[derive(Debug, Clone, PartialEq)]
pub struct CensoringModel {
    times: Vec<f64>,
    surv: Vec<f64>,
}

impl CensoringModel {
    /// Reverse Kaplan–Meier: censorings (status 0) are the events.
    pub fn fit(times: &[f64], status: &[bool]) -> Self {
        let mut order: Vec<usize> = (0..times.len()).collect();
        order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
        let mut out_t = Vec::new();
        let mut out_s = Vec::new();
        let mut s = 1.0;
        let mut k = 0;
        let n = order.len();
        while k < n {
            let t = times[order[k]];
            let at_risk = n - k;
            let mut cens = 0usize;
            while k < n && times[order[k]] == t {
                if !status[order[k]] {
                    cens += 1;
                }
                k += 1;
            }
            if cens > 0 {
                s *= 1.0 - cens as f64 / at_risk as f64;
                out_t.push(t);
                out_s.push(s);
            }
        }
        CensoringModel {
            times: out_t,
            surv: out_s,
        }
    }

    /// Ĝ(t).
    pub fn at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            1.0
        } else {
            self.surv[k - 1]
        }
    }

    /// Ĝ(t⁻).
    pub fn before(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s < t);
        if k == 0 {
            1.0
        } else {
            self.surv[k - 1]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurvivalScore {
    pub value: f64,
    /// Number of weights dropped because Ĝ was 0.
    pub truncated: usize,
}

/// IPCW concordance: over pairs with an observed event at `T_i < T_j`, the
/// weighted share where `lp_i > lp_j` (ties count one half). Weights are
/// `1 / Ĝ(T_i⁻)²`.
pub fn concordance_index(
    lp: &[f64],
    times: &[f64],
    status: &[bool],
    cens: &CensoringModel,
) -> Result<SurvivalScore, MetricError> {
    check_len(lp.len(), times.len())?;
    check_len(status.len(), times.len())?;
    let (mut num, mut den) = (0.0, 0.0);
    let mut truncated = 0;
    for i in 0..lp.len() {
        if !status[i] {
            continue;
        }
        let g = cens.before(times[i]);
        if g <= 0.0 {
            truncated += 1;
            continue;
        }
        let w = 1.0 / (g * g);
        for j in 0..lp.len() {
            if times[i] < times[j] {
                den += w;
                if lp[i] > lp[j] {
                    num += w;
                } else if lp[i] == lp[j] {
                    num += 0.5 * w;
                }
            }
        }
    }
    if den == 0.0 {
        return Err(MetricError::NoComparablePairs);
    }
    Ok(SurvivalScore {
        value: num / den,
        truncated,
    })
}

/// Default integration grid: 0, the sorted unique event times and the largest time.
pub fn ibs_grid(times: &[f64], status: &[bool]) -> Vec<f64> {
    let mut grid: Vec<f64> = times
        .iter()
        .zip(status)
        .filter(|(_, &s)| s)
        .map(|(&t, _)| t)
        .collect();
    grid.push(0.0);
    grid.push(times.iter().copied().fold(0.0, f64::max));
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// IPCW Brier score at time `t` for survival predictions `s` (one per subject).
pub fn brier_score(
    s: &[f64],
    t: f64,
    times: &[f64],
    status: &[bool],
    cens: &CensoringModel,
    truncated: &mut usize,
) -> f64 {
    let g_t = cens.at(t);
    let mut total = 0.0;
    for i in 0..s.len() {
        if times[i] <= t && status[i] {
            let g = cens.before(times[i]);
            if g > 0.0 {
                total += s[i] * s[i] / g;
            } else {
                *truncated += 1;
            }
        } else if times[i] > t {
            if g_t > 0.0 {
                total += (1.0 - s[i]).powi(2) / g_t;
            } else {
                *truncated += 1;
            }
        }
    }
    total / s.len() as f64
}

/// Trapezoidal integral of the IPCW Brier score over `grid`, divided by the
/// grid's span. `surv[i][k]` is subject `i`'s survival at `grid[k]`.
pub fn integrated_brier_score(
    surv: &[Vec<f64>],
    times: &[f64],
    status: &[bool],
    cens: &CensoringModel,
    grid: &[f64],
) -> Result<SurvivalScore, MetricError> {
    check_len(surv.len(), times.len())?;
    check_len(status.len(), times.len())?;
    if grid.len() < 2 || grid[0] < 0.0 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(MetricError::Grid);
    }
    let mut truncated = 0;
    let bs: Vec<f64> = (0..grid.len())
        .map(|k| {
            let s: Vec<f64> = surv.iter().map(|row| row[k]).collect();
            brier_score(&s, grid[k], times, status, cens, &mut truncated)
        })
        .collect();
    let area: f64 = grid
        .windows(2)
        .zip(bs.windows(2))
        .map(|(t, b)| (t[1] - t[0]) * (b[0] + b[1]) / 2.0)
        .sum();
    Ok(SurvivalScore {
        value: area / (grid[grid.len() - 1] - grid[0]),
        truncated,
    })
}

/// Metric block written to `metrics.json`; absent entries are not applicable.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mae: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fnr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fpr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ibs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cindex: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tpr_functional: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fdr_functional: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tpr_variable: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fdr_variable: Option<f64>,
    /// IPCW weights set to zero because the censoring survival reached 0.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ipcw_truncated: Option<usize>,
}
