//! Brute-force reference computations for the `bayesfp` test suite.
//!
//! Everything here is written directly from the formulas on plain vectors
//! and `nalgebra`, without touching the library under test: exhaustive model
//! enumeration with prior and BIC evidence, grid-search maximum likelihood,
//! and textbook survival estimators.

use nalgebra::{DMatrix, DVector};

/// One candidate feature: its evaluated column and what the prior needs.
#[derive(Debug, Clone)]
pub struct OracleFeature {
    pub column: Vec<f64>,
    /// Predictors the feature uses, one entry per factor.
    pub predictors: Vec<usize>,
    /// Prior cost `s` of the feature (sum over its factors).
    pub cost: f64,
}

/// Small Gaussian model space, enumerated in full.
#[derive(Debug, Clone)]
pub struct EnumerableUniverse {
    pub features: Vec<OracleFeature>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct OraclePrior {
    pub q: usize,
    /// Maximum features per predictor; `None` for no limit.
    pub d: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleModel {
    /// Bit `k` set iff feature `k` is included.
    pub mask: u32,
    pub log_marglik: f64,
    pub log_prior: f64,
    pub weight: f64,
}

/// Gaussian log likelihood at the least-squares fit, with `sigma^2 = RSS/n`.
/// Solved by SVD on the raw design with an intercept column.
pub fn gaussian_max_loglik(columns: &[&[f64]], y: &[f64]) -> f64 {
    let n = y.len();
    let p = columns.len() + 1;
    let x = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { columns[j - 1][i] });
    let yv = DVector::from_column_slice(y);
    let svd = x.clone().svd(true, true);
    let beta = svd.solve(&yv, 1e-12).expect("svd solve");
    let resid = yv - x * beta;
    let rss = resid.norm_squared();
    let nf = n as f64;
    -nf / 2.0 * ((2.0 * std::f64::consts::PI * rss / nf).ln() + 1.0)
}

fn admissible(mask: u32, u: &EnumerableUniverse, prior: &OraclePrior) -> bool {
    let chosen: Vec<&OracleFeature> = (0..u.features.len())
        .filter(|k| mask & (1 << k) != 0)
        .map(|k| &u.features[k])
        .collect();
    if chosen.len() > prior.q {
        return false;
    }
    if let Some(d) = prior.d {
        let mut max_pred = 0;
        for f in &chosen {
            for &j in &f.predictors {
                max_pred = max_pred.max(j + 1);
            }
        }
        let mut counts = vec![0usize; max_pred];
        for f in &chosen {
            for &j in &f.predictors {
                counts[j] += 1;
            }
        }
        if counts.iter().any(|&c| c > d) {
            return false;
        }
    }
    true
}

/// Every admissible model with its evidence and exact renormalized weight.
pub fn exhaustive_posterior(u: &EnumerableUniverse, prior: &OraclePrior) -> Vec<OracleModel> {
    let k = u.features.len();
    assert!(k <= 12, "universe too large to enumerate");
    let n = u.y.len() as f64;
    let mut out = Vec::new();
    for mask in 0u32..(1 << k) {
        if !admissible(mask, u, prior) {
            continue;
        }
        let cols: Vec<&[f64]> = (0..k)
            .filter(|j| mask & (1 << j) != 0)
            .map(|j| u.features[j].column.as_slice())
            .collect();
        let size = cols.len() as f64;
        let log_marglik = gaussian_max_loglik(&cols, &u.y) - size / 2.0 * n.ln();
        let cost: f64 = (0..k)
            .filter(|j| mask & (1 << j) != 0)
            .map(|j| u.features[j].cost)
            .sum();
        out.push(OracleModel {
            mask,
            log_marglik,
            log_prior: -cost * n.ln(),
            weight: 0.0,
        });
    }
    let max = out
        .iter()
        .map(|m| m.log_marglik + m.log_prior)
        .fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = out.iter().map(|m| (m.log_marglik + m.log_prior - max).exp()).sum();
    for m in &mut out {
        m.weight = (m.log_marglik + m.log_prior - max).exp() / total;
    }
    out
}

/// Maximizes `f` over a box by a coarse grid followed by repeated zooming
/// around the best point until the cell width is below `resolution`.
pub fn grid_mle<F: Fn(&[f64]) -> f64>(f: F, bounds: &[(f64, f64)], resolution: f64) -> Vec<f64> {
    assert!(!bounds.is_empty() && bounds.len() <= 2, "one or two parameters");
    const STEPS: usize = 40;
    let mut lo: Vec<f64> = bounds.iter().map(|b| b.0).collect();
    let mut hi: Vec<f64> = bounds.iter().map(|b| b.1).collect();
    let mut best = lo.clone();
    loop {
        let width: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| (b - a) / STEPS as f64).collect();
        let mut best_val = f64::NEG_INFINITY;
        let inner = if bounds.len() == 2 { STEPS + 1 } else { 1 };
        for i in 0..=STEPS {
            for j in 0..inner {
                let mut x = vec![lo[0] + i as f64 * width[0]];
                if bounds.len() == 2 {
                    x.push(lo[1] + j as f64 * width[1]);
                }
                let v = f(&x);
                if v > best_val {
                    best_val = v;
                    best = x;
                }
            }
        }
        if width.iter().all(|&w| w < resolution) {
            return best;
        }
        for d in 0..bounds.len() {
            lo[d] = (best[d] - 2.0 * width[d]).max(bounds[d].0);
            hi[d] = (best[d] + 2.0 * width[d]).min(bounds[d].1);
        }
    }
}

/// Bernoulli log likelihood of `logit p = b0 + b1 x`.
pub fn logistic_loglik(x: &[f64], y: &[f64], b0: f64, b1: f64) -> f64 {
    x.iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let p = 1.0 / (1.0 + (-(b0 + b1 * xi)).exp());
            yi * p.ln() + (1.0 - yi) * (1.0 - p).ln()
        })
        .sum()
}

/// Cox partial log likelihood with Breslow ties for a single covariate.
pub fn cox_loglik(x: &[f64], times: &[f64], status: &[bool], beta: f64) -> f64 {
    let mut ll = 0.0;
    for i in 0..x.len() {
        if !status[i] {
            continue;
        }
        let mut risk = 0.0;
        for j in 0..x.len() {
            if times[j] >= times[i] {
                risk += (beta * x[j]).exp();
            }
        }
        ll += beta * x[i] - risk.ln();
    }
    ll
}

/// Kaplan-Meier estimate as `(time, survival)` after each distinct time at
/// which `event` occurred.
pub fn kaplan_meier(times: &[f64], event: &[bool]) -> Vec<(f64, f64)> {
    let mut distinct: Vec<f64> = times
        .iter()
        .zip(event)
        .filter(|(_, &e)| e)
        .map(|(&t, _)| t)
        .collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut s = 1.0;
    let mut out = Vec::new();
    for t in distinct {
        let at_risk = times.iter().filter(|&&u| u >= t).count() as f64;
        let d = times.iter().zip(event).filter(|(&u, &e)| e && u == t).count() as f64;
        s *= 1.0 - d / at_risk;
        out.push((t, s));
    }
    out
}

/// Step-function lookup into a Kaplan-Meier table: value at `t` (right-continuous).
pub fn step_at(table: &[(f64, f64)], t: f64) -> f64 {
    table
        .iter()
        .take_while(|(u, _)| *u <= t)
        .last()
        .map_or(1.0, |(_, s)| *s)
}

/// Value just before `t`.
pub fn step_before(table: &[(f64, f64)], t: f64) -> f64 {
    table
        .iter()
        .take_while(|(u, _)| *u < t)
        .last()
        .map_or(1.0, |(_, s)| *s)
}

/// Breslow cumulative baseline hazard at `t` for risk scores `exp(lp)`.
pub fn breslow_cumhaz(times: &[f64], status: &[bool], lp: &[f64], t: f64) -> f64 {
    let mut distinct: Vec<f64> = times
        .iter()
        .zip(status)
        .filter(|(&u, &e)| e && u <= t)
        .map(|(&u, _)| u)
        .collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    distinct
        .iter()
        .map(|&u| {
            let d = times.iter().zip(status).filter(|(&v, &e)| e && v == u).count() as f64;
            let risk: f64 = times
                .iter()
                .zip(lp)
                .filter(|(&v, _)| v >= u)
                .map(|(_, &l)| l.exp())
                .sum();
            d / risk
        })
        .sum()
}

/// Harrell-style concordance with explicit pair enumeration and IPCW weights
/// `1 / G(T_i-)^2` from the censoring Kaplan-Meier table.
pub fn ipcw_cindex(lp: &[f64], times: &[f64], status: &[bool], censoring: &[(f64, f64)]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..lp.len() {
        if !status[i] {
            continue;
        }
        let g = step_before(censoring, times[i]);
        if g <= 0.0 {
            continue;
        }
        for j in 0..lp.len() {
            if times[i] < times[j] {
                let w = 1.0 / (g * g);
                den += w;
                num += w * if lp[i] > lp[j] {
                    1.0
                } else if lp[i] == lp[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / den
}
