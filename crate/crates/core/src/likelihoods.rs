//! Maximum-likelihood fitting for the Gaussian, logistic and Cox models.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{check_full_rank, cholesky_solve, lstsq, LinalgError, Matrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("degenerate fit: residual variance is zero")]
    Degenerate,
    #[error("need more rows than columns (n = {n}, p = {p})")]
    TooFewRows { n: usize, p: usize },
    #[error("response has a single class")]
    SingleClass,
    #[error("no events")]
    NoEvents,
    #[error("non-finite values in fit")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Intercept first for Gaussian and logistic fits; no intercept for Cox.
    pub coefficients: Vec<f64>,
    /// σ̂² = RSS/n for Gaussian fits, 1 otherwise.
    pub dispersion: f64,
    pub loglik: f64,
    /// Regression coefficients excluding the intercept.
    pub p_effective: usize,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitControl {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for FitControl {
    fn default() -> Self {
        FitControl {
            max_iter: 100,
            tol: 1e-8,
        }
    }
}

/// Linear predictor magnitude beyond which a stalled fit counts as separated.
pub const SEPARATION_ETA: f64 = 30.0;
/// Iterations after which a fit with extreme linear predictors is abandoned.
const STALL_ITER: usize = 25;

fn check_finite(x: &Matrix, y: &[f64]) -> Result<(), FitError> {
    let ok = y.iter().all(|v| v.is_finite()) && (0..x.cols()).all(|j| x.col(j).iter().all(|v| v.is_finite()));
    if ok {
        Ok(())
    } else {
        Err(FitError::NonFinite)
    }
}

/// Ordinary least squares; `design` includes the intercept column.
pub fn fit_gaussian(design: &Matrix, y: &[f64]) -> Result<FitResult, FitError> {
    let (n, p) = (design.rows(), design.cols());
    if n <= p {
        return Err(FitError::TooFewRows { n, p });
    }
    check_finite(design, y)?;
    let ls = lstsq(design, y)?;
    let sigma2 = ls.rss / n as f64;
    let scale = y.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if !(sigma2 > (64.0 * f64::EPSILON).powi(2) * scale.max(f64::MIN_POSITIVE)) {
        return Err(FitError::Degenerate);
    }
    Ok(FitResult {
        coefficients: ls.beta,
        dispersion: sigma2,
        loglik: gaussian_loglik(n, sigma2),
        p_effective: p.saturating_sub(1),
        converged: true,
        iterations: 1,
    })
}

/// Profile log-likelihood at the MLE variance.
pub fn gaussian_loglik(n: usize, sigma2: f64) -> f64 {
    -(n as f64) / 2.0 * ((2.0 * PI * sigma2).ln() + 1.0)
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
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

/// Bernoulli log-likelihood with logit link at coefficients `beta`.
pub fn logistic_loglik(design: &Matrix, y: &[f64], beta: &[f64]) -> f64 {
    design
        .mul_vec(beta)
        .iter()
        .zip(y)
        .map(|(&eta, &yi)| yi * eta - softplus(eta))
        .sum()
}

/// Gradient of [`logistic_loglik`].
pub fn logistic_score(design: &Matrix, y: &[f64], beta: &[f64]) -> Vec<f64> {
    let r: Vec<f64> = design
        .mul_vec(beta)
        .iter()
        .zip(y)
        .map(|(&eta, &yi)| yi - sigmoid(eta))
        .collect();
    design.tr_mul_vec(&r)
}

/// Columns rescaled to unit root-mean-square; returns the scales.
fn rms_scaled(design: &Matrix) -> (Matrix, Vec<f64>) {
    let n = design.rows() as f64;
    let mut scaled = design.clone();
    let scales = (0..design.cols())
        .map(|j| {
            let s = (design.col(j).iter().map(|v| v * v).sum::<f64>() / n).sqrt();
            let s = if s > 0.0 { s } else { 1.0 };
            scaled.col_mut(j).iter_mut().for_each(|v| *v /= s);
            s
        })
        .collect();
    (scaled, scales)
}

fn weighted_gram(x: &Matrix, w: &[f64]) -> Vec<f64> {
    let p = x.cols();
    let mut h = vec![0.0; p * p];
    for a in 0..p {
        for b in 0..=a {
            let s: f64 = x
                .col(a)
                .iter()
                .zip(x.col(b))
                .zip(w)
                .map(|((u, v), wi)| u * v * wi)
                .sum();
            h[a * p + b] = s;
            h[b * p + a] = s;
        }
    }
    h
}

fn converged_step(delta: &[f64], beta: &[f64], tol: f64) -> bool {
    delta
        .iter()
        .zip(beta)
        .all(|(d, b)| d.abs() <= tol * (b.abs() + 1.0))
}

/// Newton–Raphson (IRLS) logistic regression; `design` includes the intercept.
pub fn fit_logistic(design: &Matrix, y: &[f64], ctl: FitControl) -> Result<FitResult, FitError> {
    let (n, p) = (design.rows(), design.cols());
    if n <= p {
        return Err(FitError::TooFewRows { n, p });
    }
    check_finite(design, y)?;
    let ones = y.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == n {
        return Err(FitError::SingleClass);
    }
    check_full_rank(design)?;
    let (x, scales) = rms_scaled(design);
    let mut beta = vec![0.0; p];
    let mut ll = logistic_loglik(&x, y, &beta);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < ctl.max_iter {
        iterations += 1;
        let eta = x.mul_vec(&beta);
        let w: Vec<f64> = eta.iter().map(|&e| {
            let s = sigmoid(e);
            s * (1.0 - s)
        }).collect();
        let grad = logistic_score(&x, y, &beta);
        let h = weighted_gram(&x, &w);
        let Ok(mut delta) = cholesky_solve(&h, &grad) else {
            break;
        };
        // Step halving keeps the log-likelihood nondecreasing.
        let mut step = 1.0;
        let mut next: Vec<f64>;
        let mut next_ll;
        loop {
            next = beta.iter().zip(&delta).map(|(b, d)| b + step * d).collect();
            next_ll = logistic_loglik(&x, y, &next);
            if next_ll >= ll - 1e-12 * ll.abs() || step < 1e-10 {
                break;
            }
            step *= 0.5;
        }
        delta.iter_mut().for_each(|d| *d *= step);
        beta = next;
        let gain = next_ll - ll;
        ll = next_ll;
        if converged_step(&delta, &beta, ctl.tol) || gain.abs() <= 1e-15 * (1.0 + ll.abs()) && step < 1.0 {
            converged = true;
            break;
        }
        if iterations >= STALL_ITER {
            let max_eta = x.mul_vec(&beta).iter().fold(0.0f64, |m, e| m.max(e.abs()));
            if max_eta > SEPARATION_ETA {
                break;
            }
        }
    }
    if converged {
        // A run that drifted to extreme linear predictors is separation, not convergence.
        let max_eta = x.mul_vec(&beta).iter().fold(0.0f64, |m, e| m.max(e.abs()));
        if max_eta > SEPARATION_ETA && ll > -1e-6 {
            converged = false;
        }
    }
    let coefficients: Vec<f64> = beta.iter().zip(&scales).map(|(b, s)| b / s).collect();
    if !ll.is_finite() {
        return Err(FitError::NonFinite);
    }
    Ok(FitResult {
        coefficients,
        dispersion: 1.0,
        loglik: ll.min(0.0),
        p_effective: p.saturating_sub(1),
        converged,
        iterations,
    })
}

/// Indices sorted by decreasing time, with event rows after censored rows at
/// equal times (order within a tie group is irrelevant under Breslow).
fn descending_order(times: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..times.len()).collect();
    idx.sort_by(|&a, &b| times[b].total_cmp(&times[a]));
    idx
}

struct CoxEval {
    loglik: f64,
    score: Vec<f64>,
    /// Negative Hessian, row-major.
    info: Vec<f64>,
}

fn cox_eval(x: &Matrix, times: &[f64], status: &[bool], beta: &[f64], with_info: bool) -> CoxEval {
    let (n, p) = (x.rows(), x.cols());
    let eta = x.mul_vec(beta);
    let m = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(0.0);
    let r: Vec<f64> = eta.iter().map(|e| (e - m).exp()).collect();
    let order = descending_order(times);
    let mut s0 = 0.0;
    let mut s1 = vec![0.0; p];
    let mut s2 = vec![0.0; if with_info { p * p } else { 0 }];
    let mut loglik = 0.0;
    let mut score = vec![0.0; p];
    let mut info = vec![0.0; if with_info { p * p } else { 0 }];
    let mut k = 0;
    while k < n {
        // Add every subject tied at this time to the risk set first.
        let t = times[order[k]];
        let mut end = k;
        while end < n && times[order[end]] == t {
            let i = order[end];
            s0 += r[i];
            for a in 0..p {
                let xa = x.get(i, a);
                s1[a] += r[i] * xa;
                if with_info {
                    for b in 0..=a {
                        s2[a * p + b] += r[i] * xa * x.get(i, b);
                    }
                }
            }
            end += 1;
        }
        for &i in &order[k..end] {
            if !status[i] {
                continue;
            }
            loglik += eta[i] - m - s0.ln();
            for a in 0..p {
                score[a] += x.get(i, a) - s1[a] / s0;
                if with_info {
                    for b in 0..=a {
                        info[a * p + b] += s2[a * p + b] / s0 - s1[a] * s1[b] / (s0 * s0);
                    }
                }
            }
        }
        k = end;
    }
    if with_info {
        for a in 0..p {
            for b in 0..a {
                info[b * p + a] = info[a * p + b];
            }
        }
    }
    CoxEval {
        loglik,
        score,
        info,
    }
}

/// Breslow log partial likelihood at `beta`.
pub fn cox_loglik(design: &Matrix, times: &[f64], status: &[bool], beta: &[f64]) -> f64 {
    cox_eval(design, times, status, beta, false).loglik
}

/// Gradient of [`cox_loglik`].
pub fn cox_score(design: &Matrix, times: &[f64], status: &[bool], beta: &[f64]) -> Vec<f64> {
    cox_eval(design, times, status, beta, false).score
}

/// Newton maximization of the Cox partial likelihood; `design` has no intercept.
pub fn fit_cox(
    design: &Matrix,
    times: &[f64],
    status: &[bool],
    ctl: FitControl,
) -> Result<FitResult, FitError> {
    let (n, p) = (design.rows(), design.cols());
    if times.len() != n || status.len() != n {
        return Err(LinalgError::Dimension("times/status length".into()).into());
    }
    check_finite(design, times)?;
    if !status.iter().any(|&s| s) {
        return Err(FitError::NoEvents);
    }
    if n <= p {
        return Err(FitError::TooFewRows { n, p });
    }
    // Centering leaves the partial likelihood unchanged; it also exposes
    // constant columns as rank deficiency.
    let mut centered = design.clone();
    for j in 0..p {
        let mean = design.col(j).iter().sum::<f64>() / n as f64;
        centered.col_mut(j).iter_mut().for_each(|v| *v -= mean);
    }
    check_full_rank(&centered)?;
    let (x, scales) = rms_scaled(&centered);
    let mut beta = vec![0.0; p];
    let mut cur = cox_eval(&x, times, status, &beta, true);
    let mut converged = p == 0;
    let mut iterations = 0;
    while !converged && iterations < ctl.max_iter {
        iterations += 1;
        let Ok(mut delta) = cholesky_solve(&cur.info, &cur.score) else {
            break;
        };
        let mut step = 1.0;
        let (next, next_eval) = loop {
            let cand: Vec<f64> = beta.iter().zip(&delta).map(|(b, d)| b + step * d).collect();
            let ev = cox_eval(&x, times, status, &cand, true);
            if ev.loglik >= cur.loglik - 1e-12 * cur.loglik.abs() || step < 1e-10 {
                break (cand, ev);
            }
            step *= 0.5;
        };
        delta.iter_mut().for_each(|d| *d *= step);
        let gain = next_eval.loglik - cur.loglik;
        beta = next;
        cur = next_eval;
        if converged_step(&delta, &beta, ctl.tol) || gain.abs() <= 1e-15 * (1.0 + cur.loglik.abs()) && step < 1.0 {
            converged = true;
            break;
        }
        if iterations >= STALL_ITER {
            let max_eta = x.mul_vec(&beta).iter().fold(0.0f64, |m, e| m.max(e.abs()));
            if max_eta > SEPARATION_ETA {
                break;
            }
        }
    }
    if converged && p > 0 {
        let max_eta = x.mul_vec(&beta).iter().fold(0.0f64, |m, e| m.max(e.abs()));
        if max_eta > SEPARATION_ETA {
            converged = false;
        }
    }
    if !cur.loglik.is_finite() {
        return Err(FitError::NonFinite);
    }
    Ok(FitResult {
        coefficients: beta.iter().zip(&scales).map(|(b, s)| b / s).collect(),
        dispersion: 1.0,
        loglik: cur.loglik,
        p_effective: p,
        converged,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intercept(n: usize) -> Vec<f64> {
        vec![1.0; n]
    }

    #[test]
    fn gaussian_intercept_only() {
        let x = Matrix::from_columns(2, &[intercept(2)]).unwrap();
        let f = fit_gaussian(&x, &[0.0, 2.0]).unwrap();
        assert!((f.coefficients[0] - 1.0).abs() < 1e-15);
        assert!((f.dispersion - 1.0).abs() < 1e-15);
        assert!((f.loglik - (-(2.0 * PI).ln() - 1.0)).abs() < 1e-12);
        assert_eq!(f.p_effective, 0);
    }

    #[test]
    fn gaussian_errors() {
        let t = vec![1.0, 2.0, 3.0, 4.0];
        let x = Matrix::from_columns(4, &[intercept(4), t.clone()]).unwrap();
        let y: Vec<f64> = t.iter().map(|v| 2.0 * v + 1.0).collect();
        assert_eq!(fit_gaussian(&x, &y), Err(FitError::Degenerate));
        let dup = Matrix::from_columns(4, &[intercept(4), t.clone(), t.clone()]).unwrap();
        assert!(matches!(
            fit_gaussian(&dup, &[1.0, 0.0, 2.0, 1.0]),
            Err(FitError::Linalg(LinalgError::RankDeficient { .. }))
        ));
        let zero = Matrix::from_columns(4, &[intercept(4), vec![0.0; 4]]).unwrap();
        assert!(fit_gaussian(&zero, &[1.0, 0.0, 2.0, 1.0]).is_err());
    }

    #[test]
    fn logistic_symmetric_case() {
        let x = Matrix::from_columns(2, &[intercept(2)]).unwrap();
        let f = fit_logistic(&x, &[0.0, 1.0], FitControl::default()).unwrap();
        assert!(f.converged);
        assert!(f.coefficients[0].abs() < 1e-12);
        assert!((f.loglik - 2.0 * 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn logistic_separation_is_flagged() {
        let t = vec![-2.0, -1.0, 1.0, 2.0];
        let x = Matrix::from_columns(4, &[intercept(4), t]).unwrap();
        let f = fit_logistic(&x, &[0.0, 0.0, 1.0, 1.0], FitControl::default()).unwrap();
        assert!(!f.converged);
        assert!(f.loglik <= 0.0 && f.loglik > -1e-3);
        assert_eq!(
            fit_logistic(&x, &[1.0; 4], FitControl::default()),
            Err(FitError::SingleClass)
        );
    }

    #[test]
    fn cox_null_and_no_events() {
        let x = Matrix::zeros(3, 0);
        let times = [1.0, 2.0, 3.0];
        let f = fit_cox(&x, &times, &[true, true, false], FitControl::default()).unwrap();
        let expected = -(3f64).ln() - (2f64).ln();
        assert!((f.loglik - expected).abs() < 1e-14);
        assert!(f.coefficients.is_empty());
        assert_eq!(
            fit_cox(&x, &times, &[false; 3], FitControl::default()),
            Err(FitError::NoEvents)
        );
    }

    #[test]
    fn cox_breslow_ties() {
        // Two events tied at t=1 share the full risk set of 3.
        let x = Matrix::zeros(3, 0);
        let ll = cox_loglik(&x, &[1.0, 1.0, 2.0], &[true, true, true], &[]);
        assert!((ll - (-2.0 * 3f64.ln())).abs() < 1e-14);
    }
}
