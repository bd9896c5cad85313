//! Mode-jumping Metropolis–Hastings over the inclusion vector of one population.

use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng;

use super::{Population, VisitLog};
use crate::evidence::{Evidence, Scorer};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MjmcmcParams {
    /// Probability of a mode jump instead of a single-bit flip.
    pub rho_jump: f64,
    /// Per-bit flip probability of the randomization kernel.
    pub epsilon: f64,
    /// Maximum number of greedy improvement flips after a large jump.
    pub greedy_steps: usize,
}

impl Default for MjmcmcParams {
    fn default() -> Self {
        MjmcmcParams {
            rho_jump: 0.05,
            epsilon: 0.05,
            greedy_steps: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub gamma: Vec<bool>,
    pub log_post: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Local,
    Jump,
}

/// Scores inclusion vectors of one population, memoizing per vector and
/// recording every evaluated model in the visit log.
pub struct Explorer<'a, S: Scorer + ?Sized> {
    scorer: &'a S,
    population: &'a Population,
    memo: HashMap<Vec<bool>, Arc<Evidence>>,
    log: &'a mut VisitLog,
}

impl<'a, S: Scorer + ?Sized> Explorer<'a, S> {
    pub fn new(scorer: &'a S, population: &'a Population, log: &'a mut VisitLog) -> Self {
        Explorer {
            scorer,
            population,
            memo: HashMap::new(),
            log,
        }
    }

    pub fn population(&self) -> &Population {
        self.population
    }

    pub fn log(&self) -> &VisitLog {
        self.log
    }

    pub fn evidence(&mut self, gamma: &[bool]) -> Arc<Evidence> {
        if let Some(e) = self.memo.get(gamma) {
            return e.clone();
        }
        let m = self.population.model(gamma);
        let e = self.scorer.evaluate(&m);
        self.log.insert(m, e.clone());
        self.memo.insert(gamma.to_vec(), e.clone());
        e
    }

    pub fn log_post(&mut self, gamma: &[bool]) -> f64 {
        self.evidence(gamma).log_posterior()
    }

    /// Inclusion vectors scored in this population with their evidence.
    pub fn visited(&self) -> impl Iterator<Item = (&Vec<bool>, &Arc<Evidence>)> {
        self.memo.iter()
    }

    /// Deterministic best-improvement ascent; ties go to the lowest index.
    fn greedy(&mut self, mut gamma: Vec<bool>, steps: usize) -> (Vec<bool>, f64) {
        let mut cur = self.log_post(&gamma);
        for _ in 0..steps {
            let mut best: Option<(usize, f64)> = None;
            for j in 0..gamma.len() {
                gamma[j] = !gamma[j];
                let lp = self.log_post(&gamma);
                gamma[j] = !gamma[j];
                if lp > cur && best.is_none_or(|(_, b)| lp > b) {
                    best = Some((j, lp));
                }
            }
            match best {
                Some((j, lp)) => {
                    gamma[j] = !gamma[j];
                    cur = lp;
                }
                None => break,
            }
        }
        (gamma, cur)
    }
}

fn hamming(a: &[bool], b: &[bool]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// Log density of the independent bit-flip kernel moving `from` to `to`.
fn log_kernel(from: &[bool], to: &[bool], eps: f64) -> f64 {
    let h = hamming(from, to) as f64;
    h * eps.ln() + (from.len() as f64 - h) * (1.0 - eps).ln()
}

fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
}

/// One MJMCMC transition. Returns the kind of move attempted and whether it
/// was accepted.
pub fn mjmcmc_step<S: Scorer + ?Sized, R: Rng + ?Sized>(
    state: &mut ChainState,
    ex: &mut Explorer<'_, S>,
    params: &MjmcmcParams,
    rng: &mut R,
) -> (StepKind, bool) {
    let s = state.gamma.len();
    if s == 0 {
        ex.log_post(&state.gamma);
        return (StepKind::Local, false);
    }
    if rng.random::<f64>() >= params.rho_jump {
        let j = rng.random_range(0..s);
        let mut prop = state.gamma.clone();
        prop[j] = !prop[j];
        let lp = ex.log_post(&prop);
        if lp.is_finite() && accept(lp - state.log_post, rng) {
            state.gamma = prop;
            state.log_post = lp;
            return (StepKind::Local, true);
        }
        return (StepKind::Local, false);
    }

    // Large jump on a random index set, greedy ascent, then randomization.
    let lo = s.div_ceil(4).max(1);
    let hi = s.div_ceil(2).max(lo);
    let k = rng.random_range(lo..=hi);
    let flips = sample(rng, s, k).into_vec();
    let jump = |g: &[bool]| {
        let mut out = g.to_vec();
        for &i in &flips {
            out[i] = !out[i];
        }
        out
    };
    let (peak, _) = ex.greedy(jump(&state.gamma), params.greedy_steps);
    let prop: Vec<bool> = peak
        .iter()
        .map(|&b| if rng.random::<f64>() < params.epsilon { !b } else { b })
        .collect();
    let lp = ex.log_post(&prop);
    if !lp.is_finite() {
        return (StepKind::Jump, false);
    }
    let (back_peak, _) = ex.greedy(jump(&prop), params.greedy_steps);
    let log_ratio = lp - state.log_post + log_kernel(&back_peak, &state.gamma, params.epsilon)
        - log_kernel(&peak, &prop, params.epsilon);
    if accept(log_ratio, rng) {
        state.gamma = prop;
        state.log_post = lp;
        (StepKind::Jump, true)
    } else {
        (StepKind::Jump, false)
    }
}

/// Runs `n_iters` transitions from `start` and returns the final state.
/// `budget` stops the run early once the visit log reaches that many models.
pub fn run_mjmcmc<S: Scorer + ?Sized, R: Rng + ?Sized>(
    ex: &mut Explorer<'_, S>,
    start: Vec<bool>,
    n_iters: usize,
    params: &MjmcmcParams,
    budget: Option<usize>,
    rng: &mut R,
) -> ChainState {
    let log_post = ex.log_post(&start);
    let mut state = ChainState {
        gamma: start,
        log_post,
    };
    for _ in 0..n_iters {
        if budget.is_some_and(|b| ex.log().len() >= b) {
            break;
        }
        mjmcmc_step(&mut state, ex, params, rng);
    }
    state
}
