//! Genetically modified MJMCMC: a sequence of populations, each explored by
//! MJMCMC, with low-weight features replaced between epochs.

use log::{info, warn};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rayon::prelude::*;

use super::mjmcmc::{run_mjmcmc, Explorer};
use super::{OperatorProbs, Population, SearchConfig, VisitLog};
use crate::evidence::{log_model_prior, PriorConfig, Scorer};
use crate::rng::chain_rng;
use crate::transforms::{Factor, Feature, FeatureUniverse, TransformClass};

/// Posterior mass, within the models explored on this population, of the
/// models containing each feature.
pub fn estimate_inclusion_within<'a, I>(pop: &Population, visited: I) -> Vec<f64>
where
    I: IntoIterator<Item = (&'a Vec<bool>, f64)>,
{
    let entries: Vec<(&Vec<bool>, f64)> = visited.into_iter().filter(|(_, lp)| lp.is_finite()).collect();
    let mut weights = vec![0.0; pop.len()];
    let Some(max) = entries.iter().map(|(_, lp)| *lp).reduce(f64::max) else {
        return weights;
    };
    let mut total = 0.0;
    for (gamma, lp) in &entries {
        let w = (lp - max).exp();
        total += w;
        for (acc, &g) in weights.iter_mut().zip(gamma.iter()) {
            if g {
                *acc += w;
            }
        }
    }
    weights.iter_mut().for_each(|w| *w /= total);
    weights
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolveParams {
    pub population_size: usize,
    pub w_min: f64,
    pub delta: f64,
    pub max_order: usize,
    pub operators: OperatorProbs,
    pub pinned: Vec<Feature>,
}

impl EvolveParams {
    pub fn from_config(cfg: &SearchConfig, pinned: &[Feature]) -> Self {
        EvolveParams {
            population_size: cfg.population_size,
            w_min: cfg.w_min,
            delta: cfg.delta,
            max_order: cfg.max_order,
            operators: cfg.operators,
            pinned: pinned.to_vec(),
        }
    }
}

/// Initial population: pinned features, then the identity feature of every
/// predictor, padded with uniformly drawn simple-power features.
pub fn initial_population<R: Rng + ?Sized>(
    universe: &FeatureUniverse,
    size: usize,
    pinned: &[Feature],
    rng: &mut R,
) -> Population {
    let mut features: Vec<Feature> = Vec::new();
    for f in pinned {
        if !features.contains(f) {
            features.push(f.clone());
        }
    }
    let mut linear: Vec<Feature> = universe
        .order1
        .iter()
        .filter(|f| f.factors()[0].transform.class() == TransformClass::F0 && !features.contains(f))
        .cloned()
        .collect();
    let room = size.saturating_sub(features.len());
    if linear.len() > room {
        linear.shuffle(rng);
        linear.truncate(room);
        linear.sort();
    }
    features.extend(linear);
    let mut simple: Vec<Feature> = universe
        .order1
        .iter()
        .filter(|f| f.factors()[0].transform.class() == TransformClass::F1 && !features.contains(f))
        .cloned()
        .collect();
    simple.shuffle(rng);
    let room = size.saturating_sub(features.len());
    features.extend(simple.into_iter().take(room));
    if features.len() < size {
        let mut rest: Vec<Feature> = universe
            .order1
            .iter()
            .filter(|f| !features.contains(f))
            .cloned()
            .collect();
        rest.shuffle(rng);
        let room = size - features.len();
        features.extend(rest.into_iter().take(room));
    }
    Population {
        features,
        generation: 0,
    }
}

fn mutate<R: Rng + ?Sized>(universe: &FeatureUniverse, rng: &mut R) -> Option<Feature> {
    universe.order1.choose(rng).cloned()
}

fn modify<R: Rng + ?Sized>(universe: &FeatureUniverse, parents: &[Feature], rng: &mut R) -> Option<Feature> {
    let parent = parents.choose(rng)?;
    let i = rng.random_range(0..parent.order());
    let factor = parent.factors()[i];
    let transform = *universe.allowed_for(factor.predictor).choose(rng)?;
    let mut factors = parent.factors().to_vec();
    factors[i] = Factor {
        predictor: factor.predictor,
        transform,
    };
    Feature::from_factors(factors)
}

fn multiply<R: Rng + ?Sized>(
    parents: &[Feature],
    weights: &[f64],
    delta: f64,
    rng: &mut R,
) -> Option<Feature> {
    let w: Vec<f64> = weights.iter().map(|w| w + delta).collect();
    let dist = WeightedIndex::new(&w).ok()?;
    let a = &parents[dist.sample(rng)];
    let b = &parents[dist.sample(rng)];
    a.product(b)
}

/// Replaces features with weight below `w_min` (pinned features survive) by
/// new features drawn from the evolution operators.
pub fn evolve_population<R: Rng + ?Sized>(
    pop: &Population,
    weights: &[f64],
    universe: &FeatureUniverse,
    params: &EvolveParams,
    rng: &mut R,
) -> Population {
    let mut features: Vec<Feature> = Vec::with_capacity(params.population_size);
    let mut kept_weights = Vec::new();
    for (f, &w) in pop.features.iter().zip(weights) {
        if w >= params.w_min || params.pinned.contains(f) {
            features.push(f.clone());
            kept_weights.push(w);
        }
    }
    if features.len() == pop.len() {
        return Population {
            features,
            generation: pop.generation + 1,
        };
    }
    let parents = features.clone();
    let ops = params.operators;
    let op_weights = [ops.mutation, ops.modification, ops.multiplication];
    let op_dist = WeightedIndex::new(op_weights).ok();
    let max_tries = 200 * params.population_size.max(1);
    let mut tries = 0;
    while features.len() < params.population_size && tries < max_tries {
        tries += 1;
        let op = op_dist.as_ref().map_or(0, |d| d.sample(rng));
        let candidate = match op {
            1 if !parents.is_empty() => modify(universe, &parents, rng),
            2 if !parents.is_empty() => multiply(&parents, &kept_weights, params.delta, rng),
            _ => mutate(universe, rng),
        };
        if let Some(f) = candidate {
            if f.order() <= params.max_order && universe.contains(&f) && !features.contains(&f) {
                features.push(f);
            }
        }
    }
    if features.len() < params.population_size {
        warn!(
            "population {} refilled to {} of {} features",
            pop.generation + 1,
            features.len(),
            params.population_size
        );
    }
    Population {
        features,
        generation: pop.generation + 1,
    }
}

/// Random start with a prior-admissible model.
fn random_start<R: Rng + ?Sized>(pop: &Population, prior: &PriorConfig, n: usize, rng: &mut R) -> Vec<bool> {
    let s = pop.len();
    if s == 0 {
        return Vec::new();
    }
    let p = (prior.q as f64 / (2.0 * s as f64)).min(0.5);
    for _ in 0..100 {
        let gamma: Vec<bool> = (0..s).map(|_| rng.random::<f64>() < p).collect();
        if log_model_prior(&pop.model(&gamma), prior, n) > f64::NEG_INFINITY {
            return gamma;
        }
    }
    vec![false; s]
}

/// One GMJMCMC chain. `pinned` features stay in every population and the
/// chain starts from the model made of them.
pub fn gmjmcmc<S: Scorer + ?Sized>(
    scorer: &S,
    universe: &FeatureUniverse,
    cfg: &SearchConfig,
    pinned: &[Feature],
    n: usize,
    chain: u64,
) -> VisitLog {
    let mut rng = chain_rng(cfg.seed, chain);
    let prior = cfg.prior();
    let params = cfg.mjmcmc_params();
    let evolve = EvolveParams::from_config(cfg, pinned);
    let mut log = VisitLog::new();
    let mut pop = initial_population(universe, cfg.population_size, pinned, &mut rng);
    let mut start = if pinned.is_empty() {
        random_start(&pop, &prior, n, &mut rng)
    } else {
        pop.features.iter().map(|f| pinned.contains(f)).collect()
    };
    let t_max = cfg.n_populations.max(1);
    for t in 0..t_max {
        let iters = if t_max == 1 {
            cfg.n_init + cfg.n_final
        } else if t == 0 {
            cfg.n_init
        } else if t + 1 == t_max {
            cfg.n_final
        } else {
            cfg.n_expl
        };
        let mut ex = Explorer::new(scorer, &pop, &mut log);
        let state = run_mjmcmc(&mut ex, start, iters.max(1), &params, cfg.max_unique_models, &mut rng);
        let weights = estimate_inclusion_within(&pop, ex.visited().map(|(g, e)| (g, e.log_posterior())));
        let current = pop.model(&state.gamma);
        let best = log.best().map_or(f64::NEG_INFINITY, |(_, lp)| lp);
        info!(
            "chain {chain} epoch {t}: best log posterior {best:.4}, |Omega| = {}",
            log.len()
        );
        if t + 1 == t_max || cfg.max_unique_models.is_some_and(|b| log.len() >= b) {
            break;
        }
        pop = evolve_population(&pop, &weights, universe, &evolve, &mut rng);
        // Carry the current model over as far as its features survived.
        start = pop.features.iter().map(|f| current.contains(f)).collect();
        if log_model_prior(&pop.model(&start), &prior, n) == f64::NEG_INFINITY {
            start = vec![false; pop.len()];
        }
    }
    log
}

/// Independent chains on streams `0..n_chains` of the configured seed,
/// merged in chain order.
pub fn run_parallel<S: Scorer + ?Sized>(
    scorer: &S,
    universe: &FeatureUniverse,
    cfg: &SearchConfig,
    pinned: &[Feature],
    n: usize,
) -> VisitLog {
    let logs: Vec<VisitLog> = (0..cfg.n_chains as u64)
        .into_par_iter()
        .map(|c| gmjmcmc(scorer, universe, cfg, pinned, n, c))
        .collect();
    let mut merged = VisitLog::new();
    for l in logs {
        merged.merge(l);
    }
    merged
}
