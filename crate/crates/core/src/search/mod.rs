//! Model-space search: mode-jumping MCMC over a fixed feature population and
//! the outer genetic loop that evolves populations.

mod gmjmcmc;
mod mjmcmc;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::evidence::{Evidence, Model, PriorConfig};
use crate::transforms::{Feature, TransformError, TransformSet};

pub use gmjmcmc::{estimate_inclusion_within, evolve_population, gmjmcmc, initial_population, run_parallel, EvolveParams};
pub use mjmcmc::{mjmcmc_step, run_mjmcmc, ChainState, Explorer, MjmcmcParams, StepKind};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("operator probabilities must be nonnegative and sum to 1 (got {0})")]
    OperatorSum(f64),
    #[error("projection features are not supported; set p_projection to 0")]
    Projection,
    #[error("interaction mode needs p_multiplication > 0 and max_order >= 2")]
    InteractionSetup,
    #[error("fractional-polynomial mode needs p_multiplication = 0 and max_order = 1")]
    FpSetup,
    #[error("{field} must be {rule}")]
    Invalid { field: &'static str, rule: &'static str },
    #[error("pinned feature: {0}")]
    Pinned(#[from] TransformError),
}

/// Probabilities of the population-evolution operators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorProbs {
    pub mutation: f64,
    pub multiplication: f64,
    pub modification: f64,
    pub projection: f64,
}

impl OperatorProbs {
    pub const FP: OperatorProbs = OperatorProbs {
        mutation: 0.5,
        multiplication: 0.0,
        modification: 0.5,
        projection: 0.0,
    };
    pub const INTERACTIONS: OperatorProbs = OperatorProbs {
        mutation: 0.4,
        multiplication: 0.3,
        modification: 0.3,
        projection: 0.0,
    };
}

impl Default for OperatorProbs {
    fn default() -> Self {
        OperatorProbs::FP
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub population_size: usize,
    pub q: usize,
    /// Maximum terms per predictor; `null` for unbounded.
    pub d: Option<usize>,
    pub max_order: usize,
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
    pub interactions: bool,
    pub transform_set: TransformSet,
    /// Iterations on the initial population.
    pub n_init: usize,
    /// Iterations on each intermediate population.
    pub n_expl: usize,
    /// Iterations on the last population.
    pub n_final: usize,
    /// Number of populations, including the initial one.
    pub n_populations: usize,
    pub operators: OperatorProbs,
    pub rho_jump: f64,
    pub epsilon: f64,
    /// Greedy flips after a large jump; `null` means twice the population size.
    pub greedy_steps: Option<usize>,
    pub w_min: f64,
    pub delta: f64,
    pub n_chains: usize,
    pub seed: u64,
    /// Stop a chain once it has logged this many distinct models.
    pub max_unique_models: Option<usize>,
    /// Feature labels kept in every population.
    pub pinned: Vec<String>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        let prior = PriorConfig::default();
        SearchConfig {
            population_size: 20,
            q: prior.q,
            d: prior.d,
            max_order: 1,
            s0: prior.s0,
            s1: prior.s1,
            s2: prior.s2,
            interactions: false,
            transform_set: TransformSet::Fp2,
            n_init: 250,
            n_expl: 250,
            n_final: 5000,
            n_populations: 61,
            operators: OperatorProbs::FP,
            rho_jump: 0.05,
            epsilon: 0.05,
            greedy_steps: None,
            w_min: 0.02,
            delta: 0.01,
            n_chains: 1,
            seed: 1,
            max_unique_models: None,
            pinned: Vec::new(),
        }
    }
}

impl SearchConfig {
    /// Evolution every `period` iterations up to `last`, then the final
    /// population runs until `total`.
    pub fn with_schedule(mut self, total: usize, period: usize, last: usize) -> Self {
        let period = period.max(1);
        let evolutions = last / period;
        self.n_populations = evolutions + 1;
        self.n_init = if evolutions == 0 { 0 } else { period };
        self.n_expl = period;
        self.n_final = total.saturating_sub(evolutions * period);
        self
    }

    pub fn total_iterations(&self) -> usize {
        if self.n_populations <= 1 {
            self.n_init + self.n_final
        } else {
            self.n_init + self.n_expl * (self.n_populations - 2) + self.n_final
        }
    }

    /// Switches to interaction mode with factor cap `order` and unbounded `d`.
    pub fn enable_interactions(&mut self, order: usize) {
        self.interactions = true;
        self.max_order = order.max(2);
        self.d = None;
        if self.operators.multiplication == 0.0 {
            self.operators = OperatorProbs::INTERACTIONS;
        }
    }

    pub fn prior(&self) -> PriorConfig {
        PriorConfig {
            q: self.q,
            d: self.d,
            s0: self.s0,
            s1: self.s1,
            s2: self.s2,
            max_order: self.max_order,
        }
    }

    pub fn mjmcmc_params(&self) -> MjmcmcParams {
        MjmcmcParams {
            rho_jump: self.rho_jump,
            epsilon: self.epsilon,
            greedy_steps: self.greedy_steps.unwrap_or(2 * self.population_size),
        }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        let invalid = |field, rule| Err(SearchError::Invalid { field, rule });
        let o = &self.operators;
        let probs = [o.mutation, o.multiplication, o.modification, o.projection];
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(SearchError::OperatorSum(sum));
        }
        if o.projection > 0.0 {
            return Err(SearchError::Projection);
        }
        if self.interactions {
            if o.multiplication <= 0.0 || self.max_order < 2 {
                return Err(SearchError::InteractionSetup);
            }
        } else if o.multiplication > 0.0 || self.max_order != 1 {
            return Err(SearchError::FpSetup);
        }
        if self.population_size == 0 {
            return invalid("population_size", "at least 1");
        }
        if self.q == 0 || self.q > self.population_size {
            return invalid("q", "between 1 and population_size");
        }
        if self.d == Some(0) {
            return invalid("d", "at least 1");
        }
        for (field, s) in [("s0", self.s0), ("s1", self.s1), ("s2", self.s2)] {
            if !(s > 0.0 && s.is_finite()) {
                return invalid(field, "positive and finite");
            }
        }
        if self.n_populations == 0 {
            return invalid("n_populations", "at least 1");
        }
        if self.total_iterations() == 0 {
            return invalid("n_final", "such that at least one iteration runs");
        }
        if !(0.0..=1.0).contains(&self.rho_jump) {
            return invalid("rho_jump", "in [0, 1]");
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return invalid("epsilon", "in (0, 0.5)");
        }
        if !(0.0..1.0).contains(&self.w_min) {
            return invalid("w_min", "in [0, 1)");
        }
        if !(self.delta >= 0.0) {
            return invalid("delta", "nonnegative");
        }
        if self.n_chains == 0 {
            return invalid("n_chains", "at least 1");
        }
        Ok(())
    }

    /// Parses the pinned labels against the dataset's column names.
    pub fn resolve_pinned(&self, ds: &Dataset) -> Result<Vec<Feature>, SearchError> {
        let names = ds.names();
        let mut out = Vec::new();
        for label in &self.pinned {
            let f = Feature::parse(label, &names)?;
            f.validate(ds)?;
            if !out.contains(&f) {
                out.push(f);
            }
        }
        Ok(out)
    }
}

/// A fixed set of candidate features explored by one MJMCMC run.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub features: Vec<Feature>,
    pub generation: usize,
}

impl Population {
    pub fn model(&self, gamma: &[bool]) -> Model {
        Model::new(
            self.features
                .iter()
                .zip(gamma)
                .filter(|(_, &g)| g)
                .map(|(f, _)| f.clone())
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// Every model evaluated during a search, with its evidence.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VisitLog {
    models: BTreeMap<Model, Arc<Evidence>>,
}

impl VisitLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, m: Model, e: Arc<Evidence>) -> bool {
        use std::collections::btree_map::Entry;
        match self.models.entry(m) {
            Entry::Vacant(v) => {
                v.insert(e);
                true
            }
            Entry::Occupied(_) => false,
        }
    }

    pub fn get(&self, m: &Model) -> Option<&Arc<Evidence>> {
        self.models.get(m)
    }

    pub fn contains(&self, m: &Model) -> bool {
        self.models.contains_key(m)
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Model, &Arc<Evidence>)> {
        self.models.iter()
    }

    /// Union by model; evidence is a pure function of the model, so
    /// duplicates collapse.
    pub fn merge(&mut self, other: VisitLog) {
        for (m, e) in other.models {
            self.models.entry(m).or_insert(e);
        }
    }

    /// Highest unnormalized log posterior in the log.
    pub fn best(&self) -> Option<(&Model, f64)> {
        self.models
            .iter()
            .map(|(m, e)| (m, e.log_posterior()))
            .filter(|(_, lp)| lp.is_finite())
            .fold(None, |acc: Option<(&Model, f64)>, (m, lp)| match acc {
                Some((_, best)) if best >= lp => acc,
                _ => Some((m, lp)),
            })
    }
}

impl FromIterator<(Model, Arc<Evidence>)> for VisitLog {
    fn from_iter<I: IntoIterator<Item = (Model, Arc<Evidence>)>>(iter: I) -> Self {
        let mut log = VisitLog::new();
        for (m, e) in iter {
            log.insert(m, e);
        }
        log
    }
}
