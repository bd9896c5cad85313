//! Bayesian fractional-polynomial regression.
//!
//! Models are sets of fractional-polynomial features (optionally with
//! interactions) scored by a BIC-form marginal likelihood and a
//! complexity prior. The model space is explored with the genetically
//! modified mode-jumping MCMC ([`search`]), and the visited models are
//! renormalized into posterior weights, inclusion probabilities and
//! model-averaged predictions ([`posterior`]).
//!
//! Supported observation models are Gaussian, Bernoulli (logit link) and
//! Cox proportional hazards.

pub mod config;
pub mod data;
pub mod evidence;
pub mod likelihoods;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod posterior;
pub mod rng;
pub mod search;
pub mod simharness;
pub mod transforms;

pub use data::{Dataset, Family};
pub use evidence::{Evidence, Model, ModelEvaluator, PriorConfig, Scorer};
pub use transforms::{Feature, Power, Transform};
