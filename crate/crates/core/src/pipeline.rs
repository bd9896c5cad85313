//! End-to-end steps shared by the command line and the acceptance suite:
//! load and split data, search, summarise, predict and score.

use std::io::Write;
use std::sync::Arc;

use thiserror::Error;

use crate::config::{ConfigError, GridChoice, RunConfig, SimulationConfig};
use crate::data::{load_csv, load_predictor_csv, split, DataError, Dataset, Family};
use crate::evidence::ModelEvaluator;
use crate::metrics::{
    classification_metrics, concordance_index, ibs_grid, integrated_brier_score, regression_metrics,
    CensoringModel, MetricError, Metrics,
};
use crate::posterior::{classify, predict, renormalize, survival_curve, PosteriorError, PosteriorSummary, PredictionMode};
use crate::search::{run_parallel, SearchConfig, SearchError};
use crate::simharness::{art_schema, run_scenario, ReplicateResult, ScenarioGrid, SimError};
use crate::transforms::enumerate_terms;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Posterior(#[from] PosteriorError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("config has no `{0}` section")]
    Missing(&'static str),
    #[error("no test data: set data.test_path or a split")]
    NoTestData,
}

/// Training data and, when the config defines one, the test data aligned to it.
#[derive(Debug, Clone)]
pub struct TrainTest {
    pub train: Dataset,
    pub test: Option<Dataset>,
}

pub fn load_train_test(cfg: &RunConfig) -> Result<TrainTest, PipelineError> {
    let data = cfg.data.as_ref().ok_or(PipelineError::Missing("data"))?;
    let full = load_csv(&data.path, &data.schema, &data.response)?;
    let (train, test) = match &cfg.split {
        Some(s) => {
            let (train, test) = split(&full, s.train_fraction, s.seed, s.stratify)?;
            (train, Some(test))
        }
        None => (full, None),
    };
    let test = match (&data.test_path, test) {
        (Some(path), _) => Some(load_csv(path, &data.schema, &data.response)?.align_to(train.columns())?),
        (None, test) => test,
    };
    Ok(TrainTest { train, test })
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub summary: PosteriorSummary,
    pub n_visited: usize,
}

/// Runs all chains on `train` and renormalises over the visited models.
pub fn fit(train: Arc<Dataset>, search: &SearchConfig) -> Result<FitOutcome, PipelineError> {
    search.validate()?;
    let pinned = search.resolve_pinned(&train)?;
    let evaluator = ModelEvaluator::new(train.clone(), search.prior());
    let universe = enumerate_terms(&train, search.max_order, search.transform_set);
    let log = run_parallel(&evaluator, &universe, search, &pinned, train.n());
    let summary = renormalize(&log, &train)?;
    Ok(FitOutcome {
        summary,
        n_visited: log.len(),
    })
}

/// Per-row predictions. Gaussian: means; Bernoulli: probabilities and classes;
/// time-to-event: linear predictors.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub family: Family,
    pub values: Vec<f64>,
    pub classes: Option<Vec<f64>>,
}

impl Predictions {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        match self.family {
            Family::Gaussian => w.write_record(["row", "prediction"])?,
            Family::Bernoulli => w.write_record(["row", "probability", "class"])?,
            Family::TimeToEvent => w.write_record(["row", "linear_predictor"])?,
        }
        for (i, v) in self.values.iter().enumerate() {
            let mut rec = vec![(i + 1).to_string(), v.to_string()];
            if let Some(c) = &self.classes {
                rec.push(c[i].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Predicts `test` (already aligned to the training columns) and computes the
/// family's metric block. Survival metrics use `train` for the baseline
/// hazard and the censoring distribution.
pub fn evaluate(
    summary: &PosteriorSummary,
    train: &Dataset,
    test: &Dataset,
    mode: PredictionMode,
) -> Result<(Predictions, Metrics), PipelineError> {
    if test.family() != summary.family {
        return Err(PosteriorError::FamilyMismatch {
            report: summary.family,
            data: test.family(),
        }
        .into());
    }
    let values = predict(summary, test, mode)?;
    let y = &test.response().y;
    let mut metrics = Metrics::default();
    let mut classes = None;
    match summary.family {
        Family::Gaussian => {
            let m = regression_metrics(&values, y)?;
            metrics.rmse = Some(m.rmse);
            metrics.mae = Some(m.mae);
            metrics.corr = m.corr;
        }
        Family::Bernoulli => {
            let c = classify(&values);
            let m = classification_metrics(&c, y)?;
            metrics.acc = Some(m.acc);
            metrics.fnr = m.fnr;
            metrics.fpr = m.fpr;
            classes = Some(c);
        }
        Family::TimeToEvent => {
            let tr = train.response();
            let cens = CensoringModel::fit(&tr.y, tr.events());
            let status = test.response().events();
            let c = concordance_index(&values, y, status, &cens)?;
            let grid = ibs_grid(y, status);
            let surv = survival_curve(summary, train, test, &grid, mode)?;
            let ibs = integrated_brier_score(&surv, y, status, &cens, &grid)?;
            metrics.cindex = Some(c.value);
            metrics.ibs = Some(ibs.value);
            metrics.ipcw_truncated = Some(c.truncated + ibs.truncated);
        }
    }
    Ok((
        Predictions {
            family: summary.family,
            values,
            classes,
        },
        metrics,
    ))
}

pub fn scenario_grid(sim: &SimulationConfig) -> ScenarioGrid {
    let mut grid = match sim.grid {
        GridChoice::Default => ScenarioGrid::desk(sim.seed),
        GridChoice::Full => ScenarioGrid::full(sim.seed),
    };
    if let Some(v) = &sim.variances {
        grid.variances = v.clone();
    }
    grid.replicates = sim.replicates;
    grid
}

/// Runs the simulation study described by `cfg.simulation`.
pub fn simulate(cfg: &RunConfig) -> Result<Vec<ReplicateResult>, PipelineError> {
    let sim = cfg.simulation.as_ref().ok_or(PipelineError::Missing("simulation"))?;
    let predictors = load_predictor_csv(&sim.predictors, &art_schema())?;
    Ok(run_scenario(&predictors, &scenario_grid(sim), &cfg.search, sim.ideal)?)
}
