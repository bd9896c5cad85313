//! Fractional-polynomial feature library.
//!
//! A [`Transform`] is one of the 16 univariate maps used by FP(2) models: the
//! identity (class F0), seven simple powers (F1) and eight "repeated power"
//! forms `x^p * log(x)` (F2). A [`Feature`] is a product of one or more
//! `(predictor, transform)` factors; single-factor features are ordinary FP
//! terms and multi-factor features are interactions.
//!
//! Columns that need a strictly positive argument are shifted once per column
//! (see [`required_shift`]); the same shift is reused when predicting on new
//! data so the fitted map is applied unchanged.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use dashmap::DashMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;

/// Offset added to a column whose minimum is not strictly positive.
pub const SHIFT_EPSILON: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error("{transform} is undefined at {value} (row {row})")]
    Domain {
        transform: String,
        row: usize,
        value: f64,
    },
    #[error("{transform} overflowed at row {row}")]
    NonFinite { transform: String, row: usize },
    #[error("feature {feature}: {source}")]
    InFeature {
        feature: String,
        #[source]
        source: Box<TransformError>,
    },
    #[error("unknown predictor index {0}")]
    UnknownPredictor(usize),
    #[error("predictor {0} is not continuous and admits only the identity transform")]
    NotContinuous(String),
    #[error("cannot parse feature `{0}`")]
    Parse(String),
}

/// Exponent of a fractional-polynomial term; `Log` stands for power 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Power {
    NegTwo,
    NegOne,
    NegHalf,
    Log,
    Half,
    One,
    Two,
    Three,
}

impl Power {
    pub const ALL: [Power; 8] = [
        Power::NegTwo,
        Power::NegOne,
        Power::NegHalf,
        Power::Log,
        Power::Half,
        Power::One,
        Power::Two,
        Power::Three,
    ];

    pub fn value(self) -> f64 {
        match self {
            Power::NegTwo => -2.0,
            Power::NegOne => -1.0,
            Power::NegHalf => -0.5,
            Power::Log => 0.0,
            Power::Half => 0.5,
            Power::One => 1.0,
            Power::Two => 2.0,
            Power::Three => 3.0,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Power::NegTwo => "-2",
            Power::NegOne => "-1",
            Power::NegHalf => "-0.5",
            Power::Log => "0",
            Power::Half => "0.5",
            Power::One => "1",
            Power::Two => "2",
            Power::Three => "3",
        }
    }

    fn from_label(s: &str) -> Option<Power> {
        Power::ALL.into_iter().find(|p| p.label() == s)
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Power::NegTwo => 1.0 / (v * v),
            Power::NegOne => 1.0 / v,
            Power::NegHalf => 1.0 / v.sqrt(),
            Power::Log => v.ln(),
            Power::Half => v.sqrt(),
            Power::One => v,
            Power::Two => v * v,
            Power::Three => v * v * v,
        }
    }
}

/// Prior penalty class of a transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransformClass {
    F0,
    F1,
    F2,
}

/// Which transforms continuous predictors may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformSet {
    /// F0 and F1 only.
    Fp1,
    /// F0, F1 and F2.
    #[default]
    Fp2,
}

impl TransformSet {
    pub fn transforms(self) -> Vec<Transform> {
        Transform::all()
            .into_iter()
            .filter(|t| self == TransformSet::Fp2 || !t.log_multiplier)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Transform {
    pub power: Power,
    pub log_multiplier: bool,
}

impl Transform {
    pub const IDENTITY: Transform = Transform {
        power: Power::One,
        log_multiplier: false,
    };

    pub const fn new(power: Power, log_multiplier: bool) -> Self {
        Transform {
            power,
            log_multiplier,
        }
    }

    pub const fn simple(power: Power) -> Self {
        Transform::new(power, false)
    }

    /// All 16 transforms: identity first, then F1, then F2, each in power order.
    pub fn all() -> Vec<Transform> {
        let mut out = vec![Transform::IDENTITY];
        out.extend(
            Power::ALL
                .into_iter()
                .filter(|&p| p != Power::One)
                .map(Transform::simple),
        );
        out.extend(Power::ALL.into_iter().map(|p| Transform::new(p, true)));
        out
    }

    pub fn class(self) -> TransformClass {
        if self.log_multiplier {
            TransformClass::F2
        } else if self.power == Power::One {
            TransformClass::F0
        } else {
            TransformClass::F1
        }
    }

    pub fn is_identity(self) -> bool {
        self == Transform::IDENTITY
    }

    /// True when the argument must be strictly positive.
    pub fn needs_positive(self) -> bool {
        self.log_multiplier
            || matches!(
                self.power,
                Power::NegTwo | Power::NegOne | Power::NegHalf | Power::Log | Power::Half
            )
    }

    /// Evaluates the transform at an already shifted argument.
    pub fn eval(self, v: f64) -> f64 {
        let base = self.power.apply(v);
        if self.log_multiplier {
            base * v.ln()
        } else {
            base
        }
    }

    fn describe(self) -> String {
        let base = match self.power {
            Power::One => "x".to_string(),
            Power::Log => "log(x)".to_string(),
            p => format!("x^({})", p.label()),
        };
        if self.log_multiplier {
            format!("{base}*log(x)")
        } else {
            base
        }
    }

    fn label_for(self, name: &str) -> String {
        let base = match self.power {
            Power::One => name.to_string(),
            Power::Log => format!("log({name})"),
            p => format!("{name}^({})", p.label()),
        };
        if self.log_multiplier {
            format!("{base}*log({name})")
        } else {
            base
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

/// Elementwise `t(x + shift)`; never returns NaN or infinities.
pub fn apply_transform(x: &[f64], t: Transform, shift: f64) -> Result<Vec<f64>, TransformError> {
    x.iter()
        .enumerate()
        .map(|(row, &v)| {
            let arg = v + shift;
            if t.needs_positive() && !(arg > 0.0) {
                return Err(TransformError::Domain {
                    transform: t.describe(),
                    row,
                    value: arg,
                });
            }
            let out = t.eval(arg);
            if out.is_finite() {
                Ok(out)
            } else {
                Err(TransformError::NonFinite {
                    transform: t.describe(),
                    row,
                })
            }
        })
        .collect()
}

/// Shift that makes every value strictly positive: 0 when `min(x) > 0`,
/// otherwise `-min(x) + SHIFT_EPSILON`.
pub fn required_shift(x: &[f64]) -> f64 {
    let min = x.iter().copied().fold(f64::INFINITY, f64::min);
    if !min.is_finite() || min > 0.0 {
        0.0
    } else {
        -min + SHIFT_EPSILON
    }
}

/// One `(predictor, transform)` pair inside a feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Factor {
    pub predictor: usize,
    pub transform: Transform,
}

/// A term of the linear predictor. Factors are kept sorted by predictor and
/// no predictor appears twice, so equal products compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Feature {
    factors: Vec<Factor>,
}

impl Feature {
    pub fn single(predictor: usize, transform: Transform) -> Self {
        Feature {
            factors: vec![Factor {
                predictor,
                transform,
            }],
        }
    }

    /// Builds a canonical feature; `None` when the list is empty or a
    /// predictor repeats.
    pub fn from_factors(mut factors: Vec<Factor>) -> Option<Self> {
        if factors.is_empty() {
            return None;
        }
        factors.sort();
        if factors.windows(2).any(|w| w[0].predictor == w[1].predictor) {
            return None;
        }
        Some(Feature { factors })
    }

    /// Interaction product of two features, or `None` if they share a predictor.
    pub fn product(&self, other: &Feature) -> Option<Feature> {
        let mut factors = self.factors.clone();
        factors.extend_from_slice(&other.factors);
        Feature::from_factors(factors)
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }

    pub fn predictors(&self) -> impl Iterator<Item = usize> + '_ {
        self.factors.iter().map(|f| f.predictor)
    }

    pub fn uses(&self, predictor: usize) -> bool {
        self.factors.iter().any(|f| f.predictor == predictor)
    }

    /// Stable report string, e.g. `x3^(-0.5)*log(x3)` or `x1^(0.5)*x3^(-0.5)`.
    pub fn label<S: AsRef<str>>(&self, names: &[S]) -> String {
        self.factors
            .iter()
            .map(|f| {
                let name = names
                    .get(f.predictor)
                    .map(|s| s.as_ref().to_string())
                    .unwrap_or_else(|| format!("#{}", f.predictor));
                f.transform.label_for(&name)
            })
            .collect::<Vec<_>>()
            .join("*")
    }

    /// Inverse of [`Feature::label`].
    pub fn parse<S: AsRef<str>>(label: &str, names: &[S]) -> Result<Feature, TransformError> {
        let err = || TransformError::Parse(label.to_string());
        let lookup = |name: &str| {
            names
                .iter()
                .position(|n| n.as_ref() == name)
                .ok_or_else(err)
        };
        let mut factors: Vec<Factor> = Vec::new();
        for token in label.split('*') {
            let token = token.trim();
            if let Some(inner) = token.strip_prefix("log(").and_then(|t| t.strip_suffix(')')) {
                let j = lookup(inner)?;
                match factors.last_mut() {
                    Some(last) if last.predictor == j && !last.transform.log_multiplier => {
                        last.transform.log_multiplier = true;
                    }
                    _ => factors.push(Factor {
                        predictor: j,
                        transform: Transform::simple(Power::Log),
                    }),
                }
            } else if let Some((name, rest)) = token.split_once("^(") {
                let p = rest.strip_suffix(')').and_then(Power::from_label).ok_or_else(err)?;
                if p == Power::One {
                    return Err(err());
                }
                factors.push(Factor {
                    predictor: lookup(name)?,
                    transform: Transform::simple(p),
                });
            } else {
                factors.push(Factor {
                    predictor: lookup(token)?,
                    transform: Transform::IDENTITY,
                });
            }
        }
        Feature::from_factors(factors).ok_or_else(err)
    }

    /// Checks predictor indices and the identity-only rule for non-continuous columns.
    pub fn validate(&self, ds: &Dataset) -> Result<(), TransformError> {
        for f in &self.factors {
            let col = ds
                .columns()
                .get(f.predictor)
                .ok_or(TransformError::UnknownPredictor(f.predictor))?;
            if !col.kind.is_continuous() && !f.transform.is_identity() {
                return Err(TransformError::NotContinuous(col.name.clone()));
            }
        }
        Ok(())
    }
}

/// Evaluates a feature column on `ds`, using each column's recorded shift.
pub fn evaluate_feature(f: &Feature, ds: &Dataset) -> Result<Vec<f64>, TransformError> {
    let wrap = |e: TransformError| TransformError::InFeature {
        feature: f.label(&ds.names()),
        source: Box::new(e),
    };
    f.validate(ds).map_err(wrap)?;
    let mut out = vec![1.0; ds.n()];
    for factor in f.factors() {
        let col = &ds.columns()[factor.predictor];
        let shift = if factor.transform.is_identity() {
            0.0
        } else {
            col.shift
        };
        let values = apply_transform(&col.values, factor.transform, shift).map_err(wrap)?;
        for (o, v) in out.iter_mut().zip(values) {
            *o *= v;
        }
    }
    if let Some(row) = out.iter().position(|v| !v.is_finite()) {
        return Err(wrap(TransformError::NonFinite {
            transform: "product".into(),
            row,
        }));
    }
    Ok(out)
}

/// The candidate term space of a dataset.
#[derive(Debug, Clone)]
pub struct FeatureUniverse {
    /// All order-1 features, grouped by predictor in column order.
    pub order1: Vec<Feature>,
    /// Transforms admitted by each predictor (identity only for indicators).
    pub allowed: Vec<Vec<Transform>>,
    /// Maximum number of factors in a feature.
    pub order_cap: usize,
}

impl FeatureUniverse {
    pub fn allowed_for(&self, predictor: usize) -> &[Transform] {
        &self.allowed[predictor]
    }

    pub fn n_predictors(&self) -> usize {
        self.allowed.len()
    }

    pub fn contains(&self, f: &Feature) -> bool {
        f.order() <= self.order_cap
            && f.factors().iter().all(|fa| {
                self.allowed
                    .get(fa.predictor)
                    .is_some_and(|ts| ts.contains(&fa.transform))
            })
    }
}

/// Lists the order-1 features: every transform of the set for continuous
/// columns and the identity for binary/indicator columns. Interactions are
/// generated lazily by the search.
pub fn enumerate_terms(ds: &Dataset, order_cap: usize, set: TransformSet) -> FeatureUniverse {
    let order_cap = order_cap.max(1);
    let allowed: Vec<Vec<Transform>> = ds
        .columns()
        .iter()
        .map(|c| {
            if c.kind.is_continuous() {
                set.transforms()
            } else {
                vec![Transform::IDENTITY]
            }
        })
        .collect();
    let order1 = allowed
        .iter()
        .enumerate()
        .flat_map(|(j, ts)| ts.iter().map(move |&t| Feature::single(j, t)))
        .collect();
    FeatureUniverse {
        order1,
        allowed,
        order_cap,
    }
}

/// Shared per-dataset cache of evaluated feature columns.
#[derive(Debug, Default)]
pub struct ColumnCache {
    map: DashMap<Feature, Arc<Vec<f64>>>,
}

impl ColumnCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_eval(&self, f: &Feature, ds: &Dataset) -> Result<Arc<Vec<f64>>, TransformError> {
        if let Some(col) = self.map.get(f) {
            return Ok(col.clone());
        }
        let col = Arc::new(evaluate_feature(f, ds)?);
        Ok(self.map.entry(f.clone()).or_insert(col).clone())
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Names of the source variables a feature touches.
pub fn feature_variables(f: &Feature, ds: &Dataset) -> BTreeSet<String> {
    f.predictors()
        .map(|j| ds.columns()[j].source.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Column, ColumnKind, Dataset, Response};

    fn ds2(a: Vec<f64>, b: Vec<f64>) -> Dataset {
        let n = a.len();
        Dataset::new(
            vec![
                Column::new("a", a, ColumnKind::Continuous),
                Column::new("b", b, ColumnKind::Continuous),
            ],
            Response::gaussian(vec![0.0; n]),
        )
        .unwrap()
    }

    #[test]
    fn square_root_log_and_repeated_power() {
        let r = apply_transform(&[1.0, 4.0], Transform::simple(Power::Half), 0.0).unwrap();
        assert_eq!(r, vec![1.0, 2.0]);
        let r = apply_transform(&[std::f64::consts::E], Transform::simple(Power::Log), 0.0).unwrap();
        assert!((r[0] - 1.0).abs() < 1e-15);
        let r = apply_transform(&[2.0], Transform::new(Power::Two, true), 0.0).unwrap();
        assert!((r[0] - 4.0 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn domain_violation_is_an_error_not_nan() {
        let e = apply_transform(&[1.0, 0.0], Transform::simple(Power::Log), 0.0).unwrap_err();
        assert!(matches!(e, TransformError::Domain { row: 1, .. }));
        assert!(apply_transform(&[-1.0], Transform::simple(Power::Half), 0.0).is_err());
        assert!(apply_transform(&[-1.0], Transform::simple(Power::Three), 0.0).is_ok());
        assert!(apply_transform(&[-1.0], Transform::new(Power::Three, true), 0.0).is_err());
    }

    #[test]
    fn shift_rule() {
        assert_eq!(required_shift(&[0.0, 2.0]), 1e-5);
        assert_eq!(required_shift(&[3.0, 4.0]), 0.0);
        assert_eq!(required_shift(&[-2.0, 1.0]), 2.0 + 1e-5);
    }

    #[test]
    fn transform_classes() {
        let all = Transform::all();
        assert_eq!(all.len(), 16);
        let count = |c| all.iter().filter(|t| t.class() == c).count();
        assert_eq!(count(TransformClass::F0), 1);
        assert_eq!(count(TransformClass::F1), 7);
        assert_eq!(count(TransformClass::F2), 8);
        assert_eq!(TransformSet::Fp1.transforms().len(), 8);
    }

    #[test]
    fn feature_products_and_canonical_order() {
        let ds = ds2(vec![2.0, 1.0], vec![std::f64::consts::E, 1.0]);
        let f = Feature::from_factors(vec![
            Factor {
                predictor: 1,
                transform: Transform::simple(Power::Log),
            },
            Factor {
                predictor: 0,
                transform: Transform::simple(Power::Two),
            },
        ])
        .unwrap();
        let g = Feature::single(0, Transform::simple(Power::Two))
            .product(&Feature::single(1, Transform::simple(Power::Log)))
            .unwrap();
        assert_eq!(f, g);
        assert_eq!(f.label(&ds.names()), "a^(2)*log(b)");
        let v = evaluate_feature(&f, &ds).unwrap();
        assert!((v[0] - 4.0).abs() < 1e-12);
        let id = evaluate_feature(&Feature::single(0, Transform::IDENTITY), &ds).unwrap();
        assert_eq!(id, vec![2.0, 1.0]);
        assert!(Feature::single(0, Transform::IDENTITY)
            .product(&Feature::single(0, Transform::simple(Power::Log)))
            .is_none());
    }

    #[test]
    fn labels_round_trip() {
        let names = ["x1", "x3", "x6"];
        for label in [
            "x3^(-0.5)",
            "log(x6)",
            "x3^(-0.5)*log(x3)",
            "log(x3)*log(x3)",
            "x3*log(x3)",
            "x1",
            "x1^(0.5)*x3^(-0.5)",
            "log(x1)*x3^(2)*log(x3)*log(x6)",
        ] {
            let f = Feature::parse(label, &names).unwrap();
            assert_eq!(f.label(&names), label);
        }
        assert!(Feature::parse("x9", &names).is_err());
        assert!(Feature::parse("x1^(7)", &names).is_err());
    }

    #[test]
    fn universe_sizes() {
        let mut cols: Vec<Column> = (0..6)
            .map(|j| Column::new(&format!("c{j}"), vec![1.0, 2.0], ColumnKind::Continuous))
            .collect();
        cols.extend(
            (0..5).map(|j| Column::new(&format!("b{j}"), vec![0.0, 1.0], ColumnKind::Binary)),
        );
        let ds = Dataset::new(cols, Response::gaussian(vec![0.0, 1.0])).unwrap();
        assert_eq!(enumerate_terms(&ds, 1, TransformSet::Fp2).order1.len(), 101);

        let one = ds2(vec![1.0, 2.0], vec![1.0, 2.0]);
        let u = enumerate_terms(&one, 1, TransformSet::Fp2);
        assert_eq!(u.order1.iter().filter(|f| f.uses(0)).count(), 16);

        let bin = Dataset::new(
            vec![Column::new("b", vec![0.0, 1.0], ColumnKind::Binary)],
            Response::gaussian(vec![0.0, 1.0]),
        )
        .unwrap();
        let u = enumerate_terms(&bin, 1, TransformSet::Fp2);
        assert_eq!(u.order1, vec![Feature::single(0, Transform::IDENTITY)]);
    }

    #[test]
    fn binary_columns_reject_nonidentity() {
        let ds = Dataset::new(
            vec![Column::new("b", vec![0.0, 1.0], ColumnKind::Binary)],
            Response::gaussian(vec![0.0, 1.0]),
        )
        .unwrap();
        let f = Feature::single(0, Transform::simple(Power::Two));
        assert!(evaluate_feature(&f, &ds).is_err());
    }
}
