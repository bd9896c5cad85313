//! Dataset ingestion, categorical expansion and train/test splitting.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::chain_rng;
use crate::transforms::required_shift;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("column `{column}`, row {row}: `{value}` is not a finite number")]
    NonNumeric {
        column: String,
        row: usize,
        value: String,
    },
    #[error("column `{column}`, row {row}: {value} is not 0/1")]
    NonBinary {
        column: String,
        row: usize,
        value: f64,
    },
    #[error("column `{column}`, row {row}: event time {value} is not positive")]
    NonPositiveTime {
        column: String,
        row: usize,
        value: f64,
    },
    #[error("column `{column}`: level `{level}` not among declared levels")]
    UnknownLevel { column: String, level: String },
    #[error("column `{0}` has a single level")]
    SingleLevel(String),
    #[error("column `{column}` has {got} values, expected {expected}")]
    Length {
        column: String,
        got: usize,
        expected: usize,
    },
    #[error("dataset needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("time-to-event response needs a status column")]
    MissingStatus,
    #[error("stratified split requires a time-to-event response")]
    StratifyNeedsSurvival,
    #[error("train fraction {0} leaves an empty partition")]
    EmptyPartition(f64),
    #[error("invalid column name `{0}`: names may not contain `*`, `^`, `(` or `)`")]
    BadName(String),
    #[error("unknown family `{0}` (expected gaussian, bernoulli or timetoevent)")]
    UnknownFamily(String),
}

/// Observation model of the response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Bernoulli,
    #[serde(alias = "cox")]
    TimeToEvent,
}

impl FromStr for Family {
    type Err = DataError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Family::Gaussian),
            "bernoulli" | "binomial" | "logistic" => Ok(Family::Bernoulli),
            "timetoevent" | "cox" => Ok(Family::TimeToEvent),
            _ => Err(DataError::UnknownFamily(s.to_string())),
        }
    }
}

impl Family {
    pub fn has_intercept(self) -> bool {
        self != Family::TimeToEvent
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    Binary,
    /// Indicator of one non-baseline level of a categorical variable.
    Indicator,
}

impl ColumnKind {
    pub fn is_continuous(self) -> bool {
        self == ColumnKind::Continuous
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub values: Vec<f64>,
    pub kind: ColumnKind,
    /// Original variable; differs from `name` for categorical indicators.
    pub source: String,
    pub min: f64,
    /// Positivity shift applied before non-identity transforms.
    pub shift: f64,
}

impl Column {
    pub fn new(name: &str, values: Vec<f64>, kind: ColumnKind) -> Self {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let shift = if kind.is_continuous() {
            required_shift(&values)
        } else {
            0.0
        };
        Column {
            name: name.to_string(),
            values,
            kind,
            source: name.to_string(),
            min,
            shift,
        }
    }

    fn indicator(name: String, source: &str, values: Vec<f64>) -> Self {
        let mut c = Column::new(&name, values, ColumnKind::Indicator);
        c.source = source.to_string();
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub family: Family,
    pub y: Vec<f64>,
    /// Event indicators (time-to-event only): true = event observed.
    pub status: Option<Vec<bool>>,
}

impl Response {
    pub fn gaussian(y: Vec<f64>) -> Self {
        Response {
            family: Family::Gaussian,
            y,
            status: None,
        }
    }

    pub fn bernoulli(y: Vec<f64>) -> Self {
        Response {
            family: Family::Bernoulli,
            y,
            status: None,
        }
    }

    pub fn survival(times: Vec<f64>, status: Vec<bool>) -> Self {
        Response {
            family: Family::TimeToEvent,
            y: times,
            status: Some(status),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn events(&self) -> &[bool] {
        self.status.as_deref().unwrap_or(&[])
    }

    fn validate(&self, name: &str) -> Result<(), DataError> {
        match self.family {
            Family::Gaussian => {}
            Family::Bernoulli => {
                if let Some((row, &v)) = self
                    .y
                    .iter()
                    .enumerate()
                    .find(|(_, &v)| v != 0.0 && v != 1.0)
                {
                    return Err(DataError::NonBinary {
                        column: name.to_string(),
                        row,
                        value: v,
                    });
                }
            }
            Family::TimeToEvent => {
                let status = self.status.as_ref().ok_or(DataError::MissingStatus)?;
                if status.len() != self.y.len() {
                    return Err(DataError::Length {
                        column: "status".into(),
                        got: status.len(),
                        expected: self.y.len(),
                    });
                }
                if let Some((row, &v)) = self.y.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
                    return Err(DataError::NonPositiveTime {
                        column: name.to_string(),
                        row,
                        value: v,
                    });
                }
            }
        }
        Ok(())
    }

    fn subset(&self, rows: &[usize]) -> Response {
        Response {
            family: self.family,
            y: rows.iter().map(|&i| self.y[i]).collect(),
            status: self
                .status
                .as_ref()
                .map(|s| rows.iter().map(|&i| s[i]).collect()),
        }
    }
}

/// Immutable table of predictor columns plus a response.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<Column>,
    response: Response,
    response_name: String,
    status_name: Option<String>,
    n: usize,
}

impl Dataset {
    pub fn new(columns: Vec<Column>, response: Response) -> Result<Self, DataError> {
        let n = response.len();
        if n < 2 {
            return Err(DataError::TooFewRows(n));
        }
        for c in &columns {
            if c.values.len() != n {
                return Err(DataError::Length {
                    column: c.name.clone(),
                    got: c.values.len(),
                    expected: n,
                });
            }
            if c.name.contains(['*', '^', '(', ')']) || c.name.is_empty() {
                return Err(DataError::BadName(c.name.clone()));
            }
            if c.kind != ColumnKind::Continuous {
                if let Some((row, &v)) = c
                    .values
                    .iter()
                    .enumerate()
                    .find(|(_, &v)| v != 0.0 && v != 1.0)
                {
                    return Err(DataError::NonBinary {
                        column: c.name.clone(),
                        row,
                        value: v,
                    });
                }
            }
        }
        response.validate("y")?;
        let status_name = response.status.as_ref().map(|_| "status".to_string());
        Ok(Dataset {
            columns,
            response,
            response_name: "y".to_string(),
            status_name,
            n,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn response(&self) -> &Response {
        &self.response
    }

    pub fn family(&self) -> Family {
        self.response.family
    }

    pub fn response_name(&self) -> &str {
        &self.response_name
    }

    pub fn names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Replaces the response, keeping columns and shifts.
    pub fn with_response(&self, response: Response) -> Result<Dataset, DataError> {
        if response.len() != self.n {
            return Err(DataError::Length {
                column: "response".into(),
                got: response.len(),
                expected: self.n,
            });
        }
        response.validate(&self.response_name)?;
        let mut out = self.clone();
        out.status_name = response.status.as_ref().map(|_| {
            self.status_name
                .clone()
                .unwrap_or_else(|| "status".to_string())
        });
        out.response = response;
        Ok(out)
    }

    /// Rows in the given order; shifts are inherited, not recomputed.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let columns = self
            .columns
            .iter()
            .map(|c| Column {
                values: rows.iter().map(|&i| c.values[i]).collect(),
                ..c.clone()
            })
            .collect();
        Dataset {
            columns,
            response: self.response.subset(rows),
            response_name: self.response_name.clone(),
            status_name: self.status_name.clone(),
            n: rows.len(),
        }
    }

    /// Reorders columns to match `reference` and adopts its kinds and shifts,
    /// so features fitted on `reference` evaluate identically here.
    pub fn align_to(&self, reference: &[Column]) -> Result<Dataset, DataError> {
        let columns = reference
            .iter()
            .map(|r| {
                let c = self
                    .columns
                    .iter()
                    .find(|c| c.name == r.name)
                    .ok_or_else(|| DataError::MissingColumn(r.name.clone()))?;
                Ok(Column {
                    name: r.name.clone(),
                    values: c.values.clone(),
                    kind: r.kind,
                    source: r.source.clone(),
                    min: r.min,
                    shift: r.shift,
                })
            })
            .collect::<Result<Vec<_>, DataError>>()?;
        Ok(Dataset {
            columns,
            ..self.clone()
        })
    }

    /// Writes predictor columns followed by the response (and status).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = self.columns.iter().map(|c| c.name.clone()).collect();
        header.push(self.response_name.clone());
        if let Some(s) = &self.status_name {
            header.push(s.clone());
        }
        w.write_record(&header)?;
        for i in 0..self.n {
            let mut rec: Vec<String> = self
                .columns
                .iter()
                .map(|c| format!("{:?}", c.values[i]))
                .collect();
            rec.push(format!("{:?}", self.response.y[i]));
            if let Some(s) = &self.response.status {
                rec.push(if s[i] { "1" } else { "0" }.to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| DataError::Io {
            path: "<writer>".into(),
            source: e,
        })?;
        Ok(())
    }
}

/// Declared kind of a CSV column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemaKind {
    Continuous,
    Binary,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnSpec {
    Kind(SchemaKind),
    /// Categorical with an explicit level order; the first level is the baseline.
    Levels {
        kind: SchemaKind,
        levels: Vec<String>,
    },
}

impl ColumnSpec {
    pub fn kind(&self) -> SchemaKind {
        match self {
            ColumnSpec::Kind(k) => *k,
            ColumnSpec::Levels { kind, .. } => *kind,
        }
    }
}

/// Predictor name to declared kind.
pub type Schema = BTreeMap<String, ColumnSpec>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseDecl {
    pub name: String,
    #[serde(default)]
    pub status: Option<String>,
    pub family: Family,
}

pub fn load_csv(path: &Path, schema: &Schema, response: &ResponseDecl) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    read_csv(file, schema, Some(response))
}

/// Loads predictor columns only; the response is a zero Gaussian placeholder.
pub fn load_predictor_csv(path: &Path, schema: &Schema) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    read_csv(file, schema, None)
}

fn parse_number(raw: &str, column: &str, row: usize) -> Result<f64, DataError> {
    raw.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| DataError::NonNumeric {
            column: column.to_string(),
            row,
            value: raw.to_string(),
        })
}

fn level_suffix(k: usize) -> String {
    let letters = b"abcdefghijklmnopqrstuvwxyz";
    if k < letters.len() {
        (letters[k] as char).to_string()
    } else {
        format!("_{k}")
    }
}

pub fn read_csv<R: Read>(
    reader: R,
    schema: &Schema,
    response: Option<&ResponseDecl>,
) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    for name in schema.keys() {
        find(name)?;
    }
    let y_idx = response.map(|r| find(&r.name)).transpose()?;
    let status_idx = match response {
        Some(r) if r.family == Family::TimeToEvent => {
            Some(find(r.status.as_deref().ok_or(DataError::MissingStatus)?)?)
        }
        _ => None,
    };

    let records: Vec<csv::StringRecord> = rdr.records().collect::<Result<_, _>>()?;
    let n = records.len();

    // Predictors in header order.
    let mut columns = Vec::new();
    for (h, name) in header.iter().enumerate() {
        let Some(spec) = schema.get(name) else {
            continue;
        };
        match spec.kind() {
            SchemaKind::Continuous | SchemaKind::Binary => {
                let values = records
                    .iter()
                    .enumerate()
                    .map(|(row, r)| parse_number(&r[h], name, row))
                    .collect::<Result<Vec<_>, _>>()?;
                let kind = if spec.kind() == SchemaKind::Binary {
                    ColumnKind::Binary
                } else {
                    ColumnKind::Continuous
                };
                columns.push(Column::new(name, values, kind));
            }
            SchemaKind::Categorical => {
                let raw: Vec<&str> = records.iter().map(|r| &r[h]).collect();
                let levels: Vec<String> = match spec {
                    ColumnSpec::Levels { levels, .. } => {
                        if let Some(bad) = raw.iter().find(|v| !levels.iter().any(|l| l == *v)) {
                            return Err(DataError::UnknownLevel {
                                column: name.clone(),
                                level: bad.to_string(),
                            });
                        }
                        levels.clone()
                    }
                    ColumnSpec::Kind(_) => {
                        let mut seen: Vec<String> = Vec::new();
                        for v in &raw {
                            if !seen.iter().any(|s| s == v) {
                                seen.push(v.to_string());
                            }
                        }
                        seen
                    }
                };
                if levels.len() < 2 {
                    return Err(DataError::SingleLevel(name.clone()));
                }
                for (k, level) in levels.iter().enumerate().skip(1) {
                    let values = raw
                        .iter()
                        .map(|v| if *v == level { 1.0 } else { 0.0 })
                        .collect();
                    columns.push(Column::indicator(
                        format!("{name}{}", level_suffix(k - 1)),
                        name,
                        values,
                    ));
                }
            }
        }
    }

    let (resp, response_name, status_name) = match (response, y_idx) {
        (Some(decl), Some(yi)) => {
            let y = records
                .iter()
                .enumerate()
                .map(|(row, r)| parse_number(&r[yi], &decl.name, row))
                .collect::<Result<Vec<_>, _>>()?;
            let status = status_idx
                .map(|si| {
                    let sname = decl.status.clone().unwrap_or_default();
                    records
                        .iter()
                        .enumerate()
                        .map(|(row, r)| {
                            let v = parse_number(&r[si], &sname, row)?;
                            if v == 0.0 || v == 1.0 {
                                Ok(v == 1.0)
                            } else {
                                Err(DataError::NonBinary {
                                    column: sname.clone(),
                                    row,
                                    value: v,
                                })
                            }
                        })
                        .collect::<Result<Vec<_>, _>>()
                })
                .transpose()?;
            let resp = Response {
                family: decl.family,
                y,
                status,
            };
            resp.validate(&decl.name)?;
            (resp, decl.name.clone(), decl.status.clone())
        }
        _ => (Response::gaussian(vec![0.0; n]), "y".to_string(), None),
    };

    let mut ds = Dataset::new(columns, resp)?;
    ds.response_name = response_name;
    ds.status_name = if ds.response.status.is_some() {
        status_name
    } else {
        None
    };
    Ok(ds)
}

/// Random disjoint train/test partition. With `stratify_on_status`, events and
/// censored rows are split separately so both sets keep the censoring share.
/// Row order within each part follows the original file order.
pub fn split(
    ds: &Dataset,
    train_fraction: f64,
    seed: u64,
    stratify_on_status: bool,
) -> Result<(Dataset, Dataset), DataError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::EmptyPartition(train_fraction));
    }
    let mut rng = chain_rng(seed, 0);
    let mut train: Vec<usize> = Vec::new();
    if stratify_on_status {
        let status = ds
            .response
            .status
            .as_ref()
            .ok_or(DataError::StratifyNeedsSurvival)?;
        for flag in [false, true] {
            let mut stratum: Vec<usize> = (0..ds.n).filter(|&i| status[i] == flag).collect();
            stratum.shuffle(&mut rng);
            let k = (train_fraction * stratum.len() as f64).round() as usize;
            train.extend_from_slice(&stratum[..k]);
        }
    } else {
        let mut all: Vec<usize> = (0..ds.n).collect();
        all.shuffle(&mut rng);
        let k = (train_fraction * ds.n as f64).round() as usize;
        train.extend_from_slice(&all[..k]);
    }
    if train.is_empty() || train.len() == ds.n {
        return Err(DataError::EmptyPartition(train_fraction));
    }
    train.sort_unstable();
    let mut in_train = vec![false; ds.n];
    for &i in &train {
        in_train[i] = true;
    }
    let test: Vec<usize> = (0..ds.n).filter(|&i| !in_train[i]).collect();
    Ok((ds.subset(&train), ds.subset(&test)))
}
