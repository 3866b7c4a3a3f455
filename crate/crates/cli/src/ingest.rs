use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sunprobit::{Dataset, ModelFamily, Predictors};

use crate::config::RunConfig;
use crate::error::{config_err, CliResult, DataError};

pub const INTERCEPT: &str = "(intercept)";
const TARGET_SD: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::parse(&text)?)
    }

    pub fn parse(text: &str) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| DataError::MalformedCsv(e.to_string()))?
            .iter()
            .map(str::to_owned)
            .collect();
        if headers.is_empty() || headers.iter().all(String::is_empty) {
            return Err(DataError::MalformedCsv("missing header".into()));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| DataError::MalformedCsv(e.to_string()))?;
            rows.push(rec.iter().map(str::to_owned).collect());
        }
        Ok(Table { headers, rows })
    }

    fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    fn require(&self, name: &str) -> Result<usize, DataError> {
        self.column(name)
            .ok_or_else(|| DataError::MalformedCsv(format!("column {name:?} not found")))
    }

    fn numeric(&self, col: usize) -> Result<Vec<f64>, DataError> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r[col]
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| DataError::NonNumericPredictor {
                        row: i + 1,
                        column: self.headers[col].clone(),
                        value: r[col].clone(),
                    })
            })
            .collect()
    }
}

/// Affine map `x ↦ (x − center)·factor` applied to one raw column (or to
/// every class column of a discrete-choice attribute).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnTransform {
    pub name: String,
    pub center: f64,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub response: String,
    /// `labels[l-1]` is the data value of class `l`.
    pub labels: Vec<String>,
    pub integer_labels: bool,
    pub columns: Vec<ColumnTransform>,
    pub dropped: Vec<String>,
    pub intercept: bool,
    pub standardized: bool,
    pub per_class: bool,
}

impl Preprocessing {
    pub fn classes(&self) -> usize {
        self.labels.len()
    }

    /// Predictor names in model order.
    pub fn predictor_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.intercept {
            out.push(INTERCEPT.to_owned());
        }
        out.extend(self.columns.iter().map(|c| c.name.clone()));
        out
    }

    pub fn coefficient_names(&self, family: ModelFamily) -> Vec<String> {
        let names = self.predictor_names();
        match family {
            ModelFamily::DiscreteChoice => names,
            _ => (1..self.classes())
                .flat_map(|l| names.iter().map(move |n| format!("{n}[{l}]")))
                .collect(),
        }
    }

    fn label_of(&self, raw: &str) -> Option<usize> {
        if let Some(i) = self.labels.iter().position(|l| l == raw) {
            return Some(i + 1);
        }
        if self.integer_labels {
            let v: usize = raw.parse().ok()?;
            return (1..=self.classes()).contains(&v).then_some(v);
        }
        None
    }

    pub fn label_name(&self, class: usize) -> &str {
        &self.labels[class - 1]
    }

    /// Transformed predictors for every row of `table`, plus labels when the
    /// response column is present.
    pub fn apply(&self, table: &Table) -> CliResult<(Predictors, Option<Vec<usize>>)> {
        let n = table.rows.len();
        let labels = match table.column(&self.response) {
            Some(c) => Some(
                table
                    .rows
                    .iter()
                    .enumerate()
                    .map(|(i, r)| {
                        self.label_of(&r[c]).ok_or_else(|| DataError::UnknownLabel {
                            row: i + 1,
                            label: r[c].clone(),
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?,
            ),
            None => None,
        };
        let offset = usize::from(self.intercept);
        let p = offset + self.columns.len();
        let x = if self.per_class {
            let l = self.classes();
            let mut mats = vec![DMatrix::zeros(l, p); n];
            for (j, t) in self.columns.iter().enumerate() {
                for k in 0..l {
                    let vals = table.numeric(table.require(&format!("{}_{}", t.name, k + 1))?)?;
                    for (i, v) in vals.into_iter().enumerate() {
                        mats[i][(k, offset + j)] = (v - t.center) * t.factor;
                    }
                }
            }
            if self.intercept {
                for m in &mut mats {
                    m.column_mut(0).fill(1.0);
                }
            }
            Predictors::PerClass(mats)
        } else {
            let mut x = DMatrix::zeros(n, p);
            if self.intercept {
                x.column_mut(0).fill(1.0);
            }
            for (j, t) in self.columns.iter().enumerate() {
                let vals = table.numeric(table.require(&t.name)?)?;
                for (i, v) in vals.into_iter().enumerate() {
                    x[(i, offset + j)] = (v - t.center) * t.factor;
                }
            }
            Predictors::PerUnit(x)
        };
        Ok((x, labels))
    }
}

fn infer_labels(cfg: &RunConfig, table: &Table, col: usize) -> CliResult<(Vec<String>, bool)> {
    let raw: Vec<&str> = table.rows.iter().map(|r| r[col].as_str()).collect();
    let ints: Option<Vec<usize>> = raw
        .iter()
        .map(|s| s.parse::<usize>().ok().filter(|v| *v >= 1))
        .collect();
    if let Some(ints) = ints {
        let max = ints.iter().copied().max().unwrap_or(0);
        let l = cfg.classes.unwrap_or(max);
        if l < 2 {
            return Err(config_err(
                "cannot infer at least 2 classes from the data; set classes",
            ));
        }
        if let Some(i) = ints.iter().position(|&v| v > l) {
            return Err(DataError::UnknownLabel {
                row: i + 1,
                label: raw[i].to_owned(),
            }
            .into());
        }
        return Ok(((1..=l).map(|v| v.to_string()).collect(), true));
    }
    let mut labels: Vec<String> = Vec::new();
    for (i, s) in raw.iter().enumerate() {
        if !labels.iter().any(|l| l == s) {
            if cfg.classes.is_some_and(|l| labels.len() == l) {
                return Err(DataError::UnknownLabel {
                    row: i + 1,
                    label: (*s).to_owned(),
                }
                .into());
            }
            labels.push((*s).to_owned());
        }
    }
    let l = cfg.classes.unwrap_or(labels.len());
    if l < 2 {
        return Err(config_err(
            "cannot infer at least 2 classes from the data; set classes",
        ));
    }
    while labels.len() < l {
        labels.push(format!("class{}", labels.len() + 1));
    }
    Ok((labels, false))
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

/// Reads the training table: maps labels, fits the column transforms and
/// drops constant columns.
pub fn ingest(cfg: &RunConfig, table: &Table) -> CliResult<(Dataset, Preprocessing)> {
    let rc = table.require(&cfg.response)?;
    let (labels, integer_labels) = infer_labels(cfg, table, rc)?;
    let l = labels.len();
    let per_class = cfg.family() == ModelFamily::DiscreteChoice;
    let names: Vec<String> = match (&cfg.per_class, &cfg.predictors) {
        (Some(stems), _) => stems.clone(),
        (None, Some(cols)) => cols.clone(),
        (None, None) => table
            .headers
            .iter()
            .filter(|h| **h != cfg.response)
            .cloned()
            .collect(),
    };
    let n = table.rows.len();
    let mut columns = Vec::new();
    let mut dropped = Vec::new();
    for name in names {
        let values: Vec<f64> = if per_class {
            let mut all = Vec::new();
            for k in 1..=l {
                all.extend(table.numeric(table.require(&format!("{name}_{k}"))?)?);
            }
            all
        } else {
            table.numeric(table.require(&name)?)?
        };
        if n < 2 {
            columns.push(ColumnTransform {
                name,
                center: 0.0,
                factor: 1.0,
            });
            continue;
        }
        let (m, sd) = mean_sd(&values);
        if values.iter().all(|v| *v == values[0]) {
            dropped.push(name);
            continue;
        }
        let (center, factor) = if cfg.standardize {
            (m, TARGET_SD / sd)
        } else {
            (0.0, 1.0)
        };
        columns.push(ColumnTransform {
            name,
            center,
            factor,
        });
    }
    let intercept = cfg.intercept && !per_class;
    if columns.is_empty() && !intercept {
        return Err(config_err(
            "no predictors left after dropping constant columns",
        ));
    }
    let prep = Preprocessing {
        response: cfg.response.clone(),
        labels,
        integer_labels,
        columns,
        dropped,
        intercept,
        standardized: cfg.standardize && n >= 2,
        per_class,
    };
    let (x, y) = prep.apply(table)?;
    let y = y.expect("response column checked above");
    Ok((Dataset::new(y, x)?, prep))
}
