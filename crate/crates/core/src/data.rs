//! Observation tables, weighted empirical CDFs and outcome evaluation grids.
//!
//! A table always holds exactly two groups, called `W` and `B` internally.
//! The labels found in the input file are kept alongside so that outputs can
//! be written back with the user's own names.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fmt::fmt_f64;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("row {row}, column `{column}`: invalid value `{value}` ({reason})")]
    NonNumericValue {
        row: usize,
        column: String,
        value: String,
        reason: String,
    },
    #[error("expected two groups, found {found}")]
    FewerThanTwoGroups { found: usize },
    #[error("expected two groups, found labels {labels:?}")]
    MoreThanTwoGroups { labels: Vec<String> },
    #[error("group label `{label}` in row {row} is neither `{w}` nor `{b}`")]
    UnknownGroupLabel {
        row: usize,
        label: String,
        w: String,
        b: String,
    },
    #[error("group `{label}` has fewer than two rows")]
    EmptyGroup { label: String },
    #[error("covariate `{name}` declared twice")]
    DuplicateCovariate { name: String },
    #[error("observation {row} has {got} covariates, schema has {expected}")]
    CovariateArity { row: usize, got: usize, expected: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: {0} values vs {1} weights")]
    LengthMismatch(usize, usize),
    #[error("invalid weight {0}: weights must be finite and positive")]
    InvalidWeight(f64),
    #[error("all outcome values are identical")]
    DegenerateOutcome,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which of the two compared groups an observation belongs to.
///
/// `W` is the group whose conditional structure is used to build the
/// counterfactual; swapping the roles gives the alternative counterfactual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    W,
    B,
}

impl Group {
    pub fn other(self) -> Group {
        match self {
            Group::W => Group::B,
            Group::B => Group::W,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariateKind {
    Continuous,
    Discrete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Covariate {
    pub name: String,
    pub kind: CovariateKind,
}

impl Covariate {
    pub fn continuous(name: impl Into<String>) -> Self {
        Covariate {
            name: name.into(),
            kind: CovariateKind::Continuous,
        }
    }

    pub fn discrete(name: impl Into<String>) -> Self {
        Covariate {
            name: name.into(),
            kind: CovariateKind::Discrete,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupLabels {
    pub w: String,
    pub b: String,
}

impl Default for GroupLabels {
    fn default() -> Self {
        GroupLabels {
            w: "W".into(),
            b: "B".into(),
        }
    }
}

impl GroupLabels {
    pub fn label(&self, group: Group) -> &str {
        match group {
            Group::W => &self.w,
            Group::B => &self.b,
        }
    }

    pub fn swapped(&self) -> GroupLabels {
        GroupLabels {
            w: self.b.clone(),
            b: self.w.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub outcome: f64,
    pub group: Group,
    pub weight: f64,
    pub covariates: Vec<f64>,
}

/// A validated two-group weighted sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationTable {
    rows: Vec<Observation>,
    labels: GroupLabels,
    schema: Vec<Covariate>,
}

impl ObservationTable {
    /// Builds a table, enforcing every row-level invariant and at least two
    /// rows per group.
    pub fn new(schema: Vec<Covariate>, labels: GroupLabels, rows: Vec<Observation>) -> Result<Self, DataError> {
        Self::build(schema, labels, rows, 2)
    }

    fn build(
        schema: Vec<Covariate>,
        labels: GroupLabels,
        rows: Vec<Observation>,
        min_per_group: usize,
    ) -> Result<Self, DataError> {
        let mut seen = BTreeSet::new();
        for c in &schema {
            if !seen.insert(c.name.as_str()) {
                return Err(DataError::DuplicateCovariate { name: c.name.clone() });
            }
        }
        if labels.w == labels.b {
            return Err(DataError::FewerThanTwoGroups { found: 1 });
        }
        let mut counts = [0usize; 2];
        for (i, r) in rows.iter().enumerate() {
            let row = i + 1;
            if r.covariates.len() != schema.len() {
                return Err(DataError::CovariateArity {
                    row,
                    got: r.covariates.len(),
                    expected: schema.len(),
                });
            }
            if !(r.weight.is_finite() && r.weight > 0.0) {
                return Err(DataError::NonNumericValue {
                    row,
                    column: "weight".into(),
                    value: r.weight.to_string(),
                    reason: "weight must be finite and positive".into(),
                });
            }
            if !r.outcome.is_finite() {
                return Err(DataError::NonNumericValue {
                    row,
                    column: "outcome".into(),
                    value: r.outcome.to_string(),
                    reason: "outcome must be finite".into(),
                });
            }
            for (c, v) in schema.iter().zip(&r.covariates) {
                if !v.is_finite() {
                    return Err(DataError::NonNumericValue {
                        row,
                        column: c.name.clone(),
                        value: v.to_string(),
                        reason: "covariate must be finite".into(),
                    });
                }
            }
            counts[r.group as usize] += 1;
        }
        for g in [Group::W, Group::B] {
            if counts[g as usize] < min_per_group {
                return Err(DataError::EmptyGroup {
                    label: labels.label(g).to_string(),
                });
            }
        }
        Ok(ObservationTable { rows, labels, schema })
    }

    pub fn rows(&self) -> &[Observation] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn labels(&self) -> &GroupLabels {
        &self.labels
    }

    pub fn schema(&self) -> &[Covariate] {
        &self.schema
    }

    pub fn covariate_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|c| c.name == name)
    }

    pub fn continuous_indices(&self) -> Vec<usize> {
        self.kind_indices(CovariateKind::Continuous)
    }

    pub fn discrete_indices(&self) -> Vec<usize> {
        self.kind_indices(CovariateKind::Discrete)
    }

    fn kind_indices(&self, kind: CovariateKind) -> Vec<usize> {
        self.schema
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == kind)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn group_rows(&self, group: Group) -> impl Iterator<Item = &Observation> {
        self.rows.iter().filter(move |r| r.group == group)
    }

    pub fn group_weight(&self, group: Group) -> f64 {
        self.group_rows(group).map(|r| r.weight).sum()
    }

    /// Rows whose index satisfies `keep`. Each group must retain at least one
    /// row.
    pub fn subset(&self, mut keep: impl FnMut(usize, &Observation) -> bool) -> Result<Self, DataError> {
        let rows = self
            .rows
            .iter()
            .enumerate()
            .filter(|(i, r)| keep(*i, r))
            .map(|(_, r)| r.clone())
            .collect();
        Self::build(self.schema.clone(), self.labels.clone(), rows, 1)
    }

    /// The same sample with the roles of the two groups exchanged.
    pub fn swap_groups(&self) -> Self {
        let rows = self
            .rows
            .iter()
            .map(|r| Observation {
                group: r.group.other(),
                ..r.clone()
            })
            .collect();
        ObservationTable {
            rows,
            labels: self.labels.swapped(),
            schema: self.schema.clone(),
        }
    }

    /// Weighted empirical CDF of one group's outcomes on `grid`.
    pub fn group_ecdf(&self, group: Group, grid: &EvaluationGrid) -> Vec<f64> {
        let (v, w): (Vec<f64>, Vec<f64>) = self.group_rows(group).map(|r| (r.outcome, r.weight)).unzip();
        WeightedEcdf::new(&v, &w)
            .map(|e| e.eval_grid(grid))
            .unwrap_or_else(|_| vec![0.0; grid.len()])
    }
}

/// Column mapping used to read a delimited file into an [`ObservationTable`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMapping {
    pub outcome: String,
    pub group: String,
    #[serde(default)]
    pub weight: Option<String>,
    #[serde(default)]
    pub covariates: Vec<Covariate>,
    #[serde(default)]
    pub labels: GroupLabels,
}

/// Reads a comma-delimited file with a header row.
///
/// Row numbers in errors count data rows from 1, excluding the header.
pub fn load_table<R: Read>(source: R, mapping: &ColumnMapping) -> Result<ObservationTable, DataError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize, DataError> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| DataError::UnknownColumn(name.to_string()))
    };
    let outcome_col = col(&mapping.outcome)?;
    let group_col = col(&mapping.group)?;
    let weight_col = mapping.weight.as_deref().map(col).transpose()?;
    let cov_cols = mapping
        .covariates
        .iter()
        .map(|c| col(&c.name))
        .collect::<Result<Vec<_>, _>>()?;

    let mut distinct: Vec<String> = Vec::new();
    let mut raw = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let field = |idx: usize| record.get(idx).unwrap_or("").trim();
        let number = |idx: usize, name: &str| -> Result<f64, DataError> {
            let s = field(idx);
            let bad = |reason: &str| DataError::NonNumericValue {
                row,
                column: name.to_string(),
                value: s.to_string(),
                reason: reason.to_string(),
            };
            if s.is_empty() {
                return Err(bad("missing value"));
            }
            let v: f64 = s.parse().map_err(|_| bad("not a number"))?;
            if !v.is_finite() {
                return Err(bad("not finite"));
            }
            Ok(v)
        };
        let label = field(group_col).to_string();
        if label.is_empty() {
            return Err(DataError::NonNumericValue {
                row,
                column: mapping.group.clone(),
                value: String::new(),
                reason: "missing group label".into(),
            });
        }
        if !distinct.contains(&label) {
            distinct.push(label.clone());
        }
        let outcome = number(outcome_col, &mapping.outcome)?;
        let weight = match (weight_col, &mapping.weight) {
            (Some(idx), Some(name)) => {
                let w = number(idx, name)?;
                if w <= 0.0 {
                    return Err(DataError::NonNumericValue {
                        row,
                        column: name.clone(),
                        value: field(idx).to_string(),
                        reason: "weight must be positive".into(),
                    });
                }
                w
            }
            _ => 1.0,
        };
        let covariates = cov_cols
            .iter()
            .zip(&mapping.covariates)
            .map(|(&idx, c)| number(idx, &c.name))
            .collect::<Result<Vec<_>, _>>()?;
        raw.push((row, label, outcome, weight, covariates));
    }

    if distinct.len() > 2 {
        return Err(DataError::MoreThanTwoGroups { labels: distinct });
    }
    if distinct.len() < 2 {
        return Err(DataError::FewerThanTwoGroups { found: distinct.len() });
    }
    let labels = mapping.labels.clone();
    let rows = raw
        .into_iter()
        .map(|(row, label, outcome, weight, covariates)| {
            let group = if label == labels.w {
                Group::W
            } else if label == labels.b {
                Group::B
            } else {
                return Err(DataError::UnknownGroupLabel {
                    row,
                    label,
                    w: labels.w.clone(),
                    b: labels.b.clone(),
                });
            };
            Ok(Observation {
                outcome,
                group,
                weight,
                covariates,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    ObservationTable::new(mapping.covariates.clone(), labels, rows)
}

pub fn load_table_path(path: impl AsRef<Path>, mapping: &ColumnMapping) -> Result<ObservationTable, DataError> {
    let file = std::fs::File::open(path)?;
    load_table(std::io::BufReader::new(file), mapping)
}

/// Writes a table in the standard CSV schema: `y,group,weight,<covariates...>`.
/// Floats are printed with 17 significant digits so a reload is bit-exact.
pub fn write_table<W: Write>(table: &ObservationTable, sink: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["y".to_string(), "group".to_string(), "weight".to_string()];
    header.extend(table.schema.iter().map(|c| c.name.clone()));
    w.write_record(&header)?;
    for r in &table.rows {
        let mut rec = vec![
            fmt_f64(r.outcome),
            table.labels.label(r.group).to_string(),
            fmt_f64(r.weight),
        ];
        rec.extend(r.covariates.iter().map(|&v| fmt_f64(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// The mapping matching [`write_table`]'s output for a given table.
pub fn standard_mapping(table: &ObservationTable) -> ColumnMapping {
    ColumnMapping {
        outcome: "y".into(),
        group: "group".into(),
        weight: Some("weight".into()),
        covariates: table.schema.to_vec(),
        labels: table.labels.clone(),
    }
}

/// Right-continuous weighted empirical CDF.
#[derive(Debug, Clone)]
pub struct WeightedEcdf {
    values: Vec<f64>,
    cumulative: Vec<f64>,
}

impl WeightedEcdf {
    pub fn new(values: &[f64], weights: &[f64]) -> Result<Self, DataError> {
        if values.len() != weights.len() {
            return Err(DataError::LengthMismatch(values.len(), weights.len()));
        }
        if values.is_empty() {
            return Err(DataError::EmptyInput);
        }
        if let Some(&w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(DataError::InvalidWeight(w));
        }
        let mut pairs: Vec<(f64, f64)> = values.iter().copied().zip(weights.iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        let mut values = Vec::with_capacity(pairs.len());
        let mut cumulative = Vec::with_capacity(pairs.len());
        let mut acc = 0.0;
        for (v, w) in pairs {
            acc += w;
            if values.last() == Some(&v) {
                *cumulative.last_mut().unwrap() = acc;
            } else {
                values.push(v);
                cumulative.push(acc);
            }
        }
        // Divide once per atom so F(max) is exactly 1.
        for c in &mut cumulative {
            *c /= total;
        }
        *cumulative.last_mut().unwrap() = 1.0;
        Ok(WeightedEcdf { values, cumulative })
    }

    pub fn eval(&self, y: f64) -> f64 {
        let k = self.values.partition_point(|&v| v <= y);
        if k == 0 {
            0.0
        } else {
            self.cumulative[k - 1]
        }
    }

    pub fn eval_grid(&self, grid: &EvaluationGrid) -> Vec<f64> {
        grid.points().iter().map(|&y| self.eval(y)).collect()
    }

    /// Smallest atom whose cumulative mass reaches `p`.
    pub fn quantile(&self, p: f64) -> f64 {
        let k = self.cumulative.partition_point(|&c| c < p);
        self.values[k.min(self.values.len() - 1)]
    }

    pub fn atoms(&self) -> &[f64] {
        &self.values
    }
}

/// `Σ{w_i : v_i ≤ y} / Σ w_i`.
pub fn weighted_cdf(values: &[f64], weights: &[f64], y: f64) -> Result<f64, DataError> {
    Ok(WeightedEcdf::new(values, weights)?.eval(y))
}

/// Strictly increasing outcome thresholds at which every curve is evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EvaluationGrid {
    points: Vec<f64>,
}

impl EvaluationGrid {
    pub fn new(points: Vec<f64>) -> Result<Self, DataError> {
        if points.len() < 2 {
            return Err(DataError::InvalidGrid(format!(
                "need at least 2 points, got {}",
                points.len()
            )));
        }
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(DataError::InvalidGrid(format!("non-finite point {p}")));
        }
        if let Some(w) = points.windows(2).find(|w| w[0] >= w[1]) {
            return Err(DataError::InvalidGrid(format!(
                "points must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(EvaluationGrid { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the largest grid point `<= y`.
    pub fn step_index(&self, y: f64) -> Option<usize> {
        self.points.partition_point(|&p| p <= y).checked_sub(1)
    }
}

impl TryFrom<Vec<f64>> for EvaluationGrid {
    type Error = DataError;
    fn try_from(points: Vec<f64>) -> Result<Self, DataError> {
        EvaluationGrid::new(points)
    }
}

impl From<EvaluationGrid> for Vec<f64> {
    fn from(g: EvaluationGrid) -> Self {
        g.points
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy", deny_unknown_fields)]
pub enum GridPolicy {
    /// Pooled unique outcomes when there are at most 200 of them, otherwise
    /// 199 pooled quantiles.
    #[default]
    Auto,
    /// Pooled unique outcomes; falls back to `max_points` quantiles when there
    /// are more distinct values than that.
    Unique {
        max_points: usize,
    },
    /// `count` pooled weighted quantiles at levels `k / (count + 1)`.
    Quantiles {
        count: usize,
    },
    Explicit {
        points: Vec<f64>,
    },
}

pub const AUTO_UNIQUE_LIMIT: usize = 200;
pub const AUTO_QUANTILE_COUNT: usize = 199;

pub fn make_grid(table: &ObservationTable, policy: &GridPolicy) -> Result<EvaluationGrid, DataError> {
    if let GridPolicy::Explicit { points } = policy {
        return EvaluationGrid::new(points.clone());
    }
    let values: Vec<f64> = table.rows.iter().map(|r| r.outcome).collect();
    let weights: Vec<f64> = table.rows.iter().map(|r| r.weight).collect();
    let ecdf = WeightedEcdf::new(&values, &weights)?;
    let unique = ecdf.atoms();
    if unique.len() < 2 {
        return Err(DataError::DegenerateOutcome);
    }
    let (max_unique, count) = match *policy {
        GridPolicy::Auto => (AUTO_UNIQUE_LIMIT, AUTO_QUANTILE_COUNT),
        GridPolicy::Unique { max_points } => (max_points, max_points),
        GridPolicy::Quantiles { count } => (0, count),
        GridPolicy::Explicit { .. } => unreachable!(),
    };
    if unique.len() <= max_unique {
        return EvaluationGrid::new(unique.to_vec());
    }
    if count < 2 {
        return Err(DataError::InvalidGrid(format!("quantile count {count} < 2")));
    }
    let mut points: Vec<f64> = (1..=count)
        .map(|k| ecdf.quantile(k as f64 / (count as f64 + 1.0)))
        .collect();
    // Pin the ends to the pooled range so the grid spans every observation.
    points[0] = unique[0];
    points[count - 1] = unique[unique.len() - 1];
    points.dedup();
    EvaluationGrid::new(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn csv_mapping() -> ColumnMapping {
        ColumnMapping {
            outcome: "y".into(),
            group: "g".into(),
            weight: None,
            covariates: vec![Covariate::continuous("x")],
            labels: GroupLabels::default(),
        }
    }

    #[test]
    fn default_weights_are_one() {
        let src = "y,g,x\n1,W,0.5\n2,W,1.5\n3,B,2\n4,B,1e1\n";
        let t = load_table(src.as_bytes(), &csv_mapping()).unwrap();
        assert_eq!(t.len(), 4);
        assert!(t.rows().iter().all(|r| r.weight == 1.0));
        assert_eq!(t.rows()[3].covariates, vec![10.0]);
    }

    #[test]
    fn three_labels_rejected() {
        let src = "y,g,x\n1,W,0\n2,W,1\n3,B,2\n4,B,3\n5,H,4\n";
        let err = load_table(src.as_bytes(), &csv_mapping()).unwrap_err();
        assert!(matches!(err, DataError::MoreThanTwoGroups { .. }), "{err}");
    }

    #[test]
    fn negative_weight_names_row() {
        let mut src = String::from("y,g,x,w\n");
        for i in 1..=8 {
            let w = if i == 7 { -1.0 } else { 1.0 };
            let g = if i % 2 == 0 { "W" } else { "B" };
            src.push_str(&format!("{i},{g},{i},{w}\n"));
        }
        let mut m = csv_mapping();
        m.weight = Some("w".into());
        match load_table(src.as_bytes(), &m).unwrap_err() {
            DataError::NonNumericValue { row, column, .. } => {
                assert_eq!(row, 7);
                assert_eq!(column, "w");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn unknown_column_and_single_group() {
        let mut m = csv_mapping();
        m.covariates.push(Covariate::discrete("missing"));
        let src = "y,g,x\n1,W,0\n2,W,1\n3,B,2\n4,B,3\n";
        assert!(matches!(
            load_table(src.as_bytes(), &m).unwrap_err(),
            DataError::UnknownColumn(c) if c == "missing"
        ));
        let one = "y,g,x\n1,W,0\n2,W,1\n";
        assert!(matches!(
            load_table(one.as_bytes(), &csv_mapping()).unwrap_err(),
            DataError::FewerThanTwoGroups { found: 1 }
        ));
        let thin = "y,g,x\n1,W,0\n2,W,1\n3,B,2\n";
        assert!(matches!(
            load_table(thin.as_bytes(), &csv_mapping()).unwrap_err(),
            DataError::EmptyGroup { .. }
        ));
        let missing = "y,g,x\n1,W,0\n,W,1\n3,B,2\n4,B,3\n";
        assert!(matches!(
            load_table(missing.as_bytes(), &csv_mapping()).unwrap_err(),
            DataError::NonNumericValue { row: 2, .. }
        ));
    }

    #[test]
    fn weighted_cdf_examples() {
        let ones = [1.0, 1.0, 1.0];
        assert_eq!(weighted_cdf(&[1.0, 2.0, 3.0], &ones, 2.0).unwrap(), 2.0 / 3.0);
        assert_eq!(weighted_cdf(&[1.0, 2.0, 3.0], &ones, 0.5).unwrap(), 0.0);
        assert_eq!(weighted_cdf(&[0.0, 10.0], &[3.0, 1.0], 0.0).unwrap(), 0.75);
        assert!(matches!(weighted_cdf(&[], &[], 0.0), Err(DataError::EmptyInput)));
        assert!(matches!(
            weighted_cdf(&[1.0], &[1.0, 2.0], 0.0),
            Err(DataError::LengthMismatch(1, 2))
        ));
    }

    fn table_of(outcomes: &[f64]) -> ObservationTable {
        let rows = outcomes
            .iter()
            .enumerate()
            .map(|(i, &y)| Observation {
                outcome: y,
                group: if i % 2 == 0 { Group::W } else { Group::B },
                weight: 1.0,
                covariates: vec![],
            })
            .collect();
        ObservationTable::new(vec![], GroupLabels::default(), rows).unwrap()
    }

    #[test]
    fn grid_policies() {
        let t = table_of(&[1.0, 1.0, 2.0, 5.0]);
        let g = make_grid(&t, &GridPolicy::Unique { max_points: 10 }).unwrap();
        assert_eq!(g.points(), &[1.0, 2.0, 5.0]);
        let e = make_grid(
            &t,
            &GridPolicy::Explicit {
                points: vec![0.0, 50.0, 600.0],
            },
        )
        .unwrap();
        assert_eq!(e.points(), &[0.0, 50.0, 600.0]);
        let flat = table_of(&[3.0, 3.0, 3.0, 3.0]);
        assert!(matches!(
            make_grid(&flat, &GridPolicy::Auto),
            Err(DataError::DegenerateOutcome)
        ));

        let many: Vec<f64> = (0..10_000).map(|i| (i as f64).sqrt()).collect();
        let t = table_of(&many);
        let g = make_grid(&t, &GridPolicy::Auto).unwrap();
        assert!(g.len() <= AUTO_QUANTILE_COUNT && g.len() > 150);
        assert_eq!(g.points()[0], 0.0);
        assert_eq!(*g.points().last().unwrap(), 9999f64.sqrt());
    }

    #[test]
    fn grid_rejects_unsorted() {
        assert!(EvaluationGrid::new(vec![1.0, 1.0]).is_err());
        assert!(EvaluationGrid::new(vec![1.0]).is_err());
        assert_eq!(
            EvaluationGrid::new(vec![0.0, 1.0, 2.0]).unwrap().step_index(1.5),
            Some(1)
        );
        assert_eq!(EvaluationGrid::new(vec![0.0, 1.0]).unwrap().step_index(-0.1), None);
    }

    proptest! {
        #[test]
        fn ecdf_is_monotone_and_scale_invariant(
            pairs in prop::collection::vec((-100.0f64..100.0, 0.01f64..10.0), 1..40),
            scale in 0.001f64..1000.0,
            probes in prop::collection::vec(-120.0f64..120.0, 1..20),
        ) {
            let (v, w): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
            let ws: Vec<f64> = w.iter().map(|x| x * scale).collect();
            let e = WeightedEcdf::new(&v, &w).unwrap();
            let es = WeightedEcdf::new(&v, &ws).unwrap();
            let mut probes = probes;
            probes.sort_by(f64::total_cmp);
            let mut prev = 0.0;
            for &y in &probes {
                let f = e.eval(y);
                prop_assert!((0.0..=1.0).contains(&f));
                prop_assert!(f >= prev);
                prop_assert!((f - es.eval(y)).abs() < 1e-12);
                prev = f;
            }
            let min = v.iter().copied().fold(f64::INFINITY, f64::min);
            let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(e.eval(min - 1e-9), 0.0);
            prop_assert_eq!(e.eval(max), 1.0);
        }

        #[test]
        fn csv_round_trip_is_bit_exact(
            rows in prop::collection::vec((any::<f64>(), 1e-300f64..1e300, any::<f64>(), 0u8..3), 4..30),
        ) {
            let mut obs: Vec<Observation> = rows
                .iter()
                .filter(|r| r.0.is_finite() && r.2.is_finite())
                .enumerate()
                .map(|(i, r)| Observation {
                    outcome: r.0,
                    group: if i % 2 == 0 { Group::W } else { Group::B },
                    weight: r.1,
                    covariates: vec![r.2, r.3 as f64],
                })
                .collect();
            prop_assume!(obs.len() >= 4);
            obs.truncate(30);
            let schema = vec![Covariate::continuous("x"), Covariate::discrete("d")];
            let t = ObservationTable::new(schema, GroupLabels::default(), obs).unwrap();
            let mut buf = Vec::new();
            write_table(&t, &mut buf).unwrap();
            let back = load_table(buf.as_slice(), &standard_mapping(&t)).unwrap();
            prop_assert_eq!(back, t);
        }
    }
}
