//! Conditional outcome CDFs by distribution regression.
//!
//! `H(y | x)` is modelled as `Λ(T(x)'α(y))` with a separate weighted binary
//! MLE for the event `{Y <= y}` at every grid threshold. Raw per-threshold
//! predictions are monotonized in `y` by a running maximum.

mod link;
mod solver;
mod transform;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{CovariateKind, DataError, EvaluationGrid, Group, Observation, ObservationTable, WeightedEcdf};

pub use link::Link;
pub use solver::{Design, SolverConfig};
pub use transform::{BasisTerm, CovariateTransform, LevelDomain, TransformSpec};

#[derive(Debug, Error)]
pub enum DistRegError {
    #[error("solver did not converge at threshold y = {y}")]
    SolverDivergence { y: f64 },
    #[error("design column for term {0} is identically zero")]
    RankDeficientDesign(String),
    #[error("covariates not conformable with the fitted model: {0}")]
    NonConformableCovariates(String),
    #[error("unknown covariate `{0}`")]
    UnknownCovariate(String),
    #[error("cell model cannot use continuous covariate `{0}`")]
    ContinuousCovariate(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ThresholdStatus {
    Fitted,
    /// Every outcome of the group is at or below the threshold; predicts 1.
    AllBelow,
    /// Every outcome is above the threshold; predicts 0.
    AllAbove,
    /// Coefficients diverged; predicts the group's weighted ECDF at the
    /// threshold.
    Separated,
    /// Iteration limit reached; the last iterate is kept.
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFit {
    pub status: ThresholdStatus,
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
    /// Weighted share of the group's outcomes at or below the threshold.
    pub ecdf: f64,
}

/// Anything that yields a conditional CDF curve on a fixed grid.
pub trait ConditionalDistribution {
    fn grid(&self) -> &EvaluationGrid;

    /// `H(y_m | x)` for every grid point, nondecreasing and within `[0, 1]`.
    fn predict_curve(&self, x: &[f64]) -> Result<Vec<f64>, DistRegError>;

    /// Step interpolation: the value at the largest grid point `<= y`, zero
    /// below the grid.
    fn predict(&self, x: &[f64], y: f64) -> Result<f64, DistRegError> {
        let curve = self.predict_curve(x)?;
        Ok(self.grid().step_index(y).map_or(0.0, |m| curve[m]))
    }
}

/// Running maximum: the smallest nondecreasing curve dominating `curve`.
pub fn rearrange(curve: &[f64]) -> Vec<f64> {
    let mut out = curve.to_vec();
    rearrange_in_place(&mut out);
    out
}

pub fn rearrange_in_place(curve: &mut [f64]) {
    let mut run = f64::NEG_INFINITY;
    for v in curve {
        run = run.max(*v);
        *v = run;
    }
}

/// A fitted distribution-regression model for one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalCdf {
    pub group: String,
    pub grid: EvaluationGrid,
    pub link: Link,
    pub transform: CovariateTransform,
    pub thresholds: Vec<ThresholdFit>,
}

impl ConditionalCdf {
    pub fn statuses(&self) -> impl Iterator<Item = ThresholdStatus> + '_ {
        self.thresholds.iter().map(|t| t.status)
    }

    /// One error per threshold that hit the iteration limit.
    pub fn divergences(&self) -> Vec<DistRegError> {
        self.grid
            .points()
            .iter()
            .zip(&self.thresholds)
            .filter(|(_, t)| t.status == ThresholdStatus::Diverged)
            .map(|(&y, _)| DistRegError::SolverDivergence { y })
            .collect()
    }

    /// Per-threshold values before monotonization, given `T(x)`.
    fn raw_curve(&self, basis: &[f64]) -> Vec<f64> {
        self.thresholds
            .iter()
            .map(|t| match t.status {
                ThresholdStatus::AllAbove => 0.0,
                ThresholdStatus::AllBelow => 1.0,
                ThresholdStatus::Separated => t.ecdf,
                ThresholdStatus::Fitted | ThresholdStatus::Diverged => {
                    let eta: f64 = basis.iter().zip(&t.coefficients).map(|(a, b)| a * b).sum();
                    self.link.cdf(eta)
                }
            })
            .collect()
    }

    pub fn predict_raw(&self, x: &[f64]) -> Result<Vec<f64>, DistRegError> {
        Ok(self.raw_curve(&self.transform.apply(x)?))
    }
}

impl ConditionalDistribution for ConditionalCdf {
    fn grid(&self) -> &EvaluationGrid {
        &self.grid
    }

    fn predict_curve(&self, x: &[f64]) -> Result<Vec<f64>, DistRegError> {
        let mut curve = self.predict_raw(x)?;
        rearrange_in_place(&mut curve);
        for v in &mut curve {
            *v = v.clamp(0.0, 1.0);
        }
        Ok(curve)
    }
}

fn term_name(table: &ObservationTable, term: &BasisTerm) -> String {
    let name = |i: usize| table.schema()[i].name.clone();
    match term {
        BasisTerm::Intercept => "intercept".into(),
        BasisTerm::Power { covariate, degree, .. } => format!("{}^{degree}", name(*covariate)),
        BasisTerm::Interaction { left, right, .. } => format!("{}*{}", name(*left), name(*right)),
        BasisTerm::Dummy { covariate, level } => format!("{}=={level}", name(*covariate)),
        BasisTerm::CellDummy { cell, .. } => format!("cell{cell:?}"),
    }
}

fn normalized_weights(rows: &[&Observation]) -> Vec<f64> {
    let total: f64 = rows.iter().map(|r| r.weight).sum();
    let scale = rows.len() as f64 / total;
    rows.iter().map(|r| r.weight * scale).collect()
}

fn build_design(
    rows: &[&Observation],
    transform: &CovariateTransform,
    table: Option<&ObservationTable>,
) -> Result<Design, DistRegError> {
    let p = transform.dim();
    let mut values = vec![0.0; rows.len() * p];
    for (r, chunk) in rows.iter().zip(values.chunks_mut(p)) {
        transform.apply_into(&r.covariates, chunk)?;
    }
    for (j, term) in transform.terms.iter().enumerate() {
        if (0..rows.len()).all(|i| values[i * p + j] == 0.0) {
            let name = table.map_or_else(|| format!("{term:?}"), |t| term_name(t, term));
            return Err(DistRegError::RankDeficientDesign(name));
        }
    }
    Ok(Design { values, cols: p })
}

/// One weighted binary MLE on `rows` with weights normalized to mean one.
pub(crate) fn fit_binary_model(
    rows: &[&Observation],
    response: &[bool],
    transform: &CovariateTransform,
    link: Link,
    config: &SolverConfig,
) -> Result<solver::BinaryFit, DistRegError> {
    let design = build_design(rows, transform, None)?;
    Ok(solver::fit_binary(
        &design,
        response,
        &normalized_weights(rows),
        link,
        config,
    ))
}

/// Fits `H_g(y | x)` for `group` at every point of `grid`.
///
/// Case weights are normalized to mean one within the group, so the
/// coefficients do not depend on the scale of the sampling weights. At this
/// scale a cell with no positive responses and effective count of at least
/// one has fitted probability below the gradient tolerance at convergence.
pub fn fit_conditional_cdf(
    table: &ObservationTable,
    group: Group,
    grid: &EvaluationGrid,
    transform: CovariateTransform,
    link: Link,
    config: &SolverConfig,
) -> Result<ConditionalCdf, DistRegError> {
    let rows: Vec<_> = table.group_rows(group).collect();
    let design = build_design(&rows, &transform, Some(table))?;
    let weights = normalized_weights(&rows);
    let outcomes: Vec<f64> = rows.iter().map(|r| r.outcome).collect();
    let ecdf = WeightedEcdf::new(&outcomes, &weights)?;

    let fit_one = |&y: &f64| -> ThresholdFit {
        let response: Vec<bool> = outcomes.iter().map(|&o| o <= y).collect();
        let share = ecdf.eval(y);
        let degenerate = |status| ThresholdFit {
            status,
            coefficients: Vec::new(),
            iterations: 0,
            gradient_norm: 0.0,
            ecdf: share,
        };
        if response.iter().all(|&b| !b) {
            return degenerate(ThresholdStatus::AllAbove);
        }
        if response.iter().all(|&b| b) {
            return degenerate(ThresholdStatus::AllBelow);
        }
        let fit = solver::fit_binary(&design, &response, &weights, link, config);
        let status = if fit.separated {
            ThresholdStatus::Separated
        } else if fit.converged {
            ThresholdStatus::Fitted
        } else {
            ThresholdStatus::Diverged
        };
        ThresholdFit {
            status,
            coefficients: fit.coefficients,
            iterations: fit.iterations,
            gradient_norm: fit.gradient_norm,
            ecdf: share,
        }
    };
    let thresholds: Vec<ThresholdFit> = if config.parallel {
        grid.points().par_iter().map(fit_one).collect()
    } else {
        grid.points().iter().map(fit_one).collect()
    };
    Ok(ConditionalCdf {
        group: table.labels().label(group).to_string(),
        grid: grid.clone(),
        link,
        transform,
        thresholds,
    })
}

/// Closed-form saturated model: within-cell weighted ECDFs over the discrete
/// covariates. This is the limit the saturated distribution regression
/// approaches, including cells where the event probability is exactly 0 or 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellEcdf {
    pub group: String,
    pub grid: EvaluationGrid,
    pub n_covariates: usize,
    pub cells: Vec<CellCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellCurve {
    pub cell: Vec<f64>,
    pub curve: Vec<f64>,
}

pub fn fit_cell_ecdf(table: &ObservationTable, group: Group, grid: &EvaluationGrid) -> Result<CellEcdf, DistRegError> {
    if let Some(c) = table.schema().iter().find(|c| c.kind == CovariateKind::Continuous) {
        return Err(DistRegError::ContinuousCovariate(c.name.clone()));
    }
    let mut cells: BTreeMap<Vec<u64>, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in table.group_rows(group) {
        let key = r.covariates.iter().map(|v| (v + 0.0).to_bits()).collect();
        let e = cells.entry(key).or_default();
        e.0.push(r.outcome);
        e.1.push(r.weight);
    }
    let cells = cells
        .into_iter()
        .map(|(key, (v, w))| {
            Ok(CellCurve {
                cell: key.into_iter().map(f64::from_bits).collect(),
                curve: WeightedEcdf::new(&v, &w)?.eval_grid(grid),
            })
        })
        .collect::<Result<Vec<_>, DataError>>()?;
    Ok(CellEcdf {
        group: table.labels().label(group).to_string(),
        grid: grid.clone(),
        n_covariates: table.schema().len(),
        cells,
    })
}

impl ConditionalDistribution for CellEcdf {
    fn grid(&self) -> &EvaluationGrid {
        &self.grid
    }

    fn predict_curve(&self, x: &[f64]) -> Result<Vec<f64>, DistRegError> {
        if x.len() != self.n_covariates {
            return Err(DistRegError::NonConformableCovariates(format!(
                "expected {} covariates, got {}",
                self.n_covariates,
                x.len()
            )));
        }
        self.cells
            .iter()
            .find(|c| c.cell.as_slice() == x)
            .map(|c| c.curve.clone())
            .ok_or_else(|| DistRegError::NonConformableCovariates(format!("cell {x:?} was not observed")))
    }
}

/// A serializable model of either kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FittedModel {
    DistributionRegression(ConditionalCdf),
    CellEcdf(CellEcdf),
}

impl ConditionalDistribution for FittedModel {
    fn grid(&self) -> &EvaluationGrid {
        match self {
            FittedModel::DistributionRegression(m) => m.grid(),
            FittedModel::CellEcdf(m) => m.grid(),
        }
    }

    fn predict_curve(&self, x: &[f64]) -> Result<Vec<f64>, DistRegError> {
        match self {
            FittedModel::DistributionRegression(m) => m.predict_curve(x),
            FittedModel::CellEcdf(m) => m.predict_curve(x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Covariate, GroupLabels, Observation};
    use proptest::prelude::*;

    #[test]
    fn rearrange_examples() {
        assert_eq!(rearrange(&[0.1, 0.3, 0.9]), vec![0.1, 0.3, 0.9]);
        assert_eq!(rearrange(&[0.2, 0.1, 0.5]), vec![0.2, 0.2, 0.5]);
        assert_eq!(rearrange(&[0.3, 0.3, 0.2, 0.2]), vec![0.3; 4]);
    }

    proptest! {
        #[test]
        fn rearrange_is_monotone_dominating_and_idempotent(v in prop::collection::vec(0.0f64..=1.0, 1..50)) {
            let r = rearrange(&v);
            prop_assert!(r.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(r.iter().zip(&v).all(|(a, b)| a >= b));
            prop_assert_eq!(rearrange(&r), r);
        }
    }

    fn two_cell_table() -> ObservationTable {
        // W cell d=0 outcomes 1,2,3 with weights 1,2,1; cell d=1 outcomes 2,4 with weights 3,1.
        let mut rows = Vec::new();
        for (y, w, d) in [
            (1.0, 1.0, 0.0),
            (2.0, 2.0, 0.0),
            (3.0, 1.0, 0.0),
            (2.0, 3.0, 1.0),
            (4.0, 1.0, 1.0),
        ] {
            rows.push(Observation {
                outcome: y,
                group: Group::W,
                weight: w,
                covariates: vec![d],
            });
        }
        for y in [0.0, 5.0] {
            rows.push(Observation {
                outcome: y,
                group: Group::B,
                weight: 1.0,
                covariates: vec![0.0],
            });
        }
        ObservationTable::new(vec![Covariate::discrete("d")], GroupLabels::default(), rows).unwrap()
    }

    #[test]
    fn saturated_logit_reproduces_cell_frequencies() {
        let t = two_cell_table();
        let grid = EvaluationGrid::new(vec![0.5, 1.0, 2.0, 3.0, 4.0]).unwrap();
        let tr = CovariateTransform::resolve(&TransformSpec::default(), &t, Some(Group::W)).unwrap();
        let m = fit_conditional_cdf(&t, Group::W, &grid, tr, Link::Logit, &SolverConfig::default()).unwrap();
        use ThresholdStatus::*;
        assert_eq!(
            m.statuses().collect::<Vec<_>>(),
            vec![AllAbove, Fitted, Fitted, Fitted, AllBelow]
        );
        // Hand-computed within-cell weighted ECDFs.
        let c0 = [0.0, 0.25, 0.75, 1.0, 1.0];
        let c1 = [0.0, 0.0, 0.75, 0.75, 1.0];
        let p0 = m.predict_curve(&[0.0]).unwrap();
        let p1 = m.predict_curve(&[1.0]).unwrap();
        for k in 0..5 {
            assert!((p0[k] - c0[k]).abs() < 1e-8, "cell0 {k}: {}", p0[k]);
            assert!((p1[k] - c1[k]).abs() < 1e-8, "cell1 {k}: {}", p1[k]);
        }
        let cell = fit_cell_ecdf(&t, Group::W, &grid).unwrap();
        assert_eq!(cell.predict_curve(&[0.0]).unwrap(), c0.to_vec());
        assert_eq!(cell.predict_curve(&[1.0]).unwrap(), c1.to_vec());
        assert!(cell.predict_curve(&[2.0]).is_err());
    }

    #[test]
    fn intercept_only_matches_weighted_ecdf() {
        let t = two_cell_table();
        let grid = EvaluationGrid::new(vec![0.5, 2.0, 3.5, 10.0]).unwrap();
        let tr = CovariateTransform::resolve(&TransformSpec::intercept_only(), &t, Some(Group::W)).unwrap();
        let m = fit_conditional_cdf(&t, Group::W, &grid, tr, Link::Probit, &SolverConfig::default()).unwrap();
        let expect = t.group_ecdf(Group::W, &grid);
        for x in [[0.0], [1.0]] {
            let p = m.predict_curve(&x).unwrap();
            for (a, b) in p.iter().zip(&expect) {
                assert!((a - b).abs() < 1e-9, "{p:?} {expect:?}");
            }
        }
        assert_eq!(m.predict(&[0.0], 0.4).unwrap(), 0.0);
        assert_eq!(m.predict(&[0.0], 99.0).unwrap(), 1.0);
        assert!(matches!(
            m.predict(&[0.0, 1.0], 1.0),
            Err(DistRegError::NonConformableCovariates(_))
        ));
    }

    #[test]
    fn large_sample_cubic_fit_converges_everywhere() {
        // The likelihood gain of the last Newton steps is below its rounding
        // error at this size; the line search must not stall on it.
        let spec = crate::synth::DgpSpec::from_json(
            r#"{"kind": "logit_linear", "n_w": 10000, "n_b": 2, "seed": 3,
                "x_w": {"law": "uniform", "lo": 0, "hi": 10},
                "x_b": {"law": "uniform", "lo": 0, "hi": 10},
                "path_w": {"a0": -2, "a1": 1, "b0": -0.3, "b1": 0.02},
                "path_b": {"a0": 0, "a1": 1}}"#,
        )
        .unwrap();
        let t = crate::synth::generate(&spec).unwrap();
        let grid = crate::data::make_grid(&t, &crate::data::GridPolicy::Quantiles { count: 60 }).unwrap();
        let tr = CovariateTransform::resolve(&TransformSpec::default(), &t, Some(Group::W)).unwrap();
        let m = fit_conditional_cdf(&t, Group::W, &grid, tr, Link::Logit, &SolverConfig::default()).unwrap();
        let diverged = m.statuses().filter(|s| *s == ThresholdStatus::Diverged).count();
        assert_eq!(diverged, 0);
    }

    #[test]
    fn zero_column_is_rank_deficient() {
        // x is identically its mean within W after standardization -> zero column.
        let rows = vec![
            Observation {
                outcome: 1.0,
                group: Group::W,
                weight: 1.0,
                covariates: vec![2.0],
            },
            Observation {
                outcome: 2.0,
                group: Group::W,
                weight: 1.0,
                covariates: vec![2.0],
            },
            Observation {
                outcome: 1.0,
                group: Group::B,
                weight: 1.0,
                covariates: vec![1.0],
            },
            Observation {
                outcome: 2.0,
                group: Group::B,
                weight: 1.0,
                covariates: vec![3.0],
            },
        ];
        let t = ObservationTable::new(vec![Covariate::continuous("x")], GroupLabels::default(), rows).unwrap();
        let grid = EvaluationGrid::new(vec![1.0, 2.0]).unwrap();
        let tr = CovariateTransform::resolve(&TransformSpec::default(), &t, Some(Group::W)).unwrap();
        assert!(matches!(
            fit_conditional_cdf(&t, Group::W, &grid, tr, Link::Logit, &SolverConfig::default()),
            Err(DistRegError::RankDeficientDesign(_))
        ));
    }

    #[test]
    fn model_json_round_trip() {
        let t = two_cell_table();
        let grid = EvaluationGrid::new(vec![1.0, 2.0, 3.0]).unwrap();
        let tr = CovariateTransform::resolve(&TransformSpec::default(), &t, Some(Group::W)).unwrap();
        let m = FittedModel::DistributionRegression(
            fit_conditional_cdf(&t, Group::W, &grid, tr, Link::Logit, &SolverConfig::default()).unwrap(),
        );
        let s = serde_json::to_string(&m).unwrap();
        let back: FittedModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }
}
