//! Reweighting baseline: the counterfactual as group W's outcome ECDF
//! reweighted by the covariate density ratio `ψ(x) = dF_B / dF_W`, obtained
//! from a group-membership model through Bayes' rule.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::DecomposeError;
use crate::data::{CovariateKind, EvaluationGrid, Group, ObservationTable};
use crate::distreg::{fit_binary_model, CovariateTransform, DistRegError, Link, SolverConfig, TransformSpec};
use crate::support::{Region, SupportPartition};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "model", deny_unknown_fields)]
pub enum PropensityConfig {
    /// Logit of group membership on a covariate basis, fitted on the pooled
    /// sample with sampling weights.
    Logit {
        #[serde(default)]
        transform: TransformSpec,
        #[serde(default)]
        solver: SolverConfig,
    },
    /// Weighted share of group B within each discrete covariate cell.
    SaturatedCells,
}

impl Default for PropensityConfig {
    fn default() -> Self {
        PropensityConfig::Logit {
            transform: TransformSpec::default(),
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DflConfig {
    pub propensity: PropensityConfig,
    /// Reweighting factors above this are capped and flagged.
    pub psi_cap: f64,
}

impl Default for DflConfig {
    fn default() -> Self {
        DflConfig {
            propensity: PropensityConfig::default(),
            psi_cap: 1e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "model")]
pub enum PropensityDescriptor {
    Logit {
        transform: CovariateTransform,
        coefficients: Vec<f64>,
        iterations: usize,
        gradient_norm: f64,
        converged: bool,
    },
    SaturatedCells {
        /// `(cell, P(B | cell))`
        cells: Vec<(Vec<f64>, f64)>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DflWeights {
    /// Table indices of the W rows, aligned with `psi`.
    pub rows: Vec<usize>,
    pub psi: Vec<f64>,
    /// Table indices of rows whose factor hit the cap.
    pub capped: Vec<usize>,
    pub propensity: PropensityDescriptor,
    /// Share of the reweighted W mass sitting on rows outside the common
    /// support.
    pub out_of_support_share: f64,
    /// Pooled weighted share of group B, `P(B)`.
    pub share_b: f64,
}

/// `P(B | x_i)` for every W row, plus the model description.
fn propensities(
    table: &ObservationTable,
    config: &PropensityConfig,
) -> Result<(Vec<f64>, Vec<f64>, PropensityDescriptor), DecomposeError> {
    let w_rows: Vec<_> = table.group_rows(Group::W).collect();
    match config {
        PropensityConfig::Logit { transform, solver } => {
            let transform = CovariateTransform::resolve(transform, table, None)?;
            let rows: Vec<_> = table.rows().iter().collect();
            let response: Vec<bool> = rows.iter().map(|r| r.group == Group::B).collect();
            let fit = fit_binary_model(&rows, &response, &transform, Link::Logit, solver)?;
            let mut p = Vec::with_capacity(w_rows.len());
            let mut q = Vec::with_capacity(w_rows.len());
            for r in &w_rows {
                let basis = transform.apply(&r.covariates)?;
                let eta: f64 = basis.iter().zip(&fit.coefficients).map(|(a, b)| a * b).sum();
                p.push(Link::Logit.cdf(eta));
                q.push(Link::Logit.sf(eta));
            }
            Ok((
                p,
                q,
                PropensityDescriptor::Logit {
                    transform,
                    coefficients: fit.coefficients,
                    iterations: fit.iterations,
                    gradient_norm: fit.gradient_norm,
                    converged: fit.converged,
                },
            ))
        }
        PropensityConfig::SaturatedCells => {
            if let Some(c) = table.schema().iter().find(|c| c.kind == CovariateKind::Continuous) {
                return Err(DistRegError::ContinuousCovariate(c.name.clone()).into());
            }
            let key = |x: &[f64]| -> Vec<u64> { x.iter().map(|v| (v + 0.0).to_bits()).collect() };
            let mut cells: BTreeMap<Vec<u64>, [f64; 2]> = BTreeMap::new();
            for r in table.rows() {
                cells.entry(key(&r.covariates)).or_default()[r.group as usize] += r.weight;
            }
            let share = |k: &Vec<u64>| {
                let [w, b] = cells[k];
                (b / (w + b), w / (w + b))
            };
            let (p, q) = w_rows.iter().map(|r| share(&key(&r.covariates))).unzip();
            let described = cells
                .keys()
                .map(|k| (k.iter().map(|b| f64::from_bits(*b)).collect(), share(k).0))
                .collect();
            Ok((p, q, PropensityDescriptor::SaturatedCells { cells: described }))
        }
    }
}

/// Returns the reweighted counterfactual CDF on `grid` and the factors used.
///
/// `ψ(x) = [P(B|x) / P(B)] / [P(W|x) / P(W)]`; rows with `P(B|x) = 0` get
/// exactly zero weight.
pub fn dfl_counterfactual(
    table: &ObservationTable,
    partition: &SupportPartition,
    grid: &EvaluationGrid,
    config: &DflConfig,
) -> Result<(Vec<f64>, DflWeights), DecomposeError> {
    super::check_partition(table, partition)?;
    let total = table.group_weight(Group::W) + table.group_weight(Group::B);
    let share_b = table.group_weight(Group::B) / total;
    let share_w = table.group_weight(Group::W) / total;
    let (p, q, propensity) = propensities(table, &config.propensity)?;

    let rows: Vec<usize> = (0..table.len())
        .filter(|&i| table.rows()[i].group == Group::W)
        .collect();
    let mut psi = Vec::with_capacity(rows.len());
    let mut capped = Vec::new();
    for ((&i, &pb), &pw) in rows.iter().zip(&p).zip(&q) {
        let v = if pb == 0.0 {
            0.0
        } else {
            (pb / share_b) / (pw / share_w)
        };
        if !v.is_finite() || v > config.psi_cap {
            capped.push(i);
            psi.push(config.psi_cap);
        } else {
            psi.push(v);
        }
    }

    let mut pairs: Vec<(f64, f64)> = rows
        .iter()
        .zip(&psi)
        .filter(|(_, &s)| s > 0.0)
        .map(|(&i, &s)| (table.rows()[i].outcome, table.rows()[i].weight * s))
        .collect();
    let mass: f64 = pairs.iter().map(|p| p.1).sum();
    if pairs.is_empty() || mass <= 0.0 {
        return Err(DecomposeError::DegenerateReweighting);
    }
    let outside: f64 = rows
        .iter()
        .zip(&psi)
        .filter(|(&i, _)| partition.region(i) == Region::WOnly)
        .map(|(&i, &s)| table.rows()[i].weight * s)
        .sum();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut curve = Vec::with_capacity(grid.len());
    let mut k = 0;
    let mut acc = 0.0;
    for &y in grid.points() {
        while k < pairs.len() && pairs[k].0 <= y {
            acc += pairs[k].1;
            k += 1;
        }
        curve.push(if k == pairs.len() { 1.0 } else { acc / mass });
    }
    Ok((
        curve,
        DflWeights {
            rows,
            psi,
            capped,
            propensity,
            out_of_support_share: outside / mass,
            share_b,
        },
    ))
}
