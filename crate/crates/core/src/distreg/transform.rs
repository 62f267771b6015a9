//! Covariate basis `T(x)` for the per-threshold binary models.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::DistRegError;
use crate::data::{CovariateKind, Group, ObservationTable};

/// Unresolved basis recipe; [`CovariateTransform::resolve`] turns it into
/// concrete terms using the rows a model is fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformSpec {
    /// Polynomial degree applied to every continuous covariate.
    #[serde(default = "default_degree")]
    pub degree: u32,
    /// Pairs of covariate names multiplied together.
    #[serde(default)]
    pub interactions: Vec<(String, String)>,
    /// One dummy per observed combination of discrete covariates instead of
    /// additive per-covariate dummies.
    #[serde(default)]
    pub saturate_cells: bool,
    /// Include discrete covariates at all; off gives a basis without them.
    #[serde(default = "yes")]
    pub discrete_dummies: bool,
}

fn yes() -> bool {
    true
}

fn default_degree() -> u32 {
    3
}

impl Default for TransformSpec {
    fn default() -> Self {
        TransformSpec {
            degree: default_degree(),
            interactions: Vec::new(),
            saturate_cells: false,
            discrete_dummies: true,
        }
    }
}

impl TransformSpec {
    pub fn saturated() -> Self {
        TransformSpec {
            degree: 0,
            interactions: Vec::new(),
            saturate_cells: true,
            discrete_dummies: true,
        }
    }

    pub fn intercept_only() -> Self {
        TransformSpec {
            degree: 0,
            interactions: Vec::new(),
            saturate_cells: false,
            discrete_dummies: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "term")]
pub enum BasisTerm {
    Intercept,
    /// `((x[covariate] - center) / scale)^degree`
    Power {
        covariate: usize,
        degree: u32,
        center: f64,
        scale: f64,
    },
    /// Product of two standardized covariates.
    Interaction {
        left: usize,
        right: usize,
        centers: [f64; 2],
        scales: [f64; 2],
    },
    Dummy {
        covariate: usize,
        level: f64,
    },
    /// Indicator of one combination of the discrete covariates.
    CellDummy {
        covariates: Vec<usize>,
        cell: Vec<f64>,
    },
}

/// Observed levels of a discrete covariate; prediction at any other level is
/// refused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelDomain {
    pub covariate: usize,
    pub levels: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateTransform {
    pub n_covariates: usize,
    pub terms: Vec<BasisTerm>,
    pub domains: Vec<LevelDomain>,
    /// Observed combinations of discrete covariates when the basis is
    /// cell-saturated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<Vec<Vec<f64>>>,
}

fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    (mean, if sd > 0.0 { sd } else { 1.0 })
}

impl CovariateTransform {
    /// Resolves `spec` against the rows of `group` (or the pooled table when
    /// `group` is `None`). Levels and standardization constants come from
    /// those rows.
    pub fn resolve(spec: &TransformSpec, table: &ObservationTable, group: Option<Group>) -> Result<Self, DistRegError> {
        let rows: Vec<&[f64]> = table
            .rows()
            .iter()
            .filter(|r| group.is_none_or(|g| r.group == g))
            .map(|r| r.covariates.as_slice())
            .collect();
        let schema = table.schema();
        let mut terms = vec![BasisTerm::Intercept];
        let mut standard = vec![(0.0, 1.0); schema.len()];
        for (i, c) in schema.iter().enumerate() {
            if c.kind == CovariateKind::Continuous {
                standard[i] = mean_sd(rows.iter().map(|x| x[i]));
                for degree in 1..=spec.degree {
                    terms.push(BasisTerm::Power {
                        covariate: i,
                        degree,
                        center: standard[i].0,
                        scale: standard[i].1,
                    });
                }
            }
        }
        let discrete: Vec<usize> = if spec.discrete_dummies {
            table.discrete_indices()
        } else {
            Vec::new()
        };
        let domains: Vec<LevelDomain> = discrete
            .iter()
            .map(|&d| {
                let set: BTreeSet<u64> = rows.iter().map(|x| (x[d] + 0.0).to_bits()).collect();
                let mut levels: Vec<f64> = set.into_iter().map(f64::from_bits).collect();
                levels.sort_by(f64::total_cmp);
                LevelDomain { covariate: d, levels }
            })
            .collect();
        let mut cells = None;
        if spec.saturate_cells && !discrete.is_empty() {
            let set: BTreeSet<Vec<u64>> = rows
                .iter()
                .map(|x| discrete.iter().map(|&d| (x[d] + 0.0).to_bits()).collect())
                .collect();
            let mut all: Vec<Vec<f64>> = set
                .into_iter()
                .map(|k| k.into_iter().map(f64::from_bits).collect())
                .collect();
            all.sort_by(|a, b| {
                a.iter()
                    .zip(b)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            // First cell is the reference absorbed by the intercept.
            for cell in all.iter().skip(1) {
                terms.push(BasisTerm::CellDummy {
                    covariates: discrete.clone(),
                    cell: cell.clone(),
                });
            }
            cells = Some(all);
        } else {
            for dom in &domains {
                for &level in dom.levels.iter().skip(1) {
                    terms.push(BasisTerm::Dummy {
                        covariate: dom.covariate,
                        level,
                    });
                }
            }
        }
        for (a, b) in &spec.interactions {
            let idx = |n: &str| {
                table
                    .covariate_index(n)
                    .ok_or_else(|| DistRegError::UnknownCovariate(n.to_string()))
            };
            let (l, r) = (idx(a)?, idx(b)?);
            terms.push(BasisTerm::Interaction {
                left: l,
                right: r,
                centers: [standard[l].0, standard[r].0],
                scales: [standard[l].1, standard[r].1],
            });
        }
        Ok(CovariateTransform {
            n_covariates: schema.len(),
            terms,
            domains,
            cells,
        })
    }

    pub fn dim(&self) -> usize {
        self.terms.len()
    }

    /// Writes `T(x)` into `out`.
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), DistRegError> {
        if x.len() != self.n_covariates {
            return Err(DistRegError::NonConformableCovariates(format!(
                "expected {} covariates, got {}",
                self.n_covariates,
                x.len()
            )));
        }
        for dom in &self.domains {
            let v = x[dom.covariate];
            if !dom.levels.contains(&v) {
                return Err(DistRegError::NonConformableCovariates(format!(
                    "level {v} of covariate {} was not observed when fitting",
                    dom.covariate
                )));
            }
        }
        if let Some(cells) = &self.cells {
            let d: Vec<usize> = self.domains.iter().map(|d| d.covariate).collect();
            if !cells.iter().any(|c| c.iter().zip(&d).all(|(v, &i)| *v == x[i])) {
                return Err(DistRegError::NonConformableCovariates(
                    "covariate cell was not observed when fitting".into(),
                ));
            }
        }
        for (o, t) in out.iter_mut().zip(&self.terms) {
            *o = match t {
                BasisTerm::Intercept => 1.0,
                BasisTerm::Power {
                    covariate,
                    degree,
                    center,
                    scale,
                } => ((x[*covariate] - center) / scale).powi(*degree as i32),
                BasisTerm::Interaction {
                    left,
                    right,
                    centers,
                    scales,
                } => ((x[*left] - centers[0]) / scales[0]) * ((x[*right] - centers[1]) / scales[1]),
                BasisTerm::Dummy { covariate, level } => f64::from(u8::from(x[*covariate] == *level)),
                BasisTerm::CellDummy { covariates, cell } => {
                    f64::from(u8::from(covariates.iter().zip(cell).all(|(&i, v)| x[i] == *v)))
                }
            };
        }
        Ok(())
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, DistRegError> {
        let mut out = vec![0.0; self.dim()];
        self.apply_into(x, &mut out)?;
        Ok(out)
    }

    /// True when the basis has one free parameter per discrete cell and no
    /// continuous terms.
    pub fn is_saturated(&self) -> bool {
        let no_continuous = self.terms.iter().all(|t| {
            matches!(
                t,
                BasisTerm::Intercept | BasisTerm::Dummy { .. } | BasisTerm::CellDummy { .. }
            )
        });
        no_continuous && (self.cells.is_some() || self.domains.len() <= 1)
    }
}
