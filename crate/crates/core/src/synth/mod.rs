//! Synthetic data-generating processes with known conditional CDFs and
//! supports.
//!
//! Random numbers come from ChaCha8 seeded with `ChaCha8Rng::seed_from_u64`.
//! Each uniform draw is `((next_u64() >> 11) + 0.5) / 2^53`, strictly inside
//! `(0, 1)`. Rows are generated group W first, then group B; each row consumes
//! two uniforms (covariate, then outcome) plus a third when a weight law is
//! set. Every variate is produced by inverting its CDF at that uniform.

mod oracle;

use rand_chacha::rand_core::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::data::{Covariate, DataError, Group, GroupLabels, Observation, ObservationTable};
use crate::distreg::Link;

pub use oracle::oracle_decompose;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("the oracle needs a discrete-cells spec")]
    NotDiscrete,
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Finite outcome law: `P(Y = atoms[k]) = probs[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomLaw {
    pub atoms: Vec<f64>,
    pub probs: Vec<f64>,
}

impl AtomLaw {
    pub fn cdf(&self, y: f64) -> f64 {
        self.atoms
            .iter()
            .zip(&self.probs)
            .filter(|(a, _)| **a <= y)
            .map(|(_, p)| p)
            .sum()
    }

    fn draw(&self, u: f64) -> f64 {
        self.atoms[pick(&self.probs, u)]
    }

    fn validate(&self, what: &str) -> Result<(), SynthError> {
        if self.atoms.is_empty() || self.atoms.len() != self.probs.len() {
            return Err(SynthError::InvalidSpec(format!(
                "{what}: atoms and probs must be nonempty and equal length"
            )));
        }
        if self.atoms.iter().any(|a| !a.is_finite()) {
            return Err(SynthError::InvalidSpec(format!("{what}: non-finite atom")));
        }
        check_probabilities(&self.probs, what)
    }
}

fn check_probabilities(p: &[f64], what: &str) -> Result<(), SynthError> {
    if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(SynthError::InvalidSpec(format!(
            "{what}: probabilities must be finite and non-negative"
        )));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(SynthError::InvalidSpec(format!(
            "{what}: probabilities sum to {s}, not 1"
        )));
    }
    Ok(())
}

/// Index of the category containing `u` under cumulative `probs`.
fn pick(probs: &[f64], u: f64) -> usize {
    let total: f64 = probs.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if target < acc {
            return i;
        }
    }
    last
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    /// Covariate values identifying the cell.
    pub x: Vec<f64>,
    pub mass_w: f64,
    pub mass_b: f64,
    /// Required when `mass_w > 0`.
    #[serde(default)]
    pub outcome_w: Option<AtomLaw>,
    /// Required when `mass_b > 0`.
    #[serde(default)]
    pub outcome_b: Option<AtomLaw>,
}

impl CellSpec {
    pub fn mass(&self, g: Group) -> f64 {
        match g {
            Group::W => self.mass_w,
            Group::B => self.mass_b,
        }
    }

    pub fn outcome(&self, g: Group) -> Option<&AtomLaw> {
        match g {
            Group::W => self.outcome_w.as_ref(),
            Group::B => self.outcome_b.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "law", deny_unknown_fields)]
pub enum CovariateLaw {
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// Normal(mean, sd) conditioned on `[lo, hi]`.
    TruncatedNormal {
        mean: f64,
        sd: f64,
        lo: f64,
        hi: f64,
    },
}

impl CovariateLaw {
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            CovariateLaw::Uniform { lo, hi } | CovariateLaw::TruncatedNormal { lo, hi, .. } => (lo, hi),
        }
    }

    fn draw(&self, u: f64) -> f64 {
        match *self {
            CovariateLaw::Uniform { lo, hi } => lo + (hi - lo) * u,
            CovariateLaw::TruncatedNormal { mean, sd, lo, hi } => {
                let n = Normal::new(mean, sd).expect("validated");
                let (a, b) = (n.cdf(lo), n.cdf(hi));
                n.inverse_cdf(a + (b - a) * u).clamp(lo, hi)
            }
        }
    }

    fn validate(&self, what: &str) -> Result<(), SynthError> {
        let (lo, hi) = self.bounds();
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(SynthError::InvalidSpec(format!("{what}: need finite lo < hi")));
        }
        if let CovariateLaw::TruncatedNormal { mean, sd, .. } = *self {
            if !(mean.is_finite() && sd.is_finite() && sd > 0.0) {
                return Err(SynthError::InvalidSpec(format!("{what}: need finite mean and sd > 0")));
            }
        }
        Ok(())
    }
}

/// `H(y | x) = Λ(a(y) + b(y)·x)` with `a(y) = a0 + a1·y`, `b(y) = b0 + b1·y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientPath {
    pub a0: f64,
    pub a1: f64,
    #[serde(default)]
    pub b0: f64,
    #[serde(default)]
    pub b1: f64,
}

impl CoefficientPath {
    pub fn cdf(&self, x: f64, y: f64) -> f64 {
        Link::Logit.cdf(self.a0 + self.a1 * y + (self.b0 + self.b1 * y) * x)
    }

    fn draw(&self, x: f64, u: f64) -> f64 {
        (Link::Logit.quantile(u) - self.a0 - self.b0 * x) / (self.a1 + self.b1 * x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "law", deny_unknown_fields)]
pub enum WeightLaw {
    Uniform { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DgpKind {
    DiscreteCells {
        cells: Vec<CellSpec>,
    },
    LogitLinear {
        x_w: CovariateLaw,
        x_b: CovariateLaw,
        path_w: CoefficientPath,
        path_b: CoefficientPath,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    #[serde(flatten)]
    pub kind: DgpKind,
    pub n_w: usize,
    pub n_b: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightLaw>,
}

fn cell_schema(dim: usize) -> Vec<Covariate> {
    if dim == 1 {
        vec![Covariate::discrete("x")]
    } else {
        (1..=dim).map(|i| Covariate::discrete(format!("x{i}"))).collect()
    }
}

impl DgpSpec {
    pub fn from_json(s: &str) -> Result<Self, SynthError> {
        let spec: DgpSpec = serde_json::from_str(s).map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, DgpKind::DiscreteCells { .. })
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_w < 2 || self.n_b < 2 {
            return Err(SynthError::InvalidSpec("each group needs at least 2 rows".into()));
        }
        if let Some(WeightLaw::Uniform { lo, hi }) = self.weights {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(SynthError::InvalidSpec("weight law needs 0 < lo <= hi".into()));
            }
        }
        match &self.kind {
            DgpKind::DiscreteCells { cells } => {
                let dim = cells.first().map(|c| c.x.len()).unwrap_or(0);
                if cells.is_empty() || dim == 0 {
                    return Err(SynthError::InvalidSpec("need at least one cell with covariates".into()));
                }
                for (i, c) in cells.iter().enumerate() {
                    if c.x.len() != dim || c.x.iter().any(|v| !v.is_finite()) {
                        return Err(SynthError::InvalidSpec(format!(
                            "cell {i}: covariates must be finite, length {dim}"
                        )));
                    }
                    if cells[..i].iter().any(|o| o.x == c.x) {
                        return Err(SynthError::InvalidSpec(format!("cell {i}: duplicate covariate values")));
                    }
                    for g in [Group::W, Group::B] {
                        if c.mass(g) > 0.0 {
                            let law = c.outcome(g).ok_or_else(|| {
                                SynthError::InvalidSpec(format!("cell {i}: positive {g:?} mass without an outcome law"))
                            })?;
                            law.validate(&format!("cell {i} {g:?} outcome"))?;
                        }
                    }
                }
                for g in [Group::W, Group::B] {
                    let masses: Vec<f64> = cells.iter().map(|c| c.mass(g)).collect();
                    check_probabilities(&masses, &format!("{g:?} cell masses"))?;
                }
            }
            DgpKind::LogitLinear {
                x_w,
                x_b,
                path_w,
                path_b,
            } => {
                for (law, path, name) in [(x_w, path_w, "W"), (x_b, path_b, "B")] {
                    law.validate(&format!("{name} covariate law"))?;
                    let (lo, hi) = law.bounds();
                    // H(y|x) must increase in y at every x in the support.
                    if !(path.a1 + path.b1 * lo > 0.0 && path.a1 + path.b1 * hi > 0.0) {
                        return Err(SynthError::InvalidSpec(format!(
                            "{name} coefficient path: a1 + b1*x must be positive on [{lo}, {hi}]"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// The true conditional CDF `H_g(y | x)`; `None` where `x` is outside the
    /// group's support.
    pub fn true_cdf(&self, group: Group, x: &[f64], y: f64) -> Option<f64> {
        match &self.kind {
            DgpKind::DiscreteCells { cells } => cells
                .iter()
                .find(|c| c.x == x && c.mass(group) > 0.0)
                .and_then(|c| c.outcome(group))
                .map(|law| law.cdf(y)),
            DgpKind::LogitLinear {
                x_w,
                x_b,
                path_w,
                path_b,
            } => {
                let (law, path) = match group {
                    Group::W => (x_w, path_w),
                    Group::B => (x_b, path_b),
                };
                let (lo, hi) = law.bounds();
                (x.len() == 1 && lo <= x[0] && x[0] <= hi).then(|| path.cdf(x[0], y))
            }
        }
    }
}

struct Uniforms(ChaCha8Rng);

impl Uniforms {
    fn next(&mut self) -> f64 {
        ((self.0.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }
}

/// Draws a table from `spec`. Identical `(spec, seed)` gives a bit-identical
/// table.
pub fn generate(spec: &DgpSpec) -> Result<ObservationTable, SynthError> {
    spec.validate()?;
    let mut u = Uniforms(ChaCha8Rng::seed_from_u64(spec.seed));
    let mut rows = Vec::with_capacity(spec.n_w + spec.n_b);
    let groups = std::iter::repeat_n(Group::W, spec.n_w).chain(std::iter::repeat_n(Group::B, spec.n_b));
    for group in groups {
        let (covariates, outcome) = match &spec.kind {
            DgpKind::DiscreteCells { cells } => {
                let masses: Vec<f64> = cells.iter().map(|c| c.mass(group)).collect();
                let cell = &cells[pick(&masses, u.next())];
                let law = cell.outcome(group).expect("validated");
                (cell.x.clone(), law.draw(u.next()))
            }
            DgpKind::LogitLinear {
                x_w,
                x_b,
                path_w,
                path_b,
            } => {
                let (law, path) = match group {
                    Group::W => (x_w, path_w),
                    Group::B => (x_b, path_b),
                };
                let x = law.draw(u.next());
                (vec![x], path.draw(x, u.next()))
            }
        };
        let weight = match spec.weights {
            Some(WeightLaw::Uniform { lo, hi }) => lo + (hi - lo) * u.next(),
            None => 1.0,
        };
        rows.push(Observation {
            outcome,
            group,
            weight,
            covariates,
        });
    }
    let schema = match &spec.kind {
        DgpKind::DiscreteCells { cells } => cell_schema(cells[0].x.len()),
        DgpKind::LogitLinear { .. } => vec![Covariate::continuous("x")],
    };
    Ok(ObservationTable::new(schema, GroupLabels::default(), rows)?)
}

/// The population itself as a weighted table: one row per (group, cell,
/// outcome atom) with weight `cell mass × atom probability`.
pub fn population_table(spec: &DgpSpec) -> Result<ObservationTable, SynthError> {
    spec.validate()?;
    let DgpKind::DiscreteCells { cells } = &spec.kind else {
        return Err(SynthError::NotDiscrete);
    };
    let mut rows = Vec::new();
    for group in [Group::W, Group::B] {
        for c in cells.iter().filter(|c| c.mass(group) > 0.0) {
            let law = c.outcome(group).expect("validated");
            for (&y, &p) in law.atoms.iter().zip(&law.probs) {
                if p > 0.0 {
                    rows.push(Observation {
                        outcome: y,
                        group,
                        weight: c.mass(group) * p,
                        covariates: c.x.clone(),
                    });
                }
            }
        }
    }
    // A group concentrated on one atom still needs two rows.
    for group in [Group::W, Group::B] {
        if rows.iter().filter(|r| r.group == group).count() == 1 {
            let i = rows.iter().position(|r| r.group == group).unwrap();
            rows[i].weight /= 2.0;
            let dup = rows[i].clone();
            rows.insert(i + 1, dup);
        }
    }
    Ok(ObservationTable::new(
        cell_schema(cells[0].x.len()),
        GroupLabels::default(),
        rows,
    )?)
}

/// Every outcome atom of a discrete spec, sorted and deduplicated.
pub fn outcome_atoms(spec: &DgpSpec) -> Result<Vec<f64>, SynthError> {
    let DgpKind::DiscreteCells { cells } = &spec.kind else {
        return Err(SynthError::NotDiscrete);
    };
    let mut atoms: Vec<f64> = cells
        .iter()
        .flat_map(|c| [Group::W, Group::B].map(|g| (c, g)))
        .filter(|(c, g)| c.mass(*g) > 0.0)
        .filter_map(|(c, g)| c.outcome(g))
        .flat_map(|law| {
            law.atoms
                .iter()
                .zip(&law.probs)
                .filter(|(_, p)| **p > 0.0)
                .map(|(a, _)| *a)
        })
        .collect();
    atoms.sort_by(f64::total_cmp);
    atoms.dedup();
    Ok(atoms)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn symmetric(n: usize, seed: u64) -> DgpSpec {
        DgpSpec::from_json(&format!(
            r#"{{"kind": "discrete_cells", "n_w": {n}, "n_b": {n}, "seed": {seed},
                "cells": [{{"x": [0], "mass_w": 1, "mass_b": 1,
                  "outcome_w": {{"atoms": [1, 2, 3], "probs": [0.2, 0.3, 0.5]}},
                  "outcome_b": {{"atoms": [1, 2, 3], "probs": [0.2, 0.3, 0.5]}}}}]}}"#
        ))
        .unwrap()
    }

    #[test]
    fn deterministic_given_seed() {
        let a = generate(&symmetric(100, 9)).unwrap();
        let b = generate(&symmetric(100, 9)).unwrap();
        assert_eq!(a, b);
        let c = generate(&symmetric(100, 10)).unwrap();
        assert_ne!(a, c);
        assert_eq!(a.len(), 200);
        assert!(a.rows().iter().all(|r| r.weight == 1.0));
    }

    #[test]
    fn logit_linear_respects_bounds() {
        let spec = DgpSpec::from_json(
            r#"{"kind": "logit_linear", "n_w": 2000, "n_b": 2000, "seed": 3,
                "x_w": {"law": "uniform", "lo": 0, "hi": 10},
                "x_b": {"law": "truncated_normal", "mean": 9, "sd": 4, "lo": 5, "hi": 15},
                "path_w": {"a0": 0, "a1": 1, "b0": -1},
                "path_b": {"a0": 1, "a1": 1, "b0": -1},
                "weights": {"law": "uniform", "lo": 0.5, "hi": 2}}"#,
        )
        .unwrap();
        let t = generate(&spec).unwrap();
        for (g, lo, hi) in [(Group::W, 0.0, 10.0), (Group::B, 5.0, 15.0)] {
            for r in t.group_rows(g) {
                assert!(lo <= r.covariates[0] && r.covariates[0] <= hi);
                assert!((0.5..=2.0).contains(&r.weight));
            }
        }
    }

    #[test]
    fn logit_draws_follow_the_conditional_cdf() {
        // With a1 = 1, b = 0: Y ~ Logistic(-a0); check P(Y <= 0) = Λ(a0).
        let spec = DgpSpec::from_json(
            r#"{"kind": "logit_linear", "n_w": 20000, "n_b": 2, "seed": 5,
                "x_w": {"law": "uniform", "lo": 0, "hi": 1},
                "x_b": {"law": "uniform", "lo": 0, "hi": 1},
                "path_w": {"a0": 0.7, "a1": 1},
                "path_b": {"a0": 0, "a1": 1}}"#,
        )
        .unwrap();
        let t = generate(&spec).unwrap();
        let share = t.group_rows(Group::W).filter(|r| r.outcome <= 0.0).count() as f64 / 20000.0;
        assert!((share - Link::Logit.cdf(0.7)).abs() < 0.015, "{share}");
    }

    #[test]
    fn invalid_specs() {
        let bad_mass = r#"{"kind": "discrete_cells", "n_w": 5, "n_b": 5, "seed": 1,
            "cells": [{"x": [0], "mass_w": 0.5, "mass_b": 1,
              "outcome_w": {"atoms": [1], "probs": [1]}, "outcome_b": {"atoms": [1], "probs": [1]}}]}"#;
        assert!(matches!(DgpSpec::from_json(bad_mass), Err(SynthError::InvalidSpec(_))));
        let missing_law = r#"{"kind": "discrete_cells", "n_w": 5, "n_b": 5, "seed": 1,
            "cells": [{"x": [0], "mass_w": 1, "mass_b": 1, "outcome_w": {"atoms": [1], "probs": [1]}}]}"#;
        assert!(DgpSpec::from_json(missing_law).is_err());
        let decreasing = r#"{"kind": "logit_linear", "n_w": 5, "n_b": 5, "seed": 1,
            "x_w": {"law": "uniform", "lo": 0, "hi": 10}, "x_b": {"law": "uniform", "lo": 0, "hi": 10},
            "path_w": {"a0": 0, "a1": 1, "b1": -0.5}, "path_b": {"a0": 0, "a1": 1}}"#;
        assert!(DgpSpec::from_json(decreasing).is_err());
        assert!(DgpSpec::from_json(r#"{"kind": "nope"}"#).is_err());
    }

    #[test]
    fn population_table_weights_are_cell_masses() {
        let spec = symmetric(10, 1);
        let t = population_table(&spec).unwrap();
        assert_eq!(t.len(), 6);
        let w: f64 = t.group_rows(Group::W).map(|r| r.weight).sum();
        assert!((w - 1.0).abs() < 1e-15);
        assert_eq!(outcome_atoms(&spec).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn pick_skips_zero_mass() {
        let p = [0.0, 0.5, 0.0, 0.5];
        assert_eq!(pick(&p, 1e-12), 1);
        assert_eq!(pick(&p, 0.4999), 1);
        assert_eq!(pick(&p, 0.5001), 3);
        assert_eq!(pick(&p, 1.0 - 1e-16), 3);
    }
}
