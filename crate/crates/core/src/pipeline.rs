//! End-to-end analysis of one table: support partition, per-group models,
//! and the requested decompositions. Shared by the CLI and the C ABI.

use serde::{Deserialize, Serialize};

use crate::data::{make_grid, EvaluationGrid, GridPolicy, Group, ObservationTable};
use crate::decompose::{
    contribution_shares, decompose_conventional, decompose_relaxed, dfl_counterfactual, trim_to_common,
    ContributionShares, DecompositionCurves, DflConfig, DflWeights,
};
use crate::distreg::{
    fit_cell_ecdf, fit_conditional_cdf, CovariateTransform, FittedModel, Link, SolverConfig, ThresholdStatus,
    TransformSpec,
};
use crate::support::{estimate_partition, SupportPartition, SupportStrategy};
use crate::Error;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Per-threshold binary regressions on a covariate basis.
    #[default]
    DistributionRegression,
    /// Closed-form within-cell weighted ECDFs; discrete covariates only.
    CellEcdf,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub estimator: Estimator,
    pub transform: TransformSpec,
    pub link: Link,
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    Relaxed,
    Conventional,
    Dfl,
    Shares,
}

impl Analysis {
    pub const ALL: [Analysis; 4] = [
        Analysis::Relaxed,
        Analysis::Conventional,
        Analysis::Dfl,
        Analysis::Shares,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub support: SupportStrategy,
    pub grid: GridPolicy,
    pub model: ModelConfig,
    pub analyses: Vec<Analysis>,
    /// Conventional mode reuses the relaxed-mode models instead of refitting
    /// on the trimmed sample.
    pub share_models: bool,
    pub dfl: DflConfig,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            support: SupportStrategy::default(),
            grid: GridPolicy::default(),
            model: ModelConfig::default(),
            analyses: Analysis::ALL.to_vec(),
            share_models: false,
            dfl: DflConfig::default(),
        }
    }
}

impl AnalysisConfig {
    pub fn wants(&self, a: Analysis) -> bool {
        self.analyses.contains(&a)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.analyses.is_empty() {
            return Err(Error::Config("no analysis requested".into()));
        }
        if self.wants(Analysis::Shares) && !self.wants(Analysis::Relaxed) {
            return Err(Error::Config("shares need the relaxed analysis".into()));
        }
        let s = &self.model.solver;
        if s.max_iter == 0 || !(s.tolerance > 0.0) || !(s.ridge >= 0.0) || !(s.separation_bound > 0.0) {
            return Err(Error::Config("solver settings must be positive".into()));
        }
        if !(self.dfl.psi_cap > 0.0) {
            return Err(Error::Config("psi_cap must be positive".into()));
        }
        Ok(())
    }
}

/// Fits one group's conditional CDF as configured.
pub fn fit_model(
    table: &ObservationTable,
    group: Group,
    grid: &EvaluationGrid,
    config: &ModelConfig,
) -> Result<FittedModel, Error> {
    Ok(match config.estimator {
        Estimator::DistributionRegression => {
            let transform = CovariateTransform::resolve(&config.transform, table, Some(group))?;
            FittedModel::DistributionRegression(fit_conditional_cdf(
                table,
                group,
                grid,
                transform,
                config.link,
                &config.solver,
            )?)
        }
        Estimator::CellEcdf => FittedModel::CellEcdf(fit_cell_ecdf(table, group, grid)?),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DflResult {
    pub counterfactual: Vec<f64>,
    pub weights: DflWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOutput {
    pub grid: EvaluationGrid,
    pub partition: SupportPartition,
    pub model_w: FittedModel,
    pub model_b: FittedModel,
    /// Models refitted on the common-support rows, when conventional mode
    /// refits.
    pub trimmed_models: Option<(FittedModel, FittedModel)>,
    pub relaxed: Option<DecompositionCurves>,
    pub conventional: Option<DecompositionCurves>,
    pub shares: Option<ContributionShares>,
    pub dfl: Option<DflResult>,
    /// Non-fatal diagnostics: diverged or separated thresholds, capped
    /// reweighting factors, flagged curves.
    pub warnings: Vec<String>,
}

fn model_warnings(name: &str, model: &FittedModel, out: &mut Vec<String>) {
    let FittedModel::DistributionRegression(m) = model else {
        return;
    };
    for (y, t) in m.grid.points().iter().zip(&m.thresholds) {
        match t.status {
            ThresholdStatus::Diverged => out.push(format!("{name}: solver did not converge at y = {y}")),
            ThresholdStatus::Separated => out.push(format!("{name}: separation at y = {y}, using the group ECDF")),
            _ => {}
        }
    }
}

pub fn run_analysis(table: &ObservationTable, config: &AnalysisConfig) -> Result<AnalysisOutput, Error> {
    config.validate()?;
    let grid = make_grid(table, &config.grid)?;
    let partition = estimate_partition(table, &config.support)?;
    let model_w = fit_model(table, Group::W, &grid, &config.model)?;
    let model_b = fit_model(table, Group::B, &grid, &config.model)?;
    let mut warnings = Vec::new();
    model_warnings("model_W", &model_w, &mut warnings);
    model_warnings("model_B", &model_b, &mut warnings);

    let relaxed = if config.wants(Analysis::Relaxed) {
        let c = decompose_relaxed(table, &partition, &model_w, &model_b)?;
        for f in &c.flags {
            warnings.push(format!("relaxed: {f:?}"));
        }
        Some(c)
    } else {
        None
    };

    let mut trimmed_models = None;
    let conventional = if config.wants(Analysis::Conventional) {
        if config.share_models {
            Some(decompose_conventional(table, &partition, &model_w, &model_b)?)
        } else {
            let trimmed = trim_to_common(table, &partition)?;
            let tw = fit_model(&trimmed, Group::W, &grid, &config.model)?;
            let tb = fit_model(&trimmed, Group::B, &grid, &config.model)?;
            model_warnings("model_W_trimmed", &tw, &mut warnings);
            model_warnings("model_B_trimmed", &tb, &mut warnings);
            let c = decompose_conventional(table, &partition, &tw, &tb)?;
            trimmed_models = Some((tw, tb));
            Some(c)
        }
    } else {
        None
    };

    let shares = match (&relaxed, config.wants(Analysis::Shares)) {
        (Some(r), true) => Some(contribution_shares(r)?),
        _ => None,
    };

    let dfl = if config.wants(Analysis::Dfl) {
        let (counterfactual, weights) = dfl_counterfactual(table, &partition, &grid, &config.dfl)?;
        if !weights.capped.is_empty() {
            warnings.push(format!("dfl: {} reweighting factors capped", weights.capped.len()));
        }
        Some(DflResult {
            counterfactual,
            weights,
        })
    } else {
        None
    };

    Ok(AnalysisOutput {
        grid,
        partition,
        model_w,
        model_b,
        trimmed_models,
        relaxed,
        conventional,
        shares,
        dfl,
        warnings,
    })
}

impl AnalysisOutput {
    /// Long-format CSV with every requested curve: relaxed series, then
    /// conventional (`_os`) series, then the reweighting counterfactual.
    pub fn curves_csv(&self) -> String {
        let mut buf = b"y,series,value\n".to_vec();
        for c in [&self.relaxed, &self.conventional].into_iter().flatten() {
            c.write_long_rows(&mut buf).expect("writing to memory");
        }
        if let Some(d) = &self.dfl {
            crate::decompose::write_long_rows(&self.grid, &[("h0_dfl", &d.counterfactual)], &mut buf)
                .expect("writing to memory");
        }
        String::from_utf8(buf).expect("ascii")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, DgpSpec};

    fn overlap_table() -> ObservationTable {
        let spec = DgpSpec::from_json(
            r#"{"kind": "logit_linear", "n_w": 400, "n_b": 400, "seed": 11,
                "x_w": {"law": "uniform", "lo": 0, "hi": 5},
                "x_b": {"law": "uniform", "lo": 0, "hi": 5},
                "path_w": {"a0": 0, "a1": 1, "b0": -0.3},
                "path_b": {"a0": 0.5, "a1": 1, "b0": -0.3}}"#,
        )
        .unwrap();
        generate(&spec).unwrap()
    }

    #[test]
    fn default_run_produces_every_analysis() {
        let t = overlap_table();
        let config = AnalysisConfig {
            grid: GridPolicy::Quantiles { count: 15 },
            ..Default::default()
        };
        let out = run_analysis(&t, &config).unwrap();
        assert!(out.relaxed.is_some() && out.conventional.is_some() && out.shares.is_some() && out.dfl.is_some());
        assert!(out.trimmed_models.is_some());
        let csv = out.curves_csv();
        assert!(csv.starts_with("y,series,value\n"));
        assert!(csv.contains(",delta_os,") && csv.contains(",h0_dfl,"));
    }

    #[test]
    fn shares_without_relaxed_is_rejected() {
        let config = AnalysisConfig {
            analyses: vec![Analysis::Shares],
            ..Default::default()
        };
        assert!(matches!(config.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(serde_json::from_str::<AnalysisConfig>(r#"{"modes": []}"#).is_err());
        let c: AnalysisConfig = serde_json::from_str(r#"{"model": {"link": "probit"}}"#).unwrap();
        assert_eq!(c.model.link, Link::Probit);
        assert_eq!(c.analyses, Analysis::ALL.to_vec());
    }
}
