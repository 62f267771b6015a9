use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

#[derive(Debug, Parser)]
#[command(
    name = "gapdecomp",
    version,
    about = "Distributional gap decomposition with unmatched observations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decompose the outcome-CDF gap between two groups.
    Decompose(DecomposeArgs),
    /// Draw a synthetic dataset from a JSON DGP spec.
    Simulate(SimulateArgs),
    /// Tag each row with its support region and report region masses.
    InspectSupport(InspectArgs),
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "y")]
    pub outcome: String,
    #[arg(long, default_value = "group")]
    pub group: String,
    /// Sampling-weight column; all weights are 1 when omitted.
    #[arg(long)]
    pub weight: Option<String>,
    /// Continuous covariate columns.
    #[arg(long, value_delimiter = ',')]
    pub continuous: Vec<String>,
    /// Discrete covariate columns (numeric codes).
    #[arg(long, value_delimiter = ',')]
    pub discrete: Vec<String>,
    #[arg(long, default_value = "W")]
    pub label_w: String,
    #[arg(long, default_value = "B")]
    pub label_b: String,
    #[arg(long, value_enum, default_value_t = SupportRule::Auto)]
    pub support: SupportRule,
    /// JSON file with explicit bounds `{"W": {...}, "B": {...}}`; implies
    /// `--support explicit`.
    #[arg(long)]
    pub bounds: Option<PathBuf>,
    /// JSON file overriding any of the above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SupportRule {
    Auto,
    Range1d,
    CellRange,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    DistributionRegression,
    CellEcdf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TransformArg {
    /// Polynomial in each continuous covariate plus level dummies.
    Poly,
    /// One dummy per observed cell of the discrete covariates.
    Saturated,
    Intercept,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LinkArg {
    Logit,
    Probit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GridArg {
    Auto,
    Unique,
    Quantiles,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PropensityArg {
    Logit,
    Saturated,
}

#[derive(Debug, Clone, Args)]
pub struct DecomposeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value_t = EstimatorArg::DistributionRegression)]
    pub estimator: EstimatorArg,
    #[arg(long, value_enum, default_value_t = TransformArg::Poly)]
    pub transform: TransformArg,
    /// Polynomial degree for `--transform poly`.
    #[arg(long, default_value_t = 3)]
    pub degree: u32,
    /// Interaction of two covariates, `a:b`; repeatable.
    #[arg(long = "interaction")]
    pub interactions: Vec<String>,
    #[arg(long, value_enum, default_value_t = LinkArg::Logit)]
    pub link: LinkArg,
    #[arg(long, value_enum, default_value_t = GridArg::Auto)]
    pub grid: GridArg,
    /// Point count for `--grid unique` or `--grid quantiles`.
    #[arg(long, default_value_t = 199)]
    pub grid_points: usize,
    /// Grid values for `--grid explicit`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub grid_values: Vec<f64>,
    /// Comma-separated subset of relaxed, conventional, dfl, shares.
    #[arg(long, value_delimiter = ',', default_value = "relaxed,conventional,dfl,shares")]
    pub mode: Vec<String>,
    /// Conventional mode reuses the full-sample models instead of refitting
    /// on the common-support rows.
    #[arg(long)]
    pub share_models: bool,
    #[arg(long, value_enum, default_value_t = PropensityArg::Logit)]
    pub propensity: PropensityArg,
    #[arg(long, default_value_t = 1e6)]
    pub psi_cap: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tolerance: f64,
    /// Fit thresholds one after another instead of on the thread pool.
    #[arg(long)]
    pub serial: bool,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Replication seed, recorded in the manifest.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// DGP spec JSON.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct InspectArgs {
    #[command(flatten)]
    pub input: InputArgs,
}

impl InspectArgs {
    pub fn to_value(&self) -> Value {
        let mut v = self.input.common_value();
        v.as_object_mut()
            .unwrap()
            .insert("support".into(), self.input.support_value());
        v
    }
}

impl InputArgs {
    fn common_value(&self) -> Value {
        let mut covariates: Vec<Value> = self
            .continuous
            .iter()
            .map(|n| json!({"name": n, "kind": "continuous"}))
            .collect();
        covariates.extend(self.discrete.iter().map(|n| json!({"name": n, "kind": "discrete"})));
        json!({
            "input": self.input,
            "out": self.out,
            "mapping": {
                "outcome": self.outcome,
                "group": self.group,
                "weight": self.weight,
                "covariates": covariates,
                "labels": {"w": self.label_w, "b": self.label_b},
            },
        })
    }

    /// The bounds file is read lazily by serde as raw JSON so a bad file
    /// surfaces as a config error.
    fn support_value(&self) -> Value {
        if let Some(path) = &self.bounds {
            let bounds = std::fs::read_to_string(path)
                .ok()
                .and_then(|s| serde_json::from_str::<Value>(&s).ok())
                .unwrap_or_else(|| json!(format!("unreadable bounds file {}", path.display())));
            return json!({"rule": "explicit", "bounds": bounds});
        }
        let rule = match self.support {
            SupportRule::Auto => "auto",
            SupportRule::Range1d => "range1d",
            SupportRule::CellRange => "cell_range",
            SupportRule::Explicit => "explicit",
        };
        json!({ "rule": rule })
    }
}

impl DecomposeArgs {
    pub fn to_value(&self) -> Value {
        let mut v = self.input.common_value();
        let transform = match self.transform {
            TransformArg::Poly => json!({"degree": self.degree, "saturate_cells": false}),
            TransformArg::Saturated => json!({"degree": 0, "saturate_cells": true}),
            TransformArg::Intercept => json!({"degree": 0, "discrete_dummies": false}),
        };
        let mut transform = transform;
        let pairs: Vec<Value> = self
            .interactions
            .iter()
            .map(|s| match s.split_once(':') {
                Some((a, b)) => json!([a, b]),
                None => json!(s),
            })
            .collect();
        transform["interactions"] = Value::Array(pairs);
        let grid = match self.grid {
            GridArg::Auto => json!({"policy": "auto"}),
            GridArg::Unique => json!({"policy": "unique", "max_points": self.grid_points}),
            GridArg::Quantiles => json!({"policy": "quantiles", "count": self.grid_points}),
            GridArg::Explicit => json!({"policy": "explicit", "points": self.grid_values}),
        };
        let propensity = match self.propensity {
            PropensityArg::Logit => json!({"model": "logit"}),
            PropensityArg::Saturated => json!({"model": "saturated_cells"}),
        };
        let analysis = json!({
            "support": self.input.support_value(),
            "grid": grid,
            "model": {
                "estimator": match self.estimator {
                    EstimatorArg::DistributionRegression => "distribution_regression",
                    EstimatorArg::CellEcdf => "cell_ecdf",
                },
                "transform": transform,
                "link": match self.link { LinkArg::Logit => "logit", LinkArg::Probit => "probit" },
                "solver": {"max_iter": self.max_iter, "tolerance": self.tolerance, "parallel": !self.serial},
            },
            "analyses": self.mode.iter().map(|m| m.trim()).collect::<Vec<_>>(),
            "share_models": self.share_models,
            "dfl": {"propensity": propensity, "psi_cap": self.psi_cap},
        });
        let o = v.as_object_mut().unwrap();
        o.insert("analysis".into(), analysis);
        o.insert("threads".into(), json!(self.threads));
        o.insert("seed".into(), json!(self.seed));
        v
    }
}
