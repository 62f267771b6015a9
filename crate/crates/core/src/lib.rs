//! Distributional gap decomposition between two groups that keeps the
//! observations lying outside the common covariate support.
//!
//! The pipeline is: load an [`data::ObservationTable`], partition it into
//! support regions with [`support::estimate_partition`], fit one conditional
//! CDF per group with [`distreg`], then combine them in [`decompose`].
//! [`pipeline::run_analysis`] strings these together.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod decompose;
pub mod distreg;
pub mod fmt;
pub mod pipeline;
pub mod support;
pub mod synth;

use serde_json::{json, Value};
use thiserror::Error;

use data::DataError;
use decompose::DecomposeError;
use distreg::DistRegError;
use support::SupportError;
use synth::SynthError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Support(#[from] SupportError),
    #[error(transparent)]
    Model(#[from] DistRegError),
    #[error(transparent)]
    Decompose(#[from] DecomposeError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn variant(debug: String) -> String {
    debug.chars().take_while(|c| c.is_ascii_alphanumeric()).collect()
}

impl Error {
    /// Name of the innermost error variant, e.g. `UnknownColumn`.
    pub fn kind(&self) -> String {
        match self {
            Error::Data(e) => variant(format!("{e:?}")),
            Error::Support(e) => variant(format!("{e:?}")),
            Error::Model(DistRegError::Data(e)) | Error::Decompose(DecomposeError::Data(e)) => {
                variant(format!("{e:?}"))
            }
            Error::Synth(SynthError::Data(e)) => variant(format!("{e:?}")),
            Error::Model(e) | Error::Decompose(DecomposeError::Model(e)) => variant(format!("{e:?}")),
            Error::Decompose(e) => variant(format!("{e:?}")),
            Error::Synth(e) => variant(format!("{e:?}")),
            Error::Config(_) => "InvalidConfig".into(),
            Error::Io { .. } => "Io".into(),
        }
    }

    /// Structured details for machine consumers.
    pub fn fields(&self) -> Value {
        let data = match self {
            Error::Data(e)
            | Error::Model(DistRegError::Data(e))
            | Error::Decompose(DecomposeError::Data(e))
            | Error::Synth(SynthError::Data(e)) => Some(e),
            _ => None,
        };
        if let Some(e) = data {
            return match e {
                DataError::UnknownColumn(c) => json!({ "column": c }),
                DataError::NonNumericValue {
                    row,
                    column,
                    value,
                    reason,
                } => json!({ "row": row, "column": column, "value": value, "reason": reason }),
                DataError::UnknownGroupLabel { row, label, .. } => json!({ "row": row, "label": label }),
                DataError::MoreThanTwoGroups { labels } => json!({ "labels": labels }),
                DataError::FewerThanTwoGroups { found } => json!({ "found": found }),
                DataError::EmptyGroup { label } => json!({ "label": label }),
                DataError::DuplicateCovariate { name } => json!({ "covariate": name }),
                _ => json!({}),
            };
        }
        match self {
            Error::Model(DistRegError::SolverDivergence { y }) => json!({ "y": y }),
            Error::Model(DistRegError::UnknownCovariate(c) | DistRegError::ContinuousCovariate(c))
            | Error::Support(SupportError::UnknownCovariate(c)) => json!({ "covariate": c }),
            Error::Decompose(DecomposeError::EmptyCommonSupport(g)) => json!({ "group": g }),
            Error::Synth(SynthError::InvalidSpec(r)) | Error::Config(r) => json!({ "reason": r }),
            Error::Io { path, .. } => json!({ "path": path }),
            _ => json!({}),
        }
    }

    pub fn to_json(&self) -> Value {
        json!({ "error": { "kind": self.kind(), "message": self.to_string(), "fields": self.fields() } })
    }
}
