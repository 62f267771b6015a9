//! Decomposition curves built from plug-in averages of conditional CDFs.
//!
//! Every term is a difference of averages `θ[model | rows]`: one group's
//! fitted conditional CDF averaged over a subset of rows with normalized
//! sampling weights. The relaxed mode splits each group's rows into those
//! inside the common covariate support and those outside it; the
//! conventional mode drops the latter.

mod dfl;
mod shares;

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, EvaluationGrid, Group, ObservationTable};
use crate::distreg::{ConditionalDistribution, DistRegError};
use crate::fmt::fmt_f64;
use crate::support::{Region, RegionMasses, SupportPartition};

pub use dfl::{dfl_counterfactual, DflConfig, DflWeights, PropensityConfig, PropensityDescriptor};
pub use shares::{contribution_shares, ContributionShares};

#[derive(Debug, Error)]
pub enum DecomposeError {
    #[error("selector {0:?} matches no observations")]
    EmptySelector(Selector),
    #[error("models were fitted on different grids")]
    GridMismatch,
    #[error("group `{0}` has no observations inside the common support")]
    EmptyCommonSupport(String),
    #[error("partition has {partition} rows but table has {table}")]
    PartitionMismatch { partition: usize, table: usize },
    #[error("contribution shares need relaxed-mode curves")]
    WrongMode,
    #[error("every reweighting factor is zero")]
    DegenerateReweighting,
    #[error(transparent)]
    Model(#[from] DistRegError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Which rows a conditional CDF is averaged over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selector {
    pub group: Group,
    /// `None` selects every row of the group.
    pub region: Option<Region>,
}

impl Selector {
    pub fn all(group: Group) -> Self {
        Selector { group, region: None }
    }

    pub fn common(group: Group) -> Self {
        Selector {
            group,
            region: Some(Region::Common),
        }
    }

    pub fn outside(group: Group) -> Self {
        Selector {
            group,
            region: Some(Region::outside(group)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub selector: Selector,
    pub curve: Vec<f64>,
    /// Total sampling weight of the selected rows.
    pub weight: f64,
}

fn check_partition(table: &ObservationTable, partition: &SupportPartition) -> Result<(), DecomposeError> {
    if partition.len() != table.len() {
        return Err(DecomposeError::PartitionMismatch {
            partition: partition.len(),
            table: table.len(),
        });
    }
    Ok(())
}

/// `Σ_{i ∈ selector} w_i H(y_m | x_i) / Σ_{i ∈ selector} w_i` at every grid point.
pub fn theta<M: ConditionalDistribution + ?Sized>(
    model: &M,
    table: &ObservationTable,
    partition: &SupportPartition,
    selector: Selector,
) -> Result<ThetaEstimate, DecomposeError> {
    check_partition(table, partition)?;
    let mut acc = vec![0.0; model.grid().len()];
    let mut weight = 0.0;
    for (i, r) in table.rows().iter().enumerate() {
        if r.group != selector.group || selector.region.is_some_and(|reg| partition.region(i) != reg) {
            continue;
        }
        let curve = model.predict_curve(&r.covariates)?;
        for (a, h) in acc.iter_mut().zip(&curve) {
            *a += r.weight * h;
        }
        weight += r.weight;
    }
    if weight == 0.0 {
        return Err(DecomposeError::EmptySelector(selector));
    }
    for a in &mut acc {
        *a /= weight;
    }
    Ok(ThetaEstimate {
        selector,
        curve: acc,
        weight,
    })
}

/// `theta`, or `None` when the selector is empty.
fn theta_opt<M: ConditionalDistribution + ?Sized>(
    model: &M,
    table: &ObservationTable,
    partition: &SupportPartition,
    selector: Selector,
) -> Result<Option<Vec<f64>>, DecomposeError> {
    match theta(model, table, partition, selector) {
        Ok(t) => Ok(Some(t.curve)),
        Err(DecomposeError::EmptySelector(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    Relaxed,
    ConventionalOs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CurveFlag {
    /// One group has no rows inside the common support; the composition and
    /// structure terms are reported as zero.
    EmptyCommonSupport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionCurves {
    pub mode: Mode,
    pub grid: EvaluationGrid,
    /// Δ = Δ_X + Δ_0 + Δ_W + Δ_B
    pub total: Vec<f64>,
    /// Δ_X
    pub composition: Vec<f64>,
    /// Δ_0
    pub structure: Vec<f64>,
    /// Δ_W
    pub w_out: Vec<f64>,
    /// Δ_B
    pub b_out: Vec<f64>,
    /// Weighted-ECDF gap of the rows the decomposition covers.
    pub empirical_total: Vec<f64>,
    pub masses: RegionMasses,
    pub flags: Vec<CurveFlag>,
}

fn zip_sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn sum4(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Vec<f64> {
    (0..a.len()).map(|i| a[i] + b[i] + c[i] + d[i]).collect()
}

fn same_grid<A, B>(a: &A, b: &B) -> Result<EvaluationGrid, DecomposeError>
where
    A: ConditionalDistribution + ?Sized,
    B: ConditionalDistribution + ?Sized,
{
    if a.grid() != b.grid() {
        return Err(DecomposeError::GridMismatch);
    }
    Ok(a.grid().clone())
}

/// The four-term decomposition that keeps observations outside the common
/// support.
///
/// A term is the zero curve when its leading mass is zero or the rows it
/// averages over are empty; the total is the sum of the four terms.
pub fn decompose_relaxed<A, B>(
    table: &ObservationTable,
    partition: &SupportPartition,
    model_w: &A,
    model_b: &B,
) -> Result<DecompositionCurves, DecomposeError>
where
    A: ConditionalDistribution + ?Sized,
    B: ConditionalDistribution + ?Sized,
{
    check_partition(table, partition)?;
    let grid = same_grid(model_w, model_b)?;
    let m = grid.len();
    let masses = partition.masses();
    let zero = vec![0.0; m];

    let w_common = theta_opt(model_w, table, partition, Selector::common(Group::W))?;
    let wb_common = theta_opt(model_w, table, partition, Selector::common(Group::B))?;
    let b_common = theta_opt(model_b, table, partition, Selector::common(Group::B))?;

    let mut flags = Vec::new();
    let (composition, structure) = match (&w_common, &wb_common, &b_common) {
        (Some(wc), Some(wbc), Some(bc)) => (zip_sub(wc, wbc), zip_sub(wbc, bc)),
        _ => {
            flags.push(CurveFlag::EmptyCommonSupport);
            (zero.clone(), zero.clone())
        }
    };

    let out_term = |group: Group,
                    model: &dyn Fn(Selector) -> Result<Option<Vec<f64>>, DecomposeError>,
                    common: &Option<Vec<f64>>|
     -> Result<Vec<f64>, DecomposeError> {
        let mass = masses.out(group);
        if mass == 0.0 {
            return Ok(zero.clone());
        }
        let Some(outside) = model(Selector::outside(group))? else {
            return Ok(zero.clone());
        };
        let inside = common.as_deref().unwrap_or(&zero);
        let diff = match group {
            Group::W => zip_sub(&outside, inside),
            Group::B => zip_sub(inside, &outside),
        };
        Ok(diff.into_iter().map(|d| d * mass).collect())
    };
    let w_out = out_term(Group::W, &|s| theta_opt(model_w, table, partition, s), &w_common)?;
    let b_out = out_term(Group::B, &|s| theta_opt(model_b, table, partition, s), &b_common)?;

    let total = sum4(&composition, &structure, &w_out, &b_out);
    let empirical_total = zip_sub(&table.group_ecdf(Group::W, &grid), &table.group_ecdf(Group::B, &grid));
    Ok(DecompositionCurves {
        mode: Mode::Relaxed,
        grid,
        total,
        composition,
        structure,
        w_out,
        b_out,
        empirical_total,
        masses,
        flags,
    })
}

/// Rows inside the common support only, as conventional methods use.
pub fn trim_to_common(
    table: &ObservationTable,
    partition: &SupportPartition,
) -> Result<ObservationTable, DecomposeError> {
    check_partition(table, partition)?;
    for g in [Group::W, Group::B] {
        let any = table
            .rows()
            .iter()
            .enumerate()
            .any(|(i, r)| r.group == g && partition.region(i) == Region::Common);
        if !any {
            return Err(DecomposeError::EmptyCommonSupport(table.labels().label(g).to_string()));
        }
    }
    Ok(table.subset(|i, _| partition.region(i) == Region::Common)?)
}

/// The two-term decomposition on the common-support rows, with models fitted
/// on those rows.
pub fn decompose_conventional<A, B>(
    table: &ObservationTable,
    partition: &SupportPartition,
    model_w_trimmed: &A,
    model_b_trimmed: &B,
) -> Result<DecompositionCurves, DecomposeError>
where
    A: ConditionalDistribution + ?Sized,
    B: ConditionalDistribution + ?Sized,
{
    let trimmed = trim_to_common(table, partition)?;
    let grid = same_grid(model_w_trimmed, model_b_trimmed)?;
    let wc = theta(model_w_trimmed, table, partition, Selector::common(Group::W))?.curve;
    let wbc = theta(model_w_trimmed, table, partition, Selector::common(Group::B))?.curve;
    let bc = theta(model_b_trimmed, table, partition, Selector::common(Group::B))?.curve;
    let composition = zip_sub(&wc, &wbc);
    let structure = zip_sub(&wbc, &bc);
    let zero = vec![0.0; grid.len()];
    let total = sum4(&composition, &structure, &zero, &zero);
    let empirical_total = zip_sub(
        &trimmed.group_ecdf(Group::W, &grid),
        &trimmed.group_ecdf(Group::B, &grid),
    );
    Ok(DecompositionCurves {
        mode: Mode::ConventionalOs,
        grid,
        total,
        composition,
        structure,
        w_out: zero.clone(),
        b_out: zero,
        empirical_total,
        masses: partition.masses(),
        flags: Vec::new(),
    })
}

impl DecompositionCurves {
    /// `(series name, values)` in output order. Conventional-mode series carry
    /// an `_os` suffix and omit the out-of-support terms.
    pub fn series(&self) -> Vec<(&'static str, &[f64])> {
        match self.mode {
            Mode::Relaxed => vec![
                ("delta", &self.total[..]),
                ("delta_x", &self.composition[..]),
                ("delta_0", &self.structure[..]),
                ("delta_w", &self.w_out[..]),
                ("delta_b", &self.b_out[..]),
                ("delta_empirical", &self.empirical_total[..]),
            ],
            Mode::ConventionalOs => vec![
                ("delta_os", &self.total[..]),
                ("delta_x_os", &self.composition[..]),
                ("delta_0_os", &self.structure[..]),
                ("delta_os_empirical", &self.empirical_total[..]),
            ],
        }
    }

    /// Long-format rows `y,series,value` without a header.
    pub fn write_long_rows<W: Write>(&self, sink: &mut W) -> std::io::Result<()> {
        write_long_rows(&self.grid, &self.series(), sink)
    }

    pub fn to_long_csv(&self) -> String {
        let mut buf = b"y,series,value\n".to_vec();
        self.write_long_rows(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }
}

pub fn write_long_rows<W: Write>(
    grid: &EvaluationGrid,
    series: &[(&str, &[f64])],
    sink: &mut W,
) -> std::io::Result<()> {
    for (name, values) in series {
        for (y, v) in grid.points().iter().zip(values.iter()) {
            writeln!(sink, "{},{},{}", fmt_f64(*y), name, fmt_f64(*v))?;
        }
    }
    Ok(())
}
