//! Covariate support estimation and the common / out-of-support split.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Group, ObservationTable};

#[derive(Debug, Error)]
pub enum SupportError {
    #[error("range-1d support needs exactly one continuous covariate, schema has {0}")]
    StrategyMismatch(usize),
    #[error("explicit bounds name unknown covariate `{0}`")]
    UnknownCovariate(String),
    #[error("invalid bound for `{name}`: {reason}")]
    InvalidBound { name: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Region {
    Common,
    WOnly,
    BOnly,
}

impl Region {
    pub fn as_str(self) -> &'static str {
        match self {
            Region::Common => "COMMON",
            Region::WOnly => "W_ONLY",
            Region::BOnly => "B_ONLY",
        }
    }

    /// The out-of-support tag for observations of `group`.
    pub fn outside(group: Group) -> Region {
        match group {
            Group::W => Region::WOnly,
            Group::B => Region::BOnly,
        }
    }
}

/// Bounds on one covariate: a closed interval or a finite set of levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bound {
    Interval([f64; 2]),
    Values { values: Vec<f64> },
}

impl Bound {
    fn contains(&self, v: f64) -> bool {
        match self {
            Bound::Interval([lo, hi]) => *lo <= v && v <= *hi,
            Bound::Values { values } => values.contains(&v),
        }
    }
}

/// User-supplied supports; a covariate not listed for a group is unconstrained.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitBounds {
    #[serde(rename = "W", default)]
    pub w: BTreeMap<String, Bound>,
    #[serde(rename = "B", default)]
    pub b: BTreeMap<String, Bound>,
}

impl ExplicitBounds {
    fn of(&self, group: Group) -> &BTreeMap<String, Bound> {
        match group {
            Group::W => &self.w,
            Group::B => &self.b,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", deny_unknown_fields)]
pub enum SupportStrategy {
    /// `Range1d` for a single continuous covariate without discrete ones,
    /// `CellRange` otherwise.
    #[default]
    Auto,
    Range1d,
    CellRange,
    Explicit {
        bounds: ExplicitBounds,
    },
}

/// What rule produced a partition, with the estimated bounds where small
/// enough to echo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum StrategyDescriptor {
    Range1d {
        covariate: String,
        w: [f64; 2],
        b: [f64; 2],
    },
    CellRange {
        w_cells: usize,
        b_cells: usize,
        shared_cells: usize,
    },
    Explicit {
        bounds: ExplicitBounds,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionMasses {
    /// μ_W(S_B)
    pub w_in: f64,
    /// μ_W(S̄_B)
    pub w_out: f64,
    /// μ_B(S_W)
    pub b_in: f64,
    /// μ_B(S̄_W)
    pub b_out: f64,
}

impl RegionMasses {
    pub fn out(&self, group: Group) -> f64 {
        match group {
            Group::W => self.w_out,
            Group::B => self.b_out,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionCounts {
    pub w_common: usize,
    pub w_only: usize,
    pub b_common: usize,
    pub b_only: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportPartition {
    region_of: Vec<Region>,
    masses: RegionMasses,
    counts: RegionCounts,
    /// Unmatched weight of each group as a share of the pooled sample.
    pooled_w_only: f64,
    pooled_b_only: f64,
    strategy: StrategyDescriptor,
}

impl SupportPartition {
    fn from_tags(table: &ObservationTable, region_of: Vec<Region>, strategy: StrategyDescriptor) -> Self {
        let mut weight = [[0.0f64; 2]; 2]; // [group][in=0 / out=1]
        let mut counts = RegionCounts::default();
        for (r, tag) in table.rows().iter().zip(&region_of) {
            let out = usize::from(*tag != Region::Common);
            weight[r.group as usize][out] += r.weight;
            match (r.group, tag) {
                (Group::W, Region::Common) => counts.w_common += 1,
                (Group::B, Region::Common) => counts.b_common += 1,
                (Group::W, _) => counts.w_only += 1,
                (Group::B, _) => counts.b_only += 1,
            }
        }
        let share = |g: Group| {
            let [inside, outside] = weight[g as usize];
            let total = inside + outside;
            (inside / total, outside / total)
        };
        let (w_in, w_out) = share(Group::W);
        let (b_in, b_out) = share(Group::B);
        let pooled: f64 = weight[0].iter().sum::<f64>() + weight[1].iter().sum::<f64>();
        SupportPartition {
            region_of,
            masses: RegionMasses {
                w_in,
                w_out,
                b_in,
                b_out,
            },
            counts,
            pooled_w_only: weight[Group::W as usize][1] / pooled,
            pooled_b_only: weight[Group::B as usize][1] / pooled,
            strategy,
        }
    }

    /// Every observation treated as inside the common support.
    pub fn all_common(table: &ObservationTable) -> Self {
        Self::from_tags(
            table,
            vec![Region::Common; table.len()],
            StrategyDescriptor::Explicit {
                bounds: ExplicitBounds::default(),
            },
        )
    }

    pub fn region_of(&self) -> &[Region] {
        &self.region_of
    }

    pub fn region(&self, row: usize) -> Region {
        self.region_of[row]
    }

    pub fn masses(&self) -> RegionMasses {
        self.masses
    }

    pub fn counts(&self) -> RegionCounts {
        self.counts
    }

    pub fn pooled_unmatched(&self) -> (f64, f64) {
        (self.pooled_w_only, self.pooled_b_only)
    }

    pub fn strategy(&self) -> &StrategyDescriptor {
        &self.strategy
    }

    pub fn len(&self) -> usize {
        self.region_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.region_of.is_empty()
    }

    /// The partition of the group-swapped table.
    pub fn swap_groups(&self) -> Self {
        let region_of = self
            .region_of
            .iter()
            .map(|r| match r {
                Region::Common => Region::Common,
                Region::WOnly => Region::BOnly,
                Region::BOnly => Region::WOnly,
            })
            .collect();
        let strategy = match &self.strategy {
            StrategyDescriptor::Range1d { covariate, w, b } => StrategyDescriptor::Range1d {
                covariate: covariate.clone(),
                w: *b,
                b: *w,
            },
            StrategyDescriptor::CellRange {
                w_cells,
                b_cells,
                shared_cells,
            } => StrategyDescriptor::CellRange {
                w_cells: *b_cells,
                b_cells: *w_cells,
                shared_cells: *shared_cells,
            },
            StrategyDescriptor::Explicit { bounds } => StrategyDescriptor::Explicit {
                bounds: ExplicitBounds {
                    w: bounds.b.clone(),
                    b: bounds.w.clone(),
                },
            },
        };
        SupportPartition {
            region_of,
            masses: RegionMasses {
                w_in: self.masses.b_in,
                w_out: self.masses.b_out,
                b_in: self.masses.w_in,
                b_out: self.masses.w_out,
            },
            counts: RegionCounts {
                w_common: self.counts.b_common,
                w_only: self.counts.b_only,
                b_common: self.counts.w_common,
                b_only: self.counts.w_only,
            },
            pooled_w_only: self.pooled_b_only,
            pooled_b_only: self.pooled_w_only,
            strategy,
        }
    }
}

/// Returns `(μ_W(S_B), μ_W(S̄_B), μ_B(S_W), μ_B(S̄_W))`.
pub fn region_masses(partition: &SupportPartition) -> (f64, f64, f64, f64) {
    let m = partition.masses;
    (m.w_in, m.w_out, m.b_in, m.b_out)
}

pub fn estimate_partition(
    table: &ObservationTable,
    strategy: &SupportStrategy,
) -> Result<SupportPartition, SupportError> {
    let continuous = table.continuous_indices();
    let discrete = table.discrete_indices();
    match strategy {
        SupportStrategy::Auto if continuous.len() == 1 && discrete.is_empty() => range_1d(table, continuous[0]),
        SupportStrategy::Auto | SupportStrategy::CellRange => Ok(cell_range(table, &continuous, &discrete)),
        SupportStrategy::Range1d => match continuous.as_slice() {
            [c] => range_1d(table, *c),
            other => Err(SupportError::StrategyMismatch(other.len())),
        },
        SupportStrategy::Explicit { bounds } => explicit(table, bounds),
    }
}

fn range_1d(table: &ObservationTable, cov: usize) -> Result<SupportPartition, SupportError> {
    let mut range = [[f64::INFINITY, f64::NEG_INFINITY]; 2];
    for r in table.rows() {
        let v = r.covariates[cov];
        let b = &mut range[r.group as usize];
        b[0] = b[0].min(v);
        b[1] = b[1].max(v);
    }
    let tags = table
        .rows()
        .iter()
        .map(|r| {
            let [lo, hi] = range[r.group.other() as usize];
            let v = r.covariates[cov];
            if lo <= v && v <= hi {
                Region::Common
            } else {
                Region::outside(r.group)
            }
        })
        .collect();
    Ok(SupportPartition::from_tags(
        table,
        tags,
        StrategyDescriptor::Range1d {
            covariate: table.schema()[cov].name.clone(),
            w: range[Group::W as usize],
            b: range[Group::B as usize],
        },
    ))
}

fn level_key(v: f64) -> u64 {
    // -0.0 and 0.0 are the same level.
    (v + 0.0).to_bits()
}

fn cell_range(table: &ObservationTable, continuous: &[usize], discrete: &[usize]) -> SupportPartition {
    type BBox = Vec<[f64; 2]>;
    let key = |x: &[f64]| -> Vec<u64> { discrete.iter().map(|&d| level_key(x[d])).collect() };
    let mut boxes: BTreeMap<Vec<u64>, [Option<BBox>; 2]> = BTreeMap::new();
    for r in table.rows() {
        let slot = &mut boxes.entry(key(&r.covariates)).or_default()[r.group as usize];
        let bbox = slot.get_or_insert_with(|| vec![[f64::INFINITY, f64::NEG_INFINITY]; continuous.len()]);
        for (b, &c) in bbox.iter_mut().zip(continuous) {
            let v = r.covariates[c];
            b[0] = b[0].min(v);
            b[1] = b[1].max(v);
        }
    }
    let tags = table
        .rows()
        .iter()
        .map(|r| {
            let inside = boxes[&key(&r.covariates)][r.group.other() as usize]
                .as_ref()
                .is_some_and(|bbox| {
                    bbox.iter()
                        .zip(continuous)
                        .all(|(b, &c)| b[0] <= r.covariates[c] && r.covariates[c] <= b[1])
                });
            if inside {
                Region::Common
            } else {
                Region::outside(r.group)
            }
        })
        .collect();
    let count = |g: Group| boxes.values().filter(|v| v[g as usize].is_some()).count();
    let shared = boxes.values().filter(|v| v[0].is_some() && v[1].is_some()).count();
    SupportPartition::from_tags(
        table,
        tags,
        StrategyDescriptor::CellRange {
            w_cells: count(Group::W),
            b_cells: count(Group::B),
            shared_cells: shared,
        },
    )
}

fn explicit(table: &ObservationTable, bounds: &ExplicitBounds) -> Result<SupportPartition, SupportError> {
    let mut resolved: [Vec<(usize, &Bound)>; 2] = [Vec::new(), Vec::new()];
    for g in [Group::W, Group::B] {
        for (name, bound) in bounds.of(g) {
            let idx = table
                .covariate_index(name)
                .ok_or_else(|| SupportError::UnknownCovariate(name.clone()))?;
            if let Bound::Interval([lo, hi]) = bound {
                if !(lo <= hi) {
                    return Err(SupportError::InvalidBound {
                        name: name.clone(),
                        reason: format!("lower {lo} exceeds upper {hi}"),
                    });
                }
            }
            resolved[g as usize].push((idx, bound));
        }
    }
    let tags = table
        .rows()
        .iter()
        .map(|r| {
            let inside = resolved[r.group.other() as usize]
                .iter()
                .all(|(idx, b)| b.contains(r.covariates[*idx]));
            if inside {
                Region::Common
            } else {
                Region::outside(r.group)
            }
        })
        .collect();
    Ok(SupportPartition::from_tags(
        table,
        tags,
        StrategyDescriptor::Explicit { bounds: bounds.clone() },
    ))
}
