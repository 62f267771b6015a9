//! Population decomposition of a discrete-cells DGP, computed directly from
//! cell masses and within-cell outcome laws.

use super::{AtomLaw, CellSpec, DgpKind, DgpSpec, SynthError};
use crate::data::{EvaluationGrid, Group};
use crate::decompose::{CurveFlag, DecompositionCurves, Mode};
use crate::support::RegionMasses;

/// `Σ_c m_c H(y | c) / Σ_c m_c` over the selected cells, or `None` if they
/// carry no mass.
fn average<'a>(
    grid: &EvaluationGrid,
    cells: impl Iterator<Item = (&'a CellSpec, f64)>,
    law: impl Fn(&'a CellSpec) -> &'a AtomLaw,
) -> Option<Vec<f64>> {
    let mut acc = vec![0.0; grid.len()];
    let mut mass = 0.0;
    for (c, m) in cells.filter(|(_, m)| *m > 0.0) {
        let l = law(c);
        for (a, &y) in acc.iter_mut().zip(grid.points()) {
            *a += m * l.cdf(y);
        }
        mass += m;
    }
    (mass > 0.0).then(|| acc.into_iter().map(|a| a / mass).collect())
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// The true relaxed decomposition on `grid`. A cell is in a group's support
/// exactly when its mass for that group is positive.
pub fn oracle_decompose(spec: &DgpSpec, grid: &EvaluationGrid) -> Result<DecompositionCurves, SynthError> {
    spec.validate()?;
    let DgpKind::DiscreteCells { cells } = &spec.kind else {
        return Err(SynthError::NotDiscrete);
    };
    let both = |c: &CellSpec| c.mass_w > 0.0 && c.mass_b > 0.0;
    fn law(g: Group) -> impl Fn(&CellSpec) -> &AtomLaw {
        move |c| c.outcome(g).expect("validated")
    }
    let m = grid.len();
    let zero = vec![0.0; m];

    let total_w: f64 = cells.iter().map(|c| c.mass_w).sum();
    let total_b: f64 = cells.iter().map(|c| c.mass_b).sum();
    let w_in: f64 = cells.iter().filter(|c| both(c)).map(|c| c.mass_w).sum::<f64>() / total_w;
    let b_in: f64 = cells.iter().filter(|c| both(c)).map(|c| c.mass_b).sum::<f64>() / total_b;
    let masses = RegionMasses {
        w_in,
        w_out: cells.iter().filter(|c| !both(c)).map(|c| c.mass_w).sum::<f64>() / total_w,
        b_in,
        b_out: cells.iter().filter(|c| !both(c)).map(|c| c.mass_b).sum::<f64>() / total_b,
    };

    let common = || cells.iter().filter(|c| both(c));
    let w_common = average(grid, common().map(|c| (c, c.mass_w)), law(Group::W));
    let wb_common = average(grid, common().map(|c| (c, c.mass_b)), law(Group::W));
    let b_common = average(grid, common().map(|c| (c, c.mass_b)), law(Group::B));
    let w_only = average(
        grid,
        cells.iter().filter(|c| !both(c)).map(|c| (c, c.mass_w)),
        law(Group::W),
    );
    let b_only = average(
        grid,
        cells.iter().filter(|c| !both(c)).map(|c| (c, c.mass_b)),
        law(Group::B),
    );

    let mut flags = Vec::new();
    let (composition, structure) = match (&w_common, &wb_common, &b_common) {
        (Some(wc), Some(wbc), Some(bc)) => (sub(wc, wbc), sub(wbc, bc)),
        _ => {
            flags.push(CurveFlag::EmptyCommonSupport);
            (zero.clone(), zero.clone())
        }
    };
    let scaled = |d: Vec<f64>, mass: f64| -> Vec<f64> { d.into_iter().map(|v| v * mass).collect() };
    let w_out = match &w_only {
        Some(o) => scaled(sub(o, w_common.as_deref().unwrap_or(&zero)), masses.w_out),
        None => zero.clone(),
    };
    let b_out = match &b_only {
        Some(o) => scaled(sub(b_common.as_deref().unwrap_or(&zero), o), masses.b_out),
        None => zero.clone(),
    };
    let total: Vec<f64> = (0..m)
        .map(|i| composition[i] + structure[i] + w_out[i] + b_out[i])
        .collect();
    let all = |g: Group| average(grid, cells.iter().map(|c| (c, c.mass(g))), law(g)).expect("validated");
    let empirical_total = sub(&all(Group::W), &all(Group::B));

    Ok(DecompositionCurves {
        mode: Mode::Relaxed,
        grid: grid.clone(),
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

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    type Q = Ratio<i64>;

    fn q(n: i64, d: i64) -> Q {
        Q::new(n, d)
    }

    /// Exact-arithmetic version of the same population decomposition for a
    /// one-dimensional cell DGP where `Y` equals the cell value.
    fn exact(mass_w: &[Q], mass_b: &[Q], values: &[i64], y: i64) -> [Q; 5] {
        let zero = q(0, 1);
        let h = |v: i64| if v <= y { q(1, 1) } else { zero };
        let avg = |masses: &[Q], keep: &dyn Fn(usize) -> bool| -> Option<Q> {
            let tot: Q = (0..values.len()).filter(|&i| keep(i)).map(|i| masses[i]).sum();
            (tot != zero).then(|| {
                (0..values.len())
                    .filter(|&i| keep(i))
                    .map(|i| masses[i] * h(values[i]))
                    .sum::<Q>()
                    / tot
            })
        };
        let both = |i: usize| mass_w[i] != zero && mass_b[i] != zero;
        let not_both = |i: usize| !both(i);
        let wc = avg(mass_w, &both).unwrap_or(zero);
        // Y is a deterministic function of the cell, so H_W = H_B within a cell.
        let wbc = avg(mass_b, &both).unwrap_or(zero);
        let bc = wbc;
        let mu_w_out: Q = (0..values.len()).filter(|&i| not_both(i)).map(|i| mass_w[i]).sum();
        let mu_b_out: Q = (0..values.len()).filter(|&i| not_both(i)).map(|i| mass_b[i]).sum();
        let dw = avg(mass_w, &not_both).map_or(zero, |o| (o - wc) * mu_w_out);
        let db = avg(mass_b, &not_both).map_or(zero, |o| (bc - o) * mu_b_out);
        let dx = wc - wbc;
        let d0 = wbc - bc;
        [dx + d0 + dw + db, dx, d0, dw, db]
    }

    fn to_f64(v: Q) -> f64 {
        *v.numer() as f64 / *v.denom() as f64
    }

    fn cell_spec(mass_w: &[f64], mass_b: &[f64]) -> DgpSpec {
        let cells: Vec<CellSpec> = (0..mass_w.len())
            .map(|i| {
                let v = (i + 1) as f64;
                let law = AtomLaw {
                    atoms: vec![v],
                    probs: vec![1.0],
                };
                CellSpec {
                    x: vec![v],
                    mass_w: mass_w[i],
                    mass_b: mass_b[i],
                    outcome_w: (mass_w[i] > 0.0).then(|| law.clone()),
                    outcome_b: (mass_b[i] > 0.0).then(|| law.clone()),
                }
            })
            .collect();
        DgpSpec {
            kind: DgpKind::DiscreteCells { cells },
            n_w: 10,
            n_b: 10,
            seed: 0,
            weights: None,
        }
    }

    #[test]
    fn hand_example_matches_exact_arithmetic() {
        let spec = cell_spec(&[0.5, 0.5, 0.0], &[0.0, 0.5, 0.5]);
        let grid = EvaluationGrid::new(vec![1.0, 2.0, 3.0]).unwrap();
        let o = oracle_decompose(&spec, &grid).unwrap();
        let (mw, mb) = ([q(1, 2), q(1, 2), q(0, 1)], [q(0, 1), q(1, 2), q(1, 2)]);
        for (i, y) in [1, 2, 3].into_iter().enumerate() {
            let e = exact(&mw, &mb, &[1, 2, 3], y);
            let got = [o.total[i], o.composition[i], o.structure[i], o.w_out[i], o.b_out[i]];
            for k in 0..5 {
                assert_eq!(got[k], to_f64(e[k]), "y={y} term {k}");
            }
        }
        // Worked values: at y=1 the whole gap is W's unmatched cell; at y=2 it is B's.
        assert_eq!((o.total[0], o.w_out[0], o.b_out[0]), (0.5, 0.5, 0.0));
        assert_eq!((o.total[1], o.w_out[1], o.b_out[1]), (0.5, 0.0, 0.5));
        assert_eq!(o.total[2], 0.0);
        assert_eq!(o.composition, vec![0.0; 3]);
        assert_eq!(o.structure, vec![0.0; 3]);
        assert_eq!(o.total, o.empirical_total);
        assert_eq!((o.masses.w_out, o.masses.b_out), (0.5, 0.5));
    }

    #[test]
    fn exact_agreement_on_overlapping_cells() {
        let mw = [q(1, 4), q(1, 4), q(1, 8), q(3, 8), q(0, 1)];
        let mb = [q(0, 1), q(1, 8), q(3, 8), q(1, 4), q(1, 4)];
        let f = |v: &[Q]| v.iter().map(|x| to_f64(*x)).collect::<Vec<_>>();
        let spec = cell_spec(&f(&mw), &f(&mb));
        let grid = EvaluationGrid::new(vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let o = oracle_decompose(&spec, &grid).unwrap();
        for (i, y) in (1..=5).enumerate() {
            let e = exact(&mw, &mb, &[1, 2, 3, 4, 5], y);
            let got = [o.total[i], o.composition[i], o.structure[i], o.w_out[i], o.b_out[i]];
            for k in 0..5 {
                assert!(
                    (got[k] - to_f64(e[k])).abs() < 1e-15,
                    "y={y} term {k}: {} vs {}",
                    got[k],
                    e[k]
                );
            }
            assert!((o.total[i] - o.empirical_total[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn disjoint_support_is_flagged() {
        let spec = cell_spec(&[1.0, 0.0], &[0.0, 1.0]);
        let grid = EvaluationGrid::new(vec![1.0, 2.0]).unwrap();
        let o = oracle_decompose(&spec, &grid).unwrap();
        assert_eq!(o.flags, vec![CurveFlag::EmptyCommonSupport]);
        assert_eq!(o.total, vec![1.0, 0.0]);
    }
}
