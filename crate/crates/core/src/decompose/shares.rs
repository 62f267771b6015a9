use serde::{Deserialize, Serialize};

use super::{write_long_rows, DecomposeError, DecompositionCurves, Mode};
use crate::data::EvaluationGrid;

/// Per-grid contribution of each relaxed-mode term: `|Δ_k| / Σ_j |Δ_j|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionShares {
    pub grid: EvaluationGrid,
    pub composition: Vec<f64>,
    pub structure: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: Vec<f64>,
    /// `(|Δ_W| + |Δ_B|) / Σ_j |Δ_j|`
    pub out_of_support: Vec<f64>,
    /// Grid points where every term is zero; all shares are 0 there.
    pub degenerate: Vec<bool>,
}

pub fn contribution_shares(curves: &DecompositionCurves) -> Result<ContributionShares, DecomposeError> {
    if curves.mode != Mode::Relaxed {
        return Err(DecomposeError::WrongMode);
    }
    let m = curves.grid.len();
    let mut s = ContributionShares {
        grid: curves.grid.clone(),
        composition: vec![0.0; m],
        structure: vec![0.0; m],
        w_out: vec![0.0; m],
        b_out: vec![0.0; m],
        out_of_support: vec![0.0; m],
        degenerate: vec![false; m],
    };
    for i in 0..m {
        let abs = [
            curves.composition[i].abs(),
            curves.structure[i].abs(),
            curves.w_out[i].abs(),
            curves.b_out[i].abs(),
        ];
        let denom: f64 = abs.iter().sum();
        if denom == 0.0 {
            s.degenerate[i] = true;
            continue;
        }
        s.composition[i] = abs[0] / denom;
        s.structure[i] = abs[1] / denom;
        s.w_out[i] = abs[2] / denom;
        s.b_out[i] = abs[3] / denom;
        s.out_of_support[i] = (abs[2] + abs[3]) / denom;
    }
    Ok(s)
}

impl ContributionShares {
    pub fn to_long_csv(&self) -> String {
        let degenerate: Vec<f64> = self.degenerate.iter().map(|&d| f64::from(u8::from(d))).collect();
        let series: Vec<(&str, &[f64])> = vec![
            ("share_x", &self.composition),
            ("share_0", &self.structure),
            ("share_w", &self.w_out),
            ("share_b", &self.b_out),
            ("share_out_of_support", &self.out_of_support),
            ("degenerate", &degenerate),
        ];
        let mut buf = b"y,series,value\n".to_vec();
        write_long_rows(&self.grid, &series, &mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::support::RegionMasses;

    fn curves(terms: [[f64; 4]; 2], mode: Mode) -> DecompositionCurves {
        let col = |k: usize| terms.iter().map(|t| t[k]).collect::<Vec<_>>();
        DecompositionCurves {
            mode,
            grid: EvaluationGrid::new(vec![1.0, 2.0]).unwrap(),
            total: terms.iter().map(|t| t.iter().sum()).collect(),
            composition: col(0),
            structure: col(1),
            w_out: col(2),
            b_out: col(3),
            empirical_total: vec![0.0; 2],
            masses: RegionMasses {
                w_in: 1.0,
                w_out: 0.0,
                b_in: 1.0,
                b_out: 0.0,
            },
            flags: vec![],
        }
    }

    #[test]
    fn two_term_and_empty_gap() {
        let c = curves([[0.3, 0.1, 0.0, 0.0], [0.0; 4]], Mode::Relaxed);
        let s = contribution_shares(&c).unwrap();
        assert!((s.composition[0] - 0.75).abs() < 1e-15);
        assert!((s.structure[0] - 0.25).abs() < 1e-15);
        assert_eq!((s.w_out[0], s.b_out[0]), (0.0, 0.0));
        assert_eq!(s.degenerate, vec![false, true]);
        assert_eq!(
            (s.composition[1], s.structure[1], s.w_out[1], s.b_out[1]),
            (0.0, 0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn shares_sum_to_one_and_aggregate() {
        let c = curves([[-0.2, 0.1, 0.05, -0.05], [0.4, -0.4, 0.1, 0.1]], Mode::Relaxed);
        let s = contribution_shares(&c).unwrap();
        for i in 0..2 {
            let sum = s.composition[i] + s.structure[i] + s.w_out[i] + s.b_out[i];
            assert!((sum - 1.0).abs() < 1e-12);
            assert!((s.out_of_support[i] - (s.w_out[i] + s.b_out[i])).abs() < 1e-15);
        }
        assert!((s.out_of_support[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn conventional_is_wrong_mode() {
        let c = curves([[0.1; 4]; 2], Mode::ConventionalOs);
        assert!(matches!(contribution_shares(&c), Err(DecomposeError::WrongMode)));
    }
}
