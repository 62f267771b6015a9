use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    #[default]
    Logit,
    Probit,
}

fn std_normal() -> Normal {
    Normal::standard()
}

impl Link {
    /// Λ(η)
    pub fn cdf(self, eta: f64) -> f64 {
        match self {
            Link::Logit => {
                if eta >= 0.0 {
                    1.0 / (1.0 + (-eta).exp())
                } else {
                    let e = eta.exp();
                    e / (1.0 + e)
                }
            }
            Link::Probit => 0.5 * erfc(-eta * FRAC_1_SQRT_2),
        }
    }

    /// 1 − Λ(η), computed without cancellation.
    pub fn sf(self, eta: f64) -> f64 {
        self.cdf(-eta)
    }

    pub fn pdf(self, eta: f64) -> f64 {
        match self {
            Link::Logit => {
                let p = self.cdf(eta);
                p * self.sf(eta)
            }
            Link::Probit => std_normal().pdf(eta),
        }
    }

    /// ln Λ(η)
    pub fn ln_cdf(self, eta: f64) -> f64 {
        match self {
            Link::Logit => -softplus(-eta),
            Link::Probit => self.cdf(eta).ln(),
        }
    }

    /// ln(1 − Λ(η))
    pub fn ln_sf(self, eta: f64) -> f64 {
        self.ln_cdf(-eta)
    }

    /// Λ⁻¹(p); infinite at 0 and 1.
    pub fn quantile(self, p: f64) -> f64 {
        match self {
            Link::Logit => (p / (1.0 - p)).ln(),
            Link::Probit => {
                if p <= 0.0 {
                    f64::NEG_INFINITY
                } else if p >= 1.0 {
                    f64::INFINITY
                } else {
                    // Two Newton steps polish the library inverse to full precision.
                    let mut x = std_normal().inverse_cdf(p);
                    for _ in 0..2 {
                        let d = self.pdf(x);
                        if d > 0.0 {
                            x -= (self.cdf(x) - p) / d;
                        }
                    }
                    x
                }
            }
        }
    }

    /// Score factor and Fisher weight at η for a 0/1 response, per unit case
    /// weight: `d ln L / dη` and `E[-d² ln L / dη²]`.
    pub(crate) fn score_and_info(self, eta: f64, y: bool) -> (f64, f64) {
        match self {
            Link::Logit => {
                let p = self.cdf(eta);
                let q = self.sf(eta);
                let score = if y { q } else { -p };
                (score, p * q)
            }
            Link::Probit => {
                let phi = self.pdf(eta);
                let p = self.cdf(eta);
                let q = self.sf(eta);
                // φ/Φ and φ/(1−Φ) with asymptotic fallbacks once the tail underflows.
                let lam_lo = if p > 0.0 { phi / p } else { -eta };
                let lam_hi = if q > 0.0 { phi / q } else { eta };
                let score = if y { lam_lo } else { -lam_hi };
                let info = if p > 0.0 && q > 0.0 { lam_lo * phi / q } else { 0.0 };
                (score, info)
            }
        }
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
