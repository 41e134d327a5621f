//! Privacy budget bookkeeping and the Laplace mechanism.

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rng::Rng;

pub const DEFAULT_RATIOS: [f64; 3] = [0.2, 0.4, 0.4];

/// Budget split across the three mechanisms that touch the data:
/// cell densities, first-order counts and second-order counts.
///
/// An infinite total means noise is disabled (debug runs only).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrivacyBudget {
    #[serde(serialize_with = "serialize_epsilon")]
    pub epsilon_total: f64,
    #[serde(serialize_with = "serialize_epsilon")]
    pub epsilon1: f64,
    #[serde(serialize_with = "serialize_epsilon")]
    pub epsilon2: f64,
    #[serde(serialize_with = "serialize_epsilon")]
    pub epsilon3: f64,
}

impl PrivacyBudget {
    pub fn disabled() -> Self {
        Self {
            epsilon_total: f64::INFINITY,
            epsilon1: f64::INFINITY,
            epsilon2: f64::INFINITY,
            epsilon3: f64::INFINITY,
        }
    }

    pub fn is_disabled(&self) -> bool {
        self.epsilon_total.is_infinite()
    }

    /// Sequential composition: the parts add up to the total.
    pub fn is_balanced(&self) -> bool {
        if self.is_disabled() {
            return [self.epsilon1, self.epsilon2, self.epsilon3]
                .iter()
                .all(|e| e.is_infinite());
        }
        self.epsilon1 + self.epsilon2 + self.epsilon3 == self.epsilon_total
    }
}

pub fn split_budget(epsilon_total: f64, ratios: [f64; 3]) -> Result<PrivacyBudget> {
    if !(epsilon_total > 0.0) || !epsilon_total.is_finite() {
        return Err(Error::invalid(format!(
            "epsilon must be positive and finite, got {epsilon_total}"
        )));
    }
    if ratios.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::invalid("budget ratios must be positive"));
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("budget ratios must sum to 1, got {sum}")));
    }
    let epsilon1 = ratios[0] * epsilon_total;
    let mut epsilon2 = ratios[1] * epsilon_total;
    // The third share takes the remainder, nudged by ulps so that the
    // floating-point sum of the three shares equals the total exactly. When
    // rounding skips the total for every choice of the third share, the
    // second share moves by one ulp and the search repeats.
    let mut epsilon3 = f64::NAN;
    'outer: for _ in 0..16 {
        epsilon3 = epsilon_total - (epsilon1 + epsilon2);
        let mut last_above = None;
        for _ in 0..1024 {
            let sum = epsilon1 + epsilon2 + epsilon3;
            if sum == epsilon_total {
                break 'outer;
            }
            let above = sum > epsilon_total;
            if last_above == Some(!above) {
                break;
            }
            last_above = Some(above);
            epsilon3 = if above { epsilon3.next_down() } else { epsilon3.next_up() };
        }
        epsilon2 = epsilon2.next_down();
    }
    if epsilon1 + epsilon2 + epsilon3 != epsilon_total || !(epsilon3 > 0.0) {
        return Err(Error::invalid("cannot split epsilon into the requested shares"));
    }
    Ok(PrivacyBudget {
        epsilon_total,
        epsilon1,
        epsilon2,
        epsilon3,
    })
}

/// Inverse CDF of the zero-mean Laplace distribution at quantile `u`.
pub fn laplace_from_uniform(scale: f64, u: f64) -> f64 {
    let c = u - 0.5;
    if c == 0.0 {
        return 0.0;
    }
    -scale * c.signum() * (1.0 - 2.0 * c.abs()).ln()
}

/// One Laplace(0, scale) draw from a single uniform.
pub fn laplace_sample(scale: f64, rng: &mut Rng) -> Result<f64> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::invalid(format!(
            "Laplace scale must be positive, got {scale}"
        )));
    }
    Ok(laplace_from_uniform(scale, rng.uniform_open()))
}

/// Noise for a sensitivity-1 query answered with budget `epsilon`.
/// Returns 0 without consuming randomness when noise is disabled.
pub(crate) fn unit_sensitivity_noise(epsilon: f64, rng: &mut Rng) -> f64 {
    if epsilon.is_infinite() {
        return 0.0;
    }
    laplace_from_uniform(1.0 / epsilon, rng.uniform_open())
}

pub(crate) fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")))
    }
}

fn serialize_epsilon<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

/// Entry in a run's privacy ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub mechanism: String,
    pub sensitivity: f64,
    pub epsilon: String,
}

pub fn ledger(budget: &PrivacyBudget) -> Vec<LedgerEntry> {
    let fmt = |e: f64| {
        if e.is_infinite() {
            "inf".to_string()
        } else {
            format!("{e}")
        }
    };
    [
        ("cell density (Laplace)", budget.epsilon1),
        ("first-order transition counts (Laplace)", budget.epsilon2),
        ("second-order transition counts (Laplace)", budget.epsilon3),
    ]
    .into_iter()
    .map(|(m, e)| LedgerEntry {
        mechanism: m.to_string(),
        sensitivity: 1.0,
        epsilon: fmt(e),
    })
    .collect()
}
