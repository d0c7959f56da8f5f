use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Propagator `G(ℓ)` on integer lags `ℓ ≥ 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum Kernel {
    /// `G(ℓ) = g1 · ℓ^(-beta) + plateau`.
    PowerLaw { beta: f64, g1: f64, plateau: f64 },
    /// `G(ℓ) = values[ℓ-1]` for `ℓ ≤ L`, held at `values[L-1]` beyond.
    Tabulated { values: Vec<f64> },
}

impl Kernel {
    pub fn power_law(beta: f64, g1: f64, plateau: f64) -> Result<Self> {
        let k = Kernel::PowerLaw { beta, g1, plateau };
        k.validate()?;
        Ok(k)
    }

    pub fn tabulated(values: Vec<f64>) -> Result<Self> {
        let k = Kernel::Tabulated { values };
        k.validate()?;
        Ok(k)
    }

    /// Permanent impact of size `g` at every lag.
    pub fn permanent(g: f64) -> Self {
        Kernel::Tabulated { values: vec![g] }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Kernel::PowerLaw { beta, g1, plateau } => {
                if !(g1.is_finite() && *g1 > 0.0) {
                    return Err(Error::param("kernel", format!("g1 = {g1} must be > 0")));
                }
                if !(beta.is_finite() && *beta >= 0.0) {
                    return Err(Error::param(
                        "kernel",
                        format!("beta = {beta} must be >= 0"),
                    ));
                }
                if !(plateau.is_finite() && *plateau >= 0.0) {
                    return Err(Error::param(
                        "kernel",
                        format!("plateau = {plateau} must be >= 0"),
                    ));
                }
            }
            Kernel::Tabulated { values } => {
                if values.is_empty() {
                    return Err(Error::param("kernel", "tabulated kernel has no values"));
                }
                if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                    return Err(Error::param(
                        "kernel",
                        format!("G({}) is not finite", i + 1),
                    ));
                }
            }
        }
        Ok(())
    }

    /// `G(ℓ)`; zero for `ℓ = 0` (a trade does not move the price it sees).
    pub fn value(&self, lag: usize) -> f64 {
        if lag == 0 {
            return 0.0;
        }
        match self {
            Kernel::PowerLaw { beta, g1, plateau } => {
                if *beta == 0.0 {
                    g1 + plateau
                } else {
                    g1 * (lag as f64).powf(-beta) + plateau
                }
            }
            Kernel::Tabulated { values } => values[lag.min(values.len()) - 1],
        }
    }

    /// `G(1..=n)`.
    pub fn values(&self, n: usize) -> Vec<f64> {
        (1..=n).map(|l| self.value(l)).collect()
    }

    /// `G(∞)`.
    pub fn plateau(&self) -> f64 {
        match self {
            Kernel::PowerLaw { beta, g1, plateau } => {
                if *beta == 0.0 {
                    g1 + plateau
                } else {
                    *plateau
                }
            }
            Kernel::Tabulated { values } => *values.last().expect("validated"),
        }
    }

    /// Lag beyond which `G` is constant, if any.
    pub fn horizon(&self) -> Option<usize> {
        match self {
            Kernel::PowerLaw { beta, .. } => (*beta == 0.0).then_some(1),
            Kernel::Tabulated { values } => Some(values.len()),
        }
    }

    /// The constant value when `G` does not depend on the lag.
    pub fn constant_value(&self) -> Option<f64> {
        match self {
            Kernel::PowerLaw { beta, .. } if *beta == 0.0 => Some(self.plateau()),
            Kernel::PowerLaw { .. } => None,
            Kernel::Tabulated { values } => {
                let first = values[0];
                values.iter().all(|&v| v == first).then_some(first)
            }
        }
    }

    pub fn has_negative_values(&self, up_to: usize) -> bool {
        match self {
            Kernel::PowerLaw { .. } => false,
            Kernel::Tabulated { values } => values.iter().take(up_to.max(1)).any(|&v| v < 0.0),
        }
    }
}
