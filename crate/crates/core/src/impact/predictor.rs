use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::Kernel;

/// Truncated linear predictor `E[ε_n | I_{n-1}] = Σ_{j=1}^{J} a_j ε_{n-j}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArPredictor {
    /// `a_1 ..= a_J`.
    pub coefficients: Vec<f64>,
    /// One-step prediction-error variance, when known (Levinson–Durbin).
    pub error_variance: Option<f64>,
}

impl ArPredictor {
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if let Some(i) = coefficients.iter().position(|a| !a.is_finite()) {
            return Err(Error::param(
                "impact_engine",
                format!("predictor coefficient a_{} is not finite", i + 1),
            ));
        }
        Ok(Self {
            coefficients,
            error_variance: None,
        })
    }

    pub fn zero() -> Self {
        Self {
            coefficients: Vec::new(),
            error_variance: Some(1.0),
        }
    }

    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    /// Predictions `E[ε_n | I_{n-1}]` for every `n`, with signs before the
    /// start of the tape taken as zero.
    pub fn predictions(&self, signs: &[i8]) -> Vec<f64> {
        let a = &self.coefficients;
        (0..signs.len())
            .map(|n| {
                a.iter()
                    .enumerate()
                    .take(n)
                    .map(|(j, &aj)| aj * signs[n - 1 - j] as f64)
                    .sum()
            })
            .collect()
    }

    /// Largest `|E[ε_n | I_{n-1}]|` along a sign history. Values at or above 1
    /// mean the linear predictor leaves the range of a sign expectation.
    pub fn max_abs_prediction(&self, signs: &[i8]) -> f64 {
        self.predictions(signs)
            .into_iter()
            .map(f64::abs)
            .fold(0.0, f64::max)
    }
}

/// `G(ℓ) = 1 - Σ_{j=1}^{ℓ-1} a_j` for `ℓ = 1..=max_lag`.
pub fn kernel_from_predictor(predictor: &ArPredictor, max_lag: usize) -> Result<Kernel> {
    if max_lag == 0 {
        return Err(Error::param("impact_engine", "max_lag must be at least 1"));
    }
    let mut values = Vec::with_capacity(max_lag);
    let mut g = 1.0;
    for l in 1..=max_lag {
        values.push(g);
        if let Some(a) = predictor.coefficients.get(l - 1) {
            g -= a;
        }
    }
    Kernel::tabulated(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(a: Vec<f64>, n: usize) -> Vec<f64> {
        match kernel_from_predictor(&ArPredictor::new(a).unwrap(), n).unwrap() {
            Kernel::Tabulated { values } => values,
            _ => unreachable!(),
        }
    }

    #[test]
    fn partial_sums() {
        assert_eq!(g(vec![0.5], 4), vec![1.0, 0.5, 0.5, 0.5]);
        assert_eq!(g(vec![], 3), vec![1.0, 1.0, 1.0]);
        let v = g(vec![0.3, 0.2], 4);
        let want = [1.0, 0.7, 0.5, 0.5];
        for (a, b) in v.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_max_lag_rejected() {
        assert!(kernel_from_predictor(&ArPredictor::zero(), 0).is_err());
    }

    #[test]
    fn predictions_start_from_empty_history() {
        let p = ArPredictor::new(vec![0.5, 0.25]).unwrap();
        let pred = p.predictions(&[1, 1, -1, 1]);
        assert_eq!(pred, vec![0.0, 0.5, 0.75, -0.25]);
        assert_eq!(p.max_abs_prediction(&[1, 1, -1, 1]), 0.75);
    }
}
