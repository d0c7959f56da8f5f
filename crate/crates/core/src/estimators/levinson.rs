use crate::error::{Error, Result};
use crate::impact::ArPredictor;

use super::curve::LagCurve;

const MODULE: &str = "estimators";

/// Yule–Walker AR(`order`) fit of a unit-variance sign process with
/// autocorrelation `C(1..=order)`, by the Levinson–Durbin recursion.
pub fn levinson_durbin(c: &LagCurve, order: usize) -> Result<ArPredictor> {
    if order == 0 {
        return Ok(ArPredictor::zero());
    }
    let r = c.dense(order)?;
    let mut a: Vec<f64> = Vec::with_capacity(order);
    let mut err = 1.0;
    for m in 1..=order {
        let mut acc = r[m - 1];
        for (j, aj) in a.iter().enumerate() {
            acc -= aj * r[m - 2 - j];
        }
        let k = acc / err;
        let next_err = err * (1.0 - k * k);
        if !(k.abs() < 1.0) || !(next_err > 0.0) {
            return Err(Error::Numeric {
                module: MODULE,
                step: m,
                message: format!(
                    "autocorrelation is not positive definite (reflection coefficient {k:.6})"
                ),
            });
        }
        let prev = a.clone();
        for j in 0..prev.len() {
            a[j] = prev[j] - k * prev[prev.len() - 1 - j];
        }
        a.push(k);
        err = next_err;
    }
    let mut p = ArPredictor::new(a)?;
    p.error_variance = Some(err);
    Ok(p)
}

/// Innovations `ε_n - Σ_j a_j ε_{n-j}` for `n ≥ J`, where the full history
/// is available.
pub fn innovations(signs: &[i8], predictor: &ArPredictor) -> Vec<f64> {
    let a = &predictor.coefficients;
    let order = a.len();
    (order..signs.len())
        .map(|n| {
            let pred: f64 = a
                .iter()
                .enumerate()
                .map(|(j, aj)| aj * signs[n - 1 - j] as f64)
                .sum();
            signs[n] as f64 - pred
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::CurveRole;

    fn curve(v: Vec<f64>) -> LagCurve {
        let n = v.len();
        LagCurve::new(
            CurveRole::SignAutocorr,
            (1..=n).collect(),
            v,
            vec![1; n],
            vec![0.0; n],
        )
        .unwrap()
    }

    #[test]
    fn ar1_structure() {
        let c = curve((1..=8).map(|l| 0.5f64.powi(l)).collect());
        let p = levinson_durbin(&c, 8).unwrap();
        assert!((p.coefficients[0] - 0.5).abs() < 1e-12);
        assert!(p.coefficients[1..].iter().all(|a| a.abs() < 1e-12));
        assert!((p.error_variance.unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn white_noise_gives_zero_predictor() {
        let p = levinson_durbin(&curve(vec![0.0; 5]), 5).unwrap();
        assert_eq!(p.coefficients, vec![0.0; 5]);
    }

    #[test]
    fn indefinite_input_reports_step() {
        // C(1) = 0.9, C(2) = -0.9 cannot come from a stationary process.
        let err = levinson_durbin(&curve(vec![0.9, -0.9]), 2).unwrap_err();
        match err {
            Error::Numeric { step, .. } => assert_eq!(step, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn innovations_of_exact_ar_path() {
        let p = ArPredictor::new(vec![0.5]).unwrap();
        assert_eq!(innovations(&[1, 1, -1], &p), vec![0.5, -1.5]);
    }
}
