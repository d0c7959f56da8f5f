use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::lagged_product_sums;
use crate::tape::SignSeries;

use super::curve::{CurveRole, LagCurve};

const MODULE: &str = "estimators";

/// Centered lag-zero covariance `1 - ε̄²` of a sign series, the companion of
/// [`sign_autocorr`] in the response decomposition.
pub fn sign_variance(signs: &SignSeries) -> f64 {
    1.0 - signs.mean().powi(2)
}

/// `Ĉ(ℓ) = ⟨ε_n ε_{n+ℓ}⟩ - ε̄²` for `ℓ = 1..=max_lag`. SE is the binomial
/// standard deviation of the ±1 products over `√(N - ℓ)`.
pub fn sign_autocorr(signs: &SignSeries, max_lag: usize) -> Result<LagCurve> {
    let n = signs.len();
    if max_lag == 0 || max_lag >= n {
        return Err(Error::param(
            MODULE,
            format!("max_lag = {max_lag} must be in [1, N) with N = {n}"),
        ));
    }
    let x = signs.to_f64();
    let mean = signs.mean();
    let sums = lagged_product_sums(&x, max_lag);
    let mut values = Vec::with_capacity(max_lag);
    let mut counts = Vec::with_capacity(max_lag);
    let mut se = Vec::with_capacity(max_lag);
    for (l, &sum) in sums.iter().enumerate().take(max_lag + 1).skip(1) {
        let c = n - l;
        // Products are ±1, so their mean is exact up to rounding of the FFT.
        let m = (sum / c as f64).clamp(-1.0, 1.0);
        values.push((m - mean * mean).clamp(-1.0, 1.0));
        counts.push(c);
        se.push(((1.0 - m * m).max(0.0) / c as f64).sqrt());
    }
    let mut curve = LagCurve::new(
        CurveRole::SignAutocorr,
        (1..=max_lag).collect(),
        values,
        counts,
        se,
    )?;
    if mean.abs() == 1.0 {
        curve
            .notes
            .push("degenerate: constant sign series has zero variance".into());
    }
    Ok(curve)
}

/// Normalized autocorrelation of a real series at lags `1..=max_lag`,
/// centered by the overall mean. Returns zeros for a constant series.
pub fn series_autocorrelation(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if max_lag >= n {
        return Err(Error::param(
            MODULE,
            format!("max_lag = {max_lag} must be < series length {n}"),
        ));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let sums = lagged_product_sums(&centered, max_lag);
    let var = sums[0] / n as f64;
    if var == 0.0 {
        return Ok(vec![0.0; max_lag]);
    }
    Ok((1..=max_lag)
        .map(|l| sums[l] / (n - l) as f64 / var)
        .collect())
}

/// `D(ℓ) = Var(p_{n+ℓ} - p_n) / ℓ` over all start points, `ℓ = 1..=max_lag`.
pub fn diffusivity(prices: &[f64], max_lag: usize) -> Result<LagCurve> {
    let lags: Vec<usize> = (1..=max_lag).collect();
    diffusivity_at(prices, &lags)
}

/// [`diffusivity`] on an arbitrary increasing set of lags.
pub fn diffusivity_at(prices: &[f64], lags: &[usize]) -> Result<LagCurve> {
    let max_lag = lags.last().copied().unwrap_or(0);
    if lags.is_empty() || prices.len() < max_lag + 2 {
        return Err(Error::param(
            MODULE,
            format!(
                "diffusivity needs at least max_lag + 2 = {} prices, got {}",
                max_lag + 2,
                prices.len()
            ),
        ));
    }
    if let Some(i) = prices.iter().position(|p| !p.is_finite()) {
        return Err(Error::input(MODULE, format!("price {i} is not finite")));
    }
    let rows: Vec<(f64, f64, usize)> = lags
        .par_iter()
        .map(|&l| {
            let m = prices.len() - l;
            let mf = m as f64;
            let mean = (0..m).map(|i| prices[i + l] - prices[i]).sum::<f64>() / mf;
            let (mut s, mut s2) = (0.0, 0.0);
            for i in 0..m {
                let d = prices[i + l] - prices[i] - mean;
                let q = d * d;
                s += q;
                s2 += q * q;
            }
            let var = s / mf;
            let var_of_sq = ((s2 / mf) - var * var).max(0.0);
            let lf = l as f64;
            (var / lf, (var_of_sq / mf).sqrt() / lf, m)
        })
        .collect();
    LagCurve::new(
        CurveRole::Diffusivity,
        lags.to_vec(),
        rows.iter().map(|r| r.0).collect(),
        rows.iter().map(|r| r.2).collect(),
        rows.iter().map(|r| r.1).collect(),
    )
}
