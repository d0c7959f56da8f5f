use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tape::{pow_psi, TradeTape};

use super::{ArPredictor, ImpactConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuotePair {
    pub ask: f64,
    pub bid: f64,
    pub spread: f64,
}

/// Market-maker quotes that leave no ex-post regret under the surprise model:
/// `ask = p + λv^ψ(1 - E)`, `bid = p + λv^ψ(-1 - E)`, spread `2λv^ψ`.
pub fn quotes(
    prev_price: f64,
    predictor_value: f64,
    cfg: &ImpactConfig,
    v: f64,
) -> Result<QuotePair> {
    if !(predictor_value.abs() < 1.0) {
        return Err(Error::Numeric {
            module: "impact_engine",
            step: 0,
            message: format!(
                "predictor value {predictor_value} outside (-1, 1): the linear predictor has blown up"
            ),
        });
    }
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::param(
            "impact_engine",
            format!("volume {v} must be > 0"),
        ));
    }
    let half = cfg.lambda * pow_psi(v, cfg.psi);
    Ok(QuotePair {
        ask: prev_price + half * (1.0 - predictor_value),
        bid: prev_price + half * (-1.0 - predictor_value),
        spread: 2.0 * half,
    })
}

/// Quotes posted before every trade of a priced tape, using the tape's own
/// prices as the reference `p_{n}`.
pub fn quote_path(
    tape: &TradeTape,
    predictor: &ArPredictor,
    cfg: &ImpactConfig,
) -> Result<Vec<QuotePair>> {
    let prices = tape.require_prices("impact_engine")?;
    let preds = predictor.predictions(tape.signs.as_slice());
    preds
        .iter()
        .zip(tape.volumes.as_slice())
        .enumerate()
        .map(|(n, (&e, &v))| {
            quotes(prices[n], e, cfg, v).map_err(|err| match err {
                Error::Numeric {
                    module, message, ..
                } => Error::Numeric {
                    module,
                    step: n,
                    message,
                },
                other => other,
            })
        })
        .collect()
}

/// Volatility per unit time from volatility per trade: `σ = σ₁ √f`.
pub fn vol_per_trade_to_per_time(sigma1: f64, f: f64) -> Result<f64> {
    if !(f.is_finite() && f > 0.0) {
        return Err(Error::param(
            "impact_engine",
            format!("trade frequency {f} must be > 0"),
        ));
    }
    if !(sigma1.is_finite() && sigma1 >= 0.0) {
        return Err(Error::param(
            "impact_engine",
            format!("sigma1 = {sigma1} must be >= 0"),
        ));
    }
    Ok(sigma1 * f.sqrt())
}
