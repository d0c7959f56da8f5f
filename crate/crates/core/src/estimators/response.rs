use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tape::{pow_psi, TradeTape};

use super::curve::{ConditionalResponse, CurveRole, LagCurve};

const MODULE: &str = "estimators";

/// Default minimum number of trades for a volume bin to be reported.
pub const MIN_BIN_OCCUPANCY: usize = 50;

/// Mean and standard error of `(a_n - ā)(b_n - b̄)`, i.e. the covariance
/// `mean(ab) - mean(a)·mean(b)` with the SE of its summands.
fn centered_product_stats(a: &[f64], b: &[f64]) -> (f64, f64) {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut s, mut s2) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let p = (x - ma) * (y - mb);
        s += p;
        s2 += p * p;
    }
    let mean = s / n;
    let var = if a.len() > 1 {
        ((s2 - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    (mean, (var / n).sqrt())
}

/// `R(ℓ) = ⟨(p_{n+ℓ} - p_n) ε_n⟩ - ⟨p_{n+ℓ} - p_n⟩⟨ε_n⟩` for `ℓ = 1..=max_lag`.
pub fn response(tape: &TradeTape, max_lag: usize) -> Result<LagCurve> {
    let prices = tape.require_prices(MODULE)?;
    let n = tape.len();
    if max_lag == 0 || max_lag >= n {
        return Err(Error::param(
            MODULE,
            format!("max_lag = {max_lag} must be in [1, N) with N = {n}"),
        ));
    }
    let eps = tape.signs.to_f64();
    let rows: Vec<(f64, f64, usize)> = (1..=max_lag)
        .into_par_iter()
        .map(|l| {
            // Trades n = 0..=N-ℓ see a price ℓ steps later.
            let m = n - l + 1;
            let d: Vec<f64> = (0..m).map(|i| prices[i + l] - prices[i]).collect();
            let (mean, se) = centered_product_stats(&d, &eps[..m]);
            (mean, se, m)
        })
        .collect();
    let mut curve = LagCurve {
        role: CurveRole::Response,
        lags: (1..=max_lag).collect(),
        values: rows.iter().map(|r| r.0).collect(),
        counts: rows.iter().map(|r| r.2).collect(),
        se: rows.iter().map(|r| r.1).collect(),
        notes: Vec::new(),
    };
    if tape
        .signs
        .as_slice()
        .iter()
        .all(|&s| s == tape.signs.as_slice()[0])
    {
        curve.notes.push("degenerate: all trade signs equal".into());
    }
    curve.validate()?;
    Ok(curve)
}

/// `nbins` logarithmically spaced edges spanning the observed volumes.
pub fn log_volume_bins(volumes: &[f64], nbins: usize) -> Result<Vec<f64>> {
    if volumes.is_empty() || nbins == 0 {
        return Err(Error::param(MODULE, "need volumes and at least one bin"));
    }
    let lo = volumes.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = volumes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo > 0.0) {
        return Err(Error::input(MODULE, "volumes must be > 0 for log bins"));
    }
    if lo == hi {
        return Ok(vec![lo * (1.0 - 1e-9), hi * (1.0 + 1e-9)]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut edges: Vec<f64> = (0..=nbins)
        .map(|i| (a + (b - a) * i as f64 / nbins as f64).exp())
        .collect();
    edges[0] = lo;
    edges[nbins] = hi;
    Ok(edges)
}

/// Per-bin `⟨(p_{n+T} - p_n) ε_n⟩` over trades with `v_n` in the bin. Bins
/// are `[e_i, e_{i+1})`, the last one closed. Bins with fewer than
/// `min_occupancy` trades are dropped.
pub fn conditional_response(
    tape: &TradeTape,
    lag: usize,
    edges: &[f64],
    min_occupancy: usize,
) -> Result<ConditionalResponse> {
    let prices = tape.require_prices(MODULE)?;
    let n = tape.len();
    if lag == 0 || lag > n {
        return Err(Error::param(MODULE, format!("lag {lag} outside [1, {n}]")));
    }
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::param(
            MODULE,
            "bin edges must be strictly increasing",
        ));
    }
    let nb = edges.len() - 1;
    let last = edges[nb];
    let mut acc = vec![(0.0f64, 0.0f64, 0.0f64, 0usize); nb];
    let signs = tape.signs.as_slice();
    let vols = tape.volumes.as_slice();
    for i in 0..=(n - lag).min(n - 1) {
        let v = vols[i];
        if v < edges[0] || v > last {
            continue;
        }
        let b = if v == last {
            nb - 1
        } else {
            edges.partition_point(|&e| e <= v) - 1
        };
        let x = (prices[i + lag] - prices[i]) * signs[i] as f64;
        let a = &mut acc[b];
        a.0 += x;
        a.1 += x * x;
        a.2 += v;
        a.3 += 1;
    }
    let mut out = ConditionalResponse {
        lag,
        bins: Vec::new(),
        mean_volume: Vec::new(),
        values: Vec::new(),
        counts: Vec::new(),
        se: Vec::new(),
    };
    for (b, &(s, s2, sv, c)) in acc.iter().enumerate() {
        if c < min_occupancy.max(1) {
            continue;
        }
        let cf = c as f64;
        let mean = s / cf;
        let var = if c > 1 {
            ((s2 - cf * mean * mean) / (cf - 1.0)).max(0.0)
        } else {
            0.0
        };
        out.bins.push((edges[b], edges[b + 1]));
        out.mean_volume.push(sv / cf);
        out.values.push(mean);
        out.counts.push(c);
        out.se.push((var / cf).sqrt());
    }
    if out.is_empty() {
        return Err(Error::estimation(
            MODULE,
            format!("no volume bin reaches the minimum occupancy of {min_occupancy}"),
        ));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowScheme {
    #[default]
    NonOverlapping,
    /// Every start point; samples are strongly dependent.
    Overlapping,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoEstimate {
    pub value: f64,
    pub windows: usize,
    /// Large-sample SE `(1 - ρ²)/√(K - 1)`, with `K` the number of
    /// non-overlapping windows the data could hold.
    pub se: f64,
}

/// Correlation between window price changes `p_{s+T} - p_s` and the signed
/// flow `Σ ε_n v_n^ψ` in the same window, without mean subtraction.
pub fn rho(
    tape: &TradeTape,
    window: usize,
    psi_weight: f64,
    scheme: WindowScheme,
) -> Result<RhoEstimate> {
    let prices = tape.require_prices(MODULE)?;
    if window == 0 {
        return Err(Error::param(MODULE, "window length T must be >= 1"));
    }
    if !(psi_weight.is_finite() && psi_weight >= 0.0) {
        return Err(Error::param(
            MODULE,
            format!("psi_weight = {psi_weight} must be >= 0"),
        ));
    }
    let n = tape.len();
    let independent = n / window;
    if independent < 2 {
        return Err(Error::estimation(
            MODULE,
            format!("N = {n} holds fewer than 2 windows of length {window}"),
        ));
    }
    let flow: Vec<f64> = tape
        .signs
        .as_slice()
        .iter()
        .zip(tape.volumes.as_slice())
        .map(|(&s, &v)| s as f64 * pow_psi(v, psi_weight))
        .collect();
    let mut cum = Vec::with_capacity(n + 1);
    cum.push(0.0);
    let mut acc = 0.0;
    for f in &flow {
        acc += f;
        cum.push(acc);
    }
    let (step, windows) = match scheme {
        WindowScheme::NonOverlapping => (window, independent),
        WindowScheme::Overlapping => (1, n - window + 1),
    };
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for k in 0..windows {
        let s = k * step;
        let dp = prices[s + window] - prices[s];
        let q = if scheme == WindowScheme::NonOverlapping {
            flow[s..s + window].iter().sum::<f64>()
        } else {
            cum[s + window] - cum[s]
        };
        sxy += dp * q;
        sxx += dp * dp;
        syy += q * q;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::estimation(
            MODULE,
            "price changes or signed flow vanish in every window",
        ));
    }
    let value = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    Ok(RhoEstimate {
        value,
        windows,
        se: (1.0 - value * value) / ((independent - 1) as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::{GeneratorTag, SignSeries, VolumeSeries};

    fn tape(signs: Vec<i8>, vols: Vec<f64>, prices: Vec<f64>) -> TradeTape {
        TradeTape::new(
            SignSeries::new(signs, 0, GeneratorTag::External).unwrap(),
            VolumeSeries::new(vols, None).unwrap(),
        )
        .unwrap()
        .with_prices(prices)
        .unwrap()
    }

    #[test]
    fn two_trade_response() {
        let t = tape(vec![1, -1], vec![1.0; 2], vec![100.0, 100.1, 100.0]);
        let r = response(&t, 1).unwrap();
        assert!((r.values[0] - 0.1).abs() < 1e-12);
        assert_eq!(r.counts[0], 2);
    }

    #[test]
    fn missing_prices_is_input_error() {
        let t = TradeTape::new(
            SignSeries::new(vec![1, -1], 0, GeneratorTag::External).unwrap(),
            VolumeSeries::constant(2, 1.0).unwrap(),
        )
        .unwrap();
        assert_eq!(response(&t, 1).unwrap_err().exit_code(), 2);
        assert!(rho(&t, 1, 1.0, WindowScheme::NonOverlapping).is_err());
    }

    #[test]
    fn max_lag_must_be_below_n() {
        let t = tape(vec![1, -1], vec![1.0; 2], vec![0.0; 3]);
        assert!(response(&t, 2).is_err());
        assert!(response(&t, 0).is_err());
    }

    #[test]
    fn constant_volume_is_one_bin() {
        let signs: Vec<i8> = (0..200).map(|i| if i % 3 == 0 { 1 } else { -1 }).collect();
        let mut p = vec![0.0];
        for &s in &signs {
            p.push(p.last().unwrap() + 0.1 * s as f64);
        }
        let t = tape(signs, vec![2.0; 200], p);
        let edges = log_volume_bins(t.volumes.as_slice(), 10).unwrap();
        let c = conditional_response(&t, 1, &edges, MIN_BIN_OCCUPANCY).unwrap();
        assert_eq!(c.len(), 1);
        assert!((c.values[0] - 0.1).abs() < 1e-12);
        assert!(conditional_response(&t, 1, &edges, 1000).is_err());
    }

    #[test]
    fn rho_needs_two_windows() {
        let t = tape(vec![1, 1, -1], vec![1.0; 3], vec![0.0, 1.0, 2.0, 1.0]);
        assert!(rho(&t, 2, 1.0, WindowScheme::NonOverlapping).is_err());
        let r = rho(&t, 1, 1.0, WindowScheme::NonOverlapping).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
    }
}
