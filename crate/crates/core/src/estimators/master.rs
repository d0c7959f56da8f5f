use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::curve::ConditionalResponse;

const MODULE: &str = "estimators";

/// Default capitalization exponent of the master-curve rescaling.
pub const DEFAULT_DELTA: f64 = 0.3;
const GRID_POINTS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockCurve {
    pub capitalization: f64,
    pub mean_volume: f64,
    pub curve: ConditionalResponse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasterCurve {
    pub delta: f64,
    /// Rescaled `(x, y)` points of each stock.
    pub curves: Vec<Vec<(f64, f64)>>,
    /// Shared x-support `[lo, hi]`.
    pub overlap: (f64, f64),
    /// Mean over the shared support of `(max - min) / mean` across stocks.
    pub metric: f64,
}

/// Maps each curve to `x = M^δ v / v̄`, `y = M^δ R` and measures how well the
/// rescaled curves coincide, by log-log interpolation on a common grid.
pub fn master_curve_rescale(stocks: &[StockCurve], delta: f64) -> Result<MasterCurve> {
    if stocks.len() < 2 {
        return Err(Error::param(MODULE, "master curve needs at least 2 stocks"));
    }
    if !delta.is_finite() {
        return Err(Error::param(MODULE, "delta must be finite"));
    }
    let mut curves = Vec::with_capacity(stocks.len());
    for (i, s) in stocks.iter().enumerate() {
        if !(s.capitalization > 0.0 && s.mean_volume > 0.0) {
            return Err(Error::param(
                MODULE,
                format!("stock {i}: capitalization and mean volume must be > 0"),
            ));
        }
        let m = s.capitalization.powf(delta);
        let mut pts: Vec<(f64, f64)> = s
            .curve
            .mean_volume
            .iter()
            .zip(&s.curve.values)
            .map(|(&v, &r)| (m * v / s.mean_volume, m * r))
            .collect();
        if pts.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
            return Err(Error::estimation(
                MODULE,
                format!("stock {i}: curve must be positive"),
            ));
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        curves.push(pts);
    }
    let lo = curves
        .iter()
        .map(|c| c[0].0)
        .fold(f64::NEG_INFINITY, f64::max);
    let hi = curves
        .iter()
        .map(|c| c[c.len() - 1].0)
        .fold(f64::INFINITY, f64::min);
    if !(lo <= hi) {
        return Err(Error::estimation(
            MODULE,
            "rescaled curves share no x-support; collapse metric undefined",
        ));
    }
    let grid: Vec<f64> = if lo == hi {
        vec![lo]
    } else {
        (0..GRID_POINTS)
            .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (GRID_POINTS - 1) as f64).exp())
            .collect()
    };
    let mut total = 0.0;
    for &x in &grid {
        let ys: Vec<f64> = curves.iter().map(|c| loglog_interp(c, x)).collect();
        let max = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = ys.iter().copied().fold(f64::INFINITY, f64::min);
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        total += (max - min) / mean;
    }
    Ok(MasterCurve {
        delta,
        curves,
        overlap: (lo, hi),
        metric: total / grid.len() as f64,
    })
}

/// Piecewise-linear interpolation in `(ln x, ln y)`; `x` within the support.
fn loglog_interp(pts: &[(f64, f64)], x: f64) -> f64 {
    let i = pts.partition_point(|p| p.0 < x);
    if i == 0 {
        return pts[0].1;
    }
    if i == pts.len() {
        return pts[pts.len() - 1].1;
    }
    let (x0, y0) = pts[i - 1];
    let (x1, y1) = pts[i];
    if x1 == x0 {
        return y1;
    }
    let t = (x.ln() - x0.ln()) / (x1.ln() - x0.ln());
    (y0.ln() + t * (y1.ln() - y0.ln())).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarraFit {
    pub a: f64,
    pub r_squared: f64,
}

/// Least-squares `A` in `R(v) ≈ A σ √(v / V)` through the origin, with
/// `r² = 1 - SS_res / SS_tot`.
pub fn fit_barra(curve: &ConditionalResponse, sigma: f64, volume_rate: f64) -> Result<BarraFit> {
    if !(sigma > 0.0 && sigma.is_finite() && volume_rate > 0.0 && volume_rate.is_finite()) {
        return Err(Error::param(MODULE, "sigma and V must be > 0"));
    }
    if curve.len() < 2 {
        return Err(Error::estimation(
            MODULE,
            "BARRA fit needs at least 2 volume bins",
        ));
    }
    if curve.values.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::estimation(
            MODULE,
            "BARRA fit needs a positive curve",
        ));
    }
    let xs: Vec<f64> = curve
        .mean_volume
        .iter()
        .map(|v| sigma * (v / volume_rate).sqrt())
        .collect();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(&curve.values).map(|(x, y)| x * y).sum();
    if sxx == 0.0 {
        return Err(Error::estimation(MODULE, "degenerate volume support"));
    }
    let a = sxy / sxx;
    let mean = curve.values.iter().sum::<f64>() / curve.len() as f64;
    let ss_res: f64 = xs
        .iter()
        .zip(&curve.values)
        .map(|(x, y)| (y - a * x).powi(2))
        .sum();
    let ss_tot: f64 = curve.values.iter().map(|y| (y - mean).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    };
    Ok(BarraFit { a, r_squared })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cond(v: &[f64], f: impl Fn(f64) -> f64) -> ConditionalResponse {
        ConditionalResponse {
            lag: 1,
            bins: v.iter().map(|&x| (x, x)).collect(),
            mean_volume: v.to_vec(),
            values: v.iter().map(|&x| f(x)).collect(),
            counts: vec![100; v.len()],
            se: vec![0.0; v.len()],
        }
    }

    fn family(m: f64, vbar: f64) -> StockCurve {
        let v: Vec<f64> = (0..40).map(|i| vbar * 1.2f64.powi(i - 20)).collect();
        StockCurve {
            capitalization: m,
            mean_volume: vbar,
            curve: cond(&v, |x| m.powf(-0.3) * (m.powf(0.3) * x / vbar).powf(0.3)),
        }
    }

    #[test]
    fn identical_stocks_collapse() {
        let s = family(5.0, 2.0);
        let mc = master_curve_rescale(&[s.clone(), s], 0.3).unwrap();
        assert_eq!(mc.metric, 0.0);
    }

    #[test]
    fn synthetic_family_collapses_only_at_the_right_delta() {
        let stocks = [family(1.0, 3.0), family(10.0, 1.0), family(100.0, 0.5)];
        assert!(master_curve_rescale(&stocks, 0.3).unwrap().metric < 1e-9);
        assert!(master_curve_rescale(&stocks, 0.0).unwrap().metric > 0.5);
    }

    #[test]
    fn disjoint_support_is_an_error() {
        let a = StockCurve {
            capitalization: 1.0,
            mean_volume: 1.0,
            curve: cond(&[1.0, 2.0], |x| x),
        };
        let b = StockCurve {
            capitalization: 1.0,
            mean_volume: 1.0,
            curve: cond(&[5.0, 6.0], |x| x),
        };
        assert!(master_curve_rescale(&[a.clone(), b], 0.3).is_err());
        assert!(master_curve_rescale(&[a], 0.3).is_err());
    }

    #[test]
    fn barra_exact_square_root() {
        let v = [0.5, 1.0, 2.0, 4.0];
        let f = fit_barra(&cond(&v, |x| 0.3 * (x / 2.0).sqrt()), 0.3, 2.0).unwrap();
        assert!((f.a - 1.0).abs() < 1e-12);
        let f = fit_barra(&cond(&v, |x| 2.0 * 0.3 * (x / 2.0).sqrt()), 0.3, 2.0).unwrap();
        assert!((f.a - 2.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn barra_degenerate() {
        assert!(fit_barra(&cond(&[1.0], |x| x), 1.0, 1.0).is_err());
        assert!(fit_barra(&cond(&[1.0, 2.0], |x| x), 0.0, 1.0).is_err());
    }
}
