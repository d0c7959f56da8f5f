use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::impact::Kernel;
use crate::numerics::ols_line;

const MODULE: &str = "estimators";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveRole {
    /// `R(ℓ)`, price response to a trade sign.
    Response,
    /// `C(ℓ)`, sign autocorrelation.
    SignAutocorr,
    /// `D(ℓ) = Var(p_{n+ℓ} - p_n) / ℓ`.
    Diffusivity,
    /// `ρ(T)` on a grid of window lengths.
    Rho,
}

/// A lag-indexed statistic with its sample sizes and standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagCurve {
    pub role: CurveRole,
    pub lags: Vec<usize>,
    pub values: Vec<f64>,
    pub counts: Vec<usize>,
    pub se: Vec<f64>,
    /// Free-form flags (degenerate input, approximate mode, ...).
    #[serde(default)]
    pub notes: Vec<String>,
}

impl LagCurve {
    pub fn new(
        role: CurveRole,
        lags: Vec<usize>,
        values: Vec<f64>,
        counts: Vec<usize>,
        se: Vec<f64>,
    ) -> Result<Self> {
        let curve = Self {
            role,
            lags,
            values,
            counts,
            se,
            notes: Vec::new(),
        };
        curve.validate()?;
        Ok(curve)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.lags.len();
        if self.values.len() != n || self.counts.len() != n || self.se.len() != n {
            return Err(Error::input(MODULE, "curve columns have different lengths"));
        }
        if self.lags.first() == Some(&0) {
            return Err(Error::input(MODULE, "lags must be positive"));
        }
        if self.lags.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::input(MODULE, "lags must be strictly increasing"));
        }
        if self.counts.contains(&0) {
            return Err(Error::input(MODULE, "every lag needs at least one sample"));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(
                MODULE,
                format!("value at lag {} is not finite", self.lags[i]),
            ));
        }
        match self.role {
            CurveRole::SignAutocorr if self.values.iter().any(|v| v.abs() > 1.0) => {
                return Err(Error::input(MODULE, "sign autocorrelation outside [-1, 1]"));
            }
            CurveRole::Diffusivity if self.values.iter().any(|&v| v < 0.0) => {
                return Err(Error::input(MODULE, "diffusivity must be >= 0"));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.lags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lags.is_empty()
    }

    pub fn value_at(&self, lag: usize) -> Option<f64> {
        self.lags.binary_search(&lag).ok().map(|i| self.values[i])
    }

    pub fn se_at(&self, lag: usize) -> Option<f64> {
        self.lags.binary_search(&lag).ok().map(|i| self.se[i])
    }

    /// Values at lags `1..=up_to`, which must all be present.
    pub fn dense(&self, up_to: usize) -> Result<Vec<f64>> {
        if up_to == 0 {
            return Ok(Vec::new());
        }
        if self.lags.len() < up_to || self.lags[up_to - 1] != up_to {
            return Err(Error::param(
                MODULE,
                format!(
                    "{:?} curve must cover lags 1..={up_to} contiguously (has {} lags, max {})",
                    self.role,
                    self.lags.len(),
                    self.lags.last().copied().unwrap_or(0)
                ),
            ));
        }
        Ok(self.values[..up_to].to_vec())
    }

    /// Keeps roughly `points` lags spread evenly in `log ℓ` over `[lo, hi]`.
    pub fn log_spaced(&self, lo: usize, hi: usize, points: usize) -> LagCurve {
        let (llo, lhi) = ((lo.max(1)) as f64, (hi.max(lo.max(1))) as f64);
        let mut wanted: Vec<usize> = (0..points.max(2))
            .map(|i| {
                let t = i as f64 / (points.max(2) - 1) as f64;
                (llo.ln() + t * (lhi.ln() - llo.ln())).exp().round() as usize
            })
            .collect();
        wanted.dedup();
        let mut out = LagCurve {
            role: self.role,
            lags: Vec::new(),
            values: Vec::new(),
            counts: Vec::new(),
            se: Vec::new(),
            notes: self.notes.clone(),
        };
        for lag in wanted {
            if let Ok(i) = self.lags.binary_search(&lag) {
                out.lags.push(lag);
                out.values.push(self.values[i]);
                out.counts.push(self.counts[i]);
                out.se.push(self.se[i]);
            }
        }
        out
    }
}

/// `R(T, v)` averaged within volume bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalResponse {
    pub lag: usize,
    /// Lower and upper edge of each reported bin.
    pub bins: Vec<(f64, f64)>,
    /// Mean volume of the trades that fell in each bin.
    pub mean_volume: Vec<f64>,
    pub values: Vec<f64>,
    pub counts: Vec<usize>,
    pub se: Vec<f64>,
}

impl ConditionalResponse {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Whether a fitted curve decays or grows; fixes the sign of the exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    /// `y ∝ x^(-exponent)`.
    Decaying,
    /// `y ∝ x^(+exponent)`.
    Growing,
}

/// Anything that can be fitted by a power law: `(x, y)` points and a trend.
pub trait PowerLawSource {
    fn points(&self) -> Vec<(f64, f64)>;
    fn trend(&self) -> Trend;
}

impl PowerLawSource for LagCurve {
    fn points(&self) -> Vec<(f64, f64)> {
        self.lags
            .iter()
            .zip(&self.values)
            .map(|(&l, &v)| (l as f64, v))
            .collect()
    }

    /// Sign autocorrelations decay; responses, diffusivities and correlations
    /// are fitted as growing.
    fn trend(&self) -> Trend {
        match self.role {
            CurveRole::SignAutocorr => Trend::Decaying,
            _ => Trend::Growing,
        }
    }
}

impl PowerLawSource for ConditionalResponse {
    fn points(&self) -> Vec<(f64, f64)> {
        self.mean_volume
            .iter()
            .zip(&self.values)
            .map(|(&v, &r)| (v, r))
            .collect()
    }

    fn trend(&self) -> Trend {
        Trend::Growing
    }
}

/// Fits the first `lags` tabulated (or evaluated) kernel values.
pub struct KernelSample<'a> {
    pub kernel: &'a Kernel,
    pub lags: usize,
}

impl PowerLawSource for KernelSample<'_> {
    fn points(&self) -> Vec<(f64, f64)> {
        (1..=self.lags)
            .map(|l| (l as f64, self.kernel.value(l)))
            .collect()
    }

    fn trend(&self) -> Trend {
        Trend::Decaying
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub fit_range: (f64, f64),
    pub r_squared: f64,
    pub points: usize,
}

/// Least-squares line through `(ln x, ln y)` for the points with
/// `lo ≤ x ≤ hi`. Needs at least four points, all with `y > 0`.
pub fn fit_power_law(source: &impl PowerLawSource, lo: f64, hi: f64) -> Result<PowerLawFit> {
    let pts: Vec<(f64, f64)> = source
        .points()
        .into_iter()
        .filter(|&(x, _)| x >= lo && x <= hi)
        .collect();
    if pts.len() < 4 {
        return Err(Error::estimation(
            MODULE,
            format!(
                "power-law fit needs >= 4 points in [{lo}, {hi}], found {}",
                pts.len()
            ),
        ));
    }
    if let Some(&(x, y)) = pts.iter().find(|&&(x, y)| !(y > 0.0) || !(x > 0.0)) {
        return Err(Error::estimation(
            MODULE,
            format!("nonpositive point ({x}, {y}) in fit range; shift the range"),
        ));
    }
    let logs: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let (intercept, slope, r2) = ols_line(&logs);
    let exponent = match source.trend() {
        Trend::Decaying => -slope,
        Trend::Growing => slope,
    };
    let xs = pts.iter().map(|p| p.0);
    let fit_lo = xs.clone().fold(f64::INFINITY, f64::min);
    let fit_hi = xs.fold(f64::NEG_INFINITY, f64::max);
    Ok(PowerLawFit {
        exponent,
        prefactor: intercept.exp(),
        fit_range: (fit_lo, fit_hi),
        r_squared: r2,
        points: pts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(role: CurveRole, f: impl Fn(f64) -> f64, n: usize) -> LagCurve {
        let lags: Vec<usize> = (1..=n).collect();
        let values = lags.iter().map(|&l| f(l as f64)).collect();
        LagCurve::new(role, lags, values, vec![1; n], vec![0.0; n]).unwrap()
    }

    #[test]
    fn exact_decaying_power_law() {
        let c = curve(CurveRole::SignAutocorr, |l| l.powf(-0.5), 64);
        let fit = fit_power_law(&c, 1.0, 64.0).unwrap();
        assert!((fit.exponent - 0.5).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_growing_power_law() {
        let r = ConditionalResponse {
            lag: 1,
            bins: vec![(0.0, 1.0); 6],
            mean_volume: vec![0.5, 1.0, 2.0, 4.0, 8.0, 16.0],
            values: [0.5, 1.0, 2.0, 4.0, 8.0, 16.0]
                .iter()
                .map(|v: &f64| 2.0 * v.powf(0.3))
                .collect(),
            counts: vec![100; 6],
            se: vec![0.0; 6],
        };
        let fit = fit_power_law(&r, 0.0, 100.0).unwrap();
        assert!((fit.exponent - 0.3).abs() < 1e-12);
        assert!((fit.prefactor - 2.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_points_or_nonpositive() {
        let c = curve(CurveRole::Response, |l| l, 3);
        assert!(fit_power_law(&c, 1.0, 3.0).is_err());
        let c = curve(CurveRole::Response, |l| 5.0 - l, 8);
        assert!(fit_power_law(&c, 1.0, 8.0).is_err());
        assert!(fit_power_law(&c, 1.0, 4.0).is_ok());
    }

    #[test]
    fn validation_rules() {
        assert!(LagCurve::new(
            CurveRole::Response,
            vec![1, 1],
            vec![0.0; 2],
            vec![1; 2],
            vec![0.0; 2]
        )
        .is_err());
        assert!(LagCurve::new(
            CurveRole::Response,
            vec![0, 1],
            vec![0.0; 2],
            vec![1; 2],
            vec![0.0; 2]
        )
        .is_err());
        assert!(LagCurve::new(
            CurveRole::Response,
            vec![1, 2],
            vec![0.0; 2],
            vec![0, 1],
            vec![0.0; 2]
        )
        .is_err());
        assert!(LagCurve::new(
            CurveRole::SignAutocorr,
            vec![1],
            vec![1.5],
            vec![1],
            vec![0.0]
        )
        .is_err());
        assert!(LagCurve::new(
            CurveRole::Diffusivity,
            vec![1],
            vec![-0.1],
            vec![1],
            vec![0.0]
        )
        .is_err());
    }

    #[test]
    fn dense_requires_contiguous_lags() {
        let c = LagCurve::new(
            CurveRole::Response,
            vec![1, 2, 4],
            vec![0.0; 3],
            vec![1; 3],
            vec![0.0; 3],
        )
        .unwrap();
        assert!(c.dense(2).is_ok());
        assert!(c.dense(3).is_err());
    }

    #[test]
    fn log_spacing_keeps_endpoints() {
        let c = curve(CurveRole::Response, |l| l, 512);
        let s = c.log_spaced(8, 512, 20);
        assert_eq!(s.lags.first(), Some(&8));
        assert_eq!(s.lags.last(), Some(&512));
        assert!(s.lags.windows(2).all(|w| w[1] > w[0]));
    }
}
