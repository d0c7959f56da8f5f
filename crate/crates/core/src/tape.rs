//! Trade tapes: aligned sign, volume and (optionally) price sequences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which generator produced a sign series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorTag {
    Iid,
    ClippedFractional,
    Metaorder,
    Markov,
    /// Read from a file without a metadata sidecar.
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignSeries {
    signs: Vec<i8>,
    pub seed: u64,
    pub generator: GeneratorTag,
}

impl SignSeries {
    /// Builds a series, rejecting any element other than -1 or +1.
    pub fn new(signs: Vec<i8>, seed: u64, generator: GeneratorTag) -> Result<Self> {
        if let Some(pos) = signs.iter().position(|&s| s != 1 && s != -1) {
            return Err(Error::input(
                "orderflow",
                format!("sign at index {pos} is {}, expected -1 or +1", signs[pos]),
            ));
        }
        Ok(Self {
            signs,
            seed,
            generator,
        })
    }

    pub(crate) fn from_trusted(signs: Vec<i8>, seed: u64, generator: GeneratorTag) -> Self {
        debug_assert!(signs.iter().all(|&s| s == 1 || s == -1));
        Self {
            signs,
            seed,
            generator,
        }
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.signs
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.signs.iter().map(|&s| s as f64).collect()
    }

    pub fn mean(&self) -> f64 {
        if self.signs.is_empty() {
            return 0.0;
        }
        self.signs.iter().map(|&s| s as f64).sum::<f64>() / self.signs.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VolumeSpec {
    Constant { value: f64 },
    Lognormal { mu: f64, sigma: f64 },
    Pareto { x_min: f64, tail: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeSeries {
    volumes: Vec<f64>,
    pub spec: Option<VolumeSpec>,
}

impl VolumeSeries {
    pub fn new(volumes: Vec<f64>, spec: Option<VolumeSpec>) -> Result<Self> {
        if let Some(pos) = volumes.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::input(
                "orderflow",
                format!(
                    "volume at index {pos} is {}, expected finite and > 0",
                    volumes[pos]
                ),
            ));
        }
        Ok(Self { volumes, spec })
    }

    pub fn constant(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n], Some(VolumeSpec::Constant { value }))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.volumes
    }

    pub fn len(&self) -> usize {
        self.volumes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.volumes.is_empty()
    }

    pub fn mean(&self) -> f64 {
        if self.volumes.is_empty() {
            return 0.0;
        }
        self.volumes.iter().sum::<f64>() / self.volumes.len() as f64
    }
}

/// Signs and volumes of N elementary intervals, plus an optional price path
/// `p_0 ..= p_N` aligned so that trade `n` sits between `p_n` and `p_{n+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeTape {
    pub signs: SignSeries,
    pub volumes: VolumeSeries,
    prices: Option<Vec<f64>>,
    /// Free-form label for the elementary time scale.
    pub dt_tag: String,
}

impl TradeTape {
    pub fn new(signs: SignSeries, volumes: VolumeSeries) -> Result<Self> {
        if signs.len() != volumes.len() {
            return Err(Error::input(
                "tape",
                format!("{} signs but {} volumes", signs.len(), volumes.len()),
            ));
        }
        Ok(Self {
            signs,
            volumes,
            prices: None,
            dt_tag: "trade".to_string(),
        })
    }

    pub fn with_prices(mut self, prices: Vec<f64>) -> Result<Self> {
        self.set_prices(prices)?;
        Ok(self)
    }

    pub fn set_prices(&mut self, prices: Vec<f64>) -> Result<()> {
        if prices.len() != self.len() + 1 {
            return Err(Error::input(
                "tape",
                format!(
                    "price path has {} entries, expected N+1 = {}",
                    prices.len(),
                    self.len() + 1
                ),
            ));
        }
        if let Some(pos) = prices.iter().position(|p| !p.is_finite()) {
            return Err(Error::input("tape", format!("price {pos} is not finite")));
        }
        self.prices = Some(prices);
        Ok(())
    }

    pub fn with_dt_tag(mut self, tag: impl Into<String>) -> Self {
        self.dt_tag = tag.into();
        self
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    pub fn prices(&self) -> Option<&[f64]> {
        self.prices.as_deref()
    }

    /// Prices, or an input error naming the estimator that needed them.
    pub fn require_prices(&self, who: &'static str) -> Result<&[f64]> {
        self.prices.as_deref().ok_or_else(|| {
            Error::input(
                who,
                "tape has no price column; this estimator needs a priced tape",
            )
        })
    }

    /// Drops the first `k` intervals (and prices `p_0..p_{k-1}`).
    pub fn skip(&self, k: usize) -> Result<Self> {
        if k >= self.len() {
            return Err(Error::input(
                "tape",
                format!("cannot skip {k} of {} intervals", self.len()),
            ));
        }
        let signs = SignSeries::from_trusted(
            self.signs.as_slice()[k..].to_vec(),
            self.signs.seed,
            self.signs.generator,
        );
        let volumes = VolumeSeries {
            volumes: self.volumes.as_slice()[k..].to_vec(),
            spec: self.volumes.spec,
        };
        Ok(Self {
            signs,
            volumes,
            prices: self.prices.as_ref().map(|p| p[k..].to_vec()),
            dt_tag: self.dt_tag.clone(),
        })
    }

    /// `ε_n · v_n^ψ` for every interval.
    pub fn signed_flow(&self, psi: f64) -> Vec<f64> {
        self.signs
            .as_slice()
            .iter()
            .zip(self.volumes.as_slice())
            .map(|(&s, &v)| s as f64 * pow_psi(v, psi))
            .collect()
    }
}

/// `v^ψ`, exact for the common ψ = 1 case.
pub(crate) fn pow_psi(v: f64, psi: f64) -> f64 {
    if psi == 1.0 {
        v
    } else {
        v.powf(psi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tape(n: usize) -> TradeTape {
        let s = SignSeries::new(vec![1; n], 0, GeneratorTag::Iid).unwrap();
        TradeTape::new(s, VolumeSeries::constant(n, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn rejects_zero_sign() {
        assert!(SignSeries::new(vec![1, 0, -1], 0, GeneratorTag::Iid).is_err());
    }

    #[test]
    fn rejects_nonpositive_volume() {
        assert!(VolumeSeries::new(vec![1.0, 0.0], None).is_err());
        assert!(VolumeSeries::new(vec![1.0, f64::NAN], None).is_err());
    }

    #[test]
    fn price_path_length_is_n_plus_one() {
        assert!(tape(3).with_prices(vec![0.0; 3]).is_err());
        assert!(tape(3).with_prices(vec![0.0; 4]).is_ok());
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let s = SignSeries::new(vec![1, -1], 0, GeneratorTag::Iid).unwrap();
        assert!(TradeTape::new(s, VolumeSeries::constant(3, 1.0).unwrap()).is_err());
    }

    #[test]
    fn skip_keeps_alignment() {
        let t = tape(4).with_prices(vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        let s = t.skip(1).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.prices().unwrap(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn missing_prices_error_names_caller() {
        let err = tape(2).require_prices("response").unwrap_err();
        assert!(err.to_string().contains("response"));
    }
}
