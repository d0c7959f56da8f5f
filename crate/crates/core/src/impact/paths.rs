use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{causal_convolution, rng, Stream};
use crate::tape::{pow_psi, TradeTape};

use super::{ArPredictor, Kernel};

const MODULE: &str = "impact_engine";

/// Minimum number of leading steps dropped from statistics after a path is built.
pub const MIN_BURN_IN: usize = 4096;

/// Parameters shared by every impact model.
///
/// `lambda` carries the unit price · volume^(-ψ); volumes enter as `v^ψ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactConfig {
    pub lambda: f64,
    pub psi: f64,
    pub kernel: Kernel,
    pub noise_sigma: f64,
    pub p0: f64,
}

impl ImpactConfig {
    /// Linear permanent impact (`ψ = 1`, `G ≡ 1`) without noise.
    pub fn kyle(lambda: f64) -> Self {
        Self {
            lambda,
            psi: 1.0,
            kernel: Kernel::permanent(1.0),
            noise_sigma: 0.0,
            p0: 0.0,
        }
    }

    pub fn with_kernel(mut self, kernel: Kernel) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn with_psi(mut self, psi: f64) -> Self {
        self.psi = psi;
        self
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn with_p0(mut self, p0: f64) -> Self {
        self.p0 = p0;
        self
    }

    /// `λ = 0` is accepted: it is the noise-only null model.
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::param(
                MODULE,
                format!("lambda = {} must be >= 0", self.lambda),
            ));
        }
        if !(self.psi > 0.0 && self.psi <= 1.0) {
            return Err(Error::param(
                MODULE,
                format!("psi = {} outside (0, 1]", self.psi),
            ));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::param(
                MODULE,
                format!("noise_sigma = {} must be >= 0", self.noise_sigma),
            ));
        }
        if !self.p0.is_finite() {
            return Err(Error::param(MODULE, "p0 must be finite"));
        }
        self.kernel.validate()
    }

    /// Steps to discard before measuring: `max(4096, 2 · horizon)`.
    pub fn burn_in(&self) -> usize {
        let horizon = self.kernel.horizon().unwrap_or(0);
        MIN_BURN_IN.max(2 * horizon)
    }
}

fn check_tape(tape: &TradeTape) -> Result<()> {
    if tape.is_empty() {
        return Err(Error::input(MODULE, "tape is empty"));
    }
    Ok(())
}

/// Builds `p_0 = p0`, `p_{n+1} = p_n + λ·dx_n + η_n` with Gaussian `η_n`.
/// All models draw noise from the same stream, so equal seeds give equal
/// noise, and the one-step recursion holds exactly in floating point.
fn assemble(cfg: &ImpactConfig, dx: &[f64], seed: u64) -> Vec<f64> {
    let mut out = Vec::with_capacity(dx.len() + 1);
    let mut p = cfg.p0;
    out.push(p);
    if cfg.noise_sigma == 0.0 {
        for d in dx {
            p += cfg.lambda * d;
            out.push(p);
        }
        return out;
    }
    let mut rng = rng(seed, Stream::Noise);
    for d in dx {
        let z: f64 = StandardNormal.sample(&mut rng);
        p += cfg.lambda * d + cfg.noise_sigma * z;
        out.push(p);
    }
    out
}

/// Running sums `S_n = Σ_{m<n} x_m`, `n = 0..=N`.
fn running_sum(x: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len() + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for v in x {
        acc += v;
        out.push(acc);
    }
    out
}

/// Permanent impact `p_n = p0 + λ Σ_{m<n} ε_m v_m^ψ + Σ_{m<n} η_m`.
///
/// The kernel in `cfg` is ignored: this is the `G ≡ 1` model.
pub fn kyle_path(tape: &TradeTape, cfg: &ImpactConfig, seed: u64) -> Result<Vec<f64>> {
    check_tape(tape)?;
    cfg.validate()?;
    Ok(assemble(cfg, &tape.signed_flow(cfg.psi), seed))
}

/// Transient impact `p_n = p0 + λ Σ_{m=0}^{n-1} G(n-m) ε_m v_m^ψ + Σ_{m<n} η_m`.
///
/// The history before the tape is empty; callers drop
/// [`ImpactConfig::burn_in`] leading steps before measuring.
pub fn propagator_path(tape: &TradeTape, cfg: &ImpactConfig, seed: u64) -> Result<Vec<f64>> {
    check_tape(tape)?;
    cfg.validate()?;
    let n = tape.len();
    if cfg.kernel.has_negative_values(n) {
        return Err(Error::param(MODULE, "kernel has negative values"));
    }
    let x = tape.signed_flow(cfg.psi);
    let dx = match cfg.kernel.constant_value() {
        Some(c) => x.iter().map(|v| c * v).collect(),
        None => transient_impact(&x, &cfg.kernel)
            .windows(2)
            .map(|w| w[1] - w[0])
            .collect::<Vec<f64>>(),
    };
    Ok(assemble(cfg, &dx, seed))
}

/// `Σ_{m<n} G(n-m) x_m` for `n = 0..=N`.
fn transient_impact(x: &[f64], kernel: &Kernel) -> Vec<f64> {
    let n = x.len();
    let cum = running_sum(x);
    let plateau = kernel.plateau();
    let mut out: Vec<f64> = cum.iter().map(|s| plateau * s).collect();
    match kernel.horizon() {
        // G(ℓ) - plateau vanishes beyond the horizon: short direct sum.
        Some(h) if (h as u128) * (n as u128) <= 1 << 28 => {
            let excess: Vec<f64> = (1..h).map(|l| kernel.value(l) - plateau).collect();
            for (k, slot) in out.iter_mut().enumerate().skip(1) {
                let mut acc = 0.0;
                for (l, e) in excess.iter().enumerate().take(k) {
                    acc += e * x[k - 1 - l];
                }
                *slot += acc;
            }
        }
        _ => {
            let excess: Vec<f64> = (1..=n).map(|l| kernel.value(l) - plateau).collect();
            let conv = causal_convolution(x, &excess);
            for (slot, c) in out.iter_mut().skip(1).zip(conv) {
                *slot += c;
            }
        }
    }
    out
}

/// Surprise model `Δp_n = λ v_n^ψ (ε_n - Σ_j a_j ε_{n-j}) + η_n`, with signs
/// before the tape taken as zero.
pub fn surprise_path(
    tape: &TradeTape,
    predictor: &ArPredictor,
    cfg: &ImpactConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    check_tape(tape)?;
    cfg.validate()?;
    let signs = tape.signs.as_slice();
    let preds = predictor.predictions(signs);
    let surprise: Vec<f64> = tape
        .volumes
        .as_slice()
        .iter()
        .zip(signs)
        .zip(&preds)
        .map(|((&v, &s), &e)| {
            let w = pow_psi(v, cfg.psi);
            s as f64 * w - w * e
        })
        .collect();
    Ok(assemble(cfg, &surprise, seed))
}

/// Which price-formation rule to apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ImpactModel {
    Kyle,
    Propagator,
    Surprise { predictor: ArPredictor },
}

/// Builds the price path for `tape` under `model` and attaches it.
pub fn simulate_prices(
    tape: &TradeTape,
    model: &ImpactModel,
    cfg: &ImpactConfig,
    seed: u64,
) -> Result<TradeTape> {
    let prices = match model {
        ImpactModel::Kyle => kyle_path(tape, cfg, seed)?,
        ImpactModel::Propagator => propagator_path(tape, cfg, seed)?,
        ImpactModel::Surprise { predictor } => surprise_path(tape, predictor, cfg, seed)?,
    };
    tape.clone().with_prices(prices)
}

/// First differences of a price path.
pub fn returns(prices: &[f64]) -> Vec<f64> {
    prices.windows(2).map(|w| w[1] - w[0]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::impact::kernel_from_predictor;
    use crate::orderflow::{gen_iid_signs, gen_markov_signs};
    use crate::tape::{GeneratorTag, SignSeries, VolumeSeries};

    fn tape(signs: Vec<i8>) -> TradeTape {
        let n = signs.len();
        TradeTape::new(
            SignSeries::new(signs, 0, GeneratorTag::External).unwrap(),
            VolumeSeries::constant(n, 1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn kyle_direct_sum() {
        let cfg = ImpactConfig::kyle(0.1).with_p0(100.0);
        let p = kyle_path(&tape(vec![1, -1, 1]), &cfg, 0).unwrap();
        let want = [100.0, 100.1, 100.0, 100.1];
        for (a, b) in p.iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{p:?}");
        }
    }

    #[test]
    fn null_model_is_flat() {
        let cfg = ImpactConfig::kyle(0.0).with_p0(42.0);
        let t = tape(gen_iid_signs(100, 0.5, 1).unwrap().as_slice().to_vec());
        assert!(kyle_path(&t, &cfg, 0).unwrap().iter().all(|&p| p == 42.0));
    }

    #[test]
    fn empty_tape_rejected() {
        let t = tape(vec![]);
        assert!(kyle_path(&t, &ImpactConfig::kyle(1.0), 0).is_err());
    }

    #[test]
    fn two_term_convolution() {
        let k = Kernel::tabulated(vec![1.0, 0.5, 0.5]).unwrap();
        let cfg = ImpactConfig::kyle(1.0).with_kernel(k);
        let p = propagator_path(&tape(vec![1, 1]), &cfg, 0).unwrap();
        assert_eq!(p, vec![0.0, 1.0, 1.5]);
    }

    #[test]
    fn negative_kernel_rejected() {
        let k = Kernel::tabulated(vec![1.0, -0.5]).unwrap();
        let cfg = ImpactConfig::kyle(1.0).with_kernel(k);
        assert!(propagator_path(&tape(vec![1, 1]), &cfg, 0).is_err());
    }

    #[test]
    fn permanent_limit_matches_kyle_bit_for_bit() {
        let t = tape(gen_iid_signs(5000, 0.5, 3).unwrap().as_slice().to_vec());
        for kernel in [
            Kernel::permanent(1.0),
            Kernel::power_law(0.0, 1.0, 0.0).unwrap(),
        ] {
            let cfg = ImpactConfig::kyle(0.3).with_noise(0.7).with_kernel(kernel);
            assert_eq!(
                propagator_path(&t, &cfg, 11).unwrap(),
                kyle_path(&t, &cfg, 11).unwrap()
            );
        }
    }

    #[test]
    fn zero_predictor_matches_kyle_bit_for_bit() {
        let t = tape(gen_iid_signs(2000, 0.5, 8).unwrap().as_slice().to_vec());
        let cfg = ImpactConfig::kyle(0.2).with_noise(1.0);
        assert_eq!(
            surprise_path(&t, &ArPredictor::zero(), &cfg, 5).unwrap(),
            kyle_path(&t, &cfg, 5).unwrap()
        );
    }

    #[test]
    fn surprise_equals_propagator_with_identified_kernel() {
        let t = tape(gen_markov_signs(3000, 0.5, 2).unwrap().as_slice().to_vec());
        let pred = ArPredictor::new(vec![0.4, 0.1, -0.05]).unwrap();
        let cfg = ImpactConfig::kyle(0.5);
        let a = returns(&surprise_path(&t, &pred, &cfg, 0).unwrap());
        let k = kernel_from_predictor(&pred, 10).unwrap();
        let b = returns(&propagator_path(&t, &cfg.clone().with_kernel(k), 0).unwrap());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-9 * x.abs().max(y.abs()));
        }
    }

    #[test]
    fn fft_route_matches_direct_sum() {
        // power-law kernel on a tape long enough for the FFT branch
        let n = 4000;
        let signs = gen_iid_signs(n, 0.5, 9).unwrap().as_slice().to_vec();
        let t = tape(signs.clone());
        let k = Kernel::power_law(0.3, 1.0, 0.2).unwrap();
        let cfg = ImpactConfig::kyle(1.0).with_kernel(k.clone());
        let p = propagator_path(&t, &cfg, 0).unwrap();
        for &idx in &[1usize, 10, 1234, n] {
            let direct: f64 = (0..idx).map(|m| k.value(idx - m) * signs[m] as f64).sum();
            assert!(
                (p[idx] - direct).abs() < 1e-8,
                "{idx}: {} vs {direct}",
                p[idx]
            );
        }
    }

    #[test]
    fn invalid_config() {
        let t = tape(vec![1]);
        assert!(kyle_path(&t, &ImpactConfig::kyle(1.0).with_psi(0.0), 0).is_err());
        assert!(kyle_path(&t, &ImpactConfig::kyle(1.0).with_psi(1.5), 0).is_err());
        assert!(kyle_path(&t, &ImpactConfig::kyle(-1.0), 0).is_err());
        assert!(kyle_path(&t, &ImpactConfig::kyle(1.0).with_noise(-1.0), 0).is_err());
    }
}
