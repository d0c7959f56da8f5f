//! Synthetic trade-sign and volume series.
//!
//! Three sign generators cover the regimes used downstream:
//!
//! * i.i.d. signs with a buy probability (no memory),
//! * clipped fractional Gaussian signs: the sign of a stationary Gaussian
//!   series whose autocorrelation decays as `ℓ^(-γ)`, synthesized exactly by
//!   circulant embedding,
//! * metaorder splitting: Pareto-distributed runs of equal signs, which give a
//!   sign autocorrelation tail `ℓ^(-(α-1))`.
//!
//! A Markov sign chain gives the AR(1) case `C(ℓ) = ρ^ℓ` used to exercise the
//! surprise model with an exactly known predictor.
//!
//! Every generator is a pure function of its parameters and seed.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, LogNormal, Pareto, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{lagged_product_sums, rng, Stream};
use crate::tape::{GeneratorTag, SignSeries, VolumeSeries, VolumeSpec};

const MODULE: &str = "orderflow";

fn check_len(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::param(MODULE, "series length must be at least 1"));
    }
    Ok(())
}

/// I.i.d. signs with `P(+1) = p_buy`.
pub fn gen_iid_signs(n: usize, p_buy: f64, seed: u64) -> Result<SignSeries> {
    check_len(n)?;
    if !(0.0..=1.0).contains(&p_buy) {
        return Err(Error::param(
            MODULE,
            format!("p_buy = {p_buy} is not a probability"),
        ));
    }
    let mut rng = rng(seed, Stream::Signs);
    let signs = (0..n)
        .map(|_| if rng.random_bool(p_buy) { 1 } else { -1 })
        .collect();
    Ok(SignSeries::from_trusted(signs, seed, GeneratorTag::Iid))
}

/// Two-state sign chain that repeats the previous sign with probability
/// `(1 + rho) / 2`. Its autocorrelation is `rho^ℓ` and
/// `E[ε_n | past] = rho · ε_{n-1}` exactly.
pub fn gen_markov_signs(n: usize, rho: f64, seed: u64) -> Result<SignSeries> {
    check_len(n)?;
    if !(rho > -1.0 && rho < 1.0) {
        return Err(Error::param(MODULE, format!("rho = {rho} outside (-1, 1)")));
    }
    let p_repeat = 0.5 * (1.0 + rho);
    let mut rng = rng(seed, Stream::Signs);
    let mut signs = Vec::with_capacity(n);
    let mut prev: i8 = if rng.random_bool(0.5) { 1 } else { -1 };
    signs.push(prev);
    for _ in 1..n {
        if !rng.random_bool(p_repeat) {
            prev = -prev;
        }
        signs.push(prev);
    }
    Ok(SignSeries::from_trusted(signs, seed, GeneratorTag::Markov))
}

/// Correlation of `sign(X)` and `sign(Y)` for jointly Gaussian `X, Y` with
/// correlation `rho`.
pub fn clipped_sign_correlation(rho: f64) -> f64 {
    2.0 / PI * rho.clamp(-1.0, 1.0).asin()
}

/// Autocorrelation shape of the Gaussian latent series behind the clipped
/// fractional generator. Both shapes have a `ℓ^(-γ)` tail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentShape {
    /// `ρ(ℓ) = (1 + ℓ)^(-γ)`.
    #[default]
    ShiftedPowerLaw,
    /// Chosen so that the sign autocorrelation is exactly that of a linear
    /// process whose innovation filter is the propagator `G(ℓ) = ℓ^(-β)` with
    /// `β = (1 - γ)/2`. Prices built with that propagator are then exactly
    /// uncorrelated (diffusive) at every lag, not only asymptotically.
    PropagatorMatched,
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::param(
            MODULE,
            format!("gamma = {gamma} outside the long-memory range (0, 1)"),
        ));
    }
    Ok(())
}

/// Target autocorrelation of the signs for lags `0..=max_lag`.
pub fn target_sign_autocorrelation(
    gamma: f64,
    shape: LatentShape,
    max_lag: usize,
) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    Ok(match shape {
        LatentShape::ShiftedPowerLaw => (0..=max_lag)
            .map(|l| clipped_sign_correlation((1.0 + l as f64).powf(-gamma)))
            .collect(),
        LatentShape::PropagatorMatched => {
            matched_sign_autocorrelation(0.5 * (1.0 - gamma), max_lag)
        }
    })
}

/// Latent Gaussian autocorrelation for lags `0..=max_lag`.
pub fn latent_autocorrelation(gamma: f64, shape: LatentShape, max_lag: usize) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    Ok(match shape {
        LatentShape::ShiftedPowerLaw => (0..=max_lag)
            .map(|l| (1.0 + l as f64).powf(-gamma))
            .collect(),
        LatentShape::PropagatorMatched => {
            matched_sign_autocorrelation(0.5 * (1.0 - gamma), max_lag)
                .into_iter()
                .map(|c| (0.5 * PI * c).sin())
                .collect()
        }
    })
}

/// Autocorrelation of `x = H^{-1} ξ` where `H` has coefficients
/// `h_0 = 1, h_k = (k+1)^(-β) - k^(-β)` (the return filter of the kernel
/// `ℓ^(-β)`).
fn matched_sign_autocorrelation(beta: f64, max_lag: usize) -> Vec<f64> {
    let k = max_lag.max(1024).next_power_of_two();
    let psi_len = 2 * k;
    let len = 2 * psi_len;
    let mut h: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); len];
    h[0] = Complex64::new(1.0, 0.0);
    for (i, slot) in h.iter_mut().enumerate().take(psi_len).skip(1) {
        let i = i as f64;
        *slot = Complex64::new((i + 1.0).powf(-beta) - i.powf(-beta), 0.0);
    }
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(len).process(&mut h);
    for z in h.iter_mut() {
        *z = z.inv();
    }
    planner.plan_fft_inverse(len).process(&mut h);
    let scale = 1.0 / len as f64;
    let psi: Vec<f64> = h[..psi_len].iter().map(|z| z.re * scale).collect();
    let sums = lagged_product_sums(&psi, max_lag);
    let c0 = sums[0];
    sums.into_iter().map(|s| s / c0).collect()
}

/// Draws a stationary Gaussian series with autocorrelation `rho` (given for
/// lags `0..=n-1` at least) by circulant embedding.
pub fn circulant_gaussian(rho: &[f64], n: usize, seed: u64) -> Result<Vec<f64>> {
    check_len(n)?;
    let half = n.next_power_of_two().max(2);
    if rho.len() < half + 1 {
        return Err(Error::param(
            MODULE,
            format!("autocorrelation needs {} lags, got {}", half + 1, rho.len()),
        ));
    }
    let len = 2 * half;
    let mut c: Vec<Complex64> = (0..len)
        .map(|i| {
            let lag = if i <= half { i } else { len - i };
            Complex64::new(rho[lag], 0.0)
        })
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(len);
    fft.process(&mut c);
    let max_eig = c.iter().map(|z| z.re).fold(0.0, f64::max);
    let min_eig = c.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    if min_eig < -1e-8 * max_eig.max(1.0) {
        return Err(Error::Numeric {
            module: MODULE,
            step: 0,
            message: format!(
                "circulant embedding is not nonnegative definite (min eigenvalue {min_eig:.3e})"
            ),
        });
    }
    let mut rng = rng(seed, Stream::Latent);
    let scale = 1.0 / len as f64;
    let mut w: Vec<Complex64> = c
        .iter()
        .map(|z| {
            let s = (z.re.max(0.0) * scale).sqrt();
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(s * a, s * b)
        })
        .collect();
    fft.process(&mut w);
    Ok(w[..n].iter().map(|z| z.re).collect())
}

/// Signs of a fractional Gaussian latent series with tail `ℓ^(-γ)`, using the
/// default latent shape `(1+ℓ)^(-γ)`.
pub fn gen_clipped_fractional_signs(n: usize, gamma: f64, seed: u64) -> Result<SignSeries> {
    gen_clipped_fractional_signs_with(n, gamma, LatentShape::ShiftedPowerLaw, seed)
}

pub fn gen_clipped_fractional_signs_with(
    n: usize,
    gamma: f64,
    shape: LatentShape,
    seed: u64,
) -> Result<SignSeries> {
    check_len(n)?;
    check_gamma(gamma)?;
    let half = n.next_power_of_two().max(2);
    let rho = latent_autocorrelation(gamma, shape, half)?;
    let latent = circulant_gaussian(&rho, n, seed)?;
    let signs = latent
        .into_iter()
        .map(|x| if x >= 0.0 { 1 } else { -1 })
        .collect();
    Ok(SignSeries::from_trusted(
        signs,
        seed,
        GeneratorTag::ClippedFractional,
    ))
}

/// How metaorder lengths are drawn from the Pareto law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthSampling {
    /// Independent inverse-CDF draws.
    Iid,
    /// Inverse-CDF draws from shuffled strata of the unit interval. Each length
    /// keeps the exact Pareto marginal; the empirical length histogram is
    /// pinned much closer to the law, which tames the infinite-variance
    /// fluctuations of autocorrelation estimates for `α < 2`.
    #[default]
    Stratified,
}

/// Metaorder length law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetaorderLengths {
    /// `P(L > ℓ) = ℓ^(-alpha)` for integer `ℓ ≥ 1`.
    Pareto {
        alpha: f64,
        sampling: LengthSampling,
    },
    /// Every metaorder has exactly this length (test hook).
    Fixed { len: usize },
}

/// Single-queue metaorder splitting with Pareto lengths, tail exponent `alpha`.
pub fn gen_metaorder_signs(n: usize, alpha: f64, seed: u64) -> Result<SignSeries> {
    gen_metaorder_signs_with(
        n,
        MetaorderLengths::Pareto {
            alpha,
            sampling: LengthSampling::default(),
        },
        seed,
    )
}

pub fn gen_metaorder_signs_with(
    n: usize,
    lengths: MetaorderLengths,
    seed: u64,
) -> Result<SignSeries> {
    check_len(n)?;
    let mut rng = rng(seed, Stream::Signs);
    let mut signs: Vec<i8> = Vec::with_capacity(n);
    let push_run = |len: usize, rng: &mut rand_chacha::ChaCha8Rng, signs: &mut Vec<i8>| {
        let dir: i8 = if rng.random_bool(0.5) { 1 } else { -1 };
        let len = len.min(n - signs.len());
        signs.extend(std::iter::repeat_n(dir, len));
    };
    match lengths {
        MetaorderLengths::Fixed { len } => {
            if len == 0 {
                return Err(Error::param(MODULE, "metaorder length must be at least 1"));
            }
            while signs.len() < n {
                push_run(len, &mut rng, &mut signs);
            }
        }
        MetaorderLengths::Pareto { alpha, sampling } => {
            if !(alpha > 1.0 && alpha < 2.0) {
                return Err(Error::param(
                    MODULE,
                    format!("alpha = {alpha} outside (1, 2): need finite mean and long memory"),
                ));
            }
            let inv_alpha = 1.0 / alpha;
            let length_of = |u: f64| -> usize {
                // u in (0, 1]
                let l = u.powf(-inv_alpha).ceil();
                if l >= n as f64 {
                    n
                } else {
                    l as usize
                }
            };
            let mean_len = 1.0 + zeta(alpha);
            match sampling {
                LengthSampling::Iid => {
                    while signs.len() < n {
                        let u = 1.0 - rng.random::<f64>();
                        push_run(length_of(u), &mut rng, &mut signs);
                    }
                }
                LengthSampling::Stratified => {
                    while signs.len() < n {
                        let remaining = (n - signs.len()) as f64;
                        let k = ((remaining / mean_len).ceil() as usize).max(16);
                        let mut strata: Vec<usize> = (0..k).collect();
                        strata.shuffle(&mut rng);
                        for i in strata {
                            if signs.len() >= n {
                                break;
                            }
                            let u = (i as f64 + 1.0 - rng.random::<f64>()) / k as f64;
                            push_run(length_of(u), &mut rng, &mut signs);
                        }
                    }
                }
            }
        }
    }
    Ok(SignSeries::from_trusted(
        signs,
        seed,
        GeneratorTag::Metaorder,
    ))
}

/// Riemann zeta for `s > 1` (partial sum plus Euler–Maclaurin tail).
fn zeta(s: f64) -> f64 {
    let m = 64usize;
    let partial: f64 = (1..m).map(|k| (k as f64).powf(-s)).sum();
    let mf = m as f64;
    partial + mf.powf(1.0 - s) / (s - 1.0) + 0.5 * mf.powf(-s) + s / 12.0 * mf.powf(-s - 1.0)
}

pub fn gen_volumes(n: usize, spec: VolumeSpec, seed: u64) -> Result<VolumeSeries> {
    check_len(n)?;
    let mut rng = rng(seed, Stream::Volumes);
    let volumes = match spec {
        VolumeSpec::Constant { value } => {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::param(
                    MODULE,
                    format!("constant volume {value} must be > 0"),
                ));
            }
            vec![value; n]
        }
        VolumeSpec::Lognormal { mu, sigma } => {
            if !mu.is_finite() || !(sigma.is_finite() && sigma >= 0.0) {
                return Err(Error::param(
                    MODULE,
                    format!("lognormal(mu={mu}, sigma={sigma}) needs finite mu and sigma >= 0"),
                ));
            }
            let d = LogNormal::new(mu, sigma).map_err(|e| Error::param(MODULE, e.to_string()))?;
            (0..n).map(|_| d.sample(&mut rng)).collect()
        }
        VolumeSpec::Pareto { x_min, tail } => {
            if !(x_min.is_finite() && x_min > 0.0) {
                return Err(Error::param(
                    MODULE,
                    format!("pareto x_min = {x_min} must be > 0"),
                ));
            }
            if !(tail.is_finite() && tail > 1.0) {
                return Err(Error::param(
                    MODULE,
                    format!("pareto tail = {tail} must exceed 1 for a finite mean"),
                ));
            }
            let d = Pareto::new(x_min, tail).map_err(|e| Error::param(MODULE, e.to_string()))?;
            (0..n).map(|_| d.sample(&mut rng)).collect()
        }
    };
    VolumeSeries::new(volumes, Some(spec))
}

/// Outcome of the sign-balance check `|mean(ε)| ≤ 4/√N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Balance {
    Ok,
    /// Between 3/√N and 4/√N.
    Flagged,
    Violated,
}

/// The bound assumes independent signs; long-memory series have a much wider
/// sampling distribution of the mean (standard deviation ∝ `N^(-γ/2)`).
pub fn sign_balance(signs: &SignSeries) -> Balance {
    let bound = 1.0 / (signs.len() as f64).sqrt();
    let m = signs.mean().abs();
    if m <= 3.0 * bound {
        Balance::Ok
    } else if m <= 4.0 * bound {
        Balance::Flagged
    } else {
        Balance::Violated
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_buy_probability() {
        let s = gen_iid_signs(4, 1.0, 99).unwrap();
        assert_eq!(s.as_slice(), &[1, 1, 1, 1]);
        let s = gen_iid_signs(3, 0.0, 99).unwrap();
        assert_eq!(s.as_slice(), &[-1, -1, -1]);
    }

    #[test]
    fn invalid_parameters() {
        assert!(gen_iid_signs(4, 1.5, 0).is_err());
        assert!(gen_iid_signs(0, 0.5, 0).is_err());
        assert!(gen_clipped_fractional_signs(10, 1.0, 0).is_err());
        assert!(gen_clipped_fractional_signs(10, 0.0, 0).is_err());
        assert!(gen_metaorder_signs(10, 1.0, 0).is_err());
        assert!(gen_metaorder_signs(10, 2.0, 0).is_err());
        assert!(gen_markov_signs(10, 1.0, 0).is_err());
        assert!(gen_volumes(3, VolumeSpec::Constant { value: 0.0 }, 0).is_err());
        assert!(gen_volumes(
            3,
            VolumeSpec::Pareto {
                x_min: 1.0,
                tail: 1.0
            },
            0
        )
        .is_err());
        assert!(gen_volumes(
            3,
            VolumeSpec::Pareto {
                x_min: -1.0,
                tail: 3.0
            },
            0
        )
        .is_err());
    }

    #[test]
    fn clipping_map_values() {
        assert_eq!(clipped_sign_correlation(1.0), 1.0);
        assert!((clipped_sign_correlation(0.5) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(clipped_sign_correlation(0.0), 0.0);
    }

    #[test]
    fn constant_volumes() {
        let v = gen_volumes(3, VolumeSpec::Constant { value: 2.0 }, 5).unwrap();
        assert_eq!(v.as_slice(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn unit_metaorders_are_iid_like() {
        let s = gen_metaorder_signs_with(20_000, MetaorderLengths::Fixed { len: 1 }, 4).unwrap();
        let e = s.to_f64();
        let c1: f64 = e.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (e.len() - 1) as f64;
        assert!(c1.abs() < 3.0 / (e.len() as f64).sqrt() * 1.5);
    }

    #[test]
    fn single_metaorder_is_constant() {
        let s = gen_metaorder_signs_with(500, MetaorderLengths::Fixed { len: 500 }, 4).unwrap();
        assert!(s.as_slice().iter().all(|&x| x == s.as_slice()[0]));
    }

    #[test]
    fn lengths_are_exact() {
        for n in [1, 2, 3, 17, 1000] {
            assert_eq!(gen_clipped_fractional_signs(n, 0.5, 1).unwrap().len(), n);
            assert_eq!(gen_metaorder_signs(n, 1.5, 1).unwrap().len(), n);
            assert_eq!(gen_markov_signs(n, 0.5, 1).unwrap().len(), n);
        }
    }

    #[test]
    fn zeta_reference_values() {
        // ζ(2) = π²/6, ζ(1.5) = 2.6123753486854883
        assert!((zeta(2.0) - PI * PI / 6.0).abs() < 1e-9);
        assert!((zeta(1.5) - 2.612_375_348_685_488).abs() < 1e-9);
    }

    #[test]
    fn matched_latent_is_a_valid_correlation() {
        let rho = latent_autocorrelation(0.5, LatentShape::PropagatorMatched, 4096).unwrap();
        assert_eq!(rho[0], 1.0);
        assert!(rho[1..].iter().all(|&r| r > 0.0 && r < 1.0));
        // decreasing
        assert!(rho.windows(2).all(|w| w[1] <= w[0]));
    }
}
