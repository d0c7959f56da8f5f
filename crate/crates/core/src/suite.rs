//! The acceptance experiments. Each returns its raw measurements; the
//! `verdict` methods apply the pass bands used by `report`.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    conditional_response, diffusivity, fit_barra, fit_power_law, invert_response, levinson_durbin,
    log_volume_bins, master_curve_rescale, predict_response, predict_response_centered, response,
    rho, series_autocorrelation, sign_autocorr, sign_variance, ConditionalResponse, CurveRole,
    InversionOptions, KernelSample, LagCurve, StockCurve, WindowScheme,
};
use crate::experiment::{simulate, ExperimentConfig};
use crate::impact::{
    kernel_from_predictor, propagator_path, quote_path, returns, surprise_path, ArPredictor,
    ImpactConfig, Kernel,
};
use crate::io;
use crate::manipulation::{search_round_trips, SearchParams, DEFAULT_BUDGET};
use crate::orderflow::{
    gen_clipped_fractional_signs, gen_clipped_fractional_signs_with, gen_iid_signs,
    gen_markov_signs, gen_metaorder_signs, gen_volumes, target_sign_autocorrelation, LatentShape,
};
use crate::tape::{TradeTape, VolumeSeries, VolumeSpec};

pub const CRITERIA: [(u32, &str); 13] = [
    (1, "Kyle flatness"),
    (2, "rho unity and noise dilution"),
    (3, "long-memory generation"),
    (4, "martingale condition"),
    (5, "response decomposition"),
    (6, "kernel inversion"),
    (7, "surprise/propagator identification"),
    (8, "sign-confirmation asymmetry"),
    (9, "concavity recovery"),
    (10, "spread duality"),
    (11, "manipulation frontier"),
    (12, "master-curve collapse"),
    (13, "determinism and round-trips"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub summary: String,
    pub metrics: BTreeMap<String, f64>,
    pub seconds: f64,
}

/// Pass flag, one-line summary and named metrics.
pub type Verdict = (bool, String, BTreeMap<String, f64>);

fn metrics<const N: usize>(pairs: [(&str, f64); N]) -> BTreeMap<String, f64> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn tape_of(signs: crate::SignSeries, volumes: VolumeSeries) -> Result<TradeTape> {
    TradeTape::new(signs, volumes)
}

fn unit_tape(signs: crate::SignSeries) -> Result<TradeTape> {
    let n = signs.len();
    tape_of(signs, VolumeSeries::constant(n, 1.0)?)
}

fn gamma_hat(c: &LagCurve) -> Result<f64> {
    let sub = c.log_spaced(8, 512, 20);
    Ok(fit_power_law(&sub, 8.0, 512.0)?.exponent)
}

// 1 ------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KyleFlatness {
    pub lambda: f64,
    pub curve: LagCurve,
}

pub fn kyle_flatness(seed: u64) -> Result<KyleFlatness> {
    let lambda = 0.1;
    let tape = unit_tape(gen_iid_signs(100_000, 0.5, seed)?)?;
    let prices = crate::impact::kyle_path(&tape, &ImpactConfig::kyle(lambda), seed)?;
    let curve = response(&tape.with_prices(prices)?, 64)?;
    Ok(KyleFlatness { lambda, curve })
}

impl KyleFlatness {
    pub fn max_abs_z(&self) -> f64 {
        self.curve
            .values
            .iter()
            .zip(&self.curve.se)
            .map(|(r, s)| (r - self.lambda).abs() / s)
            .fold(0.0, f64::max)
    }

    pub fn verdict(&self) -> Verdict {
        let z = self.max_abs_z();
        (
            z <= 3.0,
            format!("max |R(l) - lambda|/SE over l in 1..64 = {z:.2} (band 3)"),
            metrics([("max_abs_z", z)]),
        )
    }
}

// 2 ------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoChecks {
    pub noiseless: f64,
    pub noisy: f64,
    pub noisy_se: f64,
    pub lambda: f64,
    pub sigma: f64,
    pub window: usize,
}

pub fn rho_checks(seed: u64) -> Result<RhoChecks> {
    let n = 1_000_000;
    let window = 16;
    let tape = unit_tape(gen_iid_signs(n, 0.5, seed)?)?;
    let clean = tape.clone().with_prices(crate::impact::kyle_path(
        &tape,
        &ImpactConfig::kyle(1.0),
        seed,
    )?)?;
    let noiseless = rho(&clean, window, 1.0, WindowScheme::NonOverlapping)?.value;
    let (lambda, sigma) = (1.0, 1.0);
    let cfg = ImpactConfig::kyle(lambda).with_noise(sigma);
    let noisy_tape = tape
        .clone()
        .with_prices(crate::impact::kyle_path(&tape, &cfg, seed)?)?;
    let noisy = rho(&noisy_tape, window, 1.0, WindowScheme::NonOverlapping)?;
    Ok(RhoChecks {
        noiseless,
        noisy: noisy.value,
        noisy_se: noisy.se,
        lambda,
        sigma,
        window,
    })
}

impl RhoChecks {
    pub fn verdict(&self) -> Verdict {
        let target = 1.0 / (1.0 + (self.sigma / self.lambda).powi(2)).sqrt();
        let ok = (self.noiseless - 1.0).abs() <= 1e-9 && (self.noisy - target).abs() <= 0.02;
        (
            ok,
            format!(
                "noiseless rho = {:.12}, noisy rho = {:.4} (target {target:.4} +/- 0.02)",
                self.noiseless, self.noisy
            ),
            metrics([("rho_noiseless", self.noiseless), ("rho_noisy", self.noisy)]),
        )
    }
}

// 3 ------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongMemory {
    pub seeds: Vec<u64>,
    pub clipped: Vec<f64>,
    pub metaorder: Vec<f64>,
}

/// `γ̂` from both generators at target `γ = 0.5`, `N = 2²⁰`; the metaorder
/// generator uses Pareto tail `α = 1 + γ`.
pub fn long_memory(seeds: &[u64]) -> Result<LongMemory> {
    let n = 1 << 20;
    let mut clipped = Vec::new();
    let mut metaorder = Vec::new();
    for &s in seeds {
        clipped.push(gamma_hat(&sign_autocorr(
            &gen_clipped_fractional_signs(n, 0.5, s)?,
            512,
        )?)?);
        metaorder.push(gamma_hat(&sign_autocorr(
            &gen_metaorder_signs(n, 1.5, s)?,
            512,
        )?)?);
    }
    Ok(LongMemory {
        seeds: seeds.to_vec(),
        clipped,
        metaorder,
    })
}

impl LongMemory {
    pub fn verdict(&self) -> Verdict {
        let all = self.clipped.iter().chain(&self.metaorder);
        let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
        let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
        (
            lo >= 0.4 && hi <= 0.6,
            format!("gamma-hat range over both generators = [{lo:.3}, {hi:.3}] (band [0.4, 0.6])"),
            metrics([("gamma_min", lo), ("gamma_max", hi)]),
        )
    }
}

// 4 ------------------------------------------------------------------------

/// Burn-in applied to the long-memory propagator tapes.
pub const PROPAGATOR_BURN_IN: usize = 4096;

/// Long-memory flow (`γ = 0.5`, latent shape matched to the critical kernel),
/// `N = 2²⁰` after burn-in, priced with `G(ℓ) = ℓ^(-β)`, `λ = ψ = v = 1`.
pub fn propagator_tape(beta: f64, seed: u64) -> Result<TradeTape> {
    let n = 1 << 20;
    let total = n + PROPAGATOR_BURN_IN;
    let signs =
        gen_clipped_fractional_signs_with(total, 0.5, LatentShape::PropagatorMatched, seed)?;
    let tape = unit_tape(signs)?;
    let cfg = ImpactConfig::kyle(1.0).with_kernel(Kernel::power_law(beta, 1.0, 0.0)?);
    let prices = propagator_path(&tape, &cfg, seed)?;
    tape.with_prices(prices)?.skip(PROPAGATOR_BURN_IN)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Martingale {
    pub n_returns: usize,
    /// `D(ℓ)/D(1)` for `ℓ = 1..=256`.
    pub ratios: Vec<f64>,
    /// Return autocorrelation at lags `1..=32`.
    pub return_acf: Vec<f64>,
    pub permanent_ratio: f64,
    pub mean_reverting_ratio: f64,
}

fn d_ratio_256(tape: &TradeTape) -> Result<f64> {
    let p = tape.require_prices("suite")?;
    let d = crate::estimators::diffusivity_at(p, &[1, 256])?;
    Ok(d.values[1] / d.values[0])
}

pub fn martingale(critical: &TradeTape, seed: u64) -> Result<Martingale> {
    let p = critical.require_prices("suite")?;
    let d = diffusivity(p, 256)?;
    let ratios = d.values.iter().map(|v| v / d.values[0]).collect();
    let r = returns(p);
    let return_acf = series_autocorrelation(&r, 32)?;
    Ok(Martingale {
        n_returns: r.len(),
        ratios,
        return_acf,
        permanent_ratio: d_ratio_256(&propagator_tape(0.0, seed)?)?,
        mean_reverting_ratio: d_ratio_256(&propagator_tape(0.45, seed)?)?,
    })
}

impl Martingale {
    pub fn verdict(&self) -> Verdict {
        let lo = self.ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self
            .ratios
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let acf = self.return_acf.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let band = 3.0 / (self.n_returns as f64).sqrt();
        let ok = lo >= 0.7
            && hi <= 1.4
            && acf <= band
            && self.permanent_ratio > 2.0
            && self.mean_reverting_ratio < 0.7;
        (
            ok,
            format!(
                "D(l)/D(1) in [{lo:.3}, {hi:.3}], max |acf| = {acf:.2e} (band {band:.2e}), \
                 beta=0 ratio {:.2}, beta=0.45 ratio {:.3}",
                self.permanent_ratio, self.mean_reverting_ratio
            ),
            metrics([
                ("d_ratio_min", lo),
                ("d_ratio_max", hi),
                ("max_abs_return_acf", acf),
                ("permanent_ratio", self.permanent_ratio),
                ("mean_reverting_ratio", self.mean_reverting_ratio),
            ]),
        )
    }
}

// 5 ------------------------------------------------------------------------

/// Tail window used when predicting the response of the long-memory tape.
pub const DECOMPOSITION_J_TAIL: usize = 65_536;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub measured: LagCurve,
    pub predicted: LagCurve,
    pub truncation_bound: Vec<f64>,
    pub r8: f64,
    pub r512: f64,
}

pub fn decomposition(critical: &TradeTape) -> Result<Decomposition> {
    let r = response(critical, 512)?;
    let c = sign_autocorr(&critical.signs, DECOMPOSITION_J_TAIL)?;
    let kernel = Kernel::power_law(0.25, 1.0, 0.0)?;
    let c0 = sign_variance(&critical.signs);
    let pred =
        predict_response_centered(&kernel, &c, c0, 1.0, 1.0, 1.0, 128, DECOMPOSITION_J_TAIL)?;
    Ok(Decomposition {
        r8: r.values[7],
        r512: r.values[511],
        measured: r,
        predicted: pred.curve,
        truncation_bound: pred.truncation_bound,
    })
}

impl Decomposition {
    pub fn max_abs_z(&self) -> f64 {
        (0..self.predicted.len())
            .map(|i| {
                (self.measured.values[i] - self.predicted.values[i]).abs() / self.measured.se[i]
            })
            .fold(0.0, f64::max)
    }

    pub fn verdict(&self) -> Verdict {
        let z = self.max_abs_z();
        let ratio = self.r512 / self.r8;
        (
            z <= 3.0 && (0.5..=2.0).contains(&ratio),
            format!("max |measured - predicted|/SE over l <= 128 = {z:.2} (band 3), R(512)/R(8) = {ratio:.3}"),
            metrics([("max_abs_z", z), ("r512_over_r8", ratio)]),
        )
    }
}

// 6 ------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionCheck {
    /// Largest relative error of `G(ℓ)`, `ℓ ≤ L/2`, in the exact case.
    pub exact_max_rel_err: f64,
    pub beta_hat: f64,
    pub condition: f64,
}

pub fn inversion(critical: &TradeTape) -> Result<InversionCheck> {
    let l = 256;
    let truth = Kernel::tabulated(Kernel::power_law(0.25, 1.0, 0.0)?.values(l))?;
    let exact_c = target_sign_autocorrelation(0.5, LatentShape::PropagatorMatched, 2 * l)?;
    let c = LagCurve::new(
        CurveRole::SignAutocorr,
        (1..=2 * l).collect(),
        exact_c[1..].to_vec(),
        vec![1; 2 * l],
        vec![0.0; 2 * l],
    )?;
    let pred = predict_response(&truth, &c, 1.0, 1.0, 1.0, l, 2 * l)?;
    let exact = invert_response(
        &pred.curve,
        &c,
        1.0,
        1.0,
        1.0,
        l,
        InversionOptions::default(),
    )?;
    let exact_max_rel_err = (1..=l / 2)
        .map(|k| ((exact.kernel.value(k) - truth.value(k)) / truth.value(k)).abs())
        .fold(0.0, f64::max);

    let r = response(critical, l)?;
    let cm = sign_autocorr(&critical.signs, l)?;
    let opts = InversionOptions {
        c0: sign_variance(&critical.signs),
        ..Default::default()
    };
    let inv = invert_response(&r, &cm, 1.0, 1.0, 1.0, l, opts)?;
    let fit = fit_power_law(
        &KernelSample {
            kernel: &inv.kernel,
            lags: 64,
        },
        1.0,
        64.0,
    )?;
    Ok(InversionCheck {
        exact_max_rel_err,
        beta_hat: fit.exponent,
        condition: inv.condition,
    })
}

impl InversionCheck {
    pub fn verdict(&self) -> Verdict {
        (
            self.exact_max_rel_err <= 1e-6 && (0.2..=0.3).contains(&self.beta_hat),
            format!(
                "exact round-trip max rel err = {:.2e} (band 1e-6), simulated beta-hat = {:.3} (band [0.2, 0.3])",
                self.exact_max_rel_err, self.beta_hat
            ),
            metrics([
                ("exact_max_rel_err", self.exact_max_rel_err),
                ("beta_hat", self.beta_hat),
                ("condition", self.condition),
            ]),
        )
    }
}

// 7 ------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Identification {
    pub max_rel_diff: f64,
    pub predictor_order: usize,
    /// Levinson–Durbin on `C(ℓ) = 0.5^ℓ`, order 8.
    pub ar1_coefficients: Vec<f64>,
}

pub fn identification(seed: u64) -> Result<Identification> {
    let order = 8;
    let tape = unit_tape(gen_markov_signs(100_000, 0.5, seed)?)?;
    let c = sign_autocorr(&tape.signs, order)?;
    let pred = levinson_durbin(&c, order)?;
    let cfg = ImpactConfig::kyle(1.0);
    let surprise = returns(&surprise_path(&tape, &pred, &cfg, seed)?);
    let kernel = kernel_from_predictor(&pred, order + 1)?;
    let prop = returns(&propagator_path(
        &tape,
        &cfg.clone().with_kernel(kernel),
        seed,
    )?);
    let scale = surprise.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let max_rel_diff = surprise
        .iter()
        .zip(&prop)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / scale;
    let exact = LagCurve::new(
        CurveRole::SignAutocorr,
        (1..=8).collect(),
        (1..=8).map(|l| 0.5f64.powi(l)).collect(),
        vec![1; 8],
        vec![0.0; 8],
    )?;
    Ok(Identification {
        max_rel_diff,
        predictor_order: order,
        ar1_coefficients: levinson_durbin(&exact, 8)?.coefficients,
    })
}

impl Identification {
    pub fn verdict(&self) -> Verdict {
        let a = &self.ar1_coefficients;
        let coef_err = std::iter::once((a[0] - 0.5).abs())
            .chain(a[1..].iter().map(|x| x.abs()))
            .fold(0.0, f64::max);
        (
            self.max_rel_diff <= 1e-9 && coef_err <= 1e-12,
            format!(
                "max relative return difference = {:.2e} (band 1e-9), AR(1) coefficient error = {coef_err:.1e}",
                self.max_rel_diff
            ),
            metrics([("max_rel_diff", self.max_rel_diff), ("ar1_coef_err", coef_err)]),
        )
    }
}

// 8 ------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Asymmetry {
    pub lambda: f64,
    pub noiseless_confirming: Vec<f64>,
    pub noiseless_contradicting: Vec<f64>,
    pub noisy_confirming: (f64, f64),
    pub noisy_contradicting: (f64, f64),
}

/// Impacts `ε_n Δp_n` split by whether `ε_n = ε_{n-1}`.
fn split_impacts(tape: &TradeTape) -> Result<(Vec<f64>, Vec<f64>)> {
    let p = tape.require_prices("suite")?;
    let s = tape.signs.as_slice();
    let (mut conf, mut contra) = (Vec::new(), Vec::new());
    for n in 1..s.len() {
        let x = s[n] as f64 * (p[n + 1] - p[n]);
        if s[n] == s[n - 1] {
            conf.push(x);
        } else {
            contra.push(x);
        }
    }
    Ok((conf, contra))
}

fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

pub fn asymmetry(seed: u64) -> Result<Asymmetry> {
    let lambda = 1.0;
    let tape = unit_tape(gen_markov_signs(100_000, 0.5, seed)?)?;
    let pred = ArPredictor::new(vec![0.5])?;
    let cfg = ImpactConfig::kyle(lambda);
    let clean = tape
        .clone()
        .with_prices(surprise_path(&tape, &pred, &cfg, seed)?)?;
    let (conf, contra) = split_impacts(&clean)?;
    let noisy_cfg = cfg.clone().with_noise(1.0);
    let noisy = tape
        .clone()
        .with_prices(surprise_path(&tape, &pred, &noisy_cfg, seed)?)?;
    let (nc, nx) = split_impacts(&noisy)?;
    Ok(Asymmetry {
        lambda,
        noiseless_confirming: conf,
        noiseless_contradicting: contra,
        noisy_confirming: mean_se(&nc),
        noisy_contradicting: mean_se(&nx),
    })
}

impl Asymmetry {
    pub fn verdict(&self) -> Verdict {
        let exact = self
            .noiseless_confirming
            .iter()
            .all(|&x| x == 0.5 * self.lambda)
            && self
                .noiseless_contradicting
                .iter()
                .all(|&x| x == 1.5 * self.lambda);
        let (mc, sc) = self.noisy_confirming;
        let (mx, sx) = self.noisy_contradicting;
        let gap_z = (mx - mc) / (sc * sc + sx * sx).sqrt();
        (
            exact && gap_z >= 3.0,
            format!(
                "noiseless impacts exact: {exact}; noisy confirming {mc:.4} vs contradicting {mx:.4} (gap {gap_z:.1} SE)"
            ),
            metrics([("noisy_confirming", mc), ("noisy_contradicting", mx), ("gap_z", gap_z)]),
        )
    }
}

// 9 ------------------------------------------------------------------------

/// Minimum bin occupancy for the concavity fit.
pub const CONCAVITY_MIN_OCCUPANCY: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Concavity {
    pub curve: ConditionalResponse,
    pub psi_hat: f64,
    pub barra_a: f64,
    pub barra_r2: f64,
}

/// I.i.d. signs, lognormal volumes, `G(ℓ) = ℓ^(-0.25)`, `ψ = 0.5`,
/// `N = 10⁶`; one-trade conditional response on 12 log bins.
pub fn concavity(seed: u64) -> Result<Concavity> {
    let n = 1_000_000;
    let signs = gen_iid_signs(n, 0.5, seed)?;
    let vols = gen_volumes(
        n,
        VolumeSpec::Lognormal {
            mu: 0.0,
            sigma: 1.0,
        },
        seed,
    )?;
    let tape = tape_of(signs, vols)?;
    let cfg = ImpactConfig::kyle(1.0)
        .with_psi(0.5)
        .with_kernel(Kernel::power_law(0.25, 1.0, 0.0)?);
    let priced = tape
        .clone()
        .with_prices(propagator_path(&tape, &cfg, seed)?)?;
    let edges = log_volume_bins(priced.volumes.as_slice(), 12)?;
    let curve = conditional_response(&priced, 1, &edges, CONCAVITY_MIN_OCCUPANCY)?;
    let psi_hat = fit_power_law(&curve, 0.0, f64::INFINITY)?.exponent;
    let r = returns(priced.prices().expect("priced"));
    let m = r.iter().sum::<f64>() / r.len() as f64;
    let sigma1 = (r.iter().map(|x| (x - m).powi(2)).sum::<f64>() / r.len() as f64).sqrt();
    let barra = fit_barra(&curve, sigma1, priced.volumes.mean())?;
    Ok(Concavity {
        curve,
        psi_hat,
        barra_a: barra.a,
        barra_r2: barra.r_squared,
    })
}

impl Concavity {
    pub fn verdict(&self) -> Verdict {
        (
            (0.45..=0.55).contains(&self.psi_hat) && self.barra_r2 > 0.9,
            format!(
                "psi-hat = {:.4} (band [0.45, 0.55]), BARRA A = {:.3}, r2 = {:.4} (band > 0.9)",
                self.psi_hat, self.barra_a, self.barra_r2
            ),
            metrics([
                ("psi_hat", self.psi_hat),
                ("barra_a", self.barra_a),
                ("barra_r2", self.barra_r2),
            ]),
        )
    }
}

// 10 -----------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadDuality {
    pub volume: f64,
    pub psi: f64,
    pub lambdas: Vec<f64>,
    /// Largest `|S - 2λv^ψ|` over all quotes, per λ.
    pub spread_errors: Vec<f64>,
    pub spreads: Vec<f64>,
    pub sigma1: Vec<f64>,
}

/// Noiseless surprise model on AR(1) flow (`a₁ = 0.5`), `v = 4`, `ψ = 0.5`.
pub fn spread_duality(seed: u64) -> Result<SpreadDuality> {
    let (volume, psi) = (4.0, 0.5);
    let lambdas = vec![0.5, 1.0, 2.0];
    let n = 100_000;
    let signs = gen_markov_signs(n, 0.5, seed)?;
    let tape = tape_of(signs, VolumeSeries::constant(n, volume)?)?;
    let pred = ArPredictor::new(vec![0.5])?;
    let mut spread_errors = Vec::new();
    let mut spreads = Vec::new();
    let mut sigma1 = Vec::new();
    for &lambda in &lambdas {
        let cfg = ImpactConfig::kyle(lambda).with_psi(psi);
        let priced = tape
            .clone()
            .with_prices(surprise_path(&tape, &pred, &cfg, seed)?)?;
        let qs = quote_path(&priced, &pred, &cfg)?;
        let want = 2.0 * lambda * volume.powf(psi);
        spread_errors.push(
            qs.iter()
                .map(|q| (q.spread - want).abs())
                .fold(0.0, f64::max),
        );
        spreads.push(qs[0].spread);
        let r = returns(priced.prices().expect("priced"));
        let m = r.iter().sum::<f64>() / r.len() as f64;
        sigma1.push((r.iter().map(|x| (x - m).powi(2)).sum::<f64>() / r.len() as f64).sqrt());
    }
    Ok(SpreadDuality {
        volume,
        psi,
        lambdas,
        spread_errors,
        spreads,
        sigma1,
    })
}

impl SpreadDuality {
    pub fn ratios(&self) -> Vec<f64> {
        self.sigma1
            .iter()
            .zip(&self.spreads)
            .map(|(s, q)| s / q)
            .collect()
    }

    pub fn verdict(&self) -> Verdict {
        let ratios = self.ratios();
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        let spread = ratios
            .iter()
            .map(|r| (r / mean - 1.0).abs())
            .fold(0.0, f64::max);
        let exact = self.spread_errors.iter().all(|&e| e == 0.0);
        (
            exact && spread <= 0.05,
            format!(
                "spreads exact: {exact}; sigma1/S = {mean:.4}, max deviation {:.2e} (band 5%)",
                spread
            ),
            metrics([("ratio_mean", mean), ("ratio_max_dev", spread)]),
        )
    }
}

// 11 -----------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierRun {
    pub beta: f64,
    pub psi: f64,
    pub max_len: usize,
    pub grid: Vec<f64>,
    pub min_cost: f64,
    pub argmin: String,
    pub candidates: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frontier {
    pub lambda: f64,
    pub runs: Vec<FrontierRun>,
    /// Size of the full grid at `max_len = 10`, refused under the default budget.
    pub refused_size: Option<u128>,
}

pub const FULL_GRID: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 9.0];

fn frontier_run(
    beta: f64,
    psi: f64,
    lambda: f64,
    max_len: usize,
    grid: &[f64],
) -> Result<FrontierRun> {
    let kernel = Kernel::power_law(beta, 1.0, 0.0)?;
    let r = search_round_trips(
        &kernel,
        psi,
        &SearchParams::new(lambda, max_len, grid.to_vec()),
    )?;
    Ok(FrontierRun {
        beta,
        psi,
        max_len,
        grid: grid.to_vec(),
        min_cost: r.min_cost,
        argmin: r.best.encode(),
        candidates: r.candidates,
    })
}

/// Full grid at `max_len = 8` (the largest horizon within the default budget)
/// for every cell, plus the `{1, 9}` sub-grid at `max_len = 10` for the
/// concave permanent cell. A minimum over a sub-grid bounds the full-grid
/// minimum from above, so a negative sub-grid result is a valid upper bound.
pub fn frontier() -> Result<Frontier> {
    let lambda = 1.0;
    let mut runs = Vec::new();
    for (b, p) in [(0.0, 1.0), (0.0, 0.5), (0.5, 0.5), (0.6, 0.6)] {
        runs.push(frontier_run(b, p, lambda, 8, &FULL_GRID)?);
    }
    runs.push(frontier_run(0.0, 0.5, lambda, 10, &[1.0, 9.0])?);
    let refused_size = match search_round_trips(
        &Kernel::permanent(1.0),
        0.5,
        &SearchParams::new(lambda, 10, FULL_GRID.to_vec()),
    ) {
        Err(Error::Budget { size, .. }) => Some(size),
        Err(e) => return Err(e),
        Ok(_) => None,
    };
    Ok(Frontier {
        lambda,
        runs,
        refused_size,
    })
}

impl Frontier {
    /// Smallest cost over all runs of a cell.
    pub fn cell_min(&self, beta: f64, psi: f64) -> f64 {
        self.runs
            .iter()
            .filter(|r| r.beta == beta && r.psi == psi)
            .map(|r| r.min_cost)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn verdict(&self) -> Verdict {
        let lin = self.cell_min(0.0, 1.0);
        let concave = self.cell_min(0.0, 0.5);
        let crit = self.cell_min(0.5, 0.5);
        let over = self.cell_min(0.6, 0.6);
        let within_budget = self
            .runs
            .iter()
            .all(|r| r.candidates <= u128::from(DEFAULT_BUDGET));
        (
            lin >= 0.0 && concave <= -9.0 * self.lambda && crit >= 0.0 && over >= 0.0 && within_budget,
            format!(
                "min cost (0,1) = {lin}, (0,0.5) = {concave}, (0.5,0.5) = {crit}, (0.6,0.6) = {over}; all runs within budget: {within_budget}"
            ),
            metrics([
                ("linear_permanent", lin),
                ("concave_permanent", concave),
                ("critical", crit),
                ("supercritical", over),
            ]),
        )
    }
}

// 12 -----------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Collapse {
    pub metric_at_0_3: f64,
    pub metric_at_0: f64,
}

/// Exact family `R_i(v) = M_i^(-0.3) F(M_i^0.3 v / v̄_i)`, `F(x) = x^0.3`.
pub fn synthetic_family() -> Vec<StockCurve> {
    [(1.0, 3.0), (10.0, 1.0), (100.0, 0.5)]
        .iter()
        .map(|&(m, vbar): &(f64, f64)| {
            let v: Vec<f64> = (0..40).map(|i| vbar * 1.2f64.powi(i - 20)).collect();
            let values = v
                .iter()
                .map(|&x| m.powf(-0.3) * (m.powf(0.3) * x / vbar).powf(0.3))
                .collect();
            StockCurve {
                capitalization: m,
                mean_volume: vbar,
                curve: ConditionalResponse {
                    lag: 1,
                    bins: v.iter().map(|&x| (x, x)).collect(),
                    mean_volume: v.clone(),
                    values,
                    counts: vec![100; v.len()],
                    se: vec![0.0; v.len()],
                },
            }
        })
        .collect()
}

pub fn collapse() -> Result<Collapse> {
    let fam = synthetic_family();
    Ok(Collapse {
        metric_at_0_3: master_curve_rescale(&fam, 0.3)?.metric,
        metric_at_0: master_curve_rescale(&fam, 0.0)?.metric,
    })
}

impl Collapse {
    pub fn verdict(&self) -> Verdict {
        (
            self.metric_at_0_3 < 1e-9 && self.metric_at_0 > 0.5,
            format!(
                "collapse metric {:.2e} at delta=0.3 (band 1e-9), {:.3} at delta=0 (band > 0.5)",
                self.metric_at_0_3, self.metric_at_0
            ),
            metrics([
                ("metric_delta_0_3", self.metric_at_0_3),
                ("metric_delta_0", self.metric_at_0),
            ]),
        )
    }
}

// 13 -----------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Determinism {
    pub simulate_bytes_identical: bool,
    pub tape_round_trip: bool,
    pub curve_round_trip: bool,
    pub config_round_trip: bool,
    pub frontier_round_trip: bool,
}

/// Small propagator config used for the rerun checks.
pub fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::paper_suite();
    cfg.name = "determinism".into();
    cfg.n = 20_000;
    cfg.impact = cfg.impact.with_noise(0.3);
    cfg.volumes = VolumeSpec::Lognormal {
        mu: 0.0,
        sigma: 1.0,
    };
    cfg
}

pub fn determinism(dir: &Path) -> Result<Determinism> {
    let cfg = small_config();
    let a = simulate(&cfg, 11)?;
    let b = simulate(&cfg, 11)?;
    let pa = dir.join("run_a.csv");
    let pb = dir.join("run_b.csv");
    io::write_tape(&a.tape, &pa)?;
    io::write_tape(&b.tape, &pb)?;
    let simulate_bytes_identical = std::fs::read(&pa)? == std::fs::read(&pb)?;
    let tape_round_trip = io::read_tape(&pa)? == a.tape;

    let r = response(&a.tape, 32)?;
    let pc = dir.join("response.csv");
    io::write_curve(&r, &pc)?;
    let curve_round_trip = io::read_curve(&pc, None)? == r;

    let text = io::to_json(&cfg)?;
    let back = ExperimentConfig::from_json(&text)?;
    let config_round_trip = back == cfg && io::config_hash(&back)? == io::config_hash(&cfg)?;

    let cells = crate::manipulation::gatheral_frontier(
        &[0.0, 0.5],
        &[0.5, 1.0],
        &SearchParams::new(1.0, 5, vec![1.0, 3.0]),
    )?;
    let csv = io::frontier_to_csv(&cells);
    let parsed = io::frontier_from_csv(&csv)?;
    let frontier_round_trip = parsed.len() == cells.len()
        && parsed.iter().zip(&cells).all(|(p, c)| {
            p.beta == c.beta
                && p.psi == c.psi
                && p.min_cost == c.min_cost
                && p.argmin.trades == c.argmin.trades
        })
        && io::frontier_to_csv(&parsed) == csv;
    Ok(Determinism {
        simulate_bytes_identical,
        tape_round_trip,
        curve_round_trip,
        config_round_trip,
        frontier_round_trip,
    })
}

impl Determinism {
    pub fn verdict(&self) -> Verdict {
        let ok = self.simulate_bytes_identical
            && self.tape_round_trip
            && self.curve_round_trip
            && self.config_round_trip
            && self.frontier_round_trip;
        (
            ok,
            format!(
                "rerun identical: {}, tape: {}, curve: {}, config: {}, frontier: {}",
                self.simulate_bytes_identical,
                self.tape_round_trip,
                self.curve_round_trip,
                self.config_round_trip,
                self.frontier_round_trip
            ),
            BTreeMap::new(),
        )
    }
}

// --------------------------------------------------------------------------

/// Runs the selected criteria in order. `work_dir` receives the scratch files
/// of the determinism check. Errors inside a criterion count as a failure.
pub fn run_criteria(ids: &[u32], seed: u64, work_dir: &Path) -> Vec<CriterionResult> {
    let mut critical: Option<Result<TradeTape>> = None;
    let mut out = Vec::new();
    for &id in ids {
        let name = CRITERIA
            .iter()
            .find(|c| c.0 == id)
            .map(|c| c.1)
            .unwrap_or("unknown");
        let start = Instant::now();
        let needs_tape = matches!(id, 4..=6);
        if needs_tape && critical.is_none() {
            critical = Some(propagator_tape(0.25, seed));
        }
        let tape = || -> Result<&TradeTape> {
            critical
                .as_ref()
                .expect("built above")
                .as_ref()
                .map_err(|e| Error::estimation("suite", e.to_string()))
        };
        let verdict: Result<Verdict> = match id {
            1 => kyle_flatness(seed).map(|m| m.verdict()),
            2 => rho_checks(seed).map(|m| m.verdict()),
            3 => long_memory(&(seed..seed + 5).collect::<Vec<_>>()).map(|m| m.verdict()),
            4 => tape()
                .and_then(|t| martingale(t, seed))
                .map(|m| m.verdict()),
            5 => tape().and_then(decomposition).map(|m| m.verdict()),
            6 => tape().and_then(inversion).map(|m| m.verdict()),
            7 => identification(seed).map(|m| m.verdict()),
            8 => asymmetry(seed).map(|m| m.verdict()),
            9 => concavity(seed).map(|m| m.verdict()),
            10 => spread_duality(seed).map(|m| m.verdict()),
            11 => frontier().map(|m| m.verdict()),
            12 => collapse().map(|m| m.verdict()),
            13 => determinism(work_dir).map(|m| m.verdict()),
            _ => Err(Error::param("suite", format!("no criterion {id}"))),
        };
        let (passed, summary, metrics) = match verdict {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}"), BTreeMap::new()),
        };
        out.push(CriterionResult {
            id,
            name: name.to_string(),
            passed,
            summary,
            metrics,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    out
}
