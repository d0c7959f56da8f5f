//! Experiment configuration and the simulate → measure → invert → search
//! pipeline shared by the command-line tool and the acceptance suite.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    conditional_response, diffusivity_at, fit_power_law, invert_response, levinson_durbin,
    log_volume_bins, response, rho, sign_autocorr, sign_variance, ConditionalResponse, CurveRole,
    InversionOptions, KernelInversion, KernelSample, LagCurve, PowerLawFit, WindowScheme,
    DEFAULT_J_TAIL, MIN_BIN_OCCUPANCY,
};
use crate::impact::{simulate_prices, ArPredictor, ImpactConfig, ImpactModel, Kernel};
use crate::manipulation::{
    gatheral_frontier, FrontierCell, OwnImpact, SearchParams, DEFAULT_BUDGET,
};
use crate::orderflow::{
    gen_clipped_fractional_signs_with, gen_iid_signs, gen_markov_signs, gen_metaorder_signs_with,
    gen_volumes, LatentShape, MetaorderLengths,
};
use crate::tape::{pow_psi, SignSeries, TradeTape, VolumeSpec};

const MODULE: &str = "cli_io";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorSpec {
    Iid {
        p_buy: f64,
    },
    ClippedFractional {
        gamma: f64,
        #[serde(default)]
        shape: LatentShape,
    },
    Metaorder {
        lengths: MetaorderLengths,
    },
    Markov {
        rho: f64,
    },
}

impl GeneratorSpec {
    pub fn generate(&self, n: usize, seed: u64) -> Result<SignSeries> {
        match *self {
            GeneratorSpec::Iid { p_buy } => gen_iid_signs(n, p_buy, seed),
            GeneratorSpec::ClippedFractional { gamma, shape } => {
                gen_clipped_fractional_signs_with(n, gamma, shape, seed)
            }
            GeneratorSpec::Metaorder { lengths } => gen_metaorder_signs_with(n, lengths, seed),
            GeneratorSpec::Markov { rho } => gen_markov_signs(n, rho, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PredictorSpec {
    Explicit {
        coefficients: Vec<f64>,
    },
    /// Yule–Walker fit of this order on the simulated signs.
    LevinsonDurbin {
        order: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Kyle,
    Propagator,
    Surprise { predictor: PredictorSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSpec {
    /// Largest lag of `R(ℓ)`.
    pub response_max_lag: usize,
    /// Largest lag of `C(ℓ)`.
    pub autocorr_max_lag: usize,
    pub diffusivity_lags: Vec<usize>,
    /// Lag `T` of the volume-conditioned response.
    pub conditional_lag: usize,
    pub volume_bins: usize,
    pub min_occupancy: usize,
    pub rho_windows: Vec<usize>,
    /// Volume exponent in the ρ flow; `None` uses the model's ψ.
    pub psi_weight: Option<f64>,
    pub gamma_fit_range: (f64, f64),
    /// Log-spaced lags used for the `γ̂` fit.
    pub gamma_fit_points: usize,
    pub kernel_len: usize,
    pub kernel_fit_range: (f64, f64),
    pub j_tail: usize,
    pub ridge: f64,
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        Self {
            response_max_lag: 512,
            autocorr_max_lag: 512,
            diffusivity_lags: (0..=8).map(|k| 1usize << k).collect(),
            conditional_lag: 1,
            volume_bins: 12,
            min_occupancy: MIN_BIN_OCCUPANCY,
            rho_windows: vec![1, 4, 16, 64],
            psi_weight: None,
            gamma_fit_range: (8.0, 512.0),
            gamma_fit_points: 20,
            kernel_len: 256,
            kernel_fit_range: (1.0, 64.0),
            j_tail: DEFAULT_J_TAIL,
            ridge: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    Single(u64),
    Range { start: u64, count: u64 },
}

impl SeedSpec {
    pub fn expand(&self) -> Vec<u64> {
        match *self {
            SeedSpec::Single(s) => vec![s],
            SeedSpec::Range { start, count } => (start..start + count).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManipSpec {
    pub betas: Vec<f64>,
    pub psis: Vec<f64>,
    pub lambda: f64,
    pub max_len: usize,
    pub volume_grid: Vec<f64>,
    #[serde(default = "default_budget")]
    pub budget: u64,
    #[serde(default)]
    pub own_impact: OwnImpact,
}

fn default_budget() -> u64 {
    DEFAULT_BUDGET
}

impl ManipSpec {
    pub fn params(&self) -> SearchParams {
        SearchParams {
            lambda: self.lambda,
            max_len: self.max_len,
            volume_grid: self.volume_grid.clone(),
            budget: self.budget,
            own_impact: self.own_impact,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Trades kept after burn-in.
    pub n: usize,
    /// Leading trades simulated then dropped; `None` uses the model's policy.
    #[serde(default)]
    pub burn_in: Option<usize>,
    pub generator: GeneratorSpec,
    pub volumes: VolumeSpec,
    pub model: ModelSpec,
    pub impact: ImpactConfig,
    #[serde(default)]
    pub estimators: EstimatorSpec,
    pub seeds: SeedSpec,
    #[serde(default)]
    pub manipulation: Option<ManipSpec>,
    /// Acceptance criteria evaluated by `report`; `None` means all.
    #[serde(default)]
    pub criteria: Option<Vec<u32>>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// The shipped default: long-memory flow with a critically decaying
    /// propagator, full estimator set, the manipulation frontier and every
    /// acceptance criterion.
    pub fn paper_suite() -> Self {
        Self {
            name: "paper-suite".into(),
            n: 1 << 20,
            burn_in: None,
            generator: GeneratorSpec::ClippedFractional {
                gamma: 0.5,
                shape: LatentShape::PropagatorMatched,
            },
            volumes: VolumeSpec::Constant { value: 1.0 },
            model: ModelSpec::Propagator,
            impact: ImpactConfig::kyle(1.0).with_kernel(Kernel::PowerLaw {
                beta: 0.25,
                g1: 1.0,
                plateau: 0.0,
            }),
            estimators: EstimatorSpec::default(),
            seeds: SeedSpec::Single(1),
            manipulation: Some(ManipSpec {
                betas: vec![0.0, 0.25, 0.5, 0.6],
                psis: vec![0.5, 0.6, 1.0],
                lambda: 1.0,
                max_len: 8,
                volume_grid: vec![1.0, 2.0, 4.0, 8.0, 9.0],
                budget: DEFAULT_BUDGET,
                own_impact: OwnImpact::Full,
            }),
            criteria: None,
            out_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::param(MODULE, "n must be >= 1"));
        }
        self.impact.validate()?;
        if matches!(self.seeds, SeedSpec::Range { count: 0, .. }) {
            return Err(Error::param(MODULE, "seed range is empty"));
        }
        let e = &self.estimators;
        if e.diffusivity_lags.is_empty()
            || e.diffusivity_lags.windows(2).any(|w| w[1] <= w[0])
            || e.diffusivity_lags[0] == 0
        {
            return Err(Error::param(
                MODULE,
                "diffusivity lags must be positive and increasing",
            ));
        }
        if e.rho_windows.contains(&0) {
            return Err(Error::param(MODULE, "rho windows must be >= 1"));
        }
        if let Some(c) = &self.criteria {
            if let Some(bad) = c.iter().find(|&&k| !(1..=13).contains(&k)) {
                return Err(Error::param(
                    MODULE,
                    format!("no acceptance criterion {bad}"),
                ));
            }
        }
        // Generator parameters are checked by a zero-cost dry run.
        self.generator.generate(1, 0).map(|_| ())?;
        gen_volumes(1, self.volumes, 0).map(|_| ())
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or_else(|| self.impact.burn_in())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub tape: TradeTape,
    pub seed: u64,
    pub burn_in: usize,
    /// Predictor used by the surprise model, if any.
    pub predictor: Option<ArPredictor>,
}

/// Generates `n + burn_in` trades, prices them and drops the burn-in.
pub fn simulate(cfg: &ExperimentConfig, seed: u64) -> Result<Simulation> {
    cfg.validate()?;
    let burn = cfg.burn_in();
    let total = cfg.n + burn;
    let signs = cfg.generator.generate(total, seed)?;
    let volumes = gen_volumes(total, cfg.volumes, seed)?;
    let raw = TradeTape::new(signs, volumes)?;
    let mut predictor = None;
    let model = match &cfg.model {
        ModelSpec::Kyle => ImpactModel::Kyle,
        ModelSpec::Propagator => ImpactModel::Propagator,
        ModelSpec::Surprise { predictor: spec } => {
            let p = match spec {
                PredictorSpec::Explicit { coefficients } => ArPredictor::new(coefficients.clone())?,
                PredictorSpec::LevinsonDurbin { order: 0 } => ArPredictor::zero(),
                PredictorSpec::LevinsonDurbin { order } => {
                    levinson_durbin(&sign_autocorr(&raw.signs, *order)?, *order)?
                }
            };
            predictor = Some(p.clone());
            ImpactModel::Surprise { predictor: p }
        }
    };
    let priced = simulate_prices(&raw, &model, &cfg.impact, seed)?;
    let tape = if burn > 0 { priced.skip(burn)? } else { priced };
    Ok(Simulation {
        tape,
        seed,
        burn_in: burn,
        predictor,
    })
}

/// Impact scale used to put inverted kernels in price units. Without it the
/// kernel comes out in units of `λ E[v^ψ]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpactScale {
    pub lambda: f64,
    pub psi: f64,
}

/// `(λ, ψ, v)` with `v^ψ = mean(v_n^ψ)` for the inversion.
fn scale_args(tape: &TradeTape, scale: Option<ImpactScale>) -> (f64, f64, f64) {
    match scale {
        Some(s) => {
            let m = tape
                .volumes
                .as_slice()
                .iter()
                .map(|&v| pow_psi(v, s.psi))
                .sum::<f64>()
                / tape.len() as f64;
            (s.lambda, s.psi, m.powf(1.0 / s.psi))
        }
        None => (1.0, 1.0, 1.0),
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Fits {
    pub gamma: Option<PowerLawFit>,
    pub psi: Option<PowerLawFit>,
    pub beta: Option<PowerLawFit>,
    pub inversion_residual: Option<f64>,
    pub inversion_condition: Option<f64>,
    /// Per-estimator failure messages.
    pub errors: BTreeMap<String, String>,
}

/// Every curve from one tape. Failures are kept per estimator so the rest
/// can still be written.
#[derive(Debug)]
pub struct Measurement {
    pub response: Result<LagCurve>,
    pub sign_autocorr: Result<LagCurve>,
    pub diffusivity: Result<LagCurve>,
    pub conditional: Result<ConditionalResponse>,
    pub rho: Result<LagCurve>,
    pub inversion: Result<KernelInversion>,
    pub fits: Fits,
}

impl Measurement {
    /// Exit code of the first failure, if any.
    pub fn failure_code(&self) -> Option<i32> {
        [
            self.response.as_ref().err(),
            self.sign_autocorr.as_ref().err(),
            self.diffusivity.as_ref().err(),
            self.conditional.as_ref().err(),
            self.rho.as_ref().err(),
            self.inversion.as_ref().err(),
        ]
        .into_iter()
        .flatten()
        .map(Error::exit_code)
        .max()
    }
}

fn rho_curve(tape: &TradeTape, windows: &[usize], psi: f64) -> Result<LagCurve> {
    let mut ws = windows.to_vec();
    ws.sort_unstable();
    ws.dedup();
    let mut values = Vec::new();
    let mut counts = Vec::new();
    let mut se = Vec::new();
    for &w in &ws {
        let r = rho(tape, w, psi, WindowScheme::NonOverlapping)?;
        values.push(r.value);
        counts.push(r.windows);
        se.push(r.se);
    }
    LagCurve::new(CurveRole::Rho, ws, values, counts, se)
}

pub fn measure(tape: &TradeTape, spec: &EstimatorSpec, scale: Option<ImpactScale>) -> Measurement {
    let mut fits = Fits::default();
    let response = response(tape, spec.response_max_lag);
    let sign_autocorr = sign_autocorr(&tape.signs, spec.autocorr_max_lag.max(spec.kernel_len));
    let diffusivity = tape
        .require_prices(MODULE)
        .and_then(|p| diffusivity_at(p, &spec.diffusivity_lags));
    let conditional =
        log_volume_bins(tape.volumes.as_slice(), spec.volume_bins).and_then(|edges| {
            conditional_response(tape, spec.conditional_lag, &edges, spec.min_occupancy)
        });
    let psi_w = spec.psi_weight.or(scale.map(|s| s.psi)).unwrap_or(1.0);
    let rho = rho_curve(tape, &spec.rho_windows, psi_w);

    if let Ok(c) = &sign_autocorr {
        let (lo, hi) = spec.gamma_fit_range;
        let sub = c.log_spaced(lo as usize, hi as usize, spec.gamma_fit_points);
        match fit_power_law(&sub, lo, hi) {
            Ok(f) => fits.gamma = Some(f),
            Err(e) => {
                fits.errors.insert("gamma".into(), e.to_string());
            }
        }
    }
    if let Ok(c) = &conditional {
        match fit_power_law(c, 0.0, f64::INFINITY) {
            Ok(f) => fits.psi = Some(f),
            Err(e) => {
                fits.errors.insert("psi".into(), e.to_string());
            }
        }
    }
    let inversion = match (&response, &sign_autocorr) {
        (Ok(r), Ok(c)) => {
            let (l, p, v) = scale_args(tape, scale);
            let opts = InversionOptions {
                rows: None,
                ridge: spec.ridge,
                c0: sign_variance(&tape.signs),
            };
            invert_response(r, c, l, p, v, spec.kernel_len, opts)
        }
        (Err(e), _) | (_, Err(e)) => Err(Error::estimation(
            "estimators",
            format!("inversion skipped: {e}"),
        )),
    };
    if let Ok(inv) = &inversion {
        fits.inversion_residual = Some(inv.residual_norm);
        fits.inversion_condition = Some(inv.condition);
        let (lo, hi) = spec.kernel_fit_range;
        let sample = KernelSample {
            kernel: &inv.kernel,
            lags: (hi as usize).min(spec.kernel_len),
        };
        match fit_power_law(&sample, lo, hi) {
            Ok(f) => fits.beta = Some(f),
            Err(e) => {
                fits.errors.insert("beta".into(), e.to_string());
            }
        }
    }
    for (name, err) in [
        ("response", response.as_ref().err()),
        ("sign_autocorr", sign_autocorr.as_ref().err()),
        ("diffusivity", diffusivity.as_ref().err()),
        ("conditional_response", conditional.as_ref().err()),
        ("rho", rho.as_ref().err()),
        ("inversion", inversion.as_ref().err()),
    ] {
        if let Some(e) = err {
            fits.errors.insert(name.into(), e.to_string());
        }
    }
    Measurement {
        response,
        sign_autocorr,
        diffusivity,
        conditional,
        rho,
        inversion,
        fits,
    }
}

pub fn frontier(spec: &ManipSpec) -> Result<Vec<FrontierCell>> {
    gatheral_frontier(&spec.betas, &spec.psis, &spec.params())
}

/// Trend diagnostics from a diffusivity curve: ratio `D(ℓ_max)/D(ℓ_min)`
/// above 2 flags superdiffusion, below 0.7 mean reversion.
pub fn diffusion_flags(d: &LagCurve) -> Vec<String> {
    let (Some(&first), Some(&last)) = (d.values.first(), d.values.last()) else {
        return Vec::new();
    };
    if first <= 0.0 {
        return vec!["diffusivity at the shortest lag is zero".into()];
    }
    let ratio = last / first;
    let (l0, l1) = (d.lags[0], d.lags[d.len() - 1]);
    if ratio > 2.0 {
        vec![format!(
            "superdiffusion: D({l1})/D({l0}) = {ratio:.3} > 2 (prices trend)"
        )]
    } else if ratio < 0.7 {
        vec![format!(
            "mean reversion: D({l1})/D({l0}) = {ratio:.3} < 0.7"
        )]
    } else {
        Vec::new()
    }
}
