use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use impactlab::estimators::{invert_response, CurveRole, InversionOptions, LagCurve, PowerLawFit};
use impactlab::experiment::{
    diffusion_flags, frontier, measure, simulate, EstimatorSpec, ExperimentConfig, GeneratorSpec,
    ImpactScale, ManipSpec, Measurement, ModelSpec, PredictorSpec, SeedSpec,
};
use impactlab::impact::Kernel;
use impactlab::io;
use impactlab::manipulation::{OwnImpact, DEFAULT_BUDGET};
use impactlab::orderflow::{LatentShape, LengthSampling, MetaorderLengths};
use impactlab::suite::{run_criteria, CriterionResult};
use impactlab::{Error, Result, TradeTape, VolumeSpec};

use crate::{
    Command, Common, GeneratorArg, ModelArg, ModelFlags, OwnImpactArg, Preset, OUT_DIR_ENV,
};

const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Exit code when every stage ran but an acceptance criterion failed.
const ACCEPTANCE_FAILED: u8 = 4;

pub fn run(cmd: Command) -> Result<u8> {
    match cmd {
        Command::Simulate { common, model } => cmd_simulate(&common, &model),
        Command::Measure {
            common,
            tape,
            lambda,
            psi,
            max_lag,
        } => cmd_measure(
            &common,
            &tape,
            lambda.map(|lambda| ImpactScale { lambda, psi }),
            max_lag,
        ),
        Command::Invert {
            common,
            response,
            autocorr,
            kernel_len,
            lambda,
            psi,
            volume,
            ridge,
            c0,
            rows,
        } => {
            let opts = InversionOptions { rows, ridge, c0 };
            cmd_invert(
                &common,
                &response,
                &autocorr,
                kernel_len,
                (lambda, psi, volume),
                opts,
            )
        }
        Command::Manip {
            common,
            betas,
            psis,
            lambda,
            max_len,
            grid,
            budget,
            own_impact,
        } => {
            let base = match load_config(&common, None)? {
                Some(cfg) => cfg.manipulation.unwrap_or_else(default_manip),
                None => default_manip(),
            };
            let spec = ManipSpec {
                betas: betas.unwrap_or(base.betas),
                psis: psis.unwrap_or(base.psis),
                lambda: lambda.unwrap_or(base.lambda),
                max_len: max_len.unwrap_or(base.max_len),
                volume_grid: grid.unwrap_or(base.volume_grid),
                budget: budget.unwrap_or(base.budget),
                own_impact: match own_impact {
                    Some(OwnImpactArg::Full) => OwnImpact::Full,
                    Some(OwnImpactArg::Half) => OwnImpact::Half,
                    None => base.own_impact,
                },
            };
            cmd_manip(&common, &spec)
        }
        Command::Report {
            common,
            preset,
            criteria,
        } => {
            let mut cfg = load_config(&common, preset)?.ok_or_else(|| {
                Error::Config("report needs --config <file> or --preset paper-suite".into())
            })?;
            if criteria.is_some() {
                cfg.criteria = criteria;
            }
            finish_config(&mut cfg, &common)?;
            cmd_report(&common, &cfg)
        }
    }
}

fn default_manip() -> ManipSpec {
    ExperimentConfig::paper_suite()
        .manipulation
        .expect("preset suite has a manipulation section")
}

/// Reads `--config` (or the preset). An empty or `{}` file is a usage error.
fn load_config(common: &Common, preset: Option<Preset>) -> Result<Option<ExperimentConfig>> {
    if let Some(Preset::PaperSuite) = preset {
        return Ok(Some(ExperimentConfig::paper_suite()));
    }
    let Some(path) = &common.config else {
        return Ok(None);
    };
    let text = fs::read_to_string(path)?;
    let trimmed = text.trim();
    if trimmed.is_empty() || trimmed == "{}" {
        return Err(Error::Config(format!(
            "{}: config is empty",
            path.display()
        )));
    }
    ExperimentConfig::from_json(&text).map(Some)
}

fn finish_config(cfg: &mut ExperimentConfig, common: &Common) -> Result<()> {
    if let Some(seed) = common.seed {
        cfg.seeds = SeedSpec::Single(seed);
    }
    cfg.validate()
}

fn out_dir(common: &Common, cfg: Option<&ExperimentConfig>) -> Result<PathBuf> {
    let dir = common
        .out_dir
        .clone()
        .or_else(|| cfg.and_then(|c| c.out_dir.clone()))
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("impactlab-out"));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn apply_model_flags(cfg: &mut ExperimentConfig, f: &ModelFlags) -> Result<()> {
    if let Some(n) = f.n {
        cfg.n = n;
    }
    if f.burn_in.is_some() {
        cfg.burn_in = f.burn_in;
    }
    if let Some(g) = f.generator {
        let gamma = f.gamma.unwrap_or(0.5);
        cfg.generator = match g {
            GeneratorArg::Iid => GeneratorSpec::Iid { p_buy: 0.5 },
            GeneratorArg::Clipped => GeneratorSpec::ClippedFractional {
                gamma,
                shape: LatentShape::default(),
            },
            GeneratorArg::Metaorder => GeneratorSpec::Metaorder {
                lengths: MetaorderLengths::Pareto {
                    alpha: 1.0 + gamma,
                    sampling: LengthSampling::default(),
                },
            },
            GeneratorArg::Markov => GeneratorSpec::Markov { rho: 0.5 },
        };
    } else if let Some(gamma) = f.gamma {
        match &mut cfg.generator {
            GeneratorSpec::ClippedFractional { gamma: g, .. } => *g = gamma,
            GeneratorSpec::Metaorder {
                lengths: MetaorderLengths::Pareto { alpha, .. },
            } => *alpha = 1.0 + gamma,
            _ => {
                return Err(Error::Config(
                    "--gamma applies to the clipped or metaorder generators".into(),
                ))
            }
        }
    }
    if let Some(m) = f.model {
        cfg.model = match m {
            ModelArg::Kyle => ModelSpec::Kyle,
            ModelArg::Propagator => ModelSpec::Propagator,
            ModelArg::Surprise => match &cfg.model {
                ModelSpec::Surprise { .. } => cfg.model.clone(),
                _ => ModelSpec::Surprise {
                    predictor: PredictorSpec::LevinsonDurbin { order: 8 },
                },
            },
        };
    }
    if let Some(l) = f.lambda {
        cfg.impact.lambda = l;
    }
    if let Some(p) = f.psi {
        cfg.impact.psi = p;
    }
    if let Some(beta) = f.beta {
        cfg.impact.kernel = Kernel::power_law(beta, 1.0, 0.0)?;
    }
    if let Some(s) = f.noise {
        cfg.impact.noise_sigma = s;
    }
    if let Some(v) = f.volume {
        cfg.volumes = VolumeSpec::Constant { value: v };
    }
    Ok(())
}

#[derive(Serialize)]
struct Provenance<'a> {
    artifact: &'static str,
    version: &'static str,
    config_hash: String,
    config_name: &'a str,
}

fn provenance(cfg: &ExperimentConfig) -> Result<Provenance<'_>> {
    Ok(Provenance {
        artifact: "impactlab",
        version: VERSION,
        config_hash: io::config_hash(cfg)?,
        config_name: &cfg.name,
    })
}

#[derive(Serialize)]
struct SimulateRecord<'a> {
    provenance: Provenance<'a>,
    config: &'a ExperimentConfig,
    runs: Vec<SimRun>,
}

#[derive(Serialize)]
struct SimRun {
    seed: u64,
    tape: String,
    trades: usize,
    burn_in_discarded: usize,
}

fn tape_name(seed: u64) -> String {
    format!("tape_seed{seed}.csv")
}

fn cmd_simulate(common: &Common, flags: &ModelFlags) -> Result<u8> {
    let mut cfg = load_config(common, flags.preset)?.unwrap_or_else(ExperimentConfig::paper_suite);
    apply_model_flags(&mut cfg, flags)?;
    finish_config(&mut cfg, common)?;
    let dir = out_dir(common, Some(&cfg))?;
    let mut runs = Vec::new();
    for seed in cfg.seeds.expand() {
        let sim = simulate(&cfg, seed)?;
        let name = tape_name(seed);
        io::write_tape(&sim.tape, &dir.join(&name))?;
        println!(
            "seed {seed}: {} trades -> {}",
            sim.tape.len(),
            dir.join(&name).display()
        );
        runs.push(SimRun {
            seed,
            tape: name,
            trades: sim.tape.len(),
            burn_in_discarded: sim.burn_in,
        });
    }
    let record = SimulateRecord {
        provenance: provenance(&cfg)?,
        config: &cfg,
        runs,
    };
    io::write_json(&dir.join("simulate.json"), &record)?;
    Ok(0)
}

#[derive(Serialize, Default)]
struct FitsRecord {
    gamma: Option<PowerLawFit>,
    beta: Option<PowerLawFit>,
    psi: Option<PowerLawFit>,
    inversion_residual: Option<f64>,
    inversion_condition: Option<f64>,
    diffusion_flags: Vec<String>,
    errors: BTreeMap<String, String>,
}

/// Writes every available curve of a measurement into `dir` and returns the
/// fits record; failed curves are listed under `errors`.
fn emit_measurement(m: &Measurement, dir: &Path) -> Result<FitsRecord> {
    let mut rec = FitsRecord {
        gamma: m.fits.gamma,
        beta: m.fits.beta,
        psi: m.fits.psi,
        inversion_residual: m.fits.inversion_residual,
        inversion_condition: m.fits.inversion_condition,
        errors: m.fits.errors.clone(),
        ..Default::default()
    };
    let curves: [(&str, &impactlab::Result<LagCurve>); 4] = [
        ("response", &m.response),
        ("sign_autocorr", &m.sign_autocorr),
        ("diffusivity", &m.diffusivity),
        ("rho", &m.rho),
    ];
    for (name, c) in curves {
        match c {
            Ok(c) => io::write_curve(c, &dir.join(format!("{name}.csv")))?,
            Err(e) => {
                rec.errors.insert(name.into(), e.to_string());
            }
        }
    }
    match &m.conditional {
        Ok(c) => io::write_conditional(c, &dir.join("conditional_response.csv"))?,
        Err(e) => {
            rec.errors
                .insert("conditional_response".into(), e.to_string());
        }
    }
    match &m.inversion {
        Ok(inv) => io::write_atomic(&dir.join("kernel.csv"), io::kernel_to_csv(inv).as_bytes())?,
        Err(e) => {
            rec.errors.insert("kernel".into(), e.to_string());
        }
    }
    if let Ok(d) = &m.diffusivity {
        rec.diffusion_flags = diffusion_flags(d);
    }
    Ok(rec)
}

fn cmd_measure(
    common: &Common,
    tape_path: &Path,
    scale: Option<ImpactScale>,
    max_lag: Option<usize>,
) -> Result<u8> {
    let cfg = load_config(common, None)?;
    let mut spec = cfg
        .as_ref()
        .map(|c| c.estimators.clone())
        .unwrap_or_default();
    if let Some(l) = max_lag {
        spec.response_max_lag = l;
        spec.autocorr_max_lag = l;
        spec.kernel_len = spec.kernel_len.min(l);
        spec.kernel_fit_range.1 = spec.kernel_fit_range.1.min(spec.kernel_len as f64);
    }
    let tape = io::read_tape(tape_path)?;
    tape.require_prices("cli_io")?;
    let dir = out_dir(common, cfg.as_ref())?;
    let m = measure(&tape, &spec, scale);
    let rec = emit_measurement(&m, &dir)?;
    io::write_json(&dir.join("fits.json"), &rec)?;
    for (k, v) in &rec.errors {
        eprintln!("impactlab: {k}: {v}");
    }
    for f in &rec.diffusion_flags {
        println!("flag: {f}");
    }
    println!("curves written to {}", dir.display());
    Ok(m.failure_code().map(|c| c as u8).unwrap_or(0))
}

fn grid_of(c: &LagCurve) -> String {
    match (c.lags.first(), c.lags.last()) {
        (Some(a), Some(b)) => format!("{} lags {a}..={b}", c.len()),
        _ => "empty grid".into(),
    }
}

fn cmd_invert(
    common: &Common,
    r_path: &Path,
    c_path: &Path,
    kernel_len: usize,
    (lambda, psi, v): (f64, f64, f64),
    opts: InversionOptions,
) -> Result<u8> {
    let r = io::read_curve(r_path, Some(CurveRole::Response))?;
    let c = io::read_curve(c_path, Some(CurveRole::SignAutocorr))?;
    let rows = opts.rows.unwrap_or(kernel_len);
    let need_c = kernel_len.max(rows.saturating_sub(1));
    if r.dense(rows).is_err() || c.dense(need_c).is_err() {
        return Err(Error::Input {
            module: "cli_io",
            message: format!(
                "incompatible lag grids: response {} ({}) needs 1..={rows}, autocorrelation {} ({}) needs 1..={need_c}",
                r_path.display(),
                grid_of(&r),
                c_path.display(),
                grid_of(&c)
            ),
        });
    }
    let inv = invert_response(&r, &c, lambda, psi, v, kernel_len, opts)?;
    let dir = out_dir(common, None)?;
    io::write_atomic(&dir.join("kernel.csv"), io::kernel_to_csv(&inv).as_bytes())?;
    #[derive(Serialize)]
    struct InvertRecord<'a> {
        residual_norm: f64,
        condition: f64,
        ill_conditioned: bool,
        rows: usize,
        ridge: f64,
        c0: f64,
        notes: &'a [String],
    }
    io::write_json(
        &dir.join("invert.json"),
        &InvertRecord {
            residual_norm: inv.residual_norm,
            condition: inv.condition,
            ill_conditioned: inv.ill_conditioned,
            rows: inv.rows,
            ridge: inv.ridge,
            c0: opts.c0,
            notes: &inv.notes,
        },
    )?;
    println!(
        "kernel of length {kernel_len}: residual {:.3e}, condition {:.3e}",
        inv.residual_norm, inv.condition
    );
    for n in &inv.notes {
        println!("note: {n}");
    }
    Ok(0)
}

fn cmd_manip(common: &Common, spec: &ManipSpec) -> Result<u8> {
    if spec.budget == 0 {
        return Err(Error::Config("budget must be positive".into()));
    }
    let cells = frontier(spec)?;
    let dir = out_dir(common, None)?;
    io::write_atomic(
        &dir.join("frontier.csv"),
        io::frontier_to_csv(&cells).as_bytes(),
    )?;
    for c in &cells {
        println!(
            "beta {:<5} psi {:<5} min cost {:>10.6}  {}",
            c.beta,
            c.psi,
            c.min_cost,
            c.argmin.encode()
        );
    }
    if spec.budget != DEFAULT_BUDGET {
        println!("search budget {}", spec.budget);
    }
    Ok(0)
}

#[derive(Serialize)]
struct CriterionRow {
    id: u32,
    name: String,
    passed: bool,
    summary: String,
    metrics: BTreeMap<String, f64>,
}

impl From<&CriterionResult> for CriterionRow {
    fn from(c: &CriterionResult) -> Self {
        Self {
            id: c.id,
            name: c.name.clone(),
            passed: c.passed,
            summary: c.summary.clone(),
            metrics: c.metrics.clone(),
        }
    }
}

#[derive(Serialize)]
struct Pooled {
    mean: f64,
    sd: f64,
    seeds: usize,
}

fn pooled(xs: &[f64]) -> Option<Pooled> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some(Pooled {
        mean,
        sd,
        seeds: xs.len(),
    })
}

#[derive(Serialize)]
struct SeedReport {
    seed: u64,
    directory: String,
    fits: FitsRecord,
}

#[derive(Serialize)]
struct ReportBundle<'a> {
    provenance: Provenance<'a>,
    seeds: Vec<SeedReport>,
    pooled: BTreeMap<&'static str, Pooled>,
    frontier: Option<String>,
    criteria: Vec<CriterionRow>,
    all_criteria_passed: bool,
    stage_errors: Vec<String>,
}

fn cmd_report(common: &Common, cfg: &ExperimentConfig) -> Result<u8> {
    let dir = out_dir(common, Some(cfg))?;
    let scale = ImpactScale {
        lambda: cfg.impact.lambda,
        psi: cfg.impact.psi,
    };
    let mut seeds = Vec::new();
    let mut stage_errors = Vec::new();
    let mut worst_stage = 0u8;
    for seed in cfg.seeds.expand() {
        let sub = dir.join(format!("seed{seed}"));
        fs::create_dir_all(&sub)?;
        let sim = match simulate(cfg, seed) {
            Ok(s) => s,
            Err(e) => {
                worst_stage = worst_stage.max(e.exit_code() as u8);
                stage_errors.push(format!("seed {seed}: simulate: {e}"));
                continue;
            }
        };
        io::write_tape(&sim.tape, &sub.join(tape_name(seed)))?;
        let m = measure_with_scale(&sim.tape, &cfg.estimators, scale, &cfg.model);
        if let Some(code) = m.failure_code() {
            worst_stage = worst_stage.max(code as u8);
        }
        let fits = emit_measurement(&m, &sub)?;
        for (k, v) in &fits.errors {
            stage_errors.push(format!("seed {seed}: {k}: {v}"));
        }
        for f in &fits.diffusion_flags {
            println!("seed {seed}: flag: {f}");
        }
        seeds.push(SeedReport {
            seed,
            directory: format!("seed{seed}"),
            fits,
        });
    }
    let mut pooled_fits = BTreeMap::new();
    let collect = |f: fn(&FitsRecord) -> Option<f64>| -> Vec<f64> {
        seeds.iter().filter_map(|s| f(&s.fits)).collect()
    };
    for (name, xs) in [
        ("gamma", collect(|f| f.gamma.as_ref().map(|x| x.exponent))),
        ("beta", collect(|f| f.beta.as_ref().map(|x| x.exponent))),
        ("psi", collect(|f| f.psi.as_ref().map(|x| x.exponent))),
    ] {
        if let Some(p) = pooled(&xs) {
            pooled_fits.insert(name, p);
        }
    }

    let frontier_file = match &cfg.manipulation {
        Some(spec) => match frontier(spec) {
            Ok(cells) => {
                io::write_atomic(
                    &dir.join("frontier.csv"),
                    io::frontier_to_csv(&cells).as_bytes(),
                )?;
                Some("frontier.csv".to_string())
            }
            Err(e) => {
                worst_stage = worst_stage.max(e.exit_code() as u8);
                stage_errors.push(format!("manipulation: {e}"));
                None
            }
        },
        None => None,
    };

    let ids: Vec<u32> = cfg.criteria.clone().unwrap_or_else(|| (1..=13).collect());
    let base_seed = cfg.seeds.expand().first().copied().unwrap_or(1);
    let scratch = dir.join("acceptance_scratch");
    fs::create_dir_all(&scratch)?;
    let results = run_criteria(&ids, base_seed, &scratch);
    for r in &results {
        println!(
            "criterion {:>2} {:<36} {}  {}  [{:.1}s]",
            r.id,
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.summary,
            r.seconds
        );
    }
    let all_passed = results.iter().all(|r| r.passed);
    let bundle = ReportBundle {
        provenance: provenance(cfg)?,
        seeds,
        pooled: pooled_fits,
        frontier: frontier_file,
        criteria: results.iter().map(CriterionRow::from).collect(),
        all_criteria_passed: all_passed,
        stage_errors,
    };
    io::write_json(&dir.join("report.json"), &bundle)?;
    let table: String = std::iter::once("id,name,passed\n".to_string())
        .chain(
            results
                .iter()
                .map(|r| format!("{},{},{}\n", r.id, r.name, r.passed)),
        )
        .collect();
    io::write_atomic(&dir.join("criteria.csv"), table.as_bytes())?;
    println!("report written to {}", dir.join("report.json").display());
    for e in &bundle.stage_errors {
        eprintln!("impactlab: {e}");
    }
    if worst_stage != 0 {
        Ok(worst_stage)
    } else if all_passed {
        Ok(0)
    } else {
        Ok(ACCEPTANCE_FAILED)
    }
}

/// Inverts in price units only when the model has a kernel to recover.
fn measure_with_scale(
    tape: &TradeTape,
    spec: &EstimatorSpec,
    scale: ImpactScale,
    model: &ModelSpec,
) -> Measurement {
    let scale = match model {
        ModelSpec::Propagator | ModelSpec::Kyle if scale.lambda > 0.0 => Some(scale),
        _ => None,
    };
    measure(tape, spec, scale)
}
