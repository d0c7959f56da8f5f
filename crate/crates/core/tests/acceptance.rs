//! Acceptance suite. Runs without the libtest harness so that every criterion
//! prints one PASS/FAIL line. Pass criterion ids as arguments to run a subset:
//! `cargo test -p impactlab --test acceptance -- 4 5 6`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use impactlab::estimators::{sign_autocorr, LagCurve};
use impactlab::impact::Kernel;
use impactlab::manipulation::{strategy_cost, OwnImpact, Strategy, Trade, DEFAULT_BUDGET};
use impactlab::suite::{self, CRITERIA};
use impactlab::TradeTape;

const SEED: u64 = 1;

type Outcome = Result<String, String>;

struct Ctx {
    critical: OnceLock<TradeTape>,
    dir: tempfile::TempDir,
}

impl Ctx {
    fn critical(&self) -> &TradeTape {
        self.critical
            .get_or_init(|| suite::propagator_tape(0.25, SEED).expect("critical tape"))
    }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c1(_: &Ctx) -> Outcome {
    let m = suite::kyle_flatness(SEED).map_err(|e| e.to_string())?;
    let lambda = 0.1;
    let c = &m.curve;
    let worst = (0..c.len())
        .map(|i| (c.values[i] - lambda).abs() / c.se[i])
        .fold(0.0, f64::max);
    check(
        c.len() == 64 && worst <= 3.0,
        format!("max |R(l) - 0.1|/SE over l = 1..64 is {worst:.2}, band 3"),
    )
}

fn c2(_: &Ctx) -> Outcome {
    let m = suite::rho_checks(SEED).map_err(|e| e.to_string())?;
    let target = 1.0 / (1.0f64 + 1.0).sqrt();
    check(
        (m.noiseless - 1.0).abs() <= 1e-9 && (m.noisy - target).abs() <= 0.02,
        format!(
            "noiseless rho = {:.12}; noisy rho = {:.4} vs {target:.4} +/- 0.02 (SE {:.4})",
            m.noiseless, m.noisy, m.noisy_se
        ),
    )
}

fn c3(_: &Ctx) -> Outcome {
    let seeds: Vec<u64> = (SEED..SEED + 5).collect();
    let m = suite::long_memory(&seeds).map_err(|e| e.to_string())?;
    let ok = m.clipped.len() == 5
        && m.metaorder.len() == 5
        && m.clipped
            .iter()
            .chain(&m.metaorder)
            .all(|g| (0.4..=0.6).contains(g));
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|g| format!("{g:.3}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    check(
        ok,
        format!(
            "gamma-hat clipped [{}], metaorder [{}], band [0.4, 0.6]",
            fmt(&m.clipped),
            fmt(&m.metaorder)
        ),
    )
}

fn c4(ctx: &Ctx) -> Outcome {
    let m = suite::martingale(ctx.critical(), SEED).map_err(|e| e.to_string())?;
    let lo = m.ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = m.ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let band = 3.0 / (m.n_returns as f64).sqrt();
    let acf = m.return_acf.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    check(
        m.ratios.len() == 256
            && m.return_acf.len() == 32
            && lo >= 0.7
            && hi <= 1.4
            && acf <= band
            && m.permanent_ratio > 2.0
            && m.mean_reverting_ratio < 0.7,
        format!(
            "D(l)/D(1) in [{lo:.3}, {hi:.3}]; max |return acf| {acf:.2e} vs {band:.2e}; \
             beta=0 D(256)/D(1) = {:.2}; beta=0.45 D(256)/D(1) = {:.3}",
            m.permanent_ratio, m.mean_reverting_ratio
        ),
    )
}

/// Direct-sum response prediction with unit scale; `c0` is the centered
/// lag-zero sign covariance.
fn predicted_response(
    g: impl Fn(usize) -> f64,
    c: &LagCurve,
    c0: f64,
    l: usize,
    j_tail: usize,
) -> f64 {
    let mut r = c0 * g(l);
    for j in 1..l {
        r += g(l - j) * c.values[j - 1];
    }
    for j in 1..=j_tail {
        r += (g(l + j) - g(j)) * c.values[j - 1];
    }
    r
}

fn c5(ctx: &Ctx) -> Outcome {
    let tape = ctx.critical();
    let m = suite::decomposition(tape).map_err(|e| e.to_string())?;
    let j_tail = suite::DECOMPOSITION_J_TAIL;
    let c = sign_autocorr(&tape.signs, j_tail).map_err(|e| e.to_string())?;
    let mean =
        tape.signs.as_slice().iter().map(|&e| e as f64).sum::<f64>() / tape.signs.len() as f64;
    let c0 = 1.0 - mean * mean;
    let g = |l: usize| (l as f64).powf(-0.25);
    let mut formula_err = 0.0f64;
    for l in [1, 2, 8, 64, 128] {
        let want = predicted_response(g, &c, c0, l, j_tail);
        formula_err = formula_err.max((m.predicted.values[l - 1] - want).abs() / want.abs());
    }
    let z = (0..128)
        .map(|i| (m.measured.values[i] - m.predicted.values[i]).abs() / m.measured.se[i])
        .fold(0.0, f64::max);
    let ratio = m.r512 / m.r8;
    check(
        formula_err <= 1e-9 && z <= 3.0 && (0.5..=2.0).contains(&ratio),
        format!(
            "max |measured - predicted|/SE over l <= 128 is {z:.2}, band 3; \
             R(512)/R(8) = {ratio:.3}; prediction vs direct sum {formula_err:.1e}"
        ),
    )
}

fn c6(ctx: &Ctx) -> Outcome {
    let m = suite::inversion(ctx.critical()).map_err(|e| e.to_string())?;
    check(
        m.exact_max_rel_err <= 1e-6 && (0.2..=0.3).contains(&m.beta_hat),
        format!(
            "exact round trip max rel err {:.2e}, band 1e-6; beta-hat {:.4}, band [0.2, 0.3]; cond {:.1e}",
            m.exact_max_rel_err, m.beta_hat, m.condition
        ),
    )
}

fn c7(_: &Ctx) -> Outcome {
    let m = suite::identification(SEED).map_err(|e| e.to_string())?;
    let mut want = vec![0.0; 8];
    want[0] = 0.5;
    let coef_err = m
        .ar1_coefficients
        .iter()
        .zip(&want)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    check(
        m.max_rel_diff <= 1e-9 && m.ar1_coefficients.len() == 8 && coef_err <= 1e-12,
        format!(
            "surprise vs propagator returns, max rel diff {:.2e}, band 1e-9; \
             Levinson-Durbin on 0.5^l off by {coef_err:.1e}",
            m.max_rel_diff
        ),
    )
}

fn c8(_: &Ctx) -> Outcome {
    let m = suite::asymmetry(SEED).map_err(|e| e.to_string())?;
    let lam = 1.0;
    let exact = !m.noiseless_confirming.is_empty()
        && !m.noiseless_contradicting.is_empty()
        && m.noiseless_confirming.iter().all(|&x| x == 0.5 * lam)
        && m.noiseless_contradicting.iter().all(|&x| x == 1.5 * lam);
    let (mc, sc) = m.noisy_confirming;
    let (mx, sx) = m.noisy_contradicting;
    let gap = (mx - mc) / (sc * sc + sx * sx).sqrt();
    check(
        exact && gap >= 3.0,
        format!(
            "noiseless impacts exactly 0.5 / 1.5 lambda: {exact}; noisy {mc:.4} vs {mx:.4}, gap {gap:.1} SE"
        ),
    )
}

fn c9(_: &Ctx) -> Outcome {
    let m = suite::concavity(SEED).map_err(|e| e.to_string())?;
    check(
        (0.45..=0.55).contains(&m.psi_hat) && m.barra_r2 > 0.9,
        format!(
            "psi-hat {:.4} on {} bins, band [0.45, 0.55]; BARRA r2 {:.4} (A = {:.3})",
            m.psi_hat,
            m.curve.len(),
            m.barra_r2,
            m.barra_a
        ),
    )
}

fn c10(_: &Ctx) -> Outcome {
    let m = suite::spread_duality(SEED).map_err(|e| e.to_string())?;
    let exact = m
        .lambdas
        .iter()
        .zip(&m.spreads)
        .all(|(l, s)| *s == 2.0 * l * m.volume.sqrt())
        && m.spread_errors.iter().all(|&e| e == 0.0);
    let ratios: Vec<f64> = m
        .sigma1
        .iter()
        .zip(&m.spreads)
        .map(|(s, q)| s / q)
        .collect();
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let dev = ratios
        .iter()
        .map(|r| (r / mean - 1.0).abs())
        .fold(0.0, f64::max);
    check(
        exact && dev <= 0.05,
        format!(
            "S = 2 lambda sqrt(v) exactly: {exact}; sigma1/S = {mean:.4}, max deviation {dev:.1e}"
        ),
    )
}

fn c11(_: &Ctx) -> Outcome {
    let m = suite::frontier().map_err(|e| e.to_string())?;
    let lam = m.lambda;
    // Nine unit buys then one sale of 9 under a permanent square-root impact.
    let nine: Vec<Trade> = (1..=9)
        .map(|s| Trade { slot: s, q: 1.0 })
        .chain(std::iter::once(Trade { slot: 10, q: -9.0 }))
        .collect();
    let nine = Strategy::new(nine, 10).map_err(|e| e.to_string())?;
    let nine_cost = strategy_cost(&nine, &Kernel::permanent(1.0), lam, 0.5, OwnImpact::Full)
        .map_err(|e| e.to_string())?
        .expected_cost;
    let hand = (1..=9).map(|k| k as f64).sum::<f64>() - 9.0 * (9.0 - 3.0);
    let lin = m.cell_min(0.0, 1.0);
    let concave = m.cell_min(0.0, 0.5);
    let crit = m.cell_min(0.5, 0.5);
    let over = m.cell_min(0.6, 0.6);
    let budget_ok = m
        .runs
        .iter()
        .all(|r| r.candidates <= u128::from(DEFAULT_BUDGET));
    let refused = m
        .refused_size
        .is_some_and(|s| s > u128::from(DEFAULT_BUDGET));
    let full8 = m
        .runs
        .iter()
        .find(|r| r.beta == 0.0 && r.psi == 0.5 && r.max_len == 8)
        .map(|r| r.min_cost)
        .unwrap_or(f64::NAN);
    check(
        (nine_cost - hand).abs() < 1e-12
            && lin >= 0.0
            && concave <= -9.0 * lam
            && crit >= 0.0
            && over >= 0.0
            && budget_ok
            && refused,
        format!(
            "min cost (beta,psi)=(0,1) {lin}, (0,0.5) {concave} (full grid len 8: {full8:.3}), \
             (0.5,0.5) {crit}, (0.6,0.6) {over}; full grid len 10 refused at {:?} candidates",
            m.refused_size
        ),
    )
}

fn c12(_: &Ctx) -> Outcome {
    let m = suite::collapse().map_err(|e| e.to_string())?;
    check(
        m.metric_at_0_3 < 1e-9 && m.metric_at_0 > 0.5,
        format!(
            "collapse metric {:.2e} at delta 0.3, {:.3} at delta 0",
            m.metric_at_0_3, m.metric_at_0
        ),
    )
}

fn c13(ctx: &Ctx) -> Outcome {
    let m = suite::determinism(ctx.dir.path()).map_err(|e| e.to_string())?;
    check(
        m.simulate_bytes_identical
            && m.tape_round_trip
            && m.curve_round_trip
            && m.config_round_trip
            && m.frontier_round_trip,
        format!("{m:?}"),
    )
}

fn main() -> ExitCode {
    let wanted: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let checks: [fn(&Ctx) -> Outcome; 13] =
        [c1, c2, c3, c4, c5, c6, c7, c8, c9, c10, c11, c12, c13];
    let ctx = Ctx {
        critical: OnceLock::new(),
        dir: tempfile::tempdir().expect("temp dir"),
    };
    let mut failed = 0;
    for ((id, name), f) in CRITERIA.iter().zip(checks) {
        if !wanted.is_empty() && !wanted.contains(id) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| f(&ctx)))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {id:>2} {name:<36} {tag}  {detail}  [{secs:.1}s]");
    }
    if failed > 0 {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    } else {
        println!("acceptance: all selected criteria passed");
        ExitCode::SUCCESS
    }
}
