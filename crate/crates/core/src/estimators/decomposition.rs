use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::impact::Kernel;
use crate::tape::pow_psi;

use super::curve::{CurveRole, LagCurve};

const MODULE: &str = "estimators";

/// Default cut of the infinite past-flow sum.
pub const DEFAULT_J_TAIL: usize = 4096;
/// Condition numbers above this are flagged.
pub const CONDITION_LIMIT: f64 = 1e10;

fn impact_scale(lambda: f64, psi: f64, v: f64) -> Result<f64> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::param(
            MODULE,
            format!("lambda = {lambda} must be > 0"),
        ));
    }
    if !(psi.is_finite() && psi > 0.0 && psi <= 1.0) {
        return Err(Error::param(
            MODULE,
            format!("psi = {psi} must lie in (0, 1]"),
        ));
    }
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::param(MODULE, format!("volume {v} must be > 0")));
    }
    Ok(lambda * pow_psi(v, psi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponsePrediction {
    pub curve: LagCurve,
    pub j_tail: usize,
    /// Per-lag bound on the dropped part of the past-flow sum.
    pub truncation_bound: Vec<f64>,
}

/// Response implied by a kernel and a sign autocorrelation:
///
/// `R(ℓ) = λv^ψ [G(ℓ) + Σ_{0<j<ℓ} G(ℓ-j) C(j) + Σ_{j=1}^{J} (G(ℓ+j) - G(j)) C(j)]`.
///
/// `c` must cover lags `1..=max(max_lag - 1, j_tail)`. The lag-zero sign
/// covariance is taken as 1; see [`predict_response_centered`] for sample
/// curves.
///
/// The truncation bound is `λv^ψ · max|C| · Σ_{k=1}^{ℓ} |G(J+k) - G(∞)|`,
/// with `max|C|` taken over the last eighth of the window. It telescopes the
/// dropped tail and holds for monotone kernels with `|C|` decreasing beyond `J`.
pub fn predict_response(
    kernel: &Kernel,
    c: &LagCurve,
    lambda: f64,
    psi: f64,
    v: f64,
    max_lag: usize,
    j_tail: usize,
) -> Result<ResponsePrediction> {
    predict_response_centered(kernel, c, 1.0, lambda, psi, v, max_lag, j_tail)
}

/// Same as [`predict_response`] with lag-zero covariance `c0` weighting the
/// own-trade term `G(ℓ)`. A centered sample `Ĉ` pairs with `c0 = 1 - ε̄²`
/// (see [`sign_variance`](super::sign_variance)), which keeps the plug-in
/// prediction consistent with the centered response estimator.
#[allow(clippy::too_many_arguments)]
pub fn predict_response_centered(
    kernel: &Kernel,
    c: &LagCurve,
    c0: f64,
    lambda: f64,
    psi: f64,
    v: f64,
    max_lag: usize,
    j_tail: usize,
) -> Result<ResponsePrediction> {
    kernel.validate()?;
    check_c0(c0)?;
    let scale = impact_scale(lambda, psi, v)?;
    if max_lag == 0 {
        return Err(Error::param(MODULE, "max_lag must be >= 1"));
    }
    if j_tail == 0 {
        return Err(Error::param(MODULE, "j_tail must be >= 1"));
    }
    let need = (max_lag - 1).max(j_tail);
    let cv = c.dense(need)?;
    let g = kernel.values(max_lag + j_tail);
    let gv = |l: usize| g[l - 1];
    let values: Vec<f64> = (1..=max_lag)
        .into_par_iter()
        .map(|l| {
            let mut s = c0 * gv(l);
            for j in 1..l {
                s += gv(l - j) * cv[j - 1];
            }
            for j in 1..=j_tail {
                s += (gv(l + j) - gv(j)) * cv[j - 1];
            }
            scale * s
        })
        .collect();
    let lo = j_tail - j_tail / 8;
    let c_tail = cv[lo.max(1) - 1..j_tail]
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()));
    let g_inf = kernel.plateau();
    let truncation_bound = (1..=max_lag)
        .map(|l| {
            let s: f64 = (1..=l)
                .map(|k| (kernel.value(j_tail + k) - g_inf).abs())
                .sum();
            scale * c_tail * s
        })
        .collect();
    let count = c.counts.first().copied().unwrap_or(1);
    let mut curve = LagCurve::new(
        CurveRole::Response,
        (1..=max_lag).collect(),
        values,
        vec![count; max_lag],
        vec![0.0; max_lag],
    )?;
    curve.notes.push(format!("predicted, j_tail = {j_tail}"));
    Ok(ResponsePrediction {
        curve,
        j_tail,
        truncation_bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InversionOptions {
    /// Number of equations `ℓ = 1..=rows`; defaults to the kernel length.
    pub rows: Option<usize>,
    /// Tikhonov weight; 0 disables regularization.
    pub ridge: f64,
    /// Lag-zero sign covariance: 1 for exact `C`, `1 - ε̄²` for a centered
    /// sample estimate.
    pub c0: f64,
}

impl Default for InversionOptions {
    fn default() -> Self {
        Self {
            rows: None,
            ridge: 0.0,
            c0: 1.0,
        }
    }
}

fn check_c0(c0: f64) -> Result<()> {
    if !(c0.is_finite() && c0 > 0.0 && c0 <= 1.0) {
        return Err(Error::param(
            MODULE,
            format!("lag-zero covariance {c0} outside (0, 1]"),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelInversion {
    pub kernel: Kernel,
    /// Standard errors of `G(1..=L)` propagated linearly from the SE of `R`.
    pub se_proxy: Vec<f64>,
    pub residual_norm: f64,
    pub condition: f64,
    pub ill_conditioned: bool,
    pub ridge: f64,
    pub rows: usize,
    pub notes: Vec<String>,
}

/// Least-squares `G(1..=L)` from measured `R` and `C`, with `G` held at
/// `G(L)` beyond `L`. Under that extrapolation every past-flow term with
/// `j ≥ L` cancels, so `C` is only needed up to `max(L, rows - 1)`.
pub fn invert_response(
    r: &LagCurve,
    c: &LagCurve,
    lambda: f64,
    psi: f64,
    v: f64,
    kernel_len: usize,
    opts: InversionOptions,
) -> Result<KernelInversion> {
    let scale = impact_scale(lambda, psi, v)?;
    let l_len = kernel_len;
    if l_len == 0 {
        return Err(Error::param(MODULE, "kernel length must be >= 1"));
    }
    let rows = opts.rows.unwrap_or(l_len);
    if rows < l_len {
        return Err(Error::param(
            MODULE,
            format!("{rows} equations cannot determine {l_len} kernel values"),
        ));
    }
    if !(opts.ridge.is_finite() && opts.ridge >= 0.0) {
        return Err(Error::param(MODULE, "ridge must be >= 0"));
    }
    check_c0(opts.c0)?;
    let rv = r.dense(rows)?;
    let r_se: Vec<f64> = r.se[..rows].to_vec();
    let cv = c.dense(l_len.max(rows - 1))?;
    let col = |k: usize| k.min(l_len) - 1;

    let mut a = DMatrix::<f64>::zeros(rows, l_len);
    for i in 0..rows {
        let l = i + 1;
        a[(i, col(l))] += opts.c0;
        for j in 1..l {
            a[(i, col(l - j))] += cv[j - 1];
        }
        for j in 1..l_len {
            a[(i, col(l + j))] += cv[j - 1];
            a[(i, col(j))] -= cv[j - 1];
        }
    }
    let b = DVector::from_iterator(rows, rv.iter().map(|x| x / scale));
    let b_se: Vec<f64> = r_se.iter().map(|s| s / scale).collect();
    let mut notes = Vec::new();

    let diagonal = rows == l_len
        && (0..rows).all(|i| (0..l_len).all(|j| i == j || a[(i, j)] == 0.0))
        && (0..rows).all(|i| a[(i, i)] == opts.c0);
    let (g, se_proxy, condition) = if diagonal && opts.ridge == 0.0 {
        (
            b.iter().map(|x| x / opts.c0).collect::<Vec<f64>>(),
            b_se.iter().map(|x| x / opts.c0).collect(),
            1.0,
        )
    } else {
        let svd = a.clone().svd(true, true);
        let u = svd
            .u
            .as_ref()
            .ok_or_else(|| numeric("SVD did not return U"))?;
        let vt = svd
            .v_t
            .as_ref()
            .ok_or_else(|| numeric("SVD did not return V"))?;
        let s = &svd.singular_values;
        let smax = s.iter().copied().fold(0.0f64, f64::max);
        let smin = s.iter().copied().fold(f64::INFINITY, f64::min);
        let condition = if smin > 0.0 {
            smax / smin
        } else {
            f64::INFINITY
        };
        let tol = smax * f64::EPSILON * rows.max(l_len) as f64;
        let d: Vec<f64> = s
            .iter()
            .map(|&si| {
                if opts.ridge > 0.0 {
                    si / (si * si + opts.ridge)
                } else if si > tol {
                    1.0 / si
                } else {
                    0.0
                }
            })
            .collect();
        if opts.ridge == 0.0 && d.contains(&0.0) {
            notes.push("rank-deficient system: minimum-norm solution".to_string());
        }
        // Pseudo-inverse M = V diag(d) Uᵀ.
        let mut vd = vt.transpose();
        for (k, dk) in d.iter().enumerate() {
            vd.column_mut(k).scale_mut(*dk);
        }
        let m = vd * u.transpose();
        let g = &m * &b;
        let se: Vec<f64> = (0..l_len)
            .map(|i| {
                (0..rows)
                    .map(|k| (m[(i, k)] * b_se[k]).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        (g.iter().copied().collect(), se, condition)
    };
    let gvec = DVector::from_column_slice(&g);
    let residual_norm = (&a * &gvec - &b).norm();
    let ill_conditioned = condition > CONDITION_LIMIT;
    if ill_conditioned {
        notes.push(format!(
            "condition number {condition:.3e} above {CONDITION_LIMIT:.0e}; consider a ridge penalty"
        ));
    }
    Ok(KernelInversion {
        kernel: Kernel::tabulated(g)?,
        se_proxy,
        residual_norm,
        condition,
        ill_conditioned,
        ridge: opts.ridge,
        rows,
        notes,
    })
}

fn numeric(message: &str) -> Error {
    Error::Numeric {
        module: MODULE,
        step: 0,
        message: message.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c_curve(f: impl Fn(usize) -> f64, n: usize) -> LagCurve {
        LagCurve::new(
            CurveRole::SignAutocorr,
            (1..=n).collect(),
            (1..=n).map(f).collect(),
            vec![1000; n],
            vec![0.0; n],
        )
        .unwrap()
    }

    #[test]
    fn iid_flow_response_is_the_kernel() {
        let k = Kernel::power_law(0.3, 1.0, 0.0).unwrap();
        let p = predict_response(&k, &c_curve(|_| 0.0, 64), 0.2, 0.5, 4.0, 32, 64).unwrap();
        for l in 1..=32 {
            assert!((p.curve.values[l - 1] - 0.4 * k.value(l)).abs() < 1e-14);
        }
    }

    #[test]
    fn permanent_kernel_accumulates_correlations() {
        let c = c_curve(|j| 0.5f64.powi(j as i32), 64);
        let p = predict_response(&Kernel::permanent(1.0), &c, 1.0, 1.0, 1.0, 10, 64).unwrap();
        for l in 1..=10 {
            let want = 1.0 + (1..l).map(|j| 0.5f64.powi(j as i32)).sum::<f64>();
            assert!((p.curve.values[l - 1] - want).abs() < 1e-14);
            assert_eq!(p.truncation_bound[l - 1], 0.0);
        }
    }

    #[test]
    fn horizon_insufficiency() {
        let c = c_curve(|_| 0.0, 16);
        let k = Kernel::permanent(1.0);
        assert_eq!(
            predict_response(&k, &c, 1.0, 1.0, 1.0, 8, 32)
                .unwrap_err()
                .exit_code(),
            1
        );
    }

    #[test]
    fn diagonal_inversion_is_exact() {
        let r = LagCurve::new(
            CurveRole::Response,
            (1..=8).collect(),
            vec![0.3, 0.21, 0.17, 0.15, 0.14, 0.13, 0.125, 0.12],
            vec![10; 8],
            vec![0.01; 8],
        )
        .unwrap();
        let inv = invert_response(
            &r,
            &c_curve(|_| 0.0, 8),
            0.5,
            0.5,
            4.0,
            8,
            InversionOptions::default(),
        )
        .unwrap();
        for l in 1..=8 {
            assert_eq!(inv.kernel.value(l), r.values[l - 1] / 1.0);
        }
    }

    #[test]
    fn round_trip_tabulated_kernel() {
        let l_len = 64;
        let truth =
            Kernel::tabulated((1..=l_len).map(|l| (l as f64).powf(-0.25)).collect()).unwrap();
        let c = c_curve(|j| 0.3 * (j as f64).powf(-0.5), 256);
        let pred = predict_response(&truth, &c, 0.7, 1.0, 1.0, l_len, 128).unwrap();
        let inv = invert_response(
            &pred.curve,
            &c,
            0.7,
            1.0,
            1.0,
            l_len,
            InversionOptions::default(),
        )
        .unwrap();
        assert!(!inv.ill_conditioned);
        for l in 1..=l_len {
            let want = truth.value(l);
            assert!(
                ((inv.kernel.value(l) - want) / want).abs() < 1e-9,
                "lag {l}"
            );
        }
        assert!(inv.residual_norm < 1e-10);
    }

    #[test]
    fn centered_round_trip() {
        let truth = Kernel::tabulated((1..=32).map(|l| (l as f64).powf(-0.3)).collect()).unwrap();
        let c = c_curve(|j| 0.2 * (j as f64).powf(-0.5), 64);
        let c0 = 1.0 - 0.03f64.powi(2);
        let pred = predict_response_centered(&truth, &c, c0, 1.0, 1.0, 1.0, 32, 32).unwrap();
        let base = predict_response(&truth, &c, 1.0, 1.0, 1.0, 32, 32).unwrap();
        assert!((base.curve.values[0] - pred.curve.values[0] - (1.0 - c0)).abs() < 1e-14);
        let opts = InversionOptions {
            c0,
            ..Default::default()
        };
        let inv = invert_response(&pred.curve, &c, 1.0, 1.0, 1.0, 32, opts).unwrap();
        for l in 1..=32 {
            assert!((inv.kernel.value(l) - truth.value(l)).abs() < 1e-10);
        }
        let diag =
            invert_response(&pred.curve, &c_curve(|_| 0.0, 32), 1.0, 1.0, 1.0, 32, opts).unwrap();
        assert_eq!(diag.kernel.value(1), pred.curve.values[0] / c0);
    }

    #[test]
    fn ridge_shrinks_towards_zero() {
        let truth = Kernel::tabulated(vec![1.0, 0.8, 0.7, 0.65]).unwrap();
        let c = c_curve(|j| 0.2 / j as f64, 8);
        let pred = predict_response(&truth, &c, 1.0, 1.0, 1.0, 4, 8).unwrap();
        let opts = InversionOptions {
            ridge: 10.0,
            ..Default::default()
        };
        let inv = invert_response(&pred.curve, &c, 1.0, 1.0, 1.0, 4, opts).unwrap();
        assert!(inv.kernel.value(1) < 1.0);
    }

    #[test]
    fn underdetermined_rejected() {
        let c = c_curve(|_| 0.0, 8);
        let opts = InversionOptions {
            rows: Some(2),
            ..Default::default()
        };
        assert!(invert_response(&c_curve(|_| 0.1, 8), &c, 1.0, 1.0, 1.0, 4, opts).is_err());
    }
}
