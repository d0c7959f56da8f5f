//! FFT helpers and seeded random streams shared by the generators and estimators.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// Independent random streams derived from a single user seed.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Stream {
    Signs = 1,
    Latent = 2,
    Volumes = 3,
    Noise = 4,
}

pub(crate) fn rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Below this many multiply-adds the direct loops are used; they are exact
/// and cheaper than planning an FFT.
const DIRECT_WORK_LIMIT: usize = 1 << 22;

fn fft_len(min: usize) -> usize {
    min.next_power_of_two()
}

/// `S(ℓ) = Σ_{n=0}^{N-1-ℓ} x_n x_{n+ℓ}` for `ℓ = 0..=max_lag` (lags beyond N-1 give 0).
pub fn lagged_product_sums(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    let lags = max_lag.min(n.saturating_sub(1));
    let mut out = vec![0.0; max_lag + 1];
    if n == 0 {
        return out;
    }
    if n.saturating_mul(lags + 1) <= DIRECT_WORK_LIMIT {
        for (l, slot) in out.iter_mut().enumerate().take(lags + 1) {
            *slot = x[..n - l].iter().zip(&x[l..]).map(|(a, b)| a * b).sum();
        }
        return out;
    }
    let len = fft_len(n + lags + 1);
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let mut buf: Vec<Complex64> = x
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(len)
        .collect();
    fwd.process(&mut buf);
    for z in buf.iter_mut() {
        *z = Complex64::new(z.norm_sqr(), 0.0);
    }
    inv.process(&mut buf);
    let scale = 1.0 / len as f64;
    for l in 0..=lags {
        out[l] = buf[l].re * scale;
    }
    out
}

/// Causal convolution `y_k = Σ_{m=0}^{k} g_{k-m} x_m` for `k = 0..x.len()`.
///
/// `g` must have at least `x.len()` entries.
pub fn causal_convolution(x: &[f64], g: &[f64]) -> Vec<f64> {
    let n = x.len();
    assert!(g.len() >= n, "kernel shorter than signal");
    if n == 0 {
        return Vec::new();
    }
    if n.saturating_mul(n) / 2 <= DIRECT_WORK_LIMIT {
        return (0..n)
            .map(|k| (0..=k).map(|m| g[k - m] * x[m]).sum())
            .collect();
    }
    let len = fft_len(2 * n);
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let pad = |v: &[f64]| -> Vec<Complex64> {
        v.iter()
            .take(n)
            .map(|&a| Complex64::new(a, 0.0))
            .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
            .take(len)
            .collect()
    };
    let mut a = pad(x);
    let mut b = pad(g);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (u, v) in a.iter_mut().zip(&b) {
        *u *= v;
    }
    inv.process(&mut a);
    let scale = 1.0 / len as f64;
    a[..n].iter().map(|z| z.re * scale).collect()
}

/// Ordinary least squares line `y = a + b x`; returns `(a, b, r²)`.
pub(crate) fn ols_line(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let r2 = if syy > 0.0 {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    (intercept, slope, r2)
}
