//! Numeric workhorses shared by the expert families: equispaced local linear
//! smoothing, simple exponential smoothing, and the partially penalized ridge
//! solver behind the additive model.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// Weighted linear fit of `y[window]` against its indices, evaluated at
/// `eval`. Weights are tricube in the distance from `eval`, scaled by the
/// largest distance in the window. Reproduces an exactly linear series at any
/// evaluation point, inside the window or not.
fn local_linear(y: &[f64], window: std::ops::Range<usize>, eval: f64) -> f64 {
    let mut d_max = 0.0f64;
    for i in window.clone() {
        d_max = d_max.max((i as f64 - eval).abs());
    }
    if d_max == 0.0 {
        return y[window.start];
    }
    let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in window {
        let x = i as f64 - eval;
        let u = (x.abs() / d_max).min(1.0);
        let c = 1.0 - u * u * u;
        let w = c * c * c;
        s0 += w;
        s1 += w * x;
        s2 += w * x * x;
        t0 += w * y[i];
        t1 += w * x * y[i];
    }
    let denom = s0 * s2 - s1 * s1;
    if denom.abs() < 1e-12 * s2.max(1e-300) {
        // One effective point: fall back to the weighted mean.
        return t0 / s0;
    }
    // Abscissas are centered on `eval`, so the fitted value there is the
    // intercept.
    let slope = (s0 * t1 - s1 * t0) / denom;
    (t0 - slope * s1) / s0
}

/// Loess positions `lo..hi` (may extend one step past either end of `y`) for
/// an equispaced series. `span` is the neighbour count per fit, forced odd
/// and capped at the series length. Interior fits use a symmetric window,
/// where the local linear value collapses to a fixed-kernel weighted mean;
/// boundary and exterior positions solve the full weighted regression.
fn loess_at(y: &[f64], span: usize, lo: isize, hi: isize) -> Vec<f64> {
    let n = y.len();
    assert!(n >= 1 && lo < hi);
    let mut k = span.clamp(1, n);
    if k % 2 == 0 {
        k -= 1;
    }
    let half = k / 2;
    // Symmetric tricube kernel, normalized; distances are scaled by the
    // farthest included neighbour so its weight is exactly zero.
    let mut kernel = vec![0.0; k];
    if half == 0 {
        kernel[0] = 1.0;
    } else {
        let mut sum = 0.0;
        for (j, w) in kernel.iter_mut().enumerate() {
            let u = (j as f64 - half as f64).abs() / half as f64;
            let c = 1.0 - u * u * u;
            *w = c * c * c;
            sum += *w;
        }
        for w in kernel.iter_mut() {
            *w /= sum;
        }
    }
    let mut out = Vec::with_capacity((hi - lo) as usize);
    for pos in lo..hi {
        if pos >= half as isize && pos as usize + half < n {
            let start = pos as usize - half;
            let v: f64 = kernel.iter().zip(&y[start..start + k]).map(|(w, v)| w * v).sum();
            out.push(v);
        } else {
            // Nearest k in-range points; asymmetric, so fit the full line.
            let start = (pos - half as isize).clamp(0, (n - k) as isize) as usize;
            out.push(local_linear(y, start..start + k, pos as f64));
        }
    }
    out
}

/// Loess smooth of `y` at its own positions.
pub fn loess(y: &[f64], span: usize) -> Vec<f64> {
    loess_at(y, span, 0, y.len() as isize)
}

/// Loess smooth extended one position before and after the series; index 0
/// of the result corresponds to position -1.
pub fn loess_extended(y: &[f64], span: usize) -> Vec<f64> {
    loess_at(y, span, -1, y.len() as isize + 1)
}

/// Centered moving average of odd-or-even window `w`; output is shorter than
/// the input by `w - 1`.
pub fn moving_average(y: &[f64], w: usize) -> Vec<f64> {
    assert!(w >= 1 && y.len() >= w);
    let mut out = Vec::with_capacity(y.len() - w + 1);
    let mut sum: f64 = y[..w].iter().sum();
    out.push(sum / w as f64);
    for i in w..y.len() {
        sum += y[i] - y[i - w];
        out.push(sum / w as f64);
    }
    out
}

/// One-step-ahead sum of squared errors of simple exponential smoothing with
/// constant `alpha`, starting the level at the first observation.
fn ses_sse(y: &[f64], alpha: f64) -> f64 {
    let mut level = y[0];
    let mut sse = 0.0;
    for &v in &y[1..] {
        let e = v - level;
        sse += e * e;
        level += alpha * e;
    }
    sse
}

/// Simple exponential smoothing with the smoothing constant chosen by
/// golden-section search on the in-sample one-step squared error. Returns
/// `(alpha, final level)`; the level is the flat forecast for all horizons.
pub fn ses_optimize(y: &[f64]) -> (f64, f64) {
    if y.len() < 2 {
        return (0.5, y.first().copied().unwrap_or(0.0));
    }
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut a, mut b) = (1e-4, 1.0);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = ses_sse(y, c);
    let mut fd = ses_sse(y, d);
    for _ in 0..60 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = ses_sse(y, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = ses_sse(y, d);
        }
    }
    let alpha = 0.5 * (a + b);
    let mut level = y[0];
    for &v in &y[1..] {
        level += alpha * (v - level);
    }
    (alpha, level)
}

pub struct RidgeFit {
    pub beta: DVector<f64>,
    pub lambda: f64,
    pub df: f64,
}

/// Ridge regression with the penalty applied only to flagged columns and the
/// penalty weight chosen by generalized cross-validation over `grid`. A tiny
/// jitter proportional to the mean Gram diagonal keeps the unpenalized block
/// solvable when columns collide. Ties in GCV keep the smaller penalty.
pub fn ridge_gcv(x: &DMatrix<f64>, y: &DVector<f64>, penalized: &[bool], grid: &[f64]) -> Result<RidgeFit> {
    let n = x.nrows();
    let p = x.ncols();
    assert_eq!(penalized.len(), p);
    assert_eq!(y.len(), n);
    let gram = x.tr_mul(x);
    let xty = x.tr_mul(y);
    let scale = (gram.trace() / p as f64).max(1e-300);
    let jitter = 1e-8 * scale;
    let mut best: Option<(f64, RidgeFit)> = None;
    for &lambda in grid {
        let mut a = gram.clone();
        for j in 0..p {
            a[(j, j)] += jitter + if penalized[j] { lambda } else { 0.0 };
        }
        let Some(chol) = Cholesky::new(a) else {
            log::warn!("ridge: Gram matrix not positive definite at lambda {lambda:.3e}");
            continue;
        };
        let beta = chol.solve(&xty);
        let df = chol.solve(&gram).trace();
        let resid = y - x * &beta;
        let rss = resid.norm_squared();
        let denom = n as f64 - df;
        if denom <= f64::EPSILON {
            continue;
        }
        let gcv = n as f64 * rss / (denom * denom);
        if best.as_ref().is_none_or(|(g, _)| gcv < *g) {
            best = Some((gcv, RidgeFit { beta, lambda, df }));
        }
    }
    best.map(|(_, fit)| fit)
        .ok_or_else(|| Error::Data("ridge: no penalty in the grid produced a solvable system".into()))
}
