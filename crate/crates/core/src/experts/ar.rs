//! Autoregressive expert: Yule-Walker coefficients from the Levinson-Durbin
//! recursion on biased autocovariances, order chosen by AIC, recursive
//! forecasts with the mean re-added.

use crate::error::{Error, Result};

pub const P_MAX: usize = 528;

/// Candidate orders: every order through 48, then whole days out to 22 days.
/// The full 0..=528 range would be evaluated identically; the thinning only
/// restricts which orders AIC may select.
pub fn order_grid() -> Vec<usize> {
    (0..=48).chain((3..=22).map(|m| 24 * m)).collect()
}

#[derive(Debug, Clone)]
pub struct ArFit {
    pub mean: f64,
    pub phi: Vec<f64>,
    pub sigma2: f64,
    pub aic: f64,
}

impl ArFit {
    pub fn order(&self) -> usize {
        self.phi.len()
    }

    /// Recursive point forecasts `1..=h_max` steps past the end of `y`.
    pub fn forecast(&self, y: &[f64], h_max: usize) -> Vec<f64> {
        let p = self.phi.len();
        // Centered history, most recent last, extended by the forecasts.
        let mut z: Vec<f64> = y[y.len().saturating_sub(p)..].iter().map(|v| v - self.mean).collect();
        let mut out = Vec::with_capacity(h_max);
        for _ in 0..h_max {
            let mut acc = 0.0;
            for (i, c) in self.phi.iter().enumerate() {
                acc += c * z[z.len() - 1 - i];
            }
            z.push(acc);
            out.push(self.mean + acc);
        }
        out
    }
}

/// Fits AR(p) for every order in `order_grid()` that the sample supports and
/// keeps the AIC minimizer, `AIC = n ln sigma2 + 2p`. Orders beyond half the
/// sample are never considered. If the recursion loses stability (reflection
/// coefficient at the unit circle or vanishing innovation variance) the
/// search stops at the last stable order with a warning.
pub fn fit(y: &[f64]) -> Result<ArFit> {
    let n = y.len();
    if n < 4 {
        return Err(Error::Data(format!("autoregression needs more than {n} observations")));
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let grid = order_grid();
    let p_cap = P_MAX.min((n - 1) / 2);
    let mut cov = vec![0.0; p_cap + 1];
    for (k, c) in cov.iter_mut().enumerate() {
        let mut acc = 0.0;
        for t in k..n {
            acc += (y[t] - mean) * (y[t - k] - mean);
        }
        *c = acc / n as f64;
    }
    let c0 = cov[0];
    if c0 <= 1e-13 * (1.0 + mean * mean) {
        // Zero-variance guard: a flat window forecasts its own level.
        return Ok(ArFit { mean, phi: Vec::new(), sigma2: 0.0, aic: f64::NEG_INFINITY });
    }

    let mut phi = vec![0.0; p_cap];
    let mut prev = vec![0.0; p_cap];
    let mut sigma2 = c0;
    let mut best = ArFit { mean, phi: Vec::new(), sigma2: c0, aic: n as f64 * c0.ln() };
    let sigma_floor = 1e-12 * c0;
    for m in 1..=p_cap {
        if sigma2 <= sigma_floor {
            log::warn!("autoregression: innovation variance vanished at order {}, capping", m - 1);
            break;
        }
        let mut acc = cov[m];
        for i in 0..m - 1 {
            acc -= phi[i] * cov[m - 1 - i];
        }
        let kappa = acc / sigma2;
        if !kappa.is_finite() || kappa.abs() >= 1.0 - 1e-12 {
            log::warn!(
                "autoregression: reflection coefficient {kappa:.6} at order {m}, \
                 keeping the last stable order"
            );
            break;
        }
        prev[..m - 1].copy_from_slice(&phi[..m - 1]);
        phi[m - 1] = kappa;
        for i in 0..m - 1 {
            phi[i] = prev[i] - kappa * prev[m - 2 - i];
        }
        sigma2 *= 1.0 - kappa * kappa;
        if grid.binary_search(&m).is_ok() {
            let aic = n as f64 * sigma2.max(f64::MIN_POSITIVE).ln() + 2.0 * m as f64;
            if aic < best.aic {
                best = ArFit { mean, phi: phi[..m].to_vec(), sigma2, aic };
            }
        }
    }
    Ok(best)
}

/// Fit-and-forecast convenience used by the panel builder.
pub fn forecast(y: &[f64], h_max: usize) -> Result<Vec<f64>> {
    Ok(fit(y)?.forecast(y, h_max))
}
