//! Lasso solved by cyclic coordinate descent with soft-threshold updates.
//!
//! The objective is `(1/2n) ||y - X b||^2 + alpha * sum |b_j|` on implicitly
//! standardized columns (population standard deviation) and centered `y`.
//! Columns stay in their sparse or shifted storage: centering is carried
//! through the update algebra instead of materializing dense copies. Paths
//! run over a descending alpha grid with warm starts; model choice along a
//! path is by BIC.

use crate::design::DesignMatrix;
use crate::error::{Error, Result};

const SWEEP_TOL: f64 = 1e-7;
const MAX_SWEEPS: usize = 100_000;

// Near-duplicate columns (consecutive hourly lags) leave a shallow valley
// where coefficients trade mass between sweeps while the objective drains
// slower than 1e-10 of its size per sweep. Ordinary convergence passes
// through such decrease rates geometrically and reaches the delta tolerance
// within a few further sweeps; only a stuck iterate sustains the plateau for
// dozens of sweeps. Accepting there loses nothing observable: remaining
// progress over the whole sweep budget is below 1e-5 of the objective, and
// predictions have long converged even though the split of coefficient mass
// among duplicates is not unique. The delta gate keeps the guard out of any
// phase where coefficients still move macroscopically.
const STALL_REL: f64 = 1e-10;
const STALL_DELTA: f64 = 1e-4;
const STALL_SWEEPS: usize = 40;

/// One fitted path point. Coefficients are reported on the original column
/// scale; `intercept` absorbs the centering.
#[derive(Debug, Clone)]
pub struct LassoFit {
    pub alpha: f64,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub df: usize,
    pub rss: f64,
}

impl LassoFit {
    pub fn predict(&self, dm: &DesignMatrix) -> Vec<f64> {
        dm.predict(&self.coefficients, self.intercept)
    }

    /// Copy with the given coefficients zeroed. The intercept is untouched,
    /// so rows where every zeroed column is 0 keep their fitted values.
    pub fn with_zeroed(&self, cols: &[usize]) -> LassoFit {
        let mut out = self.clone();
        for &j in cols {
            out.coefficients[j] = 0.0;
        }
        out.df = out.coefficients.iter().filter(|b| **b != 0.0).count();
        out
    }
}

/// Per-column centering and scaling; zero-variance columns are flagged and
/// excluded from fitting.
#[derive(Debug, Clone)]
pub struct Standardized {
    pub centers: Vec<f64>,
    pub scales: Vec<f64>,
    pub active: Vec<bool>,
}

pub fn standardize(dm: &DesignMatrix) -> Standardized {
    let n = dm.n_rows() as f64;
    let p = dm.n_cols();
    let mut centers = Vec::with_capacity(p);
    let mut scales = Vec::with_capacity(p);
    let mut active = Vec::with_capacity(p);
    for j in 0..p {
        let col = dm.col_ref(j);
        let mean = col.sum() / n;
        let msq = col.sumsq() / n;
        let var = (msq - mean * mean).max(0.0);
        let degenerate = var <= 1e-12 * msq.max(1.0);
        centers.push(mean);
        scales.push(if degenerate { 1.0 } else { var.sqrt() });
        active.push(!degenerate);
    }
    Standardized { centers, scales, active }
}

impl Standardized {
    /// Materialized standardized column, mainly for tests.
    pub fn apply(&self, dm: &DesignMatrix, j: usize) -> Vec<f64> {
        dm.col_materialize(j)
            .into_iter()
            .map(|v| (v - self.centers[j]) / self.scales[j])
            .collect()
    }
}

/// Residual state in centered coordinates. The residual is `u + shift`
/// elementwise; sparse column updates then never touch every entry.
struct Solver<'a> {
    dm: &'a DesignMatrix,
    std: Standardized,
    col_sums: Vec<f64>,
    beta: Vec<f64>, // standardized-scale coefficients
    u: Vec<f64>,
    u_sum: f64,
    shift: f64,
    n: f64,
}

impl<'a> Solver<'a> {
    fn new(dm: &'a DesignMatrix, y: &[f64]) -> Solver<'a> {
        let n = dm.n_rows();
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let u: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
        let u_sum = u.iter().sum();
        let col_sums = (0..dm.n_cols()).map(|j| dm.col_ref(j).sum()).collect();
        Solver {
            dm,
            std: standardize(dm),
            col_sums,
            beta: vec![0.0; dm.n_cols()],
            u,
            u_sum,
            shift: 0.0,
            n: n as f64,
        }
    }

    /// Gradient coordinate `z_j . r / n` for the standardized column.
    fn gradient(&self, j: usize) -> f64 {
        let col = self.dm.col_ref(j);
        let x_dot_u = col.dot(&self.u) + self.shift * self.col_sums[j];
        let r_sum = self.u_sum + self.n * self.shift;
        (x_dot_u - self.std.centers[j] * r_sum) / (self.std.scales[j] * self.n)
    }

    fn apply_delta(&mut self, j: usize, delta: f64) {
        let s = self.std.scales[j];
        let a = -delta / s;
        self.dm.col_ref(j).axpy(a, &mut self.u);
        self.u_sum += a * self.col_sums[j];
        self.shift += delta * self.std.centers[j] / s;
        self.beta[j] += delta;
    }

    /// One pass over `indices`; returns the largest coefficient change.
    fn sweep(&mut self, indices: &[usize], alpha: f64) -> f64 {
        let mut max_delta = 0.0f64;
        for &j in indices {
            if !self.std.active[j] {
                continue;
            }
            let rho = self.gradient(j) + self.beta[j];
            let new = soft_threshold(rho, alpha);
            let delta = new - self.beta[j];
            if delta != 0.0 {
                self.apply_delta(j, delta);
                max_delta = max_delta.max(delta.abs());
            }
        }
        max_delta
    }

    fn rss(&self) -> f64 {
        self.u
            .iter()
            .map(|ui| {
                let r = ui + self.shift;
                r * r
            })
            .sum()
    }

    fn objective(&self, alpha: f64) -> f64 {
        self.rss() / (2.0 * self.n) + alpha * self.beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    /// Worst stationarity violation at the current iterate.
    fn kkt(&self, alpha: f64) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.dm.n_cols() {
            if !self.std.active[j] {
                continue;
            }
            let g = self.gradient(j);
            let v = if self.beta[j] == 0.0 {
                g.abs() - alpha
            } else {
                (g - alpha * self.beta[j].signum()).abs()
            };
            worst = worst.max(v);
        }
        worst.max(0.0)
    }

    fn converge(&mut self, alpha: f64, sweeps: &mut usize, mut on_sweep: impl FnMut(&Solver)) -> Result<()> {
        let all: Vec<usize> = (0..self.dm.n_cols()).collect();
        let mut prev_obj = f64::INFINITY;
        let mut stalled = 0usize;
        macro_rules! track_stall {
            ($delta:expr) => {{
                let obj = self.objective(alpha);
                if prev_obj - obj <= STALL_REL * (1.0 + obj.abs()) && $delta < STALL_DELTA {
                    stalled += 1;
                } else {
                    stalled = 0;
                }
                prev_obj = obj;
            }};
        }
        loop {
            let max_delta = self.sweep(&all, alpha);
            *sweeps += 1;
            on_sweep(self);
            if *sweeps > MAX_SWEEPS {
                return Err(Error::NoConvergence { alpha, delta: max_delta, sweeps: *sweeps });
            }
            track_stall!(max_delta);
            if max_delta < SWEEP_TOL && self.kkt(alpha) <= 2.0 * SWEEP_TOL {
                return Ok(());
            }
            // The stall streak ends on a full sweep, so every column took a
            // noise-floor step.
            if stalled >= STALL_SWEEPS {
                log::debug!("alpha {alpha:.3e}: objective stalled after {sweeps} sweeps; accepting");
                return Ok(());
            }
            // Iterate the active set to convergence, then re-check globally.
            let support: Vec<usize> = (0..self.dm.n_cols()).filter(|&j| self.beta[j] != 0.0).collect();
            loop {
                let d = self.sweep(&support, alpha);
                *sweeps += 1;
                on_sweep(self);
                track_stall!(d);
                if d < SWEEP_TOL || stalled >= STALL_SWEEPS {
                    break;
                }
                if *sweeps > MAX_SWEEPS {
                    return Err(Error::NoConvergence { alpha, delta: d, sweeps: *sweeps });
                }
            }
        }
    }

    fn extract(&self, alpha: f64, y_mean: f64) -> LassoFit {
        let p = self.dm.n_cols();
        let mut coefficients = vec![0.0; p];
        let mut intercept = y_mean;
        let mut df = 0;
        for j in 0..p {
            if self.beta[j] != 0.0 {
                let b = self.beta[j] / self.std.scales[j];
                coefficients[j] = b;
                intercept -= b * self.std.centers[j];
                df += 1;
            }
        }
        LassoFit {
            alpha,
            intercept,
            coefficients,
            df,
            rss: self.rss(),
        }
    }
}

pub fn soft_threshold(z: f64, alpha: f64) -> f64 {
    z.signum() * (z.abs() - alpha).max(0.0)
}

/// Smallest penalty that forces the all-zero solution: the largest absolute
/// covariance between a standardized column and the response.
pub fn alpha_max(dm: &DesignMatrix, y: &[f64]) -> f64 {
    let n = dm.n_rows() as f64;
    let std = standardize(dm);
    let y_sum: f64 = y.iter().sum();
    let mut best = 0.0f64;
    for j in 0..dm.n_cols() {
        if !std.active[j] {
            continue;
        }
        let cov = (dm.col_ref(j).dot(y) - std.centers[j] * y_sum) / (std.scales[j] * n);
        best = best.max(cov.abs());
    }
    best
}

/// Fits the whole path over a descending alpha grid with warm starts. The
/// sweep budget applies per grid point, not to the path as a whole.
pub fn fit_path(dm: &DesignMatrix, y: &[f64], alphas: &[f64]) -> Result<Vec<LassoFit>> {
    check_inputs(dm, y, alphas)?;
    let y_mean = y.iter().sum::<f64>() / y.len() as f64;
    let mut solver = Solver::new(dm, y);
    let mut fits = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let mut sweeps = 0usize;
        solver.converge(alpha, &mut sweeps, |_| {})?;
        fits.push(solver.extract(alpha, y_mean));
    }
    Ok(fits)
}

/// Single-alpha fit that records the objective after every sweep.
pub fn fit_traced(dm: &DesignMatrix, y: &[f64], alpha: f64) -> Result<(LassoFit, Vec<f64>)> {
    check_inputs(dm, y, &[alpha])?;
    let y_mean = y.iter().sum::<f64>() / y.len() as f64;
    let mut solver = Solver::new(dm, y);
    let mut trace = Vec::new();
    let mut sweeps = 0usize;
    solver.converge(alpha, &mut sweeps, |s| trace.push(s.objective(alpha)))?;
    Ok((solver.extract(alpha, y_mean), trace))
}

fn check_inputs(dm: &DesignMatrix, y: &[f64], alphas: &[f64]) -> Result<()> {
    if y.len() != dm.n_rows() {
        return Err(Error::Design(format!(
            "response length {} does not match {} design rows",
            y.len(),
            dm.n_rows()
        )));
    }
    if dm.n_rows() == 0 || dm.n_cols() == 0 {
        return Err(Error::Design("empty design".into()));
    }
    if !dm.all_rows_valid() {
        let bad = dm.row_valid().iter().filter(|v| !*v).count();
        return Err(Error::Design(format!(
            "{bad} rows have unavailable lag values; restrict the row set before fitting"
        )));
    }
    if alphas.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::Design("alpha grid must be non-increasing".into()));
    }
    if alphas.iter().any(|a| *a < 0.0 || !a.is_finite()) {
        return Err(Error::Design("alpha values must be finite and non-negative".into()));
    }
    Ok(())
}

/// Worst KKT violation of a finished fit, recomputed from scratch.
pub fn kkt_violation(dm: &DesignMatrix, y: &[f64], fit: &LassoFit) -> f64 {
    let n = dm.n_rows() as f64;
    let fitted = fit.predict(dm);
    let r: Vec<f64> = y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
    let r_sum: f64 = r.iter().sum();
    let std = standardize(dm);
    let mut worst = 0.0f64;
    for j in 0..dm.n_cols() {
        if !std.active[j] {
            continue;
        }
        let col = dm.col_ref(j);
        let g = (col.dot(&r) - std.centers[j] * r_sum) / (std.scales[j] * n);
        let beta_std = fit.coefficients[j] * std.scales[j];
        let v = if beta_std == 0.0 {
            g.abs() - fit.alpha
        } else {
            (g - fit.alpha * beta_std.signum()).abs()
        };
        worst = worst.max(v);
    }
    worst.max(0.0)
}

pub fn bic(rss: f64, df: usize, n: usize) -> f64 {
    let n = n as f64;
    n * (rss.max(1e-300) / n).ln() + df as f64 * n.ln()
}

/// Index of the BIC-minimal path point; ties keep the larger alpha. Expects
/// the descending-alpha order produced by `fit_path`.
pub fn select_bic(fits: &[LassoFit], n: usize) -> usize {
    let mut best = 0usize;
    let mut best_bic = f64::INFINITY;
    for (i, fit) in fits.iter().enumerate() {
        let b = bic(fit.rss, fit.df, n);
        if b < best_bic {
            best_bic = b;
            best = i;
        }
    }
    best
}
