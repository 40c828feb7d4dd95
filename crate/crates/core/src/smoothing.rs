//! Penalized-spline smoothing of aggregation weights across the 24 target
//! horizons. Each expert's weight curve w over horizons is replaced by
//! `B (B'B + lambda D'D)^-1 B' w` with a cubic basis of dimension 24 on
//! [1, 24] and a first-difference penalty. The basis is square and
//! invertible, so lambda = 0 reproduces the input exactly; that case and
//! the lambda = infinity limit (the horizon mean) are short-circuited.

use nalgebra::{DMatrix, DVector};

use crate::data::task::N_HORIZONS;
use crate::error::{Error, Result};
use crate::splines::CubicBasis;

/// First-difference matrix, shape (n-1) x n.
pub fn first_difference(n: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(n - 1, n);
    for i in 0..n - 1 {
        d[(i, i)] = -1.0;
        d[(i, i + 1)] = 1.0;
    }
    d
}

/// Basis matrix B with rows at horizons 1..=24.
pub fn horizon_basis() -> DMatrix<f64> {
    let basis = CubicBasis::equidistant(1.0, N_HORIZONS as f64, N_HORIZONS);
    let mut b = DMatrix::zeros(N_HORIZONS, N_HORIZONS);
    let mut row = vec![0.0; N_HORIZONS];
    for h in 0..N_HORIZONS {
        basis.eval_into((h + 1) as f64, &mut row);
        for j in 0..N_HORIZONS {
            b[(h, j)] = row[j];
        }
    }
    b
}

enum Kernel {
    Identity,
    HorizonMean,
    Matrix(DMatrix<f64>),
}

pub struct WeightSmoother {
    lambda: f64,
    kernel: Kernel,
}

impl WeightSmoother {
    pub fn new(lambda: f64) -> Result<WeightSmoother> {
        if lambda < 0.0 || lambda.is_nan() {
            return Err(Error::Config(format!("smoothing penalty {lambda} must be >= 0")));
        }
        let kernel = if lambda == 0.0 {
            Kernel::Identity
        } else if lambda.is_infinite() {
            Kernel::HorizonMean
        } else {
            let b = horizon_basis();
            let d = first_difference(N_HORIZONS);
            let a = b.transpose() * &b + (d.transpose() * d).scale(lambda);
            let chol = a
                .cholesky()
                .ok_or_else(|| Error::Solve("smoother normal matrix is not positive definite".into()))?;
            let h = &b * chol.solve(&b.transpose());
            Kernel::Matrix(h)
        };
        Ok(WeightSmoother { lambda, kernel })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// The smoothing matrix, materialized for inspection.
    pub fn matrix(&self) -> DMatrix<f64> {
        match &self.kernel {
            Kernel::Identity => DMatrix::identity(N_HORIZONS, N_HORIZONS),
            Kernel::HorizonMean => {
                DMatrix::from_element(N_HORIZONS, N_HORIZONS, 1.0 / N_HORIZONS as f64)
            }
            Kernel::Matrix(h) => h.clone(),
        }
    }

    /// Smooths each expert's weight curve in place. `weights` is horizon-major
    /// with `n_experts` entries per horizon. With `repair` set, negatives are
    /// clipped and every horizon renormalized back onto the simplex.
    pub fn apply(&self, weights: &mut [f64], n_experts: usize, repair: bool) {
        debug_assert_eq!(weights.len(), N_HORIZONS * n_experts);
        match &self.kernel {
            Kernel::Identity => return,
            Kernel::HorizonMean => {
                for k in 0..n_experts {
                    let mean = (0..N_HORIZONS).map(|h| weights[h * n_experts + k]).sum::<f64>()
                        / N_HORIZONS as f64;
                    for h in 0..N_HORIZONS {
                        weights[h * n_experts + k] = mean;
                    }
                }
            }
            Kernel::Matrix(h) => {
                let mut col = DVector::zeros(N_HORIZONS);
                for k in 0..n_experts {
                    for i in 0..N_HORIZONS {
                        col[i] = weights[i * n_experts + k];
                    }
                    let smoothed = h * &col;
                    for i in 0..N_HORIZONS {
                        weights[i * n_experts + k] = smoothed[i];
                    }
                }
            }
        }
        if repair {
            repair_simplex(weights, n_experts);
        }
    }
}

/// Clips negatives and renormalizes each horizon's weights to sum to one;
/// a horizon whose mass vanished falls back to uniform.
pub fn repair_simplex(weights: &mut [f64], n_experts: usize) {
    for row in weights.chunks_mut(n_experts) {
        let mut total = 0.0;
        for w in row.iter_mut() {
            if *w < 0.0 {
                *w = 0.0;
            }
            total += *w;
        }
        if total > 0.0 {
            for w in row.iter_mut() {
                *w /= total;
            }
        } else {
            row.fill(1.0 / n_experts as f64);
        }
    }
}

/// Penalty grid searched online: no smoothing, powers of two from 2^-4 to
/// 2^12, and the horizon-mean limit.
pub fn default_lambda_grid() -> Vec<f64> {
    let mut grid = vec![0.0];
    grid.extend((-4..=12).map(|e| (e as f64).exp2()));
    grid.push(f64::INFINITY);
    grid
}
