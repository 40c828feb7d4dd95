//! Cubic B-spline bases on equidistant knots: the open basis used by the
//! weight smoother and the additive experts, and the periodic annual basis.
//! With equidistant knots every basis function is a shifted copy of the
//! cardinal cubic B-spline, which keeps evaluation closed-form.

use crate::data::calendar::HOURS_PER_YEAR;

/// Cardinal cubic B-spline on support [0, 4).
pub fn cardinal_cubic(u: f64) -> f64 {
    if !(0.0..4.0).contains(&u) {
        return 0.0;
    }
    if u < 1.0 {
        u * u * u / 6.0
    } else if u < 2.0 {
        ((-3.0 * u * u + 12.0 * u - 12.0) * u + 4.0) / 6.0
    } else if u < 3.0 {
        ((3.0 * u * u - 24.0 * u + 60.0) * u - 44.0) / 6.0
    } else {
        let w = 4.0 - u;
        w * w * w / 6.0
    }
}

/// Cubic basis of dimension `n_basis` on `[a, b]`, equidistant knots with
/// three padding knots on each side. Sums to one everywhere on `[a, b]`.
#[derive(Debug, Clone)]
pub struct CubicBasis {
    a: f64,
    step: f64,
    n_basis: usize,
}

impl CubicBasis {
    pub fn equidistant(a: f64, b: f64, n_basis: usize) -> CubicBasis {
        assert!(n_basis >= 4, "cubic basis needs at least 4 functions");
        assert!(b > a, "degenerate basis interval");
        let step = (b - a) / (n_basis as f64 - 3.0);
        CubicBasis { a, step, n_basis }
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    /// Knot position of basis function `i`'s support start.
    pub fn knot(&self, i: isize) -> f64 {
        self.a + (i as f64 - 3.0) * self.step
    }

    /// Values of all basis functions at `x`, written into `out`.
    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.n_basis);
        let u0 = (x - self.a) / self.step + 3.0; // offset of x in basis-0 units
        for (i, o) in out.iter_mut().enumerate() {
            *o = cardinal_cubic(u0 - i as f64);
        }
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n_basis];
        self.eval_into(x, &mut out);
        out
    }
}

/// Periodic cubic basis with `n_basis` equidistant knots over one nominal
/// year of `HOURS_PER_YEAR` hours. Input is a phase in hours; any real phase
/// is reduced modulo the period.
#[derive(Debug, Clone)]
pub struct AnnualBasis {
    n_basis: usize,
    step: f64,
}

impl Default for AnnualBasis {
    fn default() -> Self {
        AnnualBasis::new(12)
    }
}

impl AnnualBasis {
    pub fn new(n_basis: usize) -> AnnualBasis {
        assert!(n_basis >= 4);
        AnnualBasis {
            n_basis,
            step: HOURS_PER_YEAR / n_basis as f64,
        }
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    pub fn period(&self) -> f64 {
        HOURS_PER_YEAR
    }

    /// Values of the periodic basis at phase `phi` (hours).
    pub fn eval_into(&self, phi: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.n_basis);
        let p = phi.rem_euclid(HOURS_PER_YEAR);
        let n = self.n_basis as f64;
        for (j, o) in out.iter_mut().enumerate() {
            // Basis j is the cardinal spline starting at knot (j - 2), folded
            // into the period; two wrapped copies cover the seam.
            let u = (p - (j as f64 - 2.0) * self.step) / self.step;
            *o = cardinal_cubic(u) + cardinal_cubic(u + n) + cardinal_cubic(u - n);
        }
    }

    pub fn eval(&self, phi: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n_basis];
        self.eval_into(phi, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Plain Cox-de Boor recursion, the reference the closed form is checked
    /// against. Written directly from the recurrence, no shortcuts.
    fn cox_de_boor(knots: &[f64], i: usize, p: usize, x: f64) -> f64 {
        if p == 0 {
            return if knots[i] <= x && x < knots[i + 1] { 1.0 } else { 0.0 };
        }
        let mut left = 0.0;
        let d1 = knots[i + p] - knots[i];
        if d1 > 0.0 {
            left = (x - knots[i]) / d1 * cox_de_boor(knots, i, p - 1, x);
        }
        let mut right = 0.0;
        let d2 = knots[i + p + 1] - knots[i + 1];
        if d2 > 0.0 {
            right = (knots[i + p + 1] - x) / d2 * cox_de_boor(knots, i + 1, p - 1, x);
        }
        left + right
    }

    #[test]
    fn cardinal_matches_cox_de_boor_recursion() {
        let knots: Vec<f64> = (0..=4).map(|i| i as f64).collect();
        let mut x = 0.0;
        while x < 4.0 {
            assert_abs_diff_eq!(cardinal_cubic(x), cox_de_boor(&knots, 0, 3, x), epsilon = 1e-12);
            x += 0.0173;
        }
        assert_eq!(cardinal_cubic(-0.1), 0.0);
        assert_eq!(cardinal_cubic(4.0), 0.0);
    }

    #[test]
    fn open_basis_matches_recursion_on_its_knots() {
        let basis = CubicBasis::equidistant(1.0, 24.0, 24);
        // Knot vector for the recursion: basis i spans full[i..=i+4].
        let full: Vec<f64> = (0..28).map(|i| basis.knot(i as isize)).collect();
        for &x in &[1.0, 1.5, 7.3, 12.0, 20.9, 23.999] {
            let row = basis.eval(x);
            for i in 0..24 {
                assert_abs_diff_eq!(row[i], cox_de_boor(&full, i, 3, x), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn open_basis_sums_to_one_on_domain() {
        let basis = CubicBasis::equidistant(0.0, 10.0, 9);
        let mut x = 0.0;
        while x <= 10.0 {
            let s: f64 = basis.eval(x).iter().sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
            x += 0.37;
        }
        let s: f64 = basis.eval(10.0).iter().sum();
        assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn annual_basis_sums_to_one_and_is_periodic() {
        let basis = AnnualBasis::default();
        assert_eq!(basis.n_basis(), 12);
        let period = basis.period();
        let mut phi = 0.0;
        while phi < period {
            let row = basis.eval(phi);
            let s: f64 = row.iter().sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-10);
            let wrapped = basis.eval(phi + period);
            for j in 0..12 {
                assert_abs_diff_eq!(row[j], wrapped[j], epsilon = 1e-10);
            }
            phi += period / 97.3;
        }
    }

    #[test]
    fn annual_basis_matches_recursion_via_extended_knots() {
        let basis = AnnualBasis::default();
        let step = basis.period() / 12.0;
        // Extended knot vector covering wrap-around: knots at k*step for
        // k in -5..=18; periodic basis j collects copies at j, j±12, and the
        // left copy of basis 11 starts at knot -3.
        let knots: Vec<f64> = (-5..=18).map(|k| k as f64 * step).collect();
        let offset = 5i64; // knots[0] is at k = -5
        let eval_shifted = |start: i64, x: f64| -> f64 {
            let i = start + offset;
            if i < 0 || (i as usize) + 4 >= knots.len() {
                return 0.0;
            }
            cox_de_boor(&knots, i as usize, 3, x)
        };
        for step_i in 0..53 {
            let phi = step_i as f64 * basis.period() / 53.0;
            let row = basis.eval(phi);
            for j in 0..12i64 {
                let want = eval_shifted(j - 2, phi)
                    + eval_shifted(j - 2 + 12, phi)
                    + eval_shifted(j - 2 - 12, phi);
                assert_abs_diff_eq!(row[j as usize], want, epsilon = 1e-12);
            }
        }
    }
}
