//! Numerical probes of the semigroup properties of `R` on a truncation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{r_matrix, TruncatedQ, SERIES_TOL};

/// Columns within this distance of `K` are excluded from the checks.
pub const INTERIOR_MARGIN: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemigroupReport {
    pub tol: f64,
    /// Largest column index checked.
    pub interior: usize,
    /// `max_{t,j} ∑_i μ(i)R_{ij}(t) / (μ(j)e^{wt}) − 1`.
    pub column_excess: f64,
    /// `max_t` of the interior μ-operator norm of `R(t/2)² − R(t)`.
    pub semigroup_error: f64,
    /// Relative μ-norm error of the extrapolated difference quotient
    /// `(R(h) − I)/h` against `A`, worst interior column.
    pub derivative_error: f64,
}

impl SemigroupReport {
    pub fn column_ok(&self) -> bool {
        self.column_excess <= self.tol
    }

    pub fn semigroup_ok(&self) -> bool {
        self.semigroup_error <= self.tol
    }

    pub fn derivative_ok(&self) -> bool {
        self.derivative_error <= self.tol
    }

    pub fn passed(&self) -> bool {
        self.column_ok() && self.semigroup_ok() && self.derivative_ok()
    }
}

/// Interior μ-operator norm `max_{j ≤ interior} ∑_i μ(i)|E_{ij}| / μ(j)`.
pub fn interior_op_norm(e: &DMatrix<f64>, mu: &[f64], interior: usize) -> f64 {
    (0..=interior)
        .map(|j| (0..e.nrows()).map(|i| mu[i] * e[(i, j)].abs()).sum::<f64>() / mu[j])
        .fold(0.0, f64::max)
}

pub fn check_semigroup_props(q: &TruncatedQ, t_list: &[f64], tol: f64) -> SemigroupReport {
    let k = q.k();
    let interior = if k > INTERIOR_MARGIN { k - INTERIOR_MARGIN } else { k };
    let mu = q.mu();
    let mut column_excess = f64::NEG_INFINITY;
    let mut semigroup_error: f64 = 0.0;
    for &t in t_list {
        let r = r_matrix(q, t, SERIES_TOL);
        let g = (q.w() * t).exp();
        for j in 0..=interior {
            let col: f64 = (0..=k).map(|i| mu[i] * r[(i, j)]).sum();
            column_excess = column_excess.max(col / (mu[j] * g) - 1.0);
        }
        let half = r_matrix(q, t / 2.0, SERIES_TOL);
        semigroup_error = semigroup_error.max(interior_op_norm(&(&half * &half - &r), mu, interior));
    }

    let a = q.section().to_dense();
    let h = 1e-3 / q.rate().max(1.0);
    let id = DMatrix::<f64>::identity(k + 1, k + 1);
    let quotient = |h: f64| (r_matrix(q, h, SERIES_TOL) - &id) / h;
    let (d1, d2, d3) = (quotient(h), quotient(h / 2.0), quotient(h / 4.0));
    let e1 = &d2 * 2.0 - &d1;
    let e2 = &d3 * 2.0 - &d2;
    let deriv = (&e2 * 4.0 - &e1) / 3.0;
    let mut derivative_error: f64 = 0.0;
    for j in 0..=interior {
        let diff: f64 = (0..=k).map(|i| mu[i] * (deriv[(i, j)] - a[(i, j)]).abs()).sum();
        let scale: f64 = (0..=k).map(|i| mu[i] * a[(i, j)].abs()).sum::<f64>().max(mu[j]);
        derivative_error = derivative_error.max(diff / scale);
    }

    SemigroupReport {
        tol,
        interior,
        column_excess: if t_list.is_empty() { 0.0 } else { column_excess },
        semigroup_error,
        derivative_error,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LinearSection;
    use crate::weights::Weight;

    #[test]
    fn zero_generator_is_exact() {
        // A = wI makes Q vanish, so R(t) = e^{wt}I
        let a = DMatrix::identity(4, 4) * 0.7;
        let q = TruncatedQ::new(LinearSection::from_dense(&a), &Weight::linear(), 0.7).unwrap();
        assert_eq!(q.rate(), 0.0);
        let rep = check_semigroup_props(&q, &[0.1, 1.0], 1e-12);
        assert!(rep.column_excess.abs() < 1e-14);
        assert!(rep.semigroup_error < 1e-14);
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn two_type_decay_semigroup_law() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 1.0, 0.0]);
        let q = TruncatedQ::new(LinearSection::from_dense(&a), &Weight::unit(), 0.0).unwrap();
        let rep = check_semigroup_props(&q, &[1.0], 1e-9);
        assert!(rep.semigroup_error < 1e-12);
        assert!(rep.passed(), "{rep:?}");
    }
}
