//! The tilted transition semigroup `R(t) = e^{wt} D⁻¹ P(t)ᵀ D` on finite
//! sections, where `P` is generated by `Q_{ij} = A_{ji} μ(j)/μ(i) − wδ_{ij}`
//! with an absorbing coffin state, and `D = diag(μ)`.

mod mild;
mod props;

pub use mild::{mild_solve, mild_solve_with, MildOptions, MildState};
pub use props::{check_semigroup_props, SemigroupReport, INTERIOR_MARGIN};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{LinearSection, PopulationModel};
use crate::weights::Weight;

/// Default remainder bound for truncated Poisson series.
pub const SERIES_TOL: f64 = 1e-15;

/// Largest `Λt` handled by a single Poisson series; longer horizons are split.
const MAX_SERIES_RATE: f64 = 64.0;

/// `Q` on `{0..K, ∂}`, stored by rows; the coffin `∂` has index `K+1`.
#[derive(Clone, Debug)]
pub struct TruncatedQ {
    k: usize,
    rows: Vec<Vec<(usize, f64)>>,
    mu: Vec<f64>,
    w: f64,
    section: LinearSection,
}

impl TruncatedQ {
    pub fn new(section: LinearSection, mu: &Weight, w: f64) -> Result<Self> {
        let k = section.k();
        let mu: Vec<f64> = (0..=k).map(|i| mu.eval(i)).collect();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); k + 2];
        let mut scale = vec![w; k + 1];
        for (r, c, a) in section.entries() {
            if r != c && a < 0.0 {
                return Err(Error::InvalidParam(format!("negative off-diagonal A[{r}][{c}] = {a}")));
            }
            let q = if r == c { a - w } else { a * mu[r] / mu[c] };
            if q != 0.0 {
                rows[c].push((r, q));
            }
            scale[c] += (a * mu[r] / mu[c]).abs();
        }
        for (i, row) in rows.iter_mut().enumerate().take(k + 1) {
            row.sort_by_key(|e| e.0);
            let sum: f64 = row.iter().map(|e| e.1).sum();
            if sum > 1e-12 * scale[i] {
                return Err(Error::DriftConditionViolated { column: i, excess: sum * mu[i] });
            }
            let leak = (-sum).max(0.0);
            if leak > 0.0 {
                row.push((k + 1, leak));
            }
        }
        Ok(Self { k, rows, mu, w, section })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Index of the coffin state.
    pub fn coffin(&self) -> usize {
        self.k + 1
    }

    pub fn dim(&self) -> usize {
        self.k + 2
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn section(&self) -> &LinearSection {
        &self.section
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i].iter().find(|e| e.0 == j).map_or(0.0, |e| e.1)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut q = DMatrix::zeros(self.dim(), self.dim());
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                q[(i, j)] = v;
            }
        }
        q
    }

    /// Uniformization rate `Λ_Q = max_i |Q_{ii}|`.
    pub fn rate(&self) -> f64 {
        (0..self.dim()).map(|i| self.get(i, i).abs()).fold(0.0, f64::max)
    }

    /// `out = Qᵀ v`.
    fn apply_transpose(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, row) in self.rows.iter().enumerate() {
            if v[i] == 0.0 {
                continue;
            }
            for &(j, q) in row {
                out[j] += q * v[i];
            }
        }
    }
}

/// `Q` for the section `A_K` of a model, tilted by its `μ` and `w`.
pub fn build_q<M: PopulationModel + ?Sized>(model: &M, k: usize) -> Result<TruncatedQ> {
    let ws = model.weights();
    TruncatedQ::new(LinearSection::new(model, k), &ws.mu, ws.w)
}

/// Poisson(λ) probabilities `p_0, …, p_n`, cut where the remaining mass is
/// below `tol`.
pub fn poisson_weights(lambda: f64, tol: f64) -> Vec<f64> {
    assert!((0.0..=700.0).contains(&lambda), "Poisson rate {lambda} out of range");
    let mut w = vec![(-lambda).exp()];
    if lambda == 0.0 {
        return w;
    }
    loop {
        let n = w.len() - 1;
        let next = w[n] * lambda / (n + 1) as f64;
        let ratio = lambda / (n + 2) as f64;
        if ratio < 1.0 && next / (1.0 - ratio) < tol {
            return w;
        }
        w.push(next);
    }
}

fn split(rate: f64, t: f64) -> usize {
    ((rate * t) / MAX_SERIES_RATE).log2().ceil().max(0.0) as usize
}

/// `P(t)` on `{0..K, ∂}` by uniformization, with scaling and squaring for
/// long horizons.
pub fn p_matrix(q: &TruncatedQ, t: f64, tol: f64) -> DMatrix<f64> {
    assert!(t >= 0.0, "time must be nonnegative");
    let n = q.dim();
    let rate = q.rate();
    if t == 0.0 || rate == 0.0 {
        return DMatrix::identity(n, n);
    }
    let s = split(rate, t);
    let tau = t / (1u64 << s) as f64;
    let b = DMatrix::identity(n, n) + q.to_dense() / rate;
    let weights = poisson_weights(rate * tau, tol / (1u64 << s) as f64);
    let mut term = DMatrix::identity(n, n);
    let mut p = &term * weights[0];
    for &wn in &weights[1..] {
        term = &b * &term;
        p += &term * wn;
    }
    for _ in 0..s {
        p = &p * &p;
    }
    p
}

/// `P(t)ᵀ v` without forming `P(t)`.
pub fn p_transpose_apply(q: &TruncatedQ, t: f64, v: &[f64], tol: f64) -> Vec<f64> {
    assert_eq!(v.len(), q.dim());
    let rate = q.rate();
    if t == 0.0 || rate == 0.0 {
        return v.to_vec();
    }
    let pieces = ((rate * t) / MAX_SERIES_RATE).ceil().max(1.0) as usize;
    let weights = poisson_weights(rate * t / pieces as f64, tol / pieces as f64);
    let mut cur = v.to_vec();
    let mut term = vec![0.0; v.len()];
    let mut tmp = vec![0.0; v.len()];
    for _ in 0..pieces {
        term.copy_from_slice(&cur);
        let mut acc: Vec<f64> = term.iter().map(|x| x * weights[0]).collect();
        for &wn in &weights[1..] {
            q.apply_transpose(&term, &mut tmp);
            for (a, b) in term.iter_mut().zip(&tmp) {
                *a += b / rate;
            }
            for (a, b) in acc.iter_mut().zip(&term) {
                *a += wn * b;
            }
        }
        cur = acc;
    }
    cur
}

/// `R(t)x` for `x` on `0..K`, matrix-free.
pub fn r_apply(q: &TruncatedQ, t: f64, x: &[f64], tol: f64) -> Vec<f64> {
    assert_eq!(x.len(), q.k + 1, "vector must live on 0..=K");
    let mut v: Vec<f64> = x.iter().zip(&q.mu).map(|(a, m)| a * m).collect();
    v.push(0.0);
    let z = p_transpose_apply(q, t, &v, tol);
    let g = (q.w * t).exp();
    z[..=q.k].iter().zip(&q.mu).map(|(a, m)| g * a / m).collect()
}

/// Dense `R(t)` on `0..K`: `R_{ij} = e^{wt} μ(j) P_{ji}(t) / μ(i)`.
pub fn r_matrix(q: &TruncatedQ, t: f64, tol: f64) -> DMatrix<f64> {
    let p = p_matrix(q, t, tol);
    let g = (q.w * t).exp();
    let n = q.k + 1;
    DMatrix::from_fn(n, n, |i, j| g * q.mu[j] * p[(j, i)] / q.mu[i])
}

/// `∑_i μ(i)|x_i|` for a dense vector on `0..K`.
pub fn mu_norm_dense(x: &[f64], mu: &[f64]) -> f64 {
    x.iter().zip(mu).map(|(a, m)| m * a.abs()).sum()
}

pub(crate) fn dvec(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}
