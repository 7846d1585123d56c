//! The model abstraction: jump channels with density-dependent rates plus
//! the linear/nonlinear split of the mean drift.

use crate::error::{Error, Result};
use crate::jump::JumpVector;
use crate::state::Support;
use crate::weights::{MomentConstants, WeightSystem};

/// A density-dependent Markov population process `X → X + J` at rate
/// `N α_J(N⁻¹X)`, with drift `F₀(x) = ∑_J J α_J(x) = Ax + F(x)`.
pub trait PopulationModel: Send + Sync {
    fn name(&self) -> &str;

    /// Calls `visit(J, α_J(x))` for every channel whose rate at the dense
    /// scaled state `x` is not exactly zero.
    ///
    /// `inv_n` is `1/N` for the finite-size process and `0` for the
    /// deterministic limit; only channels whose rate needs a finite-size
    /// correction look at it.
    fn visit_channels(&self, x: &[f64], inv_n: f64, visit: &mut dyn FnMut(JumpVector, f64));

    /// `A_{ij}`.
    fn a_entry(&self, i: usize, j: usize) -> f64;

    /// `F(x)` on the indices `0..out.len()`, evaluated from its closed form.
    fn f_eval(&self, x: &[f64], out: &mut [f64]);

    /// Upper bound on `∑_j |J^j|` over all jumps.
    fn jstar(&self) -> usize;

    fn weights(&self) -> &WeightSystem;

    fn moment_constants(&self) -> &MomentConstants;

    /// Local Lipschitz constant `K(μ,F;z)` of `F` on the μ-ball of radius `z`.
    fn lipschitz(&self, z: f64) -> f64;

    /// Whether every jump preserves `S₀`; the drift split of such models is
    /// only valid on states with `‖x‖₁ = 1`.
    fn conserves_total(&self) -> bool {
        false
    }
}

/// Active channels at `x` as a list, rejecting non-finite rates.
pub fn active_channels<M: PopulationModel + ?Sized>(
    model: &M,
    x: &[f64],
    inv_n: f64,
) -> Result<Vec<(JumpVector, f64)>> {
    let mut out = Vec::new();
    model.visit_channels(x, inv_n, &mut |j, r| out.push((j, r)));
    check_rates(&out)?;
    Ok(out)
}

pub(crate) fn check_rates(channels: &[(JumpVector, f64)]) -> Result<()> {
    for &(j, r) in channels {
        if !r.is_finite() || r < 0.0 {
            return Err(Error::NonFiniteRate { rate: r, jump: j.to_string() });
        }
    }
    Ok(())
}

/// Dense copy of a sparse vector, long enough to hold `len` entries.
pub fn to_dense(x: &(impl Support + ?Sized), len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    x.for_each_nonzero(&mut |j, v| {
        if j >= out.len() {
            out.resize(j + 1, 0.0);
        }
        out[j] = v;
    });
    out
}

/// `F₀(x) = ∑_J J α_J(x)` on `0..=k`, in the deterministic limit.
pub fn drift_total<M: PopulationModel + ?Sized>(model: &M, x: &[f64], k: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; k + 1];
    let mut bad = None;
    model.visit_channels(x, 0.0, &mut |j, r| {
        if !r.is_finite() {
            bad.get_or_insert((j, r));
            return;
        }
        for (i, v) in j.iter() {
            if i <= k {
                out[i] += v as f64 * r;
            }
        }
    });
    if let Some((j, r)) = bad {
        return Err(Error::NonFiniteRate { rate: r, jump: j.to_string() });
    }
    Ok(out)
}

/// `‖F₀(x) − (A_K x + F(x))‖_μ` over the interior indices `0..=K−J*`.
///
/// `x` must be supported on `0..=k`.
pub fn drift_consistency<M: PopulationModel + ?Sized>(model: &M, x: &[f64], k: usize) -> Result<f64> {
    let mut xk = x.to_vec();
    xk.resize(k + 1, 0.0);
    assert!(x.iter().skip(k + 1).all(|&v| v == 0.0), "state must be supported on 0..=k");
    let total = drift_total(model, &xk, k)?;
    let section = LinearSection::new(model, k);
    let mut split = vec![0.0; k + 1];
    section.apply(&xk, &mut split);
    let mut f = vec![0.0; k + 1];
    model.f_eval(&xk, &mut f);
    let mu = &model.weights().mu;
    let interior = k.saturating_sub(model.jstar());
    Ok((0..=interior)
        .map(|i| mu.eval(i) * (total[i] - split[i] - f[i]).abs())
        .sum())
}

/// Sparse row-major copy of the section `(A_{ij})_{i,j ≤ K}`.
#[derive(Clone, Debug)]
pub struct LinearSection {
    k: usize,
    row_start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl LinearSection {
    pub fn new<M: PopulationModel + ?Sized>(model: &M, k: usize) -> Self {
        let mut row_start = Vec::with_capacity(k + 2);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for i in 0..=k {
            row_start.push(cols.len());
            for j in 0..=k {
                let a = model.a_entry(i, j);
                if a != 0.0 {
                    cols.push(j);
                    vals.push(a);
                }
            }
        }
        row_start.push(cols.len());
        Self { k, row_start, cols, vals }
    }

    /// Section of an explicitly given square matrix.
    pub fn from_dense(a: &nalgebra::DMatrix<f64>) -> Self {
        assert!(a.is_square() && a.nrows() > 0, "section must be square and nonempty");
        let k = a.nrows() - 1;
        let mut row_start = Vec::with_capacity(k + 2);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for i in 0..=k {
            row_start.push(cols.len());
            for j in 0..=k {
                if a[(i, j)] != 0.0 {
                    cols.push(j);
                    vals.push(a[(i, j)]);
                }
            }
        }
        row_start.push(cols.len());
        Self { k, row_start, cols, vals }
    }

    /// Truncation level `K`; the section is `(K+1) × (K+1)`.
    pub fn k(&self) -> usize {
        self.k
    }

    /// `out = A_K x`.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..=self.k {
            let (lo, hi) = (self.row_start[i], self.row_start[i + 1]);
            out[i] = self.cols[lo..hi]
                .iter()
                .zip(&self.vals[lo..hi])
                .map(|(&j, &a)| a * x[j])
                .sum();
        }
    }

    /// Nonzero entries `(i, j, A_{ij})` in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..=self.k).flat_map(move |i| {
            (self.row_start[i]..self.row_start[i + 1]).map(move |p| (i, self.cols[p], self.vals[p]))
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (lo, hi) = (self.row_start[i], self.row_start[i + 1]);
        match self.cols[lo..hi].binary_search(&j) {
            Ok(p) => self.vals[lo + p],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.k + 1;
        nalgebra::DMatrix::from_fn(n, n, |i, j| self.get(i, j))
    }
}
