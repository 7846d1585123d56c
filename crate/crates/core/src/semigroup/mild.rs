//! Picard iteration for the mild equation
//! `x(t) = R(t)x(0) + ∫₀ᵗ R(t−s) F(x(s)) ds` on a finite section.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{build_q, dvec, mu_norm_dense, r_matrix};
use crate::error::{Error, Result};
use crate::model::PopulationModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MildOptions {
    /// Target grid step; the actual step divides `T` evenly.
    pub step: f64,
    /// Length of the time windows the fixed point is computed on, one after
    /// the other.
    pub window: f64,
    /// Picard stops once `max_grid ‖x_{m+1} − x_m‖_μ ≤ tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// μ-norm above which the solution is declared to blow up.
    pub ceiling: f64,
    /// Combine the solutions for steps `h` and `h/2` as `(4x_{h/2} − x_h)/3`.
    pub richardson: bool,
    pub series_tol: f64,
}

impl Default for MildOptions {
    fn default() -> Self {
        Self {
            step: 0.01,
            window: 0.1,
            tol: 1e-12,
            max_iter: 500,
            ceiling: 1e6,
            richardson: true,
            series_tol: 1e-15,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MildState {
    pub k: usize,
    pub times: Vec<f64>,
    /// `x(t)` on `0..=K` at each grid time.
    pub values: Vec<Vec<f64>>,
    /// Largest number of Picard sweeps any window needed.
    pub iterations: usize,
    /// Largest final residual over the windows.
    pub residual: f64,
    /// Residual after each sweep, per window (first solve only).
    pub residual_history: Vec<Vec<f64>>,
    /// `Ξ_T = max_grid ‖x(t)‖_μ`.
    pub xi: f64,
}

/// Mild solution on the section `0..=K` with `K = x0.len() − 1`.
pub fn mild_solve<M: PopulationModel + ?Sized>(model: &M, x0: &[f64], t_end: f64, tol: f64) -> Result<MildState> {
    mild_solve_with(model, x0, t_end, &MildOptions { tol, ..MildOptions::default() })
}

pub fn mild_solve_with<M: PopulationModel + ?Sized>(
    model: &M,
    x0: &[f64],
    t_end: f64,
    opts: &MildOptions,
) -> Result<MildState> {
    if x0.is_empty() {
        return Err(Error::InvalidParam("initial vector must be nonempty".into()));
    }
    if !(t_end > 0.0) || !(opts.step > 0.0) {
        return Err(Error::InvalidParam("horizon and step must be positive".into()));
    }
    let k = x0.len() - 1;
    let q = build_q(model, k)?;
    let mu = q.mu().to_vec();
    let steps = (t_end / opts.step).ceil().max(1.0) as usize;
    let h = t_end / steps as f64;

    let coarse = picard(model, &r_matrix(&q, h, opts.series_tol), &mu, x0, steps, h, opts)?;
    let (values, iterations, residual) = if opts.richardson {
        let fine = picard(model, &r_matrix(&q, h / 2.0, opts.series_tol), &mu, x0, 2 * steps, h / 2.0, opts)?;
        let values = (0..=steps)
            .map(|n| {
                coarse.values[n]
                    .iter()
                    .zip(&fine.values[2 * n])
                    .map(|(c, f)| (4.0 * f - c) / 3.0)
                    .collect()
            })
            .collect();
        (values, coarse.iterations.max(fine.iterations), coarse.residual.max(fine.residual))
    } else {
        (coarse.values, coarse.iterations, coarse.residual)
    };
    let xi = values.iter().map(|v: &Vec<f64>| mu_norm_dense(v, &mu)).fold(0.0, f64::max);
    Ok(MildState {
        k,
        times: (0..=steps).map(|n| n as f64 * h).collect(),
        values,
        iterations,
        residual,
        residual_history: coarse.history,
        xi,
    })
}

struct Sweep {
    values: Vec<Vec<f64>>,
    iterations: usize,
    residual: f64,
    history: Vec<Vec<f64>>,
}

fn picard<M: PopulationModel + ?Sized>(
    model: &M,
    rh: &DMatrix<f64>,
    mu: &[f64],
    x0: &[f64],
    steps: usize,
    h: f64,
    opts: &MildOptions,
) -> Result<Sweep> {
    let dim = x0.len();
    let per_window = ((opts.window / h).round() as usize).max(1);
    let f_of = |x: &[f64]| {
        let mut out = vec![0.0; dim];
        model.f_eval(x, &mut out);
        out
    };

    let mut values = vec![x0.to_vec()];
    let mut iterations = 0;
    let mut residual: f64 = 0.0;
    let mut history = Vec::new();
    let mut start = 0;
    while start < steps {
        let len = per_window.min(steps - start);
        let y0 = values[start].clone();
        let mut old: Vec<Vec<f64>> = vec![y0.clone(); len + 1];
        let mut hist = Vec::new();
        let mut converged = false;
        for sweep in 1..=opts.max_iter {
            let f_old: Vec<Vec<f64>> = old.iter().map(|x| f_of(x)).collect();
            let mut new = Vec::with_capacity(len + 1);
            new.push(y0.clone());
            let mut res: f64 = 0.0;
            for n in 1..=len {
                let carry: Vec<f64> = new[n - 1].iter().zip(&f_old[n - 1]).map(|(x, f)| x + 0.5 * h * f).collect();
                let prop = rh * dvec(&carry);
                let next: Vec<f64> = prop.iter().zip(&f_old[n]).map(|(p, f)| p + 0.5 * h * f).collect();
                let norm = mu_norm_dense(&next, mu);
                if !(norm <= opts.ceiling) {
                    return Err(Error::Blowup { time: (start + n) as f64 * h, norm });
                }
                let diff: Vec<f64> = next.iter().zip(&old[n]).map(|(a, b)| a - b).collect();
                res = res.max(mu_norm_dense(&diff, mu));
                new.push(next);
            }
            hist.push(res);
            old = new;
            if res <= opts.tol {
                iterations = iterations.max(sweep);
                residual = residual.max(res);
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoConvergence { iterations: opts.max_iter, residual: *hist.last().unwrap_or(&f64::NAN) });
        }
        history.push(hist);
        values.extend(old.into_iter().skip(1));
        start += len;
    }
    Ok(Sweep { values, iterations, residual, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jump::JumpVector;
    use crate::models::{finite_testmodel, AffineChannel, FiniteTestModel};
    use crate::semigroup::r_apply;

    #[test]
    fn linear_case_is_semigroup_action() {
        let m = FiniteTestModel::migration(0.8).unwrap();
        let x0 = vec![0.6, 0.4];
        let sol = mild_solve(&m, &x0, 1.5, 1e-13).unwrap();
        let q = build_q(&m, 1).unwrap();
        for (t, v) in sol.times.iter().zip(&sol.values) {
            let r = r_apply(&q, *t, &x0, 1e-15);
            for (a, b) in v.iter().zip(&r) {
                assert!((a - b).abs() < 1e-12, "t={t}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn variation_of_constants() {
        let lam = 0.7;
        let m = finite_testmodel(
            1,
            vec![
                AffineChannel::new(JumpVector::unit(0, -1), 0.0, &[(0, 1.0)]),
                AffineChannel::new(JumpVector::unit(0, 1), lam, &[]),
            ],
            None,
        )
        .unwrap();
        let x0 = 2.0;
        let sol = mild_solve(&m, &[x0], 2.0, 1e-13).unwrap();
        for (t, v) in sol.times.iter().zip(&sol.values) {
            let exact = (-t).exp() * x0 + lam * (1.0 - (-t).exp());
            assert!((v[0] - exact).abs() < 1e-8, "t={t}: {} vs {exact}", v[0]);
        }
    }

    #[test]
    fn ceiling_flags_blowup() {
        let m = FiniteTestModel::birth_death(50.0, 0.0, None).unwrap();
        let opts = MildOptions { ceiling: 10.0, ..MildOptions::default() };
        assert!(matches!(mild_solve_with(&m, &[1.0], 1.0, &opts), Err(Error::Blowup { .. })));
    }
}
