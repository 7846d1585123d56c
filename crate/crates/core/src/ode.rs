//! Dormand–Prince 5(4) integration of `dx/dt = A_K x + F(x)` on a section
//! `0..=K` that widens whenever mass reaches the boundary band.

use crate::error::{Error, Result};
use crate::model::{LinearSection, PopulationModel};
use crate::state::Support;

#[derive(Clone, Debug, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    /// Absolute tolerance in the μ-norm; also the threshold below which
    /// negative components are projected to zero.
    pub atol: f64,
    /// Largest μ-mass allowed in the boundary band `K−2J*+1..=K`.
    pub eps_tail: f64,
    /// Starting truncation; by default the initial support plus a margin.
    pub k_initial: Option<usize>,
    /// Keep `K` fixed (no widening, no tail control).
    pub fixed_k: bool,
    pub k_max: usize,
    pub max_steps: usize,
    pub ceiling: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            eps_tail: 1e-10,
            k_initial: None,
            fixed_k: false,
            k_max: 100_000,
            max_steps: 1_000_000,
            ceiling: 1e6,
        }
    }
}

/// One accepted step with its continuous extension.
#[derive(Clone, Debug, PartialEq)]
struct DenseStep {
    t0: f64,
    h: f64,
    coeffs: [Vec<f64>; 5],
}

#[derive(Clone, Debug, PartialEq)]
pub struct OdeSolution {
    /// Step endpoints `t_0 = 0 < … < t_n = T`.
    pub times: Vec<f64>,
    /// State at each step endpoint, on the section in force at that time.
    pub values: Vec<Vec<f64>>,
    steps: Vec<DenseStep>,
    /// `(t, K)` at the start and at every widening.
    pub k_history: Vec<(f64, usize)>,
    /// Boundary-band μ-mass after each accepted step.
    pub tail_history: Vec<f64>,
    pub eps_tail: f64,
    /// Final truncation level.
    pub k: usize,
    pub rejected: usize,
    /// Number of components reset from below `−atol` to zero.
    pub projections: usize,
    mu: Vec<f64>,
}

impl OdeSolution {
    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("solution has at least one time")
    }

    /// `μ(0..=K)` for the final section.
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn mu_norm(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.mu).map(|(a, m)| m * a.abs()).sum()
    }

    pub fn steps(&self) -> usize {
        self.steps.len()
    }
}

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

struct Rhs<'a, M: ?Sized> {
    model: &'a M,
    section: LinearSection,
    f: Vec<f64>,
}

impl<'a, M: PopulationModel + ?Sized> Rhs<'a, M> {
    fn new(model: &'a M, k: usize) -> Self {
        Self { model, section: LinearSection::new(model, k), f: vec![0.0; k + 1] }
    }

    fn eval(&mut self, x: &[f64], out: &mut [f64]) {
        self.section.apply(x, out);
        self.model.f_eval(x, &mut self.f);
        for (o, f) in out.iter_mut().zip(&self.f) {
            *o += f;
        }
    }
}

pub fn ode_solve<M: PopulationModel + ?Sized>(
    model: &M,
    x0: &(impl Support + ?Sized),
    t_end: f64,
    rtol: f64,
    atol: f64,
    eps_tail: f64,
) -> Result<OdeSolution> {
    ode_solve_with(model, x0, t_end, &OdeOptions { rtol, atol, eps_tail, ..OdeOptions::default() })
}

pub fn ode_solve_with<M: PopulationModel + ?Sized>(
    model: &M,
    x0: &(impl Support + ?Sized),
    t_end: f64,
    opts: &OdeOptions,
) -> Result<OdeSolution> {
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidParam(format!("horizon must be positive, got {t_end}")));
    }
    let mu_w = &model.weights().mu;
    let band = 2 * model.jstar().max(1);
    let mut extent = 0;
    x0.for_each_nonzero(&mut |j, _| extent = extent.max(j + 1));
    let mut k = opts.k_initial.unwrap_or((extent + 2 * band).max(4 * band));
    if k + 1 < extent {
        return Err(Error::InvalidParam(format!("initial state extends past K = {k}")));
    }
    let mut mu: Vec<f64> = (0..=k).map(|i| mu_w.eval(i)).collect();
    let mut y = crate::model::to_dense(x0, k + 1);
    let tail_of = |y: &[f64], mu: &[f64], k: usize| -> f64 {
        let lo = (k + 1).saturating_sub(band);
        (lo..=k).map(|i| mu[i] * y[i].abs()).sum()
    };
    if !opts.fixed_k {
        while tail_of(&y, &mu, k) > opts.eps_tail {
            k = grow(k, opts)?;
            mu = (0..=k).map(|i| mu_w.eval(i)).collect();
            y.resize(k + 1, 0.0);
        }
    }
    let norm = |v: &[f64], mu: &[f64]| -> f64 { v.iter().zip(mu).map(|(a, m)| m * a.abs()).sum() };

    let mut rhs = Rhs::new(model, k);
    let mut stages: Vec<Vec<f64>> = vec![vec![0.0; k + 1]; 7];
    rhs.eval(&y, &mut stages[0]);

    let mut sol = OdeSolution {
        times: vec![0.0],
        values: vec![y.clone()],
        steps: Vec::new(),
        k_history: vec![(0.0, k)],
        tail_history: Vec::new(),
        eps_tail: opts.eps_tail,
        k,
        rejected: 0,
        projections: 0,
        mu: Vec::new(),
    };

    let f0 = norm(&stages[0], &mu);
    let y0n = norm(&y, &mu);
    let mut h = if f0 == 0.0 { t_end } else { (0.01 * y0n.max(opts.atol) / f0).min(t_end) };
    let h_min = 1e-14 * t_end.max(1.0);
    let mut t = 0.0;
    let mut last_rejected = false;
    let mut ynew = vec![0.0; k + 1];
    let mut tmp = vec![0.0; k + 1];
    let mut err = vec![0.0; k + 1];

    while t < t_end {
        if sol.steps.len() >= opts.max_steps {
            return Err(Error::StepUnderflow { time: t, step: h });
        }
        if t + h >= t_end || t + 1.01 * h >= t_end {
            h = t_end - t;
        }
        if h < h_min {
            return Err(Error::StepUnderflow { time: t, step: h });
        }
        for s in 1..7 {
            for i in 0..=k {
                let mut acc = y[i];
                for (l, st) in stages.iter().enumerate().take(s) {
                    if A[s][l] != 0.0 {
                        acc += h * A[s][l] * st[i];
                    }
                }
                tmp[i] = acc;
            }
            // the last stage is evaluated at the 5th-order solution (FSAL)
            if s == 6 {
                ynew.copy_from_slice(&tmp);
            }
            let (_, rest) = stages.split_at_mut(s);
            rhs.eval(&tmp, &mut rest[0]);
        }
        for i in 0..=k {
            err[i] = h * (0..7).map(|l| E[l] * stages[l][i]).sum::<f64>();
        }
        let scale = opts.atol + opts.rtol * norm(&y, &mu).max(norm(&ynew, &mu));
        let e = norm(&err, &mu) / scale;
        if !e.is_finite() {
            h *= 0.2;
            sol.rejected += 1;
            last_rejected = true;
            continue;
        }
        if e > 1.0 {
            h *= (0.9 * e.powf(-0.2)).max(0.2);
            sol.rejected += 1;
            last_rejected = true;
            continue;
        }

        let tail = tail_of(&ynew, &mu, k);
        if !opts.fixed_k && tail > opts.eps_tail {
            k = grow(k, opts)?;
            mu = (0..=k).map(|i| mu_w.eval(i)).collect();
            y.resize(k + 1, 0.0);
            for v in [&mut ynew, &mut tmp, &mut err] {
                v.resize(k + 1, 0.0);
            }
            rhs = Rhs::new(model, k);
            stages = vec![vec![0.0; k + 1]; 7];
            rhs.eval(&y, &mut stages[0]);
            sol.k_history.push((t, k));
            continue;
        }

        let mut coeffs: [Vec<f64>; 5] = Default::default();
        coeffs[0] = y.clone();
        coeffs[1] = ynew.iter().zip(&y).map(|(a, b)| a - b).collect();
        coeffs[2] = (0..=k).map(|i| h * stages[0][i] - coeffs[1][i]).collect();
        coeffs[3] = (0..=k).map(|i| coeffs[1][i] - h * stages[6][i] - coeffs[2][i]).collect();
        coeffs[4] = (0..=k).map(|i| h * (0..7).map(|l| D[l] * stages[l][i]).sum::<f64>()).collect();
        sol.steps.push(DenseStep { t0: t, h, coeffs });

        let mut projected = false;
        for v in ynew.iter_mut() {
            if *v < -opts.atol {
                *v = 0.0;
                sol.projections += 1;
                projected = true;
            }
        }
        let yn = norm(&ynew, &mu);
        t = if t + h >= t_end { t_end } else { t + h };
        if !(yn <= opts.ceiling) {
            return Err(Error::CeilingExceeded { time: t, norm: yn });
        }
        y.copy_from_slice(&ynew);
        sol.times.push(t);
        sol.values.push(y.clone());
        sol.tail_history.push(tail);
        let k7 = stages[6].clone();
        stages[0] = k7;
        if projected {
            rhs.eval(&y, &mut stages[0]);
        }

        let mut fac = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
        if last_rejected {
            fac = fac.min(1.0);
        }
        last_rejected = false;
        h *= fac;
    }

    sol.k = k;
    sol.mu = mu;
    Ok(sol)
}

fn grow(k: usize, opts: &OdeOptions) -> Result<usize> {
    let next = ((k as f64) * 1.5).ceil() as usize;
    if next > opts.k_max {
        return Err(Error::InvalidParam(format!("truncation would exceed k_max = {}", opts.k_max)));
    }
    Ok(next.max(k + 1))
}

/// `x(t)` on the final section `0..=K`; exact at step endpoints.
pub fn eval_solution(sol: &OdeSolution, t: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; sol.k + 1];
    eval_into(sol, t, &mut out)?;
    Ok(out)
}

/// Writes `x(t)` into `out` (length `K+1` of the final section).
pub fn eval_into(sol: &OdeSolution, t: f64, out: &mut [f64]) -> Result<()> {
    let t_end = sol.t_end();
    if !(0.0..=t_end).contains(&t) {
        return Err(Error::OutOfRange { time: t, t_end });
    }
    out.iter_mut().for_each(|o| *o = 0.0);
    let idx = sol.times.partition_point(|&s| s < t);
    if idx < sol.times.len() && sol.times[idx] == t {
        let v = &sol.values[idx];
        out[..v.len()].copy_from_slice(v);
        return Ok(());
    }
    let step = &sol.steps[idx - 1];
    let th = (t - step.t0) / step.h;
    let th1 = 1.0 - th;
    let [c0, c1, c2, c3, c4] = &step.coeffs;
    for i in 0..c0.len() {
        out[i] = c0[i] + th * (c1[i] + th1 * (c2[i] + th * (c3[i] + th1 * c4[i])));
    }
    Ok(())
}

/// `Ξ_T = sup_t ‖x(t)‖_μ` over every step split into four.
pub fn xi_sup(sol: &OdeSolution) -> f64 {
    let mut best = sol.mu_norm(&sol.values[0]);
    let mut buf = vec![0.0; sol.k + 1];
    for step in &sol.steps {
        for q in 1..=4 {
            let t = (step.t0 + step.h * q as f64 / 4.0).min(sol.t_end());
            eval_into(sol, t, &mut buf).expect("time inside the solution range");
            best = best.max(sol.mu_norm(&buf));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jump::JumpVector;
    use crate::models::{finite_testmodel, AffineChannel, FiniteTestModel};

    fn decay() -> FiniteTestModel {
        finite_testmodel(1, vec![AffineChannel::new(JumpVector::unit(0, -1), 0.0, &[(0, 1.0)])], None).unwrap()
    }

    fn fixed(rtol: f64) -> OdeOptions {
        OdeOptions { rtol, atol: 1e-14, fixed_k: true, k_initial: Some(0), ..OdeOptions::default() }
    }

    #[test]
    fn zero_drift_takes_one_step() {
        let m = FiniteTestModel::pure_death(0.0).unwrap();
        let sol = ode_solve_with(&m, &vec![0.4], 3.0, &fixed(1e-8)).unwrap();
        assert_eq!(sol.steps(), 1);
        assert_eq!(eval_solution(&sol, 3.0).unwrap(), vec![0.4]);
        assert_eq!(xi_sup(&sol), 0.4);
    }

    #[test]
    fn scalar_decay() {
        let rtol = 1e-9;
        let sol = ode_solve_with(&decay(), &vec![1.0], 1.0, &fixed(rtol)).unwrap();
        let end = eval_solution(&sol, 1.0).unwrap()[0];
        assert!((end - (-1f64).exp()).abs() < rtol);
        assert_eq!(eval_solution(&sol, 0.0).unwrap(), vec![1.0]);
        for w in sol.times.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let v = eval_solution(&sol, mid).unwrap()[0];
            assert!((v - (-mid).exp()).abs() < 10.0 * rtol, "t={mid}");
        }
        assert_eq!(xi_sup(&sol), 1.0);
        assert!(matches!(eval_solution(&sol, 1.5), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn grid_points_are_exact() {
        let sol = ode_solve_with(&decay(), &vec![1.0], 2.0, &fixed(1e-6)).unwrap();
        for (t, v) in sol.times.iter().zip(&sol.values) {
            assert_eq!(&eval_solution(&sol, *t).unwrap(), v);
        }
    }

    #[test]
    fn truncation_widens_with_mass() {
        let m = crate::models::kretzschmar(Default::default()).unwrap();
        let x0 = vec![0.6, 0.3, 0.1];
        let opts = OdeOptions { k_initial: Some(8), eps_tail: 1e-9, ..OdeOptions::default() };
        let sol = ode_solve_with(&m, &x0, 2.0, &opts).unwrap();
        assert!(sol.k > 8);
        assert!(sol.tail_history.iter().all(|&t| t < 1e-9));
    }
}
