//! The law-of-large-numbers experiment: sup-distance between `N⁻¹X_N` and
//! the deterministic solution, across a grid of system sizes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::plan::ExperimentPlan;
use crate::error::{Error, Result};
use crate::model::PopulationModel;
use crate::moments::{check_assumptions, sample_states};
use crate::ode::{eval_into, ode_solve_with, xi_sup, OdeOptions, OdeSolution};
use crate::ssa::{ensemble_with, PathObserver, SimConfig};
use crate::state::SparseState;
use crate::stats::{mean_var, quantile};

/// Seed offset between consecutive rows of the `N` grid.
pub const ROW_SEED_STRIDE: u64 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: u64,
    /// Successful replicates.
    pub replicates: usize,
    pub failed: usize,
    pub mean_sup_err: f64,
    pub sd: f64,
    pub q10: f64,
    pub q90: f64,
    /// Sup-error of each successful replicate, in replicate order.
    pub errors: Vec<f64>,
    /// `‖x_N(0) − x(0)‖_μ`.
    pub init_err: f64,
    /// Replicates above `K₂√(log N / N)` once a threshold is calibrated.
    pub exceedances: Option<usize>,
}

impl ConvergenceRow {
    pub fn from_errors(n: u64, errors: Vec<f64>) -> Self {
        let (m, v) = mean_var(&errors);
        Self {
            n,
            replicates: errors.len(),
            failed: 0,
            mean_sup_err: m,
            sd: v.sqrt(),
            q10: quantile(&errors, 0.1),
            q90: quantile(&errors, 0.9),
            errors,
            init_err: 0.0,
            exceedances: None,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.failed == 0
    }
}

/// The initial-condition requirement `‖x_N(0) − x(0)‖_μ ≤ ½Ξ_T e^{−(w+k*)T}`
/// with `k* = e^{wT} K(μ,F;2Ξ_T)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub xi: f64,
    pub k_star: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub model: String,
    pub t_end: f64,
    pub rows: Vec<ConvergenceRow>,
    /// Prefactor `K₁` of a fitted `K₁√(log N / N)` curve, once known.
    pub k1: Option<f64>,
    /// Exceedance multiplier `K₂`, once calibrated.
    pub k2: Option<f64>,
    pub gate: Gate,
    /// μ-mass the deterministic solution may have lost past its truncation;
    /// a stated uncertainty on every error, not added to it.
    pub tail_uncertainty: f64,
    pub warnings: Vec<String>,
}

impl ConvergenceTable {
    pub fn empty(model: &str, t_end: f64) -> Self {
        Self {
            model: model.into(),
            t_end,
            rows: Vec::new(),
            k1: None,
            k2: None,
            gate: Gate { xi: 0.0, k_star: 0.0, bound: 0.0 },
            tail_uncertainty: 0.0,
            warnings: Vec::new(),
        }
    }

    /// Counts, per row, the replicates with error above `k2·√(log N / N)`.
    pub fn calibrate(&mut self, k2: f64) {
        self.k2 = Some(k2);
        for row in &mut self.rows {
            let thr = k2 * scale(row.n);
            row.exceedances = Some(row.errors.iter().filter(|&&e| e > thr).count());
        }
    }
}

/// `√(log N / N)`.
pub fn scale(n: u64) -> f64 {
    let n = n as f64;
    (n.ln() / n).sqrt()
}

/// `‖a − b‖_μ` for dense vectors of possibly different lengths.
pub fn mu_distance(a: &[f64], b: &[f64], mu: &dyn Fn(usize) -> f64) -> f64 {
    let len = a.len().max(b.len());
    (0..len)
        .map(|i| {
            let d = a.get(i).copied().unwrap_or(0.0) - b.get(i).copied().unwrap_or(0.0);
            if d == 0.0 {
                0.0
            } else {
                mu(i) * d.abs()
            }
        })
        .sum()
}

/// Tracks `sup_t ‖x_N(t) − x(t)‖_μ` over jump times, left limits before
/// jumps and a fixed refinement grid.
pub struct SupError<'a> {
    sol: &'a OdeSolution,
    mu: Vec<f64>,
    grid: &'a [f64],
    next: usize,
    buf: Vec<f64>,
    sup: f64,
}

impl<'a> SupError<'a> {
    pub fn new(sol: &'a OdeSolution, mu: &dyn Fn(usize) -> f64, grid: &'a [f64]) -> Self {
        Self {
            sol,
            mu: (0..=sol.k).map(mu).collect(),
            grid,
            next: 0,
            buf: vec![0.0; sol.k + 1],
            sup: 0.0,
        }
    }

    fn probe(&mut self, t: f64, x: &[f64]) {
        eval_into(self.sol, t, &mut self.buf).expect("probe time inside the solution range");
        let mut d = 0.0;
        let k = self.buf.len();
        for i in 0..k.max(x.len()) {
            let a = x.get(i).copied().unwrap_or(0.0);
            let b = if i < k { self.buf[i] } else { 0.0 };
            if a != b {
                let m = if i < k { self.mu[i] } else { (i + 1) as f64 };
                d += m * (a - b).abs();
            }
        }
        self.sup = self.sup.max(d);
    }
}

impl PathObserver for SupError<'_> {
    fn hold(&mut self, t0: f64, t1: f64, x: &[f64], _state: &SparseState) {
        self.probe(t0, x);
        while self.next < self.grid.len() && self.grid[self.next] < t1 {
            let g = self.grid[self.next];
            if g > t0 {
                self.probe(g, x);
            }
            self.next += 1;
        }
        self.probe(t1, x);
    }

    fn statistic(&self) -> f64 {
        self.sup
    }
}

/// Solves the deterministic system from the plan's initial profile.
pub fn deterministic_solution<M: PopulationModel + ?Sized>(model: &M, plan: &ExperimentPlan) -> Result<OdeSolution> {
    let x0 = crate::state::densify(&plan.initial_profile(), 0);
    let opts = OdeOptions {
        rtol: plan.solver.rtol,
        atol: plan.solver.atol,
        eps_tail: plan.solver.eps_tail,
        ..OdeOptions::default()
    };
    ode_solve_with(model, &x0, plan.t_end, &opts)
}

pub fn run_convergence(plan: &ExperimentPlan) -> Result<ConvergenceTable> {
    plan.validate()?;
    let model = plan.model.build()?;
    run_convergence_for(&model, plan)
}

/// As [`run_convergence`], for any model; `plan.model` is ignored.
pub fn run_convergence_for<M: PopulationModel + ?Sized>(model: &M, plan: &ExperimentPlan) -> Result<ConvergenceTable> {
    plan.validate()?;
    let ws = model.weights();
    if plan.check_assumptions {
        let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
        let states = sample_states(model, &mut rng, plan.n_grid[0], 20, 30);
        let report = check_assumptions(model, &states, plan.n_grid[0], &[0, 1, 2])?;
        if !report.all_passed() {
            let names: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
            return Err(Error::InvalidParam(format!("model fails assumption checks: {}", names.join(", "))));
        }
    }

    let sol = deterministic_solution(model, plan)?;
    let mu = |i: usize| ws.mu.eval(i);
    let xi = xi_sup(&sol);
    let k_star = (ws.w * plan.t_end).exp() * model.lipschitz(2.0 * xi);
    let gate = Gate { xi, k_star, bound: 0.5 * xi * (-(ws.w + k_star) * plan.t_end).exp() };
    let x_init = crate::state::densify(&plan.initial_profile(), 0);
    let refine: Vec<f64> = (0..=plan.refine_points)
        .map(|i| plan.t_end * i as f64 / plan.refine_points.max(1) as f64)
        .collect();

    let mut table = ConvergenceTable::empty(model.name(), plan.t_end);
    table.gate = gate.clone();
    table.tail_uncertainty = sol.tail_history.iter().copied().fold(0.0, f64::max).max(if sol.tail_history.is_empty() {
        0.0
    } else {
        sol.eps_tail
    });

    for (row_idx, &n) in plan.n_grid.iter().enumerate() {
        let x0 = plan.initial_state(n);
        let init_err = mu_distance(&x0.scaled(n as f64, 0), &x_init, &mu);
        if init_err > gate.bound {
            table.warnings.push(format!(
                "N={n}: initial error {init_err:.3e} exceeds the gate value {:.3e}",
                gate.bound
            ));
        }
        let cfg = SimConfig {
            record_grid: vec![0.0, plan.t_end],
            tracked_r: Vec::new(),
            tracked_components: Vec::new(),
            store_events: false,
            ..SimConfig::new(n, plan.t_end, plan.seed.wrapping_add(ROW_SEED_STRIDE * row_idx as u64))
        };
        let summary = ensemble_with(model, &x0, &cfg, plan.replicates, plan.threads, |_| {
            SupError::new(&sol, &mu, &refine)
        })?;
        if summary.replicates.is_empty() {
            table
                .warnings
                .push(format!("N={n}: every replicate failed ({})", summary.failures[0].error));
            continue;
        }
        if !summary.failures.is_empty() {
            table.warnings.push(format!("N={n}: {} replicates failed; row incomplete", summary.failures.len()));
        }
        let mut row = ConvergenceRow::from_errors(n, summary.statistics());
        row.failed = summary.failures.len();
        row.init_err = init_err;
        table.rows.push(row);
    }
    Ok(table)
}

/// `‖x_N(0) − x(0)‖_μ` along the grid of a plan.
pub fn initial_errors(plan: &ExperimentPlan, mu: &dyn Fn(usize) -> f64) -> Vec<f64> {
    let x_init = crate::state::densify(&plan.initial_profile(), 0);
    plan.n_grid
        .iter()
        .map(|&n| mu_distance(&plan.initial_state(n).scaled(n as f64, 0), &x_init, mu))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::plan::{FiniteSpec, ModelSpec};
    use crate::jump::JumpVector;
    use crate::models::AffineChannel;

    #[test]
    fn zero_rate_model_has_zero_error() {
        let spec = FiniteSpec {
            n_types: 1,
            channels: vec![AffineChannel::new(JumpVector::unit(0, -1), 0.0, &[(0, 0.0)])],
            cap: None,
        };
        let plan = ExperimentPlan {
            n_grid: vec![10, 20],
            replicates: 3,
            initial: vec![(0, 0.5)],
            ..ExperimentPlan::for_model(ModelSpec::Finite(spec))
        };
        let table = run_convergence(&plan).unwrap();
        assert_eq!(table.rows.len(), 2);
        assert!(table.rows.iter().all(|r| r.errors.iter().all(|&e| e == 0.0)));
    }

    #[test]
    fn one_replicate_row() {
        let plan = ExperimentPlan {
            n_grid: vec![50],
            replicates: 1,
            t_end: 0.5,
            ..ExperimentPlan::default()
        };
        let table = run_convergence(&plan).unwrap();
        assert_eq!(table.rows.len(), 1);
        assert_eq!(table.rows[0].mean_sup_err, table.rows[0].errors[0]);
        assert!(table.rows[0].mean_sup_err > 0.0);
    }

    #[test]
    fn initial_rounding_error_vanishes() {
        let plan = ExperimentPlan { n_grid: vec![10, 100, 1000, 10000, 100000], ..ExperimentPlan::default() };
        let errs = initial_errors(&plan, &|i| (i + 1) as f64);
        assert!(errs.windows(2).all(|w| w[1] <= w[0]));
        assert!(*errs.last().unwrap() < 1e-4);
    }
}
