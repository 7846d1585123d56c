//! Norms, empirical moments and the numerical falsifier for the growth
//! conditions a model must satisfy.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jump::JumpVector;
use crate::model::{check_rates, to_dense, PopulationModel};
use crate::state::{SparseState, Support};
use crate::weights::{Weight, WeightSystem};

/// `‖ξ‖_μ = ∑_m μ(m)|ξ^m|`.
pub fn mu_norm(x: &(impl Support + ?Sized), ws: &WeightSystem) -> f64 {
    weighted_l1(x, &ws.mu)
}

fn weighted_l1(x: &(impl Support + ?Sized), wt: &Weight) -> f64 {
    let mut acc = 0.0;
    x.for_each_nonzero(&mut |j, v| acc += wt.eval(j) * v.abs());
    acc
}

/// `S_r(X) = ∑_j ν(j)^r X^j`.
pub fn s_r(x: &(impl Support + ?Sized), ws: &WeightSystem, r: usize) -> f64 {
    let mut acc = 0.0;
    x.for_each_nonzero(&mut |j, v| acc += ws.nu.eval_pow(j, r) * v);
    acc
}

/// `d(J,ζ) = ∑_j |J^j| ζ(j)`.
pub fn d_weighted(jump: &JumpVector, ws: &WeightSystem) -> f64 {
    jump.iter().map(|(j, v)| v.unsigned_abs() as f64 * ws.zeta.eval(j)).sum()
}

fn channels_at<M: PopulationModel + ?Sized>(model: &M, x: &[f64], inv_n: f64) -> Result<Vec<(JumpVector, f64)>> {
    let mut out = Vec::new();
    model.visit_channels(x, inv_n, &mut |j, r| out.push((j, r)));
    check_rates(&out)?;
    Ok(out)
}

fn moment_sums<M: PopulationModel + ?Sized>(model: &M, x: &[f64], inv_n: f64, r: usize) -> Result<(f64, f64)> {
    let nu = &model.weights().nu;
    let mut u = 0.0;
    let mut v = 0.0;
    for (j, rate) in channels_at(model, x, inv_n)? {
        let inc = j.dot(|i| nu.eval_pow(i, r));
        u += rate * inc;
        v += rate * inc * inc;
    }
    Ok((u, v))
}

/// `U_r(x) = ∑_J α_J(x) Jᵀν_r`.
pub fn u_r<M: PopulationModel + ?Sized>(x: &(impl Support + ?Sized), model: &M, r: usize) -> Result<f64> {
    moment_sums(model, &to_dense(x, 0), 0.0, r).map(|(u, _)| u)
}

/// `V_r(x) = ∑_J α_J(x) (Jᵀν_r)²`.
pub fn v_r<M: PopulationModel + ?Sized>(x: &(impl Support + ?Sized), model: &M, r: usize) -> Result<f64> {
    moment_sums(model, &to_dense(x, 0), 0.0, r).map(|(_, v)| v)
}

/// Outcome of one numerically checked condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub name: String,
    pub passed: bool,
    /// Smallest `bound − value` seen (positive means satisfied).
    pub worst_margin: f64,
    pub violations: usize,
    pub evaluated: usize,
}

impl ConditionResult {
    fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), passed: true, worst_margin: f64::INFINITY, violations: 0, evaluated: 0 }
    }

    /// Records `value ≤ bound` up to a relative rounding allowance.
    fn record(&mut self, value: f64, bound: f64) {
        self.evaluated += 1;
        let margin = bound - value;
        self.worst_margin = self.worst_margin.min(margin);
        if margin < -1e-10 * (1.0 + bound.abs().max(value.abs())) || margin.is_nan() {
            self.violations += 1;
            self.passed = false;
        }
    }

    fn flag(&mut self, ok: bool) {
        self.record(if ok { 0.0 } else { 1.0 }, 0.0);
    }
}

/// Per-condition results of [`check_assumptions`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub conditions: Vec<ConditionResult>,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.conditions.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&ConditionResult> {
        self.conditions.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConditionResult> {
        self.conditions.iter().filter(|c| !c.passed)
    }
}

/// Largest column index probed for `Aᵀμ ≤ wμ`.
pub const COLUMN_PROBE: usize = 256;

/// Checks the model's structural assumptions on the given count states at
/// scale `n`. A passing report means no counterexample was found.
pub fn check_assumptions<M: PopulationModel + ?Sized>(
    model: &M,
    states: &[SparseState],
    n: u64,
    r_list: &[usize],
) -> Result<AssumptionReport> {
    if states.is_empty() {
        return Err(Error::InvalidParam("check_assumptions needs at least one state".into()));
    }
    let mc = model.moment_constants();
    let ws = model.weights();
    for &r in r_list {
        mc.k(r, 1)?;
    }
    let nf = n as f64;
    let inv_n = 1.0 / nf;

    let mut weights = ConditionResult::new("weights");
    weights.flag(ws.validate().is_ok());
    let mut constants = ConditionResult::new("moment_constants");
    constants.flag(mc.validate().is_ok());

    let mut finite = ConditionResult::new("finite_rates");
    let mut influence = ConditionResult::new("bounded_influence");
    let mut lower = ConditionResult::new("jump_lower_bound");
    let mut boundary = ConditionResult::new("boundary_rule");
    let mut zeta_growth = ConditionResult::new("zeta_growth");
    let mut u_checks: Vec<_> = r_list.iter().map(|r| ConditionResult::new(format!("U{r}_bound"))).collect();
    let mut v_checks: Vec<_> = r_list
        .iter()
        .filter(|&&r| r <= mc.r_max2)
        .map(|r| ConditionResult::new(format!("V{r}_bound")))
        .collect();

    for state in states {
        let x = state.scaled(nf, 0);
        let mut channels = Vec::new();
        model.visit_channels(&x, inv_n, &mut |j, r| channels.push((j, r)));
        for &(_, r) in &channels {
            finite.flag(r.is_finite() && r >= 0.0);
        }
        if !finite.passed {
            continue;
        }
        for &(j, _) in &channels {
            influence.record(j.l1() as f64, model.jstar() as f64);
            boundary.flag(j.iter().all(|(l, v)| state.get(l) as i64 + v as i64 >= 0));
            // J^l ≤ −2 is tolerated only if the rate vanishes whenever X^l < −J^l
            let guarded = j.iter().filter(|&(_, v)| v < -1).all(|(l, v)| {
                let mut probe = state.clone();
                probe.set(l, (-v - 1) as u64);
                let mut live = false;
                model.visit_channels(&probe.scaled(nf, 0), inv_n, &mut |pj, _| live |= pj == j);
                !live
            });
            lower.flag(guarded);
        }
        let s = |r: usize| s_r(&x, ws, r);
        for (check, &r) in u_checks.iter_mut().zip(r_list) {
            let (u, _) = moment_sums(model, &x, inv_n, r)?;
            let bound = (mc.k(r, 1)? + mc.k(r, 2)? * s(0)) * s(r) + mc.k(r, 4)?;
            check.record(u, bound);
        }
        for (check, &r) in v_checks.iter_mut().zip(r_list.iter().filter(|&&r| r <= mc.r_max2)) {
            let (_, v) = moment_sums(model, &x, inv_n, r)?;
            let bound = if r == 0 {
                mc.k(0, 3)? * s(1) + mc.k(0, 5)?
            } else {
                mc.k(r, 3)? * s(mc.p(r)?) + mc.k(r, 5)?
            };
            check.record(v, bound);
        }
        let spread: f64 = channels.iter().map(|(j, r)| r * d_weighted(j, ws)).sum();
        let bound = (mc.k1_zeta * s(mc.r_zeta) + mc.k2_zeta).powf(mc.beta_zeta);
        zeta_growth.record(spread, bound);
    }

    let mut columns = ConditionResult::new("drift_columns");
    for i in 0..=COLUMN_PROBE {
        let mut col = 0.0;
        for j in 0..=COLUMN_PROBE + model.jstar() {
            let a = model.a_entry(j, i);
            if j != i && a < 0.0 {
                columns.flag(false);
            }
            col += a * ws.mu.eval(j);
        }
        columns.record(col, ws.w * ws.mu.eval(i));
    }

    let mut series = ConditionResult::new("zeta_series");
    let term = |k: usize| ws.mu.eval(k) * (model.a_entry(k, k).abs() + 1.0) / ws.zeta.eval(k).sqrt();
    let mut partial = 0.0;
    let mut next = 0;
    let mut increments = Vec::new();
    for e in 8..=16 {
        let upto = 1usize << e;
        let before = partial;
        while next < upto {
            partial += term(next);
            next += 1;
        }
        if e > 8 {
            increments.push(partial - before);
        }
    }
    for w in increments.windows(2) {
        series.record(w[1], 0.95 * w[0]);
    }
    if !partial.is_finite() {
        series.flag(false);
    }

    let mut conditions = vec![weights, constants, finite, influence, lower, boundary, columns];
    conditions.extend(u_checks);
    conditions.extend(v_checks);
    conditions.push(zeta_growth);
    conditions.push(series);
    Ok(AssumptionReport { conditions })
}

/// Random count states at scale `n` for falsification runs.
///
/// For models that conserve `S₀` the states have exactly `n` individuals
/// spread over `0..=max_index`; otherwise a few random indices receive
/// counts up to `2n`.
pub fn sample_states<M: PopulationModel + ?Sized>(
    model: &M,
    rng: &mut impl Rng,
    n: u64,
    count: usize,
    max_index: usize,
) -> Vec<SparseState> {
    (0..count)
        .map(|_| {
            if model.conserves_total() {
                let weights: Vec<f64> = (0..=max_index).map(|_| rng.gen::<f64>().powi(3)).collect();
                let total: f64 = weights.iter().sum();
                let mut s = SparseState::new();
                let mut placed = 0;
                for (j, w) in weights.iter().enumerate() {
                    let c = ((w / total) * n as f64).floor() as u64;
                    s.set(j, c);
                    placed += c;
                }
                s.set(0, s.get(0) + (n - placed));
                s
            } else {
                let occupied = rng.gen_range(1..=5.min(max_index + 1));
                let mut s = SparseState::new();
                for _ in 0..occupied {
                    let j = rng.gen_range(0..=max_index);
                    s.set(j, rng.gen_range(1..=2 * n));
                }
                s
            }
        })
        .collect()
}
