//! Exact (Gillespie) simulation of `X_N` with online tracking of the
//! martingales `m_N` and `M_r`.

mod diagnostics;
mod ensemble;
mod sampler;

pub use diagnostics::{moment_bound_check, quadratic_variation_test, martingale_mean_test, replay_martingale};
pub use ensemble::{ensemble, ensemble_with, EnsembleSummary, ObservableStats, ReplicateFailure, ReplicateRecord};
pub use sampler::{pick_linear, ChannelSampler, TREE_THRESHOLD};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jump::JumpVector;
use crate::model::PopulationModel;
use crate::moments::{d_weighted, s_r};
use crate::state::SparseState;

/// Generator behind every trajectory: ChaCha with 8 rounds seeded through
/// `seed_from_u64`.
pub type TrajectoryRng = ChaCha8Rng;

pub fn trajectory_rng(seed: u64) -> TrajectoryRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// System size `N`.
    pub n_scale: u64,
    pub t_end: f64,
    pub seed: u64,
    /// Sorted recording times in `[0, t_end]`.
    pub record_grid: Vec<f64>,
    /// Moment orders `r` whose `S_r`, `M_r` and `N∫V_r` are recorded.
    pub tracked_r: Vec<usize>,
    /// Types `k` whose martingale coordinate `m_N^k` is recorded.
    pub tracked_components: Vec<usize>,
    pub max_events: u64,
    /// Keep the full list of jump times and jumps.
    pub store_events: bool,
    /// Threshold `C` for `τ₀ = inf{t : S₀ ≥ NC}`.
    pub stop_c: Option<f64>,
    /// Threshold `a` for `τ(a,ζ) = inf{t : ∑_J α_J d(J,ζ) ≥ a}`.
    pub stop_a: Option<f64>,
}

impl SimConfig {
    /// `points` equally spaced recording times on `[0, t_end]`, tracking `S₀`, `S₁`
    /// and `m_N^0`.
    pub fn new(n_scale: u64, t_end: f64, seed: u64) -> Self {
        Self {
            n_scale,
            t_end,
            seed,
            record_grid: uniform_grid(t_end, 20),
            tracked_r: vec![0, 1],
            tracked_components: vec![0],
            max_events: 1_000_000_000,
            store_events: true,
            stop_c: None,
            stop_a: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_scale == 0 {
            return Err(Error::InvalidParam("N must be at least 1".into()));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidParam(format!("t_end must be positive, got {}", self.t_end)));
        }
        if self.record_grid.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParam("record grid must be sorted".into()));
        }
        if self.record_grid.iter().any(|&t| !(0.0..=self.t_end).contains(&t)) {
            return Err(Error::InvalidParam("record grid must lie in [0, t_end]".into()));
        }
        Ok(())
    }
}

/// `0, T/m, …, T`.
pub fn uniform_grid(t_end: f64, intervals: usize) -> Vec<f64> {
    (0..=intervals).map(|i| t_end * i as f64 / intervals as f64).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub n_scale: u64,
    pub initial: SparseState,
    pub grid: Vec<f64>,
    /// `X(t)` at each grid time.
    pub states: Vec<SparseState>,
    pub tracked_r: Vec<usize>,
    /// `S_r(X(t))` at grid times, indexed `[grid][tracked r]`.
    pub moments: Vec<Vec<f64>>,
    pub event_count: u64,
    /// Empty unless `store_events` was set.
    pub jump_times: Vec<f64>,
    pub jumps: Vec<JumpVector>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MartingaleRecord {
    pub components: Vec<usize>,
    /// `m_N^k(t) = x_N^k(t) − x_N^k(0) − ∫₀ᵗ F₀^k(x_N)`, indexed `[grid][component]`.
    pub m_n: Vec<Vec<f64>>,
    pub orders: Vec<usize>,
    /// `M_r(t) = S_r(t) − S_r(0) − N∫₀ᵗ U_r(x_N)`, indexed `[grid][order]`.
    pub m_r: Vec<Vec<f64>>,
    /// `N∫₀ᵗ V_r(x_N)`, indexed `[grid][order]`.
    pub qv: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingReport {
    pub c: Option<f64>,
    pub a: Option<f64>,
    /// `f64::INFINITY` when not reached before `T` (or not monitored).
    pub tau0: f64,
    pub tau_az: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub trajectory: Trajectory,
    pub martingale: MartingaleRecord,
    pub stopping: StoppingReport,
}

/// Receives the path piece by piece.
pub trait PathObserver {
    /// The process sits in `state` (scaled: `x`) on `[t0, t1)`; the last
    /// piece ends at `T` and includes it.
    fn hold(&mut self, t0: f64, t1: f64, x: &[f64], state: &SparseState);

    /// Per-trajectory scalar retained by ensembles.
    fn statistic(&self) -> f64 {
        f64::NAN
    }
}

impl PathObserver for () {
    fn hold(&mut self, _: f64, _: f64, _: &[f64], _: &SparseState) {}
}

/// `sup_t N⁻¹S₀(X(t))`.
#[derive(Debug, Default)]
pub struct PeakDensity {
    peak: f64,
    n: f64,
}

impl PeakDensity {
    pub fn new(n_scale: u64) -> Self {
        Self { peak: 0.0, n: n_scale as f64 }
    }
}

impl PathObserver for PeakDensity {
    fn hold(&mut self, _: f64, _: f64, _: &[f64], state: &SparseState) {
        self.peak = self.peak.max(state.total() as f64 / self.n);
    }

    fn statistic(&self) -> f64 {
        self.peak
    }
}

pub fn simulate<M: PopulationModel + ?Sized>(model: &M, x0: &SparseState, cfg: &SimConfig) -> Result<Simulation> {
    simulate_observed(model, x0, cfg, &mut ())
}

/// Rate-weighted projections of the active channels at one state.
struct Rates {
    total: f64,
    drift: Vec<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
    spread: f64,
}

pub fn simulate_observed<M: PopulationModel + ?Sized>(
    model: &M,
    x0: &SparseState,
    cfg: &SimConfig,
    observer: &mut dyn PathObserver,
) -> Result<Simulation> {
    cfg.validate()?;
    let ws = model.weights();
    let n = cfg.n_scale as f64;
    let inv_n = 1.0 / n;
    let t_end = cfg.t_end;

    let mut counts = x0.clone();
    let mut x = counts.scaled(n, 0);
    let x_init: Vec<f64> = cfg
        .tracked_components
        .iter()
        .map(|&k| x.get(k).copied().unwrap_or(0.0))
        .collect();
    let s_init: Vec<f64> = cfg.tracked_r.iter().map(|&r| s_r(&counts, ws, r)).collect();

    let slot_of = |i: usize| cfg.tracked_components.iter().position(|&k| k == i);
    let n_comp = cfg.tracked_components.len();
    let n_ord = cfg.tracked_r.len();

    let mut rng = trajectory_rng(cfg.seed);
    let mut sampler = ChannelSampler::new();
    let mut buf: Vec<(JumpVector, f64)> = Vec::new();

    let mut acc_drift = vec![0.0; n_comp];
    let mut acc_u = vec![0.0; n_ord];
    let mut acc_v = vec![0.0; n_ord];

    let mut traj = Trajectory {
        n_scale: cfg.n_scale,
        initial: x0.clone(),
        grid: cfg.record_grid.clone(),
        states: Vec::with_capacity(cfg.record_grid.len()),
        tracked_r: cfg.tracked_r.clone(),
        moments: Vec::with_capacity(cfg.record_grid.len()),
        event_count: 0,
        jump_times: Vec::new(),
        jumps: Vec::new(),
    };
    let mut mart = MartingaleRecord {
        components: cfg.tracked_components.clone(),
        m_n: Vec::new(),
        orders: cfg.tracked_r.clone(),
        m_r: Vec::new(),
        qv: Vec::new(),
    };
    let mut stop = StoppingReport { c: cfg.stop_c, a: cfg.stop_a, tau0: f64::INFINITY, tau_az: f64::INFINITY };

    let mut t = 0.0;
    let mut gi = 0;
    loop {
        buf.clear();
        model.visit_channels(&x, inv_n, &mut |j, r| buf.push((j, r)));
        let rates = project(&buf, cfg, ws, &slot_of)?;

        if let Some(c) = cfg.stop_c {
            if stop.tau0.is_infinite() && counts.total() as f64 >= n * c {
                stop.tau0 = t;
            }
        }
        if let Some(a) = cfg.stop_a {
            if stop.tau_az.is_infinite() && rates.spread >= a {
                stop.tau_az = t;
            }
        }

        let lam = n * rates.total;
        if !lam.is_finite() {
            return Err(Error::RateOverflow { time: t });
        }
        let dt = if lam > 0.0 {
            -(1.0 - rng.gen::<f64>()).ln() / lam
        } else {
            f64::INFINITY
        };
        let t_next = t + dt;

        while gi < traj.grid.len() && traj.grid[gi] < t_next {
            let g = traj.grid[gi];
            let h = g - t;
            traj.states.push(counts.clone());
            let s_now: Vec<f64> = cfg.tracked_r.iter().map(|&r| s_r(&counts, ws, r)).collect();
            mart.m_n.push(
                (0..n_comp)
                    .map(|c| {
                        let k = cfg.tracked_components[c];
                        x.get(k).copied().unwrap_or(0.0) - x_init[c] - (acc_drift[c] + h * rates.drift[c])
                    })
                    .collect(),
            );
            mart.m_r.push((0..n_ord).map(|c| s_now[c] - s_init[c] - n * (acc_u[c] + h * rates.u[c])).collect());
            mart.qv.push((0..n_ord).map(|c| n * (acc_v[c] + h * rates.v[c])).collect());
            traj.moments.push(s_now);
            gi += 1;
        }

        if t_next > t_end {
            observer.hold(t, t_end, &x, &counts);
            break;
        }
        observer.hold(t, t_next, &x, &counts);

        for c in 0..n_comp {
            acc_drift[c] += dt * rates.drift[c];
        }
        for c in 0..n_ord {
            acc_u[c] += dt * rates.u[c];
            acc_v[c] += dt * rates.v[c];
        }

        let target = rng.gen::<f64>() * rates.total;
        let pick = sampler.pick(buf.iter().map(|&(_, r)| r), target);
        let jump = buf[pick].0;
        for (i, v) in jump.iter() {
            counts.add(i, v as i64).map_err(|_| Error::NegativeCount { index: i, jump: jump.to_string() })?;
            if i >= x.len() {
                x.resize(i + 1, 0.0);
            }
            x[i] = counts.get(i) as f64 / n;
        }
        t = t_next;
        traj.event_count += 1;
        if cfg.store_events {
            traj.jump_times.push(t);
            traj.jumps.push(jump);
        }
        if traj.event_count >= cfg.max_events {
            return Err(Error::ExplosionGuard { events: traj.event_count, time: t });
        }
    }

    Ok(Simulation { trajectory: traj, martingale: mart, stopping: stop })
}

fn project(
    buf: &[(JumpVector, f64)],
    cfg: &SimConfig,
    ws: &crate::weights::WeightSystem,
    slot_of: &dyn Fn(usize) -> Option<usize>,
) -> Result<Rates> {
    crate::model::check_rates(buf)?;
    let mut out = Rates {
        total: 0.0,
        drift: vec![0.0; cfg.tracked_components.len()],
        u: vec![0.0; cfg.tracked_r.len()],
        v: vec![0.0; cfg.tracked_r.len()],
        spread: 0.0,
    };
    for &(j, rate) in buf {
        out.total += rate;
        for (i, v) in j.iter() {
            if let Some(c) = slot_of(i) {
                out.drift[c] += v as f64 * rate;
            }
        }
        for (c, &r) in cfg.tracked_r.iter().enumerate() {
            let inc = j.dot(|i| ws.nu.eval_pow(i, r));
            out.u[c] += rate * inc;
            out.v[c] += rate * inc * inc;
        }
        if cfg.stop_a.is_some() {
            out.spread += rate * d_weighted(&j, ws);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::FiniteTestModel;

    #[test]
    fn zero_rate_model_is_constant() {
        let m = FiniteTestModel::pure_death(0.0).unwrap();
        let x0 = SparseState::from_pairs(&[(0, 50)]);
        let sim = simulate(&m, &x0, &SimConfig::new(50, 1.0, 1)).unwrap();
        assert_eq!(sim.trajectory.event_count, 0);
        assert!(sim.trajectory.states.iter().all(|s| *s == x0));
        assert!(sim.martingale.m_n.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn pure_death_decrements() {
        let m = FiniteTestModel::pure_death(1.0).unwrap();
        let x0 = SparseState::from_pairs(&[(0, 200)]);
        let sim = simulate(&m, &x0, &SimConfig::new(200, 1.0, 7)).unwrap();
        let tr = &sim.trajectory;
        let mut s = x0.clone();
        for j in &tr.jumps {
            let before = s.total();
            s.add(0, j.get(0) as i64).unwrap();
            assert_eq!(s.total() + 1, before);
        }
        assert!(tr.moments.windows(2).all(|w| w[1][0] <= w[0][0]));
    }

    #[test]
    fn seed_determines_path() {
        let m = FiniteTestModel::birth_death(1.0, 1.0, None).unwrap();
        let x0 = SparseState::from_pairs(&[(0, 30)]);
        let cfg = SimConfig::new(30, 2.0, 99);
        assert_eq!(simulate(&m, &x0, &cfg).unwrap(), simulate(&m, &x0, &cfg).unwrap());
        let other = SimConfig { seed: 100, ..cfg.clone() };
        assert_ne!(simulate(&m, &x0, &cfg).unwrap(), simulate(&m, &x0, &other).unwrap());
    }

    #[test]
    fn martingales_start_at_zero() {
        let m = FiniteTestModel::birth_death(2.0, 1.0, None).unwrap();
        let x0 = SparseState::from_pairs(&[(0, 40)]);
        let sim = simulate(&m, &x0, &SimConfig::new(40, 1.0, 3)).unwrap();
        assert!(sim.martingale.m_n[0].iter().all(|&v| v == 0.0));
        assert!(sim.martingale.m_r[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn event_cap_trips() {
        let m = FiniteTestModel::birth_death(1.0, 1.0, None).unwrap();
        let x0 = SparseState::from_pairs(&[(0, 100)]);
        let cfg = SimConfig { max_events: 10, ..SimConfig::new(100, 5.0, 1) };
        assert!(matches!(simulate(&m, &x0, &cfg), Err(Error::ExplosionGuard { events: 10, .. })));
    }

    #[test]
    fn stopping_times_are_jump_times() {
        let m = FiniteTestModel::birth_death(3.0, 1.0, None).unwrap();
        let x0 = SparseState::from_pairs(&[(0, 20)]);
        let cfg = SimConfig { stop_c: Some(1.5), stop_a: Some(4.0), ..SimConfig::new(20, 2.0, 5) };
        let sim = simulate(&m, &x0, &cfg).unwrap();
        for tau in [sim.stopping.tau0, sim.stopping.tau_az] {
            assert!(tau.is_infinite() || tau == 0.0 || sim.trajectory.jump_times.contains(&tau));
        }
    }
}
