//! Independent replicates on a thread pool with an order-stable reduction.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{simulate_observed, PathObserver, PeakDensity, SimConfig, Simulation, StoppingReport};
use crate::error::{Error, Result};
use crate::model::PopulationModel;
use crate::state::SparseState;
use crate::stats::mean_var;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableStats {
    pub mean: Vec<f64>,
    /// Unbiased sample variance per grid time.
    pub var: Vec<f64>,
    pub count: usize,
}

impl ObservableStats {
    pub fn std_error(&self) -> Vec<f64> {
        self.var.iter().map(|v| (v / self.count as f64).sqrt()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub seed: u64,
    /// Observable name → values on the grid.
    pub values: BTreeMap<String, Vec<f64>>,
    pub statistic: f64,
    pub events: u64,
    pub stopping: StoppingReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub replicate: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub n_scale: u64,
    pub initial: SparseState,
    pub grid: Vec<f64>,
    /// Keys `S{r}`, `M{r}`, `NV{r}` for tracked orders and `mN{k}` for
    /// tracked components.
    pub observables: BTreeMap<String, ObservableStats>,
    /// Successful replicates in replicate order.
    pub replicates: Vec<ReplicateRecord>,
    pub failures: Vec<ReplicateFailure>,
}

impl EnsembleSummary {
    pub fn observable(&self, key: &str) -> Option<&ObservableStats> {
        self.observables.get(key)
    }

    /// The observer statistic of every successful replicate.
    pub fn statistics(&self) -> Vec<f64> {
        self.replicates.iter().map(|r| r.statistic).collect()
    }

    pub fn values(&self, key: &str, grid_index: usize) -> Vec<f64> {
        self.replicates.iter().map(|r| r.values[key][grid_index]).collect()
    }
}

/// Replicate `i` runs with seed `cfg.seed + i`; its statistic is the peak
/// density `sup_t N⁻¹S₀`.
pub fn ensemble<M: PopulationModel + ?Sized>(
    model: &M,
    x0: &SparseState,
    cfg: &SimConfig,
    replicates: usize,
    parallelism: usize,
) -> Result<EnsembleSummary> {
    ensemble_with(model, x0, cfg, replicates, parallelism, |_| PeakDensity::new(cfg.n_scale))
}

pub fn ensemble_with<M, O, F>(
    model: &M,
    x0: &SparseState,
    cfg: &SimConfig,
    replicates: usize,
    parallelism: usize,
    make_observer: F,
) -> Result<EnsembleSummary>
where
    M: PopulationModel + ?Sized,
    O: PathObserver,
    F: Fn(usize) -> O + Sync,
{
    if replicates == 0 {
        return Err(Error::InvalidParam("at least one replicate is required".into()));
    }
    cfg.validate()?;
    let run = |i: usize| {
        let seed = cfg.seed.wrapping_add(i as u64);
        let rcfg = SimConfig { seed, store_events: false, ..cfg.clone() };
        let mut obs = make_observer(i);
        match simulate_observed(model, x0, &rcfg, &mut obs) {
            Ok(sim) => Ok(record(i, seed, &sim, obs.statistic())),
            Err(e) => Err(ReplicateFailure { replicate: i, seed, error: e.to_string() }),
        }
    };
    let outcomes: Vec<_> = if parallelism <= 1 {
        (0..replicates).map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism)
            .build()
            .map_err(|e| Error::InvalidParam(format!("thread pool: {e}")))?;
        pool.install(|| (0..replicates).into_par_iter().map(run).collect())
    };

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => records.push(r),
            Err(f) => failures.push(f),
        }
    }

    let mut observables = BTreeMap::new();
    if let Some(first) = records.first() {
        for key in first.values.keys() {
            let mut mean = Vec::with_capacity(cfg.record_grid.len());
            let mut var = Vec::with_capacity(cfg.record_grid.len());
            for g in 0..cfg.record_grid.len() {
                let column: Vec<f64> = records.iter().map(|r| r.values[key][g]).collect();
                let (m, v) = mean_var(&column);
                mean.push(m);
                var.push(v);
            }
            observables.insert(key.clone(), ObservableStats { mean, var, count: records.len() });
        }
    }

    Ok(EnsembleSummary {
        n_scale: cfg.n_scale,
        initial: x0.clone(),
        grid: cfg.record_grid.clone(),
        observables,
        replicates: records,
        failures,
    })
}

fn record(replicate: usize, seed: u64, sim: &Simulation, statistic: f64) -> ReplicateRecord {
    let tr = &sim.trajectory;
    let mg = &sim.martingale;
    let mut values = BTreeMap::new();
    for (c, r) in tr.tracked_r.iter().enumerate() {
        values.insert(format!("S{r}"), tr.moments.iter().map(|row| row[c]).collect());
        values.insert(format!("M{r}"), mg.m_r.iter().map(|row| row[c]).collect());
        values.insert(format!("NV{r}"), mg.qv.iter().map(|row| row[c]).collect());
    }
    for (c, k) in mg.components.iter().enumerate() {
        values.insert(format!("mN{k}"), mg.m_n.iter().map(|row| row[c]).collect());
    }
    ReplicateRecord {
        replicate,
        seed,
        values,
        statistic,
        events: tr.event_count,
        stopping: sim.stopping.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::FiniteTestModel;
    use crate::ssa::simulate;

    #[test]
    fn single_replicate_matches_trajectory() {
        let m = FiniteTestModel::birth_death(1.0, 0.5, None).unwrap();
        let x0 = SparseState::from_pairs(&[(0, 25)]);
        let cfg = SimConfig::new(25, 1.0, 11);
        let sum = ensemble(&m, &x0, &cfg, 1, 1).unwrap();
        let sim = simulate(&m, &x0, &cfg).unwrap();
        let s0: Vec<f64> = sim.trajectory.moments.iter().map(|r| r[0]).collect();
        assert_eq!(sum.observable("S0").unwrap().mean, s0);
        assert!(sum.observable("S0").unwrap().var.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn independent_of_thread_count() {
        let m = FiniteTestModel::birth_death(1.2, 1.0, None).unwrap();
        let x0 = SparseState::from_pairs(&[(0, 40)]);
        let cfg = SimConfig::new(40, 1.0, 5);
        let a = ensemble(&m, &x0, &cfg, 24, 1).unwrap();
        let b = ensemble(&m, &x0, &cfg, 24, 8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn failures_are_recorded() {
        let m = FiniteTestModel::birth_death(5.0, 0.0, None).unwrap();
        let x0 = SparseState::from_pairs(&[(0, 10)]);
        let cfg = SimConfig { max_events: 20, ..SimConfig::new(10, 3.0, 1) };
        let sum = ensemble(&m, &x0, &cfg, 3, 1).unwrap();
        assert_eq!(sum.failures.len(), 3);
        assert!(sum.replicates.is_empty());
    }
}
