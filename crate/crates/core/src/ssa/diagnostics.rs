//! Statistical checks on ensembles and post-hoc replays of single paths.

use super::{EnsembleSummary, Trajectory};
use crate::error::{Error, Result};
use crate::model::{check_rates, PopulationModel};

/// Ensemble mean of `m_N^k(t)` divided by its standard error, per grid time.
/// A grid time where every replicate is exactly zero scores 0.
pub fn martingale_mean_test(summary: &EnsembleSummary, k: usize) -> Result<Vec<f64>> {
    let key = format!("mN{k}");
    let obs = summary
        .observable(&key)
        .ok_or_else(|| Error::InvalidParam(format!("component {k} was not tracked")))?;
    Ok(z_scores(&obs.mean, &obs.std_error()))
}

fn z_scores(mean: &[f64], se: &[f64]) -> Vec<f64> {
    mean.iter()
        .zip(se)
        .map(|(&m, &s)| if m == 0.0 { 0.0 } else { m / s })
        .collect()
}

/// Margin `bound(t) − mean S_r(t) − 2·SE` per grid time for the bound
/// `E S_r(t) ≤ (S_r(0) + N k_{r4} t) e^{(k_{r1} + C k_{r2}) t}`, with
/// `C = 2(C₀ + k₀₄T)e^{k₀₁T}`, `C₀ = N⁻¹S₀(0)` and `T` the last grid time.
pub fn moment_bound_check<M: PopulationModel + ?Sized>(summary: &EnsembleSummary, model: &M, r: usize) -> Result<Vec<f64>> {
    let consts = model.moment_constants();
    let k1 = consts.k(r, 1)?;
    let k2 = consts.k(r, 2)?;
    let k4 = consts.k(r, 4)?;
    let key = format!("S{r}");
    let obs = summary
        .observable(&key)
        .ok_or_else(|| Error::InvalidParam(format!("moment order {r} was not tracked")))?;
    let ws = model.weights();
    let n = summary.n_scale as f64;
    let s_init = crate::moments::s_r(&summary.initial, ws, r);
    let t_end = summary.grid.last().copied().unwrap_or(0.0);
    let c = if k2 == 0.0 {
        0.0
    } else {
        let c0 = summary.initial.total() as f64 / n;
        2.0 * (c0 + consts.k(0, 4)? * t_end) * (consts.k(0, 1)? * t_end).exp()
    };
    let se = obs.std_error();
    Ok(summary
        .grid
        .iter()
        .enumerate()
        .map(|(g, &t)| (s_init + n * k4 * t) * ((k1 + c * k2) * t).exp() - obs.mean[g] - 2.0 * se[g])
        .collect())
}

/// z-scores of the ensemble mean of `M_r(t)² − N∫₀ᵗV_r` per grid time.
pub fn quadratic_variation_test(summary: &EnsembleSummary, r: usize) -> Result<Vec<f64>> {
    let mk = format!("M{r}");
    let vk = format!("NV{r}");
    if summary.observable(&mk).is_none() {
        return Err(Error::InvalidParam(format!("moment order {r} was not tracked")));
    }
    let mut mean = Vec::new();
    let mut se = Vec::new();
    for g in 0..summary.grid.len() {
        let d: Vec<f64> = summary
            .replicates
            .iter()
            .map(|rep| rep.values[&mk][g].powi(2) - rep.values[&vk][g])
            .collect();
        mean.push(crate::stats::mean(&d));
        se.push(crate::stats::std_error(&d));
    }
    Ok(z_scores(&mean, &se))
}

/// Recomputes `m_N^k` at the grid times from the stored jumps alone:
/// state increments minus `∫F₀^k` with `F₀` evaluated at the finite-`N`
/// rates. Requires a trajectory simulated with `store_events`.
pub fn replay_martingale<M: PopulationModel + ?Sized>(
    model: &M,
    traj: &Trajectory,
    components: &[usize],
) -> Result<Vec<Vec<f64>>> {
    if traj.jump_times.len() as u64 != traj.event_count {
        return Err(Error::InvalidParam("trajectory was recorded without events".into()));
    }
    let n = traj.n_scale as f64;
    let mut counts = traj.initial.clone();
    let x_of = |s: &crate::state::SparseState| s.scaled(n, 0);
    let x_init = x_of(&counts);
    let comp = |x: &[f64], k: usize| x.get(k).copied().unwrap_or(0.0);
    let drift_at = |x: &[f64]| -> Result<Vec<f64>> {
        let mut buf = Vec::new();
        model.visit_channels(x, 1.0 / n, &mut |j, r| buf.push((j, r)));
        check_rates(&buf)?;
        Ok(components
            .iter()
            .map(|&k| buf.iter().map(|(j, r)| j.get(k) as f64 * r).sum())
            .collect())
    };

    let mut out = Vec::with_capacity(traj.grid.len());
    let mut integral = vec![0.0; components.len()];
    let mut t = 0.0;
    let mut x = x_init.clone();
    let mut drift = drift_at(&x)?;
    let mut gi = 0;
    for (&tj, jump) in traj.jump_times.iter().zip(&traj.jumps) {
        while gi < traj.grid.len() && traj.grid[gi] < tj {
            let h = traj.grid[gi] - t;
            out.push(
                components
                    .iter()
                    .enumerate()
                    .map(|(c, &k)| comp(&x, k) - comp(&x_init, k) - (integral[c] + h * drift[c]))
                    .collect(),
            );
            gi += 1;
        }
        for c in 0..components.len() {
            integral[c] += (tj - t) * drift[c];
        }
        for (i, v) in jump.iter() {
            counts.add(i, v as i64)?;
        }
        t = tj;
        x = x_of(&counts);
        drift = drift_at(&x)?;
    }
    while gi < traj.grid.len() {
        let h = traj.grid[gi] - t;
        out.push(
            components
                .iter()
                .enumerate()
                .map(|(c, &k)| comp(&x, k) - comp(&x_init, k) - (integral[c] + h * drift[c]))
                .collect(),
        );
        gi += 1;
    }
    Ok(out)
}
