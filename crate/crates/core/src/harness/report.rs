//! CSV/JSON outputs and the loader that reads them back.
//!
//! Files written by [`report`] into the output directory:
//!
//! | file               | content                                           |
//! |--------------------|---------------------------------------------------|
//! | `convergence.csv`  | `N,replicates,mean_sup_err,sd,q10,q90`            |
//! | `sup_errors.csv`   | `N,replicate,sup_err`                             |
//! | `table.json`       | the full [`ConvergenceTable`]                     |
//! | `fit.json`         | the [`RateFit`], when one was computed            |
//! | `exceedance.json`  | the [`ExceedanceCurve`], when one was computed    |
//! | `summary.txt`      | human-readable digest                             |
//! | `config.toml`      | the resolved plan                                 |
//!
//! Floats are written in Rust's shortest round-trip form, so reading a file
//! back reproduces the in-memory values exactly.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::convergence::{ConvergenceRow, ConvergenceTable};
use super::fit::{ExceedanceCurve, RateFit};
use super::plan::ExperimentPlan;
use crate::error::{Error, Result};
use crate::ode::{eval_solution, OdeSolution};
use crate::ssa::Simulation;

pub const CONVERGENCE_HEADER: [&str; 6] = ["N", "replicates", "mean_sup_err", "sd", "q10", "q90"];

/// Everything a convergence run produced.
#[derive(Clone, Debug, Default)]
pub struct Outputs<'a> {
    pub table: Option<&'a ConvergenceTable>,
    pub fit: Option<&'a RateFit>,
    pub exceedance: Option<&'a ExceedanceCurve>,
}

pub fn report(plan: &ExperimentPlan, outputs: &Outputs<'_>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.toml"), plan.to_toml()?)?;
    let empty;
    let table = match outputs.table {
        Some(t) => t,
        None => {
            empty = ConvergenceTable::empty(plan.model.name(), plan.t_end);
            &empty
        }
    };
    write_convergence_csv(&dir.join("convergence.csv"), table)?;
    write_sup_errors_csv(&dir.join("sup_errors.csv"), table)?;
    write_json(&dir.join("table.json"), table)?;
    if let Some(fit) = outputs.fit {
        write_json(&dir.join("fit.json"), fit)?;
    }
    if let Some(ex) = outputs.exceedance {
        write_json(&dir.join("exceedance.json"), ex)?;
    }
    fs::write(dir.join("summary.txt"), summary(table, outputs.fit))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn write_convergence_csv(path: &Path, table: &ConvergenceTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CONVERGENCE_HEADER)?;
    for r in &table.rows {
        w.write_record([
            r.n.to_string(),
            r.replicates.to_string(),
            r.mean_sup_err.to_string(),
            r.sd.to_string(),
            r.q10.to_string(),
            r.q90.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sup_errors_csv(path: &Path, table: &ConvergenceTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["N", "replicate", "sup_err"])?;
    for r in &table.rows {
        for (i, e) in r.errors.iter().enumerate() {
            w.write_record([r.n.to_string(), i.to_string(), e.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One line per row of `convergence.csv`: `(N, replicates, mean, sd, q10, q90)`.
pub fn read_convergence_csv(path: &Path) -> Result<Vec<(u64, usize, f64, f64, f64, f64)>> {
    let mut rd = csv::Reader::from_path(path)?;
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != CONVERGENCE_HEADER {
        return Err(Error::Config(format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for rec in rd.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

/// Reads `table.json` from an output directory and checks it against
/// `convergence.csv` next to it.
pub fn load_table(dir: &Path) -> Result<ConvergenceTable> {
    let table: ConvergenceTable = serde_json::from_reader(File::open(dir.join("table.json"))?)?;
    let csv_rows = read_convergence_csv(&dir.join("convergence.csv"))?;
    let same = csv_rows.len() == table.rows.len()
        && csv_rows.iter().zip(&table.rows).all(|(c, r)| *c == row_tuple(r));
    if !same {
        return Err(Error::Config("convergence.csv disagrees with table.json".into()));
    }
    Ok(table)
}

fn row_tuple(r: &ConvergenceRow) -> (u64, usize, f64, f64, f64, f64) {
    (r.n, r.replicates, r.mean_sup_err, r.sd, r.q10, r.q90)
}

pub fn summary(table: &ConvergenceTable, fit: Option<&RateFit>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "model: {}  T = {}", table.model, table.t_end);
    let _ = writeln!(
        s,
        "Xi_T = {:.6}  k* = {:.6}  initial-error gate = {:.3e}",
        table.gate.xi, table.gate.k_star, table.gate.bound
    );
    let _ = writeln!(s, "deterministic tail uncertainty: {:.1e}", table.tail_uncertainty);
    let _ = writeln!(s, "{:>8} {:>5} {:>12} {:>12} {:>12} {:>12}", "N", "reps", "mean", "sd", "q10", "q90");
    for r in &table.rows {
        let _ = writeln!(
            s,
            "{:>8} {:>5} {:>12.5e} {:>12.5e} {:>12.5e} {:>12.5e}",
            r.n, r.replicates, r.mean_sup_err, r.sd, r.q10, r.q90
        );
    }
    if let Some(f) = fit {
        let _ = writeln!(
            s,
            "slope ({}) = {:.4}  95% CI [{:.4}, {:.4}]  prefactor = {:.4}",
            f.correction,
            f.slope,
            f.ci.0,
            f.ci.1,
            f.prefactor()
        );
    }
    for w in &table.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    s
}

/// `(time, key, value)` records of a trajectory at its grid times, with keys
/// `S{r}`, `x_{j}` and `mN_{k}`.
pub fn trajectory_records(sim: &Simulation) -> Vec<(f64, String, f64)> {
    let tr = &sim.trajectory;
    let n = tr.n_scale as f64;
    let mut out = Vec::new();
    for (g, &t) in tr.grid.iter().enumerate() {
        for (c, r) in tr.tracked_r.iter().enumerate() {
            out.push((t, format!("S{r}"), tr.moments[g][c]));
        }
        for (j, count) in tr.states[g].iter() {
            out.push((t, format!("x_{j}"), count as f64 / n));
        }
        for (c, k) in sim.martingale.components.iter().enumerate() {
            out.push((t, format!("mN_{k}"), sim.martingale.m_n[g][c]));
        }
    }
    out
}

pub fn write_trajectory_csv(path: &Path, sim: &Simulation) -> Result<()> {
    write_records_csv(path, &trajectory_records(sim))
}

/// One JSON object per grid time: `{"time": t, "<key>": value, ...}`.
pub fn write_trajectory_jsonl(path: &Path, sim: &Simulation) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let mut current: Option<(f64, serde_json::Map<String, serde_json::Value>)> = None;
    let flush = |w: &mut BufWriter<File>, m: serde_json::Map<String, serde_json::Value>| -> Result<()> {
        serde_json::to_writer(&mut *w, &m)?;
        w.write_all(b"\n")?;
        Ok(())
    };
    for (t, key, value) in trajectory_records(sim) {
        if current.as_ref().map(|c| c.0) != Some(t) {
            if let Some((_, m)) = current.take() {
                flush(&mut w, m)?;
            }
            let mut m = serde_json::Map::new();
            m.insert("time".into(), t.into());
            current = Some((t, m));
        }
        current.as_mut().expect("set above").1.insert(key, value.into());
    }
    if let Some((_, m)) = current {
        flush(&mut w, m)?;
    }
    w.flush()?;
    Ok(())
}

/// The deterministic solution at `times` as `time,key,value` with keys
/// `x_{j}` (nonzero entries) and `mu_norm`.
pub fn write_solution_csv(path: &Path, sol: &OdeSolution, times: &[f64]) -> Result<()> {
    let mut rec = Vec::new();
    for &t in times {
        let x = eval_solution(sol, t)?;
        for (j, v) in x.iter().enumerate() {
            if *v != 0.0 {
                rec.push((t, format!("x_{j}"), *v));
            }
        }
        rec.push((t, "mu_norm".to_string(), sol.mu_norm(&x)));
    }
    write_records_csv(path, &rec)
}

fn write_records_csv(path: &Path, rec: &[(f64, String, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["time", "key", "value"])?;
    for (t, k, v) in rec {
        w.write_record([t.to_string(), k.clone(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records_csv(path: &Path) -> Result<Vec<(f64, String, f64)>> {
    let mut rd = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in rd.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_table_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let plan = ExperimentPlan::default();
        report(&plan, &Outputs::default(), dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
        assert_eq!(text, "N,replicates,mean_sup_err,sd,q10,q90\n");
        assert!(load_table(dir.path()).unwrap().rows.is_empty());
    }

    #[test]
    fn one_row_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut table = ConvergenceTable::empty("kretzschmar", 2.0);
        table.rows.push(ConvergenceRow::from_errors(100, vec![0.1, 0.2 / 3.0, 1e-7]));
        report(&ExperimentPlan::default(), &Outputs { table: Some(&table), ..Outputs::default() }, dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(text.lines().nth(1).unwrap().split(',').count(), 6);
        assert_eq!(load_table(dir.path()).unwrap(), table);
    }
}
