//! The convergence experiment around the law of large numbers: plans,
//! the sup-error measurement, rate fits and reports.

mod convergence;
mod fit;
mod plan;
mod report;

pub use convergence::{
    deterministic_solution, initial_errors, mu_distance, run_convergence, run_convergence_for, scale,
    ConvergenceRow, ConvergenceTable, Gate, SupError, ROW_SEED_STRIDE,
};
pub use fit::{exceedance_probe, fit_rate, fit_rate_with, Correction, ExceedanceCurve, RateFit, BOOTSTRAP_RESAMPLES};
pub use plan::{ExperimentPlan, FiniteSpec, ModelSpec, Rounding, SolverSettings};
pub use report::{
    load_table, read_convergence_csv, read_records_csv, report, summary, trajectory_records, write_convergence_csv,
    write_json, write_solution_csv, write_sup_errors_csv, write_trajectory_csv, write_trajectory_jsonl, Outputs,
    CONVERGENCE_HEADER,
};
