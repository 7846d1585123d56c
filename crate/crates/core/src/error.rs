use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("non-finite transition rate {rate} for jump {jump}")]
    NonFiniteRate { rate: f64, jump: String },

    #[error("moment constant k_{{{r}{l}}} is not available (table covers r <= {r_max})")]
    ConstantMissing { r: usize, l: usize, r_max: usize },

    #[error("total event rate is not finite at t = {time}")]
    RateOverflow { time: f64 },

    #[error("event cap of {events} reached at t = {time}; the model may be explosive")]
    ExplosionGuard { events: u64, time: f64 },

    #[error("jump {jump} would make the count of type {index} negative")]
    NegativeCount { index: usize, jump: String },

    #[error("drift condition A^T mu <= w mu fails in column {column} (excess {excess:e})")]
    DriftConditionViolated { column: usize, excess: f64 },

    #[error("Picard iteration did not converge after {iterations} sweeps (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("mu-norm {norm:e} exceeded the blow-up ceiling at t = {time}")]
    Blowup { time: f64, norm: f64 },

    #[error("step size underflow at t = {time} (h = {step:e})")]
    StepUnderflow { time: f64, step: f64 },

    #[error("solution mu-norm {norm:e} exceeded the ceiling at t = {time}")]
    CeilingExceeded { time: f64, norm: f64 },

    #[error("time {time} is outside the solution interval [0, {t_end}]")]
    OutOfRange { time: f64, t_end: f64 },

    #[error("degenerate rate fit: {0}")]
    DegenerateFit(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
