//! Exact simulation and deterministic limits of density-dependent Markov
//! population processes with countably many types.
//!
//! The crate is organised around [`model::PopulationModel`]: a set of jump
//! channels `X → X + J` at rate `N α_J(N⁻¹X)` together with a split of the
//! mean drift into a linear part `A` and a locally Lipschitz part `F`.
//! On top of it sit
//!
//! * [`ssa`]: exact stochastic simulation with online martingale tracking,
//! * [`semigroup`]: the tilted transition semigroup on finite sections and
//!   the mild-solution solver,
//! * [`ode`]: an adaptive-truncation Runge–Kutta solver for the limit ODE,
//! * [`harness`]: the law-of-large-numbers convergence experiment.

pub mod error;
pub mod harness;
pub mod jump;
pub mod model;
pub mod models;
pub mod moments;
pub mod ode;
pub mod semigroup;
pub mod ssa;
pub mod state;
pub mod stats;
pub mod weights;

pub use error::{Error, Result};
pub use jump::JumpVector;
pub use model::PopulationModel;
pub use state::SparseState;
pub use weights::{MomentConstants, Weight, WeightSystem};
