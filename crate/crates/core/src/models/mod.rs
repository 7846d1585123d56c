//! Built-in models.

mod arrigoni;
mod finite;
mod kretzschmar;

pub use arrigoni::{arrigoni, Arrigoni, ArrigoniParams, Sequence, Suprema};
pub use finite::{finite_generator, finite_testmodel, AffineChannel, FiniteTestModel, MAX_TYPES};
pub use kretzschmar::{kretzschmar, Kretzschmar, KretzschmarParams};

use crate::jump::JumpVector;
use crate::model::PopulationModel;
use crate::weights::{MomentConstants, WeightSystem};

/// Runtime choice among the built-in models.
#[derive(Clone, Debug)]
pub enum BuiltinModel {
    Kretzschmar(Kretzschmar),
    Arrigoni(Arrigoni),
    Finite(FiniteTestModel),
}

macro_rules! delegate {
    ($self:ident, $m:ident => $e:expr) => {
        match $self {
            BuiltinModel::Kretzschmar($m) => $e,
            BuiltinModel::Arrigoni($m) => $e,
            BuiltinModel::Finite($m) => $e,
        }
    };
}

impl PopulationModel for BuiltinModel {
    fn name(&self) -> &str {
        delegate!(self, m => m.name())
    }

    fn visit_channels(&self, x: &[f64], inv_n: f64, visit: &mut dyn FnMut(JumpVector, f64)) {
        delegate!(self, m => m.visit_channels(x, inv_n, visit))
    }

    fn a_entry(&self, i: usize, j: usize) -> f64 {
        delegate!(self, m => m.a_entry(i, j))
    }

    fn f_eval(&self, x: &[f64], out: &mut [f64]) {
        delegate!(self, m => m.f_eval(x, out))
    }

    fn jstar(&self) -> usize {
        delegate!(self, m => m.jstar())
    }

    fn weights(&self) -> &WeightSystem {
        delegate!(self, m => m.weights())
    }

    fn moment_constants(&self) -> &MomentConstants {
        delegate!(self, m => m.moment_constants())
    }

    fn lipschitz(&self, z: f64) -> f64 {
        delegate!(self, m => m.lipschitz(z))
    }

    fn conserves_total(&self) -> bool {
        delegate!(self, m => m.conserves_total())
    }
}
