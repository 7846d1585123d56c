//! Experiment plans and their TOML form.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{
    arrigoni, finite_testmodel, kretzschmar, AffineChannel, ArrigoniParams, BuiltinModel, KretzschmarParams,
};
use crate::state::SparseState;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Kretzschmar(KretzschmarParams),
    Arrigoni(ArrigoniParams),
    Finite(FiniteSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteSpec {
    pub n_types: usize,
    pub channels: Vec<AffineChannel>,
    #[serde(default)]
    pub cap: Option<u64>,
}

impl Default for FiniteSpec {
    /// Immigration at rate 1 and death at rate `x⁰`.
    fn default() -> Self {
        use crate::jump::JumpVector;
        Self {
            n_types: 1,
            channels: vec![
                AffineChannel::new(JumpVector::unit(0, 1), 1.0, &[]),
                AffineChannel::new(JumpVector::unit(0, -1), 0.0, &[(0, 1.0)]),
            ],
            cap: None,
        }
    }
}

impl ModelSpec {
    /// Default parameters for a model named on the command line.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "kretzschmar" => Ok(Self::Kretzschmar(KretzschmarParams::default())),
            "arrigoni" => Ok(Self::Arrigoni(ArrigoniParams::default())),
            "finite" => Ok(Self::Finite(FiniteSpec::default())),
            other => Err(Error::Config(format!("unknown model '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Kretzschmar(_) => "kretzschmar",
            Self::Arrigoni(_) => "arrigoni",
            Self::Finite(_) => "finite",
        }
    }

    pub fn build(&self) -> Result<BuiltinModel> {
        Ok(match self {
            Self::Kretzschmar(p) => BuiltinModel::Kretzschmar(kretzschmar(p.clone())?),
            Self::Arrigoni(p) => BuiltinModel::Arrigoni(arrigoni(p.clone())?),
            Self::Finite(f) => BuiltinModel::Finite(finite_testmodel(f.n_types, f.channels.clone(), f.cap)?),
        })
    }

    /// The default initial profile for this model.
    pub fn default_initial(&self) -> Vec<(usize, f64)> {
        match self {
            Self::Kretzschmar(_) => vec![(0, 0.6), (1, 0.3), (2, 0.1)],
            Self::Arrigoni(_) => vec![(0, 0.5), (1, 0.5)],
            Self::Finite(_) => vec![(0, 1.0)],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    /// `X_N^j(0) = ⌊N x^j(0)⌋`.
    Floor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub rtol: f64,
    pub atol: f64,
    pub eps_tail: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-10, eps_tail: 1e-10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentPlan {
    pub n_grid: Vec<u64>,
    pub replicates: usize,
    pub t_end: f64,
    /// Scaled initial density `x(0)` as `(type, value)` pairs; empty means the
    /// model default.
    pub initial: Vec<(usize, f64)>,
    pub rounding: Rounding,
    /// Only `"model"` (the weight system shipped with the model) is known.
    pub weights: String,
    pub seed: u64,
    pub threads: usize,
    /// Equally spaced points added to the jump times when taking the sup.
    pub refine_points: usize,
    /// Run the assumption checks before simulating.
    pub check_assumptions: bool,
    pub output_dir: Option<PathBuf>,
    pub solver: SolverSettings,
    pub model: ModelSpec,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            n_grid: vec![100, 316, 1000, 3162, 10000],
            replicates: 200,
            t_end: 2.0,
            initial: Vec::new(),
            rounding: Rounding::Floor,
            weights: "model".into(),
            seed: 20240101,
            threads: 1,
            refine_points: 400,
            check_assumptions: true,
            output_dir: None,
            solver: SolverSettings::default(),
            model: ModelSpec::Kretzschmar(KretzschmarParams::default()),
        }
    }
}

impl ExperimentPlan {
    pub fn for_model(model: ModelSpec) -> Self {
        Self { model, ..Self::default() }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let plan: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// The plan with every default filled in, as TOML.
    pub fn to_toml(&self) -> Result<String> {
        let mut resolved = self.clone();
        resolved.initial = self.initial_profile();
        toml::to_string(&resolved).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn initial_profile(&self) -> Vec<(usize, f64)> {
        if self.initial.is_empty() {
            self.model.default_initial()
        } else {
            self.initial.clone()
        }
    }

    /// `X_N(0)` from the initial profile.
    pub fn initial_state(&self, n: u64) -> SparseState {
        match self.rounding {
            Rounding::Floor => SparseState::from_density(&self.initial_profile(), n),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() || self.n_grid.windows(2).any(|w| w[1] <= w[0]) || self.n_grid[0] == 0 {
            return Err(Error::Config("n_grid must be a nonempty strictly increasing list of positive integers".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end must be positive, got {}", self.t_end)));
        }
        if self.initial.iter().any(|&(_, v)| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::Config("initial densities must be finite and nonnegative".into()));
        }
        if self.weights != "model" {
            return Err(Error::Config(format!("unknown weight system '{}'", self.weights)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let plan = ExperimentPlan::for_model(ModelSpec::by_name("arrigoni").unwrap());
        let text = plan.to_toml().unwrap();
        let back = ExperimentPlan::from_toml(&text).unwrap();
        assert_eq!(back.initial, vec![(0, 0.5), (1, 0.5)]);
        assert_eq!(back.to_toml().unwrap(), text);
    }

    #[test]
    fn partial_config_uses_defaults() {
        let plan = ExperimentPlan::from_toml(
            "replicates = 5\nn_grid = [10, 20]\n[model]\nkind = \"kretzschmar\"\nlambda = 1.0\n",
        )
        .unwrap();
        assert_eq!(plan.t_end, 2.0);
        match plan.model {
            ModelSpec::Kretzschmar(p) => assert_eq!((p.lambda, p.beta), (1.0, 1.5)),
            _ => panic!("wrong model"),
        }
    }

    #[test]
    fn rejects_unsorted_grid() {
        assert!(ExperimentPlan::from_toml("n_grid = [100, 50]").is_err());
    }

    #[test]
    fn floor_rounding() {
        let plan = ExperimentPlan::default();
        let s = plan.initial_state(7);
        assert_eq!(s.to_map().into_iter().collect::<Vec<_>>(), vec![(0, 4), (1, 2)]);
    }
}
