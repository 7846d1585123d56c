//! Metapopulation model: `N` patches, the type index is the number of
//! animals in a patch. Transitions from scaled state `x`:
//!
//! | jump                                      | rate                           | range        |
//! |-------------------------------------------|--------------------------------|--------------|
//! | `e^{(i-1)} − e^{(i)}`                     | `i x^i (d_i + γ(1−ρ))`         | `i ≥ 2`      |
//! | `e^{(0)} − e^{(1)}`                       | `x^1 (d_1 + γ(1−ρ) + κ)`       |              |
//! | `e^{(i+1)} − e^{(i)}`                     | `i b_i x^i`                    | `i ≥ 1`      |
//! | `e^{(0)} − e^{(i)}`                       | `κ x^i`                        | `i ≥ 2`      |
//! | `e^{(k+1)} − e^{(k)} + e^{(i-1)} − e^{(i)}`| `ργ i x^i x^k`                | `k ≥ 0, i ≥ 1`|
//!
//! The migration pair `k = i − 1` has net jump zero and is not an event.
//! The pair `k = i` moves an animal between two distinct `i`-patches; its
//! finite-size rate is `ργ i x^i (x^i − N⁻¹)`, which vanishes when only one
//! such patch exists.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jump::JumpVector;
use crate::model::PopulationModel;
use crate::weights::{probe_grid, MomentConstants, WeightSystem};

/// A nonnegative sequence indexed by patch occupancy.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sequence {
    Constant { value: f64 },
    /// `scale / (1 + slope·i)`.
    Harmonic { scale: f64, slope: f64 },
    #[serde(skip)]
    Custom(Arc<dyn Fn(usize) -> f64 + Send + Sync>),
}

impl Sequence {
    #[inline]
    pub fn eval(&self, i: usize) -> f64 {
        match self {
            Sequence::Constant { value } => *value,
            Sequence::Harmonic { scale, slope } => scale / (1.0 + slope * i as f64),
            Sequence::Custom(f) => f(i),
        }
    }

    /// `sup_{i≥1} s_i` and `sup_{i≥1} s_i / i` for the closed forms.
    fn sups(&self) -> Option<(f64, f64)> {
        match *self {
            Sequence::Constant { value } => Some((value, value)),
            Sequence::Harmonic { scale, slope } => {
                let first = scale / (1.0 + slope);
                if slope >= 0.0 {
                    Some((first, first))
                } else {
                    None
                }
            }
            Sequence::Custom(_) => None,
        }
    }
}

impl PartialEq for Sequence {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Sequence::Constant { value: a }, Sequence::Constant { value: b }) => a == b,
            (Sequence::Harmonic { scale: a, slope: s }, Sequence::Harmonic { scale: b, slope: t }) => a == b && s == t,
            (Sequence::Custom(f), Sequence::Custom(g)) => Arc::ptr_eq(f, g),
            _ => false,
        }
    }
}

impl fmt::Debug for Sequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sequence::Constant { value } => write!(f, "{value}"),
            Sequence::Harmonic { scale, slope } => write!(f, "{scale}/(1+{slope}i)"),
            Sequence::Custom(_) => f.write_str("<custom>"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrigoniParams {
    /// Per-animal death rate `d_i` in an `i`-patch.
    pub d: Sequence,
    /// Per-animal birth rate `b_i` in an `i`-patch.
    pub b: Sequence,
    pub gamma: f64,
    pub rho: f64,
    pub kappa: f64,
    /// Declared `max_{i≥1} b_i`; computed for closed-form sequences.
    pub sup_b: Option<f64>,
    /// Declared `max_{i≥1} d_i / i`; computed for closed-form sequences.
    pub sup_d_over_i: Option<f64>,
    /// Declared `max_{i≥1} d_i`; computed for closed-form sequences.
    pub sup_d: Option<f64>,
}

impl Default for ArrigoniParams {
    fn default() -> Self {
        Self {
            d: Sequence::Constant { value: 0.5 },
            b: Sequence::Harmonic { scale: 1.0, slope: 0.1 },
            gamma: 1.0,
            rho: 0.3,
            kappa: 0.1,
            sup_b: None,
            sup_d_over_i: None,
            sup_d: None,
        }
    }
}

/// Resolved suprema of the rate sequences.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Suprema {
    pub b: f64,
    pub d: f64,
    pub d_over_i: f64,
}

impl ArrigoniParams {
    fn suprema(&self) -> Result<Suprema> {
        let missing = |what: &str| Error::InvalidParam(format!("{what} must be declared for a custom sequence"));
        let (b_auto, d_auto) = (self.b.sups(), self.d.sups());
        let b = self.sup_b.or(b_auto.map(|s| s.0)).ok_or_else(|| missing("sup_b"))?;
        let d = self.sup_d.or(d_auto.map(|s| s.0)).ok_or_else(|| missing("sup_d"))?;
        let d_over_i = self
            .sup_d_over_i
            .or(d_auto.map(|s| s.1))
            .ok_or_else(|| missing("sup_d_over_i"))?;
        let sups = Suprema { b, d, d_over_i };
        for i in probe_grid().filter(|&i| i >= 1) {
            let (bi, di) = (self.b.eval(i), self.d.eval(i));
            if !(bi >= 0.0 && di >= 0.0) {
                return Err(Error::InvalidParam(format!("b_{i} = {bi}, d_{i} = {di} must be >= 0")));
            }
            let tol = 1e-12 * (1.0 + bi.max(di));
            if bi > b + tol || di > d + tol || di / i as f64 > d_over_i + tol {
                return Err(Error::InvalidParam(format!(
                    "declared suprema {sups:?} are exceeded at i = {i} (b = {bi}, d = {di})"
                )));
            }
        }
        Ok(sups)
    }

    pub fn validate(&self) -> Result<Suprema> {
        for (name, v) in [("gamma", self.gamma), ("rho", self.rho), ("kappa", self.kappa)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParam(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.rho > 1.0 {
            return Err(Error::InvalidParam(format!("rho must lie in [0, 1], got {}", self.rho)));
        }
        self.suprema()
    }
}

#[derive(Clone, Debug)]
pub struct Arrigoni {
    params: ArrigoniParams,
    sups: Suprema,
    weights: WeightSystem,
    constants: MomentConstants,
}

pub fn arrigoni(params: ArrigoniParams) -> Result<Arrigoni> {
    let sups = params.validate()?;
    // (Aᵀμ)_i = i(b_i − d_i − γ) − κ(i+1) for μ(j) = j+1
    let w = (sups.b - params.gamma - params.kappa).max(0.0);
    let weights = WeightSystem::standard(w);
    let constants = moment_constants(&params, &sups);
    constants.validate()?;
    Ok(Arrigoni { params, sups, weights, constants })
}

fn moment_constants(p: &ArrigoniParams, s: &Suprema) -> MomentConstants {
    const R_MAX1: usize = 16;
    const R_MAX2: usize = 8;
    let rg = p.rho * p.gamma;
    let mut k = Vec::with_capacity(R_MAX1 + 1);
    k.push([0.0; 5]);
    for r in 1..=R_MAX1 {
        let rf = r as f64;
        let two_r1 = 2f64.powi(r as i32 - 1);
        k.push([
            rf * two_r1 * (s.b + rg),
            0.0,
            p.kappa + rf * rf * (two_r1 * two_r1 * (s.b + rg) + s.d_over_i + p.gamma),
            0.0,
            0.0,
        ]);
    }
    let pr = (0..=R_MAX2).map(|r| 2 * r).collect();
    let loss = s.d + p.gamma * (1.0 - p.rho);
    MomentConstants {
        k,
        p: pr,
        r_max1: R_MAX1,
        r_max2: R_MAX2,
        r_zeta: 8,
        beta_zeta: 1.0,
        // per family, with ζ(k) = (k+1)^7 and S₀(x) = 1:
        // 2·loss (i → i−1), loss + κ (1 → 0), 129 b (births), 2κ (catastrophe),
        // 131 ργ (migration)
        k1_zeta: 2.0 * loss + (loss + p.kappa) + 129.0 * s.b + 2.0 * p.kappa + 131.0 * rg,
        k2_zeta: 0.0,
        rho: 16,
        r_mu: 1,
    }
}

impl Arrigoni {
    pub fn params(&self) -> &ArrigoniParams {
        &self.params
    }

    pub fn suprema(&self) -> Suprema {
        self.sups
    }
}

impl PopulationModel for Arrigoni {
    fn name(&self) -> &str {
        "arrigoni"
    }

    fn visit_channels(&self, x: &[f64], inv_n: f64, visit: &mut dyn FnMut(JumpVector, f64)) {
        let p = &self.params;
        let leave = p.gamma * (1.0 - p.rho);
        let rg = p.rho * p.gamma;
        for (i, &xi) in x.iter().enumerate().skip(1) {
            if xi == 0.0 {
                continue;
            }
            let fi = i as f64;
            let di = p.d.eval(i);
            if i == 1 {
                let r = xi * (di + leave + p.kappa);
                if r != 0.0 {
                    visit(JumpVector::transfer(1, 0), r);
                }
            } else {
                let r = fi * xi * (di + leave);
                if r != 0.0 {
                    visit(JumpVector::transfer(i, i - 1), r);
                }
                if p.kappa != 0.0 {
                    visit(JumpVector::transfer(i, 0), p.kappa * xi);
                }
            }
            let birth = fi * p.b.eval(i) * xi;
            if birth != 0.0 {
                visit(JumpVector::transfer(i, i + 1), birth);
            }
            if rg == 0.0 {
                continue;
            }
            for (k, &xk) in x.iter().enumerate() {
                if xk == 0.0 || k + 1 == i {
                    continue;
                }
                let partner = if k == i { (xk - inv_n).max(0.0) } else { xk };
                let r = rg * fi * xi * partner;
                if r != 0.0 {
                    visit(JumpVector::from_terms(&[(k + 1, 1), (k, -1), (i - 1, 1), (i, -1)]), r);
                }
            }
        }
    }

    fn a_entry(&self, i: usize, j: usize) -> f64 {
        let p = &self.params;
        if i == j {
            return if i == 0 {
                -p.kappa
            } else {
                let fi = i as f64;
                -(p.kappa + fi * (p.b.eval(i) + p.d.eval(i) + p.gamma))
            };
        }
        if j == i + 1 {
            j as f64 * (p.d.eval(j) + p.gamma)
        } else if i == j + 1 && j >= 1 {
            j as f64 * p.b.eval(j)
        } else {
            0.0
        }
    }

    fn f_eval(&self, x: &[f64], out: &mut [f64]) {
        let p = &self.params;
        let s11: f64 = x.iter().enumerate().map(|(i, &v)| i as f64 * v).sum();
        let c = p.rho * p.gamma * s11;
        let xi = |i: usize| x.get(i).copied().unwrap_or(0.0);
        for (i, o) in out.iter_mut().enumerate() {
            *o = if i == 0 {
                -c * xi(0) + p.kappa
            } else {
                c * (xi(i - 1) - xi(i))
            };
        }
    }

    fn jstar(&self) -> usize {
        4
    }

    fn weights(&self) -> &WeightSystem {
        &self.weights
    }

    fn moment_constants(&self) -> &MomentConstants {
        &self.constants
    }

    fn lipschitz(&self, z: f64) -> f64 {
        3.0 * self.params.rho * self.params.gamma * z
    }

    fn conserves_total(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::active_channels;

    fn model() -> Arrigoni {
        arrigoni(ArrigoniParams::default()).unwrap()
    }

    #[test]
    fn empty_patches_have_no_channels() {
        assert!(active_channels(&model(), &[1.0], 1e-3).unwrap().is_empty());
    }

    #[test]
    fn jumps_conserve_patches() {
        let x = [0.4, 0.3, 0.2, 0.1];
        for (j, _) in active_channels(&model(), &x, 1e-2).unwrap() {
            assert_eq!(j.iter().map(|(_, v)| v).sum::<i32>(), 0, "{j}");
            assert!(j.l1() <= 4);
        }
    }

    #[test]
    fn diagonal_migration_needs_two_patches() {
        let m = model();
        let n = 100.0;
        let diag = JumpVector::from_terms(&[(2, 1), (1, -2), (0, 1)]);
        let one = active_channels(&m, &[0.99, 1.0 / n], 1.0 / n).unwrap();
        assert!(one.iter().all(|(j, _)| *j != diag));
        let two = active_channels(&m, &[0.98, 2.0 / n], 1.0 / n).unwrap();
        let r = two.iter().find(|(j, _)| *j == diag).unwrap().1;
        assert!((r - 0.3 * 2.0 / n * 1.0 / n).abs() < 1e-15);
        let limit = active_channels(&m, &[0.98, 2.0 / n], 0.0).unwrap();
        let r = limit.iter().find(|(j, _)| *j == diag).unwrap().1;
        assert!((r - 0.3 * (2.0 / n) * (2.0 / n)).abs() < 1e-15);
    }

    #[test]
    fn lipschitz_constant() {
        assert!((model().lipschitz(2.0) - 6.0 * 0.3).abs() < 1e-15);
    }

    #[test]
    fn suprema_of_defaults() {
        let s = model().suprema();
        assert!((s.b - 1.0 / 1.1).abs() < 1e-15);
        assert_eq!(s.d, 0.5);
        assert_eq!(s.d_over_i, 0.5);
        assert_eq!(model().weights().w, 0.0);
    }

    #[test]
    fn custom_sequence_needs_declared_suprema() {
        let params = ArrigoniParams {
            b: Sequence::Custom(Arc::new(|i| 1.0 / (i as f64 + 1.0))),
            ..Default::default()
        };
        assert!(arrigoni(params.clone()).is_err());
        assert!(arrigoni(ArrigoniParams { sup_b: Some(0.5), ..params.clone() }).is_ok());
        assert!(arrigoni(ArrigoniParams { sup_b: Some(0.1), ..params }).is_err());
    }

    #[test]
    fn rho_out_of_range() {
        assert!(arrigoni(ArrigoniParams { rho: 1.2, ..Default::default() }).is_err());
    }
}
