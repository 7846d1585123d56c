//! Host–parasite model with parasite burden as the type index.
//!
//! Transitions from scaled state `x`:
//!
//! | jump                 | rate                 | range  |
//! |----------------------|----------------------|--------|
//! | `e^{(i-1)} − e^{(i)}`| `i μ x^i`            | `i ≥ 1`|
//! | `−e^{(i)}`           | `(κ + iα) x^i`       | `i ≥ 0`|
//! | `e^{(0)}`            | `β ∑_i θ^i x^i`      |        |
//! | `e^{(i+1)} − e^{(i)}`| `λ x^i φ(x)`         | `i ≥ 0`|
//!
//! with `φ(x) = ‖x‖₁₁ / (c + ‖x‖₁)` and `‖x‖₁₁ = ∑ i x^i`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jump::JumpVector;
use crate::model::PopulationModel;
use crate::weights::{MomentConstants, WeightSystem};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KretzschmarParams {
    /// Per-parasite death rate μ.
    pub mu_d: f64,
    pub kappa: f64,
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
    pub lambda: f64,
    pub c: f64,
}

impl Default for KretzschmarParams {
    fn default() -> Self {
        Self { mu_d: 1.0, kappa: 0.2, alpha: 0.1, beta: 1.5, theta: 0.5, lambda: 2.0, c: 1.0 }
    }
}

impl KretzschmarParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("mu_d", self.mu_d),
            ("kappa", self.kappa),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("theta", self.theta),
            ("lambda", self.lambda),
            ("c", self.c),
        ];
        for (name, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParam(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.theta > 1.0 {
            return Err(Error::InvalidParam(format!("theta must lie in [0, 1], got {}", self.theta)));
        }
        if self.c <= 0.0 {
            return Err(Error::InvalidParam("c must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Kretzschmar {
    params: KretzschmarParams,
    weights: WeightSystem,
    constants: MomentConstants,
}

pub fn kretzschmar(params: KretzschmarParams) -> Result<Kretzschmar> {
    params.validate()?;
    let p = &params;
    let weights = WeightSystem::standard((p.beta - p.kappa).max(0.0));
    let constants = moment_constants(p);
    constants.validate()?;
    Ok(Kretzschmar { params, weights, constants })
}

fn moment_constants(p: &KretzschmarParams) -> MomentConstants {
    const R_MAX1: usize = 17;
    const R_MAX2: usize = 8;
    let mut k = Vec::with_capacity(R_MAX1 + 1);
    k.push([p.beta, 0.0, p.kappa + p.beta + p.alpha, 0.0, 0.0]);
    for r in 1..=R_MAX1 {
        let rf = r as f64;
        let two_r1 = 2f64.powi(r as i32 - 1);
        k.push([
            p.beta + rf * two_r1 * p.lambda,
            0.0,
            p.beta + rf * rf * (p.kappa + p.alpha + p.mu_d + two_r1 * two_r1 * p.lambda),
            0.0,
            0.0,
        ]);
    }
    let pr = (0..=R_MAX2).map(|r| if r == 0 { 0 } else { 2 * r + 1 }).collect();
    MomentConstants {
        k,
        p: pr,
        r_max1: R_MAX1,
        r_max2: R_MAX2,
        r_zeta: 8,
        beta_zeta: 1.0,
        // each family's ζ-weighted jump size is dominated by a multiple of S₈:
        // 2μ (burden loss), κ+α (host death), β (birth), (1+2⁷)λ (infection)
        k1_zeta: 2.0 * p.mu_d + p.kappa + p.alpha + p.beta + 129.0 * p.lambda,
        k2_zeta: 0.0,
        rho: 17,
        r_mu: 1,
    }
}

impl Kretzschmar {
    pub fn params(&self) -> &KretzschmarParams {
        &self.params
    }

    /// `φ(x) = ‖x‖₁₁ / (c + ‖x‖₁)`.
    pub fn phi(&self, x: &[f64]) -> f64 {
        let (s0, s11) = x
            .iter()
            .enumerate()
            .fold((0.0, 0.0), |(a, b), (i, &v)| (a + v, b + i as f64 * v));
        s11 / (self.params.c + s0)
    }
}

impl PopulationModel for Kretzschmar {
    fn name(&self) -> &str {
        "kretzschmar"
    }

    fn visit_channels(&self, x: &[f64], _inv_n: f64, visit: &mut dyn FnMut(JumpVector, f64)) {
        let p = &self.params;
        let mut s0 = 0.0;
        let mut s11 = 0.0;
        let mut fertile = 0.0;
        let mut theta_i = 1.0;
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                s0 += xi;
                s11 += i as f64 * xi;
                fertile += theta_i * xi;
            }
            theta_i *= p.theta;
        }
        let phi = s11 / (p.c + s0);
        let infect = p.lambda * phi;
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let fi = i as f64;
            if i >= 1 && p.mu_d > 0.0 {
                visit(JumpVector::transfer(i, i - 1), fi * p.mu_d * xi);
            }
            let death = (p.kappa + fi * p.alpha) * xi;
            if death != 0.0 {
                visit(JumpVector::unit(i, -1), death);
            }
            if infect != 0.0 {
                visit(JumpVector::transfer(i, i + 1), infect * xi);
            }
        }
        let birth = p.beta * fertile;
        if birth != 0.0 {
            visit(JumpVector::unit(0, 1), birth);
        }
    }

    fn a_entry(&self, i: usize, j: usize) -> f64 {
        let p = &self.params;
        if i == j {
            return if i == 0 {
                p.beta - p.kappa
            } else {
                -(p.kappa + i as f64 * (p.alpha + p.mu_d))
            };
        }
        match (i, j) {
            (0, 1) => p.mu_d + p.beta * p.theta,
            (0, j) => p.beta * p.theta.powi(j as i32),
            (i, j) if j == i + 1 => j as f64 * p.mu_d,
            _ => 0.0,
        }
    }

    fn f_eval(&self, x: &[f64], out: &mut [f64]) {
        let lphi = self.params.lambda * self.phi(x);
        let xi = |i: usize| x.get(i).copied().unwrap_or(0.0);
        for (i, o) in out.iter_mut().enumerate() {
            let prev = if i == 0 { 0.0 } else { xi(i - 1) };
            *o = lphi * (prev - xi(i));
        }
    }

    fn jstar(&self) -> usize {
        2
    }

    fn weights(&self) -> &WeightSystem {
        &self.weights
    }

    fn moment_constants(&self) -> &MomentConstants {
        &self.constants
    }

    fn lipschitz(&self, z: f64) -> f64 {
        let p = &self.params;
        p.lambda * z * (2.0 * p.c + z) / (p.c * p.c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{active_channels, drift_total};

    fn model() -> Kretzschmar {
        kretzschmar(KretzschmarParams::default()).unwrap()
    }

    #[test]
    fn parasite_death_rate() {
        let m = model();
        let ch = active_channels(&m, &[0.0, 0.5], 0.0).unwrap();
        let death = ch.iter().find(|(j, _)| *j == JumpVector::transfer(1, 0)).unwrap();
        assert_eq!(death.1, 0.5);
    }

    #[test]
    fn empty_state_has_no_channels() {
        assert!(active_channels(&model(), &[], 0.0).unwrap().is_empty());
        assert!(active_channels(&model(), &[0.0, 0.0], 0.0).unwrap().is_empty());
    }

    #[test]
    fn w_is_positive_part() {
        let m = kretzschmar(KretzschmarParams { beta: 2.0, kappa: 3.0, ..Default::default() }).unwrap();
        assert_eq!(m.weights().w, 0.0);
        assert!((model().weights().w - 1.3).abs() < 1e-15);
    }

    #[test]
    fn drift_at_hosts_without_parasites() {
        let p = KretzschmarParams::default();
        let d = drift_total(&model(), &[1.0], 3).unwrap();
        assert!((d[0] - (p.beta - p.kappa)).abs() < 1e-15);
        assert_eq!(&d[1..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn invalid_params() {
        assert!(kretzschmar(KretzschmarParams { c: 0.0, ..Default::default() }).is_err());
        assert!(kretzschmar(KretzschmarParams { theta: 1.5, ..Default::default() }).is_err());
        assert!(kretzschmar(KretzschmarParams { lambda: -1.0, ..Default::default() }).is_err());
    }

    #[test]
    fn lipschitz_constant() {
        let m = model();
        assert_eq!(m.lipschitz(2.0), 2.0 * 2.0 * 4.0);
    }
}
