//! Weight functions on type indices and the moment-growth constants a
//! model declares for its a-priori bounds.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// A total function on type indices.
#[derive(Clone)]
pub enum Weight {
    /// `(j + offset)^exponent`.
    Power { offset: f64, exponent: i32 },
    Custom(Arc<dyn Fn(usize) -> f64 + Send + Sync>),
}

impl Weight {
    /// `j + 1`, the weight used by both built-in models for ν and μ.
    pub fn linear() -> Self {
        Weight::Power { offset: 1.0, exponent: 1 }
    }

    pub fn unit() -> Self {
        Weight::Power { offset: 1.0, exponent: 0 }
    }

    pub fn power(exponent: i32) -> Self {
        Weight::Power { offset: 1.0, exponent }
    }

    #[inline]
    pub fn eval(&self, j: usize) -> f64 {
        match self {
            Weight::Power { offset, exponent } => match exponent {
                0 => 1.0,
                1 => j as f64 + offset,
                e => (j as f64 + offset).powi(*e),
            },
            Weight::Custom(f) => f(j),
        }
    }

    /// `weight(j)^r`.
    #[inline]
    pub fn eval_pow(&self, j: usize, r: usize) -> f64 {
        match r {
            0 => 1.0,
            1 => self.eval(j),
            r => self.eval(j).powi(r as i32),
        }
    }
}

impl fmt::Debug for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Weight::Power { offset, exponent } => write!(f, "(j+{offset})^{exponent}"),
            Weight::Custom(_) => f.write_str("<custom>"),
        }
    }
}

/// Probe indices `0, 1, 2, 4, ..., 2^20 > 10⁶` used to spot-check weights.
pub fn probe_grid() -> impl Iterator<Item = usize> {
    std::iter::once(0).chain((0..=20).map(|e| 1usize << e))
}

/// ν (moment weight), μ (norm weight), ζ (jump-size weight) and the growth
/// rate `w` of the tilted semigroup.
#[derive(Clone, Debug)]
pub struct WeightSystem {
    pub nu: Weight,
    pub mu: Weight,
    pub zeta: Weight,
    pub w: f64,
}

impl WeightSystem {
    /// ν = μ = j+1, ζ = (j+1)^7.
    pub fn standard(w: f64) -> Self {
        Self {
            nu: Weight::linear(),
            mu: Weight::linear(),
            zeta: Weight::power(7),
            w,
        }
    }

    /// Spot-checks ν ≥ 1 with ν → ∞, μ ≥ 1, ζ ≥ 1 and w ≥ 0 on the probe grid.
    pub fn validate(&self) -> Result<()> {
        if !(self.w >= 0.0 && self.w.is_finite()) {
            return Err(Error::InvalidParam(format!("w must be finite and >= 0, got {}", self.w)));
        }
        let mut prev = 0.0;
        for j in probe_grid() {
            let nu = self.nu.eval(j);
            if !(nu >= 1.0) {
                return Err(Error::InvalidParam(format!("nu({j}) = {nu} < 1")));
            }
            if nu < prev {
                return Err(Error::InvalidParam(format!("nu decreases on the probe grid at {j}")));
            }
            prev = nu;
            for (name, wt) in [("mu", &self.mu), ("zeta", &self.zeta)] {
                let v = wt.eval(j);
                if !(v >= 1.0) {
                    return Err(Error::InvalidParam(format!("{name}({j}) = {v} < 1")));
                }
            }
        }
        if prev < 10.0 * self.nu.eval(0) {
            return Err(Error::InvalidParam(
                "nu does not grow on the probe grid (nu(j) -> infinity required)".into(),
            ));
        }
        Ok(())
    }
}

/// Constants of the moment-growth inequalities
/// `U_r ≤ {k_r1 + k_r2 S₀} S_r + k_r4`, `V_r ≤ k_r3 S_{p(r)} + k_r5`
/// and of the ζ-growth bound `∑ α_J d(J,ζ) ≤ {k₁ S_{r(ζ)} + k₂}^{β(ζ)}`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentConstants {
    /// `k[r] = [k_r1, k_r2, k_r3, k_r4, k_r5]` for `r = 0..=r_max1`.
    pub k: Vec<[f64; 5]>,
    /// `p[r]` for `r = 1..=r_max2`; `p[0]` is unused.
    pub p: Vec<usize>,
    pub r_max1: usize,
    pub r_max2: usize,
    pub r_zeta: usize,
    pub beta_zeta: f64,
    pub k1_zeta: f64,
    pub k2_zeta: f64,
    pub rho: usize,
    pub r_mu: usize,
}

impl MomentConstants {
    /// `k_{rl}` with `l` in `1..=5`.
    pub fn k(&self, r: usize, l: usize) -> Result<f64> {
        assert!((1..=5).contains(&l), "constant index l must lie in 1..=5");
        self.k
            .get(r)
            .map(|row| row[l - 1])
            .ok_or(Error::ConstantMissing { r, l, r_max: self.r_max1 })
    }

    pub fn p(&self, r: usize) -> Result<usize> {
        if r == 0 || r > self.r_max2 {
            return Err(Error::ConstantMissing { r, l: 3, r_max: self.r_max2 });
        }
        Ok(self.p[r])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParam(m));
        if self.k.len() != self.r_max1 + 1 {
            return bad(format!("k table has {} rows, expected r_max1 + 1 = {}", self.k.len(), self.r_max1 + 1));
        }
        if self.k.iter().flatten().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return bad("k_{rl} must be finite and nonnegative".into());
        }
        if self.p.len() != self.r_max2 + 1 {
            return bad("p table must cover 0..=r_max2".into());
        }
        for r in 1..=self.r_max2 {
            if !(1..=self.r_max1).contains(&self.p[r]) {
                return bad(format!("p({r}) = {} outside 1..={}", self.p[r], self.r_max1));
            }
        }
        if !(1..=self.r_max2).contains(&self.r_zeta) {
            return bad(format!("r(zeta) = {} outside 1..={}", self.r_zeta, self.r_max2));
        }
        if !(self.beta_zeta >= 1.0) {
            return bad("beta(zeta) must be >= 1".into());
        }
        let lower = self.r_zeta.max(self.p[self.r_zeta]);
        if self.rho < lower || self.rho > lower.max(self.r_mu + 1) {
            return bad(format!(
                "rho = {} inconsistent with max(r(zeta), p(r(zeta)), r~_mu) where r~_mu <= {}",
                self.rho,
                self.r_mu + 1
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_weights() {
        let ws = WeightSystem::standard(0.5);
        ws.validate().unwrap();
        assert_eq!(ws.mu.eval(0), 1.0);
        assert_eq!(ws.nu.eval_pow(3, 2), 16.0);
        assert_eq!(ws.zeta.eval(1), 128.0);
    }

    #[test]
    fn bounded_nu_is_rejected() {
        let mut ws = WeightSystem::standard(0.0);
        ws.nu = Weight::unit();
        assert!(ws.validate().is_err());
        ws.nu = Weight::Custom(Arc::new(|j| 1.0 + (j as f64).min(3.0)));
        assert!(ws.validate().is_err());
    }

    #[test]
    fn submultiplicative_mu_is_rejected() {
        let mut ws = WeightSystem::standard(0.0);
        ws.mu = Weight::Custom(Arc::new(|_| 0.5));
        assert!(ws.validate().is_err());
    }

    #[test]
    fn probe_grid_reaches_a_million() {
        assert!(probe_grid().max().unwrap() > 1_000_000);
    }
}
