//! Small models with affine rates whose capped state space is a finite CTMC;
//! used as an exact oracle for the simulator.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jump::JumpVector;
use crate::model::PopulationModel;
use crate::state::SparseState;
use crate::weights::{MomentConstants, WeightSystem};

pub const MAX_TYPES: usize = 6;

/// One channel with rate `constant + ∑_m linear_m x^m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineChannel {
    pub jump: JumpVector,
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub linear: Vec<(usize, f64)>,
}

impl AffineChannel {
    pub fn new(jump: JumpVector, constant: f64, linear: &[(usize, f64)]) -> Self {
        Self { jump, constant, linear: linear.to_vec() }
    }

    fn rate(&self, x: &[f64]) -> f64 {
        self.constant
            + self
                .linear
                .iter()
                .map(|&(m, c)| c * x.get(m).copied().unwrap_or(0.0))
                .sum::<f64>()
    }
}

#[derive(Clone, Debug)]
pub struct FiniteTestModel {
    n_types: usize,
    channels: Vec<AffineChannel>,
    cap: Option<u64>,
    a: DMatrix<f64>,
    f: Vec<f64>,
    jstar: usize,
    weights: WeightSystem,
    constants: MomentConstants,
}

/// Builds a model on types `0..n_types` from affine channels.
///
/// With `cap = Some(C)` a channel is inactive whenever it would push any
/// count above `C` in the finite-size process; the deterministic limit
/// ignores the cap.
pub fn finite_testmodel(n_types: usize, channels: Vec<AffineChannel>, cap: Option<u64>) -> Result<FiniteTestModel> {
    if n_types == 0 || n_types > MAX_TYPES {
        return Err(Error::InvalidParam(format!("n_types must lie in 1..={MAX_TYPES}, got {n_types}")));
    }
    let mut a = DMatrix::zeros(n_types, n_types);
    let mut f = vec![0.0; n_types];
    for ch in &channels {
        if ch.jump.is_zero() || ch.jump.extent() > n_types {
            return Err(Error::InvalidParam(format!("jump {} outside types 0..{n_types}", ch.jump)));
        }
        if ch.jump.min_coordinate() < -1 {
            return Err(Error::InvalidParam(format!("jump {} has a coordinate below -1", ch.jump)));
        }
        if !(ch.constant >= 0.0) || ch.linear.iter().any(|&(m, c)| !(c >= 0.0) || m >= n_types) {
            return Err(Error::InvalidParam(format!("rate coefficients of {} must be >= 0 on known types", ch.jump)));
        }
        // a channel removing type l must have rate proportional to x^l
        for (l, v) in ch.jump.iter() {
            if v == -1 && (ch.constant != 0.0 || ch.linear.iter().any(|&(m, c)| m != l && c != 0.0)) {
                return Err(Error::InvalidParam(format!(
                    "jump {} removes type {l}, so its rate must be proportional to x^{l}",
                    ch.jump
                )));
            }
        }
        for (l, v) in ch.jump.iter() {
            f[l] += v as f64 * ch.constant;
            for &(m, c) in &ch.linear {
                a[(l, m)] += v as f64 * c;
            }
        }
    }
    let jstar = channels.iter().map(|c| c.jump.l1() as usize).max().unwrap_or(0);
    let mu = |j: usize| (j + 1) as f64;
    let w = (0..n_types)
        .map(|m| (0..n_types).map(|l| a[(l, m)] * mu(l)).sum::<f64>() / mu(m))
        .fold(0.0, f64::max);
    let weights = WeightSystem::standard(w);
    let constants = affine_constants(&channels, &weights);
    constants.validate()?;
    Ok(FiniteTestModel { n_types, channels, cap, a, f, jstar, weights, constants })
}

/// Moment constants for affine rates with `p(r) = r`, by bounding each
/// channel coefficient against the matching term of `S_r`.
fn affine_constants(channels: &[AffineChannel], ws: &WeightSystem) -> MomentConstants {
    const R_MAX: usize = 8;
    let nu = |j: usize, r: usize| ws.nu.eval_pow(j, r);
    let mut k = Vec::with_capacity(R_MAX + 1);
    let coeff_bound = |g: &dyn Fn(&AffineChannel) -> f64, r: usize| {
        let mut lin = std::collections::BTreeMap::<usize, f64>::new();
        let mut konst = 0.0;
        for ch in channels {
            let v = g(ch);
            konst += ch.constant * v;
            for &(m, c) in &ch.linear {
                *lin.entry(m).or_default() += c * v;
            }
        }
        let slope = lin.iter().map(|(&m, &c)| c / nu(m, r)).fold(0.0, f64::max);
        (slope, konst)
    };
    for r in 0..=R_MAX {
        let (k1, k4) = coeff_bound(&|ch| ch.jump.dot(|j| nu(j, r)).max(0.0), r);
        let (k3, k5) = coeff_bound(&|ch| ch.jump.dot(|j| nu(j, r)).powi(2), r.max(1));
        k.push([k1, 0.0, k3, k4, k5]);
    }
    let (k1_zeta, k2_zeta) = coeff_bound(&|ch| ch.jump.iter().map(|(j, v)| v.abs() as f64 * ws.zeta.eval(j)).sum(), R_MAX);
    MomentConstants {
        k,
        p: (0..=R_MAX).collect(),
        r_max1: R_MAX,
        r_max2: R_MAX,
        r_zeta: R_MAX,
        beta_zeta: 1.0,
        k1_zeta,
        k2_zeta,
        rho: R_MAX,
        r_mu: 1,
    }
}

impl FiniteTestModel {
    /// One type, births at constant rate `birth`, deaths at rate `death·x⁰`.
    pub fn birth_death(birth: f64, death: f64, cap: Option<u64>) -> Result<Self> {
        finite_testmodel(
            1,
            vec![
                AffineChannel::new(JumpVector::unit(0, 1), birth, &[]),
                AffineChannel::new(JumpVector::unit(0, -1), 0.0, &[(0, death)]),
            ],
            cap,
        )
    }

    /// One type, deaths at rate `death·x⁰`.
    pub fn pure_death(death: f64) -> Result<Self> {
        finite_testmodel(1, vec![AffineChannel::new(JumpVector::unit(0, -1), 0.0, &[(0, death)])], None)
    }

    /// Two types, transfers `0 → 1` at rate `rate·x⁰`.
    pub fn migration(rate: f64) -> Result<Self> {
        finite_testmodel(2, vec![AffineChannel::new(JumpVector::transfer(0, 1), 0.0, &[(0, rate)])], None)
    }

    pub fn n_types(&self) -> usize {
        self.n_types
    }

    pub fn cap(&self) -> Option<u64> {
        self.cap
    }

    pub fn channels(&self) -> &[AffineChannel] {
        &self.channels
    }
}

impl PopulationModel for FiniteTestModel {
    fn name(&self) -> &str {
        "finite"
    }

    fn visit_channels(&self, x: &[f64], inv_n: f64, visit: &mut dyn FnMut(JumpVector, f64)) {
        for ch in &self.channels {
            let r = ch.rate(x);
            if r == 0.0 {
                continue;
            }
            if let (Some(cap), true) = (self.cap, inv_n > 0.0) {
                let over = ch.jump.iter().any(|(l, v)| {
                    let count = (x.get(l).copied().unwrap_or(0.0) / inv_n).round();
                    count + v as f64 > cap as f64
                });
                if over {
                    continue;
                }
            }
            visit(ch.jump, r);
        }
    }

    fn a_entry(&self, i: usize, j: usize) -> f64 {
        if i < self.n_types && j < self.n_types {
            self.a[(i, j)]
        } else {
            0.0
        }
    }

    fn f_eval(&self, _x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.f.get(i).copied().unwrap_or(0.0);
        }
    }

    fn jstar(&self) -> usize {
        self.jstar
    }

    fn weights(&self) -> &WeightSystem {
        &self.weights
    }

    fn moment_constants(&self) -> &MomentConstants {
        &self.constants
    }

    fn lipschitz(&self, _z: f64) -> f64 {
        0.0
    }

    fn conserves_total(&self) -> bool {
        self.channels.iter().all(|c| c.jump.iter().map(|(_, v)| v).sum::<i32>() == 0)
    }
}

/// The generator of the capped process at scale `n` on the product space
/// `{0..=cap}^{n_types}`, with states in lexicographic order (type 0 fastest).
pub fn finite_generator(model: &FiniteTestModel, n: u64) -> Result<(Vec<SparseState>, DMatrix<f64>)> {
    let cap = model
        .cap
        .ok_or_else(|| Error::InvalidParam("generator requires a capped model".into()))?;
    let side = cap as usize + 1;
    let size = side
        .checked_pow(model.n_types as u32)
        .filter(|&s| s <= 1 << 14)
        .ok_or_else(|| Error::InvalidParam("capped state space too large".into()))?;
    let decode = |mut code: usize| {
        let mut counts = vec![0u64; model.n_types];
        for c in counts.iter_mut() {
            *c = (code % side) as u64;
            code /= side;
        }
        counts
    };
    let encode = |counts: &[i64]| counts.iter().rev().fold(0usize, |acc, &c| acc * side + c as usize);
    let nf = n as f64;
    let mut q = DMatrix::zeros(size, size);
    let mut states = Vec::with_capacity(size);
    for s in 0..size {
        let counts = decode(s);
        let x: Vec<f64> = counts.iter().map(|&c| c as f64 / nf).collect();
        model.visit_channels(&x, 1.0 / nf, &mut |j, r| {
            let mut next: Vec<i64> = counts.iter().map(|&c| c as i64).collect();
            for (l, v) in j.iter() {
                next[l] += v as i64;
            }
            debug_assert!(next.iter().all(|&c| (0..side as i64).contains(&c)));
            let t = encode(&next);
            q[(s, t)] += nf * r;
            q[(s, s)] -= nf * r;
        });
        states.push(SparseState::from_pairs(
            &counts.iter().enumerate().map(|(j, &c)| (j, c)).collect::<Vec<_>>(),
        ));
    }
    Ok((states, q))
}
