//! Finitely supported count vectors and their scaled views.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A process state `X`: a finitely supported map from type index to a
/// positive count.
///
/// Stored densely up to the largest occupied index; the vector never carries
/// trailing zeros, so two states are equal iff their nonzero entries agree.
#[derive(Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "Vec<(usize, u64)>", try_from = "Vec<(usize, u64)>")]
pub struct SparseState {
    counts: Vec<u64>,
    total: u64,
}

impl SparseState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a state from `(index, count)` pairs; repeated indices accumulate.
    pub fn from_pairs(pairs: &[(usize, u64)]) -> Self {
        let mut s = Self::new();
        for &(j, c) in pairs {
            s.set(j, s.get(j) + c);
        }
        s
    }

    pub fn get(&self, j: usize) -> u64 {
        self.counts.get(j).copied().unwrap_or(0)
    }

    pub fn set(&mut self, j: usize, count: u64) {
        if j >= self.counts.len() {
            if count == 0 {
                return;
            }
            self.counts.resize(j + 1, 0);
        }
        self.total = self.total - self.counts[j] + count;
        self.counts[j] = count;
        self.trim();
    }

    /// Adds a signed increment to coordinate `j`.
    pub fn add(&mut self, j: usize, delta: i64) -> Result<()> {
        let cur = self.get(j) as i64;
        let next = cur + delta;
        if next < 0 {
            return Err(Error::NegativeCount {
                index: j,
                jump: format!("{delta:+} at {j}"),
            });
        }
        self.set(j, next as u64);
        Ok(())
    }

    fn trim(&mut self) {
        while self.counts.last() == Some(&0) {
            self.counts.pop();
        }
    }

    /// S₀(X) = ‖X‖₁.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// One past the largest occupied index (0 for the empty state).
    pub fn extent(&self) -> usize {
        self.counts.len()
    }

    /// Number of occupied type indices.
    pub fn support_size(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Nonzero entries in increasing index order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, u64)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(j, &c)| (j, c))
    }

    /// Dense scaled vector `N⁻¹X` of length `max(len, extent)`.
    pub fn scaled(&self, n: f64, len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len.max(self.counts.len())];
        for (o, &c) in out.iter_mut().zip(&self.counts) {
            *o = c as f64 / n;
        }
        out
    }

    /// Floor-rounded state `⌊N x^j⌋` for a scaled density.
    pub fn from_density(density: &[(usize, f64)], n: u64) -> Self {
        let mut s = Self::new();
        for &(j, v) in density {
            let c = (n as f64 * v).floor();
            if c > 0.0 {
                s.set(j, s.get(j) + c as u64);
            }
        }
        s
    }

    pub fn to_map(&self) -> BTreeMap<usize, u64> {
        self.iter().collect()
    }
}

impl fmt::Debug for SparseState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.iter()).finish()
    }
}

impl From<SparseState> for Vec<(usize, u64)> {
    fn from(s: SparseState) -> Self {
        s.iter().collect()
    }
}

impl TryFrom<Vec<(usize, u64)>> for SparseState {
    type Error = Error;

    fn try_from(v: Vec<(usize, u64)>) -> Result<Self> {
        Ok(Self::from_pairs(&v))
    }
}

/// Anything whose nonzero coordinates can be enumerated as reals.
pub trait Support {
    fn for_each_nonzero(&self, f: &mut dyn FnMut(usize, f64));
}

impl Support for SparseState {
    fn for_each_nonzero(&self, f: &mut dyn FnMut(usize, f64)) {
        for (j, c) in self.iter() {
            f(j, c as f64);
        }
    }
}

impl Support for [f64] {
    fn for_each_nonzero(&self, f: &mut dyn FnMut(usize, f64)) {
        for (j, &v) in self.iter().enumerate() {
            if v != 0.0 {
                f(j, v);
            }
        }
    }
}

impl Support for Vec<f64> {
    fn for_each_nonzero(&self, f: &mut dyn FnMut(usize, f64)) {
        self.as_slice().for_each_nonzero(f)
    }
}

impl Support for BTreeMap<usize, f64> {
    fn for_each_nonzero(&self, f: &mut dyn FnMut(usize, f64)) {
        for (&j, &v) in self {
            if v != 0.0 {
                f(j, v);
            }
        }
    }
}

/// The scaled view `x = N⁻¹X` of a count state.
#[derive(Clone, Copy, Debug)]
pub struct Scaled<'a> {
    pub state: &'a SparseState,
    pub n: f64,
}

impl Support for Scaled<'_> {
    fn for_each_nonzero(&self, f: &mut dyn FnMut(usize, f64)) {
        for (j, c) in self.state.iter() {
            f(j, c as f64 / self.n);
        }
    }
}

/// Dense vector from a sparse density, padded to at least `len`.
pub fn densify(density: &[(usize, f64)], len: usize) -> Vec<f64> {
    let extent = density.iter().map(|&(j, _)| j + 1).max().unwrap_or(0);
    let mut out = vec![0.0; len.max(extent)];
    for &(j, v) in density {
        out[j] += v;
    }
    out
}
