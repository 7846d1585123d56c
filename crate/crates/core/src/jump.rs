use std::fmt;

use serde::{Deserialize, Serialize};

/// Largest number of coordinates a single jump may touch.
pub const MAX_TERMS: usize = 4;

/// A net state change `J`: a few signed coordinates, sorted by index, with
/// zero coordinates removed.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "Vec<(usize, i32)>", try_from = "Vec<(usize, i32)>")]
pub struct JumpVector {
    len: u8,
    idx: [u32; MAX_TERMS],
    val: [i32; MAX_TERMS],
}

impl JumpVector {
    pub const ZERO: JumpVector = JumpVector { len: 0, idx: [0; MAX_TERMS], val: [0; MAX_TERMS] };

    /// `v · e^{(j)}`.
    #[inline]
    pub fn unit(j: usize, v: i32) -> Self {
        let mut out = Self::ZERO;
        if v != 0 {
            out.len = 1;
            out.idx[0] = j as u32;
            out.val[0] = v;
        }
        out
    }

    /// `e^{(to)} − e^{(from)}`.
    #[inline]
    pub fn transfer(from: usize, to: usize) -> Self {
        Self::from_terms(&[(to, 1), (from, -1)])
    }

    /// Net jump from possibly repeated coordinates; repeated indices are
    /// summed and zero sums dropped.
    ///
    /// Panics if more than [`MAX_TERMS`] distinct coordinates remain.
    pub fn from_terms(terms: &[(usize, i32)]) -> Self {
        let mut out = Self::ZERO;
        for &(j, v) in terms {
            out.accumulate(j, v);
        }
        out
    }

    fn accumulate(&mut self, j: usize, v: i32) {
        let n = self.len as usize;
        let j32 = j as u32;
        let pos = self.idx[..n].partition_point(|&i| i < j32);
        if pos < n && self.idx[pos] == j32 {
            self.val[pos] += v;
            if self.val[pos] == 0 {
                self.idx.copy_within(pos + 1..n, pos);
                self.val.copy_within(pos + 1..n, pos);
                self.len -= 1;
            }
        } else if v != 0 {
            assert!(n < MAX_TERMS, "jump touches more than {MAX_TERMS} coordinates");
            self.idx.copy_within(pos..n, pos + 1);
            self.val.copy_within(pos..n, pos + 1);
            self.idx[pos] = j32;
            self.val[pos] = v;
            self.len += 1;
        }
    }

    #[inline]
    pub fn iter(&self) -> impl Iterator<Item = (usize, i32)> + '_ {
        let n = self.len as usize;
        self.idx[..n].iter().zip(&self.val[..n]).map(|(&i, &v)| (i as usize, v))
    }

    pub fn is_zero(&self) -> bool {
        self.len == 0
    }

    /// `J^j`.
    pub fn get(&self, j: usize) -> i32 {
        self.iter().find(|&(i, _)| i == j).map_or(0, |(_, v)| v)
    }

    /// `∑_j |J^j|`.
    pub fn l1(&self) -> u32 {
        self.iter().map(|(_, v)| v.unsigned_abs()).sum()
    }

    /// Smallest coordinate (0 for the zero jump).
    pub fn min_coordinate(&self) -> i32 {
        self.iter().map(|(_, v)| v).min().unwrap_or(0).min(0)
    }

    /// Largest index touched plus one.
    pub fn extent(&self) -> usize {
        self.iter().map(|(i, _)| i + 1).max().unwrap_or(0)
    }

    /// `Jᵀf = ∑_j J^j f(j)`.
    #[inline]
    pub fn dot(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.iter().map(|(j, v)| v as f64 * f(j)).sum()
    }
}

impl fmt::Debug for JumpVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for JumpVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return f.write_str("0");
        }
        for (n, (j, v)) in self.iter().enumerate() {
            let sign = if v < 0 { "-" } else if n > 0 { "+" } else { "" };
            let mag = v.unsigned_abs();
            if mag == 1 {
                write!(f, "{sign}e{j}")?;
            } else {
                write!(f, "{sign}{mag}e{j}")?;
            }
        }
        Ok(())
    }
}

impl From<JumpVector> for Vec<(usize, i32)> {
    fn from(j: JumpVector) -> Self {
        j.iter().collect()
    }
}

impl TryFrom<Vec<(usize, i32)>> for JumpVector {
    type Error = String;

    fn try_from(terms: Vec<(usize, i32)>) -> Result<Self, String> {
        let mut distinct: Vec<usize> = terms.iter().map(|t| t.0).collect();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() > MAX_TERMS {
            return Err(format!("jump touches more than {MAX_TERMS} coordinates"));
        }
        Ok(Self::from_terms(&terms))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn net_summation_cancels() {
        // e^{k+1} − e^{k} + e^{i−1} − e^{i} with k = i − 1
        let j = JumpVector::from_terms(&[(3, 1), (2, -1), (2, 1), (3, -1)]);
        assert!(j.is_zero());
        // k = i doubles the loss at i
        let j = JumpVector::from_terms(&[(3, 1), (2, -1), (1, 1), (2, -1)]);
        assert_eq!(j.iter().collect::<Vec<_>>(), vec![(1, 1), (2, -2), (3, 1)]);
        assert_eq!(j.l1(), 4);
        assert_eq!(j.min_coordinate(), -2);
        assert_eq!(j.to_string(), "e1-2e2+e3");
    }

    #[test]
    fn transfer_and_dot() {
        let j = JumpVector::transfer(0, 1);
        assert_eq!(j.get(0), -1);
        assert_eq!(j.get(1), 1);
        assert_eq!(j.dot(|k| (k + 1) as f64), 1.0);
        assert_eq!(j.extent(), 2);
    }

    #[test]
    #[should_panic]
    fn too_many_terms() {
        JumpVector::from_terms(&[(0, 1), (1, 1), (2, 1), (3, 1), (4, 1)]);
    }
}
