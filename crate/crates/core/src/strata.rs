//! Strata bookkeeping for the orthant `[0,∞)^n`.
//!
//! A point is classified by which coordinates are strictly positive; the
//! subsets of `{0,…,n-1}` index the 2^n faces (strata) of the orthant.
//! Everything downstream (quadrature, sampling, occupation statistics) is
//! organized around this decomposition.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Largest supported dimension; 2^n strata are enumerated eagerly, so the
/// dimension is capped to keep that tractable.
pub const MAX_DIM: usize = 24;

/// A stratum of the orthant, identified by the set of coordinates that are
/// strictly positive. Bit `i` set means coordinate `i` (0-based) is free;
/// the complement is the pinned ("dry") set.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StratumIndex(u32);

impl StratumIndex {
    pub const EMPTY: StratumIndex = StratumIndex(0);

    pub fn from_mask(mask: u32) -> Self {
        StratumIndex(mask)
    }

    /// Stratum containing all coordinates, i.e. the open interior.
    pub fn full(n: usize) -> Self {
        debug_assert!(n <= MAX_DIM);
        StratumIndex(((1u64 << n) - 1) as u32)
    }

    pub fn mask(&self) -> u32 {
        self.0
    }

    pub fn contains(&self, coord: usize) -> bool {
        coord < 32 && self.0 & (1 << coord) != 0
    }

    /// Number of free coordinates (`#B`).
    pub fn free_count(&self) -> u32 {
        self.0.count_ones()
    }

    /// Free coordinates in increasing order.
    pub fn coords(&self) -> impl Iterator<Item = usize> + '_ {
        (0..32usize).filter(move |i| self.0 & (1 << i) != 0)
    }

    /// The pinned set, i.e. the coordinates equal to zero on this stratum.
    pub fn complement(&self, n: usize) -> StratumIndex {
        StratumIndex(!self.0 & StratumIndex::full(n).0)
    }

    pub fn is_interior(&self, n: usize) -> bool {
        *self == StratumIndex::full(n)
    }
}

impl fmt::Debug for StratumIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "B{{")?;
        let mut first = true;
        for c in self.coords() {
            if !first {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
            first = false;
        }
        write!(f, "}}")
    }
}

impl fmt::Display for StratumIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Ordering: by number of free coordinates, then lexicographically on the
/// sorted coordinate lists. For equal popcount the lexicographically smaller
/// set is the one owning the lowest differing coordinate.
impl Ord for StratumIndex {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let pc = self.free_count().cmp(&other.free_count());
        if pc != std::cmp::Ordering::Equal {
            return pc;
        }
        let diff = self.0 ^ other.0;
        if diff == 0 {
            return std::cmp::Ordering::Equal;
        }
        let low = diff & diff.wrapping_neg();
        if self.0 & low != 0 {
            std::cmp::Ordering::Less
        } else {
            std::cmp::Ordering::Greater
        }
    }
}

impl PartialOrd for StratumIndex {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// All 2^n strata in the canonical order (free-coordinate count, then
/// lexicographic). The order is fixed so per-stratum reports are reproducible.
pub fn enumerate_strata(n: usize) -> Result<Vec<StratumIndex>> {
    if n == 0 || n > MAX_DIM {
        return Err(CoreError::DimensionOutOfRange(n));
    }
    let mut all: Vec<StratumIndex> = (0..(1u64 << n)).map(|m| StratumIndex(m as u32)).collect();
    all.sort_unstable();
    Ok(all)
}

/// The stratum containing `x`: the set of strictly positive coordinates.
/// Coordinates must be exact; grid states carry exact zeros, so no tolerance
/// is applied.
pub fn stratum_of(x: &[f64]) -> Result<StratumIndex> {
    if x.is_empty() || x.len() > MAX_DIM {
        return Err(CoreError::DimensionOutOfRange(x.len()));
    }
    let mut mask = 0u32;
    for (i, &v) in x.iter().enumerate() {
        if v.is_nan() || v < 0.0 {
            return Err(CoreError::NegativeCoordinate { index: i, value: v });
        }
        if v > 0.0 {
            mask |= 1 << i;
        }
    }
    Ok(StratumIndex(mask))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumerate_small_dims() {
        let s1 = enumerate_strata(1).unwrap();
        assert_eq!(s1, vec![StratumIndex(0), StratumIndex(1)]);

        let s2 = enumerate_strata(2).unwrap();
        assert_eq!(
            s2,
            vec![
                StratumIndex(0b00),
                StratumIndex(0b01),
                StratumIndex(0b10),
                StratumIndex(0b11)
            ]
        );

        assert_eq!(enumerate_strata(3).unwrap().len(), 8);
    }

    #[test]
    fn enumeration_rejects_bad_dims() {
        assert!(enumerate_strata(0).is_err());
        assert!(enumerate_strata(25).is_err());
    }

    #[test]
    fn order_is_popcount_then_lexicographic() {
        // {0,3} comes before {1,2}: lists [0,3] < [1,2].
        let a = StratumIndex(0b1001);
        let b = StratumIndex(0b0110);
        assert!(a < b);
        let s4 = enumerate_strata(4).unwrap();
        let pos_a = s4.iter().position(|s| *s == a).unwrap();
        let pos_b = s4.iter().position(|s| *s == b).unwrap();
        assert!(pos_a < pos_b);
        // Popcount dominates.
        assert!(StratumIndex(0b1000) < StratumIndex(0b0011));
    }

    #[test]
    fn stratum_of_examples() {
        assert_eq!(stratum_of(&[0.0, 0.0]).unwrap(), StratumIndex(0));
        assert_eq!(stratum_of(&[1.5, 0.0]).unwrap(), StratumIndex(0b01));
        assert_eq!(stratum_of(&[0.2, 3.1, 0.0]).unwrap(), StratumIndex(0b011));
    }

    #[test]
    fn stratum_of_rejects_negative() {
        let err = stratum_of(&[0.5, -1.0]).unwrap_err();
        assert!(matches!(err, CoreError::NegativeCoordinate { index: 1, .. }));
    }

    #[test]
    fn complement_is_dry_set() {
        let b = StratumIndex(0b101);
        let dry = b.complement(3);
        assert_eq!(dry, StratumIndex(0b010));
        assert_eq!(b.free_count(), 2);
        assert_eq!(dry.free_count(), 1);
    }
}
