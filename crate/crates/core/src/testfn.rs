//! Compactly supported test functions with explicit derivatives.
//!
//! The working family is a tensor product of polynomial bumps on `[0, s_j]`,
//! extended by zero. Each profile vanishes together with its first derivative
//! at the outer face, so integration by parts picks up boundary terms only on
//! the pinned faces at 0. The profiles are piecewise C²; that is enough for
//! every quadrature used here.

use crate::error::{CoreError, Result};

/// Value, first and (diagonal) second partials, and the support box of a
/// test function on the orthant.
pub trait TestFunction: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn partial(&self, j: usize, x: &[f64]) -> f64;
    /// Diagonal second partial `∂²_j`.
    fn partial2(&self, j: usize, x: &[f64]) -> f64;
    /// Upper corners `s_j` of the support box `[0,s_1]×…×[0,s_n]`, or `None`
    /// for surrogates without compact support (the constant function used in
    /// invariance checks).
    fn support(&self) -> Option<&[f64]>;
}

/// One-dimensional bump profiles on `[0,1]`, zero outside. All satisfy
/// `p(1) = p'(1) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BumpProfile {
    /// `t(1−t)²`: slope 1 at the wall.
    Cubic,
    /// `t²(1−t)²`: flat at the wall.
    Quartic,
    /// `t(1−t)³`: slope 1 at the wall, flatter at the face.
    CubicFlat,
}

impl BumpProfile {
    fn eval(self, t: f64) -> f64 {
        if !(0.0..1.0).contains(&t) {
            return 0.0;
        }
        let u = 1.0 - t;
        match self {
            BumpProfile::Cubic => t * u * u,
            BumpProfile::Quartic => t * t * u * u,
            BumpProfile::CubicFlat => t * u * u * u,
        }
    }

    fn d1(self, t: f64) -> f64 {
        if !(0.0..1.0).contains(&t) {
            return 0.0;
        }
        let u = 1.0 - t;
        match self {
            BumpProfile::Cubic => u * (1.0 - 3.0 * t),
            BumpProfile::Quartic => 2.0 * t * u * (1.0 - 2.0 * t),
            BumpProfile::CubicFlat => u * u * (1.0 - 4.0 * t),
        }
    }

    fn d2(self, t: f64) -> f64 {
        if !(0.0..1.0).contains(&t) {
            return 0.0;
        }
        match self {
            BumpProfile::Cubic => 6.0 * t - 4.0,
            BumpProfile::Quartic => 2.0 - 12.0 * t + 12.0 * t * t,
            BumpProfile::CubicFlat => (1.0 - t) * (12.0 * t - 6.0),
        }
    }
}

/// Tensor-product bump `Π_j p_j(x_j / s_j)`.
pub struct BumpProduct {
    profiles: Vec<BumpProfile>,
    support: Vec<f64>,
}

impl BumpProduct {
    pub fn new(profiles: Vec<BumpProfile>, support: Vec<f64>) -> Result<Self> {
        if profiles.len() != support.len() || support.is_empty() {
            return Err(CoreError::DimensionMismatch {
                expected: profiles.len(),
                got: support.len(),
            });
        }
        if let Some(&bad) = support.iter().find(|s| !(**s > 0.0)) {
            return Err(CoreError::param(
                "support",
                format!("support extent must be positive, got {bad}"),
            ));
        }
        Ok(BumpProduct { profiles, support })
    }

    /// The default member: `Π_j p(x_j/s)` with `p(t) = t(1−t)²`.
    pub fn cubic(n: usize, extent: f64) -> Result<Self> {
        BumpProduct::new(vec![BumpProfile::Cubic; n], vec![extent; n])
    }
}

impl TestFunction for BumpProduct {
    fn dim(&self) -> usize {
        self.support.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.profiles
            .iter()
            .zip(x)
            .zip(&self.support)
            .map(|((p, xi), s)| p.eval(xi / s))
            .product()
    }

    fn partial(&self, j: usize, x: &[f64]) -> f64 {
        let mut acc = self.profiles[j].d1(x[j] / self.support[j]) / self.support[j];
        for (i, ((p, xi), s)) in self.profiles.iter().zip(x).zip(&self.support).enumerate() {
            if i != j {
                acc *= p.eval(xi / s);
            }
        }
        acc
    }

    fn partial2(&self, j: usize, x: &[f64]) -> f64 {
        let sj = self.support[j];
        let mut acc = self.profiles[j].d2(x[j] / sj) / (sj * sj);
        for (i, ((p, xi), s)) in self.profiles.iter().zip(x).zip(&self.support).enumerate() {
            if i != j {
                acc *= p.eval(xi / s);
            }
        }
        acc
    }

    fn support(&self) -> Option<&[f64]> {
        Some(&self.support)
    }
}

/// The constant function 1 with all partials zero. Not a member of the
/// compactly supported class; accepted only where a constant is meaningful
/// (invariance checks, trivial martingale cases).
pub struct ConstantSurrogate {
    n: usize,
}

impl ConstantSurrogate {
    pub fn new(n: usize) -> Self {
        ConstantSurrogate { n }
    }
}

impl TestFunction for ConstantSurrogate {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, _x: &[f64]) -> f64 {
        1.0
    }

    fn partial(&self, _j: usize, _x: &[f64]) -> f64 {
        0.0
    }

    fn partial2(&self, _j: usize, _x: &[f64]) -> f64 {
        0.0
    }

    fn support(&self) -> Option<&[f64]> {
        None
    }
}
