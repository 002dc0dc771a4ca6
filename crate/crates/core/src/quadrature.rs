//! Stratified quadrature against the mixed Dirac/Lebesgue reference measure.
//!
//! The reference measure on `[0,∞)^n` puts weight `β^(n−#B)` on each stratum
//! `E_+(B)`: Lebesgue measure along the free coordinates of `B`, a point mass
//! at 0 on the pinned ones. Integrals against `μ = ρ·m` therefore decompose
//! into 2^n face integrals. The domain is truncated to `[0,L]^n`; each free
//! axis carries a composite 8-point Gauss–Legendre rule with `nodes_per_axis`
//! panels, and the mass sampled in the outermost panel shell is reported as a
//! truncation-error estimate.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use crate::density::DensityModel;
use crate::error::{CoreError, Result};
use crate::strata::{enumerate_strata, StratumIndex};

/// 8-point Gauss–Legendre abscissae on [-1, 1] (positive half).
const GL_X: [f64; 4] = [
    0.1834346424956498,
    0.525532409916329,
    0.7966664774136267,
    0.9602898564975362,
];
const GL_W: [f64; 4] = [
    0.362683783378362,
    0.31370664587788727,
    0.22238103445337448,
    0.10122853629037626,
];

/// Dimension, pinning strength and quadrature resolution for the measure
/// `m_{n,β}` truncated to `[0,L]^n`.
#[derive(Debug, Clone, Serialize)]
pub struct StickyMeasureSpec {
    n: usize,
    beta: f64,
    trunc: f64,
    nodes_per_axis: usize,
}

impl StickyMeasureSpec {
    pub fn new(n: usize, beta: f64, trunc: f64, nodes_per_axis: usize) -> Result<Self> {
        if n == 0 || n > crate::strata::MAX_DIM {
            return Err(CoreError::DimensionOutOfRange(n));
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(CoreError::param("beta", format!("must be positive, got {beta}")));
        }
        if !(trunc > 0.0) || !trunc.is_finite() {
            return Err(CoreError::param("trunc", format!("must be positive, got {trunc}")));
        }
        if nodes_per_axis < 2 {
            return Err(CoreError::param(
                "nodes_per_axis",
                format!("need at least 2 panels, got {nodes_per_axis}"),
            ));
        }
        Ok(StickyMeasureSpec {
            n,
            beta,
            trunc,
            nodes_per_axis,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn trunc(&self) -> f64 {
        self.trunc
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.nodes_per_axis
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        StickyMeasureSpec::new(self.n, beta, self.trunc, self.nodes_per_axis)
    }

    pub fn with_nodes_per_axis(&self, nodes_per_axis: usize) -> Result<Self> {
        StickyMeasureSpec::new(self.n, self.beta, self.trunc, nodes_per_axis)
    }

    /// `β^(n−#B)`, the reference weight of stratum `B`.
    pub fn stratum_weight(&self, b: &StratumIndex) -> f64 {
        self.beta.powi((self.n as u32 - b.free_count()) as i32)
    }

    /// Composite Gauss–Legendre nodes for one free axis on `[0, L]`.
    /// The `outer` flag marks nodes in the last panel (tail shell).
    fn axis_nodes(&self) -> Vec<AxisNode> {
        let panels = self.nodes_per_axis;
        let width = self.trunc / panels as f64;
        let mut nodes = Vec::with_capacity(panels * 8);
        for p in 0..panels {
            let mid = (p as f64 + 0.5) * width;
            let half = 0.5 * width;
            let outer = p + 1 == panels;
            for k in 0..4 {
                nodes.push(AxisNode {
                    x: mid - half * GL_X[k],
                    w: half * GL_W[k],
                    outer,
                });
                nodes.push(AxisNode {
                    x: mid + half * GL_X[k],
                    w: half * GL_W[k],
                    outer,
                });
            }
        }
        nodes
    }
}

#[derive(Clone, Copy)]
struct AxisNode {
    x: f64,
    w: f64,
    outer: bool,
}

/// Integral of `f·ρ` against the truncated reference measure, stratified.
#[derive(Debug, Clone)]
pub struct QuadratureResult {
    /// Sum of the per-stratum contributions.
    pub value: f64,
    /// Contribution of each stratum, in canonical enumeration order.
    pub per_stratum: BTreeMap<StratumIndex, f64>,
    /// Mass sampled in the outermost panel shell; a proxy for what the
    /// truncation to `[0,L]^n` discards when the integrand decays.
    pub est_truncation_error: f64,
}

impl Serialize for QuadratureResult {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr<'a> {
            value: f64,
            per_stratum: PerStratum<'a>,
            est_truncation_error: f64,
        }
        struct PerStratum<'a>(&'a BTreeMap<StratumIndex, f64>);
        impl Serialize for PerStratum<'_> {
            fn serialize<S: Serializer>(
                &self,
                serializer: S,
            ) -> std::result::Result<S::Ok, S::Error> {
                let mut map = serializer.serialize_map(Some(self.0.len()))?;
                for (b, v) in self.0 {
                    map.serialize_entry(&b.mask().to_string(), v)?;
                }
                map.end()
            }
        }
        Repr {
            value: self.value,
            per_stratum: PerStratum(&self.per_stratum),
            est_truncation_error: self.est_truncation_error,
        }
        .serialize(serializer)
    }
}

/// `Σ_B β^(n−#B) ∫_{E_+(B)∩[0,L]^n} f ρ dλ_B`, with a per-stratum breakdown.
///
/// Free axes carry the composite Gauss–Legendre rule; pinned axes are point
/// evaluations at 0. A non-finite sample (from `f` or from `exp(log ρ)`)
/// aborts with the offending node.
pub fn stratified_integral<F>(
    f: F,
    rho: &DensityModel,
    spec: &StickyMeasureSpec,
) -> Result<QuadratureResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if rho.dim() != spec.dim() {
        return Err(CoreError::DimensionMismatch {
            expected: spec.dim(),
            got: rho.dim(),
        });
    }
    let nodes = spec.axis_nodes();
    let mut per_stratum = BTreeMap::new();
    let mut shell = 0.0;
    let mut total = 0.0;
    for b in enumerate_strata(spec.dim())? {
        let weight = spec.stratum_weight(&b);
        let (raw, raw_shell) = stratum_integral(&b, spec.dim(), &nodes, &f, rho)?;
        per_stratum.insert(b, weight * raw);
        total += weight * raw;
        shell += weight * raw_shell;
    }
    Ok(QuadratureResult {
        value: total,
        per_stratum,
        est_truncation_error: shell,
    })
}

/// Plain face integral `∫_{E_+(B)∩[0,L]^n} f ρ dλ_B` without the β weight.
fn stratum_integral<F>(
    b: &StratumIndex,
    n: usize,
    nodes: &[AxisNode],
    f: &F,
    rho: &DensityModel,
) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let free: Vec<usize> = b.coords().take_while(|&c| c < n).collect();
    if free.is_empty() {
        let x = vec![0.0; n];
        let v = f(&x) * rho.log_rho(&x).exp();
        if !v.is_finite() {
            return Err(CoreError::NonFiniteSample { node: x, value: v });
        }
        return Ok((v, 0.0));
    }

    // Parallelize over the first free axis; partial sums are collected in
    // node order and reduced sequentially, so the result is independent of
    // the thread layout.
    let outer_axis = free[0];
    let inner_axes = &free[1..];
    let partials: Vec<(f64, f64)> = nodes
        .par_iter()
        .map(|outer_node| -> Result<(f64, f64)> {
            let mut x = vec![0.0; n];
            x[outer_axis] = outer_node.x;
            let mut sum = 0.0;
            let mut shell_sum = 0.0;
            if inner_axes.is_empty() {
                let v = f(&x) * rho.log_rho(&x).exp();
                if !v.is_finite() {
                    return Err(CoreError::NonFiniteSample { node: x, value: v });
                }
                sum = outer_node.w * v;
                if outer_node.outer {
                    shell_sum = sum.abs();
                }
            } else {
                let mut idx = vec![0usize; inner_axes.len()];
                'odometer: loop {
                    let mut w = outer_node.w;
                    let mut any_outer = outer_node.outer;
                    for (slot, &axis) in idx.iter().zip(inner_axes) {
                        let node = nodes[*slot];
                        x[axis] = node.x;
                        w *= node.w;
                        any_outer |= node.outer;
                    }
                    let v = f(&x) * rho.log_rho(&x).exp();
                    if !v.is_finite() {
                        return Err(CoreError::NonFiniteSample { node: x, value: v });
                    }
                    sum += w * v;
                    if any_outer {
                        shell_sum += (w * v).abs();
                    }
                    for slot in (0..idx.len()).rev() {
                        idx[slot] += 1;
                        if idx[slot] < nodes.len() {
                            continue 'odometer;
                        }
                        idx[slot] = 0;
                    }
                    break;
                }
            }
            Ok((sum, shell_sum))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut sum = 0.0;
    let mut shell = 0.0;
    for (s, sh) in partials {
        sum += s;
        shell += sh;
    }
    Ok((sum, shell))
}

/// The β-polynomial coefficients of the dry-set mass of coordinate `coord`:
/// `a_i` restricted to strata containing the coordinate, `b_i` unrestricted,
/// indexed by the number of pinned coordinates `i = n − #B`.
#[derive(Debug, Clone, Serialize)]
pub struct BoundaryMass {
    pub coord: usize,
    pub beta: f64,
    /// `a_i = Σ_{#B=n−i, coord∈B} ∫ ρ dλ_B` (so `a_n = 0`).
    pub wet_coeffs: Vec<f64>,
    /// `b_i = Σ_{#B=n−i} ∫ ρ dλ_B`.
    pub total_coeffs: Vec<f64>,
}

impl BoundaryMass {
    /// `μ({x_coord = 0}) / μ(E)` at the β the coefficients were built with.
    pub fn ratio(&self) -> f64 {
        self.ratio_at(self.beta)
    }

    /// Re-evaluate the ratio at another pinning strength without
    /// re-integrating: `1 − Σβ^i a_i / Σβ^i b_i`.
    pub fn ratio_at(&self, beta: f64) -> f64 {
        let num: f64 = poly_eval(&self.wet_coeffs, beta);
        let den: f64 = poly_eval(&self.total_coeffs, beta);
        1.0 - num / den
    }
}

fn poly_eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Mass fraction of the face `{x_coord = 0}` under `μ = ρ·m_{n,β}`, exposed
/// through its β-polynomial coefficients.
pub fn boundary_mass_ratio(
    coord: usize,
    rho: &DensityModel,
    spec: &StickyMeasureSpec,
) -> Result<BoundaryMass> {
    let n = spec.dim();
    if coord >= n {
        return Err(CoreError::param(
            "coord",
            format!("coordinate {coord} out of range for dimension {n}"),
        ));
    }
    if rho.dim() != n {
        return Err(CoreError::DimensionMismatch {
            expected: n,
            got: rho.dim(),
        });
    }
    let nodes = spec.axis_nodes();
    let mut wet = vec![0.0; n + 1];
    let mut tot = vec![0.0; n + 1];
    for b in enumerate_strata(n)? {
        let (raw, _) = stratum_integral(&b, n, &nodes, &|_x: &[f64]| 1.0, rho)?;
        let i = n - b.free_count() as usize;
        tot[i] += raw;
        if b.contains(coord) {
            wet[i] += raw;
        }
    }
    if poly_eval(&tot, spec.beta()) <= 0.0 {
        return Err(CoreError::DegenerateModel(format!(
            "total mass vanishes for {}",
            rho.label()
        )));
    }
    Ok(BoundaryMass {
        coord,
        beta: spec.beta(),
        wet_coeffs: wet,
        total_coeffs: tot,
    })
}
