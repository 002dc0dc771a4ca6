//! Lattice interface model with a hard wall and pinning.
//!
//! Heights live on the sites of `{1,…,N}^d`, clamped to 0 on the surrounding
//! boundary layer. A symmetric pair potential over nearest-neighbor bonds
//! gives the energy; the induced Gibbs weight `exp(−H)` is exposed as a
//! [`DensityModel`] so every orthant tool (quadrature, sampler, chain) applies
//! verbatim with `n = N^d`.

use std::sync::Arc;

use crate::density::DensityModel;
use crate::error::{CoreError, Result};

type ScalarFn = dyn Fn(f64) -> f64 + Send + Sync;

/// Symmetric, continuously differentiable pair potential.
#[derive(Clone)]
pub struct PotentialModel {
    label: String,
    v: Arc<ScalarFn>,
    dv: Arc<ScalarFn>,
}

impl PotentialModel {
    pub fn from_parts(label: impl Into<String>, v: Arc<ScalarFn>, dv: Arc<ScalarFn>) -> Self {
        PotentialModel {
            label: label.into(),
            v,
            dv,
        }
    }

    /// `V(r) = r²/2`.
    pub fn gaussian() -> Self {
        PotentialModel::from_parts(
            "gaussian",
            Arc::new(|r| 0.5 * r * r),
            Arc::new(|r| r),
        )
    }

    /// `V(r) = r⁴/4`.
    pub fn quartic() -> Self {
        PotentialModel::from_parts(
            "quartic",
            Arc::new(|r| 0.25 * r * r * r * r),
            Arc::new(|r| r * r * r),
        )
    }

    /// `V(r) = √(1+r²) − 1`; non-convex growth at the origin, linear tails.
    pub fn smoothed_well() -> Self {
        PotentialModel::from_parts(
            "smoothed-well",
            Arc::new(|r| (1.0 + r * r).sqrt() - 1.0),
            Arc::new(|r| r / (1.0 + r * r).sqrt()),
        )
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "gaussian" => Ok(PotentialModel::gaussian()),
            "quartic" => Ok(PotentialModel::quartic()),
            "smoothed-well" => Ok(PotentialModel::smoothed_well()),
            other => Err(CoreError::param(
                "potential",
                format!("unknown potential `{other}` (gaussian, quartic, smoothed-well)"),
            )),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn value(&self, r: f64) -> f64 {
        (self.v)(r)
    }

    pub fn slope(&self, r: f64) -> f64 {
        (self.dv)(r)
    }

    /// Numeric `κ = ∫ exp(−V) dr` on `[−half_width, half_width]` by midpoint
    /// panels, plus the outermost-panel mass as a tail proxy.
    pub fn partition_mass(&self, half_width: f64, panels: usize) -> (f64, f64) {
        let width = 2.0 * half_width / panels as f64;
        let mut total = 0.0;
        let mut shell = 0.0;
        for p in 0..panels {
            let r = -half_width + (p as f64 + 0.5) * width;
            let m = (-self.value(r)).exp() * width;
            total += m;
            if p == 0 || p + 1 == panels {
                shell += m;
            }
        }
        (total, shell)
    }
}

impl std::fmt::Debug for PotentialModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PotentialModel({})", self.label)
    }
}

/// Neighbor of a lattice site in the closed lattice: either another interior
/// site or a boundary site whose height is clamped to 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatticeNeighbor {
    Site(usize),
    Clamped,
}

/// The discretized domain `{1,…,N}^d` with its boundary layer.
#[derive(Debug, Clone)]
pub struct LatticeSpec {
    d: usize,
    side: usize,
    sites: usize,
    neighbors: Vec<Vec<LatticeNeighbor>>,
    /// Unordered bonds with at least one interior endpoint; `Clamped`
    /// endpoints contribute height 0.
    bonds: Vec<(usize, LatticeNeighbor)>,
}

impl LatticeSpec {
    pub fn new(d: usize, side: usize) -> Result<Self> {
        if d == 0 {
            return Err(CoreError::param("d", "lattice dimension must be at least 1"));
        }
        if side == 0 {
            return Err(CoreError::param("side", "side length must be at least 1"));
        }
        let sites = side
            .checked_pow(d as u32)
            .filter(|&s| s <= (1 << crate::strata::MAX_DIM))
            .ok_or_else(|| CoreError::param("side", "lattice has too many sites"))?;
        let mut neighbors = Vec::with_capacity(sites);
        let mut bonds = Vec::new();
        for s in 0..sites {
            let coords = coords_of(s, d, side);
            let mut nb = Vec::with_capacity(2 * d);
            for axis in 0..d {
                for dir in [-1isize, 1isize] {
                    let c = coords[axis] as isize + dir;
                    if c < 1 || c > side as isize {
                        nb.push(LatticeNeighbor::Clamped);
                        bonds.push((s, LatticeNeighbor::Clamped));
                    } else {
                        let mut t = coords.clone();
                        t[axis] = c as usize;
                        let ti = index_of(&t, side);
                        nb.push(LatticeNeighbor::Site(ti));
                        if ti > s {
                            bonds.push((s, LatticeNeighbor::Site(ti)));
                        }
                    }
                }
            }
            neighbors.push(nb);
        }
        Ok(LatticeSpec {
            d,
            side,
            sites,
            neighbors,
            bonds,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Number of interior sites, `N^d`; the dimension of the height vector.
    pub fn sites(&self) -> usize {
        self.sites
    }

    /// Linear index of a site given by coordinates in `1..=N`.
    pub fn site_index(&self, coords: &[usize]) -> Result<usize> {
        if coords.len() != self.d || coords.iter().any(|&c| c < 1 || c > self.side) {
            return Err(CoreError::SiteOutOfLattice(coords.to_vec()));
        }
        Ok(index_of(coords, self.side))
    }

    /// Coordinates (each in `1..=N`) of a linear site index.
    pub fn site_coords(&self, site: usize) -> Vec<usize> {
        coords_of(site, self.d, self.side)
    }

    /// The 2d closed-lattice neighbors of an interior site.
    pub fn neighbors(&self, site: usize) -> Result<&[LatticeNeighbor]> {
        self.neighbors
            .get(site)
            .map(Vec::as_slice)
            .ok_or_else(|| CoreError::SiteOutOfLattice(vec![site]))
    }

    /// Unordered nearest-neighbor bonds touching the interior.
    pub fn bonds(&self) -> &[(usize, LatticeNeighbor)] {
        &self.bonds
    }
}

fn coords_of(mut s: usize, d: usize, side: usize) -> Vec<usize> {
    let mut coords = vec![0usize; d];
    for c in coords.iter_mut() {
        *c = s % side + 1;
        s /= side;
    }
    coords
}

fn index_of(coords: &[usize], side: usize) -> usize {
    coords
        .iter()
        .rev()
        .fold(0usize, |acc, &c| acc * side + (c - 1))
}

/// Interface energy: `Σ_bonds V(φ(x) − φ(y))` with heights clamped to 0 on
/// the boundary layer. Each unordered bond is counted once, which equals half
/// the ordered double sum.
pub fn hamiltonian(lat: &LatticeSpec, pot: &PotentialModel, phi: &[f64]) -> Result<f64> {
    if phi.len() != lat.sites() {
        return Err(CoreError::DimensionMismatch {
            expected: lat.sites(),
            got: phi.len(),
        });
    }
    if let Some((i, &v)) = phi.iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(CoreError::NegativeCoordinate { index: i, value: v });
    }
    Ok(hamiltonian_unchecked(lat, pot, phi))
}

fn hamiltonian_unchecked(lat: &LatticeSpec, pot: &PotentialModel, phi: &[f64]) -> f64 {
    lat.bonds()
        .iter()
        .map(|&(s, other)| {
            let hs = phi[s];
            let ht = match other {
                LatticeNeighbor::Site(t) => phi[t],
                LatticeNeighbor::Clamped => 0.0,
            };
            pot.value(hs - ht)
        })
        .sum()
}

/// Gradient of the interface energy at one site:
/// `Σ_{|x−y|=1} V′(φ(x) − φ(y))`, clamped neighbors contributing `V′(φ(x))`.
pub fn interaction_drift(lat: &LatticeSpec, pot: &PotentialModel, site: usize, phi: &[f64]) -> f64 {
    debug_assert_eq!(phi.len(), lat.sites());
    let hs = phi[site];
    lat.neighbors[site]
        .iter()
        .map(|nb| match nb {
            LatticeNeighbor::Site(t) => pot.slope(hs - phi[*t]),
            LatticeNeighbor::Clamped => pot.slope(hs),
        })
        .sum()
}

/// The Gibbs weight of the interface as a density on `[0,∞)^{N^d}`:
/// `log ρ = −H` (the partition constant is omitted; everything downstream is
/// normalization-free) and `∂_x log ρ = −Σ V′(φ(x) − φ(y))`.
pub fn wetting_density(lat: LatticeSpec, pot: PotentialModel) -> DensityModel {
    let label = format!(
        "wetting(d={}, N={}, V={})",
        lat.dim(),
        lat.side(),
        pot.label()
    );
    let n = lat.sites();
    let lat = Arc::new(lat);
    let (l1, l2, l3) = (Arc::clone(&lat), Arc::clone(&lat), Arc::clone(&lat));
    let (p1, p2, p3) = (pot.clone(), pot.clone(), pot);
    DensityModel::from_parts(
        n,
        label,
        Arc::new(move |phi: &[f64]| -hamiltonian_unchecked(&l1, &p1, phi)),
        Arc::new(move |site, phi: &[f64]| -interaction_drift(&l2, &p2, site, phi)),
    )
    .with_delta(Arc::new(move |phi: &[f64], site, v| {
        // Only the bonds incident to `site` change.
        let old = phi[site];
        l3.neighbors[site]
            .iter()
            .map(|nb| {
                let hy = match nb {
                    LatticeNeighbor::Site(t) => phi[*t],
                    LatticeNeighbor::Clamped => 0.0,
                };
                p3.value(old - hy) - p3.value(v - hy)
            })
            .sum::<f64>()
    }))
}
