//! Sticky reflected random walks on the orthant `[0,∞)^n`.
//!
//! The invariant measure is a mixture: an atom of weight β on each pinned
//! coordinate and a density along the free ones. This crate provides the
//! pieces needed to simulate the dynamics and verify them against that
//! measure:
//!
//! - stratified quadrature over the 2^n faces of the orthant ([`quadrature`]),
//! - density models, including the lattice interface (wetting) family
//!   ([`density`], [`wetting`]),
//! - the Dirichlet form / generator pairing with its integration-by-parts
//!   check ([`form`]),
//! - an exact-conditional Gibbs sampler for the invariant measure
//!   ([`sampler`]),
//! - an exact-event, reversible grid chain for the dynamics ([`chain`]),
//! - ergodic averages, occupation tables and martingale diagnostics
//!   ([`stats`]).

// `!(x > 0.0)` is used for validation on purpose: it rejects NaN along with
// nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chain;
pub mod density;
pub mod error;
pub mod form;
pub mod quadrature;
pub mod sampler;
pub mod stats;
pub mod strata;
pub mod testfn;
pub mod wetting;

pub use chain::{build_rates, simulate, ChainObserver, GridSchemeSpec, StatePredicate, Trajectory};
pub use density::{density_check, DensityCheck, DensityModel};
pub use error::{CoreError, Result};
pub use form::{apply_generator, check_ibp, check_invariance, dirichlet_form, energy_density};
pub use quadrature::{
    boundary_mass_ratio, stratified_integral, BoundaryMass, QuadratureResult, StickyMeasureSpec,
};
pub use sampler::{sample_invariant, ConditionalTable, SampleSet, SamplerConfig};
pub use stats::{ergodic_average, occupancy_report, ErgodicReport, OccupancyReport};
pub use strata::{enumerate_strata, stratum_of, StratumIndex};
pub use testfn::{BumpProduct, TestFunction};
pub use wetting::{hamiltonian, interaction_drift, wetting_density, LatticeSpec, PotentialModel};
