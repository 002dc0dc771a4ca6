//! Shared fixtures for the benchmark targets.

use sticky_walk_core::{wetting_density, DensityModel, LatticeSpec, PotentialModel};

pub fn line_exponential() -> DensityModel {
    DensityModel::exponential(&[1.0]).expect("valid rates")
}

pub fn plane_exponential() -> DensityModel {
    DensityModel::exponential(&[1.0, 0.5]).expect("valid rates")
}

pub fn wetting_2x2() -> DensityModel {
    wetting_density(
        LatticeSpec::new(2, 2).expect("valid lattice"),
        PotentialModel::gaussian(),
    )
}
