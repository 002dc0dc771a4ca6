//! The energy form, its generator, and the verification identities tying
//! them together.
//!
//! On each stratum the form pairs the gradients along the free coordinates;
//! the generator adds the drift `∇log ρ` there and pushes pinned coordinates
//! up with constant speed `1/β`. `check_ibp` evaluates both sides of
//! `E(f,g) = ∫(−Lf)g dμ` through independent quadratures and reports the
//! residual; `check_invariance` is the `g ≡ 1` special case.

use serde::Serialize;

use crate::density::DensityModel;
use crate::error::{CoreError, Result};
use crate::quadrature::{stratified_integral, QuadratureResult, StickyMeasureSpec};
use crate::testfn::TestFunction;

fn validate_support(f: &dyn TestFunction, spec: &StickyMeasureSpec) -> Result<()> {
    if f.dim() != spec.dim() {
        return Err(CoreError::DimensionMismatch {
            expected: spec.dim(),
            got: f.dim(),
        });
    }
    if let Some(s) = f.support() {
        if s.iter().any(|&sj| sj > spec.trunc()) {
            return Err(CoreError::SupportOutsideBox {
                support: s.to_vec(),
                trunc: spec.trunc(),
            });
        }
    }
    Ok(())
}

/// `E(f,g) = Σ_{B≠∅} β^(n−#B) ∫_{E_+(B)} (∇^B f, ∇^B g) ρ dλ_B`.
///
/// At a quadrature node the free set is exactly the positive-coordinate set,
/// so a single integrand handles every stratum; the empty stratum contributes
/// nothing because the gradient pairing there is an empty sum.
pub fn dirichlet_form(
    f: &dyn TestFunction,
    g: &dyn TestFunction,
    rho: &DensityModel,
    spec: &StickyMeasureSpec,
) -> Result<QuadratureResult> {
    validate_support(f, spec)?;
    validate_support(g, spec)?;
    stratified_integral(
        |x: &[f64]| {
            (0..x.len())
                .filter(|&i| x[i] > 0.0)
                .map(|i| f.partial(i, x) * g.partial(i, x))
                .sum::<f64>()
        },
        rho,
        spec,
    )
}

/// `Lf(x)` for the stratum containing `x`: diffusion and drift along the
/// free coordinates, escape drift `1/β` along the pinned ones.
pub fn apply_generator(f: &dyn TestFunction, x: &[f64], rho: &DensityModel, beta: f64) -> f64 {
    debug_assert_eq!(f.dim(), x.len());
    debug_assert_eq!(rho.dim(), x.len());
    let mut acc = 0.0;
    for i in 0..x.len() {
        if x[i] > 0.0 {
            acc += f.partial2(i, x) + f.partial(i, x) * rho.partial_log_rho(i, x);
        } else {
            acc += f.partial(i, x) / beta;
        }
    }
    acc
}

/// Density of the energy measure of `g` at `x`: `2 Σ_{i free}(∂_i g)²`.
pub fn energy_density(g: &dyn TestFunction, x: &[f64]) -> f64 {
    2.0 * (0..x.len())
        .filter(|&i| x[i] > 0.0)
        .map(|i| {
            let d = g.partial(i, x);
            d * d
        })
        .sum::<f64>()
}

/// Residual report for the integration-by-parts identity.
#[derive(Debug, Clone, Serialize)]
pub struct IbpReport {
    pub form_value: f64,
    pub ibp_value: f64,
    pub abs_residual: f64,
    pub rel_residual: f64,
    /// Per-stratum breakdown of the form side.
    pub per_stratum: QuadratureResult,
}

/// Evaluate `E(f,g)` and `∫(−Lf)g dμ` by independent quadratures.
pub fn check_ibp(
    f: &dyn TestFunction,
    g: &dyn TestFunction,
    rho: &DensityModel,
    spec: &StickyMeasureSpec,
) -> Result<IbpReport> {
    let form = dirichlet_form(f, g, rho, spec)?;
    let ibp = stratified_integral(
        |x: &[f64]| -apply_generator(f, x, rho, spec.beta()) * g.value(x),
        rho,
        spec,
    )?;
    let abs = (form.value - ibp.value).abs();
    let scale = form.value.abs().max(ibp.value.abs());
    let rel = if scale > 0.0 { abs / scale } else { 0.0 };
    Ok(IbpReport {
        form_value: form.value,
        ibp_value: ibp.value,
        abs_residual: abs,
        rel_residual: rel,
        per_stratum: form,
    })
}

/// `|∫ Lf dμ| / μ(box)`; vanishes for the invariant measure since the
/// constant function has zero energy.
pub fn check_invariance(
    f: &dyn TestFunction,
    rho: &DensityModel,
    spec: &StickyMeasureSpec,
) -> Result<f64> {
    validate_support(f, spec)?;
    let lf = stratified_integral(
        |x: &[f64]| apply_generator(f, x, rho, spec.beta()),
        rho,
        spec,
    )?;
    let mass = stratified_integral(|_| 1.0, rho, spec)?;
    if mass.value <= 0.0 {
        return Err(CoreError::DegenerateModel(format!(
            "mass vanishes for {}",
            rho.label()
        )));
    }
    Ok(lf.value.abs() / mass.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testfn::{BumpProduct, BumpProfile, ConstantSurrogate};
    use crate::wetting::{wetting_density, LatticeSpec, PotentialModel};

    /// A test function with hand-set derivative data, for pointwise generator
    /// checks.
    struct Stub {
        n: usize,
        grad: Vec<f64>,
        hess: Vec<f64>,
    }

    impl TestFunction for Stub {
        fn dim(&self) -> usize {
            self.n
        }
        fn value(&self, _x: &[f64]) -> f64 {
            0.0
        }
        fn partial(&self, j: usize, _x: &[f64]) -> f64 {
            self.grad[j]
        }
        fn partial2(&self, j: usize, _x: &[f64]) -> f64 {
            self.hess[j]
        }
        fn support(&self) -> Option<&[f64]> {
            None
        }
    }

    #[test]
    fn generator_interior_line() {
        let rho = DensityModel::exponential(&[1.0]).unwrap();
        let f = Stub {
            n: 1,
            grad: vec![1.0],
            hess: vec![0.0],
        };
        assert_eq!(apply_generator(&f, &[0.5], &rho, 1.0), -1.0);
    }

    #[test]
    fn generator_origin_is_escape_drift() {
        let rho = DensityModel::exponential(&[1.0]).unwrap();
        let f = Stub {
            n: 1,
            grad: vec![1.0],
            hess: vec![0.0],
        };
        assert_eq!(apply_generator(&f, &[0.0], &rho, 2.0), 0.5);
    }

    #[test]
    fn generator_mixed_stratum() {
        let rho = DensityModel::exponential(&[1.0, 1.0]).unwrap();
        let (p, q, r) = (0.3, -0.7, 1.9);
        let f = Stub {
            n: 2,
            grad: vec![p, q],
            hess: vec![r, 123.0],
        };
        let lf = apply_generator(&f, &[1.0, 0.0], &rho, 1.0);
        assert!((lf - (r - p + q)).abs() < 1e-15);
    }

    #[test]
    fn generator_origin_sums_escape_terms() {
        let rho = DensityModel::exponential(&[1.0, 2.0, 0.5]).unwrap();
        let f = Stub {
            n: 3,
            grad: vec![1.0, 2.0, -0.5],
            hess: vec![9.0, 9.0, 9.0],
        };
        let beta = 4.0;
        let lf = apply_generator(&f, &[0.0; 3], &rho, beta);
        assert!((lf - (1.0 + 2.0 - 0.5) / beta).abs() < 1e-15);
    }

    #[test]
    fn energy_density_by_stratum() {
        let g = Stub {
            n: 2,
            grad: vec![1.0, 1.0],
            hess: vec![0.0, 0.0],
        };
        assert_eq!(energy_density(&g, &[0.3, 2.0]), 4.0);
        assert_eq!(energy_density(&g, &[0.3, 0.0]), 2.0);
        assert_eq!(energy_density(&g, &[0.0, 0.0]), 0.0);
    }

    #[test]
    fn form_against_constant_vanishes() {
        let rho = DensityModel::exponential(&[1.0]).unwrap();
        let spec = StickyMeasureSpec::new(1, 1.0, 4.0, 16).unwrap();
        let f = BumpProduct::cubic(1, 1.0).unwrap();
        let g = ConstantSurrogate::new(1);
        let q = dirichlet_form(&f, &g, &rho, &spec).unwrap();
        assert_eq!(q.value, 0.0);
    }

    #[test]
    fn form_matches_independent_line_quadrature() {
        // n=1, f = g = x(1−x)² on [0,1], ρ = e^{−x}:
        // E(f,f) = ∫₀¹ ((1−x)² − 2x(1−x))² e^{−x} dx. The oracle expands the
        // square into moments I_k = ∫₀¹ x^k e^{−x} dx and uses the recurrence
        // I_k = −e^{−1} + k·I_{k−1}.
        let mut moments = [0.0f64; 5];
        moments[0] = 1.0 - (-1.0f64).exp();
        for k in 1..5 {
            moments[k] = -(-1.0f64).exp() + k as f64 * moments[k - 1];
        }
        // ((1−x)(1−3x))² = 1 − 8x + 22x² − 24x³ + 9x⁴.
        let oracle = moments[0] - 8.0 * moments[1] + 22.0 * moments[2] - 24.0 * moments[3]
            + 9.0 * moments[4];

        let rho = DensityModel::exponential(&[1.0]).unwrap();
        let spec = StickyMeasureSpec::new(1, 1.0, 1.25, 40).unwrap();
        let f = BumpProduct::cubic(1, 1.0).unwrap();
        let q = dirichlet_form(&f, &f, &rho, &spec).unwrap();
        assert!(
            (q.value - oracle).abs() < 1e-9,
            "form {} vs oracle {oracle}",
            q.value
        );
    }

    #[test]
    fn form_is_symmetric_and_nonnegative() {
        let rho = DensityModel::gaussian(&[1.0, 1.0]).unwrap();
        let spec = StickyMeasureSpec::new(2, 0.8, 2.0, 20).unwrap();
        let f = BumpProduct::new(
            vec![BumpProfile::Cubic, BumpProfile::Quartic],
            vec![1.0, 1.0],
        )
        .unwrap();
        let g = BumpProduct::new(
            vec![BumpProfile::CubicFlat, BumpProfile::Cubic],
            vec![1.0, 1.0],
        )
        .unwrap();
        let fg = dirichlet_form(&f, &g, &rho, &spec).unwrap().value;
        let gf = dirichlet_form(&g, &f, &rho, &spec).unwrap().value;
        assert!((fg - gf).abs() <= 1e-12 * fg.abs().max(1.0));
        assert!(dirichlet_form(&f, &f, &rho, &spec).unwrap().value >= 0.0);
        assert!(dirichlet_form(&g, &g, &rho, &spec).unwrap().value >= 0.0);
    }

    #[test]
    fn form_is_bilinear() {
        struct Sum<'a>(&'a dyn TestFunction, &'a dyn TestFunction, f64, f64);
        impl TestFunction for Sum<'_> {
            fn dim(&self) -> usize {
                self.0.dim()
            }
            fn value(&self, x: &[f64]) -> f64 {
                self.2 * self.0.value(x) + self.3 * self.1.value(x)
            }
            fn partial(&self, j: usize, x: &[f64]) -> f64 {
                self.2 * self.0.partial(j, x) + self.3 * self.1.partial(j, x)
            }
            fn partial2(&self, j: usize, x: &[f64]) -> f64 {
                self.2 * self.0.partial2(j, x) + self.3 * self.1.partial2(j, x)
            }
            fn support(&self) -> Option<&[f64]> {
                self.0.support()
            }
        }

        let rho = DensityModel::exponential(&[1.0, 0.5]).unwrap();
        let spec = StickyMeasureSpec::new(2, 1.0, 1.5, 16).unwrap();
        let f = BumpProduct::cubic(2, 1.0).unwrap();
        let g1 = BumpProduct::new(
            vec![BumpProfile::Quartic, BumpProfile::Cubic],
            vec![1.0, 1.0],
        )
        .unwrap();
        let g2 = BumpProduct::new(
            vec![BumpProfile::Cubic, BumpProfile::CubicFlat],
            vec![1.0, 1.0],
        )
        .unwrap();
        let (a, b) = (1.7, -0.4);
        let combined = Sum(&g1, &g2, a, b);
        let lhs = dirichlet_form(&f, &combined, &rho, &spec).unwrap().value;
        let rhs = a * dirichlet_form(&f, &g1, &rho, &spec).unwrap().value
            + b * dirichlet_form(&f, &g2, &rho, &spec).unwrap().value;
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn support_validation() {
        let rho = DensityModel::exponential(&[1.0]).unwrap();
        let spec = StickyMeasureSpec::new(1, 1.0, 1.0, 8).unwrap();
        let too_wide = BumpProduct::cubic(1, 2.0).unwrap();
        assert!(matches!(
            dirichlet_form(&too_wide, &too_wide, &rho, &spec),
            Err(CoreError::SupportOutsideBox { .. })
        ));
    }

    #[test]
    fn ibp_line_exponential() {
        let rho = DensityModel::exponential(&[1.0]).unwrap();
        let spec = StickyMeasureSpec::new(1, 1.0, 1.25, 32).unwrap();
        let f = BumpProduct::cubic(1, 1.0).unwrap();
        let g = BumpProduct::new(vec![BumpProfile::Quartic], vec![1.0]).unwrap();
        let rep = check_ibp(&f, &g, &rho, &spec).unwrap();
        assert!(rep.rel_residual < 1e-6, "residual {}", rep.rel_residual);
        let self_rep = check_ibp(&f, &f, &rho, &spec).unwrap();
        assert!(self_rep.rel_residual < 1e-6);
        assert!(self_rep.form_value >= 0.0);
    }

    #[test]
    fn ibp_wetting_pair() {
        let rho = wetting_density(LatticeSpec::new(1, 2).unwrap(), PotentialModel::gaussian());
        let spec = StickyMeasureSpec::new(2, 1.0, 1.25, 24).unwrap();
        let f = BumpProduct::cubic(2, 1.0).unwrap();
        let g = BumpProduct::new(
            vec![BumpProfile::Quartic, BumpProfile::CubicFlat],
            vec![1.0, 1.0],
        )
        .unwrap();
        let rep = check_ibp(&f, &g, &rho, &spec).unwrap();
        assert!(rep.rel_residual < 1e-5, "residual {}", rep.rel_residual);
    }

    #[test]
    fn ibp_residual_decays_under_node_doubling() {
        // The support face falls inside a panel at every rung of the ladder,
        // so this measures the honest kink-limited rate. Single doublings
        // fluctuate with where the kink sits in its panel; the order is
        // fitted across the whole ladder.
        let rho = DensityModel::exponential(&[1.0]).unwrap();
        let f = BumpProduct::cubic(1, 1.0).unwrap();
        let g = BumpProduct::new(vec![BumpProfile::Quartic], vec![1.0]).unwrap();
        let ladder = [4usize, 8, 16, 32];
        let res: Vec<f64> = ladder
            .iter()
            .map(|&p| {
                let spec = StickyMeasureSpec::new(1, 1.0, 1.25, p).unwrap();
                check_ibp(&f, &g, &rho, &spec).unwrap().rel_residual
            })
            .collect();
        let order = (res[0] / res[3]).log2() / 3.0;
        assert!(order >= 2.0, "observed order {order} (residuals {res:?})");
        assert!(res[3] < 1e-6);
    }

    #[test]
    fn invariance_of_the_constant_and_bumps() {
        let rho = DensityModel::exponential(&[1.0]).unwrap();
        let spec = StickyMeasureSpec::new(1, 1.0, 4.0, 32).unwrap();
        let f = BumpProduct::cubic(1, 1.0).unwrap();
        assert!(check_invariance(&f, &rho, &spec).unwrap() < 1e-6);

        let c = ConstantSurrogate::new(1);
        assert_eq!(check_invariance(&c, &rho, &spec).unwrap(), 0.0);

        let wet = wetting_density(LatticeSpec::new(1, 1).unwrap(), PotentialModel::gaussian());
        let wspec = StickyMeasureSpec::new(1, 1.0, 4.0, 32).unwrap();
        let fw = BumpProduct::cubic(1, 1.0).unwrap();
        assert!(check_invariance(&fw, &wet, &wspec).unwrap() < 1e-6);
    }
}
