//! Density models on the orthant.
//!
//! A density is carried as `log ρ` (up to an additive constant) together with
//! its coordinate partials. ρ itself is never materialized by the rate,
//! conditional-sampling, or drift code paths: those consume only differences
//! and logarithmic derivatives, which stay finite where Gibbs weights would
//! underflow.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{CoreError, Result};
use crate::quadrature::{stratified_integral, StickyMeasureSpec};

type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type PartialFn = dyn Fn(usize, &[f64]) -> f64 + Send + Sync;
type DeltaFn = dyn Fn(&[f64], usize, f64) -> f64 + Send + Sync;

/// A positive density on `[0,∞)^n`, represented by `log ρ` and `∂_j log ρ`.
#[derive(Clone)]
pub struct DensityModel {
    n: usize,
    label: String,
    log_rho: Arc<ValueFn>,
    partial: Arc<PartialFn>,
    /// `log ρ(x with x_j := v) − log ρ(x)`; single-coordinate moves evaluate
    /// this instead of two full `log ρ` calls.
    delta: Arc<DeltaFn>,
}

impl DensityModel {
    /// Assemble a model from closures. The delta is derived from two
    /// evaluations; builtins override it with a local computation.
    pub fn from_parts(
        n: usize,
        label: impl Into<String>,
        log_rho: Arc<ValueFn>,
        partial: Arc<PartialFn>,
    ) -> Self {
        let lr = Arc::clone(&log_rho);
        let delta: Arc<DeltaFn> = Arc::new(move |x, j, v| {
            let mut y = x.to_vec();
            y[j] = v;
            lr(&y) - lr(x)
        });
        DensityModel {
            n,
            label: label.into(),
            log_rho,
            partial,
            delta,
        }
    }

    pub fn with_delta(mut self, delta: Arc<DeltaFn>) -> Self {
        self.delta = delta;
        self
    }

    /// `log ρ = −Σ c_j x_j` with all rates strictly positive.
    pub fn exponential(rates: &[f64]) -> Result<Self> {
        if rates.is_empty() {
            return Err(CoreError::DimensionOutOfRange(0));
        }
        if let Some(&bad) = rates.iter().find(|c| !(**c > 0.0)) {
            return Err(CoreError::param(
                "rates",
                format!("exponential rate must be positive, got {bad}"),
            ));
        }
        let c = rates.to_vec();
        let c2 = c.clone();
        let c3 = c.clone();
        let label = format!("exponential({rates:?})");
        Ok(DensityModel::from_parts(
            rates.len(),
            label,
            Arc::new(move |x| -x.iter().zip(&c).map(|(xi, ci)| xi * ci).sum::<f64>()),
            Arc::new(move |j, _x| -c2[j]),
        )
        .with_delta(Arc::new(move |x, j, v| -c3[j] * (v - x[j]))))
    }

    /// `log ρ = −Σ x_j²/(2 scale_j²)`.
    pub fn gaussian(scales: &[f64]) -> Result<Self> {
        if scales.is_empty() {
            return Err(CoreError::DimensionOutOfRange(0));
        }
        if let Some(&bad) = scales.iter().find(|s| !(**s > 0.0)) {
            return Err(CoreError::param(
                "scales",
                format!("gaussian scale must be positive, got {bad}"),
            ));
        }
        let inv2: Vec<f64> = scales.iter().map(|s| 1.0 / (s * s)).collect();
        let a = inv2.clone();
        let b = inv2.clone();
        let label = format!("gaussian({scales:?})");
        Ok(DensityModel::from_parts(
            scales.len(),
            label,
            Arc::new(move |x| {
                -0.5 * x.iter().zip(&inv2).map(|(xi, k)| xi * xi * k).sum::<f64>()
            }),
            Arc::new(move |j, x| -x[j] * a[j]),
        )
        .with_delta(Arc::new(move |x, j, v| {
            -0.5 * b[j] * (v * v - x[j] * x[j])
        })))
    }

    /// Flat density (`log ρ ≡ 0`). Not integrable on the full orthant; useful
    /// on truncated boxes and as a drift-free reference.
    pub fn flat(n: usize) -> Self {
        DensityModel::from_parts(n, "flat", Arc::new(|_| 0.0), Arc::new(|_, _| 0.0))
            .with_delta(Arc::new(|_, _, _| 0.0))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn log_rho(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.n);
        (self.log_rho)(x)
    }

    pub fn partial_log_rho(&self, j: usize, x: &[f64]) -> f64 {
        debug_assert!(j < self.n);
        (self.partial)(j, x)
    }

    pub fn grad_log_rho(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|j| self.partial_log_rho(j, x)).collect()
    }

    /// `log ρ(x with x_j := v) − log ρ(x)`.
    pub fn log_rho_delta(&self, x: &[f64], j: usize, v: f64) -> f64 {
        (self.delta)(x, j, v)
    }

    /// Shift `log ρ` by a constant. Every downstream quantity is a ratio or a
    /// difference, so this must be observationally inert; tests rely on it.
    pub fn shifted(&self, c: f64) -> Self {
        let base = self.clone();
        let base2 = self.clone();
        let base3 = self.clone();
        DensityModel {
            n: self.n,
            label: format!("{}+{c}", self.label),
            log_rho: Arc::new(move |x| base.log_rho(x) + c),
            partial: Arc::new(move |j, x| base2.partial_log_rho(j, x)),
            delta: Arc::new(move |x, j, v| base3.log_rho_delta(x, j, v)),
        }
    }

    /// Largest |∂_j log ρ − central finite difference| over `points` uniform
    /// draws from the interior of `[0,l]^n`.
    pub fn gradient_deviation(&self, l: f64, points: usize, step: f64, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        let mut x = vec![0.0; self.n];
        for _ in 0..points {
            for xi in x.iter_mut() {
                // Keep nodes a step away from the faces so the central stencil
                // stays inside the domain.
                *xi = step + rng.random::<f64>() * (l - 2.0 * step);
            }
            for j in 0..self.n {
                let xj = x[j];
                x[j] = xj + step;
                let up = self.log_rho(&x);
                x[j] = xj - step;
                let down = self.log_rho(&x);
                x[j] = xj;
                let fd = (up - down) / (2.0 * step);
                worst = worst.max((fd - self.partial_log_rho(j, &x)).abs());
            }
        }
        worst
    }
}

impl std::fmt::Debug for DensityModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "DensityModel({}, n={})", self.label, self.n)
    }
}

/// Numeric verification of the standing density assumptions: finite mass on
/// the truncated box with a controlled tail, square-integrable logarithmic
/// derivative, and gradient consistency.
#[derive(Debug, Clone, Serialize)]
pub struct DensityCheck {
    pub label: String,
    /// `μ(box)` for the unnormalized density.
    pub mass: f64,
    pub mass_tail: f64,
    /// `∫ |∇ log ρ|² dμ` over the box.
    pub drift_l2: f64,
    pub drift_l2_tail: f64,
    /// max |∂_j log ρ − finite difference| over sampled interior points.
    pub gradient_deviation: f64,
}

impl DensityCheck {
    /// Mass is finite and the sampled tail shell is negligible relative to it.
    pub fn integrable(&self, rel_tol: f64) -> bool {
        self.mass.is_finite() && self.mass > 0.0 && self.mass_tail <= rel_tol * self.mass
    }

    /// The drift `∇ log ρ` is numerically in `L²(μ)` on the box.
    pub fn drift_square_integrable(&self, rel_tol: f64) -> bool {
        self.drift_l2.is_finite() && self.drift_l2_tail <= rel_tol * self.drift_l2.max(1e-300)
    }

    pub fn gradient_consistent(&self, tol: f64) -> bool {
        self.gradient_deviation <= tol
    }
}

const GRADIENT_CHECK_POINTS: usize = 1000;
const GRADIENT_CHECK_STEP: f64 = 1e-5;
const GRADIENT_CHECK_SEED: u64 = 0x5eed_0001;

/// Evaluate the standing assumptions for `rho` on the box described by `spec`.
pub fn density_check(rho: &DensityModel, spec: &StickyMeasureSpec) -> Result<DensityCheck> {
    let mass = stratified_integral(|_x| 1.0, rho, spec)?;
    let drift = stratified_integral(
        |x| {
            (0..rho.dim())
                .map(|j| {
                    let g = rho.partial_log_rho(j, x);
                    g * g
                })
                .sum::<f64>()
        },
        rho,
        spec,
    )?;
    let dev = rho.gradient_deviation(
        spec.trunc(),
        GRADIENT_CHECK_POINTS,
        GRADIENT_CHECK_STEP,
        GRADIENT_CHECK_SEED,
    );
    Ok(DensityCheck {
        label: rho.label().to_string(),
        mass: mass.value,
        mass_tail: mass.est_truncation_error,
        drift_l2: drift.value,
        drift_l2_tail: drift.est_truncation_error,
        gradient_deviation: dev,
    })
}
