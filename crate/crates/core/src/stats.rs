//! Ergodic averages, occupation tables, and martingale diagnostics.
//!
//! Everything here consumes the exact event stream: the chain is piecewise
//! constant, so time integrals are finite sums and the verification layer
//! carries no time-discretization error of its own. Confidence intervals use
//! batch means over equal time slices. Long runs are handled by streaming
//! observers that never materialize the event log; ensembles fan out across
//! RNG sub-streams and are reduced in path order, so results do not depend on
//! the thread layout.

use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{
    run_chain_seeded, ChainObserver, ChainSummary, GridSchemeSpec, StatePredicate, Trajectory,
};
use crate::density::DensityModel;
use crate::error::{CoreError, Result};
use crate::form::{apply_generator, energy_density};
use crate::quadrature::{boundary_mass_ratio, stratified_integral, StickyMeasureSpec};
use crate::strata::enumerate_strata;
use crate::testfn::TestFunction;

pub const DEFAULT_BATCHES: usize = 32;

/// Time-weighted accumulator over equal time slices of `[0, T]`.
#[derive(Debug, Clone)]
pub struct BatchMeans {
    total_time: f64,
    batch_len: f64,
    sums: Vec<f64>,
}

impl BatchMeans {
    pub fn new(n_batches: usize, total_time: f64) -> Self {
        BatchMeans {
            total_time,
            batch_len: total_time / n_batches as f64,
            sums: vec![0.0; n_batches],
        }
    }

    /// Add `value` held over `[t, t+dt)`, split across batch boundaries.
    pub fn add(&mut self, t: f64, dt: f64, value: f64) {
        if dt <= 0.0 {
            return;
        }
        let k = self.sums.len();
        let mut t0 = t;
        let t1 = (t + dt).min(self.total_time);
        while t0 < t1 {
            let b = ((t0 / self.batch_len) as usize).min(k - 1);
            let end = if b + 1 == k {
                self.total_time
            } else {
                (b as f64 + 1.0) * self.batch_len
            };
            let take = (t1 - t0).min(end - t0);
            if take <= 0.0 {
                break;
            }
            self.sums[b] += value * take;
            t0 += take;
        }
    }

    pub fn n_batches(&self) -> usize {
        self.sums.len()
    }

    pub fn mean(&self) -> f64 {
        self.sums.iter().sum::<f64>() / self.total_time
    }

    /// Batch-means standard error of the time average.
    pub fn standard_error(&self) -> f64 {
        let k = self.sums.len() as f64;
        let means: Vec<f64> = self.sums.iter().map(|s| s / self.batch_len).collect();
        let center = means.iter().sum::<f64>() / k;
        let var = means.iter().map(|m| (m - center) * (m - center)).sum::<f64>() / (k - 1.0);
        (var / k).sqrt()
    }
}

/// One verified ergodic average: estimate vs quadrature target.
#[derive(Debug, Clone, Serialize)]
pub struct ErgodicReport {
    pub observable: String,
    pub average: f64,
    pub target: f64,
    pub se: f64,
    pub n_batches: usize,
    /// `|average − target| ≤ 3·se`.
    pub pass: bool,
}

impl ErgodicReport {
    fn assemble(observable: String, average: f64, se: f64, n_batches: usize, target: f64) -> Self {
        ErgodicReport {
            observable,
            average,
            target,
            se,
            n_batches,
            pass: (average - target).abs() <= 3.0 * se,
        }
    }
}

/// Time average of `f` over the trajectory, with a batch-means standard error
/// and the quadrature value of `∫f dμ / μ(E)` as target.
pub fn ergodic_average<F: Fn(&[f64]) -> f64 + Sync>(
    traj: &Trajectory,
    observable: F,
    label: impl Into<String>,
    rho: &DensityModel,
    spec: &StickyMeasureSpec,
) -> Result<ErgodicReport> {
    let target = mu_expectation(&observable, rho, spec)?;
    let (avg, se, k) = time_average(traj, &observable)?;
    Ok(ErgodicReport::assemble(label.into(), avg, se, k, target))
}

/// `∫ f dμ / μ(E)` on the truncated box.
pub fn mu_expectation<F: Fn(&[f64]) -> f64 + Sync>(
    f: &F,
    rho: &DensityModel,
    spec: &StickyMeasureSpec,
) -> Result<f64> {
    let num = stratified_integral(|x| f(x), rho, spec)?;
    let mass = stratified_integral(|_| 1.0, rho, spec)?;
    if !(mass.value > 0.0) {
        return Err(CoreError::DegenerateModel(format!(
            "mass vanishes for {}",
            rho.label()
        )));
    }
    Ok(num.value / mass.value)
}

fn time_average<F: Fn(&[f64]) -> f64>(traj: &Trajectory, f: &F) -> Result<(f64, f64, usize)> {
    if !(traj.total_time > 0.0) {
        return Err(CoreError::PathTooShort {
            requested: f64::MIN_POSITIVE,
            total: traj.total_time,
        });
    }
    let mut batches = BatchMeans::new(DEFAULT_BATCHES, traj.total_time);
    let mut t = 0.0;
    traj.for_each_interval(|_state, coords, dt| {
        batches.add(t, dt, f(coords));
        t += dt;
    });
    Ok((batches.mean(), batches.standard_error(), batches.n_batches()))
}

#[derive(Debug, Clone, Serialize)]
pub struct OccupancyRow {
    pub observable: String,
    pub estimate: f64,
    pub target: f64,
    pub se: f64,
    pub pass: bool,
}

/// Occupation fractions against their invariant-measure values: one row per
/// coordinate (`x_j = 0`) and, for modest dimensions, one per stratum.
#[derive(Debug, Clone, Serialize)]
pub struct OccupancyReport {
    pub rows: Vec<OccupancyRow>,
}

impl OccupancyReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

/// Strata are enumerated in the report only up to this dimension; beyond it
/// the 2^n rows stop being a table anyone reads.
const STRATA_REPORT_MAX_DIM: usize = 6;

fn occupancy_predicates(n: usize) -> Result<Vec<(String, StatePredicate)>> {
    let mut preds: Vec<(String, StatePredicate)> = (0..n)
        .map(|j| (format!("x{j}=0"), StatePredicate::CoordinateZero(j)))
        .collect();
    if n <= STRATA_REPORT_MAX_DIM {
        for b in enumerate_strata(n)? {
            preds.push((format!("stratum {b}"), StatePredicate::Stratum(b)));
        }
    }
    Ok(preds)
}

fn occupancy_targets(
    preds: &[(String, StatePredicate)],
    rho: &DensityModel,
    spec: &StickyMeasureSpec,
) -> Result<Vec<f64>> {
    let mass = stratified_integral(|_| 1.0, rho, spec)?;
    if !(mass.value > 0.0) {
        return Err(CoreError::DegenerateModel(format!(
            "mass vanishes for {}",
            rho.label()
        )));
    }
    preds
        .iter()
        .map(|(_, p)| match p {
            StatePredicate::CoordinateZero(j) => {
                Ok(boundary_mass_ratio(*j, rho, spec)?.ratio())
            }
            StatePredicate::Stratum(b) => Ok(mass.per_stratum[b] / mass.value),
            _ => Ok(f64::NAN),
        })
        .collect()
}

/// Occupancy table from a stored trajectory.
pub fn occupancy_report(
    traj: &Trajectory,
    rho: &DensityModel,
    spec: &StickyMeasureSpec,
) -> Result<OccupancyReport> {
    let preds = occupancy_predicates(traj.dim)?;
    let targets = occupancy_targets(&preds, rho, spec)?;
    if !(traj.total_time > 0.0) {
        return Err(CoreError::PathTooShort {
            requested: f64::MIN_POSITIVE,
            total: traj.total_time,
        });
    }
    let mut batches: Vec<BatchMeans> = preds
        .iter()
        .map(|_| BatchMeans::new(DEFAULT_BATCHES, traj.total_time))
        .collect();
    let mut t = 0.0;
    traj.for_each_interval(|state, _coords, dt| {
        for ((_, pred), acc) in preds.iter().zip(batches.iter_mut()) {
            if pred.matches(state, traj.h) {
                acc.add(t, dt, 1.0);
            }
        }
        t += dt;
    });
    let rows = preds
        .iter()
        .zip(&batches)
        .zip(&targets)
        .map(|(((label, _), acc), &target)| {
            let estimate = acc.mean();
            let se = acc.standard_error();
            OccupancyRow {
                observable: label.clone(),
                estimate,
                target,
                se,
                pass: (estimate - target).abs() <= 3.0 * se,
            }
        })
        .collect();
    Ok(OccupancyReport { rows })
}

/// Streaming observer: batch-means indicator averages for a predicate list.
struct PredicateObserver<'a> {
    preds: &'a [(String, StatePredicate)],
    h: f64,
    batches: Vec<BatchMeans>,
}

impl ChainObserver for PredicateObserver<'_> {
    fn visit(&mut self, t: f64, dt: f64, state: &[u32], _coords: &[f64]) {
        for ((_, pred), acc) in self.preds.iter().zip(self.batches.iter_mut()) {
            if pred.matches(state, self.h) {
                acc.add(t, dt, 1.0);
            }
        }
    }
}

/// `(label, fraction, standard error)` per predicate.
pub type PredicateStats = Vec<(String, f64, f64)>;

/// Fraction of time in each predicate over a streaming run (no event log),
/// with batch-means errors; returns the run summary alongside.
pub fn occupation_stats(
    x0: &[u32],
    rho: &DensityModel,
    beta: f64,
    scheme: &GridSchemeSpec,
    preds: &[(String, StatePredicate)],
) -> Result<(PredicateStats, ChainSummary)> {
    if !(scheme.horizon > 0.0) {
        return Err(CoreError::PathTooShort {
            requested: f64::MIN_POSITIVE,
            total: scheme.horizon,
        });
    }
    let mut obs = PredicateObserver {
        preds,
        h: scheme.h,
        batches: preds
            .iter()
            .map(|_| BatchMeans::new(DEFAULT_BATCHES, scheme.horizon))
            .collect(),
    };
    let summary = run_chain_seeded(x0, rho, beta, scheme, 0, &mut obs)?;
    let stats = preds
        .iter()
        .zip(&obs.batches)
        .map(|((label, _), acc)| (label.clone(), acc.mean(), acc.standard_error()))
        .collect();
    Ok((stats, summary))
}

/// Streaming occupancy table: simulate without a log and compare against the
/// quadrature targets.
pub fn occupancy_scan(
    x0: &[u32],
    rho: &DensityModel,
    beta: f64,
    scheme: &GridSchemeSpec,
    spec: &StickyMeasureSpec,
) -> Result<OccupancyReport> {
    let preds = occupancy_predicates(rho.dim())?;
    let targets = occupancy_targets(&preds, rho, spec)?;
    let (stats, _summary) = occupation_stats(x0, rho, beta, scheme, &preds)?;
    let rows = stats
        .into_iter()
        .zip(&targets)
        .map(|((observable, estimate, se), &target)| OccupancyRow {
            observable,
            estimate,
            target,
            se,
            pass: (estimate - target).abs() <= 3.0 * se,
        })
        .collect();
    Ok(OccupancyReport { rows })
}

/// Streaming ergodic table for scalar observables.
pub fn ergodic_scan<F: Fn(&[f64]) -> f64 + Sync>(
    x0: &[u32],
    rho: &DensityModel,
    beta: f64,
    scheme: &GridSchemeSpec,
    spec: &StickyMeasureSpec,
    observables: &[(String, F)],
) -> Result<Vec<ErgodicReport>> {
    if !(scheme.horizon > 0.0) {
        return Err(CoreError::PathTooShort {
            requested: f64::MIN_POSITIVE,
            total: scheme.horizon,
        });
    }
    struct Obs<'a, F> {
        fns: &'a [(String, F)],
        batches: Vec<BatchMeans>,
    }
    impl<F: Fn(&[f64]) -> f64> ChainObserver for Obs<'_, F> {
        fn visit(&mut self, t: f64, dt: f64, _state: &[u32], coords: &[f64]) {
            for ((_, f), acc) in self.fns.iter().zip(self.batches.iter_mut()) {
                acc.add(t, dt, f(coords));
            }
        }
    }
    let mut obs = Obs {
        fns: observables,
        batches: observables
            .iter()
            .map(|_| BatchMeans::new(DEFAULT_BATCHES, scheme.horizon))
            .collect(),
    };
    run_chain_seeded(x0, rho, beta, scheme, 0, &mut obs)?;
    observables
        .iter()
        .zip(&obs.batches)
        .map(|((label, f), acc)| {
            let target = mu_expectation(f, rho, spec)?;
            Ok(ErgodicReport::assemble(
                label.clone(),
                acc.mean(),
                acc.standard_error(),
                acc.n_batches(),
                target,
            ))
        })
        .collect()
}

/// `M_t = f(X_t) − f(X_0) − ∫₀ᵗ Lf(X_s) ds` and the quadratic-variation
/// compensator `∫₀ᵗ 2|∇^B f|²(X_s) ds`, both exact sums over the path.
fn path_martingale(
    traj: &Trajectory,
    f: &dyn TestFunction,
    rho: &DensityModel,
    beta: f64,
    t: f64,
) -> Result<(f64, f64)> {
    if traj.total_time < t {
        return Err(CoreError::PathTooShort {
            requested: t,
            total: traj.total_time,
        });
    }
    let mut f0 = None;
    let mut ft = None;
    let mut acc_lf = 0.0;
    let mut acc_energy = 0.0;
    let mut start = 0.0;
    traj.for_each_interval(|_state, coords, dt| {
        if f0.is_none() {
            f0 = Some(f.value(coords));
        }
        if start < t {
            let take = dt.min(t - start);
            acc_lf += take * apply_generator(f, coords, rho, beta);
            acc_energy += take * energy_density(f, coords);
        }
        if ft.is_none() && start + dt >= t {
            ft = Some(f.value(coords));
        }
        start += dt;
    });
    let ft = ft.or(f0).unwrap_or(0.0);
    let m = ft - f0.unwrap_or(0.0) - acc_lf;
    Ok((m, acc_energy))
}

#[derive(Debug, Clone, Serialize)]
pub struct MartingaleStats {
    pub mean: f64,
    pub se: f64,
    pub n_paths: usize,
}

/// Ensemble mean and standard error of `M_t` over stored paths.
pub fn martingale_residual(
    paths: &[Trajectory],
    f: &dyn TestFunction,
    rho: &DensityModel,
    beta: f64,
    t: f64,
) -> Result<MartingaleStats> {
    let ms: Vec<f64> = paths
        .iter()
        .map(|p| path_martingale(p, f, rho, beta, t).map(|(m, _)| m))
        .collect::<Result<_>>()?;
    let (mean, se) = mean_se(&ms);
    Ok(MartingaleStats {
        mean,
        se,
        n_paths: ms.len(),
    })
}

/// `E[M_t²] / E[⟨M⟩_t]` over stored paths; 1 in the limit.
pub fn qv_ratio(
    paths: &[Trajectory],
    f: &dyn TestFunction,
    rho: &DensityModel,
    beta: f64,
    t: f64,
) -> Result<f64> {
    let pairs: Vec<(f64, f64)> = paths
        .iter()
        .map(|p| path_martingale(p, f, rho, beta, t))
        .collect::<Result<_>>()?;
    let m2: f64 = pairs.iter().map(|(m, _)| m * m).sum::<f64>() / pairs.len() as f64;
    let comp: f64 = pairs.iter().map(|(_, c)| c).sum::<f64>() / pairs.len() as f64;
    if !(comp > 0.0) {
        return Err(CoreError::DegenerateCompensator);
    }
    Ok(m2 / comp)
}

#[derive(Debug, Clone, Serialize)]
pub struct MartingaleEnsemble {
    pub n_paths: usize,
    pub mean: f64,
    pub se: f64,
    /// `E[M²] / E[⟨M⟩]`.
    pub qv_ratio: f64,
    pub mean_square: f64,
    pub mean_compensator: f64,
}

struct MartingaleObserver<'a> {
    f: &'a dyn TestFunction,
    rho: &'a DensityModel,
    beta: f64,
    acc_lf: f64,
    acc_energy: f64,
    f0: Option<f64>,
}

impl ChainObserver for MartingaleObserver<'_> {
    fn visit(&mut self, _t: f64, dt: f64, _state: &[u32], coords: &[f64]) {
        if self.f0.is_none() {
            self.f0 = Some(self.f.value(coords));
        }
        self.acc_lf += dt * apply_generator(self.f, coords, self.rho, self.beta);
        self.acc_energy += dt * energy_density(self.f, coords);
    }
}

/// Simulate `n_paths` independent paths to `horizon = t` (one RNG sub-stream
/// each, reduced in path order) and aggregate the martingale diagnostics
/// without storing any event log.
pub fn martingale_ensemble(
    x0: &[u32],
    rho: &DensityModel,
    beta: f64,
    scheme: &GridSchemeSpec,
    f: &dyn TestFunction,
    n_paths: usize,
) -> Result<MartingaleEnsemble> {
    let per_path: Vec<(f64, f64)> = (0..n_paths)
        .into_par_iter()
        .map(|path| -> Result<(f64, f64)> {
            let mut obs = MartingaleObserver {
                f,
                rho,
                beta,
                acc_lf: 0.0,
                acc_energy: 0.0,
                f0: None,
            };
            let summary = run_chain_seeded(x0, rho, beta, scheme, path as u64, &mut obs)?;
            let coords: Vec<f64> = summary
                .final_state
                .iter()
                .map(|&i| i as f64 * scheme.h)
                .collect();
            let m = f.value(&coords) - obs.f0.unwrap_or(0.0) - obs.acc_lf;
            Ok((m, obs.acc_energy))
        })
        .collect::<Result<_>>()?;

    let ms: Vec<f64> = per_path.iter().map(|(m, _)| *m).collect();
    let (mean, se) = mean_se(&ms);
    let mean_square = ms.iter().map(|m| m * m).sum::<f64>() / ms.len() as f64;
    let mean_compensator =
        per_path.iter().map(|(_, c)| c).sum::<f64>() / per_path.len() as f64;
    if !(mean_compensator > 0.0) {
        return Err(CoreError::DegenerateCompensator);
    }
    Ok(MartingaleEnsemble {
        n_paths,
        mean,
        se,
        qv_ratio: mean_square / mean_compensator,
        mean_square,
        mean_compensator,
    })
}

/// One-sided local-time estimator at level 0: `(1/ε)∫ 1_{[0,ε)}(X^j) d⟨X^j⟩`
/// with `d⟨X^j⟩ = 2·1_{x_j>0} dt` on the grid chain, i.e. `(2/ε)·time in
/// (0,ε)`. Estimates the right local time, twice the pinned-time local time
/// of [`Trajectory::local_time`]. Recommended `ε ≥ 2h`.
pub fn epsilon_local_time(traj: &Trajectory, coord: usize, eps: f64) -> f64 {
    let mut band_time = 0.0;
    traj.for_each_interval(|state, _coords, dt| {
        let x = state[coord] as f64 * traj.h;
        if x > 0.0 && x < eps {
            band_time += dt;
        }
    });
    2.0 * band_time / eps
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
