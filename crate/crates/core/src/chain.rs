//! Exact-event simulation of the sticky walk on a grid.
//!
//! The dynamics is a continuous-time Markov chain on `{0,h,…,L}^n`. Interior
//! moves fire at `(1/h²)·√(ρ(y)/ρ(x))`, so detailed balance holds exactly
//! against the discretized invariant measure `ρ(x)·Π_j w(x_j)` with `w(0)=β`
//! and `w(kh)=h`; a pinned coordinate leaves 0 at `1/(βh)` times the same
//! square-root ratio, which is simultaneously what the escape drift `1/β`
//! requires and what balances the atom weight β. The outer wall at `L`
//! reflects (the up-move is suppressed).
//!
//! Holding times are exponential in the total exit rate; the event log is
//! exact, so every time integral downstream is a finite sum.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::density::DensityModel;
use crate::error::{CoreError, Result};
use crate::strata::StratumIndex;
use crate::testfn::TestFunction;

/// Grid geometry and run length for the event simulation.
#[derive(Debug, Clone, Serialize)]
pub struct GridSchemeSpec {
    /// Grid step (height units).
    pub h: f64,
    /// Reflecting outer wall; must be an integer multiple of `h`, at least 4h.
    pub wall: f64,
    /// Process-time horizon.
    pub horizon: f64,
    pub seed: u64,
    /// Hard cap on simulated events; exceeding it truncates the run.
    pub max_events: u64,
}

impl GridSchemeSpec {
    pub fn new(h: f64, wall: f64, horizon: f64, seed: u64, max_events: u64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(CoreError::param("h", format!("grid step must be positive, got {h}")));
        }
        let ratio = wall / h;
        if !ratio.is_finite() || (ratio - ratio.round()).abs() > 1e-9 * ratio.abs().max(1.0) {
            return Err(CoreError::param(
                "wall",
                format!("wall {wall} is not an integer multiple of h={h}"),
            ));
        }
        if ratio.round() < 4.0 {
            return Err(CoreError::param("wall", "need at least 4 grid cells per axis"));
        }
        if !(horizon >= 0.0) || !horizon.is_finite() {
            return Err(CoreError::param(
                "horizon",
                format!("horizon must be nonnegative, got {horizon}"),
            ));
        }
        if max_events == 0 {
            return Err(CoreError::param("max_events", "event guard must be positive"));
        }
        Ok(GridSchemeSpec {
            h,
            wall,
            horizon,
            seed,
            max_events,
        })
    }

    /// Index of the wall state along each axis.
    pub fn wall_index(&self) -> u32 {
        (self.wall / self.h).round() as u32
    }
}

/// Exit rates of one coordinate at the current state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordinateRates {
    pub up: f64,
    pub down: f64,
}

/// Per-coordinate up/down rates at a grid state.
pub fn build_rates(
    state: &[u32],
    rho: &DensityModel,
    beta: f64,
    scheme: &GridSchemeSpec,
) -> Vec<CoordinateRates> {
    let n = state.len();
    let xf: Vec<f64> = state.iter().map(|&i| i as f64 * scheme.h).collect();
    let mut out = vec![0.0; 2 * n + 1];
    fill_rates(state, &xf, rho, beta, scheme, &mut out);
    (0..n)
        .map(|j| CoordinateRates {
            up: out[2 * j],
            down: out[2 * j + 1],
        })
        .collect()
}

/// Writes `[up_0, down_0, …, up_{n−1}, down_{n−1}, total]` into `out`.
fn fill_rates(
    state: &[u32],
    xf: &[f64],
    rho: &DensityModel,
    beta: f64,
    scheme: &GridSchemeSpec,
    out: &mut [f64],
) {
    let h = scheme.h;
    let wall = scheme.wall_index();
    let inv_h2 = 1.0 / (h * h);
    let inv_bh = 1.0 / (beta * h);
    let mut total = 0.0;
    for (j, (&idx, &xj)) in state.iter().zip(xf).enumerate() {
        let (up, down) = if idx == 0 {
            let up = inv_bh * (0.5 * rho.log_rho_delta(xf, j, h)).exp();
            (up, 0.0)
        } else {
            let up = if idx < wall {
                inv_h2 * (0.5 * rho.log_rho_delta(xf, j, xj + h)).exp()
            } else {
                0.0
            };
            let down = inv_h2 * (0.5 * rho.log_rho_delta(xf, j, xj - h)).exp();
            (up, down)
        };
        out[2 * j] = up;
        out[2 * j + 1] = down;
        total += up + down;
    }
    out[2 * state.len()] = total;
}

/// Receives every holding interval of a run, in order. `t` is the interval
/// start, `dt` its exact length (the last one is clipped at the horizon).
pub trait ChainObserver {
    fn visit(&mut self, t: f64, dt: f64, state: &[u32], coords: &[f64]);
}

impl ChainObserver for () {
    fn visit(&mut self, _t: f64, _dt: f64, _state: &[u32], _coords: &[f64]) {}
}

impl<A: ChainObserver, B: ChainObserver> ChainObserver for (&mut A, &mut B) {
    fn visit(&mut self, t: f64, dt: f64, state: &[u32], coords: &[f64]) {
        self.0.visit(t, dt, state, coords);
        self.1.visit(t, dt, state, coords);
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainSummary {
    pub total_time: f64,
    pub n_events: u64,
    pub truncated: bool,
    pub final_state: Vec<u32>,
    /// Time each coordinate spent exactly at 0, clipped last interval
    /// included.
    pub zero_occupation: Vec<f64>,
}

/// Rates are memoized per grid state when the full grid fits a modest table;
/// long runs revisit a small state space and the event loop degenerates to a
/// table lookup plus two RNG draws.
struct RateCache {
    slots: usize,
    strides: Vec<usize>,
    data: Vec<f64>,
}

const RATE_CACHE_MAX_DOUBLES: usize = 8_000_000;

impl RateCache {
    fn new(n: usize, wall: u32) -> Option<RateCache> {
        let per_axis = wall as usize + 1;
        let slots = 2 * n + 1;
        let mut states: usize = 1;
        for _ in 0..n {
            states = states.checked_mul(per_axis)?;
        }
        let len = states.checked_mul(slots)?;
        if len > RATE_CACHE_MAX_DOUBLES {
            return None;
        }
        let mut strides = vec![0usize; n];
        let mut s = 1usize;
        for (j, stride) in strides.iter_mut().enumerate() {
            *stride = s;
            if j + 1 < n {
                s *= per_axis;
            }
        }
        Some(RateCache {
            slots,
            strides,
            data: vec![f64::NAN; len],
        })
    }

    #[inline]
    fn key(&self, state: &[u32]) -> usize {
        state
            .iter()
            .zip(&self.strides)
            .map(|(&i, &s)| i as usize * s)
            .sum()
    }
}

/// Run the chain from `x0` to the horizon, streaming every holding interval
/// into `observer`.
pub fn run_chain<O: ChainObserver>(
    x0: &[u32],
    rho: &DensityModel,
    beta: f64,
    scheme: &GridSchemeSpec,
    observer: &mut O,
) -> Result<ChainSummary> {
    run_chain_seeded(x0, rho, beta, scheme, 0, observer)
}

/// As [`run_chain`], drawing randomness from sub-stream `stream` of the
/// scheme seed. Ensemble runs give each path its own stream index.
pub fn run_chain_seeded<O: ChainObserver>(
    x0: &[u32],
    rho: &DensityModel,
    beta: f64,
    scheme: &GridSchemeSpec,
    stream: u64,
    observer: &mut O,
) -> Result<ChainSummary> {
    let n = rho.dim();
    if x0.len() != n {
        return Err(CoreError::DimensionMismatch {
            expected: n,
            got: x0.len(),
        });
    }
    if !(beta > 0.0) {
        return Err(CoreError::param("beta", format!("must be positive, got {beta}")));
    }
    let wall = scheme.wall_index();
    if let Some(&bad) = x0.iter().find(|&&i| i > wall) {
        return Err(CoreError::param(
            "x0",
            format!("start index {bad} beyond the wall index {wall}"),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(scheme.seed);
    rng.set_stream(stream);

    let mut idx = x0.to_vec();
    let mut xf: Vec<f64> = idx.iter().map(|&i| i as f64 * scheme.h).collect();
    let mut scratch = vec![0.0f64; 2 * n + 1];
    let mut cache = RateCache::new(n, wall);

    let mut t = 0.0f64;
    let mut n_events = 0u64;
    let mut truncated = false;
    let mut zero_occ = vec![0.0f64; n];
    let horizon = scheme.horizon;

    loop {
        if t >= horizon {
            break;
        }
        match &mut cache {
            Some(c) => {
                let key = c.key(&idx);
                let row = &mut c.data[key * c.slots..(key + 1) * c.slots];
                if row[2 * n].is_nan() {
                    fill_rates(&idx, &xf, rho, beta, scheme, row);
                }
                scratch.copy_from_slice(row);
            }
            None => fill_rates(&idx, &xf, rho, beta, scheme, &mut scratch),
        }
        let total = scratch[2 * n];
        debug_assert!(total > 0.0, "absorbing state hit at {idx:?}");

        let e: f64 = Exp1.sample(&mut rng);
        let dt = e / total;
        if t + dt >= horizon {
            let rest = horizon - t;
            observer.visit(t, rest, &idx, &xf);
            for (z, &i) in zero_occ.iter_mut().zip(&idx) {
                if i == 0 {
                    *z += rest;
                }
            }
            t = horizon;
            break;
        }
        observer.visit(t, dt, &idx, &xf);
        for (z, &i) in zero_occ.iter_mut().zip(&idx) {
            if i == 0 {
                *z += dt;
            }
        }
        t += dt;

        let mut u = rng.random::<f64>() * total;
        let mut moved = false;
        for j in 0..n {
            let up = scratch[2 * j];
            if u < up {
                idx[j] += 1;
                xf[j] = idx[j] as f64 * scheme.h;
                moved = true;
                break;
            }
            u -= up;
            let down = scratch[2 * j + 1];
            if u < down {
                idx[j] -= 1;
                xf[j] = idx[j] as f64 * scheme.h;
                moved = true;
                break;
            }
            u -= down;
        }
        if !moved {
            // Float dust pushed u past the last positive rate; take it.
            for j in (0..n).rev() {
                if scratch[2 * j + 1] > 0.0 {
                    idx[j] -= 1;
                    xf[j] = idx[j] as f64 * scheme.h;
                    break;
                } else if scratch[2 * j] > 0.0 {
                    idx[j] += 1;
                    xf[j] = idx[j] as f64 * scheme.h;
                    break;
                }
            }
        }

        n_events += 1;
        if n_events >= scheme.max_events {
            truncated = true;
            break;
        }
    }

    Ok(ChainSummary {
        total_time: t,
        n_events,
        truncated,
        final_state: idx,
        zero_occupation: zero_occ,
    })
}

/// Piecewise-constant sample path: state `k` holds from `times[k]` to
/// `times[k+1]` (the last state until `total_time`).
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub dim: usize,
    pub h: f64,
    pub times: Vec<f64>,
    states: Vec<u32>,
    pub zero_occupation: Vec<f64>,
    pub total_time: f64,
    pub truncated: bool,
}

impl Trajectory {
    pub fn n_states(&self) -> usize {
        self.times.len()
    }

    pub fn state(&self, k: usize) -> &[u32] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn final_state(&self) -> &[u32] {
        self.state(self.n_states() - 1)
    }

    /// Visit every holding interval as `(grid indices, coordinates, dt)`.
    pub fn for_each_interval<F: FnMut(&[u32], &[f64], f64)>(&self, mut f: F) {
        let mut coords = vec![0.0f64; self.dim];
        for k in 0..self.n_states() {
            let state = &self.states[k * self.dim..(k + 1) * self.dim];
            for (c, &i) in coords.iter_mut().zip(state) {
                *c = i as f64 * self.h;
            }
            let end = if k + 1 < self.n_states() {
                self.times[k + 1]
            } else {
                self.total_time
            };
            f(state, &coords, end - self.times[k]);
        }
    }

    /// Time-weighted fraction of the run satisfying `pred`.
    pub fn occupation_fraction(&self, pred: &StatePredicate) -> Result<f64> {
        if !(self.total_time > 0.0) {
            return Err(CoreError::PathTooShort {
                requested: f64::MIN_POSITIVE,
                total: self.total_time,
            });
        }
        let mut acc = 0.0;
        self.for_each_interval(|state, _coords, dt| {
            if pred.matches(state, self.h) {
                acc += dt;
            }
        });
        Ok(acc / self.total_time)
    }

    /// `ℓ_t = (1/β) · time at zero` for coordinate `j`.
    pub fn local_time(&self, j: usize, beta: f64) -> f64 {
        self.zero_occupation[j] / beta
    }

    /// Re-derive the zero-occupation counters from the event log; must agree
    /// with the accumulated field.
    pub fn recomputed_zero_occupation(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.for_each_interval(|state, _coords, dt| {
            for (o, &i) in out.iter_mut().zip(state) {
                if i == 0 {
                    *o += dt;
                }
            }
        });
        out
    }
}

struct LogObserver {
    dim: usize,
    times: Vec<f64>,
    states: Vec<u32>,
}

impl ChainObserver for LogObserver {
    fn visit(&mut self, t: f64, _dt: f64, state: &[u32], _coords: &[f64]) {
        self.times.push(t);
        self.states.extend_from_slice(state);
        debug_assert_eq!(state.len(), self.dim);
    }
}

/// Simulate and keep the full event log.
pub fn simulate(
    x0: &[u32],
    rho: &DensityModel,
    beta: f64,
    scheme: &GridSchemeSpec,
) -> Result<Trajectory> {
    let mut log = LogObserver {
        dim: rho.dim(),
        times: Vec::new(),
        states: Vec::new(),
    };
    let summary = run_chain(x0, rho, beta, scheme, &mut log)?;
    if log.times.is_empty() {
        log.times.push(0.0);
        log.states.extend_from_slice(x0);
    }
    Ok(Trajectory {
        dim: rho.dim(),
        h: scheme.h,
        times: log.times,
        states: log.states,
        zero_occupation: summary.zero_occupation,
        total_time: summary.total_time,
        truncated: summary.truncated,
    })
}

/// Events and strata a holding state can be tested against.
#[derive(Debug, Clone, PartialEq)]
pub enum StatePredicate {
    All,
    /// `x_j = 0`.
    CoordinateZero(usize),
    /// `x ∈ E_+(B)`: exactly the coordinates of `B` are positive.
    Stratum(StratumIndex),
    /// Any coordinate pinned.
    Boundary,
    /// All coordinates pinned.
    Origin,
    /// `lo < x_j < hi` (strict).
    Band { coord: usize, lo: f64, hi: f64 },
}

impl StatePredicate {
    pub fn matches(&self, state: &[u32], h: f64) -> bool {
        match self {
            StatePredicate::All => true,
            StatePredicate::CoordinateZero(j) => state[*j] == 0,
            StatePredicate::Stratum(b) => state
                .iter()
                .enumerate()
                .all(|(i, &v)| (v > 0) == b.contains(i)),
            StatePredicate::Boundary => state.contains(&0),
            StatePredicate::Origin => state.iter().all(|&v| v == 0),
            StatePredicate::Band { coord, lo, hi } => {
                let x = state[*coord] as f64 * h;
                x > *lo && x < *hi
            }
        }
    }
}

/// Log weight of a grid state under the discretized invariant measure:
/// `log ρ(x) + Σ_j log w(x_j)` with `w(0) = β` and `w(kh) = h`. The chain's
/// rates satisfy detailed balance against `exp` of this, exactly.
pub fn discretized_invariant_log_weight(
    state: &[u32],
    rho: &DensityModel,
    beta: f64,
    scheme: &GridSchemeSpec,
) -> f64 {
    let x: Vec<f64> = state.iter().map(|&i| i as f64 * scheme.h).collect();
    let mut acc = rho.log_rho(&x);
    for &i in state {
        acc += if i == 0 { beta.ln() } else { scheme.h.ln() };
    }
    acc
}

/// Action of the chain's jump kernel on a smooth function:
/// `Σ_moves rate·(f(y) − f(x))`. Converges to the generator as `h → 0`.
pub fn discrete_generator(
    f: &dyn TestFunction,
    state: &[u32],
    rho: &DensityModel,
    beta: f64,
    scheme: &GridSchemeSpec,
) -> f64 {
    let rates = build_rates(state, rho, beta, scheme);
    let x: Vec<f64> = state.iter().map(|&i| i as f64 * scheme.h).collect();
    let fx = f.value(&x);
    let mut acc = 0.0;
    let mut y = x.clone();
    for (j, r) in rates.iter().enumerate() {
        if r.up > 0.0 {
            y[j] = x[j] + scheme.h;
            acc += r.up * (f.value(&y) - fx);
            y[j] = x[j];
        }
        if r.down > 0.0 {
            y[j] = x[j] - scheme.h;
            acc += r.down * (f.value(&y) - fx);
            y[j] = x[j];
        }
    }
    acc
}
