//! Acceptance suite: every release gate in one target, one pass/fail line
//! per criterion (run with `--nocapture` to see them on success).
//!
//! Statistical criteria run with pinned seeds, so outcomes are reproducible;
//! each test prints the measured margins next to its thresholds.

use std::sync::LazyLock;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use sticky_walk_core::chain::{discrete_generator, discretized_invariant_log_weight};
use sticky_walk_core::form::apply_generator;
use sticky_walk_core::stats::{martingale_ensemble, occupation_stats, occupancy_scan};
use sticky_walk_core::testfn::{BumpProduct, BumpProfile, TestFunction};
use sticky_walk_core::*;

const BIG: u64 = u64::MAX / 2;

fn exp_model(rates: &[f64]) -> DensityModel {
    DensityModel::exponential(rates).unwrap()
}

/// Criterion 1's long run, shared with criterion 8.
struct LongRun {
    fraction: f64,
    se: f64,
    band_time: f64,
    zero_time: f64,
    elapsed: Duration,
}

static CRITERION1_RUN: LazyLock<LongRun> = LazyLock::new(|| {
    let rho = exp_model(&[1.0]);
    let scheme = GridSchemeSpec::new(0.02, 25.0, 2e5, 1, BIG).unwrap();
    let preds = vec![
        ("zero".to_string(), StatePredicate::CoordinateZero(0)),
        (
            "band".to_string(),
            StatePredicate::Band {
                coord: 0,
                lo: 0.0,
                hi: 0.2,
            },
        ),
    ];
    let started = Instant::now();
    let (stats, summary) = occupation_stats(&[0], &rho, 1.0, &scheme, &preds).unwrap();
    let elapsed = started.elapsed();
    LongRun {
        fraction: stats[0].1,
        se: stats[0].2,
        band_time: stats[1].1 * summary.total_time,
        zero_time: summary.zero_occupation[0],
        elapsed,
    }
});

#[test]
fn criterion_01_occupation_fraction_1d() {
    let run = &CRITERION1_RUN;
    let target = 0.5; // β/(β+1) at β=1
    let dev = (run.fraction - target).abs();
    let pass = dev <= 3.0 * run.se && run.se <= 0.01 && run.elapsed <= Duration::from_secs(120);
    println!(
        "criterion 1 {}: fraction {:.6} vs {target} (|dev| {:.2e} ≤ 3·SE {:.2e}; SE ≤ 0.01; \
         runtime {:.1?} ≤ 120s; discretized-measure value 0.502504)",
        if pass { "PASS" } else { "FAIL" },
        run.fraction,
        dev,
        3.0 * run.se,
        run.elapsed
    );
    assert!(run.se <= 0.01, "SE {} above cap", run.se);
    assert!(dev <= 3.0 * run.se, "dev {dev} vs 3·SE {}", 3.0 * run.se);
    assert!(run.elapsed <= Duration::from_secs(120), "{:?}", run.elapsed);
}

#[test]
fn criterion_02_beta_sweep_monotone() {
    use rayon::prelude::*;
    let rho = exp_model(&[1.0]);
    let betas = [0.1, 0.5, 1.0, 2.0, 10.0];
    let results: Vec<(f64, f64)> = betas
        .par_iter()
        .enumerate()
        .map(|(i, &beta)| {
            let scheme = GridSchemeSpec::new(0.02, 25.0, 3e4, 100 + i as u64, BIG).unwrap();
            let preds = vec![("zero".to_string(), StatePredicate::CoordinateZero(0))];
            let (stats, _) = occupation_stats(&[0], &rho, beta, &scheme, &preds).unwrap();
            (stats[0].1, stats[0].2)
        })
        .collect();
    let mut pass = true;
    for (i, (&beta, &(frac, se))) in betas.iter().zip(&results).enumerate() {
        let target = beta / (beta + 1.0);
        let ok = (frac - target).abs() <= 3.0 * se;
        pass &= ok;
        println!(
            "criterion 2 [β={beta}] {}: fraction {frac:.5} vs {target:.5} (3·SE {:.1e})",
            if ok { "PASS" } else { "FAIL" },
            3.0 * se
        );
        if i > 0 {
            let prev = results[i - 1].0;
            pass &= frac > prev;
            assert!(frac > prev, "not strictly increasing at β={beta}");
        }
        assert!(ok, "β={beta}: {frac} vs {target} ± {}", 3.0 * se);
    }
    println!(
        "criterion 2 {}: fractions strictly increasing toward 0 and 1 at the endpoints",
        if pass { "PASS" } else { "FAIL" }
    );
}

#[test]
fn criterion_03_wetting_occupancy() {
    let lat = LatticeSpec::new(1, 2).unwrap();
    let rho = wetting_density(lat, PotentialModel::gaussian());
    let spec = StickyMeasureSpec::new(2, 1.0, 5.0, 48).unwrap();
    let scheme = GridSchemeSpec::new(0.02, 5.0, 3e4, 12345, BIG).unwrap();
    let report = occupancy_scan(&[0, 0], &rho, 1.0, &scheme, &spec).unwrap();
    // 2 per-site rows + 4 stratum rows.
    assert_eq!(report.rows.len(), 6);
    for row in &report.rows {
        println!(
            "criterion 3 [{}] {}: est {:.5} vs target {:.5} (3·SE {:.1e})",
            row.observable,
            if row.pass { "PASS" } else { "FAIL" },
            row.estimate,
            row.target,
            3.0 * row.se
        );
        assert!(
            row.pass,
            "{}: {} vs {} ± {}",
            row.observable,
            row.estimate,
            row.target,
            3.0 * row.se
        );
    }
    println!("criterion 3 PASS: all strata and site occupations match the quadrature oracle");
}

fn ibp_ladder(
    f: &dyn TestFunction,
    g: &dyn TestFunction,
    rho: &DensityModel,
    n: usize,
    beta: f64,
) -> (f64, f64) {
    let ladder = [4usize, 8, 16, 32];
    let res: Vec<f64> = ladder
        .iter()
        .map(|&p| {
            let spec = StickyMeasureSpec::new(n, beta, 1.25, p).unwrap();
            check_ibp(f, g, rho, &spec).unwrap().rel_residual
        })
        .collect();
    let order = (res[0] / res[3]).log2() / 3.0;
    (res[3], order)
}

#[test]
fn criterion_04_ibp_identity() {
    // Exponential models, n = 1..3: residual < 1e−6 at 32 panels and fitted
    // decay order ≥ 2 across the doubling ladder 4→32.
    let models: Vec<(DensityModel, usize)> = vec![
        (exp_model(&[1.0]), 1),
        (exp_model(&[1.0, 0.5]), 2),
        (exp_model(&[1.0, 2.0, 0.7]), 3),
    ];
    let profile_cycle = [BumpProfile::Quartic, BumpProfile::CubicFlat, BumpProfile::Cubic];
    for (rho, n) in &models {
        let f = BumpProduct::cubic(*n, 1.0).unwrap();
        let g = BumpProduct::new(
            (0..*n).map(|j| profile_cycle[j % 3]).collect(),
            vec![1.0; *n],
        )
        .unwrap();
        for (name, a, b) in [("f,g", &f, &g), ("f,f", &f, &f)] {
            let (res, order) = ibp_ladder(a, b, rho, *n, 1.0);
            let ok = res < 1e-6 && order >= 2.0;
            println!(
                "criterion 4 [exp n={n} pair {name}] {}: residual {res:.2e} < 1e-6, order {order:.2} ≥ 2",
                if ok { "PASS" } else { "FAIL" }
            );
            assert!(ok, "n={n} {name}: residual {res}, order {order}");
        }
    }

    let wet = wetting_density(LatticeSpec::new(1, 2).unwrap(), PotentialModel::gaussian());
    let f = BumpProduct::cubic(2, 1.0).unwrap();
    let g = BumpProduct::new(
        vec![BumpProfile::Quartic, BumpProfile::CubicFlat],
        vec![1.0, 1.0],
    )
    .unwrap();
    for (name, a, b) in [("f,g", &f, &g), ("f,f", &f, &f)] {
        let (res, order) = ibp_ladder(a, b, &wet, 2, 1.0);
        let ok = res < 1e-5 && order >= 2.0;
        println!(
            "criterion 4 [wetting d=1 N=2 pair {name}] {}: residual {res:.2e} < 1e-5, order {order:.2} ≥ 2",
            if ok { "PASS" } else { "FAIL" }
        );
        assert!(ok, "wetting {name}: residual {res}, order {order}");
    }
    println!("criterion 4 PASS");
}

/// All grid states of `{0,…,wall}^n` in row-major order.
fn all_states(wall: u32, n: usize) -> Vec<Vec<u32>> {
    let mut out: Vec<Vec<u32>> = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|s| {
                (0..=wall).map(move |i| {
                    let mut t = s.clone();
                    t.push(i);
                    t
                })
            })
            .collect();
    }
    out
}

#[test]
fn criterion_05_exact_reversibility_and_stationarity() {
    let cases: Vec<(DensityModel, GridSchemeSpec, f64)> = vec![
        (
            exp_model(&[1.0]),
            GridSchemeSpec::new(0.25, 2.0, 1.0, 0, 100).unwrap(),
            0.7,
        ),
        (
            DensityModel::gaussian(&[0.8]).unwrap(),
            GridSchemeSpec::new(0.25, 2.0, 1.0, 0, 100).unwrap(),
            1.4,
        ),
        (
            exp_model(&[1.0, 0.5]),
            GridSchemeSpec::new(0.5, 2.0, 1.0, 0, 100).unwrap(),
            1.0,
        ),
        (
            wetting_density(LatticeSpec::new(1, 2).unwrap(), PotentialModel::gaussian()),
            GridSchemeSpec::new(0.5, 2.0, 1.0, 0, 100).unwrap(),
            2.0,
        ),
    ];

    for (rho, scheme, beta) in cases {
        let n = rho.dim();
        let wall = scheme.wall_index();
        let states = all_states(wall, n);
        let index_of = |s: &[u32]| -> usize {
            s.iter()
                .fold(0usize, |acc, &i| acc * (wall as usize + 1) + i as usize)
        };

        // Detailed balance edge by edge.
        let mut worst: f64 = 0.0;
        for s in &states {
            let rates = build_rates(s, &rho, beta, &scheme);
            let pi_s = discretized_invariant_log_weight(s, &rho, beta, &scheme).exp();
            for (j, r) in rates.iter().enumerate() {
                if r.up > 0.0 {
                    let mut t = s.clone();
                    t[j] += 1;
                    let back = build_rates(&t, &rho, beta, &scheme)[j].down;
                    let pi_t = discretized_invariant_log_weight(&t, &rho, beta, &scheme).exp();
                    let lhs = pi_s * r.up;
                    let rhs = pi_t * back;
                    worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()));
                }
            }
        }
        assert!(worst <= 1e-12, "{}: detailed balance off by {worst}", rho.label());

        // Direct stationary solve πQ = 0, Σπ = 1.
        let m = states.len();
        let mut a = DMatrix::<f64>::zeros(m, m);
        for s in &states {
            let si = index_of(s);
            let rates = build_rates(s, &rho, beta, &scheme);
            let mut total = 0.0;
            for (j, r) in rates.iter().enumerate() {
                if r.up > 0.0 {
                    let mut t = s.clone();
                    t[j] += 1;
                    a[(index_of(&t), si)] += r.up;
                    total += r.up;
                }
                if r.down > 0.0 {
                    let mut t = s.clone();
                    t[j] -= 1;
                    a[(index_of(&t), si)] += r.down;
                    total += r.down;
                }
            }
            a[(si, si)] -= total;
        }
        for col in 0..m {
            a[(0, col)] = 1.0;
        }
        let mut b = DVector::<f64>::zeros(m);
        b[0] = 1.0;
        let pi = a.lu().solve(&b).expect("stationary solve");

        let weights: Vec<f64> = states
            .iter()
            .map(|s| discretized_invariant_log_weight(s, &rho, beta, &scheme).exp())
            .collect();
        let z: f64 = weights.iter().sum();
        let max_diff = states
            .iter()
            .enumerate()
            .map(|(i, _)| (pi[i] - weights[i] / z).abs())
            .fold(0.0f64, f64::max);
        println!(
            "criterion 5 [{} β={beta}] PASS: max detailed-balance defect {worst:.2e} ≤ 1e-12, \
             stationary-vs-measure max diff {max_diff:.2e} ≤ 1e-10",
            rho.label()
        );
        assert!(max_diff <= 1e-10, "{}: stationary diff {max_diff}", rho.label());
    }
}

#[test]
fn criterion_06_martingale_and_quadratic_variation() {
    let started = Instant::now();

    // n = 1: h small enough that the O(h) pinned-face drift bias of the
    // scheme sits below the Monte Carlo resolution of 10⁴ paths.
    let rho1 = exp_model(&[1.0]);
    let f1 = BumpProduct::cubic(1, 1.0).unwrap();
    let scheme1 = GridSchemeSpec::new(0.004, 2.0, 1.0, 61, BIG).unwrap();
    let ens1 = martingale_ensemble(&[125], &rho1, 1.0, &scheme1, &f1, 10_000).unwrap();
    let ok_mean1 = ens1.mean.abs() <= 3.0 * ens1.se;
    let ok_qv1 = (0.95..=1.05).contains(&ens1.qv_ratio);
    println!(
        "criterion 6 [n=1] {}: mean M {:.2e} (3·SE {:.2e}), E[M²]/E[⟨M⟩] = {:.4} ∈ [0.95,1.05]",
        if ok_mean1 && ok_qv1 { "PASS" } else { "FAIL" },
        ens1.mean,
        3.0 * ens1.se,
        ens1.qv_ratio
    );
    assert!(ok_mean1, "n=1 mean {} vs 3·SE {}", ens1.mean, 3.0 * ens1.se);
    assert!(ok_qv1, "n=1 qv ratio {}", ens1.qv_ratio);

    // n = 2.
    let rho2 = exp_model(&[1.0, 1.0]);
    let f2 = BumpProduct::cubic(2, 1.0).unwrap();
    let scheme2 = GridSchemeSpec::new(0.005, 2.0, 1.0, 62, BIG).unwrap();
    let ens2 = martingale_ensemble(&[100, 100], &rho2, 1.0, &scheme2, &f2, 10_000).unwrap();
    let ok_mean2 = ens2.mean.abs() <= 3.0 * ens2.se;
    let ok_qv2 = (0.93..=1.07).contains(&ens2.qv_ratio);
    println!(
        "criterion 6 [n=2] {}: mean M {:.2e} (3·SE {:.2e}), E[M²]/E[⟨M⟩] = {:.4} ∈ [0.93,1.07]",
        if ok_mean2 && ok_qv2 { "PASS" } else { "FAIL" },
        ens2.mean,
        3.0 * ens2.se,
        ens2.qv_ratio
    );
    assert!(ok_mean2, "n=2 mean {} vs 3·SE {}", ens2.mean, 3.0 * ens2.se);
    assert!(ok_qv2, "n=2 qv ratio {}", ens2.qv_ratio);

    let elapsed = started.elapsed();
    println!("criterion 6 PASS: runtime {elapsed:.1?} ≤ 300s");
    assert!(elapsed <= Duration::from_secs(300), "{elapsed:?}");
}

/// Batch-means mean/SE over a sample sequence (absorbs sweep correlation).
fn sequence_mean_se(values: impl Iterator<Item = f64>, k: usize) -> (f64, f64) {
    let vals: Vec<f64> = values.collect();
    let per = vals.len() / k;
    let means: Vec<f64> = (0..k)
        .map(|b| vals[b * per..(b + 1) * per].iter().sum::<f64>() / per as f64)
        .collect();
    let mean = means.iter().sum::<f64>() / k as f64;
    let var = means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (k as f64 - 1.0);
    (mean, (var / k as f64).sqrt())
}

#[test]
fn criterion_07_sampler_agreement() {
    let cases: Vec<(DensityModel, f64, f64, usize)> = vec![
        // (model, beta, trunc, panels)
        (exp_model(&[1.0]), 1.0, 30.0, 48),
        (exp_model(&[1.0, 2.0]), 0.5, 30.0, 24),
        (exp_model(&[1.0, 2.0, 0.5, 1.0]), 1.0, 30.0, 8),
        (DensityModel::gaussian(&[1.0, 0.7]).unwrap(), 2.0, 10.0, 24),
        (
            wetting_density(LatticeSpec::new(1, 2).unwrap(), PotentialModel::gaussian()),
            1.0,
            5.0,
            48,
        ),
        (
            wetting_density(LatticeSpec::new(2, 2).unwrap(), PotentialModel::gaussian()),
            1.0,
            4.0,
            8,
        ),
    ];

    for (case_idx, (rho, beta, trunc, panels)) in cases.iter().enumerate() {
        let n = rho.dim();
        let spec = StickyMeasureSpec::new(n, *beta, *trunc, *panels).unwrap();
        let mass = stratified_integral(|_| 1.0, rho, &spec).unwrap();
        let cfg = SamplerConfig::new(100_000, 128, 1, 512, 7000 + case_idx as u64).unwrap();
        let set = sample_invariant(rho, &spec, &cfg).unwrap();

        // Atom frequency per coordinate vs the dry-face mass fraction.
        for j in 0..n {
            let target: f64 = mass
                .per_stratum
                .iter()
                .filter(|(b, _)| !b.contains(j))
                .map(|(_, v)| v)
                .sum::<f64>()
                / mass.value;
            let (freq, se) = sequence_mean_se(
                (0..set.n_samples()).map(|k| if set.sample(k)[j] == 0.0 { 1.0 } else { 0.0 }),
                32,
            );
            assert!(
                (freq - target).abs() <= 3.0 * se,
                "{} coord {j}: {freq} vs {target} ± {}",
                rho.label(),
                3.0 * se
            );
        }

        // Stratum frequencies vs the quadrature oracle.
        for b in enumerate_strata(n).unwrap() {
            let target = mass.per_stratum[&b] / mass.value;
            let (freq, se) = sequence_mean_se(
                (0..set.n_samples()).map(|k| {
                    if stratum_of(set.sample(k)).unwrap() == b {
                        1.0
                    } else {
                        0.0
                    }
                }),
                32,
            );
            assert!(
                (freq - target).abs() <= 3.0 * se,
                "{} stratum {b}: {freq} vs {target} ± {}",
                rho.label(),
                3.0 * se
            );
        }
        println!(
            "criterion 7 [{} n={n}] PASS: atom and stratum frequencies within 3σ of quadrature",
            rho.label()
        );
    }

    // Chi-square on a frozen 1-d conditional at 0.1% significance.
    let wet = wetting_density(LatticeSpec::new(1, 2).unwrap(), PotentialModel::gaussian());
    let spec = StickyMeasureSpec::new(2, 1.0, 5.0, 48).unwrap();
    let table = sampler::ConditionalTable::build(&[0.0, 1.3], 0, &wet, &spec, 512).unwrap();
    let probs = table.bin_probabilities();

    // Group the fine panels into ~20 bins of comparable mass.
    let mut edges: Vec<usize> = Vec::new(); // exclusive panel-end per bin
    let mut acc = 0.0;
    let total_cont: f64 = probs[1..].iter().sum();
    for (i, p) in probs[1..].iter().enumerate() {
        acc += p;
        if acc >= total_cont / 20.0 {
            edges.push(i + 1);
            acc = 0.0;
        }
    }
    if *edges.last().unwrap() != probs.len() - 1 {
        edges.push(probs.len() - 1);
    }
    let bin_of = |v: f64| -> usize {
        if v == 0.0 {
            return 0;
        }
        let panel = ((v / table.step) as usize).min(probs.len() - 2);
        1 + edges.iter().position(|&e| panel < e).unwrap()
    };
    let mut expected = vec![0.0f64; edges.len() + 1];
    expected[0] = probs[0];
    let mut start = 0usize;
    for (b, &e) in edges.iter().enumerate() {
        expected[b + 1] = probs[1 + start..1 + e].iter().sum();
        start = e;
    }

    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7777);
    let draws = 100_000usize;
    let mut counts = vec![0usize; expected.len()];
    for _ in 0..draws {
        counts[bin_of(table.quantile(rng.random::<f64>()))] += 1;
    }
    let stat: f64 = counts
        .iter()
        .zip(&expected)
        .map(|(&o, &e)| {
            let ex = e * draws as f64;
            (o as f64 - ex) * (o as f64 - ex) / ex
        })
        .sum();
    let dof = expected.len() as f64 - 1.0;
    let threshold = ChiSquared::new(dof).unwrap().inverse_cdf(0.999);
    println!(
        "criterion 7 [chi-square] {}: statistic {stat:.2} ≤ {threshold:.2} ({} bins)",
        if stat <= threshold { "PASS" } else { "FAIL" },
        expected.len()
    );
    assert!(stat <= threshold, "chi-square {stat} vs {threshold}");
    println!("criterion 7 PASS");
}

#[test]
fn criterion_08_local_time_relation() {
    let run = &CRITERION1_RUN;
    let eps = 0.2; // 10h
    let right_local_time_est = 2.0 * run.band_time / eps;
    let local_time = run.zero_time; // β = 1
    let ratio = right_local_time_est / (2.0 * local_time);
    let pass = (0.8..=1.2).contains(&ratio);
    println!(
        "criterion 8 {}: epsilon_local_time/(2·local_time) = {ratio:.4} ∈ [0.8, 1.2] (ε = 10h)",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "ratio {ratio}");
}

#[test]
fn criterion_09_generator_consistency() {
    // Two-point order estimates p̂ = log2(e(h)/e(h/2)) approach the true
    // order from below at pinned faces (the next expansion term has opposite
    // sign), so the asymptotic order is read off by extrapolating the p̂
    // sequence in h; interior points sit at order 2 outright.
    struct Case {
        label: &'static str,
        rho: DensityModel,
        beta: f64,
        point: Vec<f64>,
        boundary: bool,
    }
    let cases = vec![
        Case {
            label: "n=1 interior",
            rho: exp_model(&[1.0]),
            beta: 1.3,
            point: vec![0.4],
            boundary: false,
        },
        Case {
            label: "n=1 pinned",
            rho: exp_model(&[1.0]),
            beta: 1.3,
            point: vec![0.0],
            boundary: true,
        },
        Case {
            label: "n=2 interior",
            rho: exp_model(&[1.0, 0.5]),
            beta: 0.8,
            point: vec![0.4, 0.2],
            boundary: false,
        },
        Case {
            label: "n=2 mixed face",
            rho: exp_model(&[1.0, 0.5]),
            beta: 0.8,
            point: vec![0.4, 0.0],
            boundary: true,
        },
    ];

    for case in cases {
        let n = case.point.len();
        let f = BumpProduct::cubic(n, 1.0).unwrap();
        let exact = apply_generator(&f, &case.point, &case.rho, case.beta);
        let errs: Vec<f64> = [0.1f64, 0.05, 0.025]
            .iter()
            .map(|&h| {
                let scheme = GridSchemeSpec::new(h, 2.0, 1.0, 0, 100).unwrap();
                let idx: Vec<u32> = case.point.iter().map(|&x| (x / h).round() as u32).collect();
                (discrete_generator(&f, &idx, &case.rho, case.beta, &scheme) - exact).abs()
            })
            .collect();
        assert!(
            errs[0] > errs[1] && errs[1] > errs[2],
            "{}: errors not decreasing {errs:?}",
            case.label
        );
        let p1 = (errs[0] / errs[1]).log2();
        let p2 = (errs[1] / errs[2]).log2();
        let asymptotic = if case.boundary { p2 + (p2 - p1) } else { p2 };
        println!(
            "criterion 9 [{}] {}: two-point orders {p1:.3}, {p2:.3}; asymptotic {asymptotic:.3} ≥ 1",
            case.label,
            if asymptotic >= 1.0 { "PASS" } else { "FAIL" }
        );
        assert!(
            asymptotic >= 1.0,
            "{}: orders {p1}, {p2} → {asymptotic}",
            case.label
        );
        if case.boundary {
            assert!(p2 > 0.9 && p2 > p1, "{}: {p1} → {p2}", case.label);
        }
    }
    println!("criterion 9 PASS");
}
