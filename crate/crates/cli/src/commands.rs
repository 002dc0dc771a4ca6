//! One function per subcommand. Every command validates first, computes, and
//! writes machine-readable artifacts (CSV table + JSON sidecar, or JSON only).

use std::result::Result;

use rayon::prelude::*;
use serde::Serialize;

use sticky_walk_core::chain::{run_chain_seeded, ChainObserver, ChainSummary};
use sticky_walk_core::form::IbpReport;
use sticky_walk_core::stats::{ergodic_scan, occupancy_scan, occupation_stats};
use sticky_walk_core::testfn::{BumpProduct, BumpProfile};
use sticky_walk_core::*;

use crate::config::ResolvedConfig;
use crate::output::{csv_row_line, OutputDir};
use crate::CliError;

pub fn quadrature(cfg: &ResolvedConfig, out: &OutputDir) -> Result<(), CliError> {
    let rho = cfg.density()?;
    let spec = cfg.measure_spec(rho.dim())?;
    let mass = stratified_integral(|_| 1.0, &rho, &spec)?;
    let ratios: Vec<BoundaryMass> = (0..rho.dim())
        .map(|j| boundary_mass_ratio(j, &rho, &spec))
        .collect::<sticky_walk_core::Result<_>>()?;

    #[derive(Serialize)]
    struct Report {
        model: String,
        mass: QuadratureResult,
        boundary_ratios: Vec<RatioEntry>,
    }
    #[derive(Serialize)]
    struct RatioEntry {
        coord: usize,
        ratio: f64,
        wet_coeffs: Vec<f64>,
        total_coeffs: Vec<f64>,
    }

    println!("mu(E) = {}", mass.value);
    for r in &ratios {
        println!("boundary mass ratio x{} = {}", r.coord, r.ratio());
    }
    out.write_json(
        "quadrature.json",
        cfg,
        Report {
            model: rho.label().to_string(),
            boundary_ratios: ratios
                .iter()
                .map(|r| RatioEntry {
                    coord: r.coord,
                    ratio: r.ratio(),
                    wet_coeffs: r.wet_coeffs.clone(),
                    total_coeffs: r.total_coeffs.clone(),
                })
                .collect(),
            mass,
        },
    )?;
    Ok(())
}

pub fn sample(cfg: &ResolvedConfig, out: &OutputDir) -> Result<(), CliError> {
    let rho = cfg.density()?;
    let n = rho.dim();
    let spec = cfg.measure_spec(n)?;
    let set = sample_invariant(&rho, &spec, &cfg.sampler_config()?)?;

    let header: Vec<String> = (1..=n).map(|j| format!("x_{j}")).collect();
    let mut buf = Vec::with_capacity(set.n_samples() * n * 12);
    csv_row_line(&mut buf, header.iter().cloned());
    for k in 0..set.n_samples() {
        csv_row_line(&mut buf, set.sample(k).iter().map(|v| format!("{v}")));
    }
    out.write_raw("samples.csv", &buf)?;

    #[derive(Serialize)]
    struct StratumFrequency {
        mask: u32,
        frequency: f64,
    }
    #[derive(Serialize)]
    struct Report {
        model: String,
        n_samples: usize,
        atom_frequencies: Vec<f64>,
        /// Canonical stratum order (free-coordinate count, then lexicographic).
        stratum_frequencies: Vec<StratumFrequency>,
    }
    let strata: Vec<StratumFrequency> = set
        .stratum_counts
        .iter()
        .map(|(b, c)| StratumFrequency {
            mask: b.mask(),
            frequency: *c as f64 / set.n_samples() as f64,
        })
        .collect();
    out.write_json(
        "sample.json",
        cfg,
        Report {
            model: rho.label().to_string(),
            n_samples: set.n_samples(),
            atom_frequencies: (0..n).map(|j| set.atom_frequency(j)).collect(),
            stratum_frequencies: strata,
        },
    )?;
    println!(
        "wrote {} samples ({} coordinates) to samples.csv",
        set.n_samples(),
        n
    );
    Ok(())
}

/// Streams decimated event rows into a CSV buffer while accumulating
/// occupation times; nothing is retained per event.
struct SimulateObserver {
    decimate: u64,
    counter: u64,
    rows: Option<Vec<u8>>,
    boundary_time: f64,
    origin_time: f64,
}

impl ChainObserver for SimulateObserver {
    fn visit(&mut self, t: f64, dt: f64, state: &[u32], coords: &[f64]) {
        if let Some(buf) = &mut self.rows {
            if self.counter.is_multiple_of(self.decimate) {
                csv_row_line(
                    buf,
                    std::iter::once(format!("{t}")).chain(coords.iter().map(|v| format!("{v}"))),
                );
            }
        }
        self.counter += 1;
        if state.contains(&0) {
            self.boundary_time += dt;
        }
        if state.iter().all(|&i| i == 0) {
            self.origin_time += dt;
        }
    }
}

#[derive(Serialize)]
struct PathReport {
    path: usize,
    n_events: u64,
    total_time: f64,
    truncated: bool,
    final_state: Vec<u32>,
    zero_occupation_fraction: Vec<f64>,
    boundary_fraction: f64,
    origin_fraction: f64,
    local_times: Vec<f64>,
}

fn path_report(path: usize, beta: f64, summary: &ChainSummary, obs: &SimulateObserver) -> PathReport {
    let t = summary.total_time.max(f64::MIN_POSITIVE);
    PathReport {
        path,
        n_events: summary.n_events,
        total_time: summary.total_time,
        truncated: summary.truncated,
        final_state: summary.final_state.clone(),
        zero_occupation_fraction: summary.zero_occupation.iter().map(|z| z / t).collect(),
        boundary_fraction: obs.boundary_time / t,
        origin_fraction: obs.origin_time / t,
        local_times: summary.zero_occupation.iter().map(|z| z / beta).collect(),
    }
}

pub fn simulate_cmd(cfg: &ResolvedConfig, out: &OutputDir, decimate: u64) -> Result<(), CliError> {
    if decimate == 0 {
        return Err(CliError::Validation("--decimate must be at least 1".into()));
    }
    let rho = cfg.density()?;
    let n = rho.dim();
    let scheme = cfg.grid_scheme()?;
    let x0 = cfg.start_state(n)?;

    // Paths fan out across workers; the event CSV carries path 0 only, the
    // summary covers every path in seed order.
    let results: Vec<(Vec<u8>, PathReport)> = (0..cfg.paths)
        .into_par_iter()
        .map(|p| -> sticky_walk_core::Result<(Vec<u8>, PathReport)> {
            let mut obs = SimulateObserver {
                decimate,
                counter: 0,
                rows: (p == 0).then(Vec::new),
                boundary_time: 0.0,
                origin_time: 0.0,
            };
            let summary = run_chain_seeded(&x0, &rho, cfg.beta, &scheme, p as u64, &mut obs)?;
            let report = path_report(p, cfg.beta, &summary, &obs);
            Ok((obs.rows.take().unwrap_or_default(), report))
        })
        .collect::<sticky_walk_core::Result<_>>()?;

    let mut csv = Vec::new();
    csv_row_line(
        &mut csv,
        std::iter::once("t".to_string()).chain((1..=n).map(|j| format!("x_{j}"))),
    );
    csv.extend_from_slice(&results[0].0);
    out.write_raw("events.csv", &csv)?;

    #[derive(Serialize)]
    struct Report {
        model: String,
        n_paths: usize,
        paths: Vec<PathReport>,
    }
    let reports: Vec<PathReport> = results.into_iter().map(|(_, r)| r).collect();
    for r in &reports {
        println!(
            "path {}: {} events, total time {}, zero fractions {:?}{}",
            r.path,
            r.n_events,
            r.total_time,
            r.zero_occupation_fraction,
            if r.truncated { " (truncated)" } else { "" }
        );
    }
    out.write_json(
        "simulate.json",
        cfg,
        Report {
            model: rho.label().to_string(),
            n_paths: cfg.paths,
            paths: reports,
        },
    )?;
    Ok(())
}

fn occupancy_rows(report: &stats::OccupancyReport) -> Vec<Vec<String>> {
    report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.observable.clone(),
                format!("{}", r.estimate),
                format!("{}", r.target),
                format!("{}", r.se),
                r.pass.to_string(),
            ]
        })
        .collect()
}


fn require_positive_horizon(cfg: &ResolvedConfig) -> Result<(), CliError> {
    if !(cfg.grid.horizon > 0.0) {
        return Err(CliError::Validation(
            "key `grid.horizon` (or --horizon) must be positive for this command".into(),
        ));
    }
    Ok(())
}

pub fn occupancy(cfg: &ResolvedConfig, out: &OutputDir) -> Result<(), CliError> {
    require_positive_horizon(cfg)?;
    let rho = cfg.density()?;
    let n = rho.dim();
    let spec = cfg.measure_spec(n)?;
    let scheme = cfg.grid_scheme()?;
    let x0 = cfg.start_state(n)?;
    let report = occupancy_scan(&x0, &rho, cfg.beta, &scheme, &spec)?;
    out.write_csv(
        "occupancy.csv",
        &["observable", "estimate", "target", "se", "pass"],
        &occupancy_rows(&report),
    )?;
    for r in &report.rows {
        println!(
            "{}: estimate {} target {} (3se {}) pass {}",
            r.observable,
            r.estimate,
            r.target,
            3.0 * r.se,
            r.pass
        );
    }
    out.write_json("occupancy.json", cfg, &report)?;
    Ok(())
}

pub fn verify_ibp(cfg: &ResolvedConfig, out: &OutputDir) -> Result<(), CliError> {
    let rho = cfg.density()?;
    let n = rho.dim();
    // The pairing lives on the unit support box; the box side 1.25 keeps the
    // support face strictly inside a panel at every resolution used.
    let spec = StickyMeasureSpec::new(n, cfg.beta, 1.25, 32)?;
    let tolerance = if cfg.model.kind == "wetting" { 1e-5 } else { 1e-6 };

    let profile_cycle = [BumpProfile::Quartic, BumpProfile::CubicFlat, BumpProfile::Cubic];
    let f = BumpProduct::cubic(n, 1.0)?;
    let g = BumpProduct::new(
        (0..n).map(|j| profile_cycle[j % 3]).collect(),
        vec![1.0; n],
    )?;

    #[derive(Serialize)]
    struct Case {
        pair: String,
        tolerance: f64,
        pass: bool,
        #[serde(flatten)]
        report: IbpReport,
    }
    #[derive(Serialize)]
    struct Report {
        model: String,
        all_pass: bool,
        cases: Vec<Case>,
    }

    let mut cases = Vec::new();
    for (pair, a, b) in [
        ("cubic/mixed", &f, &g),
        ("cubic/cubic", &f, &f),
        ("mixed/mixed", &g, &g),
    ] {
        let report = check_ibp(a, b, &rho, &spec)?;
        let pass = report.rel_residual < tolerance;
        println!(
            "verify-ibp {pair}: form {} ibp {} rel residual {} (tolerance {tolerance}) {}",
            report.form_value,
            report.ibp_value,
            report.rel_residual,
            if pass { "PASS" } else { "FAIL" }
        );
        cases.push(Case {
            pair: pair.to_string(),
            tolerance,
            pass,
            report,
        });
    }
    let all_pass = cases.iter().all(|c| c.pass);
    out.write_json(
        "verify_ibp.json",
        cfg,
        Report {
            model: rho.label().to_string(),
            all_pass,
            cases,
        },
    )?;
    if !all_pass {
        return Err(CliError::CheckFailed(
            "integration-by-parts residual above tolerance".into(),
        ));
    }
    Ok(())
}

pub fn verify_ergodic(cfg: &ResolvedConfig, out: &OutputDir) -> Result<(), CliError> {
    require_positive_horizon(cfg)?;
    let rho = cfg.density()?;
    let n = rho.dim();
    let spec = cfg.measure_spec(n)?;
    let scheme = cfg.grid_scheme()?;
    let x0 = cfg.start_state(n)?;

    type Obs = Box<dyn Fn(&[f64]) -> f64 + Sync + Send>;
    let mut observables: Vec<(String, Obs)> = vec![("one".to_string(), Box::new(|_| 1.0))];
    for j in 0..n {
        observables.push((
            format!("x{j}=0"),
            Box::new(move |x: &[f64]| if x[j] == 0.0 { 1.0 } else { 0.0 }),
        ));
        observables.push((
            format!("min(x{j},10)"),
            Box::new(move |x: &[f64]| x[j].min(10.0)),
        ));
    }

    let reports = ergodic_scan(&x0, &rho, cfg.beta, &scheme, &spec, &observables)?;
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.observable.clone(),
                format!("{}", r.average),
                format!("{}", r.target),
                format!("{}", r.se),
                r.pass.to_string(),
            ]
        })
        .collect();
    out.write_csv(
        "verify_ergodic.csv",
        &["observable", "estimate", "target", "se", "pass"],
        &rows,
    )?;
    #[derive(Serialize)]
    struct Report {
        model: String,
        all_pass: bool,
        rows: Vec<stats::ErgodicReport>,
    }
    let all_pass = reports.iter().all(|r| r.pass);
    for r in &reports {
        println!(
            "{}: estimate {} target {} (3se {}) pass {}",
            r.observable,
            r.average,
            r.target,
            3.0 * r.se,
            r.pass
        );
    }
    out.write_json(
        "verify_ergodic.json",
        cfg,
        Report {
            model: rho.label().to_string(),
            all_pass,
            rows: reports,
        },
    )?;
    if !all_pass {
        return Err(CliError::CheckFailed(
            "an ergodic average missed its quadrature target by more than 3·SE".into(),
        ));
    }
    Ok(())
}

pub fn sweep_beta(cfg: &ResolvedConfig, out: &OutputDir) -> Result<(), CliError> {
    require_positive_horizon(cfg)?;
    let rho = cfg.density()?;
    let n = rho.dim();
    let x0 = cfg.start_state(n)?;
    // Coefficients integrate once; the ratio re-evaluates per β.
    let ratio = boundary_mass_ratio(0, &rho, &cfg.measure_spec(n)?)?;

    let results: Vec<(f64, f64, f64)> = cfg
        .sweep
        .betas
        .par_iter()
        .enumerate()
        .map(|(i, &beta)| -> sticky_walk_core::Result<(f64, f64, f64)> {
            if !(beta > 0.0) {
                return Err(CoreError::InvalidParameter {
                    name: "betas",
                    reason: format!("nonpositive β {beta}"),
                });
            }
            let scheme = GridSchemeSpec::new(
                cfg.grid.h,
                cfg.grid.wall,
                cfg.grid.horizon,
                cfg.seed.wrapping_add(i as u64),
                cfg.grid.max_events,
            )?;
            let preds = vec![("x0=0".to_string(), StatePredicate::CoordinateZero(0))];
            let (stats, _) = occupation_stats(&x0, &rho, beta, &scheme, &preds)?;
            Ok((beta, stats[0].1, stats[0].2))
        })
        .collect::<sticky_walk_core::Result<_>>()?;

    let mut rows = Vec::new();
    let mut monotone = true;
    let mut all_pass = true;
    for (i, &(beta, est, se)) in results.iter().enumerate() {
        let target = ratio.ratio_at(beta);
        let pass = (est - target).abs() <= 3.0 * se;
        all_pass &= pass;
        if i > 0 {
            monotone &= est > results[i - 1].1;
        }
        println!("beta {beta}: estimate {est} target {target} (3se {}) pass {pass}", 3.0 * se);
        rows.push(vec![
            format!("{beta}"),
            format!("{est}"),
            format!("{target}"),
            format!("{se}"),
            pass.to_string(),
        ]);
    }
    out.write_csv(
        "sweep_beta.csv",
        &["beta", "estimate", "target", "se", "pass"],
        &rows,
    )?;
    #[derive(Serialize)]
    struct Report {
        model: String,
        monotone: bool,
        all_pass: bool,
        betas: Vec<f64>,
        estimates: Vec<f64>,
        standard_errors: Vec<f64>,
    }
    out.write_json(
        "sweep_beta.json",
        cfg,
        Report {
            model: rho.label().to_string(),
            monotone,
            all_pass,
            betas: results.iter().map(|r| r.0).collect(),
            estimates: results.iter().map(|r| r.1).collect(),
            standard_errors: results.iter().map(|r| r.2).collect(),
        },
    )?;
    println!("monotone in beta: {monotone}");
    Ok(())
}
