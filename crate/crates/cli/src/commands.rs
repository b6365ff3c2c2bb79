//! One function per subcommand. Each writes its CSVs into the output
//! directory and reports whether every check it ran passed.

use std::sync::Arc;

use anyhow::{bail, Result};
use confdim_core::cloud::PointCloud;
use confdim_core::conformal::{
    check_distortion_sandwich, estimate_distortion, validate_assumptions, AssumptionCheck, DISTORTION_TOLERANCE,
};
use confdim_core::dimension::{
    beta_reference, default_radius_grid, entropy_dimension_with, expected_e_q, exactness_probe,
    pin_distance_dimension, projection_sweep, sweep_angles, sweep_frames, BetaRef, ProjectionSpec,
};
use confdim_core::dynamics::{
    a2_verdict, density_diagnostic, orbit_sequence, random_base, sufficient_criterion, A2Verdict, DensityDiagnostic,
    OrbitEntries, RotationOrbit, SufficientCriterion,
};
use confdim_core::gibbs::{bowen_root, pressure, sample_cloud, verify_gibbs, Potential};
use confdim_core::{ConformalSystem, InfiniteWord, Word};
use log::info;

use crate::config::ExperimentConfig;
use crate::output::{num, OutDir};

/// Outcome of a subcommand that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Passed,
    /// Some assumption or certificate check failed (exit code 2).
    ChecksFailed,
}

const PROBE_POINTS: usize = 100;

fn summary(out: &mut OutDir, rows: Vec<(&str, String)>) -> Result<()> {
    for (k, v) in &rows {
        println!("{k} = {v}");
    }
    out.csv("summary.csv", &["key", "value"], rows.into_iter().map(|(k, v)| vec![k.to_string(), v]))
}

fn report_checks(out: &mut OutDir, checks: &[AssumptionCheck]) -> Result<Status> {
    for c in checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    out.csv(
        "assumptions.csv",
        &["check", "passed", "detail"],
        checks.iter().map(|c| vec![c.name.clone(), c.passed.to_string(), c.detail.clone()]),
    )?;
    Ok(if checks.iter().all(|c| c.passed) { Status::Passed } else { Status::ChecksFailed })
}

fn one_based_word(sys: &ConformalSystem, w: &[usize]) -> Result<Word> {
    Ok(Word::from_one_based(w, sys.alphabet())?)
}

fn orbit_base(cfg: &ExperimentConfig, sys: &ConformalSystem) -> Result<InfiniteWord> {
    Ok(match &cfg.orbit.base {
        Some(w) => InfiniteWord::periodic(one_based_word(sys, w)?)?,
        None => random_base(cfg.seed, sys.maps())?,
    })
}

struct A2Result {
    orbit: RotationOrbit,
    diagnostic: DensityDiagnostic,
    criterion: SufficientCriterion,
    verdict: A2Verdict,
}

fn a2(cfg: &ExperimentConfig, sys: &ConformalSystem) -> Result<A2Result> {
    let orbit = orbit_sequence(sys, &orbit_base(cfg, sys)?, cfg.orbit.n)?;
    let diagnostic = density_diagnostic(&orbit)?;
    let criterion = sufficient_criterion(sys, cfg.orbit.max_word)?;
    let verdict = a2_verdict(&criterion, &diagnostic);
    Ok(A2Result { orbit, diagnostic, criterion, verdict })
}

fn write_periodic(out: &mut OutDir, crit: &SufficientCriterion) -> Result<()> {
    out.csv(
        "periodic.csv",
        &["word", "angle_rad", "rational_over_pi"],
        crit.checked.iter().map(|p| {
            let rational = p.rational.map(|(a, b)| format!("{a}/{b}")).unwrap_or_default();
            vec![p.word.to_string(), num(p.angle), rational]
        }),
    )
}

pub fn validate(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<Status> {
    let sys = cfg.build_system()?;
    let report = validate_assumptions(&sys);
    let mut checks = report.checks.clone();
    if report.passed() {
        let d = &cfg.distortion;
        let dist = estimate_distortion(&sys, d.words, d.pairs, cfg.seed)?;
        let worst = check_distortion_sandwich(&sys, dist.c2_hat, d.triples, cfg.seed);
        checks.push(AssumptionCheck {
            name: "bounded distortion".into(),
            passed: dist.stabilized && worst <= 1.0 + DISTORTION_TOLERANCE,
            detail: format!(
                "C1 = {:.6}, C2 = {:.6}, stabilized = {}, worst sandwich ratio over {} triples = {:.6}",
                dist.c1_hat, dist.c2_hat, dist.stabilized, d.triples, worst
            ),
        });
        out.csv(
            "distortion.csv",
            &["c1_hat", "c2_hat", "samples", "stabilized", "sandwich_triples", "sandwich_worst"],
            [vec![
                num(dist.c1_hat),
                num(dist.c2_hat),
                dist.samples.to_string(),
                dist.stabilized.to_string(),
                d.triples.to_string(),
                num(worst),
            ]],
        )?;
        let a = a2(cfg, &sys)?;
        let witness = a.criterion.witness.as_ref().map(|w| format!(", witness word {w}")).unwrap_or_default();
        checks.push(AssumptionCheck {
            name: "A2: rotation density".into(),
            passed: a.verdict != A2Verdict::AtomsDetected,
            detail: format!(
                "{}{witness}; orbit diagnostic {} over {} entries, final discrepancy {:.3e}",
                a.verdict,
                a.diagnostic.verdict,
                a.orbit.len(),
                a.diagnostic.final_discrepancy()
            ),
        });
        write_periodic(out, &a.criterion)?;
    }
    report_checks(out, &checks)
}

fn pressure_depth(phi: &Potential, cfg: &ExperimentConfig) -> usize {
    if phi.is_exact() {
        cfg.pressure.n_max.max(64)
    } else {
        cfg.pressure.n_max
    }
}

pub fn pressure_cmd(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<Status> {
    let sys = cfg.build_system()?;
    let phi = cfg.build_potential(&sys, "pressure")?;
    let trace = pressure(&phi, pressure_depth(&phi, cfg))?;
    out.csv(
        "pressure.csv",
        &["n", "P_n", "increment"],
        trace.levels.iter().zip(&trace.increments).enumerate().map(|(k, (p, inc))| {
            vec![(k + 1).to_string(), num(*p), num(*inc)]
        }),
    )?;
    let mut rows = vec![("p_hat", num(trace.p_hat)), ("converged", trace.converged.to_string())];
    if sys.geometry().contractive {
        let root = bowen_root(&sys, cfg.pressure.bowen_tol)?;
        rows.push(("bowen_s_hat", num(root.s_hat)));
        rows.push(("bowen_pressure", num(root.pressure)));
        rows.push(("bowen_iterations", root.iterations.to_string()));
    }
    summary(out, rows)?;
    Ok(Status::Passed)
}

pub fn gibbs_check(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<Status> {
    let sys = cfg.build_system()?;
    let phi = cfg.build_potential(&sys, "gibbs-check")?;
    let p_hat = pressure(&phi, pressure_depth(&phi, cfg))?.p_hat;
    let refined = (1..=cfg.gibbs.q_max).map(|q| sys.refined_alphabet(q)).collect::<Result<Vec<_>, _>>()?;
    let report = verify_gibbs(&phi, p_hat, cfg.gibbs.n_max, &refined)?;
    out.csv(
        "sandwich.csv",
        &["n", "slack", "bound", "holds"],
        report.sandwich.iter().map(|s| {
            vec![s.n.to_string(), num(s.slack), num(s.bound), (s.slack <= s.bound + 1e-12).to_string()]
        }),
    )?;
    let qb = &report.quasi_bernoulli;
    out.csv(
        "quasi_bernoulli.csv",
        &["label", "q", "c_hat", "bound", "pairs", "holds"],
        qb.entries.iter().map(|e| {
            vec![
                e.label.clone(),
                e.q.map(|q| q.to_string()).unwrap_or_default(),
                num(e.c_hat),
                num(e.bound),
                e.pairs.to_string(),
                e.holds().to_string(),
            ]
        }),
    )?;
    let trend = qb.refined_trend();
    let decreasing = trend.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-12));
    let mut rows = vec![
        ("p_hat", num(p_hat)),
        ("sandwich_holds", report.sandwich_holds().to_string()),
        ("max_sandwich_violation", num(report.max_sandwich_violation)),
        ("quasi_bernoulli_holds", qb.all_hold().to_string()),
        ("c_q_nonincreasing", decreasing.to_string()),
    ];
    if let Some(&(q, c)) = trend.last() {
        rows.push(("final_q", q.to_string()));
        rows.push(("final_c_q", num(c)));
    }
    summary(out, rows)?;
    Ok(if report.sandwich_holds() && qb.all_hold() { Status::Passed } else { Status::ChecksFailed })
}

struct Sampled {
    sys: Arc<ConformalSystem>,
    phi: Potential,
    cloud: PointCloud,
    radii: Vec<f64>,
    max_centers: Option<usize>,
}

fn sampled(cfg: &ExperimentConfig, task: &str, out: &mut OutDir) -> Result<Sampled> {
    let sys = cfg.build_system()?;
    let phi = cfg.build_potential(&sys, task)?;
    let (s, depth) = cfg.sampling(task)?;
    let cloud = sample_cloud(&sys, &phi, depth, s.n, cfg.seed)?;
    info!("sampled {} points", cloud.len());
    let grid = match cfg.radius_grid() {
        Some(g) => g,
        None => default_radius_grid(&cloud)?,
    };
    let radii = grid.radii()?;
    if s.export {
        write_cloud(out, &cloud)?;
    }
    Ok(Sampled { sys, phi, cloud, radii, max_centers: s.max_centers })
}

fn write_cloud(out: &mut OutDir, cloud: &PointCloud) -> Result<()> {
    let coords: Vec<String> = (1..=cloud.dim()).map(|k| format!("x_{k}")).collect();
    let mut header = vec!["word"];
    header.extend(coords.iter().map(String::as_str));
    header.extend(["weight", "pos_error"]);
    out.csv(
        "cloud.csv",
        &header,
        (0..cloud.len()).map(|k| {
            let mut row = vec![cloud.words().map(|w| w.word(k).to_string()).unwrap_or_default()];
            row.extend(cloud.point(k).iter().map(|&x| num(x)));
            row.push(num(cloud.weights()[k]));
            row.push(num(cloud.pos_error()[k]));
            row
        }),
    )
}

fn entropy_csv(out: &mut OutDir, curve: &[confdim_core::cloud::EntropyEstimate]) -> Result<()> {
    out.csv(
        "entropy.csv",
        &["r", "H_r_hat", "jackknife_err"],
        curve.iter().map(|e| vec![num(e.r), num(e.h), num(e.jackknife_err)]),
    )
}

pub fn dimension(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<Status> {
    let s = sampled(cfg, "dimension", out)?;
    let est = entropy_dimension_with(&s.cloud, &s.radii, s.max_centers)?;
    entropy_csv(out, &est.curve)?;
    let probes = exactness_probe(&s.cloud, &s.radii, PROBE_POINTS, cfg.seed)?;
    out.csv(
        "local.csv",
        &["probe", "local_dim"],
        probes.iter().enumerate().map(|(k, d)| vec![k.to_string(), num(*d)]),
    )?;
    let lo = probes.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = probes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    summary(
        out,
        vec![
            ("dim_e_hat", num(est.dim_e_hat)),
            ("raw_slope", num(est.raw_slope)),
            ("ci_halfwidth", num(est.ci_halfwidth)),
            ("slope_full", num(est.slope_full)),
            ("r_min", num(est.window.0)),
            ("r_max", num(est.window.1)),
            ("n_samples", s.cloud.len().to_string()),
            ("local_dim_spread", num(hi - lo)),
        ],
    )?;
    Ok(Status::Passed)
}

pub fn orbit(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<Status> {
    let sys = cfg.build_system()?;
    let a = a2(cfg, &sys)?;
    let mut disc = a.diagnostic.checkpoints.iter().peekable();
    let d = a.orbit.dim();
    let mut header = vec!["n".to_string()];
    match &a.orbit.entries {
        OrbitEntries::Angles(_) => header.push("angle_rad".into()),
        OrbitEntries::Matrices { .. } => {
            for r in 1..=d {
                for c in 1..=d {
                    header.push(format!("o_{r}{c}"));
                }
            }
        }
    }
    header.push("running_discrepancy".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = (0..a.orbit.len()).map(|k| {
        let n = k + 1;
        let mut row = vec![n.to_string()];
        match &a.orbit.entries {
            OrbitEntries::Angles(v) => row.push(num(v[k])),
            OrbitEntries::Matrices { data, .. } => row.extend(data[k * d * d..(k + 1) * d * d].iter().map(|&x| num(x))),
        }
        let value = match disc.peek() {
            Some(&&(m, v)) if m == n => {
                disc.next();
                num(v)
            }
            _ => String::new(),
        };
        row.push(value);
        row
    });
    out.csv("orbit.csv", &header, rows.collect::<Vec<_>>())?;
    write_periodic(out, &a.criterion)?;
    summary(
        out,
        vec![
            ("base", a.orbit.base.clone()),
            ("entries", a.orbit.len().to_string()),
            ("final_discrepancy", num(a.diagnostic.final_discrepancy())),
            ("chi_square", a.diagnostic.chi_square.map(num).unwrap_or_default()),
            ("clusters", a.diagnostic.clusters.to_string()),
            ("clusters_for_half", a.diagnostic.clusters_for_half.to_string()),
            ("witness", a.criterion.witness.as_ref().map(Word::to_string).unwrap_or_default()),
            ("verdict", a.verdict.to_string()),
        ],
    )?;
    Ok(Status::Passed)
}

fn beta_rows(beta: &BetaRef) -> Vec<(&'static str, String)> {
    vec![
        ("beta_ref", num(beta.beta)),
        ("dim_ref", num(beta.dim)),
        ("beta_self_referential", beta.self_referential.to_string()),
        ("beta_note", beta.note.clone()),
    ]
}

fn check_k(k: usize, d: usize) -> Result<()> {
    if k == 0 || k > d {
        bail!("projection rank k = {k} must lie in 1..={d}");
    }
    Ok(())
}

pub fn eq(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<Status> {
    let s = sampled(cfg, "eq", out)?;
    let d = s.sys.dim();
    check_k(cfg.eq.k, d)?;
    let spec = ProjectionSpec::coordinate(d, cfg.eq.k)?;
    let g = s.sys.geometry();
    let est = expected_e_q(&spec, &s.cloud, g.c1, g.rho, &cfg.eq.q, cfg.eq.rotations, cfg.seed)?;
    let beta = beta_reference(&s.sys, &s.phi, cfg.eq.k, &s.cloud, &s.radii, cfg.seed)?;
    out.csv(
        "eq.csv",
        &["q", "E_q_hat", "stderr", "beta_ref"],
        est.iter().map(|e| vec![e.q.to_string(), num(e.mean), num(e.stderr), num(beta.beta)]),
    )?;
    let mut rows = vec![("c1", num(g.c1)), ("rho", num(g.rho)), ("rotations", cfg.eq.rotations.to_string())];
    rows.extend(beta_rows(&beta));
    summary(out, rows)?;
    Ok(Status::Passed)
}

pub fn sweep(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<Status> {
    let s = sampled(cfg, "sweep", out)?;
    let (d, k) = (s.sys.dim(), cfg.sweep.k);
    check_k(k, d)?;
    let directions: Vec<ProjectionSpec> = if d == 2 && k == 1 {
        sweep_angles(cfg.sweep.directions).into_iter().map(ProjectionSpec::from_angle).collect()
    } else {
        sweep_frames(d, k, cfg.sweep.directions, cfg.seed)?
    };
    let beta = beta_reference(&s.sys, &s.phi, k, &s.cloud, &s.radii, cfg.seed)?;
    let result = projection_sweep(&s.cloud, &directions, &s.radii, beta.beta)?;
    out.csv(
        "sweep.csv",
        &["angle_rad", "dim_e_hat", "ci_halfwidth", "r_min", "r_max", "n_samples"],
        result.entries.iter().map(|e| {
            vec![num(e.angle), num(e.dim_e_hat), num(e.ci_halfwidth), num(e.r_min), num(e.r_max), e.n_samples.to_string()]
        }),
    )?;
    let mut rows = vec![
        ("directions", result.entries.len().to_string()),
        ("min", num(result.min())),
        ("median", num(result.median())),
        ("max", num(result.max())),
        ("spread", num(result.max() - result.min())),
    ];
    rows.extend(beta_rows(&beta));
    summary(out, rows)?;
    Ok(Status::Passed)
}

pub fn distance(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<Status> {
    let s = sampled(cfg, "distance", out)?;
    let pin = match (&cfg.distance.pin, &cfg.distance.pin_word) {
        (Some(p), _) => p.clone(),
        (None, Some(w)) => s.sys.periodic_point(one_based_word(&s.sys, w)?.symbols()),
        (None, None) => s.sys.periodic_point(&[0]),
    };
    if pin.len() != s.sys.dim() {
        bail!("distance.pin has {} coordinates, the system lives in dimension {}", pin.len(), s.sys.dim());
    }
    let res = pin_distance_dimension(&s.cloud, &pin, &s.radii, cfg.distance.eps)?;
    entropy_csv(out, &res.estimate.curve)?;
    let pin_text = pin.iter().map(|&x| num(x)).collect::<Vec<_>>().join(" ");
    summary(
        out,
        vec![
            ("pin", pin_text),
            ("eps", num(cfg.distance.eps)),
            ("excluded_mass", num(res.excluded_mass)),
            ("dim_e_hat", num(res.estimate.dim_e_hat)),
            ("raw_slope", num(res.estimate.raw_slope)),
            ("ci_halfwidth", num(res.estimate.ci_halfwidth)),
            ("r_min", num(res.estimate.window.0)),
            ("r_max", num(res.estimate.window.1)),
            ("n_samples", s.cloud.len().to_string()),
        ],
    )?;
    Ok(Status::Passed)
}
