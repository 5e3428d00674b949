//! The five experiment suites. Each one fills a [`Manifest`] with checks and
//! tables; module errors inside a cell become failed checks so sibling cells
//! still run.

use std::fs;
use std::path::Path;

use anyon_core::afm::{convergence_study, initial_state, minimize, AverageFieldFunctional, FieldConfig};
use anyon_core::export::{export_two_body, export_wavefunction};
use anyon_core::fewbody::{run_cell, CellOutput, TwoBodyConfig, LEAK_TOL};
use anyon_core::fields::ExternalField;
use anyon_core::inequality::{
    circumradius_rho, circumradius_scan, diamagnetic_check, diamagnetic_refinement, form_family, geom_bound_scan,
    hardy_family, hardy_mc, magnetic_bound_check, quadratic_form_ratios, stream_rng, three_body_s, HardyTest, Regime,
    SmoothCase,
};
use anyon_core::kernel::fourier_l1_partial;
use anyon_core::spectral::{count_levels, one_body_ground, oscillator_count, weyl_fit, OneBodyProblem};
use anyon_core::{Grid2D, SmearedKernel, WaveFunction};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, Suite};
use crate::manifest::{num, opt, Check, InequalityReport, Manifest, Table};
use crate::CliError;

/// Relative budget for grid quadrature of continuum inequalities.
const QUADRATURE_TOL: f64 = 1e-3;

/// Stream ids separating the random draws of different checks.
mod stream {
    pub const POSITIVITY: u64 = 1 << 32;
    pub const GRADIENT: u64 = 2 << 32;
    pub const DIAMAGNETIC: u64 = 3 << 32;
    pub const MAGNETIC: u64 = 4 << 32;
}

pub fn run(suite: Suite, cfg: &ExperimentConfig, dir: &Path, m: &mut Manifest) -> Result<(), CliError> {
    match suite {
        Suite::Minimize => minimize_suite(cfg, dir, m),
        Suite::Rstudy => rstudy_suite(cfg, dir, m),
        Suite::Verify => verify_suite(cfg, m),
        Suite::Fewbody => fewbody_suite(cfg, dir, m),
        Suite::Weyl => weyl_suite(cfg, dir, m),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T, m: &mut Manifest) -> Result<(), CliError> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    m.files.push(relative_name(path));
    Ok(())
}

fn relative_name(path: &Path) -> String {
    let mut parts: Vec<String> =
        path.components().rev().take(2).map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
    parts.reverse();
    if parts.first().is_some_and(|p| p == "cells") {
        parts.join("/")
    } else {
        parts.pop().unwrap_or_default()
    }
}

fn field_config(cfg: &ExperimentConfig, grid: Grid2D, radius: f64) -> FieldConfig {
    FieldConfig { grid, field: cfg.field.clone(), trap: cfg.trap, beta: cfg.beta, radius }
}

/// Smooth random normalized state on `grid`.
fn random_state(grid: Grid2D, seed: u64, stream: u64) -> WaveFunction {
    SmoothCase::random(&mut stream_rng(seed, stream), grid.side()).state(grid)
}

fn inner(cell: f64, a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x.conj() * y).re).sum::<f64>() * cell
}

// ---------------------------------------------------------------------------
// minimize
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct MinimizeResult {
    energy: anyon_core::afm::EnergyBreakdown,
    iterations: usize,
    residual: f64,
    multiplier: f64,
    converged: bool,
    fingerprint: anyon_core::afm::Fingerprint,
    flux_bound: anyon_core::afm::MagneticLowerBound,
    flags: Vec<String>,
}

fn minimize_suite(cfg: &ExperimentConfig, dir: &Path, m: &mut Manifest) -> Result<(), CliError> {
    let grid = cfg.grid.build()?;
    let fcfg = field_config(cfg, grid, cfg.radius);
    let functional = match AverageFieldFunctional::new(fcfg.clone()) {
        Ok(f) => f,
        Err(e) => {
            m.checks.push(Check::new("setup", false, e.to_string()));
            return Ok(());
        }
    };
    let schedule = cfg.schedule();

    match minimize(&functional, &initial_state(&fcfg), &schedule) {
        Err(e) => m.checks.push(Check::new("minimize", false, e.to_string())),
        Ok(out) => {
            let mut flags = Vec::new();
            if !out.converged {
                flags.push(format!("iteration cap reached at residual {:e}", out.residual));
            }
            m.checks.push(Check::new(
                "converged",
                out.converged,
                format!("residual {:e} after {} iterations (tol {:e})", out.residual, out.iterations, cfg.tol),
            ));
            let worst_rise = out
                .trace
                .windows(2)
                .map(|w| (w[1] - w[0]) / w[0].abs().max(1.0))
                .fold(f64::NEG_INFINITY, f64::max);
            m.checks.push(Check::new(
                "energy_trace_nonincreasing",
                out.trace.len() < 2 || worst_rise <= 1e-12,
                format!("largest relative rise {worst_rise:e}"),
            ));
            let norm_err = (out.state.norm_sq() - 1.0).abs();
            m.checks.push(Check::new("normalization", norm_err <= 1e-12, format!("|‖u‖² − 1| = {norm_err:e}")));
            let bound = functional.magnetic_lower_bound(&out.state);
            m.checks.push(Check::new(
                "flux_lower_bound_at_minimizer",
                bound.holds(QUADRATURE_TOL),
                format!("magnetic kinetic {} vs flux {}", bound.kinetic, bound.flux),
            ));
            if cfg.beta == 0.0 {
                match one_body_ground(&OneBodyProblem::from(&fcfg), cfg.tol) {
                    Ok(g) => {
                        let rel = (out.energy.total - g.energy).abs() / g.energy.abs().max(1.0);
                        m.checks.push(Check::new(
                            "spectral_agreement",
                            rel <= 1e-4,
                            format!("minimizer {} vs eigensolver {} (relative {rel:e})", out.energy.total, g.energy),
                        ));
                    }
                    Err(e) => m.checks.push(Check::new("spectral_agreement", false, e.to_string())),
                }
            }
            let mut trace = Table::new("trace", &["iteration", "energy"]);
            for (i, e) in out.trace.iter().enumerate() {
                trace.push(vec![i.to_string(), num(*e)]);
            }
            m.tables.push(trace);
            let mut energy = Table::new("energy", &["beta", "R", "kinetic", "potential", "mixed", "quartic", "total"]);
            let e = out.energy;
            energy.push(vec![
                num(cfg.beta),
                num(cfg.radius),
                num(e.kinetic),
                num(e.potential),
                num(e.mixed),
                num(e.quartic),
                num(e.total),
            ]);
            m.tables.push(energy);
            if cfg.minimize.export {
                let (bin, json) = export_wavefunction(&dir.join("minimizer"), &out.state)?;
                m.files.push(relative_name(&bin));
                m.files.push(relative_name(&json));
            }
            let result = MinimizeResult {
                energy: out.energy,
                iterations: out.iterations,
                residual: out.residual,
                multiplier: out.multiplier,
                converged: out.converged,
                fingerprint: out.fingerprint,
                flux_bound: bound,
                flags,
            };
            write_json(&dir.join("result.json"), &result, m)?;
        }
    }

    positivity_checks(cfg, &functional, m);
    gradient_check(cfg, &functional, m);
    Ok(())
}

fn positivity_checks(cfg: &ExperimentConfig, functional: &AverageFieldFunctional, m: &mut Manifest) {
    let count = cfg.minimize.positivity_states;
    if count == 0 {
        return;
    }
    if cfg.trap.c < 0.0 || cfg.trap.offset > 0.0 {
        m.checks.push(Check::flagged("energy_nonnegative", "skipped: trap is not nonnegative"));
        return;
    }
    let grid = functional.config().grid;
    let mut table = Table::new("positivity", &["state", "total", "magnetic_kinetic", "flux"]);
    let mut min_total = f64::INFINITY;
    let mut bound_failures = 0;
    for k in 0..count {
        let u = random_state(grid, cfg.seed, stream::POSITIVITY + k as u64);
        let e = functional.energy(&u);
        let b = functional.magnetic_lower_bound(&u);
        min_total = min_total.min(e.total);
        if !b.holds(QUADRATURE_TOL) {
            bound_failures += 1;
        }
        table.push(vec![k.to_string(), num(e.total), num(b.kinetic), num(b.flux)]);
    }
    m.checks.push(Check::new("energy_nonnegative", min_total >= 0.0, format!("smallest total {min_total} over {count} states")));
    m.checks.push(Check::new(
        "flux_lower_bound_random",
        bound_failures == 0,
        format!("{bound_failures} of {count} states violate the bound"),
    ));
    m.tables.push(table);
}

fn gradient_check(cfg: &ExperimentConfig, functional: &AverageFieldFunctional, m: &mut Manifest) {
    let count = cfg.minimize.gradient_directions;
    if count == 0 {
        return;
    }
    let grid = functional.config().grid;
    let u = random_state(grid, cfg.seed, stream::GRADIENT);
    let grad = functional.gradient(&u);
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for k in 0..count {
        let d = random_state(grid, cfg.seed, stream::GRADIENT + 1 + k as u64);
        let shifted = |s: f64| {
            let vals = u.values().iter().zip(d.values()).map(|(a, b)| a + s * b).collect();
            WaveFunction::new(grid, vals).expect("same grid")
        };
        let fd = (functional.energy(&shifted(eps)).total - functional.energy(&shifted(-eps)).total) / (2.0 * eps);
        let an = 2.0 * inner(grid.cell(), &grad, d.values());
        worst = worst.max((fd - an).abs() / an.abs().max(1.0));
    }
    m.checks.push(Check::new(
        "gradient_finite_differences",
        worst <= 1e-6,
        format!("largest relative mismatch {worst:e} over {count} directions"),
    ));
}

// ---------------------------------------------------------------------------
// rstudy
// ---------------------------------------------------------------------------

fn rstudy_suite(cfg: &ExperimentConfig, dir: &Path, m: &mut Manifest) -> Result<(), CliError> {
    let grid = cfg.grid.build()?;
    let base = field_config(cfg, grid, cfg.radii[0]);
    let study = convergence_study(&base, &cfg.radii, &cfg.schedule())?;
    let mut table = Table::new("rstudy", &["R", "E_af_R", "diff", "slope_fit"]);
    for row in &study.rows {
        table.push(vec![num(row.radius), opt(row.energy), opt(row.diff), opt(study.slope)]);
        let name = format!("cell R={}", row.radius);
        match &row.error {
            Some(err) => m.checks.push(Check::new(name, false, err.clone())),
            None => m.checks.push(Check::new(name, row.converged, format!("{} iterations", row.iterations))),
        }
    }
    m.tables.push(table);

    let energies: Vec<f64> = study.rows.iter().filter_map(|r| r.energy).collect();
    if cfg.beta == 0.0 {
        let spread = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - energies.iter().cloned().fold(f64::INFINITY, f64::min);
        m.checks.push(Check::new("flat_without_coupling", spread <= 1e-10, format!("energy spread {spread:e}")));
    } else {
        let [lo, hi] = cfg.rstudy.slope_band;
        match study.slope {
            Some(s) => m.checks.push(Check::new(
                "convergence_slope",
                (lo..=hi).contains(&s),
                format!("fitted slope {s} (accepted [{lo}, {hi}])"),
            )),
            None => m.checks.push(Check::new("convergence_slope", false, "fewer than two nonzero differences")),
        }
    }
    let diffs: Vec<f64> = study.rows.iter().filter_map(|r| r.diff).collect();
    let monotone = diffs.windows(2).all(|w| w[1] <= w[0]);
    m.checks.push(if monotone {
        Check::new("differences_decrease", true, "successive differences decrease")
    } else {
        Check::flagged("differences_decrease", "successive differences are not monotone")
    });
    write_json(&dir.join("rstudy.json"), &study, m)
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

fn verify_suite(cfg: &ExperimentConfig, m: &mut Manifest) -> Result<(), CliError> {
    let kernel = SmearedKernel::new(1.0)?;
    type Job<'a> = Box<dyn Fn() -> Result<InequalityReport, CliError> + Send + Sync + 'a>;
    let jobs: Vec<(&str, &str, Job)> = vec![
        ("kernel_scaling", "Scaling of the smeared potential", Box::new(|| kernel_report(cfg, &kernel))),
        ("three_body_geometry", "Geometric three-body bound", Box::new(|| geometry_report(cfg, &kernel))),
        ("three_particle_hardy", "Three-particle Hardy inequality", Box::new(|| hardy_report(cfg))),
        ("singular_form", "Singular two-body form bound", Box::new(|| singular_form_report(cfg, &kernel))),
        ("mixed_form", "Mixed two-body form bound", Box::new(|| mixed_form_report(cfg, &kernel))),
        ("magnetic_term", "Magnetic-term bound", Box::new(|| magnetic_report(cfg, &kernel))),
        ("diamagnetic", "Diamagnetic inequality", Box::new(|| diamagnetic_report(cfg))),
    ];
    for (id, title, job) in jobs {
        let report = job().unwrap_or_else(|e| InequalityReport {
            id: id.into(),
            title: title.into(),
            empirical_constant: f64::NAN,
            checks: vec![Check::new("evaluation", false, e.to_string())],
            table: Table::new(id, &["error"]),
        });
        m.reports.push(report);
    }
    Ok(())
}

fn kernel_report(cfg: &ExperimentConfig, kernel: &SmearedKernel) -> Result<InequalityReport, CliError> {
    let spec = &cfg.verify.kernel;
    let mut table = Table::new("kernel_scaling", &["p", "R", "norm", "predicted", "relative_error"]);
    let mut worst_lp: f64 = 0.0;
    for &p in &spec.exponents {
        let base = kernel.lp_norm_grad(p)?;
        for &r in &spec.radii {
            let norm = kernel.rescaled(r)?.lp_norm_grad(p)?;
            let predicted = r.powf(2.0 / p - 1.0) * base;
            let rel = (norm - predicted).abs() / predicted;
            worst_lp = worst_lp.max(rel);
            table.push(vec![num(p), num(r), num(norm), num(predicted), num(rel)]);
        }
    }
    let sup1 = kernel.sup_v();
    let mut worst_sup: f64 = 0.0;
    for &r in &spec.radii {
        let sup = kernel.rescaled(r)?.sup_v();
        let rel = (r * sup - sup1).abs() / sup1;
        worst_sup = worst_sup.max(rel);
        table.push(vec!["inf".into(), num(r), num(sup), num(sup1 / r), num(rel)]);
    }
    let mass = kernel.profile().mass();
    let l1_200 = fourier_l1_partial(kernel.profile(), 200.0);
    let l1_400 = fourier_l1_partial(kernel.profile(), 400.0);
    let increment = (l1_400 - l1_200) / l1_400;
    Ok(InequalityReport {
        id: "kernel_scaling".into(),
        title: "Scaling of the smeared potential".into(),
        empirical_constant: sup1,
        checks: vec![
            Check::new("lp_scaling", worst_lp <= 1e-8, format!("largest relative error {worst_lp:e}")),
            Check::new("sup_scaling", worst_sup <= 1e-10, format!("R·sup v spread {worst_sup:e}")),
            Check::new("profile_mass", (mass - 1.0).abs() <= 1e-10, format!("mass {mass}")),
            Check::new(
                "fourier_l1_cauchy",
                increment <= 0.01,
                format!("partial L¹ norms {l1_200} (P=200), {l1_400} (P=400), increment {increment:e}"),
            ),
        ],
        table,
    })
}

fn triangle_cells(w: &[[f64; 2]; 3]) -> Vec<String> {
    w.iter().flat_map(|p| [num(p[0]), num(p[1])]).collect()
}

fn geometry_report(cfg: &ExperimentConfig, kernel: &SmearedKernel) -> Result<InequalityReport, CliError> {
    let spec = &cfg.verify.geometry;
    let scan = geom_bound_scan(kernel, spec.samples, &spec.radii, cfg.seed)?;
    let mut table =
        Table::new("three_body_geometry", &["regime", "R", "sup", "samples", "x1", "y1", "x2", "y2", "x3", "y3"]);
    for row in &scan.rows {
        let mut cells = vec![row.regime.label().to_string(), num(row.radius), num(row.sup), row.samples.to_string()];
        cells.extend(triangle_cells(&row.witness));
        table.push(cells);
    }
    let all_long = scan.rows.iter().filter(|r| r.regime == Regime::AllLong).map(|r| r.sup).fold(0.0, f64::max);
    let mut checks = vec![Check::new(
        "all_long_cap",
        all_long <= 4.5 + 1e-9,
        format!("all-long sup {all_long} (cap 9/2)"),
    )];
    for regime in Regime::ALL {
        let spread = scan.spread(regime);
        checks.push(Check::new(
            format!("radius_stability {}", regime.label()),
            spread <= 2.0,
            format!("largest/smallest sup across R = {spread}"),
        ));
    }
    let overall = scan.overall_sup();
    checks.push(Check::new("bounded", overall.is_finite(), format!("overall sup {overall}")));
    let side = 3.0;
    let pts = [[0.0, 0.0], [side, 0.0], [0.5 * side, 0.5 * side * 3f64.sqrt()]];
    let (_, rho) = circumradius_rho(pts[0], pts[1], pts[2]);
    let eq = three_body_s(kernel, pts[0], pts[1], pts[2]) * rho * rho;
    checks.push(Check::new("equilateral_closed_form", (eq - 4.5).abs() <= 1e-10, format!("S·ρ² = {eq}")));
    Ok(InequalityReport {
        id: "three_body_geometry".into(),
        title: "Geometric three-body bound".into(),
        empirical_constant: overall,
        checks,
        table,
    })
}

fn hardy_report(cfg: &ExperimentConfig) -> Result<InequalityReport, CliError> {
    let spec = cfg.verify.hardy;
    let mut table = Table::new("three_particle_hardy", &["test", "lhs", "lhs_stderr", "rhs", "ratio"]);
    let mut checks = Vec::new();
    let family = hardy_family(spec.tests, cfg.seed);
    let estimates: Vec<_> =
        family.par_iter().enumerate().map(|(i, t)| hardy_mc(t, spec.samples, cfg.seed.wrapping_add(i as u64))).collect();
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for (i, est) in estimates.into_iter().enumerate() {
        match est {
            Ok(e) => {
                if !e.holds(3.0) {
                    violations += 1;
                }
                worst = worst.max(e.lhs / e.rhs);
                table.push(vec![i.to_string(), num(e.lhs), num(e.lhs_stderr), num(e.rhs), num(e.lhs / e.rhs)]);
            }
            Err(err) => checks.push(Check::new(format!("test {i}"), false, err.to_string())),
        }
    }
    checks.push(Check::new(
        "three_sigma",
        violations == 0,
        format!("{violations} of {} tests exceed rhs + 3σ; largest lhs/rhs {worst}", spec.tests),
    ));
    let iso = HardyTest::isotropic();
    let a = hardy_mc(&iso, spec.samples, cfg.seed)?;
    let b = hardy_mc(&iso.dilated(2.0), spec.samples, cfg.seed)?;
    let (ra, rb) = (a.lhs / a.rhs, b.lhs / b.rhs);
    let sigma = (a.lhs_stderr / a.rhs).hypot(b.lhs_stderr / b.rhs);
    checks.push(Check::new(
        "dilation_invariance",
        (ra - rb).abs() <= 3.0 * sigma,
        format!("ratios {ra} and {rb} (σ {sigma:e})"),
    ));
    checks.push(Check::new("isotropic_rhs", (a.rhs - 3.0).abs() <= 1e-12, format!("rhs {}", a.rhs)));
    let scan = circumradius_scan(spec.triangles, cfg.seed);
    checks.push(Check::new(
        "circumradius_bound",
        scan.max_ratio <= 1.0 + 1e-12,
        format!("largest ρ²/(9𝓡²) = {} over {} triangles", scan.max_ratio, scan.count),
    ));
    let (c, rho) = circumradius_rho([0.0, 0.0], [1.0, 0.0], [0.5, 0.5 * 3f64.sqrt()]);
    let eq = rho * rho / (9.0 * c * c);
    checks.push(Check::new("equilateral_equality", (eq - 1.0).abs() <= 1e-12, format!("ρ²/(9𝓡²) = {eq}")));
    Ok(InequalityReport {
        id: "three_particle_hardy".into(),
        title: "Three-particle Hardy inequality".into(),
        empirical_constant: worst,
        checks,
        table,
    })
}

fn singular_form_report(cfg: &ExperimentConfig, kernel: &SmearedKernel) -> Result<InequalityReport, CliError> {
    let spec = &cfg.verify.forms;
    let family = form_family(spec.family, cfg.seed);
    let scan = quadratic_form_ratios(kernel, &ExternalField::zero(), &spec.radii, &family, spec.side, cfg.seed)?;
    let mut table = Table::new("singular_form", &["R", "points", "sup", "witness", "hard_bound"]);
    let mut over = 0;
    for r in &scan.rows {
        if r.singular_sup > r.hard_bound * (1.0 + 1e-9) {
            over += 1;
        }
        table.push(vec![
            num(r.radius),
            r.points.to_string(),
            num(r.singular_sup),
            r.singular_witness.to_string(),
            num(r.hard_bound),
        ]);
    }
    let slope = scan.singular_slope;
    let mut checks = vec![
        Check::new("growth_slope", slope >= -0.2, format!("log-log slope against 1/R: {slope}")),
        Check::new("hard_bound", over == 0, format!("{over} radii exceed (sup v)²")),
    ];
    if slope.abs() > 0.2 {
        checks.push(Check::flagged(
            "slope_magnitude",
            format!("power-law slope {slope} exceeds 0.2 in magnitude; sups grow roughly like log(1/R) over this range"),
        ));
    }
    let constant = scan.rows.iter().map(|r| r.singular_sup).fold(0.0, f64::max);
    Ok(InequalityReport {
        id: "singular_form".into(),
        title: "Singular two-body form bound".into(),
        empirical_constant: constant,
        checks,
        table,
    })
}

fn mixed_form_report(cfg: &ExperimentConfig, kernel: &SmearedKernel) -> Result<InequalityReport, CliError> {
    let spec = &cfg.verify.forms;
    let family = form_family(spec.family, cfg.seed);
    let free = quadratic_form_ratios(kernel, &ExternalField::zero(), &spec.radii, &family, spec.side, cfg.seed)?;
    let fielded = quadratic_form_ratios(kernel, &spec.field, &spec.radii, &family, spec.side, cfg.seed)?;
    let mut table = Table::new("mixed_form", &["R", "sup_free", "witness_free", "sup_field", "witness_field"]);
    let mut worst_factor: f64 = 1.0;
    for (a, b) in free.rows.iter().zip(&fielded.rows) {
        let factor = (b.mixed_sup / a.mixed_sup).max(a.mixed_sup / b.mixed_sup);
        worst_factor = worst_factor.max(factor);
        table.push(vec![
            num(a.radius),
            num(a.mixed_sup),
            a.mixed_witness.to_string(),
            num(b.mixed_sup),
            b.mixed_witness.to_string(),
        ]);
    }
    let checks = vec![
        Check::new("growth_slope", free.mixed_slope >= -0.2, format!("log-log slope against 1/R: {}", free.mixed_slope)),
        Check::new(
            "growth_slope_with_field",
            fielded.mixed_slope >= -0.2,
            format!("log-log slope against 1/R: {}", fielded.mixed_slope),
        ),
        Check::new("field_robustness", worst_factor <= 2.0, format!("largest ratio between fields {worst_factor}")),
    ];
    let constant = free.rows.iter().chain(&fielded.rows).map(|r| r.mixed_sup).fold(0.0, f64::max);
    Ok(InequalityReport {
        id: "mixed_form".into(),
        title: "Mixed two-body form bound".into(),
        empirical_constant: constant,
        checks,
        table,
    })
}

fn magnetic_report(cfg: &ExperimentConfig, kernel: &SmearedKernel) -> Result<InequalityReport, CliError> {
    let spec = cfg.verify.magnetic;
    let grid = spec.grid.build()?;
    let results: Vec<_> = (0..spec.cases)
        .into_par_iter()
        .map(|k| magnetic_bound_check(&random_state(grid, cfg.seed, stream::MAGNETIC + k as u64), kernel))
        .collect();
    let mut table = Table::new("magnetic_term", &["case", "lhs", "rhs", "ratio", "bound"]);
    let mut failures = 0;
    let mut constant: f64 = 0.0;
    let mut checks = Vec::new();
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok(b) => {
                if !b.holds() {
                    failures += 1;
                }
                constant = constant.max(b.ratio / (b.norm_sq * b.norm_sq));
                table.push(vec![k.to_string(), num(b.lhs), num(b.rhs), num(b.ratio), num(b.bound)]);
            }
            Err(e) => checks.push(Check::new(format!("case {k}"), false, e.to_string())),
        }
    }
    checks.push(Check::new(
        "bound",
        failures == 0,
        format!("{failures} of {} states exceed 3/2·(1+{QUADRATURE_TOL:e}); largest ratio {constant}", spec.cases),
    ));
    let u = random_state(grid, cfg.seed, stream::MAGNETIC);
    let c = 1.7;
    let scaled = WaveFunction::new(grid, u.values().iter().map(|v| v * c).collect())?;
    let r1 = magnetic_bound_check(&u, kernel)?.ratio;
    let rc = magnetic_bound_check(&scaled, kernel)?.ratio;
    let err = (rc / (c.powi(4) * r1) - 1.0).abs();
    checks.push(Check::new("norm_homogeneity", err <= 1e-10, format!("ratio scales as ‖u‖⁴ to {err:e}")));
    Ok(InequalityReport { id: "magnetic_term".into(), title: "Magnetic-term bound".into(), empirical_constant: constant, checks, table })
}

fn diamagnetic_report(cfg: &ExperimentConfig) -> Result<InequalityReport, CliError> {
    let spec = cfg.verify.diamagnetic;
    let grid = spec.grid.build()?;
    let cases: Vec<SmoothCase> =
        (0..spec.cases).map(|k| SmoothCase::random(&mut stream_rng(cfg.seed, stream::DIAMAGNETIC + k as u64), grid.side())).collect();
    let runs: Vec<_> = cases.par_iter().map(|c| diamagnetic_refinement(c, grid)).collect();
    let mut table = Table::new(
        "diamagnetic",
        &["case", "coarse_violation", "fine_violation", "coarse_gap", "fine_gap", "real_gap", "real_expected"],
    );
    let mut not_shrinking = 0;
    let mut worst_violation: f64 = 0.0;
    let mut worst_real: f64 = 0.0;
    for (k, (case, r)) in cases.iter().zip(&runs).enumerate() {
        if !r.shrinks(4.0) {
            not_shrinking += 1;
        }
        worst_violation = worst_violation.max(r.coarse_violation);
        let modulus: Vec<Complex64> = case.state(grid).values().iter().map(|v| Complex64::new(v.norm(), 0.0)).collect();
        let real = WaveFunction::new(grid, modulus)?;
        let a = case.potential(&grid);
        let (lhs, rhs) = diamagnetic_check(&real, &a);
        let expected: f64 =
            real.values().iter().zip(a.magnitude_sq()).map(|(u, a2)| u.norm_sqr() * a2).sum::<f64>() * grid.cell();
        let gap = lhs - rhs;
        if gap < 0.0 {
            worst_real = f64::INFINITY;
        } else {
            worst_real = worst_real.max((gap - expected).abs() / lhs);
        }
        table.push(vec![
            k.to_string(),
            num(r.coarse_violation),
            num(r.fine_violation),
            num(r.coarse_gap),
            num(r.fine_gap),
            num(gap),
            num(expected),
        ]);
    }
    let checks = vec![
        Check::new(
            "refinement",
            not_shrinking == 0,
            format!("{not_shrinking} of {} cases keep a violation that shrinks less than 4×", spec.cases),
        ),
        Check::new(
            "real_state_nonnegative",
            worst_real <= 1e-10,
            format!("real states: gap equals h²Σ|A|²u² to {worst_real:e}"),
        ),
    ];
    Ok(InequalityReport {
        id: "diamagnetic".into(),
        title: "Diamagnetic inequality".into(),
        empirical_constant: worst_violation,
        checks,
        table,
    })
}

// ---------------------------------------------------------------------------
// fewbody
// ---------------------------------------------------------------------------

fn fewbody_suite(cfg: &ExperimentConfig, dir: &Path, m: &mut Manifest) -> Result<(), CliError> {
    let spec = &cfg.fewbody;
    let grid = spec.grid.build()?;
    let kernel = SmearedKernel::new(1.0)?;
    let schedule = cfg.schedule();
    let cells: Vec<(f64, f64)> = spec.betas.iter().flat_map(|&b| spec.radii.iter().map(move |&r| (b, r))).collect();
    let outputs: Vec<anyon_core::Result<CellOutput>> = cells
        .par_iter()
        .map(|&(beta, radius)| {
            let tcfg = TwoBodyConfig {
                grid,
                field: cfg.field.clone(),
                trap: cfg.trap,
                beta,
                radius,
                point_cap: spec.point_cap,
            };
            run_cell(&tcfg, &kernel, &schedule, cfg.tol)
        })
        .collect();

    let one_body = if spec.betas.contains(&0.0) {
        let problem = OneBodyProblem { grid, field: cfg.field.clone(), trap: cfg.trap };
        Some(one_body_ground(&problem, cfg.tol).map(|g| g.energy))
    } else {
        None
    };

    let cells_dir = dir.join("cells");
    fs::create_dir_all(&cells_dir)?;
    let mut table = Table::new(
        "fewbody",
        &[
            "beta", "R", "E2_half", "mf_energy", "af_energy", "gap", "fidelity", "apriori_lhs", "apriori_rhs",
            "apriori_ratio", "iterations", "flags",
        ],
    );
    let mut done = Vec::new();
    for (&(beta, radius), out) in cells.iter().zip(outputs) {
        let tag = format!("beta{beta}_R{radius}");
        let out = match out {
            Ok(o) => o,
            Err(e) => {
                m.checks.push(Check::new(format!("cell β={beta},R={radius}"), false, e.to_string()));
                table.push(vec![
                    num(beta),
                    num(radius),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    e.to_string(),
                ]);
                continue;
            }
        };
        let c = &out.cell;
        let slack = cfg.tol * c.e2_half.abs().max(1.0);
        m.checks.push(Check::new(
            format!("variational β={beta},R={radius}"),
            c.gap >= -slack,
            format!("E2/2 {} ≤ product energy {} (gap {:e})", c.e2_half, c.mf_energy, c.gap),
        ));
        m.checks.push(Check::new(
            format!("exchange_symmetry β={beta},R={radius}"),
            out.ground.asymmetry <= LEAK_TOL,
            format!("asymmetry {:e}", out.ground.asymmetry),
        ));
        m.checks.push(Check::new(
            format!("apriori_finite β={beta},R={radius}"),
            c.apriori.lhs.is_finite() && c.apriori.lhs > 0.0,
            format!("Tr[hγ¹] = {}", c.apriori.lhs),
        ));
        if beta == 0.0 {
            match &one_body {
                Some(Ok(e0)) => {
                    let rel = (c.e2_half - e0).abs() / e0.abs();
                    m.checks.push(Check::new(
                        format!("factorization R={radius}"),
                        rel <= 1e-6,
                        format!("E2/2 {} vs one-body {e0} (relative {rel:e})", c.e2_half),
                    ));
                }
                Some(Err(e)) => m.checks.push(Check::new(format!("factorization R={radius}"), false, e.to_string())),
                None => {}
            }
            m.checks.push(Check::new(
                format!("separable_fidelity R={radius}"),
                c.fidelity >= 1.0 - 10.0 * cfg.tol,
                format!("fidelity {}", c.fidelity),
            ));
        }
        table.push(vec![
            num(beta),
            num(radius),
            num(c.e2_half),
            num(c.mf_energy),
            num(c.af_energy),
            num(c.gap),
            num(c.fidelity),
            num(c.apriori.lhs),
            num(c.apriori.rhs),
            num(c.apriori.ratio),
            c.iterations.to_string(),
            c.flags.join("; "),
        ]);
        write_json(&cells_dir.join(format!("{tag}.json")), c, m)?;
        if spec.export {
            for (bin, json) in [
                export_two_body(&cells_dir.join(format!("{tag}_ground")), &out.ground.state)?,
                export_wavefunction(&cells_dir.join(format!("{tag}_minimizer")), &out.minimizer)?,
            ] {
                m.files.push(relative_name(&bin));
                m.files.push(relative_name(&json));
            }
        }
        done.push(out.cell);
    }
    m.tables.push(table);

    for &radius in &spec.radii {
        let mut row: Vec<_> = done.iter().filter(|c| c.radius == radius).collect();
        if row.len() < 2 {
            continue;
        }
        row.sort_by(|a, b| b.beta.total_cmp(&a.beta));
        let ok = row.windows(2).all(|w| w[1].fidelity >= w[0].fidelity - 10.0 * cfg.tol);
        let trail: Vec<String> = row.iter().map(|c| format!("β={}: {}", c.beta, c.fidelity)).collect();
        m.checks.push(Check::new(format!("fidelity_trend R={radius}"), ok, trail.join(", ")));
    }
    for &beta in &spec.betas {
        let ratios: Vec<f64> = done.iter().filter(|c| c.beta == beta).map(|c| c.apriori.ratio).collect();
        if ratios.len() < 2 {
            continue;
        }
        let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let spread = hi / lo - 1.0;
        m.checks.push(Check::new(
            format!("apriori_stability β={beta}"),
            spread <= spec.apriori_spread,
            format!("ratios in [{lo}, {hi}], spread {spread}"),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// weyl
// ---------------------------------------------------------------------------

fn weyl_suite(cfg: &ExperimentConfig, dir: &Path, m: &mut Manifest) -> Result<(), CliError> {
    let spec = &cfg.weyl;
    let grid = spec.grid.build()?;
    let problem = OneBodyProblem { grid, field: cfg.field.clone(), trap: cfg.trap };
    let fit = match weyl_fit(&problem, &spec.cutoffs) {
        Ok(f) => f,
        Err(e) => {
            m.checks.push(Check::new("weyl_fit", false, e.to_string()));
            return Ok(());
        }
    };
    let mut table = Table::new("weyl", &["Lambda", "N_Lambda"]);
    for c in &fit.counts {
        table.push(vec![num(c.cutoff), c.count.to_string()]);
    }
    m.tables.push(table);
    let target = 1.0 + 2.0 / cfg.trap.s;
    m.checks.push(Check::new(
        "exponent",
        (fit.exponent - target).abs() <= spec.exponent_tol,
        format!("fitted {} vs {target} ± {}", fit.exponent, spec.exponent_tol),
    ));
    let monotone = fit.counts.windows(2).all(|w| w[0].count <= w[1].count);
    m.checks.push(Check::new("counts_nondecreasing", monotone, "N_Λ along increasing Λ"));
    let harmonic = cfg.field.is_zero() && cfg.trap.c == 1.0 && cfg.trap.s == 2.0 && cfg.trap.offset == 0.0;
    if harmonic {
        let mismatches: Vec<String> = fit
            .counts
            .iter()
            .filter(|c| c.count != oscillator_count(c.cutoff))
            .map(|c| format!("Λ={}: {} vs {}", c.cutoff, c.count, oscillator_count(c.cutoff)))
            .collect();
        m.checks.push(Check::new(
            "oscillator_counts",
            mismatches.is_empty(),
            if mismatches.is_empty() { "all counts match".to_string() } else { mismatches.join(", ") },
        ));
        match count_levels(&problem, 10.0) {
            Ok(n) => m.checks.push(Check::new("oscillator_count_at_10", n == 10, format!("N_10 = {n}"))),
            Err(e) => m.checks.push(Check::new("oscillator_count_at_10", false, e.to_string())),
        }
    }
    write_json(&dir.join("weyl_fit.json"), &fit, m)
}
