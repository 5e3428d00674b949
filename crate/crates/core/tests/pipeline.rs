//! Multi-module pipelines: minimize and export, run a two-body cell, count levels.

use anyon_core::afm::{initial_state, minimize, AverageFieldFunctional, FieldConfig, Schedule};
use anyon_core::export::{export_two_body, export_wavefunction, read_array};
use anyon_core::fewbody::{run_cell, TwoBodyConfig};
use anyon_core::fields::TrapPotential;
use anyon_core::spectral::{phase_space_count, weyl_fit, OneBodyProblem};
use anyon_core::{Grid2D, SmearedKernel, WaveFunction};

#[test]
fn minimizer_survives_export_at_single_precision() {
    let grid = Grid2D::new(8.0, 64).unwrap();
    let cfg = FieldConfig::harmonic(grid, 1.0, 0.5);
    let f = AverageFieldFunctional::new(cfg.clone()).unwrap();
    let out = minimize(&f, &initial_state(&cfg), &Schedule::default()).unwrap();
    assert!(out.converged);
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("u");
    export_wavefunction(&stem, &out.state).unwrap();
    let (header, values) = read_array(&stem).unwrap();
    assert_eq!(header.shape, vec![64, 64]);
    assert_eq!(header.spacing, grid.spacing());
    let back = WaveFunction::new(grid, values).unwrap();
    let e = f.energy(&back).total;
    assert!((e - out.energy.total).abs() < 1e-5 * out.energy.total, "{e} vs {}", out.energy.total);
}

#[test]
fn two_body_cell_respects_the_variational_bound() {
    let grid = Grid2D::new(4.0, 16).unwrap();
    let cfg = TwoBodyConfig::harmonic(grid, 0.5, 0.5);
    let out = run_cell(&cfg, &SmearedKernel::new(1.0).unwrap(), &Schedule::default(), 1e-8).unwrap();
    let c = &out.cell;
    assert!(c.gap >= -1e-8 * c.e2_half.abs().max(1.0), "{c:?}");
    assert!(c.fidelity > 0.0 && c.fidelity <= 1.0 + 1e-12);
    assert!(c.apriori.lhs.is_finite() && c.apriori.lhs > 0.0);
    let dir = tempfile::tempdir().unwrap();
    export_two_body(&dir.path().join("psi"), &out.ground.state).unwrap();
    let (header, values) = read_array(&dir.path().join("psi")).unwrap();
    assert_eq!(header.shape, vec![16, 16, 16, 16]);
    assert_eq!(values.len(), 16usize.pow(4));
}

#[test]
fn quartic_trap_follows_weyl_growth() {
    let problem = OneBodyProblem {
        grid: Grid2D::new(8.0, 64).unwrap(),
        field: Default::default(),
        trap: TrapPotential::new(1.0, 4.0, 0.0).unwrap(),
    };
    let fit = weyl_fit(&problem, &[10.0, 20.0, 40.0, 80.0]).unwrap();
    assert!((fit.exponent - 1.5).abs() <= 0.2, "{}", fit.exponent);
    let last = fit.counts.last().unwrap();
    let semiclassical = phase_space_count(&problem, last.cutoff);
    let ratio = last.count as f64 / semiclassical;
    assert!((0.75..1.25).contains(&ratio), "{} vs {semiclassical}", last.count);
}
