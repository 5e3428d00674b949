//! The one-body magnetic Schrödinger operator `h = (−i∇ + A_e)² + V` on the
//! grid: ground states, level counting below a cutoff and power-law fits of
//! the counting function.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::afm::FieldConfig;
use crate::eigen::{self, FilterOptions, HermitianOperator, LobpcgOptions};
use crate::error::{Error, Result};
use crate::fields::{ExternalField, TrapPotential};
use crate::grid::{Grid2D, Spectral2D, VectorField, WaveFunction};
use crate::quad;

/// How levels are counted; recorded in run metadata.
pub const COUNT_METHOD: &str = "Chebyshev-filtered subspace iteration with dense Rayleigh-Ritz";

/// Eigenvalues within this relative distance of the cutoff are treated as
/// lying on it and are not counted.
pub const CUTOFF_GUARD: f64 = 1e-6;

/// Ground energies shifting by more than this under refinement are flagged.
pub const REFINEMENT_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneBodyProblem {
    pub grid: Grid2D,
    pub field: ExternalField,
    pub trap: TrapPotential,
}

impl OneBodyProblem {
    pub fn harmonic(grid: Grid2D) -> Self {
        Self { grid, field: ExternalField::zero(), trap: TrapPotential::default() }
    }

    pub fn refined(&self) -> Self {
        Self { grid: self.grid.refined(), ..self.clone() }
    }
}

impl From<&FieldConfig> for OneBodyProblem {
    fn from(cfg: &FieldConfig) -> Self {
        Self { grid: cfg.grid, field: cfg.field.clone(), trap: cfg.trap }
    }
}

/// Matrix-free `(−i∇ + A)² + V` with spectral derivatives.
#[derive(Debug, Clone)]
pub struct MagneticOperator {
    spectral: Spectral2D,
    a: VectorField,
    v: Vec<f64>,
    upper: f64,
}

impl MagneticOperator {
    pub fn new(problem: &OneBodyProblem) -> Self {
        let grid = problem.grid;
        let a = problem.field.sample(&grid);
        let v = problem.trap.sample(&grid);
        let kmax = PI / grid.spacing();
        let amax = |c: &[f64]| c.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let vmax = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let upper = (kmax + amax(&a.x)).powi(2) + (kmax + amax(&a.y)).powi(2) + vmax;
        Self { spectral: Spectral2D::new(grid), a, v, upper }
    }

    pub fn grid(&self) -> &Grid2D {
        self.spectral.grid()
    }

    /// `⟨u, h u⟩` with the grid quadrature weight.
    pub fn expectation(&self, u: &WaveFunction) -> f64 {
        let mut out = vec![Complex64::new(0.0, 0.0); u.values().len()];
        self.apply(u.values(), &mut out);
        self.grid().cell() * eigen::dot(u.values(), &out).re
    }
}

impl HermitianOperator for MagneticOperator {
    fn dim(&self) -> usize {
        self.v.len()
    }

    fn apply(&self, x: &[Complex64], out: &mut [Complex64]) {
        let [gx, gy] = self.spectral.gradient(x);
        let mi = Complex64::new(0.0, -1.0);
        let wx: Vec<Complex64> = gx.iter().zip(x).zip(&self.a.x).map(|((g, u), a)| mi * g + a * u).collect();
        let wy: Vec<Complex64> = gy.iter().zip(x).zip(&self.a.y).map(|((g, u), a)| mi * g + a * u).collect();
        let div = self.spectral.momentum_divergence(&wx, &wy);
        let nyq = self.spectral.nyquist_kinetic(x);
        for i in 0..x.len() {
            out[i] = div[i] + nyq[i] + self.a.x[i] * wx[i] + self.a.y[i] * wy[i] + self.v[i] * x[i];
        }
    }

    fn precondition(&self, r: &mut [Complex64], shift: f64) {
        self.spectral.precondition(r, shift.abs().max(1.0));
    }

    fn upper_bound(&self) -> f64 {
        self.upper
    }
}

#[derive(Debug, Clone)]
pub struct GroundState {
    pub energy: f64,
    pub state: WaveFunction,
    pub iterations: usize,
}

/// Lowest eigenpair of the discrete `h` to relative eigenvalue tolerance `tol`.
pub fn one_body_ground(problem: &OneBodyProblem, tol: f64) -> Result<GroundState> {
    let op = MagneticOperator::new(problem);
    let cfg = FieldConfig { grid: problem.grid, field: problem.field.clone(), trap: problem.trap, beta: 0.0, radius: 0.0 };
    let init = crate::afm::initial_state(&cfg);
    let opts = LobpcgOptions { tol, ..LobpcgOptions::default() };
    let res = eigen::lobpcg(&op, 1, &[init.into_values()], &opts)?;
    let mut state = WaveFunction::new(problem.grid, res.vectors.into_iter().next().expect("one vector"))?;
    state.normalize();
    state.fix_phase();
    Ok(GroundState { energy: res.values[0], state, iterations: res.iterations })
}

/// `|E0(n) − E0(2n)|` at fixed box size.
pub fn ground_refinement_shift(problem: &OneBodyProblem, tol: f64) -> Result<f64> {
    let coarse = one_body_ground(problem, tol)?;
    let fine = one_body_ground(&problem.refined(), tol)?;
    Ok((coarse.energy - fine.energy).abs())
}

/// Largest cutoff for which the discrete spectrum is trusted, `0.5·π²/h²`.
pub fn trusted_cutoff(grid: &Grid2D) -> f64 {
    0.5 * PI * PI / grid.spacing().powi(2)
}

fn check_cutoff(problem: &OneBodyProblem, cutoff: f64) -> Result<()> {
    let trusted = trusted_cutoff(&problem.grid);
    if !cutoff.is_finite() || cutoff > trusted {
        return Err(Error::Reliability { cutoff, trusted });
    }
    let wall = problem.trap.boundary_min(&problem.grid);
    if cutoff >= wall {
        return Err(Error::InvalidParameter(format!(
            "cutoff {cutoff} reaches the trap value {wall} on the box boundary; enlarge the box"
        )));
    }
    Ok(())
}

/// Semiclassical level count `(4π)⁻¹∫(Λ − V)₊`, which ignores the field.
pub fn phase_space_count(problem: &OneBodyProblem, cutoff: f64) -> f64 {
    let grid = &problem.grid;
    problem.trap.sample(grid).iter().map(|v| (cutoff - v).max(0.0)).sum::<f64>() * grid.cell() / (4.0 * PI)
}

fn block_guess(problem: &OneBodyProblem, cutoff: f64, dim: usize) -> usize {
    ((1.1 * phase_space_count(problem, cutoff)) as usize).clamp(8, dim)
}

/// All eigenvalues strictly below `cutoff` (outside the guard band), ascending.
pub fn levels_below(problem: &OneBodyProblem, cutoff: f64) -> Result<Vec<f64>> {
    check_cutoff(problem, cutoff)?;
    let op = MagneticOperator::new(problem);
    let limit = cutoff - CUTOFF_GUARD * cutoff.abs().max(1.0);
    let guess = block_guess(problem, cutoff, op.dim());
    let opts = FilterOptions { guess, ..FilterOptions::default() };
    let res = eigen::lowest_below(&op, limit, &opts)?;
    Ok(res.values)
}

/// Number of eigenvalues of the discrete `h` below `cutoff`.
pub fn count_levels(problem: &OneBodyProblem, cutoff: f64) -> Result<usize> {
    Ok(levels_below(problem, cutoff)?.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelCount {
    pub cutoff: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeylFit {
    pub exponent: f64,
    /// `C` in `N_Λ ≈ C Λ^exponent`.
    pub prefactor: f64,
    pub counts: Vec<LevelCount>,
    pub trusted_cutoff: f64,
    pub method: String,
}

/// Least-squares slope of `ln N_Λ` against `ln Λ`. The spectrum is extracted
/// once up to the largest cutoff and counted for every entry.
pub fn weyl_fit(problem: &OneBodyProblem, cutoffs: &[f64]) -> Result<WeylFit> {
    if cutoffs.len() < 4 {
        return Err(Error::InsufficientData(format!("need at least 4 cutoffs, got {}", cutoffs.len())));
    }
    let mut sorted = cutoffs.to_vec();
    sorted.sort_by(f64::total_cmp);
    for &c in &sorted {
        check_cutoff(problem, c)?;
    }
    let top = *sorted.last().expect("nonempty");
    let op = MagneticOperator::new(problem);
    let guess = block_guess(problem, top, op.dim());
    let spectrum = eigen::lowest_below(&op, top, &FilterOptions { guess, ..FilterOptions::default() })?.values;
    let counts: Vec<LevelCount> = sorted
        .iter()
        .map(|&c| {
            let limit = c - CUTOFF_GUARD * c.abs().max(1.0);
            LevelCount { cutoff: c, count: spectrum.iter().filter(|&&e| e <= limit).count() }
        })
        .collect();
    if counts.iter().any(|c| c.count == 0) {
        return Err(Error::InsufficientData("a cutoff lies below the ground energy".into()));
    }
    let x: Vec<f64> = counts.iter().map(|c| c.cutoff.ln()).collect();
    let y: Vec<f64> = counts.iter().map(|c| (c.count as f64).ln()).collect();
    let exponent = quad::fit_slope(&x, &y)?;
    let mx = x.iter().sum::<f64>() / x.len() as f64;
    let my = y.iter().sum::<f64>() / y.len() as f64;
    let prefactor = (my - exponent * mx).exp();
    Ok(WeylFit {
        exponent,
        prefactor,
        counts,
        trusted_cutoff: trusted_cutoff(&problem.grid),
        method: COUNT_METHOD.to_string(),
    })
}

/// Closed-form count of oscillator states `Σ_{2(k+1) < Λ} (k+1)` for
/// `V = |x|²` without field.
pub fn oscillator_count(cutoff: f64) -> usize {
    (0..).take_while(|k| 2.0 * (*k as f64 + 1.0) < cutoff).map(|k| k + 1).sum()
}
