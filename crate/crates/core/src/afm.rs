//! The average-field energy functional and its minimization.
//!
//! For a normalized `u` with density `ρ = |u|²` the functional is
//!
//! ```text
//! E[u] = ∫ |(−i∇ + A_e + βA^R[ρ]) u|² + V|u|²,   A^R[ρ] = ∇⊥w_R * ρ.
//! ```
//!
//! Expanding the square splits it into the external kinetic energy, the trap
//! energy, a mixed term `2β∫A^R·(J + A_eρ)` and the quartic term
//! `β²∫|A^R|²ρ`. Both assemblies are available and agree to roundoff.
//!
//! The self-generated potential is a free-space convolution evaluated with a
//! zero-padded FFT of twice the grid size against the sampled kernel.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{ExternalField, TrapPotential};
use crate::grid::{Fft2, Grid2D, Spectral2D, VectorField, WaveFunction};
use crate::kernel::SmearedKernel;
use crate::quad;

/// Linear convolution with `∇⊥w_R` (and `|∇w_R|²`) on a fixed grid.
#[derive(Debug, Clone)]
pub struct KernelConvolution {
    grid: Grid2D,
    fft: Fft2,
    perp_hat: Vec<Complex64>,
    perp_conj_hat: Vec<Complex64>,
    sq_hat: Vec<Complex64>,
}

impl KernelConvolution {
    pub fn new(kernel: &SmearedKernel, grid: Grid2D) -> Result<Self> {
        let h = grid.spacing();
        if kernel.radius() < 2.0 * h {
            return Err(Error::UnderResolved { radius: kernel.radius(), spacing: h });
        }
        let n = grid.points();
        let m = 2 * n;
        let offset = |a: usize| -> Option<f64> {
            match a.cmp(&n) {
                std::cmp::Ordering::Less => Some(a as f64 * h),
                std::cmp::Ordering::Equal => None,
                std::cmp::Ordering::Greater => Some((a as f64 - m as f64) * h),
            }
        };
        let zero = Complex64::new(0.0, 0.0);
        let mut perp = vec![zero; m * m];
        let mut perp_conj = vec![zero; m * m];
        let mut sq = vec![zero; m * m];
        for b in 0..m {
            let Some(dy) = offset(b) else { continue };
            for a in 0..m {
                let Some(dx) = offset(a) else { continue };
                let k = kernel.grad_perp([dx, dy]);
                let idx = b * m + a;
                perp[idx] = Complex64::new(k[0], k[1]);
                perp_conj[idx] = Complex64::new(k[0], -k[1]);
                sq[idx] = Complex64::new(k[0] * k[0] + k[1] * k[1], 0.0);
            }
        }
        let fft = Fft2::new(m);
        fft.forward(&mut perp);
        fft.forward(&mut perp_conj);
        fft.forward(&mut sq);
        Ok(Self { grid, fft, perp_hat: perp, perp_conj_hat: perp_conj, sq_hat: sq })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    fn convolve(&self, input: impl Fn(usize) -> Complex64, symbol: &[Complex64]) -> Vec<Complex64> {
        let n = self.grid.points();
        let m = 2 * n;
        let mut buf = vec![Complex64::new(0.0, 0.0); m * m];
        for iy in 0..n {
            for ix in 0..n {
                buf[iy * m + ix] = input(iy * n + ix);
            }
        }
        self.fft.forward(&mut buf);
        buf.iter_mut().zip(symbol).for_each(|(b, s)| *b *= s);
        self.fft.inverse(&mut buf);
        let cell = self.grid.cell();
        let mut out = Vec::with_capacity(n * n);
        for iy in 0..n {
            for ix in 0..n {
                out.push(buf[iy * m + ix] * cell);
            }
        }
        out
    }

    /// `A^R[ρ](x) = h²Σ_y ∇⊥w_R(x−y) ρ(y)`.
    pub fn self_potential(&self, rho: &[f64]) -> VectorField {
        let c = self.convolve(|i| Complex64::new(rho[i], 0.0), &self.perp_hat);
        VectorField { x: c.iter().map(|v| v.re).collect(), y: c.iter().map(|v| v.im).collect() }
    }

    /// `h²Σ_x ∇⊥w_R(y−x)·j(x)`.
    pub fn dot_convolve(&self, j: &VectorField) -> Vec<f64> {
        let c = self.convolve(|i| Complex64::new(j.x[i], j.y[i]), &self.perp_conj_hat);
        c.iter().map(|v| v.re).collect()
    }

    /// `h²Σ_x |∇w_R(y−x)|² ρ(x)`.
    pub fn singular(&self, rho: &[f64]) -> Vec<f64> {
        let c = self.convolve(|i| Complex64::new(rho[i], 0.0), &self.sq_hat);
        c.iter().map(|v| v.re).collect()
    }
}

/// Physical parameters of one average-field problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    pub grid: Grid2D,
    pub field: ExternalField,
    pub trap: TrapPotential,
    pub beta: f64,
    pub radius: f64,
}

impl FieldConfig {
    /// Harmonic trap, no external field.
    pub fn harmonic(grid: Grid2D, beta: f64, radius: f64) -> Self {
        Self { grid, field: ExternalField::zero(), trap: TrapPotential::default(), beta, radius }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub kinetic: f64,
    pub potential: f64,
    pub mixed: f64,
    pub quartic: f64,
    pub total: f64,
}

/// `j = Re(ū(−i∇u)) + A|u|²` from precomputed spectral derivatives.
fn current_from(u: &[Complex64], du: &[Vec<Complex64>; 2], a: &VectorField) -> VectorField {
    let comp = |c: usize| -> Vec<f64> {
        let ac = a.component(c);
        u.iter()
            .zip(&du[c])
            .zip(ac)
            .map(|((v, d), &av)| (v.conj() * Complex64::new(0.0, -1.0) * d).re + av * v.norm_sqr())
            .collect()
    };
    VectorField { x: comp(0), y: comp(1) }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagneticLowerBound {
    /// `∫|(−i∇ + A_tot)u|²`.
    pub kinetic: f64,
    /// `|∫(B_e + 2πβ χ_R*ρ)ρ|`.
    pub flux: f64,
}

impl MagneticLowerBound {
    /// `kinetic ≥ flux` up to a relative quadrature budget `tol`.
    pub fn holds(&self, tol: f64) -> bool {
        self.kinetic >= self.flux * (1.0 - tol) - tol
    }
}

/// Paramagnetic current plus `A_tot|u|²`, with spectral derivatives.
pub fn current(spectral: &Spectral2D, u: &WaveFunction, a_tot: &VectorField) -> VectorField {
    let du = spectral.gradient(u.values());
    current_from(u.values(), &du, a_tot)
}

/// Evaluator for the functional of a fixed [`FieldConfig`].
#[derive(Debug, Clone)]
pub struct AverageFieldFunctional {
    cfg: FieldConfig,
    spectral: Spectral2D,
    external: VectorField,
    trap: Vec<f64>,
    conv: KernelConvolution,
}

struct Evaluation {
    breakdown: EnergyBreakdown,
    total_potential: VectorField,
    covariant: [Vec<Complex64>; 2],
    nyquist: Vec<Complex64>,
}

impl AverageFieldFunctional {
    pub fn new(cfg: FieldConfig) -> Result<Self> {
        let kernel = SmearedKernel::new(cfg.radius)?;
        Self::with_kernel(cfg, &kernel)
    }

    /// Reuses the radial table of `kernel`, rescaled to `cfg.radius`.
    pub fn with_kernel(cfg: FieldConfig, kernel: &SmearedKernel) -> Result<Self> {
        cfg.field.check_resolution(&cfg.grid)?;
        let kernel = kernel.rescaled(cfg.radius)?;
        let conv = KernelConvolution::new(&kernel, cfg.grid)?;
        Ok(Self {
            spectral: Spectral2D::new(cfg.grid),
            external: cfg.field.sample(&cfg.grid),
            trap: cfg.trap.sample(&cfg.grid),
            conv,
            cfg,
        })
    }

    pub fn config(&self) -> &FieldConfig {
        &self.cfg
    }

    pub fn spectral(&self) -> &Spectral2D {
        &self.spectral
    }

    pub fn convolution(&self) -> &KernelConvolution {
        &self.conv
    }

    pub fn external_potential(&self) -> &VectorField {
        &self.external
    }

    pub fn trap_values(&self) -> &[f64] {
        &self.trap
    }

    pub fn self_potential(&self, rho: &[f64]) -> VectorField {
        self.conv.self_potential(rho)
    }

    fn evaluate(&self, u: &WaveFunction) -> Evaluation {
        let cell = self.cfg.grid.cell();
        let beta = self.cfg.beta;
        let vals = u.values();
        let rho = u.density();
        let a_self = if beta == 0.0 { VectorField::zeros(rho.len()) } else { self.conv.self_potential(&rho) };
        let du = self.spectral.gradient(vals);
        let nyquist = self.spectral.nyquist_kinetic(vals);

        let (mut kinetic, mut mixed, mut quartic, mut potential) = (0.0, 0.0, 0.0, 0.0);
        let mut cov = [du[0].clone(), du[1].clone()];
        let minus_i = Complex64::new(0.0, -1.0);
        for i in 0..vals.len() {
            let v = vals[i];
            for c in 0..2 {
                let ext = minus_i * du[c][i] + self.external.component(c)[i] * v;
                kinetic += ext.norm_sqr();
                let ar = a_self.component(c)[i];
                mixed += ar * (v.conj() * ext).re;
                quartic += ar * ar * rho[i];
                cov[c][i] = ext + beta * ar * v;
            }
            kinetic += (v.conj() * nyquist[i]).re;
            potential += self.trap[i] * rho[i];
        }
        let breakdown = EnergyBreakdown {
            kinetic: kinetic * cell,
            potential: potential * cell,
            mixed: 2.0 * beta * mixed * cell,
            quartic: beta * beta * quartic * cell,
            total: 0.0,
        };
        let breakdown = EnergyBreakdown {
            total: breakdown.kinetic + breakdown.potential + breakdown.mixed + breakdown.quartic,
            ..breakdown
        };
        Evaluation { breakdown, total_potential: self.external.add_scaled(&a_self, beta), covariant: cov, nyquist }
    }

    /// Energy split into kinetic, trap, mixed and quartic parts.
    pub fn energy(&self, u: &WaveFunction) -> EnergyBreakdown {
        self.evaluate(u).breakdown
    }

    /// `h²Σ|(−i∇ + A_e + βA^R)u|² + h²ΣV|u|²`, assembled without expanding the square.
    pub fn energy_direct(&self, u: &WaveFunction) -> f64 {
        let rho = u.density();
        let a_tot = self.external.add_scaled(&self.conv.self_potential(&rho), self.cfg.beta);
        let du = self.spectral.gradient(u.values());
        let nyquist = self.spectral.nyquist_kinetic(u.values());
        let minus_i = Complex64::new(0.0, -1.0);
        let mut sum = 0.0;
        for (i, v) in u.values().iter().enumerate() {
            sum += (v.conj() * nyquist[i]).re;
            for c in 0..2 {
                sum += (minus_i * du[c][i] + a_tot.component(c)[i] * v).norm_sqr();
            }
            sum += self.trap[i] * rho[i];
        }
        sum * self.cfg.grid.cell()
    }

    /// Total vector potential `A_e + βA^R[|u|²]`.
    pub fn total_potential(&self, u: &WaveFunction) -> VectorField {
        self.external.add_scaled(&self.conv.self_potential(&u.density()), self.cfg.beta)
    }

    /// Energy together with the variational gradient `G(u)`, normalized so that
    /// `dE[u + tδ]/dt = 2 Re⟨G(u), δ⟩` at `t = 0`.
    pub fn energy_and_gradient(&self, u: &WaveFunction) -> (EnergyBreakdown, Vec<Complex64>) {
        let ev = self.evaluate(u);
        let vals = u.values();
        let a_tot = &ev.total_potential;
        let [wx, wy] = &ev.covariant;
        let mut g = self.spectral.momentum_divergence(wx, wy);
        for i in 0..vals.len() {
            g[i] += a_tot.x[i] * wx[i] + a_tot.y[i] * wy[i] + self.trap[i] * vals[i] + ev.nyquist[i];
        }
        let beta = self.cfg.beta;
        if beta != 0.0 {
            // j_c = Re(ū·(D_c u)) with the total potential
            let j = VectorField {
                x: vals.iter().zip(wx).map(|(v, w)| (v.conj() * w).re).collect(),
                y: vals.iter().zip(wy).map(|(v, w)| (v.conj() * w).re).collect(),
            };
            let phi = self.conv.dot_convolve(&j);
            for i in 0..vals.len() {
                g[i] += -2.0 * beta * phi[i] * vals[i];
            }
        }
        (ev.breakdown, g)
    }

    pub fn gradient(&self, u: &WaveFunction) -> Vec<Complex64> {
        self.energy_and_gradient(u).1
    }

    /// Mean angular momentum `h²Σ ū(−i)(x∂ᵧ − y∂ₓ)u`.
    pub fn angular_momentum(&self, u: &WaveFunction) -> f64 {
        let du = self.spectral.gradient(u.values());
        let grid = self.cfg.grid;
        let mut sum = 0.0;
        for (i, v) in u.values().iter().enumerate() {
            let [x, y] = grid.position(i);
            sum += (v.conj() * Complex64::new(0.0, -1.0) * (x * du[1][i] - y * du[0][i])).re;
        }
        sum * grid.cell()
    }

    /// Per-particle energy of the product state `u^{⊗N}` for the smeared
    /// `N`-body Hamiltonian with coupling `β/(N−1)`.
    pub fn product_state_energy(&self, u: &WaveFunction, particles: usize) -> Result<f64> {
        if particles < 2 {
            return Err(Error::InvalidParameter(format!("product state needs N ≥ 2, got {particles}")));
        }
        let e = self.energy(u);
        let nm1 = (particles - 1) as f64;
        let three_body = (particles - 2) as f64 / nm1;
        let beta = self.cfg.beta;
        let singular = if beta == 0.0 { 0.0 } else { self.singular_term(u) };
        Ok(e.kinetic + e.potential + e.mixed + three_body * e.quartic + beta * beta / nm1 * singular)
    }

    /// Both sides of `∫|(∇ + iA_tot)u|² ≥ |∫ curl(A_tot)|u|²|`, the
    /// magnetic kinetic energy against the flux it encloses. The curl is taken
    /// by central differences on the interior.
    pub fn magnetic_lower_bound(&self, u: &WaveFunction) -> MagneticLowerBound {
        let e = self.energy(u);
        let grid = self.cfg.grid;
        let curl = crate::fields::discrete_curl(&grid, &self.total_potential(u));
        let flux: f64 = curl.iter().zip(u.density()).map(|(b, r)| b * r).sum::<f64>() * grid.cell();
        MagneticLowerBound { kinetic: e.total - e.potential, flux: flux.abs() }
    }

    /// `∫∫|∇w_R(x−y)|² ρ(x)ρ(y)`.
    pub fn singular_term(&self, u: &WaveFunction) -> f64 {
        let rho = u.density();
        let s = self.conv.singular(&rho);
        self.cfg.grid.cell() * rho.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// Projected-gradient stopping and step parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_step() -> f64 {
    1.0
}

fn default_max_iter() -> usize {
    50_000
}

fn default_tol() -> f64 {
    1e-8
}

impl Default for Schedule {
    fn default() -> Self {
        Self { step: default_step(), max_iter: default_max_iter(), tol: default_tol() }
    }
}

/// Energy and angular momentum of a located minimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub energy: f64,
    pub angular_momentum: f64,
}

#[derive(Debug, Clone)]
pub struct MinimizeOutcome {
    pub state: WaveFunction,
    pub energy: EnergyBreakdown,
    pub iterations: usize,
    /// `‖G(u) − λu‖` at the returned state.
    pub residual: f64,
    pub multiplier: f64,
    pub converged: bool,
    pub trace: Vec<f64>,
    pub fingerprint: Fingerprint,
}

/// Trap-adapted normalized Gaussian.
pub fn initial_state(cfg: &FieldConfig) -> WaveFunction {
    let c = cfg.trap.c;
    let s = cfg.trap.s;
    let b0 = cfg.field.b0;
    let width = if (s - 2.0).abs() < 1e-12 {
        (c + 0.25 * b0 * b0).powf(-0.25)
    } else {
        c.powf(-1.0 / (s + 2.0))
    };
    WaveFunction::gaussian(cfg.grid, [0.0, 0.0], width)
}

fn dot(cell: f64, a: &[Complex64], b: &[Complex64]) -> Complex64 {
    cell * a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<Complex64>()
}

/// Roundoff scale below which energy comparisons are not meaningful.
const ENERGY_SLACK: f64 = 1e-12;

/// Projected preconditioned gradient descent on the unit sphere.
///
/// Directions are preconditioned by `(|k|² + c₀)⁻¹` and projected onto the
/// tangent space of the constraint. Steps are seeded Barzilai–Borwein style
/// and accepted by Armijo backtracking. Once the predicted decrease falls
/// under the roundoff level the energy test is relaxed to nonincrease within
/// `1e-12` relative.
pub fn minimize(functional: &AverageFieldFunctional, init: &WaveFunction, schedule: &Schedule) -> Result<MinimizeOutcome> {
    let cell = functional.config().grid.cell();
    let spectral = functional.spectral();
    let mut u = init.clone();
    u.normalize();

    let (mut e, mut g) = functional.energy_and_gradient(&u);
    let shift = e.total.abs().max(1.0);
    let mut trace = vec![e.total];
    let mut step = schedule.step;
    let mut prev: Option<(Vec<Complex64>, Vec<Complex64>)> = None;
    let mut iterations = 0;
    let mut residual;
    let mut lambda;

    loop {
        lambda = dot(cell, u.values(), &g).re;
        let r: Vec<Complex64> = g.iter().zip(u.values()).map(|(gi, ui)| gi - lambda * ui).collect();
        residual = dot(cell, &r, &r).re.sqrt();
        if residual <= schedule.tol || iterations >= schedule.max_iter {
            break;
        }

        if let Some((u_old, r_old)) = &prev {
            let s: Vec<Complex64> = u.values().iter().zip(u_old).map(|(a, b)| a - b).collect();
            let y: Vec<Complex64> = r.iter().zip(r_old).map(|(a, b)| a - b).collect();
            let mut ps = s.clone();
            // P⁻¹ s = (|k|² + c₀) s
            apply_inverse_preconditioner(spectral, &mut ps, shift);
            let sy = dot(cell, &s, &y).re;
            let sps = dot(cell, &s, &ps).re;
            if sy > 0.0 && sps > 0.0 {
                step = (sps / sy).clamp(1e-3 * schedule.step, 1e3 * schedule.step);
            }
        }

        let mut d = r.clone();
        spectral.precondition(&mut d, shift);
        let overlap = dot(cell, u.values(), &d);
        d.iter_mut().zip(u.values()).for_each(|(di, ui)| *di -= overlap * ui);
        let slope = 2.0 * dot(cell, &r, &d).re;
        if !(slope > 0.0) {
            break;
        }

        let mut t = step;
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial = u.clone();
            trial.values_mut().iter_mut().zip(&d).for_each(|(v, di)| *v -= t * di);
            trial.normalize();
            let et = functional.energy(&trial).total;
            let roundoff = ENERGY_SLACK * e.total.abs().max(1.0);
            let armijo = et <= e.total - 1e-4 * t * slope;
            let flat = t * slope < roundoff && et <= e.total + roundoff;
            if armijo || flat {
                accepted = Some(trial);
                break;
            }
            t *= 0.5;
        }
        let Some(next) = accepted else {
            return Err(Error::StepCollapse { iteration: iterations, step: t });
        };
        prev = Some((u.values().to_vec(), r));
        u = next;
        let (en, gn) = functional.energy_and_gradient(&u);
        e = en;
        g = gn;
        trace.push(e.total);
        iterations += 1;
    }

    u.fix_phase();
    let (e, _) = functional.energy_and_gradient(&u);
    let fingerprint = Fingerprint { energy: e.total, angular_momentum: functional.angular_momentum(&u) };
    Ok(MinimizeOutcome {
        converged: residual <= schedule.tol,
        state: u,
        energy: e,
        iterations,
        residual,
        multiplier: lambda,
        trace,
        fingerprint,
    })
}

fn apply_inverse_preconditioner(spectral: &Spectral2D, u: &mut [Complex64], shift: f64) {
    let grid = spectral.grid();
    let n = grid.points();
    spectral.fft().forward(u);
    for iy in 0..n {
        let ky = grid.wavenumber(iy);
        for ix in 0..n {
            let kx = grid.wavenumber(ix);
            u[iy * n + ix] *= kx * kx + ky * ky + shift;
        }
    }
    spectral.fft().inverse(u);
}

/// One row of an R-ladder study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub radius: f64,
    pub energy: Option<f64>,
    pub diff: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub rows: Vec<StudyRow>,
    /// Log-log slope of `|E_R − E_{R_min}|` against `R`, when at least two
    /// nonzero differences exist.
    pub slope: Option<f64>,
}

impl ConvergenceStudy {
    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(|r| r.converged && r.error.is_none())
    }
}

/// Minimizes the functional along a decreasing ladder of radii with warm starts.
pub fn convergence_study(base: &FieldConfig, radii: &[f64], schedule: &Schedule) -> Result<ConvergenceStudy> {
    if radii.is_empty() {
        return Err(Error::InsufficientData("empty radius list".into()));
    }
    let mut radii = radii.to_vec();
    radii.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let kernel = SmearedKernel::new(radii[0])?;
    let mut rows = Vec::with_capacity(radii.len());
    let mut warm = initial_state(base);
    for &radius in &radii {
        let cfg = FieldConfig { radius, ..base.clone() };
        let outcome = AverageFieldFunctional::with_kernel(cfg, &kernel).and_then(|f| minimize(&f, &warm, schedule));
        match outcome {
            Ok(out) => {
                rows.push(StudyRow {
                    radius,
                    energy: Some(out.energy.total),
                    diff: None,
                    iterations: out.iterations,
                    converged: out.converged,
                    error: None,
                });
                warm = out.state;
            }
            Err(err) => rows.push(StudyRow {
                radius,
                energy: None,
                diff: None,
                iterations: 0,
                converged: false,
                error: Some(err.to_string()),
            }),
        }
    }
    let reference = rows.iter().rev().find_map(|r| r.energy.map(|e| (r.radius, e)));
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    if let Some((r_min, e_min)) = reference {
        for row in rows.iter_mut() {
            if let Some(e) = row.energy {
                let diff = (e - e_min).abs();
                row.diff = Some(diff);
                if row.radius > r_min && diff > 0.0 {
                    xs.push(row.radius.ln());
                    ys.push(diff.ln());
                }
            }
        }
    }
    let slope = if xs.len() >= 2 { Some(quad::fit_slope(&xs, &ys)?) } else { None };
    Ok(ConvergenceStudy { rows, slope })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_state(grid: Grid2D, seed: u64) -> WaveFunction {
        // smooth random state: Gaussian envelope times a few random plane waves
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let modes: Vec<(f64, f64, f64, f64)> =
            (0..4).map(|_| (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(0.0..2.0 * PI), rng.random_range(0.2..1.0))).collect();
        let c = [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
        let mut u = WaveFunction::from_fn(grid, |p| {
            let env = (-((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)) / 1.5).exp();
            let mut s = Complex64::new(0.0, 0.0);
            for &(kx, ky, ph, a) in &modes {
                s += a * Complex64::from_polar(1.0, kx * p[0] + ky * p[1] + ph);
            }
            env * s
        });
        u.normalize();
        u
    }

    fn grid64() -> Grid2D {
        Grid2D::new(8.0, 64).unwrap()
    }

    #[test]
    fn harmonic_gaussian_energy() {
        let g = Grid2D::new(12.0, 64).unwrap();
        let f = AverageFieldFunctional::new(FieldConfig::harmonic(g, 0.0, 0.5)).unwrap();
        let u = WaveFunction::gaussian(g, [0.0, 0.0], 1.0);
        let e = f.energy(&u);
        assert!((e.total - 2.0).abs() < 1e-9, "{}", e.total);
        assert!((e.kinetic - 1.0).abs() < 1e-9);
    }

    #[test]
    fn breakdown_sums_and_matches_direct() {
        let g = grid64();
        let mut cfg = FieldConfig::harmonic(g, 1.5, 0.25);
        cfg.field = ExternalField::symmetric_gauge(0.7);
        let f = AverageFieldFunctional::new(cfg).unwrap();
        let u = random_state(g, 3);
        let e = f.energy(&u);
        let sum = e.kinetic + e.potential + e.mixed + e.quartic;
        assert!((sum - e.total).abs() <= 1e-12 * e.total.abs());
        let direct = f.energy_direct(&u);
        assert!((direct - e.total).abs() <= 1e-10 * direct.abs(), "{direct} {}", e.total);
    }

    #[test]
    fn real_radial_state_has_no_mixed_term() {
        let g = grid64();
        let f = AverageFieldFunctional::new(FieldConfig::harmonic(g, 2.0, 0.25)).unwrap();
        let u = WaveFunction::gaussian(g, [0.0, 0.0], 0.8);
        let e = f.energy(&u);
        assert!(e.mixed.abs() < 1e-14);
        assert!(e.quartic > 0.0);
    }

    #[test]
    fn self_potential_zero_density_and_newton() {
        let g = Grid2D::new(8.0, 512).unwrap();
        let conv = KernelConvolution::new(&SmearedKernel::new(0.5).unwrap(), g).unwrap();
        let a = conv.self_potential(&vec![0.0; g.len()]);
        assert!(a.x.iter().chain(&a.y).all(|&v| v == 0.0));

        // narrow Gaussian: all but e^{-25} of the mass lies within r = 2
        let u = WaveFunction::gaussian(g, [0.0, 0.0], 0.4);
        let rho = u.density();
        let a = conv.self_potential(&rho);
        for i in g.interior(3.9) {
            let [x, y] = g.position(i);
            let r = x.hypot(y);
            let mag = a.x[i].hypot(a.y[i]);
            if r > 0.0 {
                let radial = (a.x[i] * x + a.y[i] * y) / r;
                assert!(radial.abs() <= 1e-8 * mag, "r={r} radial={radial} mag={mag}");
            }
            if (3.0..3.9).contains(&r) {
                assert!((mag * r - 1.0).abs() < 1e-10, "r={r} {}", mag * r);
            }
        }
    }

    #[test]
    fn self_potential_matches_direct_sum() {
        let g = grid64();
        let kernel = SmearedKernel::new(0.25).unwrap();
        let conv = KernelConvolution::new(&kernel, g).unwrap();
        let u = WaveFunction::gaussian(g, [0.3, -0.2], 0.9);
        let rho = u.density();
        let a = conv.self_potential(&rho);
        let cell = g.cell();
        let mut worst: f64 = 0.0;
        for i in (0..g.len()).step_by(7) {
            let xi = g.position(i);
            let (mut sx, mut sy) = (0.0, 0.0);
            for (j, &rj) in rho.iter().enumerate() {
                let xj = g.position(j);
                let k = kernel.grad_perp([xi[0] - xj[0], xi[1] - xj[1]]);
                sx += k[0] * rj;
                sy += k[1] * rj;
            }
            worst = worst.max((a.x[i] - sx * cell).abs()).max((a.y[i] - sy * cell).abs());
        }
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn under_resolved_radius_is_rejected() {
        let g = grid64();
        let err = AverageFieldFunctional::new(FieldConfig::harmonic(g, 1.0, 0.2)).unwrap_err();
        assert!(matches!(err, Error::UnderResolved { .. }));
    }

    #[test]
    fn current_of_plane_wave() {
        let g = Grid2D::new(2.0 * PI, 32).unwrap();
        let sp = Spectral2D::new(g);
        let k = [2.0, -1.0];
        let u = WaveFunction::from_fn(g, |p| Complex64::from_polar(1.0 + 0.3 * p[0].cos(), k[0] * p[0] + k[1] * p[1]));
        let a = VectorField::from_fn(&g, |p| [0.5, p[0].sin()]);
        let j = current(&sp, &u, &a);
        for i in 0..g.len() {
            let rho = u.values()[i].norm_sqr();
            assert!((j.x[i] - (k[0] + a.x[i]) * rho).abs() < 1e-10);
            assert!((j.y[i] - (k[1] + a.y[i]) * rho).abs() < 1e-10);
        }
        let real = WaveFunction::gaussian(g, [0.0, 0.0], 0.7);
        let j0 = current(&sp, &real, &VectorField::zeros(g.len()));
        assert!(j0.x.iter().chain(&j0.y).all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let g = grid64();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &beta in &[0.0, 1.0, -4.0] {
            let mut cfg = FieldConfig::harmonic(g, beta, 0.25);
            cfg.field = ExternalField::symmetric_gauge(0.5);
            let f = AverageFieldFunctional::new(cfg).unwrap();
            let u = random_state(g, 5);
            let grad = f.gradient(&u);
            for _ in 0..3 {
                let dir = random_state(g, rng.random());
                let eps = 1e-5;
                let shift = |s: f64| {
                    let vals = u.values().iter().zip(dir.values()).map(|(a, b)| a + s * b).collect();
                    WaveFunction::new(g, vals).unwrap()
                };
                let fd = (f.energy(&shift(eps)).total - f.energy(&shift(-eps)).total) / (2.0 * eps);
                let an = 2.0 * dot(g.cell(), &grad, dir.values()).re;
                assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0), "beta={beta} fd={fd} an={an}");
            }
        }
    }

    #[test]
    fn zero_coupling_gradient_is_linear_operator() {
        let g = grid64();
        let f = AverageFieldFunctional::new(FieldConfig::harmonic(g, 0.0, 0.25)).unwrap();
        let u = random_state(g, 8);
        let grad = f.gradient(&u);
        let lap = {
            let [dx, dy] = f.spectral().gradient(u.values());
            let dxx = f.spectral().derivative(&dx, 0);
            let dyy = f.spectral().derivative(&dy, 1);
            dxx.iter().zip(&dyy).map(|(a, b)| -(a + b)).collect::<Vec<_>>()
        };
        let nyq = f.spectral().nyquist_kinetic(u.values());
        for i in 0..g.len() {
            let expect = lap[i] + nyq[i] + f.trap_values()[i] * u.values()[i];
            assert!((grad[i] - expect).norm() < 1e-9);
        }
    }

    #[test]
    fn conjugation_flips_coupling() {
        let g = grid64();
        let plus = AverageFieldFunctional::new(FieldConfig::harmonic(g, 1.3, 0.25)).unwrap();
        let minus = AverageFieldFunctional::new(FieldConfig::harmonic(g, -1.3, 0.25)).unwrap();
        let u = random_state(g, 21);
        let a = plus.energy(&u).total;
        let b = minus.energy(&u.conj()).total;
        assert!((a - b).abs() <= 1e-12 * a.abs());
    }

    #[test]
    fn product_state_energy_structure() {
        let g = grid64();
        let f = AverageFieldFunctional::new(FieldConfig::harmonic(g, 1.0, 0.25)).unwrap();
        let u = random_state(g, 4);
        let e = f.energy(&u);
        let s = f.singular_term(&u);
        let two = f.product_state_energy(&u, 2).unwrap();
        assert!((two - (e.kinetic + e.potential + e.mixed + s)).abs() < 1e-12 * two.abs());
        let mut prev = f64::INFINITY;
        for &n in &[4usize, 16, 64, 256] {
            let en = f.product_state_energy(&u, n).unwrap();
            let dev = ((en - e.total) * (n - 1) as f64 - (s - e.quartic)).abs();
            assert!(dev < 1e-9 * e.total.abs().max(1.0));
            let gap = (en - e.total).abs();
            assert!(gap < prev);
            prev = gap;
        }
        assert!(f.product_state_energy(&u, 1).is_err());
        let free = AverageFieldFunctional::new(FieldConfig::harmonic(g, 0.0, 0.25)).unwrap();
        let one = free.energy(&u).total;
        assert!((free.product_state_energy(&u, 5).unwrap() - one).abs() < 1e-14 * one);
    }

    #[test]
    fn minimizer_harmonic_ground_state() {
        let g = Grid2D::new(8.0, 64).unwrap();
        let f = AverageFieldFunctional::new(FieldConfig::harmonic(g, 0.0, 0.25)).unwrap();
        let init = WaveFunction::gaussian(g, [0.4, 0.1], 0.6);
        let out = minimize(&f, &init, &Schedule::default()).unwrap();
        assert!(out.converged, "residual {}", out.residual);
        // box truncation at L = 8 shifts the discrete ground energy by ~1e-6
        assert!((out.energy.total - 2.0).abs() < 1e-5);
        assert!((out.state.norm_sq() - 1.0).abs() < 1e-12);
        let slack = 1e-12 * 2.0;
        assert!(out.trace.windows(2).all(|w| w[1] <= w[0] + slack));
        // stationarity
        let grad = f.gradient(&out.state);
        let lam = dot(g.cell(), out.state.values(), &grad).re;
        let res: f64 = grad.iter().zip(out.state.values()).map(|(a, b)| (a - lam * b).norm_sqr()).sum::<f64>() * g.cell();
        assert!(res.sqrt() <= 1e-8);
    }

    #[test]
    fn minimizer_conjugation_symmetry() {
        let g = Grid2D::new(8.0, 64).unwrap();
        let sched = Schedule { tol: 1e-7, ..Schedule::default() };
        let a = {
            let f = AverageFieldFunctional::new(FieldConfig::harmonic(g, 1.0, 0.25)).unwrap();
            minimize(&f, &initial_state(f.config()), &sched).unwrap()
        };
        let b = {
            let f = AverageFieldFunctional::new(FieldConfig::harmonic(g, -1.0, 0.25)).unwrap();
            minimize(&f, &initial_state(f.config()), &sched).unwrap()
        };
        assert!((a.energy.total - b.energy.total).abs() < 1e-9);
    }

    #[test]
    fn zero_coupling_study_is_flat() {
        let g = Grid2D::new(8.0, 64).unwrap();
        let study = convergence_study(&FieldConfig::harmonic(g, 0.0, 0.5), &[0.5, 0.25], &Schedule::default()).unwrap();
        let e: Vec<f64> = study.rows.iter().map(|r| r.energy.unwrap()).collect();
        assert!((e[0] - e[1]).abs() < 1e-12);
    }

    #[test]
    fn study_flags_under_resolved_rows() {
        let g = Grid2D::new(8.0, 64).unwrap();
        let study = convergence_study(&FieldConfig::harmonic(g, 1.0, 0.5), &[0.5, 0.1], &Schedule::default()).unwrap();
        assert!(study.rows[1].error.is_some());
        assert!(!study.all_converged());
    }

    #[test]
    fn lowest_landau_level_saturates_flux_bound() {
        let g = Grid2D::new(12.0, 128).unwrap();
        let b0 = 1.5;
        let cfg = FieldConfig { field: ExternalField::symmetric_gauge(b0), ..FieldConfig::harmonic(g, 0.0, 0.5) };
        let f = AverageFieldFunctional::new(cfg).unwrap();
        let u = WaveFunction::gaussian(g, [0.0, 0.0], (2.0 / b0).sqrt());
        let bound = f.magnetic_lower_bound(&u);
        assert!((bound.kinetic - b0).abs() < 1e-6, "{bound:?}");
        assert!((bound.flux - b0).abs() < 1e-6, "{bound:?}");
    }

    #[test]
    fn flux_bound_holds_on_random_states() {
        let g = Grid2D::new(8.0, 64).unwrap();
        for (seed, beta) in [(1, 2.0), (2, -3.0), (3, 0.5)] {
            let cfg = FieldConfig { field: ExternalField::symmetric_gauge(1.0), ..FieldConfig::harmonic(g, beta, 0.5) };
            let f = AverageFieldFunctional::new(cfg).unwrap();
            let bound = f.magnetic_lower_bound(&random_state(g, seed));
            assert!(bound.holds(1e-3), "{bound:?}");
        }
    }
}
