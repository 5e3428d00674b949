//! Exact diagonalization of the smeared two-particle Hamiltonian
//!
//! ```text
//! H₂ = Σ_j (p_j + A_e(x_j) + α∇⊥w_R(x_j − x_k))² + V(x_j),   α = β,
//! ```
//!
//! on the tensor grid `x₁ ⊗ x₂`, and its comparison with the average-field
//! prediction. Values are stored with the particle-1 index fastest, so a
//! fixed particle-2 index selects a contiguous 2D slice.
//!
//! The one-particle blocks use the same covariant-derivative discretization
//! as [`crate::afm`], which makes `⟨u⊗u, H₂ u⊗u⟩/2` equal to the product-state
//! energy of the functional to roundoff.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::afm::{minimize, AverageFieldFunctional, FieldConfig, Schedule};
use crate::eigen::{self, HermitianOperator, LobpcgOptions};
use crate::error::{Error, Result};
use crate::fields::{ExternalField, TrapPotential};
use crate::grid::{Grid2D, Spectral2D, VectorField, WaveFunction};
use crate::kernel::SmearedKernel;

/// Default cap on grid points per dimension (the state has `n⁴` entries).
pub const DEFAULT_POINT_CAP: usize = 40;

/// Largest tolerated exchange asymmetry of a converged ground state.
pub const LEAK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoBodyConfig {
    pub grid: Grid2D,
    pub field: ExternalField,
    pub trap: TrapPotential,
    pub beta: f64,
    pub radius: f64,
    pub point_cap: usize,
}

impl TwoBodyConfig {
    pub fn harmonic(grid: Grid2D, beta: f64, radius: f64) -> Self {
        Self { grid, field: ExternalField::zero(), trap: TrapPotential::default(), beta, radius, point_cap: DEFAULT_POINT_CAP }
    }

    /// The matching one-body functional configuration.
    pub fn field_config(&self) -> FieldConfig {
        FieldConfig { grid: self.grid, field: self.field.clone(), trap: self.trap, beta: self.beta, radius: self.radius }
    }
}

/// Bosonic two-particle wave function on the tensor grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoBodyState {
    grid: Grid2D,
    values: Vec<Complex64>,
}

/// `out[i₁ + M i₂] = data[i₂ + M i₁]`: exchange of the two particles.
fn swap_particles(data: &[Complex64], m: usize) -> Vec<Complex64> {
    const BLOCK: usize = 32;
    let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
    for b2 in (0..m).step_by(BLOCK) {
        for b1 in (0..m).step_by(BLOCK) {
            for i2 in b2..(b2 + BLOCK).min(m) {
                for i1 in b1..(b1 + BLOCK).min(m) {
                    out[i1 + m * i2] = data[i2 + m * i1];
                }
            }
        }
    }
    out
}

impl TwoBodyState {
    pub fn new(grid: Grid2D, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() * grid.len() {
            return Err(Error::InvalidParameter(format!(
                "two-body state needs {} values, got {}",
                grid.len() * grid.len(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    /// `u ⊗ v`.
    pub fn product(u: &WaveFunction, v: &WaveFunction) -> Self {
        let mut values = Vec::with_capacity(u.values().len() * v.values().len());
        for b in v.values() {
            values.extend(u.values().iter().map(|a| a * b));
        }
        Self { grid: *u.grid(), values }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// `h⁴Σ|ψ|²`.
    pub fn norm_sq(&self) -> f64 {
        self.grid.cell().powi(2) * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()
    }

    pub fn normalize(&mut self) {
        let s = 1.0 / self.norm_sq().sqrt();
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    pub fn swapped(&self) -> Self {
        Self { grid: self.grid, values: swap_particles(&self.values, self.grid.len()) }
    }

    /// `‖ψ − Swap ψ‖ / ‖ψ‖`.
    pub fn asymmetry(&self) -> f64 {
        let s = swap_particles(&self.values, self.grid.len());
        let diff: f64 = self.values.iter().zip(&s).map(|(a, b)| (a - b).norm_sqr()).sum();
        let norm: f64 = self.values.iter().map(|v| v.norm_sqr()).sum();
        (diff / norm).sqrt()
    }

    /// `(ψ + Swap ψ)/2`.
    pub fn symmetrized(&self) -> Self {
        let s = swap_particles(&self.values, self.grid.len());
        Self { grid: self.grid, values: self.values.iter().zip(&s).map(|(a, b)| 0.5 * (a + b)).collect() }
    }

    /// `h⁴ Σ φ̄ψ`.
    pub fn inner(&self, other: &TwoBodyState) -> Complex64 {
        self.grid.cell().powi(2) * eigen::dot(&self.values, &other.values)
    }
}

/// Matrix-free `H₂` on a fixed grid.
#[derive(Debug, Clone)]
pub struct TwoBodyHamiltonian {
    cfg: TwoBodyConfig,
    spectral: Spectral2D,
    a_ext: VectorField,
    trap: Vec<f64>,
    /// `∇⊥w_R` on the `(2n−1)²` table of grid offsets.
    offsets: VectorField,
    upper: f64,
}

impl TwoBodyHamiltonian {
    pub fn new(cfg: TwoBodyConfig, kernel: &SmearedKernel) -> Result<Self> {
        let grid = cfg.grid;
        let n = grid.points();
        if n > cfg.point_cap {
            return Err(Error::MemoryBudget { points: n, cap: cfg.point_cap });
        }
        let h = grid.spacing();
        if cfg.beta != 0.0 && cfg.radius < 2.0 * h * (1.0 - 1e-12) {
            return Err(Error::UnderResolved { radius: cfg.radius, spacing: h });
        }
        cfg.field.check_resolution(&grid)?;
        let k = kernel.rescaled(cfg.radius.max(f64::MIN_POSITIVE))?;
        let width = 2 * n - 1;
        let mut offsets = VectorField::zeros(width * width);
        for dy in 0..width {
            for dx in 0..width {
                let d = [(dx as f64 - (n - 1) as f64) * h, (dy as f64 - (n - 1) as f64) * h];
                let g = k.grad_perp(d);
                offsets.x[dy * width + dx] = g[0];
                offsets.y[dy * width + dx] = g[1];
            }
        }
        let a_ext = cfg.field.sample(&grid);
        let trap = cfg.trap.sample(&grid);
        let kmax = std::f64::consts::PI / h;
        let amax = a_ext.x.iter().chain(&a_ext.y).fold(0.0f64, |m, v| m.max(v.abs())) + cfg.beta.abs() * k.sup_v();
        let vmax = trap.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let upper = 2.0 * (2.0 * (kmax + amax).powi(2) + vmax);
        Ok(Self { spectral: Spectral2D::new(grid), cfg, a_ext, trap, offsets, upper })
    }

    pub fn config(&self) -> &TwoBodyConfig {
        &self.cfg
    }

    fn offset_index(&self, i1: usize, i2: usize) -> usize {
        let n = self.cfg.grid.points();
        let width = 2 * n - 1;
        let dx = i1 % n + (n - 1) - i2 % n;
        let dy = i1 / n + (n - 1) - i2 / n;
        dy * width + dx
    }

    /// `(p + A_e + α K)² + V` acting on particle 1 with coupling `alpha`.
    fn apply_first(&self, psi: &[Complex64], out: &mut [Complex64], alpha: f64) {
        let m = self.cfg.grid.len();
        let mi = Complex64::new(0.0, -1.0);
        out.par_chunks_mut(m).zip(psi.par_chunks(m)).enumerate().for_each(|(i2, (o, s))| {
            let [gx, gy] = self.spectral.gradient(s);
            let mut ax = vec![0.0; m];
            let mut ay = vec![0.0; m];
            for i1 in 0..m {
                let d = self.offset_index(i1, i2);
                ax[i1] = self.a_ext.x[i1] + alpha * self.offsets.x[d];
                ay[i1] = self.a_ext.y[i1] + alpha * self.offsets.y[d];
            }
            let wx: Vec<Complex64> = (0..m).map(|i| mi * gx[i] + ax[i] * s[i]).collect();
            let wy: Vec<Complex64> = (0..m).map(|i| mi * gy[i] + ay[i] * s[i]).collect();
            let div = self.spectral.momentum_divergence(&wx, &wy);
            let nyq = self.spectral.nyquist_kinetic(s);
            for i in 0..m {
                o[i] = div[i] + nyq[i] + ax[i] * wx[i] + ay[i] * wy[i] + self.trap[i] * s[i];
            }
        });
    }

    /// `H₂ψ` for an arbitrary (not necessarily symmetric) state.
    pub fn apply(&self, psi: &TwoBodyState) -> TwoBodyState {
        let m = self.cfg.grid.len();
        let mut first = vec![Complex64::new(0.0, 0.0); psi.values.len()];
        self.apply_first(&psi.values, &mut first, self.cfg.beta);
        let swapped = swap_particles(&psi.values, m);
        let mut second = vec![Complex64::new(0.0, 0.0); psi.values.len()];
        self.apply_first(&swapped, &mut second, self.cfg.beta);
        let second = swap_particles(&second, m);
        TwoBodyState { grid: psi.grid, values: first.iter().zip(&second).map(|(a, b)| a + b).collect() }
    }

    /// `⟨ψ, (h ⊗ 1)ψ⟩` with the one-body `h = (p + A_e)² + V`, i.e. `Tr[hγ]`
    /// for normalized `ψ`.
    pub fn one_body_trace(&self, psi: &TwoBodyState) -> f64 {
        let mut out = vec![Complex64::new(0.0, 0.0); psi.values.len()];
        self.apply_first(&psi.values, &mut out, 0.0);
        self.cfg.grid.cell().powi(2) * eigen::dot(&psi.values, &out).re
    }
}

/// `H₂` restricted to the exchange-symmetric sector.
struct SymmetricSector<'a> {
    ham: &'a TwoBodyHamiltonian,
    /// `|k|²` per grid index for the preconditioner.
    k2: Vec<f64>,
}

impl SymmetricSector<'_> {
    fn new(ham: &TwoBodyHamiltonian) -> SymmetricSector<'_> {
        let grid = ham.cfg.grid;
        let n = grid.points();
        let k2 = (0..grid.len()).map(|i| grid.wavenumber(i % n).powi(2) + grid.wavenumber(i / n).powi(2)).collect();
        SymmetricSector { ham, k2 }
    }

    fn transform_slices(&self, data: &mut [Complex64], forward: bool) {
        let m = self.ham.cfg.grid.len();
        let fft = self.ham.spectral.fft();
        data.par_chunks_mut(m).for_each(|s| if forward { fft.forward(s) } else { fft.inverse(s) });
    }
}

impl HermitianOperator for SymmetricSector<'_> {
    fn dim(&self) -> usize {
        self.ham.cfg.grid.len().pow(2)
    }

    fn apply(&self, x: &[Complex64], out: &mut [Complex64]) {
        let m = self.ham.cfg.grid.len();
        let mut first = vec![Complex64::new(0.0, 0.0); x.len()];
        self.ham.apply_first(x, &mut first, self.ham.cfg.beta);
        let second = swap_particles(&first, m);
        for i in 0..x.len() {
            out[i] = first[i] + second[i];
        }
    }

    /// `(|k₁|² + |k₂|² + c)⁻¹` by a 4D transform.
    fn precondition(&self, r: &mut [Complex64], shift: f64) {
        let m = self.ham.cfg.grid.len();
        let c = shift.abs().max(1.0);
        self.transform_slices(r, true);
        let mut t = swap_particles(r, m);
        self.transform_slices(&mut t, true);
        // after the swap the slice index is particle 1, the inner index particle 2
        t.par_chunks_mut(m).enumerate().for_each(|(i1, s)| {
            for (i2, v) in s.iter_mut().enumerate() {
                *v /= self.k2[i1] + self.k2[i2] + c;
            }
        });
        self.transform_slices(&mut t, false);
        let back = swap_particles(&t, m);
        r.copy_from_slice(&back);
        self.transform_slices(r, false);
    }

    fn project(&self, x: &mut [Complex64]) {
        let s = swap_particles(x, self.ham.cfg.grid.len());
        for (a, b) in x.iter_mut().zip(&s) {
            *a = 0.5 * (*a + b);
        }
    }

    fn upper_bound(&self) -> f64 {
        self.ham.upper
    }
}

#[derive(Debug, Clone)]
pub struct TwoBodyGround {
    pub energy: f64,
    pub state: TwoBodyState,
    pub iterations: usize,
    /// Lowest Ritz value after each iteration.
    pub history: Vec<f64>,
    pub asymmetry: f64,
}

/// Lowest eigenpair of `H₂` in the bosonic sector. Every iterate is
/// symmetrized; a converged state with exchange asymmetry above
/// [`LEAK_TOL`] is an error.
pub fn ground_energy_2body(ham: &TwoBodyHamiltonian, initial: Option<&TwoBodyState>, tol: f64) -> Result<TwoBodyGround> {
    let op = SymmetricSector::new(ham);
    let grid = ham.cfg.grid;
    let seed = match initial {
        Some(s) => s.values.clone(),
        None => {
            let cfg = ham.cfg.field_config();
            let u = crate::afm::initial_state(&cfg);
            TwoBodyState::product(&u, &u).values
        }
    };
    let opts = LobpcgOptions { tol, max_iter: 1000, ..LobpcgOptions::default() };
    let res = eigen::lobpcg(&op, 1, &[seed], &opts)?;
    let mut state = TwoBodyState::new(grid, res.vectors.into_iter().next().expect("one vector"))?;
    state.normalize();
    let asymmetry = state.asymmetry();
    if asymmetry > LEAK_TOL {
        return Err(Error::SymmetryLeak(asymmetry));
    }
    Ok(TwoBodyGround { energy: res.values[0], state, iterations: res.iterations, history: res.history, asymmetry })
}

/// One-body reduced density `γ(x, x') = h²Σ_y ψ(x, y) ψ̄(x', y)` as a dense
/// matrix in the grid basis, normalized so `h²Σ γ(x, x) = 1` for unit `ψ`.
#[derive(Debug, Clone)]
pub struct ReducedDensity {
    pub grid: Grid2D,
    pub matrix: DMatrix<Complex64>,
}

pub fn reduced_density(psi: &TwoBodyState) -> ReducedDensity {
    let m = psi.grid.len();
    let cell = psi.grid.cell();
    let mat = DMatrix::from_column_slice(m, m, &psi.values);
    let matrix = (&mat * mat.adjoint()) * Complex64::new(cell, 0.0);
    ReducedDensity { grid: psi.grid, matrix }
}

impl ReducedDensity {
    pub fn trace(&self) -> f64 {
        self.grid.cell() * self.matrix.diagonal().iter().map(|v| v.re).sum::<f64>()
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Occupation numbers (eigenvalues of `γ` as an operator), descending.
    pub fn occupations(&self) -> Vec<f64> {
        let scaled = &self.matrix * Complex64::new(self.grid.cell(), 0.0);
        let mut vals: Vec<f64> = scaled.symmetric_eigenvalues().iter().cloned().collect();
        vals.sort_by(|a, b| b.total_cmp(a));
        vals
    }

    /// `⟨u, γu⟩`.
    pub fn expectation(&self, u: &WaveFunction) -> f64 {
        let v = DMatrix::from_column_slice(u.values().len(), 1, u.values());
        let c = self.grid.cell();
        (v.adjoint() * &self.matrix * &v)[(0, 0)].re * c * c
    }
}

/// `⟨u, γ¹u⟩ = h²Σ_y |h²Σ_x ū(x)ψ(x, y)|²` without forming `γ¹`.
pub fn fidelity(psi: &TwoBodyState, u: &WaveFunction) -> f64 {
    let m = psi.grid.len();
    let cell = psi.grid.cell();
    let un = u.norm_sq();
    psi.values
        .chunks(m)
        .map(|slice| (cell * eigen::dot(u.values(), slice)).norm_sqr())
        .sum::<f64>()
        * cell
        / un
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AprioriCheck {
    /// `Tr[((p + A_e)² + V)γ¹]`.
    pub lhs: f64,
    /// `(1 + β)E^af_R`.
    pub rhs: f64,
    pub ratio: f64,
}

pub fn apriori_kinetic_check(ham: &TwoBodyHamiltonian, psi: &TwoBodyState, af_energy: f64) -> AprioriCheck {
    let lhs = ham.one_body_trace(psi) / psi.norm_sq();
    let rhs = (1.0 + ham.cfg.beta) * af_energy;
    AprioriCheck { lhs, rhs, ratio: lhs / rhs }
}

/// One `(β, R)` comparison between exact diagonalization and the
/// average-field minimizer on the same grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewBodyCell {
    pub beta: f64,
    #[serde(rename = "R")]
    pub radius: f64,
    /// `E^R(2)/2`.
    #[serde(rename = "E2_half")]
    pub e2_half: f64,
    /// Product-state energy of the minimizer, per particle.
    pub mf_energy: f64,
    /// Minimum of the average-field functional.
    pub af_energy: f64,
    /// `mf_energy − e2_half`, nonnegative by the variational principle.
    pub gap: f64,
    pub fidelity: f64,
    pub apriori: AprioriCheck,
    pub iterations: usize,
    pub flags: Vec<String>,
}

pub struct CellOutput {
    pub cell: FewBodyCell,
    pub ground: TwoBodyGround,
    pub minimizer: WaveFunction,
}

/// Minimizes the functional, diagonalizes `H₂` from the minimizer's product
/// state and compares.
pub fn run_cell(cfg: &TwoBodyConfig, kernel: &SmearedKernel, schedule: &Schedule, tol: f64) -> Result<CellOutput> {
    let ham = TwoBodyHamiltonian::new(cfg.clone(), kernel)?;
    let mut fcfg = cfg.field_config();
    if cfg.beta == 0.0 {
        // the kernel is inert at β = 0 but the convolution still needs a resolved radius
        fcfg.radius = fcfg.radius.max(2.0 * cfg.grid.spacing());
    }
    let functional = AverageFieldFunctional::with_kernel(fcfg.clone(), kernel)?;
    let init = crate::afm::initial_state(&fcfg);
    let outcome = minimize(&functional, &init, schedule)?;
    let mut flags = Vec::new();
    if !outcome.converged {
        flags.push(format!("minimizer stopped at residual {:.3e}", outcome.residual));
    }
    let u = outcome.state;
    let mf_energy = functional.product_state_energy(&u, 2)?;
    let trial = TwoBodyState::product(&u, &u);
    let ground = ground_energy_2body(&ham, Some(&trial), tol)?;
    let e2_half = 0.5 * ground.energy;
    let apriori = apriori_kinetic_check(&ham, &ground.state, outcome.energy.total);
    let cell = FewBodyCell {
        beta: cfg.beta,
        radius: cfg.radius,
        e2_half,
        mf_energy,
        af_energy: outcome.energy.total,
        gap: mf_energy - e2_half,
        fidelity: fidelity(&ground.state, &u),
        apriori,
        iterations: ground.iterations,
        flags,
    };
    Ok(CellOutput { cell, ground, minimizer: u })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{one_body_ground, OneBodyProblem};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> Grid2D {
        Grid2D::new(4.0, 16).unwrap()
    }

    fn kernel() -> SmearedKernel {
        SmearedKernel::new(1.0).unwrap()
    }

    fn random_symmetric(grid: Grid2D, seed: u64) -> TwoBodyState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let env = WaveFunction::gaussian(grid, [0.0, 0.0], 0.8);
        let m = grid.len();
        let mut values = Vec::with_capacity(m * m);
        for i2 in 0..m {
            for i1 in 0..m {
                let z = Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
                values.push(z * env.values()[i1] * env.values()[i2]);
            }
        }
        let mut s = TwoBodyState::new(grid, values).unwrap().symmetrized();
        s.normalize();
        s
    }

    fn field() -> ExternalField {
        ExternalField::symmetric_gauge(0.7)
    }

    fn config(beta: f64) -> TwoBodyConfig {
        TwoBodyConfig { field: field(), ..TwoBodyConfig::harmonic(grid(), beta, 0.5) }
    }

    #[test]
    fn hermitian_and_symmetry_preserving() {
        let ham = TwoBodyHamiltonian::new(config(1.0), &kernel()).unwrap();
        let phi = random_symmetric(grid(), 1);
        let psi = random_symmetric(grid(), 2);
        let hpsi = ham.apply(&psi);
        let hphi = ham.apply(&phi);
        let a = phi.inner(&hpsi);
        let b = hphi.inner(&psi);
        assert!((a - b).norm() < 1e-10 * a.norm().max(1.0), "{a} {b}");
        assert!(hpsi.asymmetry() < 1e-12);
        let op = SymmetricSector::new(&ham);
        let mut out = vec![Complex64::new(0.0, 0.0); psi.values().len()];
        op.apply(psi.values(), &mut out);
        let diff = out.iter().zip(hpsi.values()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-10 * hpsi.values().iter().map(|v| v.norm()).fold(0.0, f64::max));
    }

    #[test]
    fn product_state_matches_functional() {
        for &beta in &[0.0, 1.0, -2.0] {
            let cfg = config(beta);
            let ham = TwoBodyHamiltonian::new(cfg.clone(), &kernel()).unwrap();
            let functional = AverageFieldFunctional::with_kernel(cfg.field_config(), &kernel()).unwrap();
            let u = WaveFunction::from_fn(grid(), |x| {
                Complex64::from_polar((-0.6 * (x[0] * x[0] + x[1] * x[1])).exp(), 0.8 * x[0] - 0.3 * x[1] * x[1])
            });
            let mut u = u;
            u.normalize();
            let psi = TwoBodyState::product(&u, &u);
            let direct = 0.5 * psi.inner(&ham.apply(&psi)).re;
            let formula = functional.product_state_energy(&u, 2).unwrap();
            assert!((direct - formula).abs() < 1e-10 * formula.abs(), "β={beta}: {direct} vs {formula}");
        }
    }

    #[test]
    fn noninteracting_ground_state_factorizes() {
        let cfg = config(0.0);
        let ham = TwoBodyHamiltonian::new(cfg, &kernel()).unwrap();
        let g = ground_energy_2body(&ham, None, 1e-10).unwrap();
        let one = one_body_ground(&OneBodyProblem { grid: grid(), field: field(), trap: TrapPotential::default() }, 1e-10).unwrap();
        assert!((g.energy - 2.0 * one.energy).abs() < 1e-6 * g.energy, "{} {}", g.energy, one.energy);
        let fid = fidelity(&g.state, &one.state);
        assert!(fid > 1.0 - 1e-8, "{fid}");
        assert!(g.history.windows(2).all(|w| w[1] <= w[0] + 1e-10));
        let check = apriori_kinetic_check(&ham, &g.state, one.energy);
        assert!((check.ratio - 1.0).abs() < 1e-6);
    }

    #[test]
    fn variational_bound_holds_for_random_product_states() {
        let cfg = config(1.0);
        let ham = TwoBodyHamiltonian::new(cfg.clone(), &kernel()).unwrap();
        let functional = AverageFieldFunctional::with_kernel(cfg.field_config(), &kernel()).unwrap();
        let g = ground_energy_2body(&ham, None, 1e-9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..4 {
            let c = [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
            let w = rng.random_range(0.5..1.2);
            let u = WaveFunction::gaussian(grid(), c, w);
            let e = functional.product_state_energy(&u, 2).unwrap();
            assert!(0.5 * g.energy <= e + 1e-8, "{} > {e}", 0.5 * g.energy);
        }
    }

    #[test]
    fn reduced_density_axioms() {
        let u = WaveFunction::gaussian(grid(), [0.3, 0.0], 0.7);
        let prod = TwoBodyState::product(&u, &u);
        let gamma = reduced_density(&prod);
        assert!((gamma.trace() - 1.0).abs() < 1e-10);
        assert!((gamma.expectation(&u) - 1.0).abs() < 1e-10);
        let occ = gamma.occupations();
        assert!((occ[0] - 1.0).abs() < 1e-10 && occ[1].abs() < 1e-10);
        let psi = random_symmetric(grid(), 5);
        let g = reduced_density(&psi);
        assert!((g.trace() - 1.0).abs() < 1e-10);
        assert!(g.hermiticity_error() < 1e-12);
        for o in g.occupations() {
            assert!((-1e-12..=1.0 + 1e-12).contains(&o));
        }
        let f = fidelity(&psi, &u);
        assert!((f - g.expectation(&u)).abs() < 1e-10 && (0.0..=1.0).contains(&f));
    }

    #[test]
    fn resource_and_resolution_errors() {
        let big = TwoBodyConfig::harmonic(Grid2D::new(4.0, 64).unwrap(), 1.0, 0.5);
        assert!(matches!(TwoBodyHamiltonian::new(big, &kernel()), Err(Error::MemoryBudget { .. })));
        let coarse = TwoBodyConfig::harmonic(grid(), 1.0, 0.2);
        assert!(matches!(TwoBodyHamiltonian::new(coarse, &kernel()), Err(Error::UnderResolved { .. })));
    }
}
