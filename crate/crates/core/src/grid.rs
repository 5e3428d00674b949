//! Uniform square grids, 2D FFTs, spectral derivatives and grid fields.
//!
//! Arrays are row-major with the `y` index outermost: node `(ix, iy)` sits
//! at `(−L/2 + ix·h, −L/2 + iy·h)` and is stored at `iy·n + ix`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    side: f64,
    points: usize,
}

impl Grid2D {
    pub fn new(side: f64, points: usize) -> Result<Self> {
        if !(side > 0.0 && side.is_finite()) {
            return Err(Error::InvalidParameter(format!("box side must be positive, got {side}")));
        }
        if points < 4 || !points.is_power_of_two() {
            return Err(Error::InvalidParameter(format!("points per dimension must be a power of two ≥ 4, got {points}")));
        }
        Ok(Self { side, points })
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points * self.points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.side / self.points as f64
    }

    /// Area element `h²`.
    pub fn cell(&self) -> f64 {
        let h = self.spacing();
        h * h
    }

    pub fn coord(&self, i: usize) -> f64 {
        -0.5 * self.side + i as f64 * self.spacing()
    }

    /// Position of the node stored at flat index `idx`.
    pub fn position(&self, idx: usize) -> [f64; 2] {
        [self.coord(idx % self.points), self.coord(idx / self.points)]
    }

    /// Angular wavenumber of FFT bin `i`, with the Nyquist bin mapped to `−π/h`.
    pub fn wavenumber(&self, i: usize) -> f64 {
        let n = self.points;
        let dk = 2.0 * std::f64::consts::PI / self.side;
        if i < n / 2 {
            i as f64 * dk
        } else {
            (i as f64 - n as f64) * dk
        }
    }

    /// Wavenumber used by first derivatives: the Nyquist bin is zeroed so the
    /// derivative of a real field stays real.
    pub fn derivative_wavenumber(&self, i: usize) -> f64 {
        if i == self.points / 2 {
            0.0
        } else {
            self.wavenumber(i)
        }
    }

    /// Same box, twice the resolution.
    pub fn refined(&self) -> Self {
        Self { side: self.side, points: self.points * 2 }
    }

    /// Indices of nodes inside the centered square of half-width `half`.
    pub fn interior(&self, half: f64) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&idx| {
            let [x, y] = self.position(idx);
            x.abs() <= half && y.abs() <= half
        })
    }
}

/// Square 2D FFT of side `n` on row-major data.
#[derive(Clone)]
pub struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("n", &self.n).finish()
    }
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        Self::with_planner(n, &mut FftPlanner::new())
    }

    pub fn with_planner(n: usize, planner: &mut FftPlanner<f64>) -> Self {
        Self { n, forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    fn transpose(&self, data: &mut [Complex64]) {
        let n = self.n;
        for i in 0..n {
            for j in i + 1..n {
                data.swap(i * n + j, j * n + i);
            }
        }
    }

    fn run(&self, plan: &Arc<dyn Fft<f64>>, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.n * self.n, "FFT buffer has the wrong size");
        plan.process(data);
        self.transpose(data);
        plan.process(data);
        self.transpose(data);
    }

    /// Unnormalized forward transform `Σ f e^{−ik·x}`.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(&self.forward, data);
    }

    /// Inverse transform including the `1/n²` factor.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(&self.inverse, data);
        let s = 1.0 / (self.n * self.n) as f64;
        data.iter_mut().for_each(|v| *v *= s);
    }
}

/// Spectral differentiation on a [`Grid2D`].
///
/// First derivatives zero the Nyquist bin, which keeps real fields real and
/// commutes with complex conjugation. Kinetic operators therefore add
/// [`Spectral2D::nyquist_kinetic`] so that at zero field they equal `|k|²` on
/// every bin.
#[derive(Debug, Clone)]
pub struct Spectral2D {
    grid: Grid2D,
    fft: Fft2,
    kd: Vec<f64>,
}

impl Spectral2D {
    pub fn new(grid: Grid2D) -> Self {
        let kd = (0..grid.points()).map(|i| grid.derivative_wavenumber(i)).collect();
        Self { grid, fft: Fft2::new(grid.points()), kd }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn fft(&self) -> &Fft2 {
        &self.fft
    }

    /// `(∂ₓu, ∂ᵧu)` by spectral differentiation.
    pub fn gradient(&self, u: &[Complex64]) -> [Vec<Complex64>; 2] {
        let n = self.grid.points();
        let mut hat = u.to_vec();
        self.fft.forward(&mut hat);
        let mut dx = hat.clone();
        let mut dy = hat;
        for iy in 0..n {
            for ix in 0..n {
                let idx = iy * n + ix;
                dx[idx] *= Complex64::new(0.0, self.kd[ix]);
                dy[idx] *= Complex64::new(0.0, self.kd[iy]);
            }
        }
        self.fft.inverse(&mut dx);
        self.fft.inverse(&mut dy);
        [dx, dy]
    }

    /// Single partial derivative along `axis` (0 = x, 1 = y).
    pub fn derivative(&self, u: &[Complex64], axis: usize) -> Vec<Complex64> {
        let n = self.grid.points();
        let mut hat = u.to_vec();
        self.fft.forward(&mut hat);
        for iy in 0..n {
            for ix in 0..n {
                let k = if axis == 0 { self.kd[ix] } else { self.kd[iy] };
                hat[iy * n + ix] *= Complex64::new(0.0, k);
            }
        }
        self.fft.inverse(&mut hat);
        hat
    }

    /// `−i(∂ₓwₓ + ∂ᵧw_y)`, the adjoint of `u ↦ (−i∂ₓu, −i∂ᵧu)`.
    pub fn momentum_divergence(&self, wx: &[Complex64], wy: &[Complex64]) -> Vec<Complex64> {
        let n = self.grid.points();
        let mut a = wx.to_vec();
        let mut b = wy.to_vec();
        self.fft.forward(&mut a);
        self.fft.forward(&mut b);
        for iy in 0..n {
            for ix in 0..n {
                let idx = iy * n + ix;
                a[idx] = a[idx] * self.kd[ix] + b[idx] * self.kd[iy];
            }
        }
        self.fft.inverse(&mut a);
        a
    }

    /// Gradient of a real field.
    pub fn gradient_real(&self, f: &[f64]) -> [Vec<f64>; 2] {
        let c: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let [gx, gy] = self.gradient(&c);
        [gx.iter().map(|v| v.re).collect(), gy.iter().map(|v| v.re).collect()]
    }

    /// `k_N²(P_x + P_y)u`, where `P_c` keeps the Nyquist bin along axis `c`:
    /// the part of `−Δu` that first derivatives do not see.
    pub fn nyquist_kinetic(&self, u: &[Complex64]) -> Vec<Complex64> {
        let n = self.grid.points();
        let half = n / 2;
        let kn2 = self.grid.wavenumber(half).powi(2);
        let mut hat = u.to_vec();
        self.fft.forward(&mut hat);
        for iy in 0..n {
            for ix in 0..n {
                let w = (usize::from(ix == half) + usize::from(iy == half)) as f64 * kn2;
                hat[iy * n + ix] *= w;
            }
        }
        self.fft.inverse(&mut hat);
        hat
    }

    /// Applies the Fourier multiplier `1/(|k|² + shift)`.
    pub fn precondition(&self, u: &mut [Complex64], shift: f64) {
        let n = self.grid.points();
        self.fft.forward(u);
        for iy in 0..n {
            let ky = self.grid.wavenumber(iy);
            for ix in 0..n {
                let kx = self.grid.wavenumber(ix);
                u[iy * n + ix] /= kx * kx + ky * ky + shift;
            }
        }
        self.fft.inverse(u);
    }
}

/// Real two-component field sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl VectorField {
    pub fn zeros(len: usize) -> Self {
        Self { x: vec![0.0; len], y: vec![0.0; len] }
    }

    pub fn from_fn<F: Fn([f64; 2]) -> [f64; 2]>(grid: &Grid2D, f: F) -> Self {
        let mut out = Self::zeros(grid.len());
        for idx in 0..grid.len() {
            let v = f(grid.position(idx));
            out.x[idx] = v[0];
            out.y[idx] = v[1];
        }
        out
    }

    pub fn component(&self, axis: usize) -> &[f64] {
        if axis == 0 {
            &self.x
        } else {
            &self.y
        }
    }

    /// `self + s·other`.
    pub fn add_scaled(&self, other: &VectorField, s: f64) -> VectorField {
        VectorField {
            x: self.x.iter().zip(&other.x).map(|(a, b)| a + s * b).collect(),
            y: self.y.iter().zip(&other.y).map(|(a, b)| a + s * b).collect(),
        }
    }

    pub fn magnitude_sq(&self) -> Vec<f64> {
        self.x.iter().zip(&self.y).map(|(a, b)| a * a + b * b).collect()
    }
}

/// Complex scalar field on a grid; normalized states satisfy `h²Σ|u|² = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    grid: Grid2D,
    values: Vec<Complex64>,
}

impl WaveFunction {
    pub fn new(grid: Grid2D, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "wave function has {} values, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn<F: Fn([f64; 2]) -> Complex64>(grid: Grid2D, f: F) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.position(i))).collect();
        Self { grid, values }
    }

    /// Normalized Gaussian `exp(−|x−c|²/(2w²))`.
    pub fn gaussian(grid: Grid2D, center: [f64; 2], width: f64) -> Self {
        let mut u = Self::from_fn(grid, |p| {
            let dx = p[0] - center[0];
            let dy = p[1] - center[1];
            Complex64::new((-(dx * dx + dy * dy) / (2.0 * width * width)).exp(), 0.0)
        });
        u.normalize();
        u
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn norm_sq(&self) -> f64 {
        self.grid.cell() * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()
    }

    /// Rescales to unit discrete norm; returns the previous norm.
    pub fn normalize(&mut self) -> f64 {
        let n = self.norm_sq().sqrt();
        if n > 0.0 {
            let s = 1.0 / n;
            self.values.iter_mut().for_each(|v| *v *= s);
        }
        n
    }

    /// `h²Σ conj(self)·other`.
    pub fn inner(&self, other: &WaveFunction) -> Complex64 {
        self.grid.cell() * self.values.iter().zip(&other.values).map(|(a, b)| a.conj() * b).sum::<Complex64>()
    }

    /// `|u|²` pointwise.
    pub fn density(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }

    pub fn conj(&self) -> WaveFunction {
        Self { grid: self.grid, values: self.values.iter().map(|v| v.conj()).collect() }
    }

    /// Rotates the global phase so the value at the largest modulus is real and positive.
    pub fn fix_phase(&mut self) {
        let (mut best, mut peak) = (0.0, Complex64::new(1.0, 0.0));
        for v in &self.values {
            let m = v.norm_sqr();
            if m > best {
                best = m;
                peak = *v;
            }
        }
        if best > 0.0 {
            let rot = peak.conj() / peak.norm();
            self.values.iter_mut().for_each(|v| *v *= rot);
        }
    }

    /// Bilinear resampling onto another grid, zero outside the source box.
    /// The result is renormalized.
    pub fn resample(&self, target: Grid2D) -> WaveFunction {
        let src = self.grid;
        let n = src.points();
        let h = src.spacing();
        let mut out = WaveFunction::from_fn(target, |p| {
            let fx = (p[0] + 0.5 * src.side()) / h;
            let fy = (p[1] + 0.5 * src.side()) / h;
            if fx < 0.0 || fy < 0.0 || fx > (n - 1) as f64 || fy > (n - 1) as f64 {
                return Complex64::new(0.0, 0.0);
            }
            let ix = (fx.floor() as usize).min(n - 2);
            let iy = (fy.floor() as usize).min(n - 2);
            let tx = fx - ix as f64;
            let ty = fy - iy as f64;
            let at = |a: usize, b: usize| self.values[b * n + a];
            at(ix, iy) * (1.0 - tx) * (1.0 - ty)
                + at(ix + 1, iy) * tx * (1.0 - ty)
                + at(ix, iy + 1) * (1.0 - tx) * ty
                + at(ix + 1, iy + 1) * tx * ty
        });
        out.normalize();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn grid_validation() {
        assert!(Grid2D::new(8.0, 100).is_err());
        assert!(Grid2D::new(-1.0, 64).is_err());
        let g = Grid2D::new(8.0, 64).unwrap();
        assert_eq!(g.spacing() * 64.0, 8.0);
        assert_eq!(g.coord(32), 0.0);
        assert_eq!(g.position(33 * 64 + 32), [0.0, g.spacing()]);
    }

    #[test]
    fn fft_roundtrip_and_delta() {
        let fft = Fft2::new(16);
        let mut data: Vec<Complex64> = (0..256).map(|i| Complex64::new((i as f64).sin(), (i as f64 * 0.3).cos())).collect();
        let orig = data.clone();
        fft.forward(&mut data);
        fft.inverse(&mut data);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-13);
        }
        let mut delta = vec![Complex64::new(0.0, 0.0); 256];
        delta[0] = Complex64::new(1.0, 0.0);
        fft.forward(&mut delta);
        assert!(delta.iter().all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-14));
    }

    #[test]
    fn spectral_derivative_of_gaussian() {
        let g = Grid2D::new(12.0, 64).unwrap();
        let sp = Spectral2D::new(g);
        let u: Vec<Complex64> = (0..g.len())
            .map(|i| {
                let [x, y] = g.position(i);
                Complex64::new((-(x * x + 2.0 * y * y)).exp(), 0.0)
            })
            .collect();
        let [dx, dy] = sp.gradient(&u);
        for i in 0..g.len() {
            let [x, y] = g.position(i);
            let e = (-(x * x + 2.0 * y * y)).exp();
            assert!((dx[i].re + 2.0 * x * e).abs() < 1e-10);
            assert!((dy[i].re + 4.0 * y * e).abs() < 1e-10);
        }
    }

    #[test]
    fn plane_wave_derivative_is_exact() {
        let g = Grid2D::new(2.0 * PI, 32).unwrap();
        let sp = Spectral2D::new(g);
        let u: Vec<Complex64> = (0..g.len()).map(|i| Complex64::new(0.0, 3.0 * g.position(i)[1]).exp()).collect();
        let d = sp.derivative(&u, 1);
        for i in 0..g.len() {
            assert!((d[i] - Complex64::new(0.0, 3.0) * u[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn normalization_and_phase() {
        let g = Grid2D::new(8.0, 64).unwrap();
        let mut u = WaveFunction::gaussian(g, [0.5, 0.0], 1.0);
        assert!((u.norm_sq() - 1.0).abs() < 1e-12);
        u.values_mut().iter_mut().for_each(|v| *v *= Complex64::from_polar(1.0, 1.1));
        u.fix_phase();
        let peak = u.values().iter().max_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap()).unwrap();
        assert!(peak.im.abs() < 1e-15 && peak.re > 0.0);
    }
}
