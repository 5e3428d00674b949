//! Randomized and quadrature checks of the inequalities used to control the
//! many-body terms: the three-body geometric bound, the three-particle Hardy
//! inequality, the diamagnetic inequality, the magnetic-term bound and the
//! quadratic-form bounds on the singular and mixed two-body terms.
//!
//! Operator inequalities are probed as form ratios over explicit Gaussian
//! families. Such checks verify necessary consequences of the statements,
//! never the statements themselves.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::afm::{current, KernelConvolution};
use crate::error::{Error, Result};
use crate::fields::{ExternalField, GaussianBump};
use crate::grid::{Grid2D, Spectral2D, VectorField, WaveFunction};
use crate::kernel::SmearedKernel;
use crate::quad;

pub type Point = [f64; 2];

/// Deterministic generator for one cell of a parallel scan.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn len(a: Point) -> f64 {
    a[0].hypot(a[1])
}

// ---------------------------------------------------------------------------
// Triangles
// ---------------------------------------------------------------------------

/// Triangle class by how many edges are shorter than `2R`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    AllLong,
    AllShort,
    TwoShort,
    OneShort,
}

impl Regime {
    pub const ALL: [Regime; 4] = [Regime::AllLong, Regime::AllShort, Regime::TwoShort, Regime::OneShort];

    pub fn classify(edges: [f64; 3], radius: f64) -> Regime {
        match edges.iter().filter(|&&e| e < 2.0 * radius).count() {
            0 => Regime::AllLong,
            1 => Regime::OneShort,
            2 => Regime::TwoShort,
            _ => Regime::AllShort,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Regime::AllLong => "all-long",
            Regime::AllShort => "all-short",
            Regime::TwoShort => "two-short",
            Regime::OneShort => "one-short",
        }
    }
}

/// Circumradius (infinite for collinear points) and `ρ = √(Σ edge²)`.
pub fn circumradius_rho(x: Point, y: Point, z: Point) -> (f64, f64) {
    let a = len(sub(y, z));
    let b = len(sub(z, x));
    let c = len(sub(x, y));
    let rho = (a * a + b * b + c * c).sqrt();
    let d1 = sub(y, x);
    let d2 = sub(z, x);
    let area = 0.5 * (d1[0] * d2[1] - d1[1] * d2[0]).abs();
    let circ = if area == 0.0 { f64::INFINITY } else { a * b * c / (4.0 * area) };
    (circ, rho)
}

/// Cyclic sum `Σ (x−y)/|x−y| · (x−z)/|x−z| v(|x−y|) v(|x−z|)`; terms with a
/// vanishing edge are zero because `v(0) = 0`.
pub fn three_body_s(kernel: &SmearedKernel, x: Point, y: Point, z: Point) -> f64 {
    let term = |p: Point, q: Point, r: Point| {
        let a = sub(p, q);
        let b = sub(p, r);
        let (la, lb) = (len(a), len(b));
        if la == 0.0 || lb == 0.0 {
            return 0.0;
        }
        (a[0] * b[0] + a[1] * b[1]) / (la * lb) * kernel.v(la) * kernel.v(lb)
    };
    term(x, y, z) + term(y, z, x) + term(z, x, y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriangleSample {
    pub points: [Point; 3],
    pub regime: Regime,
    pub circumradius: f64,
    pub rho: f64,
}

impl TriangleSample {
    pub fn new(points: [Point; 3], radius: f64) -> Self {
        let [x, y, z] = points;
        let edges = [len(sub(y, z)), len(sub(z, x)), len(sub(x, y))];
        let (circumradius, rho) = circumradius_rho(x, y, z);
        Self { points, regime: Regime::classify(edges, radius), circumradius, rho }
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

fn random_direction(rng: &mut ChaCha8Rng) -> Point {
    let t = 2.0 * PI * rng.random::<f64>();
    [t.cos(), t.sin()]
}

/// One candidate triangle at length scale `radius`, drawn from a mixture of
/// uniform, clustered (edges near `2R`) and near-collinear configurations.
pub fn sample_triangle(rng: &mut ChaCha8Rng, radius: f64) -> [Point; 3] {
    let mode = rng.random_range(0..3);
    match mode {
        0 => {
            let s = log_uniform(rng, 0.2, 40.0) * radius;
            let mut p = || [s * (rng.random::<f64>() - 0.5), s * (rng.random::<f64>() - 0.5)];
            [p(), p(), p()]
        }
        1 => {
            let x = [radius * (rng.random::<f64>() - 0.5), radius * (rng.random::<f64>() - 0.5)];
            let d1 = log_uniform(rng, 0.3, 8.0) * radius;
            let d2 = log_uniform(rng, 0.3, 8.0) * radius;
            let e1 = random_direction(rng);
            let e2 = random_direction(rng);
            [x, [x[0] + d1 * e1[0], x[1] + d1 * e1[1]], [x[0] + d2 * e2[0], x[1] + d2 * e2[1]]]
        }
        _ => {
            let d = log_uniform(rng, 0.1, 40.0) * radius;
            let e = random_direction(rng);
            let t = rng.random::<f64>() * 2.0 - 0.5;
            let off = log_uniform(rng, 1e-9, 1e-1) * d * if rng.random::<bool>() { 1.0 } else { -1.0 };
            let x = [0.0, 0.0];
            let z = [d * e[0], d * e[1]];
            let y = [t * z[0] - off * e[1], t * z[1] + off * e[0]];
            [x, y, z]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSup {
    pub regime: Regime,
    pub radius: f64,
    /// Empirical sup of `|S|ρ²`.
    pub sup: f64,
    pub witness: [Point; 3],
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometricScan {
    pub rows: Vec<RegimeSup>,
}

impl GeometricScan {
    /// Largest over smallest sup across radii for one regime.
    pub fn spread(&self, regime: Regime) -> f64 {
        let sups: Vec<f64> = self.rows.iter().filter(|r| r.regime == regime).map(|r| r.sup).collect();
        let hi = sups.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = sups.iter().cloned().fold(f64::INFINITY, f64::min);
        hi / lo
    }

    pub fn overall_sup(&self) -> f64 {
        self.rows.iter().map(|r| r.sup).fold(0.0, f64::max)
    }
}

const TRIANGLE_BATCH: usize = 8192;

/// Per-regime, per-radius empirical sup of `|S|ρ²`. Candidates are drawn by
/// [`sample_triangle`] and kept by rejection until each regime holds
/// `samples` triangles.
pub fn geom_bound_scan(kernel: &SmearedKernel, samples: usize, radii: &[f64], seed: u64) -> Result<GeometricScan> {
    let mut cells = Vec::new();
    for (ri, &r) in radii.iter().enumerate() {
        for (gi, &regime) in Regime::ALL.iter().enumerate() {
            cells.push((ri, r, gi, regime));
        }
    }
    let rows: Vec<Result<RegimeSup>> = cells
        .par_iter()
        .map(|&(ri, radius, gi, regime)| {
            let k = kernel.rescaled(radius)?;
            let batches = samples.div_ceil(TRIANGLE_BATCH);
            let parts: Vec<Result<(f64, [Point; 3])>> = (0..batches)
                .into_par_iter()
                .map(|b| {
                    let quota = TRIANGLE_BATCH.min(samples - b * TRIANGLE_BATCH);
                    let stream = ((ri as u64) << 40) | ((gi as u64) << 32) | b as u64;
                    let mut rng = stream_rng(seed, stream);
                    let mut best = (f64::NEG_INFINITY, [[0.0; 2]; 3]);
                    let (mut kept, mut tries) = (0, 0usize);
                    while kept < quota {
                        tries += 1;
                        if tries > 2000 * quota {
                            return Err(Error::InsufficientData(format!(
                                "sampler cannot reach regime {} at R={radius}",
                                regime.label()
                            )));
                        }
                        let pts = sample_triangle(&mut rng, radius);
                        let t = TriangleSample::new(pts, radius);
                        if t.regime != regime {
                            continue;
                        }
                        kept += 1;
                        let val = three_body_s(&k, pts[0], pts[1], pts[2]).abs() * t.rho * t.rho;
                        if val > best.0 {
                            best = (val, pts);
                        }
                    }
                    Ok(best)
                })
                .collect();
            let mut best = (f64::NEG_INFINITY, [[0.0; 2]; 3]);
            for p in parts {
                let p = p?;
                if p.0 > best.0 {
                    best = p;
                }
            }
            Ok(RegimeSup { regime, radius, sup: best.0, witness: best.1, samples, seed })
        })
        .collect();
    Ok(GeometricScan { rows: rows.into_iter().collect::<Result<_>>()? })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircumradiusScan {
    /// Largest `ρ²/(9𝓡²)`; the bound asserts this is at most one.
    pub max_ratio: f64,
    pub witness: [Point; 3],
    pub count: usize,
    pub seed: u64,
}

/// `𝓡⁻² ≤ 9ρ⁻²` on random triangles with vertices in the unit square.
pub fn circumradius_scan(count: usize, seed: u64) -> CircumradiusScan {
    let batches = count.div_ceil(TRIANGLE_BATCH);
    let parts: Vec<(f64, [Point; 3])> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, b as u64);
            let quota = TRIANGLE_BATCH.min(count - b * TRIANGLE_BATCH);
            let mut best = (f64::NEG_INFINITY, [[0.0; 2]; 3]);
            for _ in 0..quota {
                let mut p = || [rng.random::<f64>(), rng.random::<f64>()];
                let pts = [p(), p(), p()];
                let (c, rho) = circumradius_rho(pts[0], pts[1], pts[2]);
                let ratio = rho * rho / (9.0 * c * c);
                if ratio > best.0 {
                    best = (ratio, pts);
                }
            }
            best
        })
        .collect();
    let best = parts.into_iter().fold((f64::NEG_INFINITY, [[0.0; 2]; 3]), |a, b| if b.0 > a.0 { b } else { a });
    CircumradiusScan { max_ratio: best.0, witness: best.1, count, seed }
}

// ---------------------------------------------------------------------------
// Three-particle Hardy inequality
// ---------------------------------------------------------------------------

/// `exp(−½(x−m)ᵀΣ⁻¹(x−m))` on ℝ².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFactor {
    pub mean: Point,
    pub cov: [[f64; 2]; 2],
}

impl GaussianFactor {
    pub fn isotropic(mean: Point, var: f64) -> Self {
        Self { mean, cov: [[var, 0.0], [0.0, var]] }
    }

    fn cov_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.cov[0][0], self.cov[0][1], self.cov[1][0], self.cov[1][1])
    }
}

/// Product test function `u(x, y, z) = g₁(x)g₂(y)g₃(z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardyTest {
    pub factors: [GaussianFactor; 3],
}

impl HardyTest {
    pub fn isotropic() -> Self {
        let g = GaussianFactor::isotropic([0.0, 0.0], 1.0);
        Self { factors: [g; 3] }
    }

    /// `u(λ·)`.
    pub fn dilated(&self, lambda: f64) -> Self {
        let mut out = *self;
        for f in out.factors.iter_mut() {
            f.mean = [f.mean[0] / lambda, f.mean[1] / lambda];
            for row in f.cov.iter_mut() {
                for v in row.iter_mut() {
                    *v /= lambda * lambda;
                }
            }
        }
        out
    }

    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let mut factor = || {
            let mean = [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)];
            let l1 = log_uniform(rng, 0.3, 3.0);
            let l2 = log_uniform(rng, 0.3, 3.0);
            let t = PI * rng.random::<f64>();
            let (c, s) = (t.cos(), t.sin());
            let cov = [[l1 * c * c + l2 * s * s, (l1 - l2) * c * s], [(l1 - l2) * c * s, l1 * s * s + l2 * c * c]];
            GaussianFactor { mean, cov }
        };
        Self { factors: [factor(), factor(), factor()] }
    }

    /// `∫|∇u|² / ‖u‖²`, exact for Gaussian products.
    pub fn gradient_ratio(&self) -> f64 {
        self.factors
            .iter()
            .map(|f| 0.5 * f.cov_matrix().try_inverse().expect("positive definite").trace())
            .sum()
    }

    /// Mean and covariance of the four relative coordinates `w` under the
    /// density `|u|²/‖u‖²`; `ρ² = 3|w|²`.
    fn relative_marginal(&self) -> (Vector4<f64>, Matrix4<f64>) {
        let a = [1.0 / 2f64.sqrt(), -1.0 / 2f64.sqrt(), 0.0];
        let b = [1.0 / 6f64.sqrt(), 1.0 / 6f64.sqrt(), -2.0 / 6f64.sqrt()];
        let mut mean = Vector4::zeros();
        let mut cov = Matrix4::zeros();
        for (i, f) in self.factors.iter().enumerate() {
            let mut q = nalgebra::Matrix4x2::zeros();
            q[(0, 0)] = a[i];
            q[(1, 1)] = a[i];
            q[(2, 0)] = b[i];
            q[(3, 1)] = b[i];
            mean += q * Vector2::new(f.mean[0], f.mean[1]);
            cov += q * (f.cov_matrix() * 0.5) * q.transpose();
        }
        (mean, cov)
    }
}

/// Relative coordinates of three points; `ρ² = 3|w|²`.
pub fn relative_coordinates(x: Point, y: Point, z: Point) -> [f64; 4] {
    let a = [1.0 / 2f64.sqrt(), -1.0 / 2f64.sqrt(), 0.0];
    let b = [1.0 / 6f64.sqrt(), 1.0 / 6f64.sqrt(), -2.0 / 6f64.sqrt()];
    let p = [x, y, z];
    let mut w = [0.0; 4];
    for i in 0..3 {
        w[0] += a[i] * p[i][0];
        w[1] += a[i] * p[i][1];
        w[2] += b[i] * p[i][0];
        w[3] += b[i] * p[i][1];
    }
    w
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardyEstimate {
    /// `3∫|u|²/ρ² / ‖u‖²`.
    pub lhs: f64,
    pub lhs_stderr: f64,
    /// `∫|∇u|² / ‖u‖²` (closed form, zero standard error).
    pub rhs: f64,
    pub rhs_stderr: f64,
    pub samples: usize,
    pub seed: u64,
}

impl HardyEstimate {
    /// `lhs ≤ rhs + k·σ`.
    pub fn holds(&self, k: f64) -> bool {
        self.lhs <= self.rhs + k * (self.lhs_stderr.hypot(self.rhs_stderr))
    }
}

const HARDY_BATCH: usize = 1 << 16;

/// Monte Carlo estimate of both sides of the three-particle Hardy inequality
/// for a Gaussian product. The left side only depends on the four relative
/// coordinates, whose law is Gaussian; it is sampled from an equal mixture of
/// that Gaussian and a `|w|⁻²` ball density, which keeps the weights bounded
/// near the coincidence set `ρ = 0`.
pub fn hardy_mc(test: &HardyTest, samples: usize, seed: u64) -> Result<HardyEstimate> {
    let (mean, cov) = test.relative_marginal();
    let chol = cov
        .cholesky()
        .ok_or_else(|| Error::VarianceOverflow("relative covariance is not positive definite".into()))?;
    let lower = chol.l();
    let inv = cov.try_inverse().ok_or_else(|| Error::VarianceOverflow("singular covariance".into()))?;
    let norm = 1.0 / (4.0 * PI * PI * cov.determinant().sqrt());
    let ball = cov.trace().sqrt();
    let ball_norm = 1.0 / (PI * PI * ball * ball);

    let batches = samples.div_ceil(HARDY_BATCH);
    let parts: Vec<(f64, f64)> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, b as u64);
            let quota = HARDY_BATCH.min(samples - b * HARDY_BATCH);
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..quota {
                let z = Vector4::from_fn(|_, _| StandardNormal.sample(&mut rng));
                let w = if rng.random::<bool>() {
                    mean + lower * z
                } else {
                    let r = ball * rng.random::<f64>().sqrt();
                    z * (r / z.norm())
                };
                let d = w - mean;
                let p = norm * (-0.5 * d.dot(&(inv * d))).exp();
                let w2 = w.norm_squared();
                let t = if w2.sqrt() < ball { ball_norm / w2 } else { 0.0 };
                let q = 0.5 * p + 0.5 * t;
                let val = p / (q * w2);
                s1 += val;
                s2 += val * val;
            }
            (s1, s2)
        })
        .collect();
    let (s1, s2) = parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = samples as f64;
    let lhs = s1 / n;
    let var = (s2 / n - lhs * lhs).max(0.0);
    let stderr = (var / n).sqrt();
    if !lhs.is_finite() || !stderr.is_finite() || stderr > 0.1 * lhs {
        return Err(Error::VarianceOverflow(format!("estimate {lhs} with standard error {stderr}")));
    }
    Ok(HardyEstimate { lhs, lhs_stderr: stderr, rhs: test.gradient_ratio(), rhs_stderr: 0.0, samples, seed })
}

/// Randomized separable Gaussian tests.
pub fn hardy_family(count: usize, seed: u64) -> Vec<HardyTest> {
    let mut rng = stream_rng(seed, u64::MAX);
    (0..count).map(|_| HardyTest::random(&mut rng)).collect()
}

// ---------------------------------------------------------------------------
// Grid-level magnetic inequalities
// ---------------------------------------------------------------------------

fn gradient_of_modulus(spectral: &Spectral2D, u: &WaveFunction) -> [Vec<f64>; 2] {
    let modulus: Vec<f64> = u.values().iter().map(|v| v.norm()).collect();
    spectral.gradient_real(&modulus)
}

/// `(h²Σ|(∇+iA)u|², h²Σ|∇|u||²)` with spectral derivatives.
pub fn diamagnetic_check(u: &WaveFunction, a: &VectorField) -> (f64, f64) {
    let grid = *u.grid();
    let spectral = Spectral2D::new(grid);
    let [gx, gy] = spectral.gradient(u.values());
    let i = Complex64::new(0.0, 1.0);
    let lhs: f64 = (0..grid.len())
        .map(|k| {
            let v = u.values()[k];
            (gx[k] + i * a.x[k] * v).norm_sqr() + (gy[k] + i * a.y[k] * v).norm_sqr()
        })
        .sum::<f64>()
        * grid.cell();
    let [mx, my] = gradient_of_modulus(&spectral, u);
    let rhs: f64 = mx.iter().zip(&my).map(|(x, y)| x * x + y * y).sum::<f64>() * grid.cell();
    (lhs, rhs)
}

/// Smooth random state and vector potential, defined in the continuum so the
/// same case can be sampled at several resolutions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothCase {
    /// `(center, width, re, im)` Gaussian terms of `u`.
    pub terms: Vec<(Point, f64, f64, f64)>,
    pub field: ExternalField,
}

impl SmoothCase {
    pub fn random(rng: &mut ChaCha8Rng, side: f64) -> Self {
        let spread = side / 8.0;
        let count = rng.random_range(2..5);
        let terms = (0..count)
            .map(|_| {
                let c = [rng.random_range(-spread..spread), rng.random_range(-spread..spread)];
                (c, rng.random_range(0.5..1.1), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            })
            .collect();
        let bumps = (0..2)
            .map(|_| GaussianBump {
                center: [rng.random_range(-spread..spread), rng.random_range(-spread..spread)],
                amplitude: rng.random_range(-3.0..3.0),
                width: rng.random_range(0.6..1.2),
            })
            .collect();
        Self { terms, field: ExternalField::with_bumps(rng.random_range(-1.0..1.0), bumps) }
    }

    pub fn state(&self, grid: Grid2D) -> WaveFunction {
        let mut u = WaveFunction::from_fn(grid, |x| {
            self.terms
                .iter()
                .map(|&(c, w, re, im)| {
                    let r2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
                    Complex64::new(re, im) * (-0.5 * r2 / (w * w)).exp()
                })
                .sum()
        });
        u.normalize();
        u
    }

    pub fn potential(&self, grid: &Grid2D) -> VectorField {
        self.field.sample(grid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiamagneticRefinement {
    pub coarse_violation: f64,
    pub fine_violation: f64,
    pub coarse_gap: f64,
    pub fine_gap: f64,
}

impl DiamagneticRefinement {
    /// Either no violation at the fine level or one shrunk at least `factor`-fold.
    pub fn shrinks(&self, factor: f64) -> bool {
        self.fine_violation <= 1e-14 || self.fine_violation * factor <= self.coarse_violation
    }
}

/// Diamagnetic check of one case at `grid` and its refinement.
pub fn diamagnetic_refinement(case: &SmoothCase, grid: Grid2D) -> DiamagneticRefinement {
    let run = |g: Grid2D| {
        let (lhs, rhs) = diamagnetic_check(&case.state(g), &case.potential(&g));
        ((rhs - lhs).max(0.0), lhs - rhs)
    };
    let (cv, cg) = run(grid);
    let (fv, fg) = run(grid.refined());
    DiamagneticRefinement { coarse_violation: cv, fine_violation: fv, coarse_gap: cg, fine_gap: fg }
}

/// Relative quadrature budget for the magnetic-term bound.
pub const MAGNETIC_BOUND_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagneticBound {
    /// `h²Σ|A[ρ]|²ρ`.
    pub lhs: f64,
    /// `h²Σ|∇|u||²`.
    pub rhs: f64,
    pub norm_sq: f64,
    pub ratio: f64,
    /// `3/2·‖u‖⁴`.
    pub bound: f64,
}

impl MagneticBound {
    pub fn holds(&self) -> bool {
        self.ratio <= self.bound * (1.0 + MAGNETIC_BOUND_TOL)
    }
}

/// Magnetic-term ratio with the unsmoothed potential approximated by a
/// smeared kernel at `R = 2h`. `kernel` supplies the profile.
pub fn magnetic_bound_check(u: &WaveFunction, kernel: &SmearedKernel) -> Result<MagneticBound> {
    let grid = *u.grid();
    let h = grid.spacing();
    let spectral = Spectral2D::new(grid);
    let [mx, my] = gradient_of_modulus(&spectral, u);
    let rhs: f64 = mx.iter().zip(&my).map(|(x, y)| x * x + y * y).sum::<f64>() * grid.cell();
    let norm_sq = u.norm_sq();
    let [gx, gy] = spectral.gradient(u.values());
    let grad_sq: f64 = gx.iter().zip(&gy).map(|(x, y)| x.norm_sqr() + y.norm_sqr()).sum::<f64>() * grid.cell();
    let width = (norm_sq / grad_sq).sqrt();
    if width < 2.0 * h {
        return Err(Error::Resolution { width, min_width: 2.0 * h });
    }
    let conv = KernelConvolution::new(&kernel.rescaled(2.0 * h)?, grid)?;
    let rho = u.density();
    let a = conv.self_potential(&rho);
    let lhs: f64 = rho.iter().zip(a.magnitude_sq()).map(|(r, m)| r * m).sum::<f64>() * grid.cell();
    Ok(MagneticBound { lhs, rhs, norm_sq, ratio: lhs / rhs, bound: 1.5 * norm_sq * norm_sq })
}

// ---------------------------------------------------------------------------
// Quadratic-form ratios for the two-body terms
// ---------------------------------------------------------------------------

/// Complex Gaussian `exp(−|x−c|²/(2w²) + ik·x)` on ℝ².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormFactor {
    pub center: Point,
    pub width: f64,
    pub momentum: Point,
}

impl FormFactor {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        Self {
            center: [rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6)],
            width: rng.random_range(0.3..0.7),
            momentum: [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)],
        }
    }

    pub fn sample(&self, grid: Grid2D) -> WaveFunction {
        let mut u = WaveFunction::from_fn(grid, |x| {
            let r2 = (x[0] - self.center[0]).powi(2) + (x[1] - self.center[1]).powi(2);
            let phase = self.momentum[0] * x[0] + self.momentum[1] * x[1];
            Complex64::from_polar((-0.5 * r2 / (self.width * self.width)).exp(), phase)
        });
        u.normalize();
        u
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormRatios {
    pub radius: f64,
    /// `sup ⟨f, |∇w_R(x₁−x₂)|² f⟩ / ⟨f, ((p^A₁)² + 1) f⟩`.
    pub singular_sup: f64,
    pub singular_witness: usize,
    /// Same with the symmetrized mixed term `p^A₁·∇⊥w_R + ∇⊥w_R·p^A₁`.
    pub mixed_sup: f64,
    pub mixed_witness: usize,
    /// `(sup v)²`, the multiplication-operator bound on the singular ratio.
    pub hard_bound: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormScan {
    pub rows: Vec<FormRatios>,
    /// Slope of `ln sup` against `ln(1/R)`.
    pub singular_slope: f64,
    pub mixed_slope: f64,
    pub family: Vec<(FormFactor, FormFactor)>,
    pub seed: u64,
}

/// Grid of side `side` with spacing at most `R/2` and at least 64 points.
pub fn form_grid(side: f64, radius: f64) -> Result<Grid2D> {
    let needed = (2.0 * side / radius).ceil() as usize;
    Grid2D::new(side, needed.next_power_of_two().max(64))
}

pub fn form_family(count: usize, seed: u64) -> Vec<(FormFactor, FormFactor)> {
    let mut rng = stream_rng(seed, u64::MAX - 1);
    (0..count).map(|_| (FormFactor::random(&mut rng), FormFactor::random(&mut rng))).collect()
}

/// Form ratios of the singular and mixed two-body terms over a family of
/// product states `f₁(x₁)f₂(x₂)` on a box of side `side`.
pub fn quadratic_form_ratios(
    kernel: &SmearedKernel,
    field: &ExternalField,
    radii: &[f64],
    family: &[(FormFactor, FormFactor)],
    side: f64,
    seed: u64,
) -> Result<FormScan> {
    if radii.len() < 2 {
        return Err(Error::InsufficientData("need at least two radii".into()));
    }
    let mut rows = Vec::with_capacity(radii.len());
    for &radius in radii {
        let grid = form_grid(side, radius)?;
        let k = kernel.rescaled(radius)?;
        let conv = KernelConvolution::new(&k, grid)?;
        let spectral = Spectral2D::new(grid);
        let a_e = field.sample(&grid);
        let values: Vec<(f64, f64)> = family
            .iter()
            .map(|(f1, f2)| {
                let u1 = f1.sample(grid);
                let u2 = f2.sample(grid);
                let rho1 = u1.density();
                let rho2 = u2.density();
                let j1 = current(&spectral, &u1, &a_e);
                let kinetic: f64 = j1_kinetic(&spectral, &u1, &a_e);
                let denom = kinetic + 1.0;
                let sing: f64 = rho1.iter().zip(conv.singular(&rho2)).map(|(r, s)| r * s).sum::<f64>() * grid.cell();
                let ar = conv.self_potential(&rho2);
                let mixed: f64 = 2.0
                    * (0..grid.len()).map(|i| ar.x[i] * j1.x[i] + ar.y[i] * j1.y[i]).sum::<f64>()
                    * grid.cell();
                (sing / denom, mixed.abs() / denom)
            })
            .collect();
        let (mut si, mut mi) = (0, 0);
        for (i, v) in values.iter().enumerate() {
            if v.0 > values[si].0 {
                si = i;
            }
            if v.1 > values[mi].1 {
                mi = i;
            }
        }
        let sup_v = k.sup_v();
        rows.push(FormRatios {
            radius,
            singular_sup: values[si].0,
            singular_witness: si,
            mixed_sup: values[mi].1,
            mixed_witness: mi,
            hard_bound: sup_v * sup_v,
            points: grid.points(),
        });
    }
    let x: Vec<f64> = rows.iter().map(|r| (1.0 / r.radius).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.singular_sup.ln()).collect();
    let ym: Vec<f64> = rows.iter().map(|r| r.mixed_sup.ln()).collect();
    Ok(FormScan {
        singular_slope: quad::fit_slope(&x, &ys)?,
        mixed_slope: quad::fit_slope(&x, &ym)?,
        rows,
        family: family.to_vec(),
        seed,
    })
}

/// `h²Σ|(−i∇ + A)u|²`.
fn j1_kinetic(spectral: &Spectral2D, u: &WaveFunction, a: &VectorField) -> f64 {
    let [gx, gy] = spectral.gradient(u.values());
    let mi = Complex64::new(0.0, -1.0);
    (0..u.values().len())
        .map(|i| {
            let v = u.values()[i];
            (mi * gx[i] + a.x[i] * v).norm_sqr() + (mi * gy[i] + a.y[i] * v).norm_sqr()
        })
        .sum::<f64>()
        * spectral.grid().cell()
}
