//! Smeared unit flux: the smoothing profile, the smeared logarithmic
//! potential and its gradient, Fourier transforms and L^p norms.
//!
//! The profile is radial with a flat plateau of height `1/π²` on the unit
//! disc, a cosine taper `½(1 + cos(π(t−1)^κ))` on `1 < t < 2` and zero
//! outside. The exponent κ is fixed by requiring unit total mass.
//!
//! A [`SmearedKernel`] of radius `R` rescales the unit profile,
//! `χ_R(x) = R⁻² χ(x/R)`. Newton's theorem reduces everything to the
//! enclosed mass `M(s) = 2π∫₀ˢ χ(t) t dt`, which is tabulated once on the
//! taper annulus and interpolated with cubic Hermite polynomials.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid2D;
use crate::quad;

/// Height of the profile on the unit disc.
pub const PLATEAU: f64 = 1.0 / (PI * PI);
/// The profile vanishes for `r ≥ SUPPORT`.
pub const SUPPORT: f64 = 2.0;
/// Number of table intervals on the taper annulus `[1, 2]`.
pub const TABLE_INTERVALS: usize = 4096;

const KAPPA_BRACKET: (f64, f64) = (1.0, 8.0);

fn taper(t: f64, kappa: f64) -> f64 {
    if t <= 1.0 {
        1.0
    } else if t >= 2.0 {
        0.0
    } else {
        0.5 * (1.0 + (PI * (t - 1.0).powf(kappa)).cos())
    }
}

/// `∫₁² f(t) t dt` for the taper with exponent `kappa`.
pub fn taper_moment(kappa: f64) -> f64 {
    quad::integrate(|t| taper(t, kappa) * t, 1.0, 2.0, 1e-15).0
}

/// Target value of [`taper_moment`] giving the profile unit mass.
pub fn taper_target() -> f64 {
    0.5 * (PI - 1.0)
}

/// Solves for the taper exponent κ by bisection on `[1, 8]`.
///
/// The taper widens as κ grows, so the moment is increasing in κ and the
/// bracket holds a single root.
pub fn solve_taper_exponent() -> Result<f64> {
    let target = taper_target();
    let kappa = quad::bisect(|k| taper_moment(k) - target, KAPPA_BRACKET.0, KAPPA_BRACKET.1, 1e-15)?;
    let residual = (taper_moment(kappa) - target).abs();
    if residual > 1e-12 {
        return Err(Error::NonConvergence { method: "taper bisection", iterations: 200, residual });
    }
    Ok(kappa)
}

/// Radial smoothing profile χ with unit mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingProfile {
    pub taper_exponent: f64,
}

impl SmoothingProfile {
    pub fn solve() -> Result<Self> {
        Ok(Self { taper_exponent: solve_taper_exponent()? })
    }

    /// χ(r) for a radius `r ≥ 0`.
    pub fn eval(&self, r: f64) -> f64 {
        PLATEAU * taper(r, self.taper_exponent)
    }

    /// Total mass `2π∫χ(r) r dr`.
    pub fn mass(&self) -> f64 {
        PI * PLATEAU + 2.0 * PI * PLATEAU * taper_moment(self.taper_exponent)
    }

    /// Radial Fourier transform `χ̂(p) = 2π∫χ(r) J₀(pr) r dr`, normalized so `χ̂(0) = 1`.
    pub fn fourier(&self, p: f64) -> f64 {
        let p = p.abs();
        // plateau: 2π/π² ∫₀¹ J₀(pr) r dr = (2/π) J₁(p)/p
        let disc = if p < 1e-8 { 1.0 / PI } else { (2.0 / PI) * libm::j1(p) / p };
        let panels = 2 + (p / 2.0).ceil() as usize;
        let kappa = self.taper_exponent;
        let annulus = quad::integrate_panels(
            |t| taper(t, kappa) * libm::j0(p * t) * t,
            1.0,
            2.0,
            panels,
            1e-14,
        );
        disc + 2.0 * PI * PLATEAU * annulus
    }
}

/// `2π∫_{|p|≤P} |χ̂(p)| p dp`, the partial L¹ norm of the transform.
pub fn fourier_l1_partial(profile: &SmoothingProfile, cutoff: f64) -> f64 {
    let panels = (cutoff * 2.0).ceil().max(1.0) as usize;
    let w = cutoff / panels as f64;
    let mut total = 0.0;
    for i in 0..panels {
        let a = i as f64 * w;
        total += quad::kronrod15(&|p: f64| profile.fourier(p).abs() * p, a, a + w).0;
    }
    2.0 * PI * total
}

/// Cubic Hermite table of the enclosed mass and the exterior log moment on `[1, 2]`.
#[derive(Debug, Clone)]
struct RadialTable {
    mass: Vec<f64>,
    dmass: Vec<f64>,
    logm: Vec<f64>,
    dlogm: Vec<f64>,
}

impl RadialTable {
    fn build(profile: &SmoothingProfile) -> Self {
        let n = TABLE_INTERVALS;
        let ds = 1.0 / n as f64;
        let node = |i: usize| 1.0 + i as f64 * ds;
        let chi = |t: f64| profile.eval(t);

        let mut cum = vec![0.0; n + 1];
        let mut lcum = vec![0.0; n + 1];
        for i in 0..n {
            let (a, b) = (node(i), node(i + 1));
            cum[i + 1] = cum[i] + quad::integrate(|t| chi(t) * t, a, b, 1e-17).0;
            lcum[i + 1] = lcum[i] + quad::integrate(|t| t.ln() * chi(t) * t, a, b, 1e-17).0;
        }
        // rescale the annulus contribution so M(2) = 1 holds exactly
        let inner = 1.0 / PI;
        let scale = (1.0 - inner) / (2.0 * PI * cum[n]);
        let mass: Vec<f64> = cum.iter().map(|c| inner + 2.0 * PI * scale * c).collect();
        let dmass: Vec<f64> = (0..=n).map(|i| 2.0 * PI * scale * node(i) * chi(node(i))).collect();
        let logm: Vec<f64> = lcum.iter().map(|c| 2.0 * PI * scale * (lcum[n] - c)).collect();
        let dlogm: Vec<f64> = (0..=n).map(|i| -2.0 * PI * scale * node(i).ln() * node(i) * chi(node(i))).collect();
        Self { mass, dmass, logm, dlogm }
    }

    fn hermite(vals: &[f64], ders: &[f64], s: f64) -> f64 {
        let n = TABLE_INTERVALS;
        let ds = 1.0 / n as f64;
        let x = (s - 1.0) * n as f64;
        let i = (x.floor() as usize).min(n - 1);
        let t = x - i as f64;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * vals[i] + h10 * ds * ders[i] + h01 * vals[i + 1] + h11 * ds * ders[i + 1]
    }

    /// Enclosed mass of the unit profile within radius `s`.
    fn enclosed(&self, s: f64) -> f64 {
        if s <= 1.0 {
            s * s / PI
        } else if s >= 2.0 {
            1.0
        } else {
            Self::hermite(&self.mass, &self.dmass, s)
        }
    }

    /// `2π∫_s² log(t) χ(t) t dt`.
    fn exterior_log(&self, s: f64) -> f64 {
        if s >= 2.0 {
            0.0
        } else if s >= 1.0 {
            Self::hermite(&self.logm, &self.dlogm, s)
        } else {
            let at_one = self.logm[0];
            let tail = if s > 0.0 { -0.25 - 0.5 * s * s * s.ln() + 0.25 * s * s } else { -0.25 };
            at_one + (2.0 / PI) * tail
        }
    }
}

/// Serializable summary of a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub radius: f64,
    pub taper_exponent: f64,
    pub table_intervals: usize,
}

/// The smeared potential `w_R = log|·| * χ_R` and its gradient.
#[derive(Debug, Clone)]
pub struct SmearedKernel {
    radius: f64,
    profile: SmoothingProfile,
    table: Arc<RadialTable>,
}

impl SmearedKernel {
    pub fn new(radius: f64) -> Result<Self> {
        Self::with_profile(radius, SmoothingProfile::solve()?)
    }

    pub fn with_profile(radius: f64, profile: SmoothingProfile) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParameter(format!("smearing radius must be positive, got {radius}")));
        }
        Ok(Self { radius, profile, table: Arc::new(RadialTable::build(&profile)) })
    }

    /// Same profile and table at a different radius.
    pub fn rescaled(&self, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParameter(format!("smearing radius must be positive, got {radius}")));
        }
        Ok(Self { radius, profile: self.profile, table: Arc::clone(&self.table) })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn profile(&self) -> &SmoothingProfile {
        &self.profile
    }

    pub fn params(&self) -> KernelParams {
        KernelParams {
            radius: self.radius,
            taper_exponent: self.profile.taper_exponent,
            table_intervals: TABLE_INTERVALS,
        }
    }

    /// Fraction of the unit flux inside radius `r`.
    pub fn enclosed_mass(&self, r: f64) -> f64 {
        self.table.enclosed(r / self.radius)
    }

    /// `χ_R(r)`.
    pub fn density(&self, r: f64) -> f64 {
        self.profile.eval(r / self.radius) / (self.radius * self.radius)
    }

    /// Radial magnitude `v(r) = |∇w_R|` at distance `r`.
    pub fn v(&self, r: f64) -> f64 {
        let r = r.abs();
        let s = r / self.radius;
        let unit = if s <= 1.0 {
            s / PI
        } else if s >= 2.0 {
            1.0 / s
        } else {
            self.table.enclosed(s) / s
        };
        unit / self.radius
    }

    /// `∇w_R(x)`; zero at the origin.
    pub fn grad(&self, x: [f64; 2]) -> [f64; 2] {
        let r = x[0].hypot(x[1]);
        if r == 0.0 {
            return [0.0, 0.0];
        }
        let f = self.v(r) / r;
        [f * x[0], f * x[1]]
    }

    /// `∇⊥w_R(x) = v(|x|) x⊥/|x|` with `x⊥ = (−y, x)`.
    pub fn grad_perp(&self, x: [f64; 2]) -> [f64; 2] {
        let g = self.grad(x);
        [-g[1], g[0]]
    }

    /// `w_R(x)`, equal to `log|x|` outside the support.
    pub fn potential(&self, x: [f64; 2]) -> f64 {
        let r = x[0].hypot(x[1]);
        let s = r / self.radius;
        if s >= SUPPORT {
            return r.ln();
        }
        let m = self.table.enclosed(s);
        let log_r_term = if r > 0.0 { r.ln() * m } else { 0.0 };
        log_r_term + self.radius.ln() * (1.0 - m) + self.table.exterior_log(s)
    }

    /// `sup_r v(r)`, attained on the taper annulus.
    pub fn sup_v(&self) -> f64 {
        let r0 = self.radius;
        let coarse = 256;
        let (mut best, mut arg) = (0.0, r0);
        for i in 0..=coarse {
            let r = r0 * (1.0 + i as f64 / coarse as f64);
            let v = self.v(r);
            if v > best {
                best = v;
                arg = r;
            }
        }
        let w = r0 / coarse as f64;
        let lo = (arg - w).max(r0);
        let hi = (arg + w).min(2.0 * r0);
        quad::golden_max(|r| self.v(r), lo, hi, 1e-12 * r0).1.max(best)
    }

    /// `‖∇w_R‖_{L^p(ℝ²)}` for `p > 2`.
    pub fn lp_norm_grad(&self, p: f64) -> Result<f64> {
        if !(p > 2.0) {
            return Err(Error::InvalidExponent(p));
        }
        let r0 = self.radius;
        let disc = r0.powf(2.0 - p) / ((p + 2.0) * PI.powf(p));
        let scale = r0.powf(2.0 - p);
        let annulus = quad::integrate(|r| self.v(r).powf(p) * r, r0, 2.0 * r0, 1e-15 * scale).0;
        let tail = (2.0 * r0).powf(2.0 - p) / (p - 2.0);
        Ok((2.0 * PI * (disc + annulus + tail)).powf(1.0 / p))
    }

    /// Fourier symbol of `∇⊥w_R` at frequency `p`: `−2πi p⊥ χ̂(R|p|)/|p|²`.
    ///
    /// Returned as the two purely imaginary components' coefficients of `i`.
    pub fn perp_symbol(&self, p: [f64; 2]) -> [Complex64; 2] {
        let q2 = p[0] * p[0] + p[1] * p[1];
        if q2 == 0.0 {
            return [Complex64::new(0.0, 0.0); 2];
        }
        let f = -2.0 * PI * self.profile.fourier(self.radius * q2.sqrt()) / q2;
        [Complex64::new(0.0, -f * p[1]), Complex64::new(0.0, f * p[0])]
    }

    /// Writes `(r, v(r))` pairs as CSV for `points` radii on `[0, r_max]`.
    pub fn write_profile_csv<W: Write>(&self, mut out: W, r_max: f64, points: usize) -> Result<()> {
        writeln!(out, "r,v")?;
        let points = points.max(2);
        for i in 0..points {
            let r = r_max * i as f64 / (points - 1) as f64;
            writeln!(out, "{r:.12e},{:.12e}", self.v(r))?;
        }
        Ok(())
    }
}

/// Eisenstein sums `G_{4j}` of the square lattice `ℤ + iℤ` for `j = 1..=terms`.
fn square_lattice_eisenstein(terms: usize) -> Vec<f64> {
    // G4 = Γ(1/4)^8 / (960 π²)
    let g4 = libm::tgamma(0.25).powi(8) / (960.0 * PI * PI);
    // Laurent coefficients of ℘: c_k = (2k+1) G_{2k+2}
    let kmax = 2 * terms;
    let mut c = vec![0.0; kmax + 1];
    c[1] = 3.0 * g4;
    for n in 3..=kmax {
        let s: f64 = (1..=n - 2).map(|m| c[m] * c[n - 1 - m]).sum();
        c[n] = 3.0 * s / ((2 * n + 3) as f64 * (n - 2) as f64);
    }
    (1..=terms).map(|j| c[2 * j - 1] / (4 * j - 1) as f64).collect()
}

/// Field of all periodic images (plus the neutralizing background) seen at `x`
/// for a unit-flux kernel periodized on a square of side `period`.
fn image_field(x: [f64; 2], period: f64, eis: &[f64]) -> [f64; 2] {
    let z = Complex64::new(x[0], x[1]);
    let mut dphi = Complex64::new(0.0, 0.0);
    for (j, g) in eis.iter().enumerate() {
        let k = 4 * (j + 1);
        dphi -= g / period.powi(k as i32) * z.powi(k as i32 - 1);
    }
    let i = Complex64::i();
    let h = -(PI / (period * period)) * i * z + i * dphi.conj();
    [h.re, h.im]
}

/// Compares `∇⊥w_R` sampled directly with the inverse DFT of its analytic
/// symbol on a grid zero-padded by `pad`. The periodic-image field of the
/// padded square is subtracted analytically. Returns the maximum discrepancy
/// on the interior half of the physical box, relative to the largest kernel
/// magnitude there.
pub fn kernel_fourier_check(kernel: &SmearedKernel, grid: &Grid2D, pad: usize) -> Result<f64> {
    let h = grid.spacing();
    if kernel.radius() < 2.0 * h {
        return Err(Error::UnderResolved { radius: kernel.radius(), spacing: h });
    }
    if pad < 2 {
        return Err(Error::InvalidParameter(format!("zero-padding factor must be at least 2, got {pad}")));
    }
    if kernel.radius() > grid.side() / 4.0 {
        return Err(Error::InvalidParameter("smearing radius must stay below a quarter of the box".into()));
    }
    let m = grid.points() * pad;
    let period = grid.side() * pad as f64;
    let dk = 2.0 * PI / period;
    let freq = |i: usize| -> f64 {
        if i < m / 2 {
            i as f64 * dk
        } else if i == m / 2 {
            0.0
        } else {
            (i as f64 - m as f64) * dk
        }
    };
    // χ̂ depends on |p| only; evaluate once per unordered index pair
    let half = m / 2;
    let mut radial = vec![0.0; (half + 1) * (half + 1)];
    for a in 0..=half {
        for b in a..=half {
            let q = (a as f64).hypot(b as f64) * dk;
            let val = kernel.profile().fourier(kernel.radius() * q);
            radial[a * (half + 1) + b] = val;
            radial[b * (half + 1) + a] = val;
        }
    }
    let fold = |i: usize| if i <= half { i } else { m - i };

    // Kx + iKy packed into one complex array: both components are real in space
    let mut spec = vec![Complex64::new(0.0, 0.0); m * m];
    for iy in 0..m {
        let py = freq(iy);
        for ix in 0..m {
            let px = freq(ix);
            let q2 = px * px + py * py;
            if q2 == 0.0 {
                continue;
            }
            let chi = radial[fold(iy) * (half + 1) + fold(ix)];
            let f = -2.0 * PI * chi / q2;
            let sx = Complex64::new(0.0, -f * py);
            let sy = Complex64::new(0.0, f * px);
            spec[iy * m + ix] = sx + Complex64::i() * sy;
        }
    }
    let mut planner = FftPlanner::new();
    let fft = crate::grid::Fft2::with_planner(m, &mut planner);
    fft.inverse(&mut spec);
    let norm = 1.0 / (period * period);

    let eis = square_lattice_eisenstein(12);
    let quarter = grid.side() / 4.0;
    let mut max_diff: f64 = 0.0;
    let mut max_mag: f64 = 0.0;
    for iy in 0..m {
        let dy = if iy < half { iy as f64 } else { iy as f64 - m as f64 } * (period / m as f64);
        if dy.abs() > quarter {
            continue;
        }
        for ix in 0..m {
            let dx = if ix < half { ix as f64 } else { ix as f64 - m as f64 } * (period / m as f64);
            if dx.abs() > quarter {
                continue;
            }
            let v = spec[iy * m + ix] * (norm * (m * m) as f64);
            let img = image_field([dx, dy], period, &eis);
            let direct = kernel.grad_perp([dx, dy]);
            let ex = v.re - img[0] - direct[0];
            let ey = v.im - img[1] - direct[1];
            max_diff = max_diff.max(ex.hypot(ey));
            max_mag = max_mag.max(direct[0].hypot(direct[1]));
        }
    }
    Ok(max_diff / max_mag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn kernel(r: f64) -> SmearedKernel {
        SmearedKernel::new(r).unwrap()
    }

    #[test]
    fn taper_bracket_low_end() {
        // ∫₀¹ cos(πu)(1+u) du = −2/π², so the κ=1 moment is 3/4 − 1/π²
        let expected = 0.75 - 1.0 / (PI * PI);
        assert_relative_eq!(taper_moment(1.0), expected, epsilon = 1e-14);
        assert!(taper_moment(1.0) < taper_target());
        assert!(taper_moment(8.0) > taper_target());
    }

    #[test]
    fn taper_solve_hits_unit_mass() {
        let kappa = solve_taper_exponent().unwrap();
        assert!((taper_moment(kappa) - taper_target()).abs() <= 1e-12);
        // independent root from a separate high-precision solve
        assert!((kappa - 2.914_888_961_207_034).abs() < 1e-9, "{kappa}");
        let profile = SmoothingProfile { taper_exponent: kappa };
        assert!((profile.mass() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn profile_branches() {
        let p = SmoothingProfile::solve().unwrap();
        assert_eq!(p.eval(0.5), PLATEAU);
        assert_eq!(p.eval(2.5), 0.0);
        let mid = p.eval(1.5);
        assert!(mid > 0.0 && mid < PLATEAU && mid < p.eval(1.4));
        // strictly decreasing across the taper
        let mut prev = p.eval(1.0);
        for i in 1..200 {
            let v = p.eval(1.0 + i as f64 / 200.0);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn profile_is_c1_at_both_ends() {
        let p = SmoothingProfile::solve().unwrap();
        let e = 1e-6;
        let d_left = (p.eval(1.0 + e) - p.eval(1.0)) / e;
        let d_right = (p.eval(2.0) - p.eval(2.0 - e)) / e;
        assert!(d_left.abs() < 1e-8);
        assert!(d_right.abs() < 1e-4);
    }

    #[test]
    fn branch_continuity_and_values() {
        for &r in &[1.0, 0.25, 1.0 / 64.0] {
            let k = kernel(r);
            assert_relative_eq!(k.v(r), 1.0 / (PI * r), max_relative = 1e-15);
            let inner = k.v(r * (1.0 - 1e-14));
            assert_relative_eq!(inner, k.v(r), max_relative = 1e-12);
            let outer = k.v(2.0 * r * (1.0 + 1e-14));
            assert_relative_eq!(outer, k.v(2.0 * r), max_relative = 1e-12);
            assert_relative_eq!(k.v(2.0 * r), 1.0 / (2.0 * r), max_relative = 1e-15);
            assert_eq!(k.enclosed_mass(2.0 * r), 1.0);
        }
        let k = kernel(1.0);
        let g = k.grad([0.5, 0.0]);
        assert_relative_eq!(g[0], 0.5 / PI, max_relative = 1e-15);
        assert_eq!(k.grad([0.0, 0.0]), [0.0, 0.0]);
        assert_eq!(k.v(0.0), 0.0);
    }

    #[test]
    fn table_mass_matches_direct_quadrature() {
        let k = kernel(1.0);
        let p = *k.profile();
        for &s in &[1.1, 1.37, 1.5, 1.77, 1.99] {
            let direct = 1.0 / PI + 2.0 * PI * quad::integrate(|t| p.eval(t) * t, 1.0, s, 1e-16).0;
            assert!((k.enclosed_mass(s) - direct).abs() < 1e-12, "s={s}");
        }
        let mut prev = 0.0;
        for i in 0..=400 {
            let m = k.enclosed_mass(i as f64 * 0.006);
            assert!(m >= prev);
            prev = m;
        }
    }

    #[test]
    fn potential_outside_support_is_log() {
        let k = kernel(0.3);
        assert_eq!(k.potential([0.9, 0.0]), 0.9f64.ln());
        // radial derivative matches |∇w| by centered differences
        for &f in &[0.5, 1.5, 4.0] {
            let r = f * 0.3;
            let e = 1e-5 * 0.3;
            let fd = (k.potential([r + e, 0.0]) - k.potential([r - e, 0.0])) / (2.0 * e);
            assert!((fd - k.v(r)).abs() < 1e-8, "r={r} fd={fd} v={}", k.v(r));
        }
    }

    #[test]
    fn potential_continuous_at_support_edge() {
        let k = kernel(0.5);
        let a = k.potential([1.0 - 1e-12, 0.0]);
        let b = k.potential([1.0, 0.0]);
        assert!((a - b).abs() < 1e-10);
        let c = k.potential([0.5 - 1e-12, 0.0]);
        let d = k.potential([0.5 + 1e-12, 0.0]);
        assert!((c - d).abs() < 1e-10);
    }

    #[test]
    fn potential_tends_to_log_as_radius_shrinks() {
        let x = [0.3, 0.4];
        let k = kernel(1e-3);
        assert_eq!(k.potential(x), 0.5f64.ln());
    }

    #[test]
    fn lp_norm_rejects_small_exponents() {
        let k = kernel(1.0);
        assert!(matches!(k.lp_norm_grad(2.0), Err(Error::InvalidExponent(_))));
        assert!(matches!(k.lp_norm_grad(1.5), Err(Error::InvalidExponent(_))));
    }

    #[test]
    fn lp_norm_scaling() {
        let one = kernel(1.0).lp_norm_grad(4.0).unwrap();
        let r = 0.125;
        let small = kernel(r).lp_norm_grad(4.0).unwrap();
        assert_relative_eq!(small, r.powf(0.5 - 1.0) * one, max_relative = 1e-8);
    }

    #[test]
    fn lp_norm_against_grid_quadrature() {
        // midpoint rule on a fine square, tail beyond the box in closed form
        let k = kernel(1.0);
        let p = 3.0;
        let half = 12.0;
        let n = 2400;
        let h = 2.0 * half / n as f64;
        let mut sum = 0.0;
        for i in 0..n {
            let x = -half + (i as f64 + 0.5) * h;
            for j in 0..n {
                let y = -half + (j as f64 + 0.5) * h;
                sum += k.v(x.hypot(y)).powf(p);
            }
        }
        sum *= h * h;
        // outside the box |∇w| = 1/r; integrate 1/r³ over the complement of the square
        let outside = quad::integrate(
            |theta: f64| {
                let c = theta.cos().abs().max(theta.sin().abs());
                c / half
            },
            0.0,
            2.0 * PI,
            1e-13,
        )
        .0;
        let grid_norm = (sum + outside).powf(1.0 / p);
        let exact = k.lp_norm_grad(p).unwrap();
        assert!((grid_norm - exact).abs() / exact < 1e-4, "{grid_norm} {exact}");
    }

    #[test]
    fn sup_norm_scales_inversely() {
        let base = kernel(1.0).sup_v();
        assert!(base > 1.0 / PI);
        for &r in &[0.25, 1.0 / 16.0] {
            let s = kernel(r).sup_v() * r;
            assert!((s - base).abs() <= 1e-10 * base);
        }
    }

    #[test]
    fn fourier_transform_basics() {
        let p = SmoothingProfile::solve().unwrap();
        assert!((p.fourier(0.0) - 1.0).abs() < 1e-10);
        for i in 0..400 {
            let q = i as f64 * 0.37;
            assert!(p.fourier(q).abs() <= 1.0 + 1e-12);
        }
        // independent values from a separate quadrature of the radial transform
        assert!((p.fourier(1.0) - 0.649_84).abs() < 1e-4);
        assert!((p.fourier(5.0) - 0.046_69).abs() < 1e-4);
        assert!((p.fourier(10.0) + 0.009_69).abs() < 1e-4);
    }

    #[test]
    fn symbol_is_odd() {
        let k = kernel(0.25);
        for &p in &[[1.0, 2.0], [-3.5, 0.2], [0.0, 7.0]] {
            let a = k.perp_symbol(p);
            let b = k.perp_symbol([-p[0], -p[1]]);
            assert_eq!(a[0], -b[0]);
            assert_eq!(a[1], -b[1]);
        }
        assert_eq!(k.perp_symbol([0.0, 0.0]), [Complex64::new(0.0, 0.0); 2]);
    }

    #[test]
    fn eisenstein_g4_matches_lattice_sum() {
        // direct sum over a large square of lattice points, G8 converges fast
        let e = square_lattice_eisenstein(3);
        let mut g8 = 0.0;
        let mut g4 = 0.0;
        let n = 400i64;
        for a in -n..=n {
            for b in -n..=n {
                if a == 0 && b == 0 {
                    continue;
                }
                let w = Complex64::new(a as f64, b as f64);
                g4 += (1.0 / w.powi(4)).re;
                g8 += (1.0 / w.powi(8)).re;
            }
        }
        assert!((e[0] - g4).abs() < 1e-5, "{} {g4}", e[0]);
        assert!((e[1] - g8).abs() < 1e-10, "{} {g8}", e[1]);
    }

    #[test]
    fn fourier_check_rejects_under_resolution() {
        let g = Grid2D::new(8.0, 64).unwrap();
        let k = kernel(0.2);
        assert!(matches!(kernel_fourier_check(&k, &g, 2), Err(Error::UnderResolved { .. })));
    }

    #[test]
    fn fourier_check_converges_under_refinement() {
        let k = kernel(0.25);
        let coarse = kernel_fourier_check(&k, &Grid2D::new(8.0, 128).unwrap(), 2).unwrap();
        let fine = kernel_fourier_check(&k, &Grid2D::new(8.0, 256).unwrap(), 2).unwrap();
        assert!(fine < 1e-3, "{fine}");
        assert!(coarse / fine > 4.0, "{coarse} {fine}");
    }

    #[test]
    fn fourier_l1_tail_is_small() {
        let p = SmoothingProfile::solve().unwrap();
        let a = fourier_l1_partial(&p, 200.0);
        let b = fourier_l1_partial(&p, 400.0);
        assert!((b - a) / b < 0.01);
    }

    #[test]
    fn params_serialize() {
        let k = kernel(0.5);
        let json = serde_json::to_string(&k.params()).unwrap();
        let back: KernelParams = serde_json::from_str(&json).unwrap();
        assert_eq!(back, k.params());
        let mut buf = Vec::new();
        k.write_profile_csv(&mut buf, 2.0, 5).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("r,v\n"));
        assert_eq!(text.lines().count(), 6);
    }
}
