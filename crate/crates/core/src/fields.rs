//! External magnetic fields and confining traps.
//!
//! The external field is a constant `B0` in the symmetric gauge plus an
//! optional sum of Gaussian bumps `a·exp(−|x−c|²/σ²)`, each carried by its own
//! rotationally symmetric vector potential so that the curl is known exactly.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid2D, VectorField};

/// Minimum bump width in grid spacings for the grid to resolve it.
pub const MIN_BUMP_POINTS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GaugeKind {
    #[default]
    Zero,
    SymmetricGaugeConstant,
    ConstantPlusPerturbation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianBump {
    pub center: [f64; 2],
    pub amplitude: f64,
    pub width: f64,
}

impl GaussianBump {
    pub fn field(&self, x: [f64; 2]) -> f64 {
        let dx = x[0] - self.center[0];
        let dy = x[1] - self.center[1];
        self.amplitude * (-(dx * dx + dy * dy) / (self.width * self.width)).exp()
    }

    /// Vector potential `aσ²(1 − e^{−r²/σ²})/(2r²)·(x−c)⊥`.
    pub fn potential(&self, x: [f64; 2]) -> [f64; 2] {
        let dx = x[0] - self.center[0];
        let dy = x[1] - self.center[1];
        let r2 = dx * dx + dy * dy;
        let s2 = self.width * self.width;
        let q = r2 / s2;
        // (1 − e^{−q})/q without cancellation near the center
        let ratio = if q < 1e-8 { 1.0 - 0.5 * q } else { -(-q).exp_m1() / q };
        let f = 0.5 * self.amplitude * ratio;
        [-f * dy, f * dx]
    }

    /// Total flux `aπσ²`.
    pub fn flux(&self) -> f64 {
        self.amplitude * PI * self.width * self.width
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ExternalField {
    #[serde(default)]
    pub gauge_kind: GaugeKind,
    #[serde(default, rename = "B0")]
    pub b0: f64,
    #[serde(default)]
    pub bumps: Vec<GaussianBump>,
}

impl ExternalField {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Constant field `B0` with `A = (B0/2)(−y, x)`.
    pub fn symmetric_gauge(b0: f64) -> Self {
        Self { gauge_kind: GaugeKind::SymmetricGaugeConstant, b0, bumps: Vec::new() }
    }

    pub fn with_bumps(b0: f64, bumps: Vec<GaussianBump>) -> Self {
        Self { gauge_kind: GaugeKind::ConstantPlusPerturbation, b0, bumps }
    }

    fn active_bumps(&self) -> &[GaussianBump] {
        match self.gauge_kind {
            GaugeKind::ConstantPlusPerturbation => &self.bumps,
            _ => &[],
        }
    }

    fn active_b0(&self) -> f64 {
        match self.gauge_kind {
            GaugeKind::Zero => 0.0,
            _ => self.b0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.active_b0() == 0.0 && self.active_bumps().iter().all(|b| b.amplitude == 0.0)
    }

    /// `B_e(x) = B0 + B̃(x)`.
    pub fn field(&self, x: [f64; 2]) -> f64 {
        self.active_b0() + self.active_bumps().iter().map(|b| b.field(x)).sum::<f64>()
    }

    pub fn potential(&self, x: [f64; 2]) -> [f64; 2] {
        let half = 0.5 * self.active_b0();
        let mut a = [-half * x[1], half * x[0]];
        for b in self.active_bumps() {
            let p = b.potential(x);
            a[0] += p[0];
            a[1] += p[1];
        }
        a
    }

    pub fn sample(&self, grid: &Grid2D) -> VectorField {
        VectorField::from_fn(grid, |x| self.potential(x))
    }

    pub fn sample_field(&self, grid: &Grid2D) -> Vec<f64> {
        (0..grid.len()).map(|i| self.field(grid.position(i))).collect()
    }

    /// Checks every bump spans at least [`MIN_BUMP_POINTS`] grid spacings.
    pub fn check_resolution(&self, grid: &Grid2D) -> Result<()> {
        let min_width = MIN_BUMP_POINTS * grid.spacing();
        for b in self.active_bumps() {
            if b.width < min_width {
                return Err(Error::Resolution { width: b.width, min_width });
            }
        }
        Ok(())
    }

    /// Grid `W^{1,p}` norm of the perturbation `B̃`.
    pub fn perturbation_norm(&self, grid: &Grid2D, p: f64) -> f64 {
        let cell = grid.cell();
        let mut total = 0.0;
        for idx in 0..grid.len() {
            let x = grid.position(idx);
            let mut val = 0.0;
            let mut gx = 0.0;
            let mut gy = 0.0;
            for b in self.active_bumps() {
                let f = b.field(x);
                let s2 = b.width * b.width;
                val += f;
                gx += -2.0 * (x[0] - b.center[0]) / s2 * f;
                gy += -2.0 * (x[1] - b.center[1]) / s2 * f;
            }
            total += val.abs().powf(p) + gx.hypot(gy).powf(p);
        }
        (total * cell).powf(1.0 / p)
    }
}

/// Central-difference curl `∂ₓA_y − ∂ᵧA_x`; boundary nodes are left at zero.
pub fn discrete_curl(grid: &Grid2D, a: &VectorField) -> Vec<f64> {
    let n = grid.points();
    let h = grid.spacing();
    let mut out = vec![0.0; grid.len()];
    for iy in 1..n - 1 {
        for ix in 1..n - 1 {
            let i = iy * n + ix;
            let day = (a.y[i + 1] - a.y[i - 1]) / (2.0 * h);
            let dax = (a.x[i + n] - a.x[i - n]) / (2.0 * h);
            out[i] = day - dax;
        }
    }
    out
}

/// Largest interior deviation of the discrete curl of a sampled potential from `field`.
pub fn curl_error(grid: &Grid2D, a: &VectorField, field: &[f64]) -> f64 {
    let n = grid.points();
    let curl = discrete_curl(grid, a);
    let mut worst: f64 = 0.0;
    for iy in 1..n - 1 {
        for ix in 1..n - 1 {
            let i = iy * n + ix;
            worst = worst.max((curl[i] - field[i]).abs());
        }
    }
    worst
}

/// Max interior error of the discrete curl of the sampled `A_e` against `B0 + B̃`.
pub fn curl_check(field: &ExternalField, grid: &Grid2D) -> Result<f64> {
    field.check_resolution(grid)?;
    Ok(curl_error(grid, &field.sample(grid), &field.sample_field(grid)))
}

/// Confining potential `V(x) = c|x|^s − C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapPotential {
    #[serde(default = "one")]
    pub c: f64,
    #[serde(default = "two")]
    pub s: f64,
    #[serde(default, rename = "C")]
    pub offset: f64,
}

fn one() -> f64 {
    1.0
}

fn two() -> f64 {
    2.0
}

impl Default for TrapPotential {
    fn default() -> Self {
        Self { c: 1.0, s: 2.0, offset: 0.0 }
    }
}

impl TrapPotential {
    pub fn new(c: f64, s: f64, offset: f64) -> Result<Self> {
        if !(c > 0.0) || !(s > 0.0) {
            return Err(Error::InvalidParameter(format!("trap needs c > 0 and s > 0, got c={c}, s={s}")));
        }
        Ok(Self { c, s, offset })
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        self.c * x[0].hypot(x[1]).powf(self.s) - self.offset
    }

    pub fn sample(&self, grid: &Grid2D) -> Vec<f64> {
        (0..grid.len()).map(|i| self.eval(grid.position(i))).collect()
    }

    /// Smallest value on the outermost ring of grid nodes.
    pub fn boundary_min(&self, grid: &Grid2D) -> f64 {
        let n = grid.points();
        (0..grid.len())
            .filter(|&i| {
                let (ix, iy) = (i % n, i / n);
                ix == 0 || iy == 0 || ix == n - 1 || iy == n - 1
            })
            .map(|i| self.eval(grid.position(i)))
            .fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Grid2D {
        Grid2D::new(8.0, n).unwrap()
    }

    #[test]
    fn symmetric_gauge_values() {
        assert!(ExternalField::symmetric_gauge(0.0).is_zero());
        let f = ExternalField::symmetric_gauge(2.0);
        assert_eq!(f.potential([1.0, 0.0]), [0.0, 1.0]);
        assert_eq!(f.field([0.3, -2.0]), 2.0);
        assert!(curl_check(&f, &grid(128)).unwrap() <= 1e-3);
        assert_eq!(curl_check(&ExternalField::zero(), &grid(64)).unwrap(), 0.0);
    }

    #[test]
    fn bump_potential_has_bump_curl() {
        let bumps = vec![
            GaussianBump { center: [0.5, -0.3], amplitude: 1.5, width: 0.8 },
            GaussianBump { center: [-1.0, 1.0], amplitude: -0.7, width: 1.1 },
        ];
        let f = ExternalField::with_bumps(1.0, bumps);
        let coarse = curl_check(&f, &grid(64)).unwrap();
        let fine = curl_check(&f, &grid(128)).unwrap();
        assert!(coarse < 2e-2, "{coarse}");
        let ratio = coarse / fine;
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn narrow_bump_is_rejected() {
        let f = ExternalField::with_bumps(0.0, vec![GaussianBump { center: [0.0, 0.0], amplitude: 1.0, width: 0.1 }]);
        assert!(matches!(curl_check(&f, &grid(64)), Err(Error::Resolution { .. })));
    }

    #[test]
    fn gauge_shift_leaves_curl_unchanged() {
        let g = grid(128);
        let f = ExternalField::with_bumps(1.0, vec![GaussianBump { center: [0.0, 0.0], amplitude: 2.0, width: 1.0 }]);
        let a = f.sample(&g);
        // add the exact gradient of a smooth function
        let shifted = a.add_scaled(
            &VectorField::from_fn(&g, |x| [x[1].cos() * 0.5 + 2.0 * x[0], -0.5 * x[0] * x[1].sin() + 0.0]),
            1.0,
        );
        let b = f.sample_field(&g);
        let e0 = curl_error(&g, &a, &b);
        let e1 = curl_error(&g, &shifted, &b);
        assert!((e0 - e1).abs() < 1e-3, "{e0} {e1}");
    }

    #[test]
    fn trap_defaults_and_bound() {
        let t = TrapPotential::default();
        assert_eq!(t.eval([3.0, 4.0]), 25.0);
        let g = grid(64);
        assert!(t.boundary_min(&g) >= (4.0 - g.spacing()).powi(2) - 1e-12);
        assert!(t.sample(&g).iter().all(|&v| v >= 0.0));
        assert!(TrapPotential::new(0.0, 2.0, 0.0).is_err());
    }

    #[test]
    fn config_schema() {
        let f: ExternalField = serde_json::from_str(
            r#"{"gauge_kind":"constant-plus-perturbation","B0":1.0,"bumps":[{"center":[0,0],"amplitude":1,"width":1}]}"#,
        )
        .unwrap();
        assert_eq!(f.bumps.len(), 1);
        assert!(serde_json::from_str::<ExternalField>(r#"{"b0":1.0}"#).is_err());
        let t: TrapPotential = serde_json::from_str(r#"{"s":4}"#).unwrap();
        assert_eq!((t.c, t.s, t.offset), (1.0, 4.0, 0.0));
    }
}
