//! Property tests of invariants that hold for every state and parameter.

use anyon_core::afm::{AverageFieldFunctional, FieldConfig};
use anyon_core::fields::ExternalField;
use anyon_core::inequality::{circumradius_rho, stream_rng, SmoothCase};
use anyon_core::{Grid2D, SmearedKernel, WaveFunction};
use num_complex::Complex64;
use proptest::prelude::*;

fn grid() -> Grid2D {
    Grid2D::new(8.0, 32).unwrap()
}

fn functional(beta: f64, b0: f64) -> AverageFieldFunctional {
    let mut cfg = FieldConfig::harmonic(grid(), beta, 0.5);
    cfg.field = ExternalField::symmetric_gauge(b0);
    AverageFieldFunctional::new(cfg).unwrap()
}

fn state(seed: u64) -> WaveFunction {
    SmoothCase::random(&mut stream_rng(seed, 0), 8.0).state(grid())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn energy_is_phase_invariant_and_nonnegative(
        seed in 0u64..10_000,
        beta in -4.0f64..4.0,
        b0 in -1.0f64..1.0,
        theta in 0.0f64..std::f64::consts::TAU,
    ) {
        let f = functional(beta, b0);
        let u = state(seed);
        let rotated = WaveFunction::new(grid(), u.values().iter().map(|v| v * Complex64::from_polar(1.0, theta)).collect()).unwrap();
        let (e, er) = (f.energy(&u).total, f.energy(&rotated).total);
        prop_assert!(e >= 0.0);
        prop_assert!((e - er).abs() <= 1e-10 * e.max(1.0), "{} vs {}", e, er);
    }

    #[test]
    fn gradient_is_orthogonal_to_phase_rotation(seed in 0u64..10_000, beta in -4.0f64..4.0) {
        let f = functional(beta, 0.3);
        let u = state(seed);
        let g = f.gradient(&u);
        let i = Complex64::new(0.0, 1.0);
        let along: f64 = g.iter().zip(u.values()).map(|(g, v)| (g.conj() * i * v).re).sum::<f64>() * grid().cell();
        let scale: f64 = g.iter().map(|g| g.norm_sqr()).sum::<f64>().sqrt() * grid().cell().sqrt();
        prop_assert!(along.abs() <= 1e-9 * scale.max(1.0), "{}", along);
    }

    #[test]
    fn flux_lower_bound_holds(seed in 0u64..10_000, beta in -3.0f64..3.0, b0 in -1.5f64..1.5) {
        let f = functional(beta, b0);
        let b = f.magnetic_lower_bound(&state(seed));
        prop_assert!(b.holds(1e-3), "{:?}", b);
    }

    #[test]
    fn kernel_profile_rescales(radius in 0.01f64..5.0, r in 0.0f64..12.0) {
        let unit = SmearedKernel::new(1.0).unwrap();
        let k = unit.rescaled(radius).unwrap();
        let expected = unit.v(r / radius) / radius;
        prop_assert!((k.v(r) - expected).abs() <= 1e-12 * expected.max(1.0 / radius));
        prop_assert!(k.v(r) <= k.sup_v() * (1.0 + 1e-12));
        let m = k.enclosed_mass(r);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&m));
        prop_assert!(k.enclosed_mass(r * 1.1) >= m - 1e-12);
    }

    #[test]
    fn circumradius_ratio_is_similarity_invariant(
        pts in prop::array::uniform6(-2.0f64..2.0),
        angle in 0.0f64..std::f64::consts::TAU,
        scale in 0.1f64..10.0,
        shift in prop::array::uniform2(-5.0f64..5.0),
    ) {
        let p = [[pts[0], pts[1]], [pts[2], pts[3]], [pts[4], pts[5]]];
        let (c, rho) = circumradius_rho(p[0], p[1], p[2]);
        prop_assume!(c.is_finite() && rho > 1e-3 && c < 1e3);
        let (s, co) = angle.sin_cos();
        let map = |q: [f64; 2]| [scale * (co * q[0] - s * q[1]) + shift[0], scale * (s * q[0] + co * q[1]) + shift[1]];
        let (c2, rho2) = circumradius_rho(map(p[0]), map(p[1]), map(p[2]));
        let (a, b) = (rho / c, rho2 / c2);
        prop_assert!((a - b).abs() <= 1e-6 * a, "{} vs {}", a, b);
        prop_assert!(a <= 3.0 * (1.0 + 1e-12));
    }
}
