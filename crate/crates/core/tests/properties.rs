use std::f64::consts::PI;

use oscinv_core::forward::duhamel_coefficient;
use oscinv_core::harness::{loglog_slope, ExperimentConfig};
use oscinv_core::inverse::ip2_recover;
use oscinv_core::source::{rho0, rho1, FastProfile, HarmonicKind, HarmonicSpec};
use oscinv_core::spectral_basis::{build_dirichlet_interval_basis, project};
use oscinv_core::volterra::{residual, solve_second_kind, FnKernel};
use oscinv_core::{Expr, SpatialField, TimeGrid, TimeTrace};
use proptest::prelude::*;

fn harmonics() -> impl Strategy<Value = Vec<HarmonicSpec>> {
    prop::collection::vec((1u32..5, any::<bool>(), -2.0f64..2.0, -1.0f64..1.0), 1..4).prop_map(|v| {
        v.into_iter()
            .map(|(k, cos, a, b)| HarmonicSpec {
                harmonic: k,
                kind: if cos { HarmonicKind::Cos } else { HarmonicKind::Sin },
                coeff: format!("{a} + {b}*t"),
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn rho_identities(specs in harmonics(), t in 0.0f64..2.0, tau in 0.0f64..6.3) {
        let grid = TimeGrid::new(2.0, 40).unwrap();
        let r1 = FastProfile::from_spec(&specs, grid).unwrap();
        let p0 = rho0(&r1);
        let p1 = rho1(&p0);
        let scale = 1.0 + r1.eval(t, tau).abs();
        prop_assert!((p0.d_tau(2).eval(t, tau) - r1.eval(t, tau)).abs() <= 1e-12 * scale);
        prop_assert!((p1.d_tau(1).eval(t, tau) + p0.eval(t, tau)).abs() <= 1e-12 * scale);
    }

    #[test]
    fn duhamel_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, lam in 0.5f64..50.0) {
        let grid = TimeGrid::new(2.0, 200).unwrap();
        let f = TimeTrace::from_fn(grid, |t| (2.0 * t).sin()).unwrap();
        let g = TimeTrace::from_fn(grid, |t| 1.0 + t * t).unwrap();
        let combo = f.scale(a).add(&g.scale(b));
        let lhs = duhamel_coefficient(&combo, lam).unwrap();
        let rhs = duhamel_coefficient(&f, lam).unwrap().scale(a).add(&duhamel_coefficient(&g, lam).unwrap().scale(b));
        prop_assert!(lhs.sup_distance(&rhs) <= 1e-12 * (1.0 + a.abs() + b.abs()));
    }

    #[test]
    fn volterra_discrete_equation_holds(c in 0.1f64..2.0) {
        let grid = TimeGrid::new(1.0, 200).unwrap();
        let one = TimeTrace::constant(1.0, grid);
        let kernel = FnKernel(move |t: f64, s: f64| c * (t - s).cos());
        let g = TimeTrace::from_fn(grid, |t| 1.0 + t).unwrap();
        let u = solve_second_kind(&one, &kernel, &g).unwrap();
        // the discrete solution satisfies the discrete equation up to roundoff
        prop_assert!(residual(&one, &kernel, &g, &u) <= 1e-12);
    }

    #[test]
    fn final_time_roundtrip(coeffs in prop::collection::vec(-2.0f64..2.0, 6)) {
        let basis = build_dirichlet_interval_basis(PI, 6).unwrap();
        let grid = TimeGrid::new(3.0, 300).unwrap();
        let r0 = TimeTrace::from_fn(grid, |t| 1.0 + t).unwrap();
        let psi: Vec<f64> = coeffs
            .iter()
            .enumerate()
            .map(|(m, c)| c * oscinv_core::asymptotics::lambda_at(&r0, basis.eigenvalue(m), 3.0).unwrap())
            .collect();
        let rec = ip2_recover(&SpatialField::Modal(psi), &r0, 3.0, &basis).unwrap();
        for (a, b) in rec.coefficients.iter().zip(&coeffs) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn projection_of_modes(m in 1usize..10, c in -5.0f64..5.0) {
        let basis = build_dirichlet_interval_basis(PI, 10).unwrap();
        let field = SpatialField::Expression(Expr::parse(&format!("{c}*sin({m}*x)")).unwrap());
        let p = project(&field, &basis).unwrap();
        for (i, v) in p.iter().enumerate() {
            let want = if i + 1 == m { c * (PI / 2.0).sqrt() } else { 0.0 };
            prop_assert!((v - want).abs() <= 1e-10);
        }
    }

    #[test]
    fn slope_recovers_power_laws(p in -5.0f64..0.0, c in 0.1f64..10.0) {
        let x = [50.0, 100.0, 200.0, 400.0];
        let y: Vec<f64> = x.iter().map(|w: &f64| c * w.powf(p)).collect();
        prop_assert!((loglog_slope(&x, &y).unwrap() - p).abs() <= 1e-10);
    }

    #[test]
    fn coarse_steps_rejected(ppp in 1usize..16) {
        let text = format!(r#"{{"basis": {{"kind": "interval", "length": 1, "modes": 2}},
            "source": {{"f": "sin(x)", "r": "cos(tau)"}}, "T": 1, "omega": 10, "points_per_period": {ppp}}}"#);
        prop_assert!(ExperimentConfig::from_json(&text).is_err());
    }
}
