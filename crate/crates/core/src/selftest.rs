//! Invariant checks across all modules, reported as one [`StudyReport`].

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::asymptotics::{build_expansion, build_expansion_modal, residual_norm, ResidualOrder};
use crate::error::Result;
use crate::expr::Expr;
use crate::forward::{solve_direct, solve_direct_modal, SpaceTimeField};
use crate::harness::{emit_report, run_order_study, run_roundtrip, Criterion, ExperimentConfig, ReportFormat, StudyReport};
use crate::inverse::{ip1_recover, ip2_recover, ObservationData};
use crate::quadrature::uniform_derivative;
use crate::source::{rho0, rho1, tau_mean_samples, FastProfile, HarmonicKind, HarmonicSpec, OscillatorySource};
use crate::spectral_basis::{
    build_dirichlet_interval_basis, build_rectangle_basis, build_sturm_liouville_basis, project, EigenBasis, SpaceTimeFunction,
    SpatialField,
};
use crate::trace::{TimeGrid, TimeTrace};
use crate::volterra::{build_kernel, residual as volterra_residual, solve_second_kind, FnKernel};

const GENERIC_SOURCE: &str = r#"{
    "basis": {"kind": "interval", "length": 3.141592653589793, "modes": 8},
    "source": {
        "f": "exp(-t)*(sin(x) + 0.3*sin(3*x))",
        "r0": "1 + t",
        "r1": [
            {"harmonic": 1, "kind": "cos", "coeff": "1 + t/2"},
            {"harmonic": 2, "kind": "sin", "coeff": "0.4"}
        ]
    },
    "T": 3,
    "omegas": [50, 100, 200, 400]
}"#;

const COMBINED: &str = r#"{
    "basis": {"kind": "interval", "length": 3.141592653589793, "modes": 8},
    "source": {
        "f": "sin(x) + 0.3*sin(3*x)",
        "r0": "1 + t",
        "r1": [{"harmonic": 1, "kind": "cos", "coeff": "1 + t/2"}]
    },
    "T": 3,
    "omegas": [100, 400],
    "observation": {"x0": [1.5707963267948966], "t0": 3}
}"#;

fn spec(k: u32, kind: HarmonicKind, coeff: &str) -> HarmonicSpec {
    HarmonicSpec {
        harmonic: k,
        kind,
        coeff: coeff.into(),
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn gram_defect(basis: &EigenBasis) -> f64 {
    let g = basis.gram_matrix();
    let mut worst = 0.0f64;
    for (i, row) in g.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            worst = worst.max((v - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    worst
}

fn basis_checks(report: &mut StudyReport) -> Result<()> {
    let interval = build_dirichlet_interval_basis(PI, 64)?;
    report.criteria.push(Criterion::at_most("basis.gram_interval", gram_defect(&interval), 1e-10));
    let rect = build_rectangle_basis(&[1.0, 1.5], 64)?;
    report.criteria.push(Criterion::at_most("basis.gram_rectangle", gram_defect(&rect), 1e-10));
    let ev = rect.eigenvalues();
    let again = build_rectangle_basis(&[1.0, 1.5], 64)?;
    let ordered = ev.windows(2).all(|w| w[0] <= w[1]) && interval.eigenvalues().windows(2).all(|w| w[0] <= w[1]);
    report
        .criteria
        .push(Criterion::holds("basis.eigenvalue_order", ordered && again.modes() == rect.modes()));

    // Sturm–Liouville with a = 1, c = 0 against λₘ = m²
    let (one, zero) = (Expr::num(1.0), Expr::num(0.0));
    let errors: Vec<f64> = [41, 81, 161]
        .iter()
        .map(|n| {
            let b = build_sturm_liouville_basis(PI, &one, &zero, *n, 4)?;
            Ok(b.eigenvalues().iter().enumerate().map(|(m, l)| (l - ((m + 1) * (m + 1)) as f64).abs()).fold(0.0, f64::max))
        })
        .collect::<Result<_>>()?;
    // nodes double the intervals, so the spacing halves
    let orders: Vec<f64> = errors.windows(2).map(|e| (e[0] / e[1]).log2()).collect();
    let worst = orders.iter().map(|p| (p - 2.0).abs()).fold(0.0, f64::max);
    report.criteria.push(Criterion::at_most("basis.sturm_liouville_order", worst, 0.2));
    Ok(())
}

fn source_checks(report: &mut StudyReport, rng: &mut ChaCha8Rng) -> Result<()> {
    let grid = TimeGrid::new(3.0, 300)?;
    let a = [spec(1, HarmonicKind::Cos, "1 + t/2"), spec(2, HarmonicKind::Sin, "0.4")];
    let b = [spec(3, HarmonicKind::Cos, "exp(-t)"), spec(1, HarmonicKind::Sin, "t^2")];
    let r1 = FastProfile::from_spec(&a, grid)?;
    let s1 = FastProfile::from_spec(&b, grid)?;
    let sum = FastProfile::from_spec(&[a.as_slice(), b.as_slice()].concat(), grid)?;
    let p0 = rho0(&r1);
    let p1 = rho1(&p0);
    let p0tt = p0.d_tau(2);
    let p1t = p1.d_tau(1);
    let (q0, qs) = (rho0(&s1), rho0(&sum));
    let (mut second, mut first, mut linear, mut mean) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..64 {
        let t = grid.t(rng.gen_range(0..grid.len()));
        let tau = rng.gen_range(0.0..2.0 * PI);
        second = second.max((p0tt.eval(t, tau) - r1.eval(t, tau)).abs());
        first = first.max((p1t.eval(t, tau) + p0.eval(t, tau)).abs());
        linear = linear.max((qs.eval(t, tau) - p0.eval(t, tau) - q0.eval(t, tau)).abs());
        linear = linear.max((rho1(&qs).eval(t, tau) - p1.eval(t, tau) - rho1(&q0).eval(t, tau)).abs());
        for p in [&p0, &p1] {
            let samples: Vec<f64> = (0..64).map(|j| p.eval(t, 2.0 * PI * j as f64 / 64.0)).collect();
            mean = mean.max(tau_mean_samples(&samples).abs());
        }
    }
    report.criteria.push(Criterion::at_most("source.rho0_tau_tau", second, 1e-12));
    report.criteria.push(Criterion::at_most("source.rho1_tau", first, 1e-12));
    report.criteria.push(Criterion::at_most("source.zero_mean", mean, 1e-12));
    report.criteria.push(Criterion::at_most("source.linearity", linear, 1e-12));
    Ok(())
}

/// `max |a″ + λa − F|` over interior nodes, `a″` by finite differences.
fn ode_defect(u: &SpaceTimeField, lambdas: &[f64], forcing: &[Vec<f64>]) -> f64 {
    let h = u.grid().step();
    let n = u.grid().len();
    (0..u.modes())
        .map(|m| {
            let a = u.coefficient_values(m);
            let add = uniform_derivative(a, h, 2);
            (2..n - 2).map(|i| (add[i] + lambdas[m] * a[i] - forcing[m][i]).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

fn forward_checks(report: &mut StudyReport) -> Result<()> {
    let basis = build_dirichlet_interval_basis(PI, 6)?;
    let omega = 40.0;
    let grid = TimeGrid::resolving(2.0, omega, 64, 11)?;
    let f = SpaceTimeFunction::parse("exp(-t)*(sin(x) + 0.3*sin(3*x))")?;
    let ra = OscillatorySource::from_spec("1 + t", &[spec(1, HarmonicKind::Cos, "1 + t/2")], grid)?;
    let rb = OscillatorySource::from_spec("cos(t)", &[spec(2, HarmonicKind::Sin, "0.4")], grid)?;
    let ua = solve_direct(&basis, &f, &ra, omega, grid)?;
    let ub = solve_direct(&basis, &f, &rb, omega, grid)?;
    let rab = OscillatorySource::from_spec(
        "1 + t + cos(t)",
        &[spec(1, HarmonicKind::Cos, "1 + t/2"), spec(2, HarmonicKind::Sin, "0.4")],
        grid,
    )?;
    let uab = solve_direct(&basis, &f, &rab, omega, grid)?;
    let g = SpaceTimeFunction::parse("t*sin(2*x)")?;
    let fg = SpaceTimeFunction::parse("exp(-t)*(sin(x) + 0.3*sin(3*x)) + t*sin(2*x)")?;
    let ug = solve_direct(&basis, &g, &ra, omega, grid)?;
    let ufg = solve_direct(&basis, &fg, &ra, omega, grid)?;
    let scale = (0..basis.len())
        .map(|m| ua.coefficient_values(m).iter().fold(0.0f64, |s, v| s.max(v.abs())))
        .fold(1.0, f64::max);
    let mut superposition = 0.0f64;
    let (sum_r, sum_f) = (ua.add(&ub)?, ua.add(&ug)?);
    for m in 0..basis.len() {
        superposition = superposition.max(max_abs_diff(uab.coefficient_values(m), sum_r.coefficient_values(m)));
        superposition = superposition.max(max_abs_diff(ufg.coefficient_values(m), sum_f.coefficient_values(m)));
    }
    report.criteria.push(Criterion::at_most("forward.linearity", superposition / scale, 1e-10));

    let start = (0..basis.len())
        .map(|m| ua.coefficient_values(m)[0].abs().max(ua.velocity_values(m)[0].abs()))
        .fold(0.0, f64::max);
    report.criteria.push(Criterion::at_most("forward.zero_initial_data", start, 1e-14));

    // F = fₘ(t) r(t, ωt); the finite-difference error of a″ is about h²ν⁴|a|/12
    // with ν the largest frequency present
    let f_modes = f.mode_traces(&basis, &grid)?;
    let forcing: Vec<Vec<f64>> = f_modes
        .iter()
        .map(|fm| grid.times().zip(fm.values()).map(|(t, v)| v * ra.eval(t, omega * t)).collect())
        .collect();
    let fmax = forcing.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let nu = omega + basis.eigenvalue(basis.len() - 1).sqrt();
    let h = grid.step();
    report
        .criteria
        .push(Criterion::at_most("forward.mode_ode_residual", ode_defect(&ua, &basis.eigenvalues(), &forcing), h * h * nu * nu * fmax));
    Ok(())
}

fn asymptotic_checks(report: &mut StudyReport) -> Result<()> {
    let basis = build_dirichlet_interval_basis(PI, 6)?;
    let omega = 100.0;
    let grid = TimeGrid::resolving(3.0, omega, 32, 11)?;
    let f = SpaceTimeFunction::parse("exp(-t)*(sin(x) + 0.3*sin(3*x))")?;
    let f_modes = f.mode_traces(&basis, &grid)?;
    let points = basis.sample_points(33);

    // r₁ ≡ 0: both residuals come from the same numbers
    let slow = OscillatorySource::from_spec("1 + t", &[], grid)?;
    let exp = build_expansion_modal(&basis, f_modes.clone(), &slow, grid)?;
    let u = solve_direct_modal(&basis, &f_modes, &slow, omega, grid)?;
    let r0 = residual_norm(&u, &exp, &basis, omega, ResidualOrder::Leading, &points)?;
    let r2 = residual_norm(&u, &exp, &basis, omega, ResidualOrder::Second, &points)?;
    report.criteria.push(Criterion::holds("asymptotics.slow_source_coincidence", r0 == r2));

    let r = OscillatorySource::from_spec(
        "1 + t",
        &[spec(1, HarmonicKind::Cos, "1 + t/2"), spec(2, HarmonicKind::Sin, "0.4")],
        grid,
    )?;
    let exp = build_expansion_modal(&basis, f_modes.clone(), &r, grid)?;
    let lambdas = basis.eigenvalues();
    let forcing: Vec<Vec<f64>> = f_modes
        .iter()
        .map(|fm| fm.values().iter().zip(r.r0().values()).map(|(a, b)| a * b).collect())
        .collect();
    let h = grid.step();
    report
        .criteria
        .push(Criterion::at_most("asymptotics.u0_ode_residual", ode_defect(&exp.u0, &lambdas, &forcing), 10.0 * h * h));

    let c = &exp.coefficients;
    let mut sinusoid = 0.0f64;
    for (m, l) in lambdas.iter().enumerate() {
        let k = l.sqrt();
        for (i, t) in grid.times().enumerate() {
            let v1 = c.b1[m] * (k * t).sin() / k;
            let v2 = c.d[m] * (k * t).cos() + c.b2[m] * (k * t).sin() / k;
            sinusoid = sinusoid.max((exp.u1.coefficient_values(m)[i] - v1).abs());
            sinusoid = sinusoid.max((exp.u2.coefficient_values(m)[i] - v2).abs());
        }
    }
    report.criteria.push(Criterion::at_most("asymptotics.corrector_sinusoids", sinusoid, 1e-10));

    let study = run_order_study(&ExperimentConfig::from_json(GENERIC_SOURCE)?)?;
    report.criteria.push(Criterion::at_most("asymptotics.order2_slope", study.slope_order2.unwrap_or(0.0), -2.5));
    report.criteria.push(Criterion::at_most("asymptotics.order0_slope", study.slope_order0.unwrap_or(0.0), -0.9));
    Ok(())
}

fn volterra_checks(report: &mut StudyReport) -> Result<()> {
    let mut errors = Vec::new();
    let mut defect = 0.0f64;
    for h in [1e-2, 5e-3, 2.5e-3] {
        let grid = TimeGrid::with_max_step(1.0, h)?;
        let one = TimeTrace::constant(1.0, grid);
        let kernel = FnKernel(|_: f64, _: f64| 1.0);
        let u = solve_second_kind(&one, &kernel, &one)?;
        errors.push(grid.times().zip(u.values()).map(|(t, v)| (v - (-t).exp()).abs()).fold(0.0, f64::max));
        // exact solution in place of the discrete one leaves only quadrature error
        let exact = TimeTrace::from_fn(grid, |t| (-t).exp())?;
        defect = defect.max(volterra_residual(&one, &kernel, &one, &exact) / (h * h));
    }
    let orders: Vec<f64> = errors.windows(2).map(|e| (e[0] / e[1]).log2()).collect();
    let worst = orders.iter().map(|p| (p - 2.0).abs()).fold(0.0, f64::max);
    report.criteria.push(Criterion::at_most("volterra.order", worst, 0.1));
    report.criteria.push(Criterion::at_most("volterra.residual_over_h2", defect, 1.0));

    // φ₀″ = f(x⁰,t) r₀ + ∫K r₀ for φ₀ = u₀(x⁰, ·)
    let basis = build_dirichlet_interval_basis(PI, 8)?;
    let grid = TimeGrid::with_max_step(2.0, 1e-3)?;
    let f = SpaceTimeFunction::parse("exp(-t)*(sin(x) + 0.3*sin(3*x))")?;
    let r = OscillatorySource::from_spec("1 + t", &[], grid)?;
    let x0 = [PI / 3.0];
    let exp = build_expansion(&basis, &f, &r, grid)?;
    let phi0 = exp.u0.at_point(&basis, &x0)?;
    let phi0_dd = uniform_derivative(&phi0, grid.step(), 2);
    let f_modes = f.mode_traces(&basis, &grid)?;
    let kernel = build_kernel(&basis, &f_modes, &x0, basis.len())?;
    let fx0 = f.at_point(&x0, grid)?;
    let h = grid.step();
    let r0 = r.r0().values();
    let mut worst = 0.0f64;
    for i in 0..grid.len() {
        let k = crate::volterra::VolterraKernel::eval_row(&kernel, &grid, i);
        let integral: f64 = (0..=i)
            .map(|j| if j == 0 || j == i { 0.5 } else { 1.0 } * k[j] * r0[j])
            .sum::<f64>()
            * h;
        worst = worst.max((phi0_dd[i] - fx0.values()[i] * r0[i] - integral).abs());
    }
    report.criteria.push(Criterion::at_most("volterra.point_consistency", worst, 1e-4));
    Ok(())
}

fn inverse_checks(report: &mut StudyReport) -> Result<()> {
    let basis = build_dirichlet_interval_basis(PI, 8)?;
    let grid = TimeGrid::with_max_step(3.0, 1e-3)?;
    let r0 = TimeTrace::from_fn(grid, |t| 1.0 + t)?;
    let psi = SpatialField::parse("sin(x)*(x - 1) + 0.2*sin(2*x)")?;
    let rec = ip2_recover(&psi, &r0, 3.0, &basis)?;
    let psi_m = project(&psi, &basis)?;
    let recovered = project(&rec.field(), &basis)?;
    let scale = psi_m.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let identity = recovered
        .iter()
        .zip(&rec.profiles)
        .zip(&psi_m)
        .map(|((c, p), s)| (c * p - s).abs())
        .fold(0.0, f64::max);
    report.criteria.push(Criterion::at_most("inverse.ip2_identity", identity / scale, 1e-12));
    let again = ip2_recover(&psi, &r0, 3.0, &basis)?;
    report
        .criteria
        .push(Criterion::holds("inverse.deterministic", again.coefficients == rec.coefficients));

    // fast-part identity through IP1
    let f = SpaceTimeFunction::parse("exp(-t)*sin(x)")?;
    let x0 = vec![PI / 2.0];
    let r = OscillatorySource::from_spec("1 + t", &[spec(1, HarmonicKind::Cos, "1 + t/2")], grid)?;
    let exp = build_expansion(&basis, &f, &r, grid)?;
    let fx0 = f.at_point(&x0, grid)?;
    let chi = exp.rho0.mul_trace(&fx0);
    let data = ObservationData {
        phi0: Some(TimeTrace::from_values(grid, exp.u0.at_point(&basis, &x0)?)?),
        chi: Some(chi.clone()),
        x0: Some(x0),
        ..Default::default()
    };
    let ip1 = ip1_recover(&data, &f, &basis)?;
    let fast = ip1.source.fast().mul_trace(&fx0).sup_distance(&chi.d_tau(2), 64);
    report.criteria.push(Criterion::at_most("inverse.fast_part_identity", fast, 1e-12));

    let combined = run_roundtrip(&ExperimentConfig::from_json(COMBINED)?, 3)?;
    for c in combined.criteria {
        report.criteria.push(Criterion {
            name: format!("inverse.{}", c.name),
            ..c
        });
    }
    Ok(())
}

fn harness_checks(report: &mut StudyReport) -> Result<()> {
    let mut cfg = ExperimentConfig::from_json(GENERIC_SOURCE)?;
    cfg.omegas = vec![20.0, 40.0, 80.0];
    let bytes = |c: &ExperimentConfig| -> Result<Vec<u8>> {
        let mut out = Vec::new();
        emit_report(&run_order_study(c)?, ReportFormat::Json, &mut out)?;
        emit_report(&run_order_study(c)?, ReportFormat::Csv, &mut out)?;
        Ok(out)
    };
    report.criteria.push(Criterion::holds("harness.deterministic", bytes(&cfg)? == bytes(&cfg)?));
    cfg.points_per_period = 8;
    report
        .criteria
        .push(Criterion::holds("harness.rejects_coarse_step", cfg.validate().is_err()));
    Ok(())
}

/// Run every invariant check. `seed` drives the random `(t, τ)` test points.
pub fn run_selftest(seed: u64) -> Result<StudyReport> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = StudyReport::new("selftest");
    basis_checks(&mut report)?;
    source_checks(&mut report, &mut rng)?;
    forward_checks(&mut report)?;
    asymptotic_checks(&mut report)?;
    volterra_checks(&mut report)?;
    inverse_checks(&mut report)?;
    harness_checks(&mut report)?;
    report.runtime = start.elapsed();
    Ok(report)
}
