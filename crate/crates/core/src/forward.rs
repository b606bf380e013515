//! Series solution of `u_tt = L u + F` with Dirichlet data: every mode
//! amplitude is a Duhamel integral, and oscillatory forcing is integrated
//! with the Filon-type rule so the fast phase is handled exactly.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::quadrature::cumulative_oscillatory;
use crate::source::{HarmonicKind, OscillatorySource};
use crate::spectral_basis::{project, EigenBasis, SpaceTimeFunction, SpatialField};
use crate::trace::{TimeGrid, TimeTrace};

/// Smallest number of grid steps per fast period accepted by [`solve_direct`].
pub const MIN_POINTS_PER_PERIOD: usize = 16;

/// `u(x, t) = Σ aₘ(t) yₘ(x)` with the amplitudes and their time derivatives
/// stored on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    grid: TimeGrid,
    coeffs: Vec<Vec<f64>>,
    velocities: Vec<Vec<f64>>,
}

impl SpaceTimeField {
    pub fn new(grid: TimeGrid, coeffs: Vec<Vec<f64>>, velocities: Vec<Vec<f64>>) -> Result<Self> {
        if coeffs.len() != velocities.len() {
            return Err(Error::LengthMismatch {
                expected: coeffs.len(),
                got: velocities.len(),
            });
        }
        for c in coeffs.iter().chain(&velocities) {
            if c.len() != grid.len() {
                return Err(Error::LengthMismatch {
                    expected: grid.len(),
                    got: c.len(),
                });
            }
        }
        Ok(SpaceTimeField {
            grid,
            coeffs,
            velocities,
        })
    }

    pub fn zeros(grid: TimeGrid, modes: usize) -> Self {
        SpaceTimeField {
            grid,
            coeffs: vec![vec![0.0; grid.len()]; modes],
            velocities: vec![vec![0.0; grid.len()]; modes],
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn modes(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coefficient_values(&self, m: usize) -> &[f64] {
        &self.coeffs[m]
    }

    pub fn velocity_values(&self, m: usize) -> &[f64] {
        &self.velocities[m]
    }

    pub fn coefficient(&self, m: usize) -> TimeTrace {
        TimeTrace::from_values(self.grid, self.coeffs[m].clone()).expect("amplitudes are finite and on the grid")
    }

    /// Hermite interpolation of `aₘ` from values and slopes.
    pub fn coefficient_at(&self, m: usize, t: f64) -> f64 {
        let h = self.grid.step();
        let s = (t / h).clamp(0.0, self.grid.intervals() as f64);
        let i = (s.floor() as usize).min(self.grid.intervals().saturating_sub(1));
        let u = s - i as f64;
        if self.grid.intervals() == 0 {
            return self.coeffs[m][0];
        }
        let (a0, a1) = (self.coeffs[m][i], self.coeffs[m][i + 1]);
        let (v0, v1) = (self.velocities[m][i] * h, self.velocities[m][i + 1] * h);
        let u2 = u * u;
        let u3 = u2 * u;
        (2.0 * u3 - 3.0 * u2 + 1.0) * a0 + (u3 - 2.0 * u2 + u) * v0 + (-2.0 * u3 + 3.0 * u2) * a1 + (u3 - u2) * v1
    }

    /// `u(x, tᵢ)` at a grid node.
    pub fn eval_node(&self, basis: &EigenBasis, x: &[f64], i: usize) -> Result<f64> {
        let y = basis.mode_values_at(x)?;
        Ok(self.coeffs.iter().zip(&y).map(|(c, ym)| c[i] * ym).sum())
    }

    pub fn eval(&self, basis: &EigenBasis, x: &[f64], t: f64) -> Result<f64> {
        let y = basis.mode_values_at(x)?;
        Ok((0..self.modes()).map(|m| self.coefficient_at(m, t) * y[m]).sum())
    }

    /// Time history `u(x, ·)` on the grid.
    pub fn at_point(&self, basis: &EigenBasis, x: &[f64]) -> Result<Vec<f64>> {
        let y = basis.mode_values_at(x)?;
        Ok((0..self.grid.len())
            .map(|i| self.coeffs.iter().zip(&y).map(|(c, ym)| c[i] * ym).sum())
            .collect())
    }

    /// Modal coefficients at grid node `i`.
    pub fn snapshot(&self, i: usize) -> Vec<f64> {
        self.coeffs.iter().map(|c| c[i]).collect()
    }

    pub fn subsample(&self, factor: usize) -> Result<SpaceTimeField> {
        let grid = self.grid.coarsen(factor)?;
        let pick = |v: &Vec<Vec<f64>>| -> Vec<Vec<f64>> { v.iter().map(|c| c.iter().step_by(factor).copied().collect()).collect() };
        Ok(SpaceTimeField {
            grid,
            coeffs: pick(&self.coeffs),
            velocities: pick(&self.velocities),
        })
    }

    fn combine(&self, other: &SpaceTimeField, wa: f64, wb: f64) -> Result<SpaceTimeField> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let m = self.modes().max(other.modes());
        let mix = |a: &Vec<Vec<f64>>, b: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            (0..m)
                .map(|k| {
                    (0..self.grid.len())
                        .map(|i| wa * a.get(k).map_or(0.0, |c| c[i]) + wb * b.get(k).map_or(0.0, |c| c[i]))
                        .collect()
                })
                .collect()
        };
        Ok(SpaceTimeField {
            grid: self.grid,
            coeffs: mix(&self.coeffs, &other.coeffs),
            velocities: mix(&self.velocities, &other.velocities),
        })
    }

    pub fn add(&self, other: &SpaceTimeField) -> Result<SpaceTimeField> {
        self.combine(other, 1.0, 1.0)
    }

    pub fn sub(&self, other: &SpaceTimeField) -> Result<SpaceTimeField> {
        self.combine(other, 1.0, -1.0)
    }

    pub fn scale(&self, c: f64) -> SpaceTimeField {
        let s = |v: &Vec<Vec<f64>>| -> Vec<Vec<f64>> { v.iter().map(|r| r.iter().map(|x| x * c).collect()).collect() };
        SpaceTimeField {
            grid: self.grid,
            coeffs: s(&self.coeffs),
            velocities: s(&self.velocities),
        }
    }
}

/// Slow amplitude `g` times an optional fast carrier `cos νt` or `sin νt`.
struct Forcing<'a> {
    g: &'a [f64],
    carrier: Option<(f64, HarmonicKind)>,
}

/// Displacement and velocity of `a″ + λa = Σ forcing`, `a(0) = a′(0) = 0`.
fn duhamel(forcings: &[Forcing], lambda: f64, grid: &TimeGrid) -> (Vec<f64>, Vec<f64>) {
    let kappa = lambda.sqrt();
    let h = grid.step();
    let n = grid.len();
    // Z(t) = ∫₀ᵗ F(s) e^{−iκs} ds
    let mut z = vec![Complex64::new(0.0, 0.0); n];
    let mut add = |scale: Complex64, c: Vec<Complex64>| {
        for (zi, ci) in z.iter_mut().zip(c) {
            *zi += scale * ci;
        }
    };
    for f in forcings {
        match f.carrier {
            None => add(Complex64::new(1.0, 0.0), cumulative_oscillatory(f.g, h, -kappa)),
            Some((nu, kind)) => {
                let plus = cumulative_oscillatory(f.g, h, nu - kappa);
                let minus = cumulative_oscillatory(f.g, h, -nu - kappa);
                let (sp, sm) = match kind {
                    HarmonicKind::Cos => (Complex64::new(0.5, 0.0), Complex64::new(0.5, 0.0)),
                    HarmonicKind::Sin => (Complex64::new(0.0, -0.5), Complex64::new(0.0, 0.5)),
                };
                add(sp, plus);
                add(sm, minus);
            }
        }
    }
    let mut a = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for (i, zi) in z.iter().enumerate() {
        let w = Complex64::from_polar(1.0, kappa * grid.t(i)) * zi;
        a.push(w.im / kappa);
        v.push(w.re);
    }
    (a, v)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("eigenvalue must be positive, got {lambda}")));
    }
    Ok(())
}

/// `I(t) = λ^{−1/2} ∫₀ᵗ F(s) sin(√λ (t − s)) ds` on the trace's grid.
pub fn duhamel_coefficient(forcing: &TimeTrace, lambda: f64) -> Result<TimeTrace> {
    check_lambda(lambda)?;
    let (a, _) = duhamel(
        &[Forcing {
            g: forcing.values(),
            carrier: None,
        }],
        lambda,
        forcing.grid(),
    );
    TimeTrace::from_values(*forcing.grid(), a)
}

/// Like [`duhamel_coefficient`] but also returning `I′`.
pub fn duhamel_with_velocity(forcing: &TimeTrace, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    check_lambda(lambda)?;
    Ok(duhamel(
        &[Forcing {
            g: forcing.values(),
            carrier: None,
        }],
        lambda,
        forcing.grid(),
    ))
}

/// Full series solution with initial displacement `φ`, velocity `ψ` and
/// forcing `F(x, t)`.
pub fn solve_with_initial_data(
    basis: &EigenBasis,
    phi: &SpatialField,
    psi: &SpatialField,
    forcing: &SpaceTimeFunction,
    grid: TimeGrid,
) -> Result<SpaceTimeField> {
    let phi_m = project(phi, basis)?;
    let psi_m = project(psi, basis)?;
    let f_m = forcing.mode_traces(basis, &grid)?;
    let lambdas = basis.eigenvalues();
    let (coeffs, velocities): (Vec<Vec<f64>>, Vec<Vec<f64>>) = (0..basis.len())
        .into_par_iter()
        .map(|m| {
            let lam = lambdas[m];
            let k = lam.sqrt();
            let (mut a, mut v) = duhamel(
                &[Forcing {
                    g: f_m[m].values(),
                    carrier: None,
                }],
                lam,
                &grid,
            );
            for (i, t) in grid.times().enumerate() {
                let (s, c) = (k * t).sin_cos();
                a[i] += phi_m[m] * c + psi_m[m] / k * s;
                v[i] += -phi_m[m] * k * s + psi_m[m] * c;
            }
            (a, v)
        })
        .unzip();
    SpaceTimeField::new(grid, coeffs, velocities)
}

/// Solution of the problem with source `f(x, t) r(t, ωt)` and zero initial
/// data on `grid`, which must resolve the fast period with at least
/// [`MIN_POINTS_PER_PERIOD`] steps.
pub fn solve_direct(
    basis: &EigenBasis,
    f: &SpaceTimeFunction,
    r: &OscillatorySource,
    omega: f64,
    grid: TimeGrid,
) -> Result<SpaceTimeField> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::InvalidParameter(format!("omega must be positive, got {omega}")));
    }
    let limit = 2.0 * std::f64::consts::PI / (omega * MIN_POINTS_PER_PERIOD as f64);
    if grid.step() > limit * (1.0 + 1e-12) {
        return Err(Error::UnderResolved {
            step: grid.step(),
            limit,
        });
    }
    let f_m = f.mode_traces(basis, &grid)?;
    solve_direct_modal(basis, &f_m, r, omega, grid)
}

/// [`solve_direct`] with precomputed mode traces `fₘ(t)`.
pub fn solve_direct_modal(
    basis: &EigenBasis,
    f_m: &[TimeTrace],
    r: &OscillatorySource,
    omega: f64,
    grid: TimeGrid,
) -> Result<SpaceTimeField> {
    let r = r.resample(&grid);
    let lambdas = basis.eigenvalues();
    let (coeffs, velocities): (Vec<Vec<f64>>, Vec<Vec<f64>>) = f_m
        .par_iter()
        .zip(lambdas.par_iter())
        .map(|(fm, lam)| {
            let fm = fm.resample(&grid);
            if fm.is_zero() {
                return (vec![0.0; grid.len()], vec![0.0; grid.len()]);
            }
            let slow: Vec<f64> = fm.values().iter().zip(r.r0().values()).map(|(a, b)| a * b).collect();
            let fast: Vec<(Vec<f64>, f64, HarmonicKind)> = r
                .fast()
                .terms()
                .iter()
                .map(|h| {
                    let g = fm.values().iter().zip(h.coeff.values()).map(|(a, b)| a * b).collect();
                    (g, h.k as f64 * omega, h.kind)
                })
                .collect();
            let mut forcings = vec![Forcing {
                g: &slow,
                carrier: None,
            }];
            forcings.extend(fast.iter().map(|(g, nu, kind)| Forcing {
                g,
                carrier: Some((*nu, *kind)),
            }));
            duhamel(&forcings, *lam, &grid)
        })
        .unzip();
    SpaceTimeField::new(grid, coeffs, velocities)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::source::split_source;
    use crate::spectral_basis::build_dirichlet_interval_basis;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn duhamel_examples() {
        let g = TimeGrid::new(3.0, 300).unwrap();
        let one = TimeTrace::constant(1.0, g);
        let i = duhamel_coefficient(&one, 1.0).unwrap();
        for (k, t) in g.times().enumerate() {
            assert_abs_diff_eq!(i.values()[k], 1.0 - t.cos(), epsilon = 1e-12);
        }
        assert!(duhamel_coefficient(&TimeTrace::zeros(g), 4.0).unwrap().is_zero());
        let sin = TimeTrace::from_fn(g, f64::sin).unwrap();
        let i = duhamel_coefficient(&sin, 1.0).unwrap();
        for (k, t) in g.times().enumerate() {
            assert_abs_diff_eq!(i.values()[k], (t.sin() - t * t.cos()) / 2.0, epsilon = 1e-9);
        }
        assert!(duhamel_coefficient(&one, 0.0).is_err());
    }

    #[test]
    fn initial_data_examples() {
        let b = build_dirichlet_interval_basis(PI, 4).unwrap();
        let g = TimeGrid::new(2.0, 200).unwrap();
        let y1 = SpatialField::parse("sqrt(2/pi)*sin(x)").unwrap();
        let zero = SpatialField::zero();
        let no_force = SpaceTimeFunction::parse("0").unwrap();
        let u = solve_with_initial_data(&b, &y1, &zero, &no_force, g).unwrap();
        assert_abs_diff_eq!(u.coefficient_values(0)[100], 1.0f64.cos(), epsilon = 1e-12);
        let u = solve_with_initial_data(&b, &zero, &y1, &no_force, g).unwrap();
        assert_abs_diff_eq!(u.coefficient_values(0)[100], 1.0f64.sin(), epsilon = 1e-12);
        let force = SpaceTimeFunction::parse("sqrt(2/pi)*sin(x)").unwrap();
        let u = solve_with_initial_data(&b, &zero, &zero, &force, g).unwrap();
        assert_abs_diff_eq!(u.coefficient_values(0)[200], 1.0 - 2.0f64.cos(), epsilon = 1e-12);
        assert_abs_diff_eq!(u.coefficient_values(1)[200], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn closed_form_oscillatory_case() {
        let b = build_dirichlet_interval_basis(PI, 4).unwrap();
        let omega = 100.0;
        let g = TimeGrid::resolving(3.0, omega, 32, 31).unwrap();
        let f = SpaceTimeFunction::parse("sin(x)").unwrap();
        let r = split_source(&Expr::parse("cos(tau)").unwrap(), g).unwrap();
        let u = solve_direct(&b, &f, &r, omega, g).unwrap();
        let mut err = 0.0f64;
        let mut scale = 0.0f64;
        for (i, t) in g.times().enumerate() {
            let x = PI / 2.0;
            let exact = (t.cos() - (omega * t).cos()) / (omega * omega - 1.0);
            err = err.max((u.eval_node(&b, &[x], i).unwrap() - exact).abs());
            scale = scale.max(exact.abs());
        }
        assert!(err / scale < 1e-10, "relative error {}", err / scale);
    }

    #[test]
    fn rejects_under_resolved_grid() {
        let b = build_dirichlet_interval_basis(PI, 2).unwrap();
        let g = TimeGrid::new(3.0, 100).unwrap();
        let f = SpaceTimeFunction::parse("sin(x)").unwrap();
        let r = split_source(&Expr::parse("cos(tau)").unwrap(), g).unwrap();
        assert!(matches!(solve_direct(&b, &f, &r, 100.0, g), Err(Error::UnderResolved { .. })));
        assert!(solve_direct(&b, &f, &r, 0.0, g).is_err());
    }

    #[test]
    fn zero_source_gives_zero() {
        let b = build_dirichlet_interval_basis(PI, 3).unwrap();
        let g = TimeGrid::new(1.0, 100).unwrap();
        let f = SpaceTimeFunction::parse("sin(x)").unwrap();
        let r = split_source(&Expr::parse("0").unwrap(), g).unwrap();
        let u = solve_direct(&b, &f, &r, 10.0, g).unwrap();
        assert!((0..3).all(|m| u.coefficient_values(m).iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn hermite_interpolation_between_nodes() {
        let b = build_dirichlet_interval_basis(PI, 2).unwrap();
        let g = TimeGrid::new(2.0, 400).unwrap();
        let f = SpaceTimeFunction::parse("sin(x)").unwrap();
        let r = split_source(&Expr::parse("1").unwrap(), g).unwrap();
        let u = solve_direct(&b, &f, &r, 1.0, g).unwrap();
        let t: f64 = 1.2345;
        let want = (PI / 2.0).sqrt() * (1.0 - t.cos());
        assert_abs_diff_eq!(u.coefficient_at(0, t), want, epsilon = 1e-9);
    }
}
