//! Two-scale approximation `U_ω = u₀ + ω⁻¹u₁ + ω⁻²(u₂ + v₂)` of the
//! solution with source `f(x, t) r(t, ωt)`, and residual measurement.
//!
//! Matching the initial data order by order, with the fast corrector
//! `v₂ = f ρ₀(t, ωt)` and the `ω⁻³` corrector `2∂ₜ(f ρ₁)`, gives
//!
//! ```text
//! u₁ₘ(0) = 0,    u₁ₘ′(0) = b₁ₘ = −ρ₀τ(0,0) fₘ(0)
//! u₂ₘ(0) = dₘ = −ρ₀(0,0) fₘ(0),    u₂ₘ′(0) = b₂ₘ = ∂ₜ(fₘρ₀)(0,0)
//! ```
//!
//! and the remainder `u_ω − U_ω` is `O(ω⁻³)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{duhamel_coefficient, duhamel_with_velocity, SpaceTimeField};
use crate::source::{corner_values, rho0, rho1, CornerValues, FastProfile, OscillatorySource};
use crate::spectral_basis::{EigenBasis, SpaceTimeFunction};
use crate::trace::{TimeGrid, TimeTrace};

/// `Λ(t) = λ^{−1/2} ∫₀ᵗ r₀(s) sin(√λ (t − s)) ds` on the trace's grid.
pub fn lambda_profile(r0: &TimeTrace, lambda: f64) -> Result<TimeTrace> {
    duhamel_coefficient(r0, lambda)
}

/// `Λ(t₀)` computed on a grid fine enough for `r₀` and ending at `t₀`.
pub fn lambda_at(r0: &TimeTrace, lambda: f64, t0: f64) -> Result<f64> {
    if !(t0 > 0.0) {
        return Err(Error::InvalidParameter(format!("t0 must be positive, got {t0}")));
    }
    let base = r0.grid().step();
    let grid = TimeGrid::with_max_step(t0, base.min(t0 / 64.0))?;
    let tr = match r0.descriptor() {
        Some(e) => TimeTrace::from_expr(e.clone(), grid)?,
        None => r0.resample(&grid),
    };
    Ok(*lambda_profile(&tr, lambda)?.values().last().expect("grid has nodes"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionCoefficients {
    pub b1: Vec<f64>,
    pub d: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Initial data of `u₁` and `u₂` from `fₘ(0)`, `fₘ′(0)` and the corner values.
pub fn expansion_coefficients(f0: &[f64], f0_dt: &[f64], c: &CornerValues) -> Result<ExpansionCoefficients> {
    if f0.len() != f0_dt.len() {
        return Err(Error::LengthMismatch {
            expected: f0.len(),
            got: f0_dt.len(),
        });
    }
    Ok(ExpansionCoefficients {
        b1: f0.iter().map(|f| -c.rho0_tau * f).collect(),
        d: f0.iter().map(|f| -c.rho0 * f).collect(),
        b2: f0.iter().zip(f0_dt).map(|(f, df)| df * c.rho0 + f * c.rho0_t).collect(),
    })
}

/// Sinusoid `a cos κt + (b/κ) sin κt` and its derivative on a grid.
fn free_oscillation(a: f64, b: f64, lambda: f64, grid: &TimeGrid) -> (Vec<f64>, Vec<f64>) {
    let k = lambda.sqrt();
    grid.times()
        .map(|t| {
            let (s, c) = (k * t).sin_cos();
            (a * c + b / k * s, -a * k * s + b * c)
        })
        .unzip()
}

#[derive(Debug, Clone)]
pub struct AsymptoticExpansion {
    pub u0: SpaceTimeField,
    pub u1: SpaceTimeField,
    pub u2: SpaceTimeField,
    /// Mode traces of `f`; `v₂ = Σ fₘ(t) ρ₀(t, ωt) yₘ`.
    pub f_modes: Vec<TimeTrace>,
    pub rho0: FastProfile,
    pub rho1: FastProfile,
    pub corners: CornerValues,
    pub coefficients: ExpansionCoefficients,
}

/// Build `u₀, u₁, u₂, v₂` on `grid`; the result does not depend on `ω`.
pub fn build_expansion(basis: &EigenBasis, f: &SpaceTimeFunction, r: &OscillatorySource, grid: TimeGrid) -> Result<AsymptoticExpansion> {
    let f_modes = f.mode_traces(basis, &grid)?;
    build_expansion_modal(basis, f_modes, r, grid)
}

pub fn build_expansion_modal(basis: &EigenBasis, f_modes: Vec<TimeTrace>, r: &OscillatorySource, grid: TimeGrid) -> Result<AsymptoticExpansion> {
    let r = r.resample(&grid);
    let f_modes: Vec<TimeTrace> = f_modes.iter().map(|t| t.resample(&grid)).collect();
    let p0 = rho0(r.fast());
    let p1 = rho1(&p0);
    let corners = corner_values(&p0, &p1)?;
    let f0: Vec<f64> = f_modes.iter().map(|t| t.value_at(0.0)).collect();
    let f0_dt: Vec<f64> = f_modes.iter().map(|t| t.derivative_at(0.0, 1)).collect();
    let coefficients = expansion_coefficients(&f0, &f0_dt, &corners)?;
    let lambdas = basis.eigenvalues();

    let (a0, v0): (Vec<Vec<f64>>, Vec<Vec<f64>>) = f_modes
        .par_iter()
        .zip(lambdas.par_iter())
        .map(|(fm, lam)| duhamel_with_velocity(&fm.mul(r.r0()), *lam))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    let u0 = SpaceTimeField::new(grid, a0, v0)?;
    let sinusoids = |a: &dyn Fn(usize) -> f64, b: &dyn Fn(usize) -> f64| -> Result<SpaceTimeField> {
        let (c, v): (Vec<Vec<f64>>, Vec<Vec<f64>>) = (0..lambdas.len())
            .map(|m| free_oscillation(a(m), b(m), lambdas[m], &grid))
            .unzip();
        SpaceTimeField::new(grid, c, v)
    };
    let u1 = sinusoids(&|_| 0.0, &|m| coefficients.b1[m])?;
    let u2 = sinusoids(&|m| coefficients.d[m], &|m| coefficients.b2[m])?;
    Ok(AsymptoticExpansion {
        u0,
        u1,
        u2,
        f_modes,
        rho0: p0,
        rho1: p1,
        corners,
        coefficients,
    })
}

impl AsymptoticExpansion {
    pub fn grid(&self) -> &TimeGrid {
        self.u0.grid()
    }

    /// Modal coefficients of `U_ω` at every grid node.
    pub fn modal_values(&self, omega: f64) -> Vec<Vec<f64>> {
        let fast = self.rho0.eval_on_grid(omega);
        let (w1, w2) = (1.0 / omega, 1.0 / (omega * omega));
        (0..self.u0.modes())
            .map(|m| {
                let fm = self.f_modes[m].values();
                (0..self.grid().len())
                    .map(|i| {
                        self.u0.coefficient_values(m)[i]
                            + w1 * self.u1.coefficient_values(m)[i]
                            + w2 * (self.u2.coefficient_values(m)[i] + fm[i] * fast[i])
                    })
                    .collect()
            })
            .collect()
    }

    /// `U_ω(x, t)` at a grid node.
    pub fn eval_node(&self, basis: &EigenBasis, omega: f64, x: &[f64], i: usize) -> Result<f64> {
        let y = basis.mode_values_at(x)?;
        let t = self.grid().t(i);
        let fast = self.rho0.eval(t, omega * t);
        let (w1, w2) = (1.0 / omega, 1.0 / (omega * omega));
        Ok((0..self.u0.modes())
            .map(|m| {
                let c = self.u0.coefficient_values(m)[i]
                    + w1 * self.u1.coefficient_values(m)[i]
                    + w2 * (self.u2.coefficient_values(m)[i] + self.f_modes[m].values()[i] * fast);
                c * y[m]
            })
            .sum())
    }
}

/// `U_ω` at each `(x, t)` pair.
pub fn evaluate_expansion(exp: &AsymptoticExpansion, basis: &EigenBasis, omega: f64, points: &[(Vec<f64>, f64)]) -> Result<Vec<f64>> {
    if !(omega > 0.0) {
        return Err(Error::InvalidParameter(format!("omega must be positive, got {omega}")));
    }
    let w1 = 1.0 / omega;
    let w2 = w1 * w1;
    points
        .iter()
        .map(|(x, t)| {
            let y = basis.mode_values_at(x)?;
            let fast = exp.rho0.eval(*t, omega * t);
            Ok((0..exp.u0.modes())
                .map(|m| {
                    let c = exp.u0.coefficient_at(m, *t)
                        + w1 * exp.u1.coefficient_at(m, *t)
                        + w2 * (exp.u2.coefficient_at(m, *t) + exp.f_modes[m].value_at(*t) * fast);
                    c * y[m]
                })
                .sum())
        })
        .collect()
}

/// Order of the comparison in [`residual_norm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResidualOrder {
    /// `u_ω − u₀`
    Leading,
    /// `u_ω − U_ω`
    Second,
}

/// Sup over `points × grid nodes` of `|u_ω − u₀|` or `|u_ω − U_ω|`.
pub fn residual_norm(
    u: &SpaceTimeField,
    exp: &AsymptoticExpansion,
    basis: &EigenBasis,
    omega: f64,
    order: ResidualOrder,
    points: &[Vec<f64>],
) -> Result<f64> {
    if u.grid() != exp.grid() {
        return Err(Error::GridMismatch);
    }
    let approx: Vec<Vec<f64>> = match order {
        ResidualOrder::Leading => (0..exp.u0.modes()).map(|m| exp.u0.coefficient_values(m).to_vec()).collect(),
        ResidualOrder::Second => exp.modal_values(omega),
    };
    let diff: Vec<Vec<f64>> = (0..u.modes())
        .map(|m| u.coefficient_values(m).iter().zip(&approx[m]).map(|(a, b)| a - b).collect())
        .collect();
    let ys: Vec<Vec<f64>> = points.iter().map(|p| basis.mode_values_at(p)).collect::<Result<_>>()?;
    let worst = (0..u.grid().len())
        .into_par_iter()
        .map(|i| {
            ys.iter()
                .map(|y| diff.iter().zip(y).map(|(d, ym)| d[i] * ym).sum::<f64>().abs())
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    if !worst.is_finite() {
        return Err(Error::NonFinite("residual".into()));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::forward::solve_direct;
    use crate::source::split_source;
    use crate::spectral_basis::build_dirichlet_interval_basis;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn lambda_profile_examples() {
        let g = TimeGrid::new(PI, 200).unwrap();
        let one = TimeTrace::constant(1.0, g);
        assert_abs_diff_eq!(*lambda_profile(&one, 1.0).unwrap().values().last().unwrap(), 2.0, epsilon = 1e-12);
        assert!(lambda_profile(&TimeTrace::zeros(g), 3.0).unwrap().is_zero());
        let s = TimeTrace::from_expr(Expr::parse("t").unwrap(), g).unwrap();
        let l = lambda_profile(&s, 1.0).unwrap();
        for (i, t) in g.times().enumerate() {
            assert_abs_diff_eq!(l.values()[i], t - t.sin(), epsilon = 1e-12);
        }
        assert!(lambda_profile(&one, -1.0).is_err());
        assert_abs_diff_eq!(lambda_at(&one, 1.0, PI).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn coefficient_examples() {
        let g = TimeGrid::new(1.0, 10).unwrap();
        let corners = |src: &str| {
            let r = split_source(&Expr::parse(src).unwrap(), g).unwrap();
            let p0 = rho0(r.fast());
            corner_values(&p0, &rho1(&p0)).unwrap()
        };
        let c = expansion_coefficients(&[2.0, 0.5], &[0.0, 0.0], &corners("cos(tau)")).unwrap();
        assert_eq!(c.b1, vec![0.0, 0.0]);
        assert_eq!(c.d, vec![2.0, 0.5]);
        assert_eq!(c.b2, vec![0.0, 0.0]);
        let c = expansion_coefficients(&[2.0], &[0.0], &corners("sin(tau)")).unwrap();
        assert_eq!(c.b1, vec![2.0]);
        let c = expansion_coefficients(&[0.0], &[0.0], &corners("cos(tau) + sin(3*tau)")).unwrap();
        assert_eq!((c.b1[0], c.d[0], c.b2[0]), (0.0, 0.0, 0.0));
    }

    #[test]
    fn closed_form_expansion() {
        let b = build_dirichlet_interval_basis(PI, 3).unwrap();
        let omega = 100.0;
        let g = TimeGrid::resolving(3.0, omega, 32, 31).unwrap();
        let f = SpaceTimeFunction::parse("sin(x)").unwrap();
        let r = split_source(&Expr::parse("cos(tau)").unwrap(), g).unwrap();
        let exp = build_expansion(&b, &f, &r, g).unwrap();
        assert!(exp.u0.coefficient_values(0).iter().all(|v| v.abs() < 1e-15));
        let v = evaluate_expansion(&exp, &b, omega, &[(vec![PI / 2.0], 1.0)]).unwrap()[0];
        assert_abs_diff_eq!(v, (1.0f64.cos() - 100.0f64.cos()) / (omega * omega), epsilon = 1e-12);
        let u = solve_direct(&b, &f, &r, omega, g).unwrap();
        let pts = b.sample_points(33);
        let r2 = residual_norm(&u, &exp, &b, omega, ResidualOrder::Second, &pts).unwrap();
        assert!(r2 <= 2.0 / (omega * omega * (omega * omega - 1.0)) * 1.0001, "r2 = {r2}");
        let r0 = residual_norm(&u, &exp, &b, omega, ResidualOrder::Leading, &pts).unwrap();
        assert!(r0 <= 2.0 / (omega * omega - 1.0));
    }

    #[test]
    fn slow_source_expansion_is_leading_term() {
        let b = build_dirichlet_interval_basis(PI, 3).unwrap();
        let g = TimeGrid::new(2.0, 400).unwrap();
        let f = SpaceTimeFunction::parse("sin(x)").unwrap();
        let r = split_source(&Expr::parse("1").unwrap(), g).unwrap();
        let exp = build_expansion(&b, &f, &r, g).unwrap();
        for (i, t) in g.times().enumerate() {
            let want = (PI / 2.0).sqrt() * (1.0 - t.cos());
            assert_abs_diff_eq!(exp.u0.coefficient_values(0)[i], want, epsilon = 1e-12);
        }
        let u = solve_direct(&b, &f, &r, 5.0, g).unwrap();
        let pts = b.sample_points(17);
        let a = residual_norm(&u, &exp, &b, 5.0, ResidualOrder::Leading, &pts).unwrap();
        let c = residual_norm(&u, &exp, &b, 5.0, ResidualOrder::Second, &pts).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let b = build_dirichlet_interval_basis(PI, 2).unwrap();
        let g = TimeGrid::new(1.0, 100).unwrap();
        let f = SpaceTimeFunction::parse("sin(x)").unwrap();
        let r = split_source(&Expr::parse("1").unwrap(), g).unwrap();
        let exp = build_expansion(&b, &f, &r, g).unwrap();
        let u = SpaceTimeField::zeros(TimeGrid::new(1.0, 50).unwrap(), 2);
        assert!(matches!(
            residual_norm(&u, &exp, &b, 1.0, ResidualOrder::Leading, &[vec![1.0]]),
            Err(Error::GridMismatch)
        ));
    }
}
