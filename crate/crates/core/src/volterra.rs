//! Second-kind Volterra equations `a(t)u(t) + ∫₀ᵗ K(t,s)u(s) ds = g(t)` and
//! the truncated spectral kernel that arises from point observations.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectral_basis::EigenBasis;
use crate::trace::{TimeGrid, TimeTrace};

/// Relative floor on `|a(t)|` below which the equation is rejected.
pub const LEADING_FLOOR: f64 = 1e-8;

pub trait VolterraKernel: Sync {
    fn eval(&self, t: f64, s: f64) -> f64;

    /// `K(tᵢ, tⱼ)` for `j = 0..=i`.
    fn eval_row(&self, grid: &TimeGrid, i: usize) -> Vec<f64> {
        let t = grid.t(i);
        (0..=i).map(|j| self.eval(t, grid.t(j))).collect()
    }
}

/// Kernel given by a closure.
pub struct FnKernel<F>(pub F);

impl<F: Fn(f64, f64) -> f64 + Sync> VolterraKernel for FnKernel<F> {
    fn eval(&self, t: f64, s: f64) -> f64 {
        (self.0)(t, s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelDiagnostics {
    pub modes: usize,
    /// `max_s |√λ_M f_M(s) y_M(x⁰)|` for the last retained mode.
    pub last_term: f64,
    /// All `yₘ(x⁰)` vanish, so the kernel is identically zero.
    pub degenerate: bool,
}

/// `K(t, s) = −Σ √λₘ fₘ(s) sin(√λₘ (t − s)) yₘ(x⁰)`, truncated at `M` modes.
#[derive(Debug, Clone)]
pub struct SpectralKernel {
    kappa: Vec<f64>,
    weights: Vec<f64>,
    f_modes: Vec<TimeTrace>,
    diagnostics: KernelDiagnostics,
}

pub fn build_kernel(basis: &EigenBasis, f_modes: &[TimeTrace], x0: &[f64], modes: usize) -> Result<SpectralKernel> {
    if modes > basis.len() || modes > f_modes.len() {
        return Err(Error::InvalidParameter(format!(
            "kernel truncation {modes} exceeds the {} available modes",
            basis.len().min(f_modes.len())
        )));
    }
    let y = basis.mode_values_at(x0)?;
    let kappa: Vec<f64> = basis.eigenvalues()[..modes].iter().map(|l| l.sqrt()).collect();
    let weights: Vec<f64> = (0..modes).map(|m| kappa[m] * y[m]).collect();
    let degenerate = !basis.is_interior(x0) || y[..modes].iter().all(|v| v.abs() < 1e-12);
    let last_term = if modes == 0 { 0.0 } else { (weights[modes - 1] * f_modes[modes - 1].max_abs()).abs() };
    Ok(SpectralKernel {
        kappa,
        weights,
        f_modes: f_modes[..modes].to_vec(),
        diagnostics: KernelDiagnostics {
            modes,
            last_term,
            degenerate,
        },
    })
}

impl SpectralKernel {
    pub fn diagnostics(&self) -> KernelDiagnostics {
        self.diagnostics
    }
}

impl VolterraKernel for SpectralKernel {
    fn eval(&self, t: f64, s: f64) -> f64 {
        -self
            .kappa
            .iter()
            .zip(&self.weights)
            .zip(&self.f_modes)
            .map(|((k, w), f)| w * f.value_at(s) * (k * (t - s)).sin())
            .sum::<f64>()
    }

    fn eval_row(&self, grid: &TimeGrid, i: usize) -> Vec<f64> {
        let t = grid.t(i);
        let mut row = vec![0.0; i + 1];
        for ((k, w), f) in self.kappa.iter().zip(&self.weights).zip(&self.f_modes) {
            let f = f.resample(grid);
            for (j, r) in row.iter_mut().enumerate() {
                *r -= w * f.values()[j] * (k * (t - grid.t(j))).sin();
            }
        }
        row
    }
}

/// Trapezoidal marching; second order in the step for smooth data.
pub fn solve_second_kind(a: &TimeTrace, kernel: &dyn VolterraKernel, g: &TimeTrace) -> Result<TimeTrace> {
    let grid = *g.grid();
    if *a.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let av = a.values();
    let floor = LEADING_FLOOR * a.max_abs();
    if let Some(i) = av.iter().position(|v| !(v.abs() >= floor) || *v == 0.0) {
        return Err(Error::DegenerateLeadingCoefficient {
            t: grid.t(i),
            value: av[i].abs(),
            floor,
        });
    }
    let h = grid.step();
    let gv = g.values();
    let mut u = Vec::with_capacity(grid.len());
    u.push(gv[0] / av[0]);
    for i in 1..grid.len() {
        let k = kernel.eval_row(&grid, i);
        let mut sum = 0.5 * k[0] * u[0];
        for j in 1..i {
            sum += k[j] * u[j];
        }
        let ui = (gv[i] - h * sum) / (av[i] + 0.5 * h * k[i]);
        if !ui.is_finite() {
            return Err(Error::NonFinite(format!("Volterra solution at t = {}", grid.t(i))));
        }
        u.push(ui);
    }
    TimeTrace::from_values(grid, u)
}

/// Same as [`solve_second_kind`] for a kernel with precomputed node tables,
/// which avoids resampling per row.
pub fn solve_spectral(a: &TimeTrace, kernel: &SpectralKernel, g: &TimeTrace) -> Result<TimeTrace> {
    let grid = *g.grid();
    let tables: Vec<(f64, Vec<f64>, Vec<f64>)> = kernel
        .kappa
        .iter()
        .zip(&kernel.weights)
        .zip(&kernel.f_modes)
        .map(|((k, w), f)| {
            let f = f.resample(&grid);
            // w fₘ(s) sin κ(t−s) = w fₘ(s)[sin κt cos κs − cos κt sin κs]
            let (c, s): (Vec<f64>, Vec<f64>) = grid
                .times()
                .zip(f.values())
                .map(|(t, fv)| {
                    let (sn, cs) = (k * t).sin_cos();
                    (w * fv * cs, w * fv * sn)
                })
                .unzip();
            (*k, c, s)
        })
        .collect();
    let table_kernel = TableKernel { tables: &tables };
    solve_second_kind(a, &table_kernel, g)
}

struct TableKernel<'a> {
    tables: &'a [(f64, Vec<f64>, Vec<f64>)],
}

impl VolterraKernel for TableKernel<'_> {
    fn eval(&self, _t: f64, _s: f64) -> f64 {
        unreachable!("table kernels are only evaluated on their grid")
    }

    fn eval_row(&self, grid: &TimeGrid, i: usize) -> Vec<f64> {
        let mut row = vec![0.0; i + 1];
        let t = grid.t(i);
        for (k, c, s) in self.tables {
            let (st, ct) = (k * t).sin_cos();
            for (j, r) in row.iter_mut().enumerate() {
                *r -= st * c[j] - ct * s[j];
            }
        }
        row
    }
}

/// `max_i |a u + ∫Ku − g|` with the integral by the trapezoid rule on the grid.
pub fn residual(a: &TimeTrace, kernel: &dyn VolterraKernel, g: &TimeTrace, u: &TimeTrace) -> f64 {
    let grid = *g.grid();
    let h = grid.step();
    let mut worst = 0.0f64;
    for i in 0..grid.len() {
        let k = kernel.eval_row(&grid, i);
        let mut integral = 0.0;
        for j in 0..=i {
            let w = if j == 0 || j == i { 0.5 } else { 1.0 };
            integral += w * k[j] * u.values()[j];
        }
        if i == 0 {
            integral = 0.0;
        }
        worst = worst.max((a.values()[i] * u.values()[i] + h * integral - g.values()[i]).abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral_basis::{build_dirichlet_interval_basis, SpaceTimeFunction};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn run(kernel: f64, g: impl Fn(f64) -> f64, h: f64) -> TimeTrace {
        let grid = TimeGrid::with_max_step(1.0, h).unwrap();
        let a = TimeTrace::constant(1.0, grid);
        let g = TimeTrace::from_fn(grid, g).unwrap();
        solve_second_kind(&a, &FnKernel(move |_, _| kernel), &g).unwrap()
    }

    #[test]
    fn examples() {
        let u = run(0.0, |t| t * t, 0.1);
        assert!(u.values().iter().zip(u.grid().times()).all(|(v, t)| (*v - t * t).abs() < 1e-15));
        let u = run(1.0, |_| 1.0, 1e-3);
        assert_abs_diff_eq!(*u.values().last().unwrap(), (-1.0f64).exp(), epsilon = 1e-6);
        let u = run(-1.0, |t| t, 1e-3);
        assert_abs_diff_eq!(*u.values().last().unwrap(), 1.0f64.exp() - 1.0, epsilon = 1e-6);
    }

    #[test]
    fn second_order_convergence() {
        let errs: Vec<f64> = [1e-2, 5e-3, 2.5e-3]
            .iter()
            .map(|h| {
                let u = run(1.0, |_| 1.0, *h);
                u.grid().times().zip(u.values()).map(|(t, v)| (v - (-t).exp()).abs()).fold(0.0, f64::max)
            })
            .collect();
        for w in errs.windows(2) {
            let p = (w[0] / w[1]).log2();
            assert!((1.9..=2.1).contains(&p), "order {p}");
        }
    }

    #[test]
    fn rejects_vanishing_leading_coefficient() {
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let a = TimeTrace::from_fn(grid, |t| t - 0.5).unwrap();
        let g = TimeTrace::constant(1.0, grid);
        assert!(matches!(
            solve_second_kind(&a, &FnKernel(|_, _| 0.0), &g),
            Err(Error::DegenerateLeadingCoefficient { .. })
        ));
    }

    #[test]
    fn spectral_kernel_examples() {
        let b = build_dirichlet_interval_basis(PI, 3).unwrap();
        let grid = TimeGrid::new(2.0, 200).unwrap();
        let f = SpaceTimeFunction::parse("exp(-t)*sin(x)").unwrap();
        let fm = f.mode_traces(&b, &grid).unwrap();
        let x0 = [PI / 2.0];
        let k = build_kernel(&b, &fm, &x0, 3).unwrap();
        let c = b.eval_mode(0, &x0).unwrap();
        let (t, s) = (1.5, 0.4);
        let want = -c * fm[0].value_at(s) * (t - s).sin();
        assert_abs_diff_eq!(k.eval(t, s), want, epsilon = 1e-12);
        assert_eq!(k.eval(t, t), 0.0);
        let row = k.eval_row(&grid, 150);
        assert_abs_diff_eq!(row[40], k.eval(grid.t(150), grid.t(40)), epsilon = 1e-12);

        let zero = SpaceTimeFunction::parse("0").unwrap().mode_traces(&b, &grid).unwrap();
        let kz = build_kernel(&b, &zero, &x0, 3).unwrap();
        assert_eq!(kz.eval(1.0, 0.3), 0.0);
        assert!(build_kernel(&b, &fm, &[0.0], 3).unwrap().diagnostics().degenerate);
        assert!(build_kernel(&b, &fm, &x0, 4).is_err());
    }

    #[test]
    fn spectral_solver_matches_generic() {
        let b = build_dirichlet_interval_basis(PI, 4).unwrap();
        let grid = TimeGrid::new(2.0, 400).unwrap();
        let f = SpaceTimeFunction::parse("exp(-t)*(sin(x) + 0.3*sin(3*x))").unwrap();
        let fm = f.mode_traces(&b, &grid).unwrap();
        let k = build_kernel(&b, &fm, &[1.1], 4).unwrap();
        let a = TimeTrace::from_fn(grid, |t| 1.0 + 0.1 * t).unwrap();
        let g = TimeTrace::from_fn(grid, f64::cos).unwrap();
        let u1 = solve_second_kind(&a, &k, &g).unwrap();
        let u2 = solve_spectral(&a, &k, &g).unwrap();
        assert!(u1.sup_distance(&u2) < 1e-12);
        assert!(residual(&a, &k, &g, &u2) < 1e-12);
    }
}
