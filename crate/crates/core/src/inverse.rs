//! Source recovery from point and final-time observations.
//!
//! * Slow and fast parts of `r` from `u(x⁰, ·)` and its fast-phase profile,
//!   with `f` known.
//! * Time-invariant `f` from the final-time field `ψ = u₀(·, t₀)`, with `r₀`
//!   known.
//! * Both `f` and the fast part of `r`, with `r₀` known.

use rayon::prelude::*;
use serde::Serialize;

use crate::asymptotics::{expansion_coefficients, lambda_at, ExpansionCoefficients};
use crate::error::{Error, Result};
use crate::source::{corner_values, rho0, rho1, FastProfile, OscillatorySource};
use crate::spectral_basis::{check_boundary_traces, project, BoundaryTraceReport, EigenBasis, SpaceTimeFunction, SpatialField};
use crate::trace::{TimeGrid, TimeTrace};
use crate::volterra::{build_kernel, solve_spectral, KernelDiagnostics};

/// Relative floor `ε_Λ` on `|Λₘ(t₀)|`.
pub const LAMBDA_FLOOR: f64 = 1e-10;
/// Relative floor on `|f(x⁰)|`.
pub const POINT_FLOOR: f64 = 1e-8;
const TRACE_TOL: f64 = 1e-10;

/// Observations; each pipeline uses a subset.
#[derive(Debug, Clone, Default)]
pub struct ObservationData {
    /// `u₀(x⁰, t)`, with `φ₀(0) = φ₀′(0) = 0`.
    pub phi0: Option<TimeTrace>,
    /// Fast-phase profile `f(x⁰, t) ρ₀(t, τ)`.
    pub chi: Option<FastProfile>,
    /// `u₀(x, t₀)`.
    pub psi: Option<SpatialField>,
    pub x0: Option<Vec<f64>>,
    pub t0: Option<f64>,
}

impl ObservationData {
    fn phi0(&self) -> Result<&TimeTrace> {
        self.phi0.as_ref().ok_or(Error::MissingData("phi0"))
    }

    fn psi(&self) -> Result<&SpatialField> {
        self.psi.as_ref().ok_or(Error::MissingData("psi"))
    }

    fn x0(&self) -> Result<&[f64]> {
        self.x0.as_deref().ok_or(Error::MissingData("x0"))
    }

    fn t0(&self) -> Result<f64> {
        self.t0.ok_or(Error::MissingData("t0"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    pub t0: f64,
    pub r0_at_zero: f64,
    pub r0_at_t0: f64,
    /// `|r₀(t₀)| > |r₀(0)|`.
    pub growth: bool,
    /// `Λₘ(t₀)` for every mode.
    pub profiles: Vec<f64>,
    /// Modes (1-based) whose `|Λₘ(t₀)|` falls below `ε_Λ max(1, 1/λₘ)`.
    pub vanishing_modes: Vec<usize>,
    /// `min λₘ |Λₘ(t₀)|` and the 1-based mode attaining it.
    pub c0: f64,
    pub m0: usize,
    /// `|f(x⁰)|` (minimum over time for time-dependent `f`), when checked.
    pub f_at_x0: Option<f64>,
    pub f_at_x0_ok: Option<bool>,
    pub passed: bool,
}

/// Evaluate the solvability conditions. Never fails on admissible-looking
/// input; the report carries the verdicts.
pub fn check_admissibility(r0: &TimeTrace, t0: f64, basis: &EigenBasis, f_at_x0: Option<&TimeTrace>) -> Result<AdmissibilityReport> {
    let lambdas = basis.eigenvalues();
    let profiles: Vec<f64> = lambdas.par_iter().map(|l| lambda_at(r0, *l, t0)).collect::<Result<_>>()?;
    let vanishing_modes: Vec<usize> = profiles
        .iter()
        .zip(&lambdas)
        .enumerate()
        .filter(|(_, (p, l))| p.abs() < LAMBDA_FLOOR * (1.0f64).max(1.0 / **l))
        .map(|(m, _)| m + 1)
        .collect();
    let (m0, c0) = profiles
        .iter()
        .zip(&lambdas)
        .map(|(p, l)| l * p.abs())
        .enumerate()
        .fold((0, f64::INFINITY), |best, (m, v)| if v < best.1 { (m + 1, v) } else { best });
    let (r0_at_zero, r0_at_t0) = (r0.value_at(0.0), r0.value_at(t0));
    let growth = r0_at_t0.abs() > r0_at_zero.abs();
    let (f_min, f_ok) = match f_at_x0 {
        Some(tr) => {
            let min = tr.values().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
            (Some(min), Some(min >= POINT_FLOOR * tr.max_abs().max(f64::MIN_POSITIVE) && min > 0.0))
        }
        None => (None, None),
    };
    let passed = growth && vanishing_modes.is_empty() && f_ok.unwrap_or(true);
    Ok(AdmissibilityReport {
        t0,
        r0_at_zero,
        r0_at_t0,
        growth,
        profiles,
        vanishing_modes,
        c0,
        m0,
        f_at_x0: f_min,
        f_at_x0_ok: f_ok,
        passed,
    })
}

fn nonvanishing(tr: &TimeTrace) -> Result<()> {
    let floor = POINT_FLOOR * tr.max_abs();
    match tr.values().iter().position(|v| !(v.abs() > floor)) {
        Some(i) => Err(Error::DegenerateLeadingCoefficient {
            t: tr.grid().t(i),
            value: tr.values()[i].abs(),
            floor,
        }),
        None => Ok(()),
    }
}

/// `ρ₀` rebuilt from the observed profile: the zero-mean double
/// antiderivative of `χ_ττ`, divided by `f(x⁰, t)`.
pub fn rho0_from_chi(chi: &FastProfile, f_at_x0: &TimeTrace) -> Result<FastProfile> {
    rho0(&chi.d_tau(2)).div_trace(f_at_x0)
}

/// `Σ (a cos κt + b/κ sin κt) yₘ(x⁰)` on a grid.
fn point_series(a: &[f64], b: &[f64], lambdas: &[f64], y: &[f64], grid: &TimeGrid) -> Result<TimeTrace> {
    TimeTrace::from_fn(*grid, |t| {
        (0..a.len())
            .map(|m| {
                let k = lambdas[m].sqrt();
                let (s, c) = (k * t).sin_cos();
                (a[m] * c + b[m] / k * s) * y[m]
            })
            .sum()
    })
}

#[derive(Debug, Clone)]
pub struct PointTargets {
    pub phi1: TimeTrace,
    pub phi2: TimeTrace,
    pub coefficients: ExpansionCoefficients,
}

/// Targets `φ₁ = u₁(x⁰, ·)` and `φ₂ = u₂(x⁰, ·)` implied by `χ` and `f`.
pub fn ip1_build_targets(chi: &FastProfile, f: &SpaceTimeFunction, x0: &[f64], basis: &EigenBasis, grid: TimeGrid) -> Result<PointTargets> {
    let fx0 = f.at_point(x0, grid)?;
    nonvanishing(&fx0)?;
    let f_modes = f.mode_traces(basis, &grid)?;
    let f0: Vec<f64> = f_modes.iter().map(|t| t.value_at(0.0)).collect();
    let f0_dt: Vec<f64> = f_modes.iter().map(|t| t.derivative_at(0.0, 1)).collect();
    targets_from(chi, &fx0, &f0, &f0_dt, x0, basis, grid)
}

fn targets_from(
    chi: &FastProfile,
    fx0: &TimeTrace,
    f0: &[f64],
    f0_dt: &[f64],
    x0: &[f64],
    basis: &EigenBasis,
    grid: TimeGrid,
) -> Result<PointTargets> {
    let p0 = rho0_from_chi(&chi.resample(&grid), &fx0.resample(&grid))?;
    let corners = corner_values(&p0, &rho1(&p0))?;
    let coefficients = expansion_coefficients(f0, f0_dt, &corners)?;
    let lambdas = basis.eigenvalues();
    let y = basis.mode_values_at(x0)?;
    let zeros = vec![0.0; f0.len()];
    Ok(PointTargets {
        phi1: point_series(&zeros, &coefficients.b1, &lambdas, &y, &grid)?,
        phi2: point_series(&coefficients.d, &coefficients.b2, &lambdas, &y, &grid)?,
        coefficients,
    })
}

fn second_derivative(phi0: &TimeTrace) -> TimeTrace {
    phi0.derivative(2)
}

fn check_zero_start(phi0: &TimeTrace) -> Result<()> {
    let scale = phi0.max_abs().max(1.0);
    let (v, d) = (phi0.value_at(0.0), phi0.derivative_at(0.0, 1));
    let tol = 1e-6 * scale;
    if v.abs() > tol || d.abs() > tol {
        return Err(Error::InvalidParameter(format!(
            "phi0 must start at rest, got phi0(0) = {v:e}, phi0'(0) = {d:e}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Ip1Result {
    pub source: OscillatorySource,
    pub kernel: KernelDiagnostics,
    pub phi0_dd: TimeTrace,
}

/// Recover `r₀` from the Volterra equation
/// `f(x⁰,t) r₀(t) + ∫₀ᵗ K(t,s) r₀(s) ds = φ₀″(t)` and `r₁ = χ_ττ / f(x⁰, t)`.
pub fn ip1_recover(data: &ObservationData, f: &SpaceTimeFunction, basis: &EigenBasis) -> Result<Ip1Result> {
    let phi0 = data.phi0()?;
    let x0 = data.x0()?;
    if !basis.is_interior(x0) {
        return Err(Error::DegeneratePoint(format!("{x0:?} is not an interior point")));
    }
    check_zero_start(phi0)?;
    let grid = *phi0.grid();
    let fx0 = f.at_point(x0, grid)?;
    nonvanishing(&fx0)?;
    let f_modes = f.mode_traces(basis, &grid)?;
    let kernel = build_kernel(basis, &f_modes, x0, basis.len())?;
    if kernel.diagnostics().degenerate {
        return Err(Error::DegeneratePoint(format!("all modes vanish at {x0:?}")));
    }
    let phi0_dd = second_derivative(phi0);
    let r0 = solve_spectral(&fx0, &kernel, &phi0_dd)?;
    let fast = match &data.chi {
        Some(chi) => chi.resample(&grid).d_tau(2).div_trace(&fx0)?,
        None => FastProfile::zero(grid),
    };
    Ok(Ip1Result {
        source: OscillatorySource::new(r0, fast),
        kernel: kernel.diagnostics(),
        phi0_dd,
    })
}

#[derive(Debug, Clone)]
pub struct Ip2Result {
    /// Recovered `fₘ`.
    pub coefficients: Vec<f64>,
    pub profiles: Vec<f64>,
    pub traces: BoundaryTraceReport,
}

impl Ip2Result {
    pub fn field(&self) -> SpatialField {
        SpatialField::Modal(self.coefficients.clone())
    }
}

/// `fₘ = ψₘ / Λₘ(t₀)`.
pub fn ip2_recover(psi: &SpatialField, r0: &TimeTrace, t0: f64, basis: &EigenBasis) -> Result<Ip2Result> {
    let lambdas = basis.eigenvalues();
    let profiles: Vec<f64> = lambdas.par_iter().map(|l| lambda_at(r0, *l, t0)).collect::<Result<_>>()?;
    for (m, (p, l)) in profiles.iter().zip(&lambdas).enumerate() {
        let floor = LAMBDA_FLOOR * (1.0f64).max(1.0 / l);
        if p.abs() < floor {
            return Err(Error::VanishingProfile {
                mode: m + 1,
                value: *p,
                floor,
            });
        }
    }
    let psi_m = project(psi, basis)?;
    let coefficients: Vec<f64> = psi_m.iter().zip(&profiles).map(|(a, b)| a / b).collect();
    let scale = coefficients.iter().fold(1.0f64, |m, c| m.max(c.abs()));
    let traces = check_boundary_traces(&SpatialField::Modal(coefficients.clone()), basis, 1, TRACE_TOL * scale)?;
    Ok(Ip2Result {
        coefficients,
        profiles,
        traces,
    })
}

#[derive(Debug, Clone)]
pub struct Ip3Result {
    pub f: Ip2Result,
    pub f_at_x0: f64,
    pub r1: FastProfile,
    /// `Σ f̃ₘ Λₘ(t) yₘ(x⁰)`, the solution of the Cauchy problem for `φ₀`.
    pub phi0_model: TimeTrace,
    /// `sup |φ₀ − model|` when `φ₀` was supplied.
    pub phi0_mismatch: Option<f64>,
}

/// Recover time-invariant `f̃` from `ψ`, then `r₁ = χ_ττ / f̃(x⁰)`.
pub fn ip3_recover(data: &ObservationData, r0: &TimeTrace, basis: &EigenBasis) -> Result<Ip3Result> {
    let x0 = data.x0()?;
    if !basis.is_interior(x0) {
        return Err(Error::DegeneratePoint(format!("{x0:?} is not an interior point")));
    }
    let t0 = data.t0()?;
    let f = ip2_recover(data.psi()?, r0, t0, basis)?;
    let y = basis.mode_values_at(x0)?;
    let f_at_x0: f64 = f.coefficients.iter().zip(&y).map(|(a, b)| a * b).sum();
    let scale = f.coefficients.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if !(f_at_x0.abs() > POINT_FLOOR * scale) {
        return Err(Error::DegeneratePoint(format!("recovered f vanishes at {x0:?} ({f_at_x0:e})")));
    }
    let grid = match (&data.phi0, &data.chi) {
        (Some(p), _) => *p.grid(),
        (None, Some(c)) => *c.grid(),
        (None, None) => *r0.grid(),
    };
    let r0g = r0.resample(&grid);
    let lambdas = basis.eigenvalues();
    let profiles: Vec<TimeTrace> = lambdas
        .par_iter()
        .map(|l| crate::asymptotics::lambda_profile(&r0g, *l))
        .collect::<Result<_>>()?;
    let phi0_model = TimeTrace::from_values(
        grid,
        (0..grid.len())
            .map(|i| (0..basis.len()).map(|m| f.coefficients[m] * profiles[m].values()[i] * y[m]).sum())
            .collect(),
    )?;
    let phi0_mismatch = data.phi0.as_ref().map(|p| p.sup_distance(&phi0_model));
    let r1 = match &data.chi {
        Some(chi) => chi.resample(&grid).d_tau(2).scale(1.0 / f_at_x0),
        None => FastProfile::zero(grid),
    };
    Ok(Ip3Result {
        f,
        f_at_x0,
        r1,
        phi0_model,
        phi0_mismatch,
    })
}

/// Point targets for time-invariant `f` given by its coefficients.
pub fn ip3_build_targets(chi: &FastProfile, f_modes: &[f64], x0: &[f64], basis: &EigenBasis, grid: TimeGrid) -> Result<PointTargets> {
    let y = basis.mode_values_at(x0)?;
    let fx0: f64 = f_modes.iter().zip(&y).map(|(a, b)| a * b).sum();
    let fx0 = TimeTrace::constant(fx0, grid);
    nonvanishing(&fx0)?;
    targets_from(chi, &fx0, f_modes, &vec![0.0; f_modes.len()], x0, basis, grid)
}
