//! Configuration-driven experiments: asymptotic order studies, inverse
//! round trips and report output.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{build_expansion, lambda_at, residual_norm, ExpansionCoefficients, ResidualOrder};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::forward::{solve_direct, solve_direct_modal, SpaceTimeField, MIN_POINTS_PER_PERIOD};
use crate::inverse::{check_admissibility, ip1_recover, ip2_recover, ip3_build_targets, ip3_recover, ObservationData};
use crate::source::{split_source, FastProfile, HarmonicSpec, OscillatorySource};
use crate::spectral_basis::{
    build_dirichlet_interval_basis, build_rectangle_basis, build_sturm_liouville_basis, project, EigenBasis, SpaceTimeFunction,
    SpatialField,
};
use crate::trace::{TimeGrid, TimeTrace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BasisSpec {
    Interval {
        length: f64,
        modes: usize,
    },
    Rectangle {
        lengths: Vec<f64>,
        modes: usize,
    },
    SturmLiouville {
        length: f64,
        #[serde(default = "one")]
        a: String,
        #[serde(default = "zero")]
        c: String,
        grid_n: usize,
        modes: usize,
    },
}

fn one() -> String {
    "1".into()
}

fn zero() -> String {
    "0".into()
}

impl BasisSpec {
    pub fn build(&self) -> Result<EigenBasis> {
        match self {
            BasisSpec::Interval { length, modes } => build_dirichlet_interval_basis(*length, *modes),
            BasisSpec::Rectangle { lengths, modes } => build_rectangle_basis(lengths, *modes),
            BasisSpec::SturmLiouville {
                length,
                a,
                c,
                grid_n,
                modes,
            } => build_sturm_liouville_basis(*length, &Expr::parse(a)?, &Expr::parse(c)?, *grid_n, *modes),
        }
    }

    pub fn modes(&self) -> usize {
        match self {
            BasisSpec::Interval { modes, .. } | BasisSpec::Rectangle { modes, .. } | BasisSpec::SturmLiouville { modes, .. } => *modes,
        }
    }
}

/// `f(x, t)` and `r(t, τ)`; `r` either as one expression or as `r0` plus harmonics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub f: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r0: Option<String>,
    #[serde(default)]
    pub r1: Vec<HarmonicSpec>,
}

impl SourceSpec {
    pub fn f(&self) -> Result<SpaceTimeFunction> {
        SpaceTimeFunction::parse(&self.f)
    }

    pub fn r(&self, grid: TimeGrid) -> Result<OscillatorySource> {
        match (&self.r, &self.r0) {
            (Some(r), None) if self.r1.is_empty() => split_source(&Expr::parse(r)?, grid),
            (None, r0) => OscillatorySource::from_spec(r0.as_deref().unwrap_or("0"), &self.r1, grid),
            _ => Err(Error::Config("give either `r` or `r0`/`r1`, not both".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationSpec {
    pub x0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub order2_slope: f64,
    pub order0_slope: f64,
    pub r0: f64,
    pub r1: f64,
    pub f: f64,
    /// Factor `C` in the re-simulation bound `C ω⁻³ max|u|`.
    pub resimulation: f64,
    /// Relative sup error against `reference`.
    pub reference: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            order2_slope: -2.5,
            order0_slope: -0.9,
            r0: 1e-4,
            r1: 1e-10,
            f: 1e-10,
            resimulation: 10.0,
            reference: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub basis: BasisSpec,
    pub source: SourceSpec,
    #[serde(rename = "T", alias = "t_end")]
    pub t_end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub omegas: Vec<f64>,
    #[serde(default = "default_points_per_period")]
    pub points_per_period: usize,
    #[serde(default = "default_n_out")]
    pub n_out: usize,
    #[serde(default = "default_n_tau")]
    pub n_tau: usize,
    #[serde(default = "default_spatial_samples")]
    pub spatial_samples: usize,
    /// Time step for the inverse round trips.
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<ObservationSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Exact `u(x, t)` to compare against; `omega` in the text is replaced by
    /// the frequency of each run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(default)]
    pub seed: u64,
}

fn default_points_per_period() -> usize {
    32
}

fn default_n_out() -> usize {
    101
}

fn default_n_tau() -> usize {
    64
}

fn default_spatial_samples() -> usize {
    64
}

fn default_step() -> f64 {
    1e-3
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        ExperimentConfig::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("T must be positive, got {}", self.t_end));
        }
        if self.basis.modes() == 0 {
            return bad("basis needs at least one mode".into());
        }
        if self.points_per_period < MIN_POINTS_PER_PERIOD {
            return bad(format!(
                "points_per_period = {} puts the time step above (2π/ω)/{MIN_POINTS_PER_PERIOD}",
                self.points_per_period
            ));
        }
        if self.n_out < 2 || self.n_tau < 4 || self.spatial_samples < 2 {
            return bad("n_out, n_tau and spatial_samples are too small".into());
        }
        if !(self.step > 0.0 && self.step < self.t_end) {
            return bad(format!("step must lie in (0, T), got {}", self.step));
        }
        let omegas = self.omega.iter().chain(&self.omegas);
        if omegas.clone().any(|w| !(*w > 0.0 && w.is_finite())) {
            return bad("omega values must be positive".into());
        }
        if self.omegas.windows(2).any(|w| w[1] <= w[0]) {
            return bad("omegas must be strictly increasing".into());
        }
        let t = &self.tolerances;
        if [t.r0, t.r1, t.f, t.resimulation, t.reference].iter().any(|v| !(*v > 0.0)) {
            return bad("tolerances must be positive".into());
        }
        if let Some(obs) = &self.observation {
            let lengths = match &self.basis {
                BasisSpec::Interval { length, .. } | BasisSpec::SturmLiouville { length, .. } => vec![*length],
                BasisSpec::Rectangle { lengths, .. } => lengths.clone(),
            };
            if obs.x0.len() != lengths.len() || obs.x0.iter().zip(&lengths).any(|(x, l)| !(*x > 0.0 && x < l)) {
                return bad(format!("x0 = {:?} is not an interior point", obs.x0));
            }
            if let Some(t0) = obs.t0 {
                if !(t0 > 0.0 && t0 <= self.t_end) {
                    return bad(format!("t0 = {t0} outside (0, T]"));
                }
            }
        }
        Expr::parse(&self.source.f)?;
        if let Some(w) = self.omega_list().first() {
            self.reference_at(*w)?;
        }
        Ok(())
    }

    /// The reference solution at frequency `omega`.
    pub fn reference_at(&self, omega: f64) -> Result<Option<Expr>> {
        let Some(text) = &self.reference else { return Ok(None) };
        let mut out = String::with_capacity(text.len());
        let mut rest = text.as_str();
        while let Some(pos) = rest.find("omega") {
            let before = rest[..pos].chars().last();
            let after = rest[pos + 5..].chars().next();
            let word = |c: Option<char>| c.is_some_and(|c| c.is_alphanumeric() || c == '_');
            out.push_str(&rest[..pos]);
            if word(before) || word(after) {
                out.push_str("omega");
            } else {
                out.push_str(&format!("({omega:?})"));
            }
            rest = &rest[pos + 5..];
        }
        out.push_str(rest);
        Ok(Some(Expr::parse(&out)?))
    }

    fn x0(&self) -> Result<Vec<f64>> {
        self.observation
            .as_ref()
            .map(|o| o.x0.clone())
            .ok_or(Error::Config("missing `observation.x0`".into()))
    }

    fn t0(&self) -> f64 {
        self.observation.as_ref().and_then(|o| o.t0).unwrap_or(self.t_end)
    }

    fn omega_list(&self) -> Vec<f64> {
        if self.omegas.is_empty() {
            self.omega.into_iter().collect()
        } else {
            self.omegas.clone()
        }
    }

    /// Grid resolving the largest configured frequency.
    pub fn fast_grid(&self, omega_max: f64) -> Result<TimeGrid> {
        TimeGrid::resolving(self.t_end, omega_max, self.points_per_period, self.n_out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Criterion {
    pub name: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    pub passed: bool,
}

impl Criterion {
    pub fn at_most(name: impl Into<String>, value: f64, upper: f64) -> Self {
        Criterion {
            name: name.into(),
            value,
            lower: None,
            upper: Some(upper),
            passed: value <= upper,
        }
    }

    pub fn within(name: impl Into<String>, value: f64, lower: f64, upper: f64) -> Self {
        Criterion {
            name: name.into(),
            value,
            lower: Some(lower),
            upper: Some(upper),
            passed: value >= lower && value <= upper,
        }
    }

    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Criterion {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            lower: Some(1.0),
            upper: None,
            passed: ok,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderRow {
    pub omega: f64,
    pub residual_order0: f64,
    pub residual_order2: f64,
    /// Relative sup error against the configured reference solution.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub name: String,
    pub rows: Vec<OrderRow>,
    pub slope_order0: Option<f64>,
    pub slope_order2: Option<f64>,
    pub metrics: BTreeMap<String, f64>,
    pub criteria: Vec<Criterion>,
    /// Wall time; kept out of serialized output so reports are reproducible.
    #[serde(skip)]
    pub runtime: Duration,
}

impl StudyReport {
    pub fn new(name: impl Into<String>) -> Self {
        StudyReport {
            name: name.into(),
            rows: Vec::new(),
            slope_order0: None,
            slope_order2: None,
            metrics: BTreeMap::new(),
            criteria: Vec::new(),
            runtime: Duration::ZERO,
        }
    }

    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }

    pub fn criterion(&self, name: &str) -> Option<&Criterion> {
        self.criteria.iter().find(|c| c.name == name)
    }

    pub fn merge(&mut self, other: StudyReport) {
        let prefix = other.name.clone();
        self.rows.extend(other.rows);
        self.slope_order0 = self.slope_order0.or(other.slope_order0);
        self.slope_order2 = self.slope_order2.or(other.slope_order2);
        for (k, v) in other.metrics {
            self.metrics.insert(format!("{prefix}.{k}"), v);
        }
        for mut c in other.criteria {
            c.name = format!("{prefix}.{}", c.name);
            self.criteria.push(c);
        }
        self.runtime += other.runtime;
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::InvalidParameter("slope fit needs at least three points".into()));
    }
    if y.iter().chain(x).any(|v| !(*v > 0.0)) {
        return Err(Error::NonFinite("non-positive value in slope fit".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Residuals `‖u_ω − u₀‖` and `‖u_ω − U_ω‖` for every configured `ω`, with
/// fitted slopes.
pub fn run_order_study(config: &ExperimentConfig) -> Result<StudyReport> {
    run_order_study_with(config, &config.omega_list())
}

pub fn run_order_study_with(config: &ExperimentConfig, omegas: &[f64]) -> Result<StudyReport> {
    let start = Instant::now();
    if omegas.len() < 3 || omegas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("order study needs at least three increasing omega values".into()));
    }
    let rows = residual_rows(config, omegas)?;
    let mut report = StudyReport::new("order_study");
    let x: Vec<f64> = rows.iter().map(|r| r.omega).collect();
    let r0: Vec<f64> = rows.iter().map(|r| r.residual_order0).collect();
    let r2: Vec<f64> = rows.iter().map(|r| r.residual_order2).collect();
    let s0 = loglog_slope(&x, &r0)?;
    let s2 = loglog_slope(&x, &r2)?;
    report.slope_order0 = Some(s0);
    report.slope_order2 = Some(s2);
    report.criteria.push(Criterion::at_most("order2_slope", s2, config.tolerances.order2_slope));
    let scaled: Vec<f64> = rows.iter().map(|r| r.omega * r.omega * r.residual_order2).collect();
    report
        .criteria
        .push(Criterion::holds("order2_scaled_decreasing", scaled.windows(2).all(|w| w[1] < w[0])));
    report.criteria.push(Criterion::at_most("order0_slope", s0, config.tolerances.order0_slope));
    push_reference_criteria(&mut report, &rows, config);
    report.rows = rows;
    report.runtime = start.elapsed();
    Ok(report)
}

fn push_reference_criteria(report: &mut StudyReport, rows: &[OrderRow], config: &ExperimentConfig) {
    for row in rows {
        if let Some(e) = row.reference_error {
            report
                .criteria
                .push(Criterion::at_most(format!("reference_error@{}", row.omega), e, config.tolerances.reference));
        }
    }
}

/// Residuals at orders 0 and 2 (and against the reference, if any) for each
/// `ω`, all on one grid resolving the largest.
fn residual_rows(config: &ExperimentConfig, omegas: &[f64]) -> Result<Vec<OrderRow>> {
    let basis = config.basis.build()?;
    let grid = config.fast_grid(*omegas.last().expect("non-empty"))?;
    let f = config.source.f()?;
    let r = config.source.r(grid)?;
    let f_modes = f.mode_traces(&basis, &grid)?;
    let exp = crate::asymptotics::build_expansion_modal(&basis, f_modes.clone(), &r, grid)?;
    let points = basis.sample_points(config.spatial_samples);
    let rows: Vec<OrderRow> = omegas
        .par_iter()
        .map(|w| {
            let u = solve_direct_modal(&basis, &f_modes, &r, *w, grid)?;
            let reference_error = match config.reference_at(*w)? {
                Some(exact) => Some(relative_error(&u, &basis, &exact, &points)?),
                None => None,
            };
            Ok(OrderRow {
                omega: *w,
                residual_order0: residual_norm(&u, &exp, &basis, *w, ResidualOrder::Leading, &points)?,
                residual_order2: residual_norm(&u, &exp, &basis, *w, ResidualOrder::Second, &points)?,
                reference_error,
            })
        })
        .collect::<Result<_>>()?;
    Ok(rows)
}

/// Forward runs at every configured `ω` with residual rows and, when a
/// reference is configured, its relative error.
pub fn run_forward_study(config: &ExperimentConfig) -> Result<StudyReport> {
    let start = Instant::now();
    let omegas = config.omega_list();
    if omegas.is_empty() {
        return Err(Error::Config("missing `omega`".into()));
    }
    let rows = residual_rows(config, &omegas)?;
    let mut report = StudyReport::new("forward");
    push_reference_criteria(&mut report, &rows, config);
    report.rows = rows;
    report.runtime = start.elapsed();
    Ok(report)
}

/// `sup |u − exact| / sup |exact|` over grid nodes and `points`.
pub fn relative_error(u: &SpaceTimeField, basis: &EigenBasis, exact: &Expr, points: &[Vec<f64>]) -> Result<f64> {
    let ys: Vec<Vec<f64>> = points.iter().map(|p| basis.mode_values_at(p)).collect::<Result<_>>()?;
    let (err, scale) = (0..u.grid().len())
        .into_par_iter()
        .map(|i| {
            let t = u.grid().t(i);
            let c = u.snapshot(i);
            points.iter().zip(&ys).fold((0.0f64, 0.0f64), |(e, s), (p, y)| {
                let v: f64 = c.iter().zip(y).map(|(a, b)| a * b).sum();
                let ex = exact.eval_xt(p, t);
                (e.max((v - ex).abs()), s.max(ex.abs()))
            })
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    if !(err.is_finite() && scale.is_finite()) {
        return Err(Error::NonFinite("reference comparison".into()));
    }
    Ok(if scale > 0.0 { err / scale } else { err })
}

fn require_time_invariant(f: &SpaceTimeFunction) -> Result<()> {
    if !f.is_time_invariant() {
        return Err(Error::Config("this round trip needs a time-invariant f".into()));
    }
    Ok(())
}

fn inadmissible(report: &crate::inverse::AdmissibilityReport) -> Error {
    Error::Inadmissible(format!(
        "growth {} (|r0(t0)| = {}, |r0(0)| = {}), vanishing modes {:?}, f(x0) ok {:?}",
        report.growth,
        report.r0_at_t0.abs(),
        report.r0_at_zero.abs(),
        report.vanishing_modes,
        report.f_at_x0_ok
    ))
}

/// Synthesize observations from the configured ground truth, recover, and
/// compare.
pub fn run_roundtrip(config: &ExperimentConfig, which: u8) -> Result<StudyReport> {
    let start = Instant::now();
    let mut report = match which {
        1 => roundtrip1(config)?,
        2 => roundtrip2(config)?,
        3 => roundtrip3(config)?,
        _ => return Err(Error::Config(format!("no inverse problem {which}"))),
    };
    report.runtime = start.elapsed();
    Ok(report)
}

fn roundtrip1(config: &ExperimentConfig) -> Result<StudyReport> {
    let basis = config.basis.build()?;
    let grid = TimeGrid::with_max_step(config.t_end, config.step)?;
    let f = config.source.f()?;
    let r = config.source.r(grid)?;
    let x0 = config.x0()?;
    let fx0 = f.at_point(&x0, grid)?;
    let adm = check_admissibility(r.r0(), config.t0(), &basis, Some(&fx0))?;
    if adm.f_at_x0_ok == Some(false) {
        return Err(inadmissible(&adm));
    }
    let exp = build_expansion(&basis, &f, &r, grid)?;
    let data = ObservationData {
        phi0: Some(TimeTrace::from_values(grid, exp.u0.at_point(&basis, &x0)?)?),
        chi: Some(exp.rho0.mul_trace(&fx0)),
        x0: Some(x0.clone()),
        ..Default::default()
    };
    let rec = ip1_recover(&data, &f, &basis)?;
    let r0_err = rec.source.r0().sup_distance(r.r0());
    let r1_err = rec.source.fast().sup_distance(r.fast(), config.n_tau);
    let chi_tt = data.chi.as_ref().expect("set above").d_tau(2);
    let identity = rec.source.fast().mul_trace(&fx0).sup_distance(&chi_tt, config.n_tau);
    let mut report = StudyReport::new("roundtrip1");
    report.metrics.insert("r0_error".into(), r0_err);
    report.metrics.insert("r1_error".into(), r1_err);
    report.metrics.insert("fast_part_identity".into(), identity);
    report.metrics.insert("kernel_last_term".into(), rec.kernel.last_term);
    report.criteria.push(Criterion::at_most("r0_error", r0_err, config.tolerances.r0));
    report.criteria.push(Criterion::at_most("r1_error", r1_err, config.tolerances.r1));
    Ok(report)
}

fn truth_coefficients(basis: &EigenBasis, f: &SpaceTimeFunction) -> Result<Vec<f64>> {
    require_time_invariant(f)?;
    project(&SpatialField::Expression(f.expr().clone()), basis)
}

fn final_field(coefficients: &[f64], r0: &TimeTrace, t0: f64, basis: &EigenBasis) -> Result<SpatialField> {
    let psi: Vec<f64> = coefficients
        .iter()
        .zip(basis.eigenvalues())
        .map(|(c, l)| Ok(c * lambda_at(r0, l, t0)?))
        .collect::<Result<_>>()?;
    Ok(SpatialField::Modal(psi))
}

fn roundtrip2(config: &ExperimentConfig) -> Result<StudyReport> {
    let basis = config.basis.build()?;
    let grid = TimeGrid::with_max_step(config.t_end, config.step)?;
    let f = config.source.f()?;
    let truth = truth_coefficients(&basis, &f)?;
    let r = config.source.r(grid)?;
    let t0 = config.t0();
    let adm = check_admissibility(r.r0(), t0, &basis, None)?;
    if !adm.passed {
        return Err(inadmissible(&adm));
    }
    let psi = final_field(&truth, r.r0(), t0, &basis)?;
    let rec = ip2_recover(&psi, r.r0(), t0, &basis)?;
    let err = rec.coefficients.iter().zip(&truth).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let psi_m = project(&psi, &basis)?;
    let identity = rec
        .coefficients
        .iter()
        .zip(&rec.profiles)
        .zip(&psi_m)
        .fold(0.0f64, |m, ((c, p), s)| m.max((c * p - s).abs()));
    let mut report = StudyReport::new("roundtrip2");
    report.metrics.insert("f_error".into(), err);
    report.metrics.insert("reconstruction_identity".into(), identity);
    report.metrics.insert("c0".into(), adm.c0);
    report.criteria.push(Criterion::at_most("f_error", err, config.tolerances.f));
    report.criteria.push(Criterion::holds("boundary_traces", rec.traces.passed));
    Ok(report)
}

fn roundtrip3(config: &ExperimentConfig) -> Result<StudyReport> {
    let basis = config.basis.build()?;
    let mut omegas = config.omega_list();
    if omegas.is_empty() {
        omegas = vec![100.0, 400.0];
    }
    let grid = config.fast_grid(*omegas.last().expect("non-empty"))?;
    let f = config.source.f()?;
    let truth = truth_coefficients(&basis, &f)?;
    let r = config.source.r(grid)?;
    let (x0, t0) = (config.x0()?, config.t0());
    let adm = check_admissibility(r.r0(), t0, &basis, None)?;
    if !adm.passed {
        return Err(inadmissible(&adm));
    }
    let t0_node = grid
        .node_index(t0)
        .ok_or_else(|| Error::Config(format!("t0 = {t0} is not a node of the simulation grid")))?;
    let exp = build_expansion(&basis, &f, &r, grid)?;
    let fx0 = f.at_point(&x0, grid)?;
    let chi = exp.rho0.mul_trace(&fx0);
    let data = ObservationData {
        phi0: Some(TimeTrace::from_values(grid, exp.u0.at_point(&basis, &x0)?)?),
        chi: Some(chi.clone()),
        psi: Some(final_field(&truth, r.r0(), t0, &basis)?),
        x0: Some(x0.clone()),
        t0: Some(t0),
    };
    let rec = ip3_recover(&data, r.r0(), &basis)?;
    let f_err = rec.f.coefficients.iter().zip(&truth).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let r1_err = rec.r1.sup_distance(r.fast(), config.n_tau);
    let mut report = StudyReport::new("roundtrip3");
    report.metrics.insert("f_error".into(), f_err);
    report.metrics.insert("r1_error".into(), r1_err);
    report.metrics.insert("phi0_mismatch".into(), rec.phi0_mismatch.unwrap_or(0.0));
    report.criteria.push(Criterion::at_most("f_error", f_err, config.tolerances.f));
    report.criteria.push(Criterion::at_most("r1_error", r1_err, config.tolerances.r1));

    // re-simulate with the recovered source
    let recovered = OscillatorySource::new(r.r0().clone(), rec.r1.clone());
    let f_modes: Vec<TimeTrace> = rec.f.coefficients.iter().map(|c| TimeTrace::constant(*c, grid)).collect();
    let targets = ip3_build_targets(&chi, &rec.f.coefficients, &x0, &basis, grid)?;
    let phi0 = data.phi0.as_ref().expect("set above");
    let psi_values = crate::spectral_basis::synthesize(
        match data.psi.as_ref().expect("set above") {
            SpatialField::Modal(c) => c,
            _ => unreachable!("final field is modal"),
        },
        &basis,
        &basis.sample_points(config.spatial_samples),
    )?;
    let points = basis.sample_points(config.spatial_samples);
    let mut psi_errors = Vec::with_capacity(omegas.len());
    for w in &omegas {
        let u = solve_direct_modal(&basis, &f_modes, &recovered, *w, grid)?;
        let ux0 = u.at_point(&basis, &x0)?;
        let fast = chi.eval_on_grid(*w);
        let (w1, w2) = (1.0 / w, 1.0 / (w * w));
        let mismatch = (0..grid.len())
            .map(|i| {
                let target = phi0.values()[i] + w1 * targets.phi1.values()[i] + w2 * (targets.phi2.values()[i] + fast[i]);
                (ux0[i] - target).abs()
            })
            .fold(0.0f64, f64::max);
        let scale = ux0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let psi_err = points
            .iter()
            .zip(&psi_values)
            .map(|(p, v)| Ok((u.eval_node(&basis, p, t0_node)? - v).abs()))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0f64, f64::max);
        report.metrics.insert(format!("point_mismatch@{w}"), mismatch);
        report.metrics.insert(format!("final_time_error@{w}"), psi_err);
        psi_errors.push(psi_err);
        if Some(w) == omegas.last() {
            let bound = config.tolerances.resimulation * w.powi(-3) * scale;
            report.criteria.push(Criterion::at_most("point_resimulation", mismatch, bound));
        }
    }
    report
        .criteria
        .push(Criterion::holds("final_time_monotone", psi_errors.windows(2).all(|w| w[1] <= w[0])));
    Ok(report)
}

/// Forward solution on the output grid, at the configured `ω`.
pub fn run_forward(config: &ExperimentConfig) -> Result<(EigenBasis, SpaceTimeField)> {
    let omega = config
        .omega
        .or_else(|| config.omegas.first().copied())
        .ok_or(Error::Config("missing `omega`".into()))?;
    let basis = config.basis.build()?;
    let grid = config.fast_grid(omega)?;
    let f = config.source.f()?;
    let r = config.source.r(grid)?;
    let u = solve_direct(&basis, &f, &r, omega, grid)?;
    let factor = grid.intervals() / (config.n_out - 1);
    let u = u.subsample(factor)?;
    Ok((basis, u))
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

/// Write a report. CSV holds the per-ω table (header only when empty); JSON
/// mirrors every field.
pub fn emit_report(report: &StudyReport, format: ReportFormat, out: &mut dyn Write) -> Result<()> {
    match format {
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut *out, report)?;
            out.write_all(b"\n")?;
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["omega", "residual_order0", "residual_order2", "reference_error", "slope_order0", "slope_order2"])
                .map_err(csv_error)?;
            let opt = |s: Option<f64>| s.map(fmt).unwrap_or_default();
            for row in &report.rows {
                w.write_record([
                    fmt(row.omega),
                    fmt(row.residual_order0),
                    fmt(row.residual_order2),
                    opt(row.reference_error),
                    opt(report.slope_order0),
                    opt(report.slope_order2),
                ])
                .map_err(csv_error)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidParameter(format!("{other:?}")),
    }
}

/// Long-format CSV `t, x1.., u` for a field on sample points.
pub fn write_field_csv(u: &SpaceTimeField, basis: &EigenBasis, points: &[Vec<f64>], out: &mut dyn Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let dim = basis.dim();
    let mut header = vec!["t".to_string()];
    header.extend((1..=dim).map(|d| format!("x{d}")));
    header.push("u".into());
    w.write_record(&header).map_err(csv_error)?;
    let ys: Vec<Vec<f64>> = points.iter().map(|p| basis.mode_values_at(p)).collect::<Result<_>>()?;
    for i in 0..u.grid().len() {
        let t = u.grid().t(i);
        let c = u.snapshot(i);
        for (p, y) in points.iter().zip(&ys) {
            let v: f64 = c.iter().zip(y).map(|(a, b)| a * b).sum();
            let mut rec = vec![fmt(t)];
            rec.extend(p.iter().map(|x| fmt(*x)));
            rec.push(fmt(v));
            w.write_record(&rec).map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Observation file for the `invert*` commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi0: Option<TraceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chi: Option<Vec<HarmonicSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<FieldSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TraceSpec {
    Expression { expr: String },
    Samples { t_end: f64, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Expression { expr: String },
    Coefficients { coefficients: Vec<f64> },
    Tabulated { xs: Vec<f64>, values: Vec<f64> },
}

impl DataFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Observations on `grid` (sampled `φ₀` keeps its own grid).
    pub fn observations(&self, grid: TimeGrid) -> Result<ObservationData> {
        let phi0 = match &self.phi0 {
            None => None,
            Some(TraceSpec::Expression { expr }) => Some(TimeTrace::from_expr(Expr::parse(expr)?, grid)?),
            Some(TraceSpec::Samples { t_end, values }) => {
                if values.len() < 2 {
                    return Err(Error::Config("phi0 needs at least two samples".into()));
                }
                Some(TimeTrace::from_values(TimeGrid::new(*t_end, values.len() - 1)?, values.clone())?)
            }
        };
        let chi_grid = phi0.as_ref().map_or(grid, |p| *p.grid());
        let chi = self.chi.as_ref().map(|c| FastProfile::from_spec(c, chi_grid)).transpose()?;
        let psi = match &self.psi {
            None => None,
            Some(FieldSpec::Expression { expr }) => Some(SpatialField::parse(expr)?),
            Some(FieldSpec::Coefficients { coefficients }) => Some(SpatialField::Modal(coefficients.clone())),
            Some(FieldSpec::Tabulated { xs, values }) => Some(SpatialField::Tabulated {
                xs: xs.clone(),
                values: values.clone(),
            }),
        };
        Ok(ObservationData {
            phi0,
            chi,
            psi,
            x0: self.x0.clone(),
            t0: self.t0,
        })
    }
}

/// What an `invert*` run on supplied data recovered.
#[derive(Debug, Clone)]
pub struct Inversion {
    pub report: StudyReport,
    /// Recovered `r₀` (IP1) and `r₁` (IP1, IP3).
    pub r0: Option<TimeTrace>,
    pub r1: Option<FastProfile>,
    /// Recovered coefficients of `f` (IP2, IP3).
    pub f: Option<Vec<f64>>,
}

/// Run inverse problem `which` on observed data. The configuration supplies
/// the basis, `T`, the step and the known parts of the source.
pub fn run_inversion(config: &ExperimentConfig, which: u8, data: &DataFile) -> Result<Inversion> {
    let start = Instant::now();
    let basis = config.basis.build()?;
    let grid = TimeGrid::with_max_step(config.t_end, config.step)?;
    let mut obs = data.observations(grid)?;
    if obs.x0.is_none() {
        obs.x0 = config.observation.as_ref().map(|o| o.x0.clone());
    }
    if obs.t0.is_none() {
        obs.t0 = Some(config.t0());
    }
    let mut report = StudyReport::new(format!("invert{which}"));
    let mut out = Inversion {
        report: StudyReport::new(""),
        r0: None,
        r1: None,
        f: None,
    };
    match which {
        1 => {
            let f = config.source.f()?;
            let rec = ip1_recover(&obs, &f, &basis)?;
            report.metrics.insert("kernel_modes".into(), rec.kernel.modes as f64);
            report.metrics.insert("kernel_last_term".into(), rec.kernel.last_term);
            out.r0 = Some(rec.source.r0().clone());
            out.r1 = Some(rec.source.fast().clone());
        }
        2 | 3 => {
            let r0 = config.source.r(grid)?.r0().clone();
            let t0 = obs.t0.expect("set above");
            let adm = check_admissibility(&r0, t0, &basis, None)?;
            report.metrics.insert("c0".into(), adm.c0);
            if !adm.passed {
                return Err(inadmissible(&adm));
            }
            if which == 2 {
                let psi = obs.psi.as_ref().ok_or(Error::MissingData("psi"))?;
                let rec = ip2_recover(psi, &r0, t0, &basis)?;
                report.criteria.push(Criterion::holds("boundary_traces", rec.traces.passed));
                out.f = Some(rec.coefficients);
            } else {
                let rec = ip3_recover(&obs, &r0, &basis)?;
                report.metrics.insert("f_at_x0".into(), rec.f_at_x0);
                if let Some(m) = rec.phi0_mismatch {
                    report.metrics.insert("phi0_mismatch".into(), m);
                }
                report.criteria.push(Criterion::holds("boundary_traces", rec.f.traces.passed));
                out.f = Some(rec.f.coefficients);
                out.r1 = Some(rec.r1);
            }
        }
        _ => return Err(Error::Config(format!("no inverse problem {which}"))),
    }
    report.runtime = start.elapsed();
    out.report = report;
    Ok(out)
}

/// CSV `t, r0, <kind><k>...` with one column per harmonic of `r1`.
pub fn write_source_csv(r0: Option<&TimeTrace>, r1: Option<&FastProfile>, out: &mut dyn Write) -> Result<()> {
    let grid = match (r0, r1) {
        (Some(r), _) => *r.grid(),
        (None, Some(p)) => *p.grid(),
        (None, None) => return Err(Error::MissingData("recovered source")),
    };
    let terms: Vec<(String, TimeTrace)> = r1
        .map(|p| {
            p.terms()
                .iter()
                .map(|h| {
                    let kind = match h.kind {
                        crate::source::HarmonicKind::Cos => "cos",
                        crate::source::HarmonicKind::Sin => "sin",
                    };
                    (format!("{kind}{}", h.k), h.coeff.resample(&grid))
                })
                .collect()
        })
        .unwrap_or_default();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    if r0.is_some() {
        header.push("r0".into());
    }
    header.extend(terms.iter().map(|(n, _)| n.clone()));
    w.write_record(&header).map_err(csv_error)?;
    let r0 = r0.map(|r| r.resample(&grid));
    for i in 0..grid.len() {
        let mut rec = vec![fmt(grid.t(i))];
        if let Some(r) = &r0 {
            rec.push(fmt(r.values()[i]));
        }
        rec.extend(terms.iter().map(|(_, c)| fmt(c.values()[i])));
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Expansion coefficients `b₁, d, b₂` and residual rows at each configured
/// `ω`; slope criteria apply when there are at least three.
pub fn run_asymptotics(config: &ExperimentConfig) -> Result<(StudyReport, ExpansionCoefficients)> {
    let start = Instant::now();
    let omegas = config.omega_list();
    if omegas.is_empty() {
        return Err(Error::Config("missing `omega`".into()));
    }
    let mut report = if omegas.len() >= 3 {
        run_order_study_with(config, &omegas)?
    } else {
        let mut r = StudyReport::new("asymptotics");
        r.rows = residual_rows(config, &omegas)?;
        r
    };
    report.name = "asymptotics".into();
    let basis = config.basis.build()?;
    let grid = TimeGrid::with_max_step(config.t_end, config.step)?;
    let exp = build_expansion(&basis, &config.source.f()?, &config.source.r(grid)?, grid)?;
    report.runtime = start.elapsed();
    Ok((report, exp.coefficients))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn closed_form_config() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{
                "basis": {"kind": "interval", "length": 3.141592653589793, "modes": 4},
                "source": {"f": "sin(x)", "r": "cos(tau)"},
                "T": 3, "omegas": [50, 100, 200], "n_out": 31, "spatial_samples": 17
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn validation() {
        let mut cfg = closed_form_config();
        cfg.points_per_period = 8;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = closed_form_config();
        cfg.omegas = vec![100.0, 50.0, 200.0];
        assert!(cfg.validate().is_err());
        let mut cfg = closed_form_config();
        cfg.tolerances.r0 = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = closed_form_config();
        cfg.observation = Some(ObservationSpec { x0: vec![0.0], t0: None });
        assert!(cfg.validate().is_err());
        assert!(ExperimentConfig::from_json(r#"{"basis": {"kind": "interval", "length": 1, "modes": 2}}"#).is_err());
    }

    #[test]
    fn closed_form_study_slope() {
        let rep = run_order_study(&closed_form_config()).unwrap();
        let s = rep.slope_order2.unwrap();
        assert!((s + 4.0).abs() < 0.1, "slope {s}");
        assert!(rep.passed());
    }

    #[test]
    fn slope_fit() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-2.5)).collect();
        assert!((loglog_slope(&x, &y).unwrap() + 2.5).abs() < 1e-12);
        assert!(loglog_slope(&x[..2], &y[..2]).is_err());
    }

    #[test]
    fn report_output_is_deterministic() {
        let empty = StudyReport::new("empty");
        let mut buf = Vec::new();
        emit_report(&empty, ReportFormat::Csv, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "omega,residual_order0,residual_order2,reference_error,slope_order0,slope_order2\n");
        let cfg = closed_form_config();
        let a = run_order_study(&cfg).unwrap();
        let b = run_order_study(&cfg).unwrap();
        for fmt in [ReportFormat::Csv, ReportFormat::Json] {
            let (mut x, mut y) = (Vec::new(), Vec::new());
            emit_report(&a, fmt, &mut x).unwrap();
            emit_report(&b, fmt, &mut y).unwrap();
            assert_eq!(x, y);
        }
    }

    #[test]
    fn roundtrip_with_zero_fast_part() {
        let cfg = ExperimentConfig::from_json(
            r#"{
                "basis": {"kind": "interval", "length": 3.141592653589793, "modes": 2},
                "source": {"f": "exp(-t)*sin(x)", "r0": "1 + t"},
                "T": 2, "step": 0.002,
                "observation": {"x0": [1.5707963267948966]}
            }"#,
        )
        .unwrap();
        let rep = run_roundtrip(&cfg, 1).unwrap();
        assert_eq!(rep.metrics["r1_error"], 0.0);
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn data_file_formats() {
        let d: DataFile = serde_json::from_str(
            r#"{"phi0": {"t_end": 1, "values": [0, 0.1, 0.4]}, "psi": {"coefficients": [1, 2]},
                "chi": [{"harmonic": 1, "kind": "cos", "coeff": "2"}], "x0": [0.5], "t0": 1}"#,
        )
        .unwrap();
        let obs = d.observations(TimeGrid::new(1.0, 10).unwrap()).unwrap();
        assert_eq!(obs.phi0.unwrap().grid().intervals(), 2);
        assert_eq!(obs.chi.unwrap().grid().intervals(), 2);
        assert_eq!(obs.psi, Some(SpatialField::Modal(vec![1.0, 2.0])));
        let d: DataFile = serde_json::from_str(r#"{"psi": {"expr": "sin(x)"}}"#).unwrap();
        assert!(matches!(d.psi, Some(FieldSpec::Expression { .. })));
    }
}
