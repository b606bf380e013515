//! Uniform time grids and scalar time traces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Expr, Var};
use crate::quadrature::{uniform_derivative, CubicSpline};

/// Uniform grid `0 = t₀ < t₁ < … < t_N = T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_end: f64,
    intervals: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, intervals: usize) -> Result<Self> {
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(Error::InvalidParameter(format!("time horizon must be positive, got {t_end}")));
        }
        if intervals == 0 {
            return Err(Error::InvalidParameter("time grid needs at least one interval".into()));
        }
        Ok(TimeGrid { t_end, intervals })
    }

    /// Smallest uniform grid on `[0, t_end]` whose step does not exceed `max_step`.
    pub fn with_max_step(t_end: f64, max_step: f64) -> Result<Self> {
        if !(max_step > 0.0) {
            return Err(Error::InvalidParameter(format!("step must be positive, got {max_step}")));
        }
        let n = (t_end / max_step - 1e-9).ceil().max(1.0) as usize;
        TimeGrid::new(t_end, n)
    }

    /// Grid resolving the fast phase `ωt` with `points_per_period` nodes per
    /// period, refined so that it contains `n_out` equally spaced output nodes.
    pub fn resolving(t_end: f64, omega: f64, points_per_period: usize, n_out: usize) -> Result<Self> {
        if !(omega > 0.0) {
            return Err(Error::InvalidParameter(format!("omega must be positive, got {omega}")));
        }
        if points_per_period == 0 {
            return Err(Error::InvalidParameter("points per period must be positive".into()));
        }
        let base = TimeGrid::with_max_step(t_end, 2.0 * std::f64::consts::PI / (omega * points_per_period as f64))?;
        let coarse = n_out.max(2) - 1;
        let per = base.intervals.div_ceil(coarse);
        TimeGrid::new(t_end, per * coarse)
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        self.t_end / self.intervals as f64
    }

    pub fn t(&self, i: usize) -> f64 {
        if i == self.intervals {
            self.t_end
        } else {
            self.t_end * i as f64 / self.intervals as f64
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |i| self.t(i))
    }

    /// Index of `t` if it is a grid node (to rounding).
    pub fn node_index(&self, t: f64) -> Option<usize> {
        let x = t / self.step();
        let i = x.round();
        if i >= 0.0 && i <= self.intervals as f64 && (x - i).abs() < 1e-9 {
            Some(i as usize)
        } else {
            None
        }
    }

    /// Coarse grid keeping every `factor`-th node.
    pub fn coarsen(&self, factor: usize) -> Result<TimeGrid> {
        if factor == 0 || self.intervals % factor != 0 {
            return Err(Error::InvalidParameter(format!(
                "cannot coarsen {} intervals by {factor}",
                self.intervals
            )));
        }
        TimeGrid::new(self.t_end, self.intervals / factor)
    }
}

/// Scalar function of time sampled on a uniform grid, optionally backed by
/// an analytic descriptor in `t` that supplies exact values and derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeTrace {
    grid: TimeGrid,
    values: Vec<f64>,
    descriptor: Option<Expr>,
}

impl TimeTrace {
    pub fn from_values(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("trace value at t = {}", grid.t(i))));
        }
        Ok(TimeTrace {
            grid,
            values,
            descriptor: None,
        })
    }

    pub fn from_expr(expr: Expr, grid: TimeGrid) -> Result<Self> {
        if expr.depends_on_space() || expr.depends_on(Var::Tau) {
            return Err(Error::InvalidParameter(format!("`{expr}` is not a function of t alone")));
        }
        let values = grid.times().map(|t| expr.eval_t(t)).collect();
        let mut trace = TimeTrace::from_values(grid, values)?;
        trace.descriptor = Some(expr);
        Ok(trace)
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        TimeTrace::from_values(grid, grid.times().map(f).collect())
    }

    pub fn constant(value: f64, grid: TimeGrid) -> Self {
        TimeTrace {
            grid,
            values: vec![value; grid.len()],
            descriptor: Some(Expr::Num(value)),
        }
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        TimeTrace::constant(0.0, grid)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn descriptor(&self) -> Option<&Expr> {
        self.descriptor.as_ref()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// True when every sample is zero.
    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    fn spline(&self) -> CubicSpline {
        CubicSpline::new(self.grid.times().collect(), self.values.clone())
    }

    /// Value at an arbitrary time: the descriptor if present, otherwise the
    /// node value or cubic-spline interpolation.
    pub fn value_at(&self, t: f64) -> f64 {
        if let Some(e) = &self.descriptor {
            return e.eval_t(t);
        }
        match self.grid.node_index(t) {
            Some(i) => self.values[i],
            None => self.spline().eval(t),
        }
    }

    /// Derivative of the given order at every grid node.
    pub fn derivative_values(&self, order: usize) -> Vec<f64> {
        if order == 0 {
            return self.values.clone();
        }
        match &self.descriptor {
            Some(e) => {
                let d = e.diff_n(Var::T, order);
                self.grid.times().map(|t| d.eval_t(t)).collect()
            }
            None => uniform_derivative(&self.values, self.grid.step(), order),
        }
    }

    /// Derivative trace; exact when a descriptor is present, otherwise by
    /// fourth-order differences.
    pub fn derivative(&self, order: usize) -> TimeTrace {
        let descriptor = self.descriptor.as_ref().map(|e| e.diff_n(Var::T, order));
        TimeTrace {
            grid: self.grid,
            values: self.derivative_values(order),
            descriptor,
        }
    }

    pub fn derivative_at(&self, t: f64, order: usize) -> f64 {
        if let Some(e) = &self.descriptor {
            return e.diff_n(Var::T, order).eval_t(t);
        }
        let d = uniform_derivative(&self.values, self.grid.step(), order);
        match self.grid.node_index(t) {
            Some(i) => d[i],
            None => CubicSpline::new(self.grid.times().collect(), d).eval(t),
        }
    }

    /// Same function on another grid.
    pub fn resample(&self, grid: &TimeGrid) -> TimeTrace {
        if *grid == self.grid {
            return self.clone();
        }
        let values = match &self.descriptor {
            Some(e) => grid.times().map(|t| e.eval_t(t)).collect(),
            None => {
                let sp = self.spline();
                grid.times()
                    .map(|t| match self.grid.node_index(t) {
                        Some(i) => self.values[i],
                        None => sp.eval(t),
                    })
                    .collect()
            }
        };
        TimeTrace {
            grid: *grid,
            values,
            descriptor: self.descriptor.clone(),
        }
    }

    pub fn scale(&self, c: f64) -> TimeTrace {
        TimeTrace {
            grid: self.grid,
            values: self.values.iter().map(|v| v * c).collect(),
            descriptor: self.descriptor.clone().map(|e| Expr::Num(c) * e),
        }
    }

    fn combine(
        &self,
        other: &TimeTrace,
        op: impl Fn(f64, f64) -> f64,
        sym: impl Fn(Expr, Expr) -> Expr,
    ) -> TimeTrace {
        let other = other.resample(&self.grid);
        let values = self.values.iter().zip(&other.values).map(|(a, b)| op(*a, *b)).collect();
        let descriptor = match (&self.descriptor, &other.descriptor) {
            (Some(a), Some(b)) => Some(sym(a.clone(), b.clone())),
            _ => None,
        };
        TimeTrace {
            grid: self.grid,
            values,
            descriptor,
        }
    }

    pub fn add(&self, other: &TimeTrace) -> TimeTrace {
        self.combine(other, |a, b| a + b, |a, b| a + b)
    }

    pub fn sub(&self, other: &TimeTrace) -> TimeTrace {
        self.combine(other, |a, b| a - b, |a, b| a - b)
    }

    pub fn mul(&self, other: &TimeTrace) -> TimeTrace {
        self.combine(other, |a, b| a * b, |a, b| a * b)
    }

    /// Pointwise quotient; fails where the divisor vanishes.
    pub fn div(&self, other: &TimeTrace) -> Result<TimeTrace> {
        let other = other.resample(&self.grid);
        if let Some(i) = other.values.iter().position(|v| *v == 0.0) {
            return Err(Error::DegenerateLeadingCoefficient {
                t: self.grid.t(i),
                value: 0.0,
                floor: 0.0,
            });
        }
        Ok(self.combine(&other, |a, b| a / b, |a, b| a / b))
    }

    /// Drops the analytic descriptor, keeping only samples.
    pub fn sampled(mut self) -> TimeTrace {
        self.descriptor = None;
        self
    }

    /// Subsample onto a coarser grid whose nodes are nodes of this grid.
    pub fn subsample(&self, factor: usize) -> Result<TimeTrace> {
        let grid = self.grid.coarsen(factor)?;
        Ok(TimeTrace {
            grid,
            values: self.values.iter().step_by(factor).copied().collect(),
            descriptor: self.descriptor.clone(),
        })
    }

    pub fn sup_distance(&self, other: &TimeTrace) -> f64 {
        let other = other.resample(&self.grid);
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}
