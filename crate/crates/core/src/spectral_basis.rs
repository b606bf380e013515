//! Dirichlet eigenbases of the elliptic operator `L u = ∇·(a∇u) − c u` and
//! projection/synthesis between fields and Fourier coefficients.
//!
//! Eigenvalues are those of `−L`, so `L yₘ = −λₘ yₘ` with `0 < λ₁ ≤ λ₂ ≤ …`
//! and every mode amplitude obeys `a″ + λₘ a = Fₘ`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Expr, Var};
use crate::quadrature::{gauss_legendre_panels, CubicSpline};
use crate::trace::{TimeGrid, TimeTrace};
use crate::tridiag::lowest_eigenpairs;

const GAUSS_ORDER: usize = 12;
const DOMAIN_TOL: f64 = 1e-12;

/// Isotropic divergence-form operator `L u = Σᵢ ∂ᵢ(a ∂ᵢu) − c u`.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticOperator {
    a: Expr,
    c: Expr,
    dim: usize,
}

impl EllipticOperator {
    pub fn laplacian(dim: usize) -> Self {
        EllipticOperator {
            a: Expr::Num(1.0),
            c: Expr::Num(0.0),
            dim,
        }
    }

    pub fn apply(&self, f: &Expr) -> Expr {
        let mut out = Expr::Num(0.0);
        for i in 0..self.dim {
            let v = Var::X(i as u8);
            out = out + (self.a.clone() * f.diff(v)).diff(v);
        }
        out - self.c.clone() * f.clone()
    }

    pub fn coefficients(&self) -> (&Expr, &Expr) {
        (&self.a, &self.c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Interval { length: f64 },
    Rectangle { lengths: Vec<f64> },
    SturmLiouville { length: f64, grid_n: usize },
}

impl Domain {
    pub fn lengths(&self) -> Vec<f64> {
        match self {
            Domain::Interval { length } | Domain::SturmLiouville { length, .. } => vec![*length],
            Domain::Rectangle { lengths } => lengths.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lengths().len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    /// Multi-index (one entry per dimension; the mode number for grid bases).
    pub index: Vec<usize>,
    pub eigenvalue: f64,
}

#[derive(Debug, Clone)]
enum Shapes {
    Sine { lengths: Vec<f64> },
    Grid { splines: Vec<CubicSpline> },
}

/// Spatial quadrature on the domain; points are stored row-major.
#[derive(Debug, Clone)]
pub struct Quadrature {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

impl Quadrature {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn tensor(axes: &[(Vec<f64>, Vec<f64>)]) -> Quadrature {
        let dim = axes.len();
        let mut coords = Vec::new();
        let mut weights = Vec::new();
        let total: usize = axes.iter().map(|a| a.0.len()).product();
        for flat in 0..total {
            let mut rem = flat;
            let mut w = 1.0;
            let mut p = vec![0.0; dim];
            for d in (0..dim).rev() {
                let n = axes[d].0.len();
                let k = rem % n;
                rem /= n;
                p[d] = axes[d].0[k];
                w *= axes[d].1[k];
            }
            coords.extend_from_slice(&p);
            weights.push(w);
        }
        Quadrature { dim, coords, weights }
    }
}

/// Truncated Dirichlet eigenbasis with its spatial quadrature.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    domain: Domain,
    operator: EllipticOperator,
    modes: Vec<Mode>,
    shapes: Shapes,
    quadrature: Quadrature,
    /// `node_values[m][q] = y_m(x_q)`.
    node_values: Vec<Vec<f64>>,
}

/// `λ = (mπ/L)²`, `y = √(2/L) sin(mπx/L)` on `(0, L)`.
pub fn build_dirichlet_interval_basis(length: f64, modes: usize) -> Result<EigenBasis> {
    if !(length > 0.0 && length.is_finite()) {
        return Err(Error::InvalidParameter(format!("interval length must be positive, got {length}")));
    }
    if modes == 0 {
        return Err(Error::InvalidParameter("basis needs at least one mode".into()));
    }
    let list = (1..=modes)
        .map(|m| Mode {
            index: vec![m],
            eigenvalue: (m as f64 * PI / length).powi(2),
        })
        .collect();
    let (x, w) = gauss_legendre_panels(0.0, length, 2 * modes + 2, GAUSS_ORDER);
    let quadrature = Quadrature::tensor(&[(x, w)]);
    Ok(EigenBasis::assemble(
        Domain::Interval { length },
        EllipticOperator::laplacian(1),
        list,
        Shapes::Sine { lengths: vec![length] },
        quadrature,
    ))
}

/// Tensor-product sine modes on a box, sorted by eigenvalue with ties broken
/// by lexicographic multi-index.
pub fn build_rectangle_basis(lengths: &[f64], modes: usize) -> Result<EigenBasis> {
    if lengths.is_empty() || lengths.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(Error::InvalidParameter(format!("box side lengths must be positive, got {lengths:?}")));
    }
    if modes == 0 {
        return Err(Error::InvalidParameter("basis needs at least one mode".into()));
    }
    let dim = lengths.len();
    let eig = |idx: &[usize]| -> f64 {
        idx.iter()
            .zip(lengths)
            .map(|(i, l)| (*i as f64 * PI / l).powi(2))
            .sum()
    };
    // the M-th smallest value among the "one axis excited" modes bounds the
    // M-th eigenvalue from above
    let mut axis: Vec<f64> = (0..dim)
        .flat_map(|d| {
            (1..=modes).map(move |k| {
                let mut idx = vec![1; dim];
                idx[d] = k;
                idx
            })
        })
        .collect::<std::collections::BTreeSet<Vec<usize>>>()
        .iter()
        .map(|idx| eig(idx))
        .collect();
    axis.sort_by(f64::total_cmp);
    let bound = axis[modes - 1] * (1.0 + 1e-12);
    let max_index: Vec<usize> = lengths
        .iter()
        .map(|l| ((l * bound.sqrt() / PI).floor() as usize).max(1))
        .collect();
    let mut candidates = Vec::new();
    let mut idx = vec![1usize; dim];
    loop {
        let lam = eig(&idx);
        if lam <= bound {
            candidates.push(Mode {
                index: idx.clone(),
                eigenvalue: lam,
            });
        }
        // odometer over the index box, last axis fastest
        let mut d = dim;
        while d > 0 && idx[d - 1] == max_index[d - 1] {
            idx[d - 1] = 1;
            d -= 1;
        }
        if d == 0 {
            break;
        }
        idx[d - 1] += 1;
    }
    candidates.sort_by(|a, b| a.eigenvalue.total_cmp(&b.eigenvalue).then_with(|| a.index.cmp(&b.index)));
    candidates.truncate(modes);
    let axes: Vec<(Vec<f64>, Vec<f64>)> = (0..dim)
        .map(|d| {
            let top = candidates.iter().map(|m| m.index[d]).max().unwrap_or(1);
            gauss_legendre_panels(0.0, lengths[d], 2 * top + 2, GAUSS_ORDER)
        })
        .collect();
    Ok(EigenBasis::assemble(
        Domain::Rectangle {
            lengths: lengths.to_vec(),
        },
        EllipticOperator::laplacian(dim),
        candidates,
        Shapes::Sine {
            lengths: lengths.to_vec(),
        },
        Quadrature::tensor(&axes),
    ))
}

/// Discrete eigenpairs of `−(a u′)′ + c u` on `(0, length)` with Dirichlet
/// ends, from the symmetric three-point discretization on `grid_n` nodes.
/// Eigenvectors are normalized in the discrete `L₂` inner product and
/// interpolated between nodes by cubic splines.
pub fn build_sturm_liouville_basis(length: f64, a: &Expr, c: &Expr, grid_n: usize, modes: usize) -> Result<EigenBasis> {
    if !(length > 0.0 && length.is_finite()) {
        return Err(Error::InvalidParameter(format!("interval length must be positive, got {length}")));
    }
    if modes == 0 {
        return Err(Error::InvalidParameter("basis needs at least one mode".into()));
    }
    if grid_n < modes + 3 {
        return Err(Error::InvalidParameter(format!(
            "grid of {grid_n} nodes cannot resolve {modes} modes"
        )));
    }
    for e in [a, c] {
        if e.depends_on(Var::T) || e.depends_on(Var::Tau) || e.space_dim() > 1 {
            return Err(Error::InvalidParameter(format!("coefficient `{e}` must depend on x only")));
        }
    }
    let h = length / (grid_n - 1) as f64;
    let xs: Vec<f64> = (0..grid_n).map(|i| i as f64 * h).collect();
    let a_half: Vec<f64> = (0..grid_n - 1).map(|i| a.eval_x(&[(i as f64 + 0.5) * h])).collect();
    for (i, x) in xs.iter().enumerate() {
        let v = a.eval_x(&[*x]);
        if !(v > 0.0) {
            return Err(Error::Ellipticity { x: *x, value: v });
        }
        if let Some(ah) = a_half.get(i) {
            if !(*ah > 0.0) {
                return Err(Error::Ellipticity {
                    x: x + 0.5 * h,
                    value: *ah,
                });
            }
        }
        let cv = c.eval_x(&[*x]);
        if !(cv >= 0.0) {
            return Err(Error::InvalidParameter(format!("c(x) = {cv} < 0 at x = {x}")));
        }
    }
    let n = grid_n - 2;
    let h2 = h * h;
    let diag: Vec<f64> = (1..=n)
        .map(|i| (a_half[i - 1] + a_half[i]) / h2 + c.eval_x(&[xs[i]]))
        .collect();
    let off: Vec<f64> = (1..n).map(|i| -a_half[i] / h2).collect();
    let pairs = lowest_eigenpairs(&diag, &off, modes)?;
    let mut list = Vec::with_capacity(modes);
    let mut splines = Vec::with_capacity(modes);
    for (k, (lambda, v)) in pairs.into_iter().enumerate() {
        if !(lambda > 0.0) {
            return Err(Error::EigenSolve(format!("non-positive eigenvalue {lambda}")));
        }
        let scale = 1.0 / h.sqrt();
        let sign = if v[0] < 0.0 { -1.0 } else { 1.0 };
        let mut full = vec![0.0; grid_n];
        for i in 0..n {
            full[i + 1] = sign * scale * v[i];
        }
        list.push(Mode {
            index: vec![k + 1],
            eigenvalue: lambda,
        });
        splines.push(CubicSpline::new(xs.clone(), full));
    }
    let interior = xs[1..grid_n - 1].to_vec();
    let quadrature = Quadrature {
        dim: 1,
        weights: vec![h; interior.len()],
        coords: interior,
    };
    Ok(EigenBasis::assemble(
        Domain::SturmLiouville { length, grid_n },
        EllipticOperator {
            a: a.clone(),
            c: c.clone(),
            dim: 1,
        },
        list,
        Shapes::Grid { splines },
        quadrature,
    ))
}

impl EigenBasis {
    fn assemble(domain: Domain, operator: EllipticOperator, modes: Vec<Mode>, shapes: Shapes, quadrature: Quadrature) -> Self {
        let mut basis = EigenBasis {
            domain,
            operator,
            modes,
            shapes,
            quadrature,
            node_values: Vec::new(),
        };
        basis.node_values = match &basis.shapes {
            // grid bases: quadrature nodes are the grid nodes themselves
            Shapes::Grid { splines } => splines
                .iter()
                .map(|sp| {
                    (0..basis.quadrature.len())
                        .map(|q| sp.eval(basis.quadrature.point(q)[0]))
                        .collect()
                })
                .collect(),
            Shapes::Sine { .. } => (0..basis.modes.len())
                .into_par_iter()
                .map(|m| {
                    (0..basis.quadrature.len())
                        .map(|q| basis.mode_value(m, basis.quadrature.point(q)))
                        .collect()
                })
                .collect(),
        };
        basis
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn operator(&self) -> &EllipticOperator {
        &self.operator
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    /// Eigenvalue of the mode at zero-based position `m`.
    pub fn eigenvalue(&self, m: usize) -> f64 {
        self.modes[m].eigenvalue
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.eigenvalue).collect()
    }

    pub fn quadrature(&self) -> &Quadrature {
        &self.quadrature
    }

    /// `y_m` sampled on the quadrature nodes.
    pub fn node_values(&self, m: usize) -> &[f64] {
        &self.node_values[m]
    }

    fn mode_value(&self, m: usize, x: &[f64]) -> f64 {
        match &self.shapes {
            Shapes::Sine { lengths } => self.modes[m]
                .index
                .iter()
                .zip(lengths)
                .zip(x)
                .map(|((i, l), xi)| (2.0 / l).sqrt() * (*i as f64 * PI * xi / l).sin())
                .product(),
            Shapes::Grid { splines } => splines[m].eval(x[0]),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.domain.lengths())
                .all(|(xi, l)| *xi >= -DOMAIN_TOL && *xi <= l + DOMAIN_TOL)
    }

    pub fn is_interior(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.domain.lengths())
                .all(|(xi, l)| *xi > DOMAIN_TOL && *xi < l - DOMAIN_TOL)
    }

    /// `y_m(x)` for the zero-based mode position `m`.
    pub fn eval_mode(&self, m: usize, x: &[f64]) -> Result<f64> {
        if !self.contains(x) {
            return Err(Error::OutsideDomain(x.to_vec()));
        }
        Ok(self.mode_value(m, x))
    }

    /// All mode values at one point.
    pub fn mode_values_at(&self, x: &[f64]) -> Result<Vec<f64>> {
        if !self.contains(x) {
            return Err(Error::OutsideDomain(x.to_vec()));
        }
        Ok((0..self.len()).map(|m| self.mode_value(m, x)).collect())
    }

    /// Points on the boundary used for trace checks.
    pub fn boundary_points(&self) -> Vec<Vec<f64>> {
        let lengths = self.domain.lengths();
        if lengths.len() == 1 {
            return vec![vec![0.0], vec![lengths[0]]];
        }
        let per_edge: usize = 16;
        let dim = lengths.len();
        let mut pts = Vec::new();
        for fixed in 0..dim {
            for side in [0.0, lengths[fixed]] {
                // sample the face on a per_edge^(dim-1) lattice
                let free: Vec<usize> = (0..dim).filter(|d| *d != fixed).collect();
                let total = per_edge.pow(free.len() as u32);
                for flat in 0..total {
                    let mut p = vec![0.0; dim];
                    p[fixed] = side;
                    let mut rem = flat;
                    for &d in &free {
                        let k = rem % per_edge;
                        rem /= per_edge;
                        p[d] = lengths[d] * k as f64 / (per_edge - 1) as f64;
                    }
                    pts.push(p);
                }
            }
        }
        pts
    }

    /// Uniform sample lattice with about `n` points (including the boundary)
    /// for sup-norm evaluation.
    pub fn sample_points(&self, n: usize) -> Vec<Vec<f64>> {
        let lengths = self.domain.lengths();
        let dim = lengths.len();
        let per = ((n as f64).powf(1.0 / dim as f64).round() as usize).max(2);
        let total = per.pow(dim as u32);
        (0..total)
            .map(|flat| {
                let mut rem = flat;
                let mut p = vec![0.0; dim];
                for d in (0..dim).rev() {
                    let k = rem % per;
                    rem /= per;
                    p[d] = lengths[d] * k as f64 / (per - 1) as f64;
                }
                p
            })
            .collect()
    }

    /// Matrix `∫ yᵢ yⱼ` under the basis quadrature.
    pub fn gram_matrix(&self) -> Vec<Vec<f64>> {
        let w = self.quadrature.weights();
        (0..self.len())
            .into_par_iter()
            .map(|i| {
                (0..self.len())
                    .map(|j| {
                        self.node_values[i]
                            .iter()
                            .zip(&self.node_values[j])
                            .zip(w)
                            .map(|((a, b), w)| a * b * w)
                            .sum()
                    })
                    .collect()
            })
            .collect()
    }

    fn project_node_values(&self, values: &[f64]) -> Vec<f64> {
        let w = self.quadrature.weights();
        self.node_values
            .iter()
            .map(|ym| ym.iter().zip(w).zip(values).map(|((y, w), f)| y * w * f).sum())
            .collect()
    }
}

/// A function of the spatial variable: a closed-form expression with exact
/// `L`-applications, samples on a 1-D grid, or Fourier coefficients.
#[derive(Debug, Clone, PartialEq)]
pub enum SpatialField {
    Expression(Expr),
    Tabulated { xs: Vec<f64>, values: Vec<f64> },
    Modal(Vec<f64>),
}

impl SpatialField {
    pub fn parse(src: &str) -> Result<Self> {
        let e = Expr::parse(src)?;
        if e.depends_on(Var::T) || e.depends_on(Var::Tau) {
            return Err(Error::InvalidParameter(format!("spatial field `{src}` depends on time")));
        }
        Ok(SpatialField::Expression(e))
    }

    pub fn zero() -> Self {
        SpatialField::Modal(Vec::new())
    }

    fn spline(xs: &[f64], values: &[f64]) -> Result<CubicSpline> {
        if xs.len() != values.len() {
            return Err(Error::LengthMismatch {
                expected: xs.len(),
                got: values.len(),
            });
        }
        if xs.len() < 2 || xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("tabulated nodes must be increasing, at least two".into()));
        }
        Ok(CubicSpline::new(xs.to_vec(), values.to_vec()))
    }

    /// Values on the basis quadrature nodes.
    pub fn node_values(&self, basis: &EigenBasis) -> Result<Vec<f64>> {
        let q = basis.quadrature();
        let vals: Vec<f64> = match self {
            SpatialField::Expression(e) => (0..q.len()).map(|i| e.eval_x(q.point(i))).collect(),
            SpatialField::Tabulated { xs, values } => {
                if basis.dim() != 1 {
                    return Err(Error::InvalidParameter("tabulated fields are one-dimensional".into()));
                }
                let sp = SpatialField::spline(xs, values)?;
                (0..q.len()).map(|i| sp.eval(q.point(i)[0])).collect()
            }
            SpatialField::Modal(c) => {
                let c = padded(c, basis.len())?;
                (0..q.len())
                    .map(|i| c.iter().enumerate().map(|(m, cm)| cm * basis.node_values(m)[i]).sum())
                    .collect()
            }
        };
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field value on a quadrature node".into()));
        }
        Ok(vals)
    }

    pub fn eval(&self, x: &[f64], basis: &EigenBasis) -> Result<f64> {
        if !basis.contains(x) {
            return Err(Error::OutsideDomain(x.to_vec()));
        }
        match self {
            SpatialField::Expression(e) => Ok(e.eval_x(x)),
            SpatialField::Tabulated { xs, values } => Ok(SpatialField::spline(xs, values)?.eval(x[0])),
            SpatialField::Modal(c) => Ok(synthesize(c, basis, &[x.to_vec()])?[0]),
        }
    }
}

fn padded(c: &[f64], m: usize) -> Result<Vec<f64>> {
    if c.len() > m {
        return Err(Error::LengthMismatch {
            expected: m,
            got: c.len(),
        });
    }
    let mut out = c.to_vec();
    out.resize(m, 0.0);
    Ok(out)
}

/// Fourier coefficients `fₘ = ∫ f yₘ dx` under the basis quadrature.
pub fn project(field: &SpatialField, basis: &EigenBasis) -> Result<Vec<f64>> {
    if let SpatialField::Modal(c) = field {
        let mut out = c.clone();
        out.resize(basis.len(), 0.0);
        return Ok(out);
    }
    Ok(basis.project_node_values(&field.node_values(basis)?))
}

/// `Σₘ cₘ yₘ(x)` at each point.
pub fn synthesize(coeffs: &[f64], basis: &EigenBasis, points: &[Vec<f64>]) -> Result<Vec<f64>> {
    let c = padded(coeffs, basis.len())?;
    points
        .iter()
        .map(|p| {
            let y = basis.mode_values_at(p)?;
            Ok(c.iter().zip(&y).map(|(a, b)| a * b).sum())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceLevel {
    pub order: usize,
    pub max_abs: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryTraceReport {
    pub levels: Vec<TraceLevel>,
    pub tolerance: f64,
    pub passed: bool,
}

/// Sup of `|Lʲ field|` over boundary sample points for `j = 0..=order`.
pub fn check_boundary_traces(field: &SpatialField, basis: &EigenBasis, order: usize, tolerance: f64) -> Result<BoundaryTraceReport> {
    let points = basis.boundary_points();
    let mut levels = Vec::with_capacity(order + 1);
    match field {
        SpatialField::Expression(e) => {
            let mut cur = e.clone();
            for j in 0..=order {
                let max_abs = points.iter().map(|p| cur.eval_x(p).abs()).fold(0.0, f64::max);
                levels.push(level(j, max_abs, tolerance));
                if j < order {
                    cur = basis.operator().apply(&cur);
                }
            }
        }
        SpatialField::Modal(c) => {
            let c = padded(c, basis.len())?;
            let values: Vec<Vec<f64>> = points.iter().map(|p| basis.mode_values_at(p)).collect::<Result<_>>()?;
            for j in 0..=order {
                let max_abs = values
                    .iter()
                    .map(|y| {
                        c.iter()
                            .zip(y)
                            .zip(basis.modes())
                            .map(|((cm, ym), mode)| cm * (-mode.eigenvalue).powi(j as i32) * ym)
                            .sum::<f64>()
                            .abs()
                    })
                    .fold(0.0, f64::max);
                levels.push(level(j, max_abs, tolerance));
            }
        }
        SpatialField::Tabulated { xs, values } => {
            if order > 1 {
                return Err(Error::NotDifferentiable(order));
            }
            let sp = SpatialField::spline(xs, values)?;
            let (a, c) = basis.operator().coefficients();
            for j in 0..=order {
                let max_abs = points
                    .iter()
                    .map(|p| {
                        let [v, dv, ddv] = sp.eval_with_derivatives(p[0]);
                        if j == 0 {
                            v.abs()
                        } else {
                            let av = a.eval_x(p);
                            let da = a.diff(Var::X(0)).eval_x(p);
                            (av * ddv + da * dv - c.eval_x(p) * v).abs()
                        }
                    })
                    .fold(0.0, f64::max);
                levels.push(level(j, max_abs, tolerance));
            }
        }
    }
    let passed = levels.iter().all(|l| l.passed);
    Ok(BoundaryTraceReport {
        levels,
        tolerance,
        passed,
    })
}

fn level(order: usize, max_abs: f64, tolerance: f64) -> TraceLevel {
    TraceLevel {
        order,
        max_abs,
        passed: max_abs <= tolerance,
    }
}

/// A space-time function `f(x, t)` given as an expression. Sums of
/// separated products `g(t)h(x)` are projected once per term, giving mode
/// traces with exact time derivatives; anything else is projected node by node.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeFunction {
    expr: Expr,
    terms: Option<Vec<(Expr, Expr)>>,
}

impl SpaceTimeFunction {
    pub fn new(expr: Expr) -> Result<Self> {
        if expr.depends_on(Var::Tau) {
            return Err(Error::InvalidParameter(format!("`{expr}` must not depend on tau")));
        }
        let terms = separate(&expr);
        Ok(SpaceTimeFunction { expr, terms })
    }

    pub fn parse(src: &str) -> Result<Self> {
        SpaceTimeFunction::new(Expr::parse(src)?)
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn is_time_invariant(&self) -> bool {
        !self.expr.depends_on(Var::T)
    }

    pub fn is_separable(&self) -> bool {
        self.terms.is_some()
    }

    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        self.expr.eval_xt(x, t)
    }

    pub fn at_time(&self, t: f64) -> SpatialField {
        SpatialField::Expression(self.expr.substitute(Var::T, t))
    }

    /// Value at a fixed point as a function of time (exact descriptor).
    pub fn at_point(&self, x: &[f64], grid: TimeGrid) -> Result<TimeTrace> {
        let mut e = self.expr.clone();
        for (i, xi) in x.iter().enumerate() {
            e = e.substitute(Var::X(i as u8), *xi);
        }
        if e.depends_on_space() {
            return Err(Error::InvalidParameter("point has too few coordinates".into()));
        }
        TimeTrace::from_expr(e, grid)
    }

    /// `∂ₜᵏ f(·, t)` projected onto the basis.
    pub fn mode_derivatives_at(&self, basis: &EigenBasis, t: f64, order: usize) -> Result<Vec<f64>> {
        let d = self.expr.diff_n(Var::T, order).substitute(Var::T, t);
        project(&SpatialField::Expression(d), basis)
    }

    /// Mode coefficient traces `fₘ(t)` on the grid.
    pub fn mode_traces(&self, basis: &EigenBasis, grid: &TimeGrid) -> Result<Vec<TimeTrace>> {
        match &self.terms {
            Some(terms) => {
                let projected: Vec<(Expr, Vec<f64>)> = terms
                    .iter()
                    .map(|(g, h)| Ok((g.clone(), project(&SpatialField::Expression(h.clone()), basis)?)))
                    .collect::<Result<_>>()?;
                (0..basis.len())
                    .map(|m| {
                        let desc = projected
                            .iter()
                            .fold(Expr::Num(0.0), |acc, (g, c)| acc + Expr::Num(c[m]) * g.clone());
                        TimeTrace::from_expr(desc, *grid)
                    })
                    .collect()
            }
            None => {
                let per_time: Vec<Vec<f64>> = grid
                    .times()
                    .collect::<Vec<_>>()
                    .par_iter()
                    .map(|t| project(&self.at_time(*t), basis))
                    .collect::<Result<_>>()?;
                (0..basis.len())
                    .map(|m| TimeTrace::from_values(*grid, per_time.iter().map(|c| c[m]).collect()))
                    .collect()
            }
        }
    }
}

/// Split `e` into `Σ g_j(t) h_j(x)` when every additive term is a product of
/// factors that each depend on time or space but not both.
fn separate(e: &Expr) -> Option<Vec<(Expr, Expr)>> {
    fn terms(e: &Expr, sign: f64, out: &mut Vec<(f64, Expr)>) {
        match e {
            Expr::Add(a, b) => {
                terms(a, sign, out);
                terms(b, sign, out);
            }
            Expr::Sub(a, b) => {
                terms(a, sign, out);
                terms(b, -sign, out);
            }
            Expr::Neg(a) => terms(a, -sign, out),
            other => out.push((sign, other.clone())),
        }
    }
    fn factors(e: &Expr, inverse: bool, out: &mut Vec<(bool, Expr)>) {
        match e {
            Expr::Mul(a, b) => {
                factors(a, inverse, out);
                factors(b, inverse, out);
            }
            Expr::Div(a, b) => {
                factors(a, inverse, out);
                factors(b, !inverse, out);
            }
            other => out.push((inverse, other.clone())),
        }
    }
    let mut list = Vec::new();
    terms(e, 1.0, &mut list);
    let mut out = Vec::with_capacity(list.len());
    for (sign, term) in list {
        let mut fs = Vec::new();
        factors(&term, false, &mut fs);
        let mut g = Expr::Num(sign);
        let mut h = Expr::Num(1.0);
        for (inv, f) in fs {
            let space = f.depends_on_space();
            let time = f.depends_on(Var::T);
            if space && time {
                return None;
            }
            let slot = if space { &mut h } else { &mut g };
            let cur = std::mem::replace(slot, Expr::Num(0.0));
            *slot = if inv { cur / f } else { cur * f };
        }
        out.push((g, h));
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn interval_eigenpairs() {
        let b = build_dirichlet_interval_basis(PI, 3).unwrap();
        assert_eq!(b.eigenvalues(), vec![1.0, 4.0, 9.0]);
        assert_abs_diff_eq!(b.eval_mode(0, &[PI / 2.0]).unwrap(), (2.0 / PI).sqrt(), epsilon = 1e-15);
        let b = build_dirichlet_interval_basis(1.0, 2).unwrap();
        assert_abs_diff_eq!(b.eigenvalue(1), 4.0 * PI * PI, epsilon = 1e-12);
        assert!(build_dirichlet_interval_basis(-1.0, 2).is_err());
        assert!(build_dirichlet_interval_basis(1.0, 0).is_err());
    }

    #[test]
    fn rectangle_ordering_and_values() {
        let b = build_rectangle_basis(&[PI, PI], 2).unwrap();
        assert_eq!(b.eigenvalues(), vec![2.0, 5.0]);
        let b = build_rectangle_basis(&[PI, PI], 4).unwrap();
        let idx: Vec<Vec<usize>> = b.modes().iter().map(|m| m.index.clone()).collect();
        assert_eq!(idx, vec![vec![1, 1], vec![1, 2], vec![2, 1], vec![2, 2]]);
        assert_abs_diff_eq!(b.eval_mode(0, &[PI / 2.0, PI / 2.0]).unwrap(), 2.0 / PI, epsilon = 1e-15);
        assert!(build_rectangle_basis(&[PI, 0.0], 2).is_err());
    }

    #[test]
    fn rectangle_enumeration_matches_brute_force() {
        let lengths = [1.0, 1.7];
        let b = build_rectangle_basis(&lengths, 30).unwrap();
        let mut all: Vec<(f64, Vec<usize>)> = Vec::new();
        for i in 1..40 {
            for j in 1..40 {
                let lam = (i as f64 * PI / lengths[0]).powi(2) + (j as f64 * PI / lengths[1]).powi(2);
                all.push((lam, vec![i, j]));
            }
        }
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        for (mode, (lam, idx)) in b.modes().iter().zip(&all) {
            assert_eq!(&mode.index, idx);
            assert_abs_diff_eq!(mode.eigenvalue, *lam, epsilon = 1e-12);
        }
    }

    #[test]
    fn gram_is_identity() {
        for b in [
            build_dirichlet_interval_basis(PI, 64).unwrap(),
            build_rectangle_basis(&[1.0, 2.0], 64).unwrap(),
        ] {
            let g = b.gram_matrix();
            for (i, row) in g.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    assert_abs_diff_eq!(*v, if i == j { 1.0 } else { 0.0 }, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn sturm_liouville_matches_analytic() {
        let one = Expr::Num(1.0);
        let b = build_sturm_liouville_basis(PI, &one, &Expr::Num(0.0), 2000, 1).unwrap();
        assert_abs_diff_eq!(b.eigenvalue(0), 1.0, epsilon = 1e-5);
        let b3 = build_sturm_liouville_basis(PI, &one, &Expr::Num(3.0), 2000, 1).unwrap();
        assert_abs_diff_eq!(b3.eigenvalue(0), 4.0, epsilon = 1e-5);
        // eigenfunction agrees with √(2/π) sin x
        assert_abs_diff_eq!(b.eval_mode(0, &[1.0]).unwrap(), (2.0 / PI).sqrt() * 1.0f64.sin(), epsilon = 1e-5);
        let coarse = build_sturm_liouville_basis(PI, &one, &Expr::Num(0.0), 1000, 1).unwrap();
        let ratio = (coarse.eigenvalue(0) - 1.0).abs() / (b.eigenvalue(0) - 1.0).abs();
        assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn sturm_liouville_rejects_non_elliptic() {
        let a = Expr::parse("x - 1").unwrap();
        assert!(matches!(
            build_sturm_liouville_basis(PI, &a, &Expr::Num(0.0), 200, 2),
            Err(Error::Ellipticity { .. })
        ));
    }

    #[test]
    fn projection_examples() {
        let b = build_dirichlet_interval_basis(PI, 6).unwrap();
        let c = project(&SpatialField::parse("sin(x)").unwrap(), &b).unwrap();
        assert_abs_diff_eq!(c[0], (PI / 2.0).sqrt(), epsilon = 1e-12);
        for v in &c[1..] {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-12);
        }
        let zero = project(&SpatialField::parse("0").unwrap(), &b).unwrap();
        assert!(zero.iter().all(|v| *v == 0.0));
        let y3 = SpatialField::parse("sqrt(2/pi)*sin(3*x)").unwrap();
        let c = project(&y3, &b).unwrap();
        for (m, v) in c.iter().enumerate() {
            assert_abs_diff_eq!(*v, if m == 2 { 1.0 } else { 0.0 }, epsilon = 1e-12);
        }
        let bad = SpatialField::Tabulated {
            xs: vec![0.0, 1.0, 2.0],
            values: vec![0.0, 1.0],
        };
        assert!(matches!(project(&bad, &b), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn tabulated_projection_via_spline() {
        let b = build_dirichlet_interval_basis(PI, 4).unwrap();
        let xs: Vec<f64> = (0..=400).map(|i| PI * i as f64 / 400.0).collect();
        let values = xs.iter().map(|x| x.sin()).collect();
        let c = project(&SpatialField::Tabulated { xs, values }, &b).unwrap();
        assert_abs_diff_eq!(c[0], (PI / 2.0).sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn synthesize_examples() {
        let b = build_dirichlet_interval_basis(PI, 5).unwrap();
        let v = synthesize(&[1.0], &b, &[vec![PI / 2.0]]).unwrap();
        assert_abs_diff_eq!(v[0], (2.0 / PI).sqrt(), epsilon = 1e-15);
        let z = synthesize(&[0.0; 5], &b, &[vec![0.3], vec![2.0]]).unwrap();
        assert_eq!(z, vec![0.0, 0.0]);
        assert!(matches!(synthesize(&[1.0], &b, &[vec![4.0]]), Err(Error::OutsideDomain(_))));
        assert!(synthesize(&[1.0; 6], &b, &[vec![1.0]]).is_err());
    }

    #[test]
    fn boundary_trace_examples() {
        let b = build_dirichlet_interval_basis(PI, 4).unwrap();
        let r = check_boundary_traces(&SpatialField::parse("sin(x)").unwrap(), &b, 2, 1e-10).unwrap();
        assert!(r.passed);
        let r = check_boundary_traces(&SpatialField::parse("x*(pi - x)").unwrap(), &b, 1, 1e-10).unwrap();
        assert!(r.levels[0].passed);
        assert!(!r.levels[1].passed);
        assert_abs_diff_eq!(r.levels[1].max_abs, 2.0, epsilon = 1e-12);
        let r = check_boundary_traces(&SpatialField::parse("0").unwrap(), &b, 3, 1e-10).unwrap();
        assert!(r.passed);
        let modal = check_boundary_traces(&SpatialField::Modal(vec![1.0, 0.0, 0.3]), &b, 3, 1e-10).unwrap();
        assert!(modal.passed);
        let tab = SpatialField::Tabulated {
            xs: vec![0.0, 1.0, 2.0, 3.0],
            values: vec![0.0; 4],
        };
        assert!(matches!(check_boundary_traces(&tab, &b, 2, 1e-10), Err(Error::NotDifferentiable(2))));
    }

    #[test]
    fn separable_sources_give_exact_mode_traces() {
        let b = build_dirichlet_interval_basis(PI, 4).unwrap();
        let f = SpaceTimeFunction::parse("exp(-t)*(sin(x) + 0.3*sin(3*x))").unwrap();
        assert!(f.is_separable());
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let tr = f.mode_traces(&b, &grid).unwrap();
        assert_abs_diff_eq!(tr[0].value_at(0.5), (PI / 2.0).sqrt() * (-0.5f64).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(tr[2].derivative_at(0.0, 1), -0.3 * (PI / 2.0).sqrt(), epsilon = 1e-12);
        let g = SpaceTimeFunction::parse("sin(x + t)").unwrap();
        assert!(!g.is_separable());
        let tg = g.mode_traces(&b, &grid).unwrap();
        // sin(x+t) projected on y1: √(π/2) cos t
        assert_abs_diff_eq!(tg[0].value_at(0.3), (PI / 2.0).sqrt() * 0.3f64.cos(), epsilon = 1e-12);
    }
}
