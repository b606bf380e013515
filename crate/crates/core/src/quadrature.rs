//! Quadrature, interpolation and finite-difference building blocks.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use num_complex::Complex64;

/// Nodes and weights of a composite Gauss–Legendre rule on `[a, b]`.
pub fn gauss_legendre_panels(a: f64, b: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let order = NonZeroUsize::new(order.max(1)).expect("nonzero");
    let rule = GaussLegendre::new(order);
    let panels = panels.max(1);
    let width = (b - a) / panels as f64;
    let mut nodes = Vec::with_capacity(panels * order.get());
    let mut weights = Vec::with_capacity(panels * order.get());
    for p in 0..panels {
        let lo = a + width * p as f64;
        let mid = lo + 0.5 * width;
        for &(x, w) in rule.as_node_weight_pairs() {
            nodes.push(mid + 0.5 * width * x);
            weights.push(0.5 * width * w);
        }
    }
    (nodes, weights)
}

/// Finite-difference weights for derivatives `0..=max_order` at `x0` from
/// arbitrary stencil points (Fornberg's recursion). `w[k][j]` multiplies
/// `f(points[j])` in the k-th derivative.
pub fn fornberg_weights(x0: f64, points: &[f64], max_order: usize) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut c = vec![vec![0.0; n]; max_order + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = points[0] - x0;
    for i in 1..n {
        let mn = i.min(max_order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = points[i] - x0;
        for j in 0..i {
            let c3 = points[i] - points[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Derivative of uniformly sampled data at every node, fourth order in the
/// spacing: centred five-point stencils in the interior and one-sided
/// stencils near the ends.
pub fn uniform_derivative(values: &[f64], h: f64, order: usize) -> Vec<f64> {
    let n = values.len();
    let width = (order + 4).min(n);
    if n == 0 {
        return Vec::new();
    }
    if width <= order {
        return vec![0.0; n];
    }
    let scale = h.powi(order as i32);
    let mut cache: Vec<Option<Vec<f64>>> = vec![None; width];
    let half = width / 2;
    (0..n)
        .map(|i| {
            let start = i.saturating_sub(half).min(n - width);
            let offset = i - start;
            let w = cache[offset].get_or_insert_with(|| {
                let pts: Vec<f64> = (0..width).map(|j| j as f64 - offset as f64).collect();
                fornberg_weights(0.0, &pts, order).swap_remove(order)
            });
            w.iter()
                .zip(&values[start..start + width])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / scale
        })
        .collect()
}

/// `∫₀¹ σ^p e^{iθσ} dσ` for `p = 0..4`.
fn unit_moments(theta: f64) -> [Complex64; 4] {
    let mut m = [Complex64::new(0.0, 0.0); 4];
    if theta.abs() < 1.0 {
        let z = Complex64::new(0.0, theta);
        for (p, mp) in m.iter_mut().enumerate() {
            let mut term = Complex64::new(1.0, 0.0);
            let mut sum = Complex64::new(0.0, 0.0);
            for n in 0..40 {
                let add = term / (n + p + 1) as f64;
                sum += add;
                if add.norm() < 1e-18 {
                    break;
                }
                term = term * z / (n + 1) as f64;
            }
            *mp = sum;
        }
    } else {
        let iz = Complex64::new(0.0, theta);
        let e = Complex64::from_polar(1.0, theta);
        m[0] = (e - 1.0) / iz;
        for p in 1..4 {
            m[p] = (e - p as f64 * m[p - 1]) / iz;
        }
    }
    m
}

/// Monomial coefficients of the Lagrange basis polynomials on `nodes`.
fn lagrange_monomials(nodes: &[f64]) -> Vec<Vec<f64>> {
    nodes
        .iter()
        .enumerate()
        .map(|(j, &xj)| {
            let mut poly = vec![1.0];
            let mut denom = 1.0;
            for (k, &xk) in nodes.iter().enumerate() {
                if k == j {
                    continue;
                }
                let mut next = vec![0.0; poly.len() + 1];
                for (d, c) in poly.iter().enumerate() {
                    next[d + 1] += c;
                    next[d] -= c * xk;
                }
                poly = next;
                denom *= xj - xk;
            }
            poly.iter().map(|c| c / denom).collect()
        })
        .collect()
}

/// Cumulative oscillatory integral `J(tᵢ) = ∫₀^{tᵢ} g(s) e^{iμs} ds` on a
/// uniform grid, where `g` is interpolated by local cubics and the product
/// with the exponential is integrated exactly (Filon-type rule). Accurate
/// for any `μh`; reduces to a fourth-order rule when `μ = 0`.
pub fn cumulative_oscillatory(g: &[f64], h: f64, mu: f64) -> Vec<Complex64> {
    let n = g.len();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    if n < 2 {
        return out;
    }
    let intervals = n - 1;
    let width = n.min(4);
    let m = unit_moments(mu * h);
    // stencil weights by starting offset relative to the interval's left node
    let stencil_weights = |first: isize| -> Vec<Complex64> {
        let nodes: Vec<f64> = (0..width).map(|j| (first + j as isize) as f64).collect();
        lagrange_monomials(&nodes)
            .iter()
            .map(|coefs| {
                coefs
                    .iter()
                    .zip(m.iter())
                    .map(|(c, mp)| mp * *c)
                    .sum::<Complex64>()
                    * h
            })
            .collect()
    };
    let mut acc = Complex64::new(0.0, 0.0);
    if width < 4 {
        // two or three nodes: one global interpolant, shifted per interval
        for i in 0..intervals {
            let local: Complex64 = stencil_weights(-(i as isize))
                .iter()
                .zip(g)
                .map(|(wj, gj)| wj * *gj)
                .sum();
            acc += Complex64::from_polar(1.0, mu * h * i as f64) * local;
            out[i + 1] = acc;
        }
        return out;
    }
    let interior = stencil_weights(-1);
    let first = stencil_weights(0);
    let last = stencil_weights(-2);
    for i in 0..intervals {
        let (start, w) = if i == 0 {
            (0, &first)
        } else if i + 2 >= n {
            (n - 4, &last)
        } else {
            (i - 1, &interior)
        };
        let local: Complex64 = w.iter().zip(&g[start..start + 4]).map(|(wj, gj)| wj * *gj).sum();
        acc += Complex64::from_polar(1.0, mu * h * i as f64) * local;
        out[i + 1] = acc;
    }
    out
}

/// Fourth-order cumulative integral of uniformly sampled real data.
pub fn cumulative_integral(g: &[f64], h: f64) -> Vec<f64> {
    cumulative_oscillatory(g, h, 0.0).into_iter().map(|c| c.re).collect()
}

/// Mean over one period of uniformly spaced periodic samples (the endpoint
/// `2π` is not repeated). The periodic trapezoid rule.
pub fn periodic_mean(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// Cubic spline with end slopes taken from fourth-order one-sided
/// differences, so interpolation error stays O(h⁴) up to the endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl CubicSpline {
    /// `xs` must be strictly increasing with at least two points.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        assert_eq!(xs.len(), ys.len());
        assert!(xs.len() >= 2, "spline needs at least two points");
        let n = xs.len();
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let d: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
        let end_slope = |idx: &[usize]| -> f64 {
            let pts: Vec<f64> = idx.iter().map(|&i| xs[i]).collect();
            let w = fornberg_weights(xs[idx[0]], &pts, 1);
            w[1].iter().zip(idx).map(|(c, &i)| c * ys[i]).sum()
        };
        let take = n.min(5);
        let left = end_slope(&(0..take).collect::<Vec<_>>());
        let right = end_slope(&(0..take).map(|j| n - 1 - j).collect::<Vec<_>>());
        let mut slopes = vec![0.0; n];
        slopes[0] = left;
        slopes[n - 1] = right;
        if n > 2 {
            // tridiagonal system for interior slopes
            let m = n - 2;
            let mut diag = vec![0.0; m];
            let mut upper = vec![0.0; m];
            let mut lower = vec![0.0; m];
            let mut rhs = vec![0.0; m];
            for k in 0..m {
                let i = k + 1;
                lower[k] = h[i];
                diag[k] = 2.0 * (h[i - 1] + h[i]);
                upper[k] = h[i - 1];
                rhs[k] = 3.0 * (h[i] * d[i - 1] + h[i - 1] * d[i]);
            }
            rhs[0] -= lower[0] * left;
            rhs[m - 1] -= upper[m - 1] * right;
            let sol = solve_tridiagonal(&lower, &diag, &upper, &rhs);
            slopes[1..n - 1].copy_from_slice(&sol);
        }
        CubicSpline { xs, ys, slopes }
    }

    fn locate(&self, x: f64) -> usize {
        let n = self.xs.len();
        match self.xs.binary_search_by(|v| v.partial_cmp(&x).unwrap_or(std::cmp::Ordering::Less)) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        }
    }

    /// Value and first two derivatives at `x` (extrapolates the end cubics).
    pub fn eval_with_derivatives(&self, x: f64) -> [f64; 3] {
        let i = self.locate(x);
        let h = self.xs[i + 1] - self.xs[i];
        let s = (x - self.xs[i]) / h;
        let (y0, y1) = (self.ys[i], self.ys[i + 1]);
        let (m0, m1) = (self.slopes[i] * h, self.slopes[i + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        let v = (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * m0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * m1;
        let dv = (6.0 * s2 - 6.0 * s) * y0
            + (3.0 * s2 - 4.0 * s + 1.0) * m0
            + (-6.0 * s2 + 6.0 * s) * y1
            + (3.0 * s2 - 2.0 * s) * m1;
        let ddv = (12.0 * s - 6.0) * y0 + (6.0 * s - 4.0) * m0 + (-12.0 * s + 6.0) * y1 + (6.0 * s - 2.0) * m1;
        [v, dv / h, ddv / (h * h)]
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_with_derivatives(x)[0]
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }
}

/// Thomas algorithm; `lower[0]` and `upper[n-1]` are ignored.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - lower[i] * c[i - 1];
        c[i] = if i + 1 < n { upper[i] / denom } else { 0.0 };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn gauss_panels_integrate_mode_products() {
        let (x, w) = gauss_legendre_panels(0.0, PI, 16, 12);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * (7.0 * x).sin() * (9.0 * x).sin()).sum();
        assert_abs_diff_eq!(s, 0.0, epsilon = 1e-14);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * (8.0 * x).sin().powi(2)).sum();
        assert_abs_diff_eq!(s, PI / 2.0, epsilon = 1e-14);
    }

    #[test]
    fn fornberg_reproduces_classical_stencils() {
        let w = fornberg_weights(0.0, &[-2.0, -1.0, 0.0, 1.0, 2.0], 2);
        let first = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];
        let second = [-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0];
        for j in 0..5 {
            assert_abs_diff_eq!(w[1][j], first[j], epsilon = 1e-14);
            assert_abs_diff_eq!(w[2][j], second[j], epsilon = 1e-14);
        }
    }

    #[test]
    fn uniform_derivative_is_fourth_order() {
        let err = |n: usize| {
            let h = 2.0 / n as f64;
            let v: Vec<f64> = (0..=n).map(|i| (1.3 * i as f64 * h).sin()).collect();
            let d2 = uniform_derivative(&v, h, 2);
            (0..=n)
                .map(|i| (d2[i] + 1.69 * (1.3 * i as f64 * h).sin()).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(40) / err(80);
        assert!(ratio > 12.0, "ratio {ratio}");
    }

    #[test]
    fn filon_is_exact_for_cubics_at_any_frequency() {
        let n = 21;
        let h = 0.15;
        let g: Vec<f64> = (0..n).map(|i| {
            let s = i as f64 * h;
            1.0 - 2.0 * s + 0.5 * s * s * s
        }).collect();
        for mu in [0.0, 0.3, 7.0, 250.0] {
            let j = cumulative_oscillatory(&g, h, mu);
            // reference by dense Gauss quadrature on the exact cubic
            let (x, w) = gauss_legendre_panels(0.0, h * (n - 1) as f64, 400, 12);
            let re: f64 = x.iter().zip(&w).map(|(s, w)| w * (1.0 - 2.0 * s + 0.5 * s * s * s) * (mu * s).cos()).sum();
            let im: f64 = x.iter().zip(&w).map(|(s, w)| w * (1.0 - 2.0 * s + 0.5 * s * s * s) * (mu * s).sin()).sum();
            assert_abs_diff_eq!(j[n - 1].re, re, epsilon = 1e-12);
            assert_abs_diff_eq!(j[n - 1].im, im, epsilon = 1e-12);
        }
    }

    #[test]
    fn filon_handles_short_grids() {
        let j = cumulative_oscillatory(&[1.0, 1.0, 1.0], 0.5, 2.0);
        assert_abs_diff_eq!(j[2].re, (2.0f64).sin() / 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(j[1].im, (1.0 - 1.0f64.cos()) / 2.0, epsilon = 1e-14);
        assert_eq!(cumulative_oscillatory(&[3.0], 0.1, 1.0).len(), 1);
    }

    #[test]
    fn spline_interpolates_to_fourth_order() {
        let err = |n: usize| {
            let xs: Vec<f64> = (0..=n).map(|i| PI * i as f64 / n as f64).collect();
            let ys: Vec<f64> = xs.iter().map(|x| (2.0 * x).sin() + x).collect();
            let sp = CubicSpline::new(xs, ys);
            (0..1000)
                .map(|k| {
                    let x = PI * (k as f64 + 0.37) / 1000.0;
                    (sp.eval(x) - (2.0 * x).sin() - x).abs()
                })
                .fold(0.0, f64::max)
        };
        let ratio = err(20) / err(40);
        assert!(ratio > 12.0, "ratio {ratio}");
    }

    #[test]
    fn tridiagonal_solve() {
        let x = solve_tridiagonal(&[0.0, 1.0, 1.0], &[4.0, 4.0, 4.0], &[1.0, 1.0, 0.0], &[5.0, 6.0, 5.0]);
        for v in x {
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-14);
        }
    }
}
