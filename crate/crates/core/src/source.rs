//! Oscillating factor `r(t, τ) = r₀(t) + r₁(t, τ)` of the source term, with
//! the fast part kept as a trigonometric polynomial in `τ` whose
//! coefficients are time traces.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Expr, Func, Var};
use crate::quadrature::periodic_mean;
use crate::trace::{TimeGrid, TimeTrace};

/// Samples per period for the discrete-Fourier fallback.
pub const N_TAU: usize = 256;
const MEAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HarmonicKind {
    Cos,
    Sin,
}

/// One term `coeff(t)·cos(kτ)` or `coeff(t)·sin(kτ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Harmonic {
    pub k: u32,
    pub kind: HarmonicKind,
    pub coeff: TimeTrace,
}

impl Harmonic {
    fn basis(&self, tau: f64) -> f64 {
        let a = self.k as f64 * tau;
        match self.kind {
            HarmonicKind::Cos => a.cos(),
            HarmonicKind::Sin => a.sin(),
        }
    }

    fn with_coeff(&self, coeff: TimeTrace) -> Harmonic {
        Harmonic {
            k: self.k,
            kind: self.kind,
            coeff,
        }
    }
}

/// Config form of a harmonic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicSpec {
    pub harmonic: u32,
    pub kind: HarmonicKind,
    pub coeff: String,
}

/// Zero-mean, 2π-periodic function of `(t, τ)` in trigonometric form.
#[derive(Debug, Clone, PartialEq)]
pub struct FastProfile {
    terms: Vec<Harmonic>,
    grid: TimeGrid,
}

impl FastProfile {
    pub fn new(grid: TimeGrid, terms: Vec<Harmonic>) -> Result<Self> {
        let mut kept = Vec::with_capacity(terms.len());
        for h in terms {
            if h.k == 0 {
                match h.kind {
                    HarmonicKind::Sin => continue,
                    HarmonicKind::Cos if h.coeff.max_abs() > MEAN_TOL => {
                        return Err(Error::NonZeroMean(h.coeff.max_abs()));
                    }
                    HarmonicKind::Cos => continue,
                }
            }
            kept.push(h.with_coeff(h.coeff.resample(&grid)));
        }
        Ok(FastProfile { terms: kept, grid })
    }

    pub fn zero(grid: TimeGrid) -> Self {
        FastProfile {
            terms: Vec::new(),
            grid,
        }
    }

    pub fn from_spec(specs: &[HarmonicSpec], grid: TimeGrid) -> Result<Self> {
        let terms = specs
            .iter()
            .map(|s| {
                Ok(Harmonic {
                    k: s.harmonic,
                    kind: s.kind,
                    coeff: TimeTrace::from_expr(Expr::parse(&s.coeff)?, grid)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        FastProfile::new(grid, terms)
    }

    pub fn terms(&self) -> &[Harmonic] {
        &self.terms
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|h| h.coeff.is_zero())
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|h| h.k).max().unwrap_or(0)
    }

    pub fn eval(&self, t: f64, tau: f64) -> f64 {
        self.terms.iter().map(|h| h.coeff.value_at(t) * h.basis(tau)).sum()
    }

    /// Values at the grid nodes for `τ = ω t`.
    pub fn eval_on_grid(&self, omega: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        for h in &self.terms {
            for (i, (o, c)) in out.iter_mut().zip(h.coeff.values()).enumerate() {
                *o += c * h.basis(omega * self.grid.t(i));
            }
        }
        out
    }

    fn map(&self, f: impl Fn(&Harmonic) -> Harmonic) -> FastProfile {
        FastProfile {
            terms: self.terms.iter().map(f).collect(),
            grid: self.grid,
        }
    }

    /// `∂ⁿ/∂τⁿ`, computed term by term.
    pub fn d_tau(&self, n: usize) -> FastProfile {
        let mut out = self.clone();
        for _ in 0..n {
            out = out.map(|h| {
                let k = h.k as f64;
                match h.kind {
                    HarmonicKind::Cos => Harmonic {
                        k: h.k,
                        kind: HarmonicKind::Sin,
                        coeff: h.coeff.scale(-k),
                    },
                    HarmonicKind::Sin => Harmonic {
                        k: h.k,
                        kind: HarmonicKind::Cos,
                        coeff: h.coeff.scale(k),
                    },
                }
            });
        }
        out
    }

    /// `∂ⁿ/∂tⁿ` through the coefficient traces.
    pub fn d_t(&self, n: usize) -> FastProfile {
        self.map(|h| h.with_coeff(h.coeff.derivative(n)))
    }

    pub fn scale(&self, c: f64) -> FastProfile {
        self.map(|h| h.with_coeff(h.coeff.scale(c)))
    }

    /// Product with a function of `t` alone.
    pub fn mul_trace(&self, g: &TimeTrace) -> FastProfile {
        self.map(|h| h.with_coeff(h.coeff.mul(g)))
    }

    pub fn div_trace(&self, g: &TimeTrace) -> Result<FastProfile> {
        Ok(FastProfile {
            terms: self
                .terms
                .iter()
                .map(|h| Ok(h.with_coeff(h.coeff.div(g)?)))
                .collect::<Result<_>>()?,
            grid: self.grid,
        })
    }

    pub fn resample(&self, grid: &TimeGrid) -> FastProfile {
        FastProfile {
            terms: self.terms.iter().map(|h| h.with_coeff(h.coeff.resample(grid))).collect(),
            grid: *grid,
        }
    }

    /// Sup over grid nodes and `n_tau` phases of `|self − other|`.
    pub fn sup_distance(&self, other: &FastProfile, n_tau: usize) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.grid.len() {
            let t = self.grid.t(i);
            for j in 0..n_tau {
                let tau = 2.0 * PI * j as f64 / n_tau as f64;
                worst = worst.max((self.eval(t, tau) - other.eval(t, tau)).abs());
            }
        }
        worst
    }

    pub fn to_spec(&self) -> Vec<(u32, HarmonicKind, Option<String>)> {
        self.terms
            .iter()
            .map(|h| (h.k, h.kind, h.coeff.descriptor().map(|e| e.to_string())))
            .collect()
    }
}

/// Trapezoid mean of samples `g(τ_j)`, `τ_j = 2πj/N`, `j < N`.
pub fn tau_mean_samples(samples: &[f64]) -> f64 {
    periodic_mean(samples)
}

/// `r(t, τ) = r₀(t) + r₁(t, τ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OscillatorySource {
    r0: TimeTrace,
    fast: FastProfile,
}

impl OscillatorySource {
    pub fn new(r0: TimeTrace, fast: FastProfile) -> Self {
        let fast = fast.resample(r0.grid());
        OscillatorySource { r0, fast }
    }

    pub fn from_spec(r0: &str, r1: &[HarmonicSpec], grid: TimeGrid) -> Result<Self> {
        let e = Expr::parse(r0)?;
        let r0 = TimeTrace::from_expr(e, grid)?;
        Ok(OscillatorySource::new(r0, FastProfile::from_spec(r1, grid)?))
    }

    pub fn r0(&self) -> &TimeTrace {
        &self.r0
    }

    pub fn fast(&self) -> &FastProfile {
        &self.fast
    }

    pub fn grid(&self) -> &TimeGrid {
        self.r0.grid()
    }

    pub fn eval(&self, t: f64, tau: f64) -> f64 {
        self.r0.value_at(t) + self.fast.eval(t, tau)
    }

    /// Exact τ-mean at time `t`; the fast part contributes nothing.
    pub fn tau_mean(&self, t: f64) -> f64 {
        self.r0.value_at(t)
    }

    pub fn resample(&self, grid: &TimeGrid) -> OscillatorySource {
        OscillatorySource {
            r0: self.r0.resample(grid),
            fast: self.fast.resample(grid),
        }
    }

    pub fn scale(&self, c: f64) -> OscillatorySource {
        OscillatorySource {
            r0: self.r0.scale(c),
            fast: self.fast.scale(c),
        }
    }
}

type Terms = BTreeMap<(u32, HarmonicKind), Expr>;

fn push(terms: &mut Terms, k: i64, kind: HarmonicKind, c: Expr) {
    // cos(−kτ) = cos kτ, sin(−kτ) = −sin kτ
    let (k, c) = match kind {
        HarmonicKind::Sin if k < 0 => (-k, -c),
        _ => (k.abs(), c),
    };
    if kind == HarmonicKind::Sin && k == 0 {
        return;
    }
    let slot = terms.entry((k as u32, kind)).or_insert(Expr::Num(0.0));
    *slot = std::mem::replace(slot, Expr::Num(0.0)) + c;
}

/// Expand an expression into `Σ c(t)·{cos,sin}(kτ)` when it is built from
/// sums, products and integer powers of τ-free factors and sines or cosines
/// of `kτ + b(t)`. `Ok(None)` means the form is not recognized.
fn trig_expand(e: &Expr) -> Result<Option<Terms>> {
    if !e.depends_on(Var::Tau) {
        let mut t = Terms::new();
        t.insert((0, HarmonicKind::Cos), e.clone());
        return Ok(Some(t));
    }
    let scaled = |t: Terms, c: &dyn Fn(Expr) -> Expr| -> Terms { t.into_iter().map(|(k, v)| (k, c(v))).collect() };
    Ok(match e {
        Expr::Num(_) | Expr::Var(_) => None,
        Expr::Neg(a) => trig_expand(a)?.map(|t| scaled(t, &|v| -v)),
        Expr::Add(a, b) | Expr::Sub(a, b) => {
            let (Some(ta), Some(tb)) = (trig_expand(a)?, trig_expand(b)?) else {
                return Ok(None);
            };
            let sign = matches!(e, Expr::Sub(..));
            let mut out = ta;
            for ((k, kind), v) in tb {
                push(&mut out, k as i64, kind, if sign { -v } else { v });
            }
            Some(out)
        }
        Expr::Mul(a, b) => match (trig_expand(a)?, trig_expand(b)?) {
            (Some(ta), Some(tb)) => Some(multiply(&ta, &tb)),
            _ => None,
        },
        Expr::Div(a, b) if !b.depends_on(Var::Tau) => trig_expand(a)?.map(|t| scaled(t, &|v| v / (**b).clone())),
        Expr::Div(..) => None,
        Expr::Pow(a, b) => match b.as_num() {
            Some(n) if n >= 0.0 && n.fract() == 0.0 && n <= 16.0 => {
                let Some(base) = trig_expand(a)? else {
                    return Ok(None);
                };
                let mut acc = Terms::new();
                acc.insert((0, HarmonicKind::Cos), Expr::Num(1.0));
                for _ in 0..n as usize {
                    acc = multiply(&acc, &base);
                }
                Some(acc)
            }
            _ => None,
        },
        Expr::Call(f @ (Func::Sin | Func::Cos), arg) => {
            let slope = arg.diff(Var::Tau);
            let Some(k) = slope.as_num() else {
                return Ok(None);
            };
            if (k - k.round()).abs() > 1e-12 {
                return Err(Error::NotPeriodic((2.0 * PI * k).sin().abs()));
            }
            let k = k.round() as i64;
            let b = arg.substitute(Var::Tau, 0.0);
            let mut out = Terms::new();
            match f {
                Func::Sin => {
                    push(&mut out, k, HarmonicKind::Sin, Expr::cos(b.clone()));
                    push(&mut out, k, HarmonicKind::Cos, Expr::sin(b));
                }
                _ => {
                    push(&mut out, k, HarmonicKind::Cos, Expr::cos(b.clone()));
                    push(&mut out, k, HarmonicKind::Sin, -Expr::sin(b));
                }
            }
            Some(out)
        }
        Expr::Call(..) => None,
    })
}

fn multiply(a: &Terms, b: &Terms) -> Terms {
    use HarmonicKind::{Cos, Sin};
    let mut out = Terms::new();
    for ((ka, sa), ca) in a {
        for ((kb, sb), cb) in b {
            let (ka, kb) = (*ka as i64, *kb as i64);
            let c = Expr::Num(0.5) * ca.clone() * cb.clone();
            match (sa, sb) {
                (Cos, Cos) => {
                    push(&mut out, ka - kb, Cos, c.clone());
                    push(&mut out, ka + kb, Cos, c);
                }
                (Sin, Sin) => {
                    push(&mut out, ka - kb, Cos, c.clone());
                    push(&mut out, ka + kb, Cos, -c);
                }
                (Sin, Cos) => {
                    push(&mut out, ka + kb, Sin, c.clone());
                    push(&mut out, ka - kb, Sin, c);
                }
                (Cos, Sin) => {
                    push(&mut out, ka + kb, Sin, c.clone());
                    push(&mut out, ka - kb, Sin, -c);
                }
            }
        }
    }
    out
}

/// Split `r(t, τ)` into its τ-mean and zero-mean oscillation.
///
/// Recognized trigonometric forms are decomposed symbolically. Anything else
/// is sampled on `N_TAU` phases; each Fourier coefficient is then the
/// trapezoid sum written as an expression in `t`, which is exact for
/// trigonometric polynomials of degree below `N_TAU/2` and keeps exact
/// time derivatives.
pub fn split_source(r: &Expr, grid: TimeGrid) -> Result<OscillatorySource> {
    if r.depends_on_space() {
        return Err(Error::InvalidParameter(format!("`{r}` must not depend on x")));
    }
    let terms = match trig_expand(r)? {
        Some(t) => t,
        None => sampled_terms(r, &grid)?,
    };
    let mut r0 = Expr::Num(0.0);
    let mut harmonics = Vec::new();
    for ((k, kind), c) in terms {
        if k == 0 {
            r0 = c;
            continue;
        }
        if c.is_zero() {
            continue;
        }
        harmonics.push(Harmonic {
            k,
            kind,
            coeff: TimeTrace::from_expr(c, grid)?,
        });
    }
    Ok(OscillatorySource::new(
        TimeTrace::from_expr(r0, grid)?,
        FastProfile::new(grid, harmonics)?,
    ))
}

fn sampled_terms(r: &Expr, grid: &TimeGrid) -> Result<Terms> {
    let taus: Vec<f64> = (0..N_TAU).map(|j| 2.0 * PI * j as f64 / N_TAU as f64).collect();
    let mut scale = 0.0f64;
    let mut mismatch = 0.0f64;
    for t in grid.times().step_by((grid.len() / 16).max(1)) {
        let a = r.eval_t_tau(t, 0.0);
        let b = r.eval_t_tau(t, 2.0 * PI);
        scale = scale.max(a.abs());
        mismatch = mismatch.max((a - b).abs());
    }
    if mismatch > 1e-9 * scale.max(1.0) {
        return Err(Error::NotPeriodic(mismatch));
    }
    let slices: Vec<Expr> = taus.iter().map(|tau| r.substitute(Var::Tau, *tau)).collect();
    let n = N_TAU as f64;
    let coefficient = |k: usize, kind: HarmonicKind| -> Expr {
        let weight = |tau: f64| match (k, kind) {
            (0, _) => 1.0 / n,
            (_, HarmonicKind::Cos) => 2.0 / n * (k as f64 * tau).cos(),
            (_, HarmonicKind::Sin) => 2.0 / n * (k as f64 * tau).sin(),
        };
        slices
            .iter()
            .zip(&taus)
            .fold(Expr::Num(0.0), |acc, (s, tau)| acc + Expr::Num(weight(*tau)) * s.clone())
    };
    // pick harmonics from a numeric DFT on a few time slices
    let probe: Vec<f64> = grid.times().step_by((grid.len() / 8).max(1)).collect();
    let mut terms = Terms::new();
    terms.insert((0, HarmonicKind::Cos), coefficient(0, HarmonicKind::Cos));
    for k in 1..N_TAU / 2 {
        for kind in [HarmonicKind::Cos, HarmonicKind::Sin] {
            let mut size = 0.0f64;
            for t in &probe {
                let samples: Vec<f64> = taus.iter().map(|tau| r.eval_t_tau(*t, *tau)).collect();
                let c: f64 = samples
                    .iter()
                    .zip(&taus)
                    .map(|(v, tau)| {
                        2.0 / n
                            * v
                            * match kind {
                                HarmonicKind::Cos => (k as f64 * tau).cos(),
                                HarmonicKind::Sin => (k as f64 * tau).sin(),
                            }
                    })
                    .sum();
                size = size.max(c.abs());
            }
            if size > 1e-13 * scale.max(1.0) {
                terms.insert((k as u32, kind), coefficient(k, kind));
            }
        }
    }
    Ok(terms)
}

/// Zero-mean second τ-antiderivative, term by term.
pub fn rho0(r1: &FastProfile) -> FastProfile {
    r1.map(|h| {
        let k = h.k as f64;
        h.with_coeff(h.coeff.scale(-1.0 / (k * k)))
    })
}

/// `ρ₁` with `∂ρ₁/∂τ = −ρ₀` and zero mean.
pub fn rho1(rho0: &FastProfile) -> FastProfile {
    rho0.map(|h| {
        let k = h.k as f64;
        match h.kind {
            HarmonicKind::Cos => Harmonic {
                k: h.k,
                kind: HarmonicKind::Sin,
                coeff: h.coeff.scale(-1.0 / k),
            },
            HarmonicKind::Sin => Harmonic {
                k: h.k,
                kind: HarmonicKind::Cos,
                coeff: h.coeff.scale(1.0 / k),
            },
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CornerValues {
    pub rho0: f64,
    pub rho0_tau: f64,
    pub rho0_t: f64,
    pub rho1: f64,
    pub rho1_t: f64,
}

fn time_derivative_at_zero(tr: &TimeTrace) -> Result<f64> {
    if tr.descriptor().is_none() && tr.grid().len() < 5 {
        return Err(Error::MissingDerivative("coefficient trace too short for differences".into()));
    }
    Ok(tr.derivative_at(0.0, 1))
}

/// Values of `ρ₀`, `ρ₁` and their first derivatives at `(t, τ) = (0, 0)`.
pub fn corner_values(rho0: &FastProfile, rho1: &FastProfile) -> Result<CornerValues> {
    let at = |p: &FastProfile, kind: HarmonicKind, deriv: bool| -> Result<f64> {
        let mut s = 0.0;
        for h in p.terms().iter().filter(|h| h.kind == kind) {
            s += if deriv {
                time_derivative_at_zero(&h.coeff)?
            } else {
                h.coeff.value_at(0.0)
            };
        }
        Ok(s)
    };
    let rho0_tau = rho0
        .terms()
        .iter()
        .filter(|h| h.kind == HarmonicKind::Sin)
        .map(|h| h.k as f64 * h.coeff.value_at(0.0))
        .sum();
    Ok(CornerValues {
        rho0: at(rho0, HarmonicKind::Cos, false)?,
        rho0_tau,
        rho0_t: at(rho0, HarmonicKind::Cos, true)?,
        rho1: at(rho1, HarmonicKind::Cos, false)?,
        rho1_t: at(rho1, HarmonicKind::Cos, true)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn grid() -> TimeGrid {
        TimeGrid::new(2.0, 40).unwrap()
    }

    fn parse_split(src: &str) -> OscillatorySource {
        split_source(&Expr::parse(src).unwrap(), grid()).unwrap()
    }

    #[test]
    fn means() {
        let n = 64;
        let s = |f: fn(f64) -> f64| -> Vec<f64> { (0..n).map(|j| f(2.0 * PI * j as f64 / n as f64)).collect() };
        assert_abs_diff_eq!(tau_mean_samples(&s(|t| t.cos())), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(tau_mean_samples(&s(|t| 2.0 + t.cos())), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(tau_mean_samples(&s(|t| t.sin().powi(2))), 0.5, epsilon = 1e-15);
        let src = parse_split("sin(tau)^2");
        assert_abs_diff_eq!(src.tau_mean(0.7), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn split_examples() {
        let s = parse_split("2 + cos(tau)");
        assert_eq!(s.r0().descriptor(), Some(&Expr::Num(2.0)));
        assert_eq!(s.fast().terms().len(), 1);
        assert_abs_diff_eq!(s.fast().eval(0.3, 0.4), 0.4f64.cos(), epsilon = 1e-15);

        let s = parse_split("(1 + t)*(1 + sin(tau))");
        assert_abs_diff_eq!(s.r0().value_at(1.5), 2.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s.fast().eval(1.5, 0.4), 2.5 * 0.4f64.sin(), epsilon = 1e-14);

        let s = parse_split("1 + t");
        assert!(s.fast().is_zero());
    }

    #[test]
    fn split_handles_shifted_and_product_forms() {
        let s = parse_split("cos(2*tau + t) * sin(tau)");
        for (t, tau) in [(0.1, 0.2), (1.3, 5.0), (2.0, 3.3)] {
            let want = f64::cos(2.0 * tau + t) * f64::sin(tau);
            assert_abs_diff_eq!(s.eval(t, tau), want, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(s.r0().max_abs(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn split_falls_back_to_sampling() {
        let s = parse_split("exp(cos(tau))*(1 + t)");
        // mean of e^{cos τ} is I₀(1)
        let i0 = 1.266_065_877_752_008_4;
        assert_abs_diff_eq!(s.r0().value_at(1.0), 2.0 * i0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.eval(0.5, 1.1), 1.1f64.cos().exp() * 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s.fast().terms()[0].coeff.derivative_at(0.3, 1), 2.0 * 0.565_159_103_992_485, epsilon = 1e-12);
    }

    #[test]
    fn split_rejects_non_periodic() {
        let g = grid();
        assert!(matches!(split_source(&Expr::parse("cos(0.5*tau)").unwrap(), g), Err(Error::NotPeriodic(_))));
        assert!(matches!(split_source(&Expr::parse("tau").unwrap(), g), Err(Error::NotPeriodic(_))));
    }

    #[test]
    fn fast_profile_rejects_mean() {
        let g = grid();
        let h = Harmonic {
            k: 0,
            kind: HarmonicKind::Cos,
            coeff: TimeTrace::constant(0.5, g),
        };
        assert!(matches!(FastProfile::new(g, vec![h]), Err(Error::NonZeroMean(_))));
    }

    #[test]
    fn rho_examples() {
        let cos = parse_split("cos(tau)").fast().clone();
        let r0 = rho0(&cos);
        assert_abs_diff_eq!(r0.eval(0.0, 0.3), -0.3f64.cos(), epsilon = 1e-15);
        let r1 = rho1(&r0);
        assert_abs_diff_eq!(r1.eval(0.0, 0.3), 0.3f64.sin(), epsilon = 1e-15);
        let c = corner_values(&r0, &r1).unwrap();
        assert_eq!((c.rho0, c.rho0_tau, c.rho1, c.rho0_t, c.rho1_t), (-1.0, 0.0, 0.0, 0.0, 0.0));

        let sin = parse_split("sin(tau)").fast().clone();
        let r0 = rho0(&sin);
        assert_abs_diff_eq!(r0.eval(0.0, 0.3), -0.3f64.sin(), epsilon = 1e-15);
        let r1 = rho1(&r0);
        assert_abs_diff_eq!(r1.eval(0.0, 0.3), -0.3f64.cos(), epsilon = 1e-15);
        assert_eq!(corner_values(&r0, &r1).unwrap().rho0_tau, -1.0);

        let zero = FastProfile::zero(grid());
        assert!(rho0(&zero).is_zero());
        assert!(rho1(&zero).is_zero());
    }

    #[test]
    fn corner_time_derivatives() {
        let f = parse_split("(1 + t/2)*cos(tau) + 0.4*sin(2*tau)").fast().clone();
        let r0 = rho0(&f);
        let r1 = rho1(&r0);
        let c = corner_values(&r0, &r1).unwrap();
        assert_abs_diff_eq!(c.rho0, -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.rho0_t, -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(c.rho0_tau, 2.0 * -0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(c.rho1, -0.4 / 4.0 / 2.0, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn rho_identities(a in -2.0f64..2.0, b in -2.0f64..2.0, c in -1.0f64..1.0, k in 1u32..6, t in 0.0f64..2.0, tau in 0.0f64..6.3) {
            let g = grid();
            let src = format!("({a} + {b}*t)*cos({k}*tau) + {c}*t^2*sin({}*tau)", k + 1);
            let r1 = split_source(&Expr::parse(&src).unwrap(), g).unwrap().fast().clone();
            let p0 = rho0(&r1);
            let p1 = rho1(&p0);
            prop_assert!((p0.d_tau(2).eval(t, tau) - r1.eval(t, tau)).abs() < 1e-12);
            prop_assert!((p1.d_tau(1).eval(t, tau) + p0.eval(t, tau)).abs() < 1e-12);
            let n = 64;
            let m0: Vec<f64> = (0..n).map(|j| p0.eval(t, 2.0 * PI * j as f64 / n as f64)).collect();
            let m1: Vec<f64> = (0..n).map(|j| p1.eval(t, 2.0 * PI * j as f64 / n as f64)).collect();
            prop_assert!(tau_mean_samples(&m0).abs() < 1e-12);
            prop_assert!(tau_mean_samples(&m1).abs() < 1e-12);
            // linearity
            let twice = rho0(&r1.scale(2.0));
            prop_assert!((twice.eval(t, tau) - 2.0 * p0.eval(t, tau)).abs() < 1e-12);
        }
    }
}
