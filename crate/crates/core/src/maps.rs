//! Map models between space models.
//!
//! A [`MapModel`] bundles an evaluator with its domain and codomain spaces, an
//! optional analytic Jacobian, an optional domain region and a smoothness
//! tag. Derivative information (Jacobians, singular values, one-sided
//! directional derivatives) is computed here, as is the pairing
//! `(f¹, f²)(x₁, x₂) = (f¹(x₁), f²(x₂))`.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::spaces::{concat, product_body, Region, Space};
use crate::tolerances::{RICHARDSON_TOL, SIGMA_MIN_REL};
use crate::{Error, Matrix, Point, Result};

pub type Evaluator = Arc<dyn Fn(&Point) -> Point + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(&Point) -> Matrix + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothness {
    C1,
    Differentiable,
    Discontinuous,
    Unknown,
}

/// An evaluatable map `f : U ⊂ domain → codomain`.
#[derive(Clone)]
pub struct MapModel {
    pub name: String,
    pub domain: Space,
    pub codomain: Space,
    evaluator: Evaluator,
    analytic_jacobian: Option<JacobianFn>,
    pub region: Option<Region>,
    pub smoothness: Smoothness,
}

impl fmt::Debug for MapModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MapModel")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("codomain", &self.codomain)
            .field("analytic_jacobian", &self.analytic_jacobian.is_some())
            .field("region", &self.region)
            .field("smoothness", &self.smoothness)
            .finish()
    }
}

impl MapModel {
    pub fn new<F>(name: impl Into<String>, domain: Space, codomain: Space, eval: F) -> Self
    where
        F: Fn(&Point) -> Point + Send + Sync + 'static,
    {
        MapModel {
            name: name.into(),
            domain,
            codomain,
            evaluator: Arc::new(eval),
            analytic_jacobian: None,
            region: None,
            smoothness: Smoothness::Unknown,
        }
    }

    pub fn with_jacobian<J>(mut self, jac: J) -> Self
    where
        J: Fn(&Point) -> Matrix + Send + Sync + 'static,
    {
        self.analytic_jacobian = Some(Arc::new(jac));
        self
    }

    pub fn with_region(mut self, region: Region) -> Self {
        self.region = Some(region);
        self
    }

    pub fn with_smoothness(mut self, smoothness: Smoothness) -> Self {
        self.smoothness = smoothness;
        self
    }

    pub fn identity(space: Space) -> Self {
        let n = space.dim();
        MapModel::new("identity", space.clone(), space, |x| x.clone())
            .with_jacobian(move |_| Matrix::identity(n, n))
            .with_smoothness(Smoothness::C1)
    }

    /// `x ↦ M x` on Euclidean spaces.
    pub fn linear(name: impl Into<String>, matrix: Matrix) -> Self {
        let (m, n) = matrix.shape();
        let jac = matrix.clone();
        MapModel::new(name, Space::euclidean(n), Space::euclidean(m), move |x| &matrix * x)
            .with_jacobian(move |_| jac.clone())
            .with_smoothness(Smoothness::C1)
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.analytic_jacobian.is_some()
    }

    /// Evaluate with dimension and domain-region checks.
    pub fn eval(&self, x: &Point) -> Result<Point> {
        if x.len() != self.domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.domain.dim(),
                found: x.len(),
            });
        }
        if let Some(region) = &self.region {
            if !region.contains(x) {
                return Err(Error::OutsideDomain);
            }
        }
        let y = (self.evaluator)(x);
        if y.len() != self.codomain.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.codomain.dim(),
                found: y.len(),
            });
        }
        Ok(y)
    }

    /// Evaluate without checks; the caller guarantees `x` is a valid input.
    pub fn apply(&self, x: &Point) -> Point {
        (self.evaluator)(x)
    }

    pub fn analytic_jacobian(&self, x: &Point) -> Option<Matrix> {
        self.analytic_jacobian.as_ref().map(|j| j(x))
    }
}

/// A linear map, used as the auxiliary map `A` of a LinA certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    pub matrix: Matrix,
}

impl LinearMap {
    pub fn new(matrix: Matrix) -> Self {
        LinearMap { matrix }
    }

    pub fn identity(n: usize) -> Self {
        LinearMap {
            matrix: Matrix::identity(n, n),
        }
    }

    pub fn apply(&self, v: &Point) -> Point {
        &self.matrix * v
    }

    pub fn operator_norm(&self) -> f64 {
        singular_value_range(&self.matrix).0
    }

    pub fn smallest_singular_value(&self) -> f64 {
        singular_value_range(&self.matrix).1
    }

    /// Injective when `σ_min > SIGMA_MIN_REL · ‖M‖` (and the map has full column rank shape).
    pub fn is_injective(&self) -> bool {
        let (m, n) = self.matrix.shape();
        let (hi, lo) = singular_value_range(&self.matrix);
        m >= n && hi > 0.0 && lo > SIGMA_MIN_REL * hi
    }
}

/// Largest and smallest singular values; the smallest is taken over
/// `min(rows, cols)` values.
pub fn singular_value_range(m: &Matrix) -> (f64, f64) {
    if m.is_empty() {
        return (0.0, 0.0);
    }
    let sv = m.clone().svd(false, false).singular_values;
    let hi = sv.iter().fold(0.0_f64, |a, &b| a.max(b));
    let lo = sv.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    (hi, lo)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JacobianMethod {
    /// Analytic callback; fails if the map has none.
    Analytic,
    /// Central differences with step `h`, or the default `cbrt(ε)·max(1, ‖x‖)`.
    CentralDifference { step: Option<f64> },
    /// Analytic when available, otherwise central differences.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JacobianSource {
    Analytic,
    CentralDifference { step: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct JacobianEstimate {
    pub matrix: Matrix,
    pub source: JacobianSource,
    pub operator_norm: f64,
    pub smallest_singular_value: f64,
}

impl JacobianEstimate {
    fn from_matrix(matrix: Matrix, source: JacobianSource) -> Self {
        let (operator_norm, smallest_singular_value) = singular_value_range(&matrix);
        JacobianEstimate {
            matrix,
            source,
            operator_norm,
            smallest_singular_value,
        }
    }

    pub fn sigma_min_threshold(&self) -> f64 {
        SIGMA_MIN_REL * self.operator_norm
    }

    pub fn is_invertible(&self) -> bool {
        self.matrix.is_square() && self.operator_norm > 0.0 && self.smallest_singular_value > self.sigma_min_threshold()
    }
}

pub fn default_fd_step(x: &Point) -> f64 {
    libm::cbrt(f64::EPSILON) * x.amax().max(1.0)
}

/// Jacobian of `f` at `x`.
pub fn jacobian(f: &MapModel, x: &Point, method: JacobianMethod) -> Result<JacobianEstimate> {
    if x.len() != f.domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.domain.dim(),
            found: x.len(),
        });
    }
    let analytic = match method {
        JacobianMethod::Analytic => match f.analytic_jacobian(x) {
            Some(j) => Some(j),
            None => {
                return Err(Error::InvalidArgument(format!(
                    "map {} has no analytic Jacobian",
                    f.name
                )))
            }
        },
        JacobianMethod::Auto => f.analytic_jacobian(x),
        JacobianMethod::CentralDifference { .. } => None,
    };
    if let Some(j) = analytic {
        if j.shape() != (f.codomain.dim(), f.domain.dim()) {
            return Err(Error::DimensionMismatch {
                expected: f.codomain.dim() * f.domain.dim(),
                found: j.len(),
            });
        }
        return Ok(JacobianEstimate::from_matrix(j, JacobianSource::Analytic));
    }
    let h = match method {
        JacobianMethod::CentralDifference { step: Some(h) } => h,
        _ => default_fd_step(x),
    };
    let matrix = central_difference(f, x, h)?;
    Ok(JacobianEstimate::from_matrix(
        matrix,
        JacobianSource::CentralDifference { step: h },
    ))
}

fn central_difference(f: &MapModel, x: &Point, h: f64) -> Result<Matrix> {
    let (m, n) = (f.codomain.dim(), f.domain.dim());
    let mut jac = Matrix::zeros(m, n);
    for j in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let width = xp[j] - xm[j];
        if !(width > 0.0) {
            return Err(Error::StepUnderflow);
        }
        let col = (f.eval(&xp)? - f.eval(&xm)?) / width;
        jac.set_column(j, &col);
    }
    Ok(jac)
}

/// `A = (D_a f)⁻¹`, the auxiliary map of the C¹ construction.
pub fn inverse_jacobian_map(f: &MapModel, a: &Point) -> Result<LinearMap> {
    let jac = jacobian(f, a, JacobianMethod::Auto)?;
    if !jac.matrix.is_square() {
        return Err(Error::InvalidArgument(format!(
            "Jacobian of {} is {}x{}, not square",
            f.name,
            jac.matrix.nrows(),
            jac.matrix.ncols()
        )));
    }
    let degenerate = Error::DegenerateDerivative {
        sigma_min: jac.smallest_singular_value,
        threshold: jac.sigma_min_threshold(),
    };
    if !jac.is_invertible() {
        return Err(degenerate);
    }
    let inv = jac.matrix.clone().try_inverse().ok_or_else(|| degenerate.clone())?;
    let n = inv.nrows();
    let residual = (&inv * &jac.matrix - Matrix::identity(n, n)).amax();
    if residual > 1e-10 {
        return Err(degenerate);
    }
    Ok(LinearMap::new(inv))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    fn sign(self) -> f64 {
        match self {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
        }
    }
}

/// One-sided directional derivative estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalDerivative {
    /// Slope along `v` on the chosen side, extrapolated from points strictly
    /// on that side (the value `f(x)` itself is not used).
    pub estimate: Point,
    /// Extrapolated one-sided limit `lim f(x ± t v)` as `t → 0⁺`.
    pub one_sided_limit: Point,
    /// Whether the quotients anchored at `f(x)` settle; false at jumps.
    pub converged: bool,
}

/// Richardson-extrapolated one-sided directional derivative at steps
/// `h, h/2, h/4` (default `h = 10⁻³·max(1, ‖x‖∞)`).
pub fn directional_derivative(
    f: &MapModel,
    x: &Point,
    v: &Point,
    side: Side,
    step: Option<f64>,
) -> Result<DirectionalDerivative> {
    if v.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: v.len(),
        });
    }
    let s = side.sign();
    let h = step.unwrap_or(1e-3 * x.amax().max(1.0));
    let f0 = f.eval(x)?;
    let g = |t: f64| f.eval(&(x + v * (s * t)));
    let gs = [g(h)?, g(h / 2.0)?, g(h / 4.0)?, g(h / 8.0)?];

    // Secant slopes between side points: D(t) = (g(t) − g(t/2)) / (s t/2).
    let d = |i: usize, t: f64| (&gs[i] - &gs[i + 1]) / (s * t / 2.0);
    let (d1, d2, d3) = (d(0, h), d(1, h / 2.0), d(2, h / 4.0));
    let r1a = &d2 * 2.0 - &d1;
    let r1b = &d3 * 2.0 - &d2;
    let estimate = (&r1b * 4.0 - &r1a) / 3.0;

    let la = &gs[2] * 2.0 - &gs[1];
    let lb = &gs[3] * 2.0 - &gs[2];
    let one_sided_limit = (&lb * 4.0 - &la) / 3.0;

    let q = |i: usize, t: f64| (&gs[i] - &f0) / (s * t);
    let (q1, q2, q3) = (q(0, h), q(1, h / 2.0), q(2, h / 4.0));
    let a = &q2 * 2.0 - &q1;
    let b = &q3 * 2.0 - &q2;
    let gap = (&a - &b).amax();
    let converged = gap.is_finite() && gap <= RICHARDSON_TOL;

    Ok(DirectionalDerivative {
        estimate,
        one_sided_limit,
        converged,
    })
}

/// The pairing `(f¹, f²) : B₁×B₃ → B₂×B₄`, evaluated componentwise.
pub fn pair(f1: &MapModel, f2: &MapModel) -> MapModel {
    let n1 = f1.domain.dim();
    let (e1, e2) = (f1.evaluator.clone(), f2.evaluator.clone());
    let domain = Space::product(alloc::vec![f1.domain.clone(), f2.domain.clone()]);
    let codomain = Space::product(alloc::vec![f1.codomain.clone(), f2.codomain.clone()]);
    let name = format!("pair({}, {})", f1.name, f2.name);
    let mut out = MapModel::new(name, domain, codomain, move |x: &Point| {
        let (x1, x2) = split(x, n1);
        concat([e1(&x1), e2(&x2)])
    });
    if let (Some(j1), Some(j2)) = (f1.analytic_jacobian.clone(), f2.analytic_jacobian.clone()) {
        out = out.with_jacobian(move |x: &Point| {
            let (x1, x2) = split(x, n1);
            block_diagonal(&j1(&x1), &j2(&x2))
        });
    }
    if let (Some(Region::Body(b1)), Some(Region::Body(b2))) = (&f1.region, &f2.region) {
        out = out.with_region(Region::Body(product_body(b1.clone(), b2.clone())));
    }
    out.smoothness = weakest(f1.smoothness, f2.smoothness);
    out
}

fn weakest(a: Smoothness, b: Smoothness) -> Smoothness {
    use Smoothness::*;
    let rank = |s: Smoothness| match s {
        C1 => 0,
        Differentiable => 1,
        Unknown => 2,
        Discontinuous => 3,
    };
    if rank(a) >= rank(b) {
        a
    } else {
        b
    }
}

/// Split `x` into its first `n` coordinates and the rest.
pub fn split(x: &Point, n: usize) -> (Point, Point) {
    (
        Point::from_column_slice(&x.as_slice()[..n]),
        Point::from_column_slice(&x.as_slice()[n..]),
    )
}

pub fn block_diagonal(a: &Matrix, b: &Matrix) -> Matrix {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut m = Matrix::zeros(ra + rb, ca + cb);
    m.view_mut((0, 0), (ra, ca)).copy_from(a);
    m.view_mut((ra, ca), (rb, cb)).copy_from(b);
    m
}

/// A map of a space into itself, the object fixed-point solvers work on.
pub trait SelfMap {
    fn dim(&self) -> usize;
    fn apply(&self, x: &Point) -> Point;
    /// Norm of the ambient space.
    fn norm(&self, v: &Point) -> f64;
}

/// A closure viewed as a self map of `space`.
#[derive(Clone)]
pub struct FnSelfMap {
    pub space: Space,
    f: Evaluator,
}

impl FnSelfMap {
    pub fn new<F>(space: Space, f: F) -> Self
    where
        F: Fn(&Point) -> Point + Send + Sync + 'static,
    {
        FnSelfMap { space, f: Arc::new(f) }
    }
}

impl SelfMap for FnSelfMap {
    fn dim(&self) -> usize {
        self.space.dim()
    }
    fn apply(&self, x: &Point) -> Point {
        (self.f)(x)
    }
    fn norm(&self, v: &Point) -> f64 {
        self.space.norm_of(v.as_slice())
    }
}

/// Relative Frobenius error between two matrices, `‖a − b‖ / max(‖b‖, 1e-300)`.
pub fn relative_error(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

/// Points `a + t (b − a)` for `t = i/(n−1)`.
pub fn segment_points(a: &Point, b: &Point, n: usize) -> Vec<Point> {
    (0..n)
        .map(|i| {
            let t = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
            a + (b - a) * t
        })
        .collect()
}
