//! Implicit functions through the lifted map `F(t, x) = (t, g(t, x))` and
//! ODE solving by tracking the level set `g(t, u(t)) = g(0, b)`.
//!
//! A local inverse of `F` near `(a, b)` read at `(t, c)` gives `(t, h(t))`,
//! so implicit solving reduces to chart inversion. Beyond one chart the
//! solver re-anchors along the path from `a` to the query.

use alloc::format;
use alloc::vec::Vec;

use crate::cert::CertBudgets;
use crate::inversion::{build_chart, invert, ChartOptions, LocalInverseChart};
use crate::maps::singular_value_range;
use crate::maps::{jacobian, JacobianMethod, MapModel};
use crate::spaces::{concat, Space};
use crate::tolerances::{FP_TOL, INV_TOL, SIGMA_MIN_REL};
use crate::{Error, Matrix, Point, Result};

/// Maximum number of step halvings before continuation gives up.
pub const MAX_BISECTIONS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignConvention {
    /// `f = [D_x g]⁻¹ D_t g`, without the minus sign.
    Literal,
    /// `f = −[D_x g]⁻¹ D_t g`, the sign the chain rule gives for `g(t, u(t)) = c`.
    ChainRule,
}

impl SignConvention {
    pub fn label(self) -> &'static str {
        match self {
            SignConvention::Literal => "literal",
            SignConvention::ChainRule => "chain_rule",
        }
    }
}

/// `g : T × X → X` with base point `(a, b)` and level `c = g(a, b)`.
#[derive(Debug, Clone)]
pub struct ImplicitProblem {
    pub g: MapModel,
    pub t_dim: usize,
    pub a: Point,
    pub b: Point,
    pub c: Point,
}

fn split_blocks(j: &Matrix, k: usize) -> (Matrix, Matrix) {
    let (m, n) = j.shape();
    (
        j.view((0, 0), (m, k)).into_owned(),
        j.view((0, k), (m, n - k)).into_owned(),
    )
}

fn check_dx(dx: &Matrix) -> Result<()> {
    let (hi, lo) = singular_value_range(dx);
    let threshold = SIGMA_MIN_REL * hi;
    if !dx.is_square() || !(lo > threshold) {
        return Err(Error::DegenerateDerivative {
            sigma_min: lo,
            threshold,
        });
    }
    Ok(())
}

impl ImplicitProblem {
    /// Problem at level `c = g(a, b)`.
    pub fn new(g: MapModel, a: Point, b: Point) -> Result<Self> {
        let k = a.len();
        if g.domain.dim() != k + b.len() {
            return Err(Error::DimensionMismatch {
                expected: g.domain.dim(),
                found: k + b.len(),
            });
        }
        if g.codomain.dim() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: b.len(),
                found: g.codomain.dim(),
            });
        }
        let ab = concat([a.clone(), b.clone()]);
        let c = g.eval(&ab)?;
        let (_, dx) = split_blocks(&jacobian(&g, &ab, JacobianMethod::Auto)?.matrix, k);
        check_dx(&dx)?;
        Ok(ImplicitProblem { g, t_dim: k, a, b, c })
    }

    /// Problem at a prescribed level `c`; `g(a, b)` must match it within `FP_TOL`.
    pub fn with_level(g: MapModel, a: Point, b: Point, c: Point) -> Result<Self> {
        let p = Self::new(g, a, b)?;
        let r = (&p.c - &c).norm();
        if r > FP_TOL {
            return Err(Error::InvalidArgument(format!("base point is off the level by {r:e}")));
        }
        Ok(ImplicitProblem { c, ..p })
    }

    pub fn level_residual(&self, t: &Point, x: &Point) -> f64 {
        self.g
            .codomain
            .distance(&self.g.apply(&concat([t.clone(), x.clone()])), &self.c)
    }
}

/// `F(t, x) = (t, g(t, x))` with Jacobian `[[I, 0], [D_t g, D_x g]]`.
pub fn build_f(g: &MapModel, t_dim: usize) -> MapModel {
    let t_space = match &g.domain {
        Space::Product(f) if f.len() == 2 && f[0].dim() == t_dim => f[0].clone(),
        _ => Space::euclidean(t_dim),
    };
    let codomain = match (&t_space, &g.codomain) {
        (Space::Lp { p: p1, .. }, Space::Lp { p: p2, dim }) if *p1 == 2.0 && *p2 == 2.0 => {
            Space::euclidean(t_dim + dim)
        }
        _ => Space::product(alloc::vec![t_space, g.codomain.clone()]),
    };
    let ev = g.clone();
    let mut f = MapModel::new(
        format!("F[{}]", g.name),
        g.domain.clone(),
        codomain,
        move |z: &Point| {
            let t = Point::from_column_slice(&z.as_slice()[..t_dim]);
            concat([t, ev.apply(z)])
        },
    );
    if g.has_analytic_jacobian() {
        let gj = g.clone();
        f = f.with_jacobian(move |z: &Point| {
            let dg = gj.analytic_jacobian(z).expect("analytic Jacobian present");
            let n = z.len();
            let mut j = Matrix::zeros(t_dim + dg.nrows(), n);
            for i in 0..t_dim {
                j[(i, i)] = 1.0;
            }
            j.view_mut((t_dim, 0), dg.shape()).copy_from(&dg);
            j
        });
    }
    f.smoothness = g.smoothness;
    f
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitOptions {
    pub chart: ChartOptions,
}

impl Default for ImplicitOptions {
    fn default() -> Self {
        ImplicitOptions {
            chart: ChartOptions {
                budgets: CertBudgets::light(),
                ..ChartOptions::default()
            },
        }
    }
}

/// Predictor-corrector continuation along a straight path in `t`.
///
/// Charts of `F` are reused while the next target lies in their reach and
/// rebuilt at the latest point otherwise.
#[derive(Debug, Clone)]
pub struct Continuation {
    problem: ImplicitProblem,
    lifted: MapModel,
    options: ImplicitOptions,
    chart: Option<LocalInverseChart>,
    pub t: Point,
    pub x: Point,
    pub charts_built: usize,
}

impl Continuation {
    pub fn new(problem: &ImplicitProblem, options: &ImplicitOptions) -> Self {
        Continuation {
            lifted: build_f(&problem.g, problem.t_dim),
            t: problem.a.clone(),
            x: problem.b.clone(),
            problem: problem.clone(),
            options: options.clone(),
            chart: None,
            charts_built: 0,
        }
    }

    fn rebuild(&mut self) -> Result<()> {
        let z = concat([self.t.clone(), self.x.clone()]);
        let mut opts = self.options.chart.clone();
        opts.seed = crate::rng::derive_seed(opts.seed, self.charts_built as u64);
        match build_chart(&self.lifted, &z, &opts) {
            Ok(c) => {
                self.chart = Some(c);
                self.charts_built += 1;
                Ok(())
            }
            Err(e) => Err(Error::ChartFailure(format!("at t = {:?}: {e}", self.t.as_slice()))),
        }
    }

    fn try_invert(&self, t_next: &Point) -> Option<Point> {
        let chart = self.chart.as_ref()?;
        let target = concat([t_next.clone(), self.problem.c.clone()]);
        if !chart.contains_target(&target) {
            return None;
        }
        let z = invert(chart, &target).ok()?;
        Some(Point::from_column_slice(&z.as_slice()[self.problem.t_dim..]))
    }

    fn chart_is_current(&self) -> bool {
        self.chart
            .as_ref()
            .is_some_and(|c| c.anchor.as_slice()[..self.problem.t_dim] == *self.t.as_slice())
    }

    /// Move to `t_target`, returning `h(t_target)`.
    pub fn advance_to(&mut self, t_target: &Point) -> Result<Point> {
        if t_target.len() != self.problem.t_dim {
            return Err(Error::DimensionMismatch {
                expected: self.problem.t_dim,
                found: t_target.len(),
            });
        }
        let total = (t_target - &self.t).norm();
        let start = self.t.clone();
        loop {
            let remaining = t_target - &self.t;
            let dist = remaining.norm();
            if dist == 0.0 {
                return Ok(self.x.clone());
            }
            if let Some(x) = self.try_invert(t_target) {
                self.t = t_target.clone();
                self.x = x;
                return Ok(self.x.clone());
            }
            if !self.chart_is_current() {
                self.rebuild()?;
                continue;
            }
            let reach = self.chart.as_ref().map_or(0.0, |c| c.s);
            let mut frac = (0.9 * reach / dist).min(1.0);
            let mut advanced = false;
            for _ in 0..=MAX_BISECTIONS {
                let t_next = &self.t + &remaining * frac;
                if let Some(x) = self.try_invert(&t_next) {
                    self.t = t_next;
                    self.x = x;
                    advanced = true;
                    break;
                }
                frac *= 0.5;
            }
            if !advanced {
                let reached = (&self.t - &start).norm();
                return Err(Error::OutOfReach { reached, target: total });
            }
        }
    }
}

/// `h(t_query)` with `g(t_query, h) = c`.
pub fn implicit_solve(problem: &ImplicitProblem, t_query: &Point, options: &ImplicitOptions) -> Result<Point> {
    let mut c = Continuation::new(problem, options);
    let h = c.advance_to(t_query)?;
    let residual = problem.level_residual(t_query, &h);
    if residual > INV_TOL {
        return Err(Error::NonConvergent { residual });
    }
    Ok(h)
}

/// `Dh(t) = −(D_x g)⁻¹ D_t g` at `(t, h_t)`.
pub fn implicit_derivative(problem: &ImplicitProblem, t: &Point, h_t: &Point) -> Result<Matrix> {
    LevelSetRhs::new(&problem.g, problem.t_dim, SignConvention::ChainRule).eval(t, h_t)
}

/// Right-hand side `f(t, x) = ∓[D_x g]⁻¹ D_t g` of the level-set ODE.
#[derive(Debug, Clone)]
pub struct LevelSetRhs {
    pub g: MapModel,
    pub t_dim: usize,
    pub convention: SignConvention,
}

impl LevelSetRhs {
    pub fn new(g: &MapModel, t_dim: usize, convention: SignConvention) -> Self {
        LevelSetRhs {
            g: g.clone(),
            t_dim,
            convention,
        }
    }

    /// `n × k` matrix at `(t, x)`.
    pub fn eval(&self, t: &Point, x: &Point) -> Result<Matrix> {
        let z = concat([t.clone(), x.clone()]);
        let j = jacobian(&self.g, &z, JacobianMethod::Auto)?;
        let (dt, dx) = split_blocks(&j.matrix, self.t_dim);
        check_dx(&dx)?;
        let lu = dx.lu();
        let sol = lu.solve(&dt).ok_or(Error::DegenerateDerivative {
            sigma_min: 0.0,
            threshold: 0.0,
        })?;
        Ok(match self.convention {
            SignConvention::Literal => sol,
            SignConvention::ChainRule => -sol,
        })
    }

    /// Scalar-time right-hand side as a vector.
    pub fn eval_vector(&self, t: f64, x: &Point) -> Result<Point> {
        let m = self.eval(&Point::from_element(1, t), x)?;
        Ok(m.column(0).into_owned())
    }
}

/// `f` as a map model on `T × X` (entries of the `n × k` matrix, column-major).
/// Points with a degenerate `D_x g` evaluate to NaN.
pub fn f_from_g(g: &MapModel, t_dim: usize, convention: SignConvention) -> MapModel {
    let rhs = LevelSetRhs::new(g, t_dim, convention);
    let n = g.codomain.dim();
    MapModel::new(
        format!("f[{}, {}]", g.name, convention.label()),
        g.domain.clone(),
        Space::euclidean(n * t_dim),
        move |z: &Point| {
            let t = Point::from_column_slice(&z.as_slice()[..t_dim]);
            let x = Point::from_column_slice(&z.as_slice()[t_dim..]);
            match rhs.eval(&t, &x) {
                Ok(m) => Point::from_column_slice(m.as_slice()),
                Err(_) => Point::from_element(n * t_dim, f64::NAN),
            }
        },
    )
}

/// `u' = f(t, u)`, `u(0) = b`, with scalar time and `f` from `g`.
#[derive(Debug, Clone)]
pub struct OdeProblem {
    pub implicit: ImplicitProblem,
    pub convention: SignConvention,
}

impl OdeProblem {
    pub fn new(g: MapModel, b: Point, convention: SignConvention) -> Result<Self> {
        Ok(OdeProblem {
            implicit: ImplicitProblem::new(g, Point::zeros(1), b)?,
            convention,
        })
    }

    pub fn rhs(&self) -> LevelSetRhs {
        LevelSetRhs::new(&self.implicit.g, 1, self.convention)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolution {
    pub t: Vec<f64>,
    pub u: Vec<Point>,
    pub level_residuals: Vec<f64>,
    pub charts_built: usize,
}

/// Solve on `t_grid` (starting at 0) by continuation along the level set.
pub fn ode_solve(problem: &OdeProblem, t_grid: &[f64], options: &ImplicitOptions) -> Result<OdeSolution> {
    if t_grid.first() != Some(&0.0) {
        return Err(Error::InvalidArgument("t_grid must start at 0".into()));
    }
    let ip = &problem.implicit;
    let mut cont = Continuation::new(ip, options);
    let mut u = Vec::with_capacity(t_grid.len());
    let mut level_residuals = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let tp = Point::from_element(1, t);
        let x = cont.advance_to(&tp)?;
        let residual = ip.level_residual(&tp, &x);
        if residual > INV_TOL {
            return Err(Error::NonConvergent { residual });
        }
        level_residuals.push(residual);
        u.push(x);
    }
    Ok(OdeSolution {
        t: t_grid.to_vec(),
        u,
        level_residuals,
        charts_built: cont.charts_built,
    })
}

/// Largest central-difference defect `‖(u_{i+1} − u_{i−1})/(t_{i+1} − t_{i−1}) − f(t_i, u_i)‖`
/// over interior nodes.
pub fn ode_residual_check(rhs: &LevelSetRhs, u: &[Point], t_grid: &[f64]) -> Result<f64> {
    if t_grid.len() < 3 || u.len() != t_grid.len() {
        return Err(Error::InvalidArgument(
            "need at least 3 nodes and one value per node".into(),
        ));
    }
    let mut worst = 0.0_f64;
    for i in 1..t_grid.len() - 1 {
        let slope = (&u[i + 1] - &u[i - 1]) / (t_grid[i + 1] - t_grid[i - 1]);
        let f = rhs.eval_vector(t_grid[i], &u[i])?;
        worst = worst.max((slope - f).norm());
    }
    Ok(worst)
}

/// Classical fourth-order Runge–Kutta on `t_grid`.
pub fn rk4(rhs: &LevelSetRhs, u0: &Point, t_grid: &[f64]) -> Result<Vec<Point>> {
    let mut out = Vec::with_capacity(t_grid.len());
    let mut u = u0.clone();
    out.push(u.clone());
    for w in t_grid.windows(2) {
        let (t, h) = (w[0], w[1] - w[0]);
        let k1 = rhs.eval_vector(t, &u)?;
        let k2 = rhs.eval_vector(t + h / 2.0, &(&u + &k1 * (h / 2.0)))?;
        let k3 = rhs.eval_vector(t + h / 2.0, &(&u + &k2 * (h / 2.0)))?;
        let k4 = rhs.eval_vector(t + h, &(&u + &k3 * h))?;
        u = &u + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        out.push(u.clone());
    }
    Ok(out)
}

/// Uniform grid `0, h, 2h, …, t_end`.
pub fn uniform_grid(t_end: f64, n_steps: usize) -> Vec<f64> {
    (0..=n_steps).map(|i| t_end * i as f64 / n_steps as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> Point {
        Point::from_column_slice(xs)
    }

    fn g_exp() -> MapModel {
        MapModel::new("x*exp(-t)", Space::euclidean(2), Space::euclidean(1), |z| {
            v(&[z[1] * libm::exp(-z[0])])
        })
        .with_jacobian(|z| {
            let e = libm::exp(-z[0]);
            Matrix::from_row_slice(1, 2, &[-z[1] * e, e])
        })
    }

    fn g_cubic() -> MapModel {
        MapModel::new("x^3+x-t", Space::euclidean(2), Space::euclidean(1), |z| {
            v(&[z[1] * z[1] * z[1] + z[1] - z[0]])
        })
        .with_jacobian(|z| Matrix::from_row_slice(1, 2, &[-1.0, 3.0 * z[1] * z[1] + 1.0]))
    }

    fn g_x() -> MapModel {
        MapModel::new("x", Space::euclidean(2), Space::euclidean(1), |z| v(&[z[1]]))
            .with_jacobian(|_| Matrix::from_row_slice(1, 2, &[0.0, 1.0]))
    }

    fn bisect(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (g(lo) < 0.0) == (g(mid) < 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn lifted_map_examples() {
        let f = build_f(&g_x(), 1);
        assert_eq!(f.eval(&v(&[0.3, -2.0])).unwrap(), v(&[0.3, -2.0]));
        let f = build_f(&g_cubic(), 1);
        assert_eq!(f.eval(&v(&[1.0, 1.0])).unwrap(), v(&[1.0, 1.0]));
        let j = f.analytic_jacobian(&v(&[1.0, 1.0])).unwrap();
        assert_eq!(j, Matrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 4.0]));
    }

    #[test]
    fn implicit_solve_examples() {
        let opts = ImplicitOptions::default();
        let p = ImplicitProblem::new(g_cubic(), v(&[0.0]), v(&[0.0])).unwrap();
        assert!((implicit_solve(&p, &v(&[2.0]), &opts).unwrap()[0] - 1.0).abs() < 1e-9);

        let p = ImplicitProblem::new(g_x(), v(&[0.0]), v(&[0.7])).unwrap();
        assert!((implicit_solve(&p, &v(&[3.0]), &opts).unwrap()[0] - 0.7).abs() < 1e-12);

        let p = ImplicitProblem::new(g_exp(), v(&[0.0]), v(&[1.0])).unwrap();
        let h = implicit_solve(&p, &v(&[1.0]), &opts).unwrap();
        assert!((h[0] - core::f64::consts::E).abs() < 1e-9);
    }

    #[test]
    fn implicit_derivative_examples() {
        let p = ImplicitProblem::new(g_cubic(), v(&[0.0]), v(&[0.0])).unwrap();
        assert!((implicit_derivative(&p, &v(&[2.0]), &v(&[1.0])).unwrap()[(0, 0)] - 0.25).abs() < 1e-15);
        let p = ImplicitProblem::new(g_exp(), v(&[0.0]), v(&[1.0])).unwrap();
        assert!((implicit_derivative(&p, &v(&[0.0]), &v(&[1.0])).unwrap()[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rhs_examples() {
        let f = f_from_g(&g_exp(), 1, SignConvention::ChainRule);
        assert!((f.eval(&v(&[0.4, 1.7])).unwrap()[0] - 1.7).abs() < 1e-14);
        let f = f_from_g(&g_cubic(), 1, SignConvention::ChainRule);
        assert!((f.eval(&v(&[0.0, 0.5])).unwrap()[0] - 1.0 / 1.75).abs() < 1e-14);
        let f = f_from_g(&g_exp(), 1, SignConvention::Literal);
        assert!((f.eval(&v(&[0.4, 1.7])).unwrap()[0] + 1.7).abs() < 1e-14);
    }

    #[test]
    fn ode_examples() {
        let opts = ImplicitOptions::default();
        let p = OdeProblem::new(g_exp(), v(&[1.0]), SignConvention::ChainRule).unwrap();
        let s = ode_solve(&p, &[0.0, 0.5, 1.0], &opts).unwrap();
        for (t, u) in s.t.iter().zip(&s.u) {
            assert!((u[0] - libm::exp(*t)).abs() < 1e-9);
        }

        let p = OdeProblem::new(g_x(), v(&[5.0]), SignConvention::ChainRule).unwrap();
        let grid = uniform_grid(1.0, 10);
        let s = ode_solve(&p, &grid, &opts).unwrap();
        assert!(s.u.iter().all(|u| (u[0] - 5.0).abs() < 1e-12));
        assert_eq!(ode_residual_check(&p.rhs(), &s.u, &grid).unwrap(), 0.0);

        let p = OdeProblem::new(g_cubic(), v(&[0.0]), SignConvention::ChainRule).unwrap();
        let s = ode_solve(&p, &[0.0, 1.0, 2.0], &opts).unwrap();
        let h1 = bisect(|x| x * x * x + x - 1.0, 0.0, 1.0);
        assert!((s.u[1][0] - h1).abs() < 1e-9);
        assert!((h1 - 0.68233).abs() < 1e-5);
        assert!((s.u[2][0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn residual_check_and_rk4() {
        let opts = ImplicitOptions::default();
        let p = OdeProblem::new(g_exp(), v(&[1.0]), SignConvention::ChainRule).unwrap();
        let grid = uniform_grid(1.0, 100);
        let s = ode_solve(&p, &grid, &opts).unwrap();
        let d = ode_residual_check(&p.rhs(), &s.u, &grid).unwrap();
        assert!(d <= 1e-3, "{d}");
        let literal = LevelSetRhs::new(&p.implicit.g, 1, SignConvention::Literal);
        assert!(ode_residual_check(&literal, &s.u, &grid).unwrap() > 1.0);
        let r = rk4(&p.rhs(), &v(&[1.0]), &grid).unwrap();
        let gap = r.iter().zip(&s.u).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);
        assert!(gap < 1e-6);
    }

    #[test]
    fn degenerate_base_point() {
        let g = MapModel::new("x^2-t", Space::euclidean(2), Space::euclidean(1), |z| {
            v(&[z[1] * z[1] - z[0]])
        })
        .with_jacobian(|z| Matrix::from_row_slice(1, 2, &[-1.0, 2.0 * z[1]]));
        assert!(matches!(
            ImplicitProblem::new(g, v(&[0.0]), v(&[0.0])),
            Err(Error::DegenerateDerivative { .. })
        ));
    }
}
