//! Finite-dimensional normed-space models, convex bodies and convexity geometry.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::rng::{self, StreamRng};
use crate::tolerances::TOL_ZERO;
use crate::{Error, Point, Result};

/// p-norm of a coordinate slice; `p = ∞` is the max norm.
pub fn p_norm(v: &[f64], p: f64) -> f64 {
    if p == 1.0 {
        v.iter().map(|x| x.abs()).sum()
    } else if p == 2.0 {
        libm::sqrt(v.iter().map(|x| x * x).sum())
    } else if p.is_infinite() {
        v.iter().fold(0.0, |m, x| m.max(x.abs()))
    } else {
        let scale = v.iter().fold(0.0, |m: f64, x| m.max(x.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        let s: f64 = v.iter().map(|x| libm::pow(x.abs() / scale, p)).sum();
        scale * libm::pow(s, 1.0 / p)
    }
}

fn check_p(p: f64) -> Result<()> {
    if p >= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidSpace(format!(
            "norm exponent must lie in [1, inf], got {p}"
        )))
    }
}

/// A finite-dimensional real normed space.
///
/// Products carry the Euclidean 2-combination of factor norms,
/// `‖(x₁,…,x_k)‖ = (Σ ‖x_i‖²)^{1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub enum Space {
    Lp { dim: usize, p: f64 },
    Product(Vec<Space>),
}

impl Space {
    pub fn lp(dim: usize, p: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSpace("dimension must be positive".into()));
        }
        check_p(p)?;
        Ok(Space::Lp { dim, p })
    }

    pub fn euclidean(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Space::Lp { dim, p: 2.0 }
    }

    pub fn product(factors: Vec<Space>) -> Self {
        Space::Product(factors)
    }

    pub fn dim(&self) -> usize {
        match self {
            Space::Lp { dim, .. } => *dim,
            Space::Product(fs) => fs.iter().map(Space::dim).sum(),
        }
    }

    /// Norm of `v`, checking the dimension.
    pub fn norm(&self, v: &Point) -> Result<f64> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: v.len(),
            });
        }
        Ok(self.norm_of(v.as_slice()))
    }

    /// Norm of a slice whose length is already known to match.
    pub fn norm_of(&self, v: &[f64]) -> f64 {
        match self {
            Space::Lp { p, .. } => p_norm(v, *p),
            Space::Product(fs) => {
                let mut off = 0;
                let mut acc = 0.0;
                for f in fs {
                    let n = f.norm_of(&v[off..off + f.dim()]);
                    acc += n * n;
                    off += f.dim();
                }
                libm::sqrt(acc)
            }
        }
    }

    pub fn distance(&self, a: &Point, b: &Point) -> f64 {
        self.norm_of((a - b).as_slice())
    }

    /// Analytic strict-convexity table: `p ∈ (1,∞)` or dimension one; products
    /// are strictly convex when every factor is.
    pub fn strictly_convex(&self) -> bool {
        match self {
            Space::Lp { dim, p } => *dim == 1 || (*p > 1.0 && p.is_finite()),
            Space::Product(fs) => fs.iter().all(Space::strictly_convex),
        }
    }

    /// Uniformly distributed direction in the coordinate cube, rescaled onto the unit sphere.
    pub fn random_unit(&self, rng: &mut StreamRng) -> Point {
        loop {
            let z = Point::from_fn(self.dim(), |_, _| rng::uniform(rng, -1.0, 1.0));
            let n = self.norm_of(z.as_slice());
            if n > 1e-12 {
                return z / n;
            }
        }
    }

    pub fn basis(&self, i: usize) -> Point {
        let mut e = Point::zeros(self.dim());
        e[i] = 1.0;
        e
    }
}

/// A closed bounded convex set: a norm ball or a product of bodies.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvexBody {
    Ball { center: Point, radius: f64, p: f64 },
    Product { factors: Vec<ConvexBody> },
}

impl ConvexBody {
    pub fn ball(center: Point, radius: f64, p: f64) -> Result<Self> {
        check_p(p)?;
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "ball radius must be finite and nonnegative, got {radius}"
            )));
        }
        if center.is_empty() {
            return Err(Error::InvalidSpace("ball center must have positive dimension".into()));
        }
        Ok(ConvexBody::Ball { center, radius, p })
    }

    /// Closed interval `[lo, hi]` as a one-dimensional ball.
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        if hi < lo {
            return Err(Error::InvalidArgument(format!("empty interval [{lo}, {hi}]")));
        }
        Self::ball(Point::from_element(1, 0.5 * (lo + hi)), 0.5 * (hi - lo), 2.0)
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexBody::Ball { center, .. } => center.len(),
            ConvexBody::Product { factors } => factors.iter().map(ConvexBody::dim).sum(),
        }
    }

    /// The normed space this body's geometry refers to.
    pub fn space(&self) -> Space {
        match self {
            ConvexBody::Ball { center, p, .. } => Space::Lp {
                dim: center.len(),
                p: *p,
            },
            ConvexBody::Product { factors } => Space::Product(factors.iter().map(ConvexBody::space).collect()),
        }
    }

    pub fn center(&self) -> Point {
        match self {
            ConvexBody::Ball { center, .. } => center.clone(),
            ConvexBody::Product { factors } => concat(factors.iter().map(ConvexBody::center)),
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            ConvexBody::Ball { radius, .. } => 2.0 * radius,
            ConvexBody::Product { factors } => libm::sqrt(factors.iter().map(|f| f.diameter() * f.diameter()).sum()),
        }
    }

    fn check_dim(&self, x: &Point) -> Result<()> {
        if x.len() == self.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            })
        }
    }

    /// Membership and distance to the boundary.
    ///
    /// For points outside a product the distance is to the body itself.
    pub fn queries(&self, x: &Point) -> Result<(bool, f64)> {
        self.check_dim(x)?;
        Ok(self.queries_of(x.as_slice()))
    }

    fn queries_of(&self, x: &[f64]) -> (bool, f64) {
        match self {
            ConvexBody::Ball { center, radius, p } => {
                let d = p_norm(&diff(x, center.as_slice()), *p);
                let inside = d <= radius * (1.0 + 1e-12) + 1e-15;
                (inside, (radius - d).abs())
            }
            ConvexBody::Product { factors } => {
                let mut off = 0;
                let mut all_in = true;
                let mut min_in = f64::INFINITY;
                let mut out_sq = 0.0;
                for f in factors {
                    let (inside, d) = f.queries_of(&x[off..off + f.dim()]);
                    off += f.dim();
                    if inside {
                        min_in = min_in.min(d);
                    } else {
                        all_in = false;
                        out_sq += d * d;
                    }
                }
                if all_in {
                    (true, min_in)
                } else {
                    (false, libm::sqrt(out_sq))
                }
            }
        }
    }

    pub fn contains(&self, x: &Point) -> bool {
        x.len() == self.dim() && self.queries_of(x.as_slice()).0
    }

    /// Distance by which `x` lies outside the body (0 when inside).
    pub fn overshoot(&self, x: &Point) -> f64 {
        let (inside, d) = self.queries_of(x.as_slice());
        if inside {
            0.0
        } else {
            d
        }
    }

    /// Point of the body obtained by radially pulling `x` back (per factor).
    pub fn project(&self, x: &Point) -> Point {
        match self {
            ConvexBody::Ball { center, radius, p } => {
                let d = p_norm((x - center).as_slice(), *p);
                if d <= *radius {
                    x.clone()
                } else {
                    center + (x - center) * (radius / d)
                }
            }
            ConvexBody::Product { factors } => {
                let mut off = 0;
                concat(factors.iter().map(|f| {
                    let part = Point::from_column_slice(&x.as_slice()[off..off + f.dim()]);
                    off += f.dim();
                    f.project(&part)
                }))
            }
        }
    }

    /// A sample of the body (direction from the cube, radius `r·U^{1/d}`).
    pub fn sample_interior(&self, rng: &mut StreamRng) -> Point {
        match self {
            ConvexBody::Ball { center, radius, p } => {
                let space = Space::Lp {
                    dim: center.len(),
                    p: *p,
                };
                let u = space.random_unit(rng);
                let t = libm::pow(rng.gen::<f64>(), 1.0 / center.len() as f64);
                center + u * (radius * t)
            }
            ConvexBody::Product { factors } => concat(factors.iter().map(|f| f.sample_interior(rng))),
        }
    }

    /// A sample of the boundary. For products one factor (chosen at random)
    /// sits on its own boundary.
    pub fn sample_boundary(&self, rng: &mut StreamRng) -> Point {
        match self {
            ConvexBody::Ball { center, radius, p } => {
                let space = Space::Lp {
                    dim: center.len(),
                    p: *p,
                };
                center + space.random_unit(rng) * *radius
            }
            ConvexBody::Product { factors } => {
                let k = rng.gen_range(0..factors.len());
                concat(factors.iter().enumerate().map(|(i, f)| {
                    if i == k {
                        f.sample_boundary(rng)
                    } else {
                        f.sample_interior(rng)
                    }
                }))
            }
        }
    }

    /// `center ± scale·(extent along e_i)` for every coordinate axis.
    pub fn axis_points(&self, scale: f64) -> Vec<Point> {
        let c = self.center();
        let (lo, hi) = self.bounding_box();
        let mut pts = Vec::with_capacity(2 * c.len());
        for i in 0..c.len() {
            for (sign, edge) in [(1.0, hi[i]), (-1.0, lo[i])] {
                let mut x = c.clone();
                x[i] += sign * scale * (edge - c[i]).abs();
                pts.push(x);
            }
        }
        pts
    }

    /// Coordinate bounding box `(lo, hi)`.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            ConvexBody::Ball { center, radius, .. } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            ConvexBody::Product { factors } => {
                let mut lo = Vec::new();
                let mut hi = Vec::new();
                for f in factors {
                    let (l, h) = f.bounding_box();
                    lo.extend(l);
                    hi.extend(h);
                }
                (lo, hi)
            }
        }
    }
}

/// `C₁ × C₂` under the 2-combination product norm; diameter `√(d₁² + d₂²)`.
pub fn product_body(c1: ConvexBody, c2: ConvexBody) -> ConvexBody {
    let mut factors = Vec::new();
    for c in [c1, c2] {
        match c {
            ConvexBody::Product { factors: fs } => factors.extend(fs),
            ball => factors.push(ball),
        }
    }
    ConvexBody::Product { factors }
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub(crate) fn concat<I: IntoIterator<Item = Point>>(parts: I) -> Point {
    let mut v = Vec::new();
    for p in parts {
        v.extend_from_slice(p.as_slice());
    }
    Point::from_vec(v)
}

/// A domain region: a convex body or a spherical shell (annulus) around a center.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Body(ConvexBody),
    Shell {
        center: Point,
        inner: f64,
        outer: f64,
        p: f64,
    },
}

impl Region {
    pub fn dim(&self) -> usize {
        match self {
            Region::Body(b) => b.dim(),
            Region::Shell { center, .. } => center.len(),
        }
    }

    pub fn contains(&self, x: &Point) -> bool {
        match self {
            Region::Body(b) => b.contains(x),
            Region::Shell {
                center,
                inner,
                outer,
                p,
            } => {
                if x.len() != center.len() {
                    return false;
                }
                let d = p_norm((x - center).as_slice(), *p);
                d >= inner * (1.0 - 1e-12) && d <= outer * (1.0 + 1e-12)
            }
        }
    }

    /// Smallest convex body used to seed searches over the region.
    pub fn hull(&self) -> ConvexBody {
        match self {
            Region::Body(b) => b.clone(),
            Region::Shell { center, outer, p, .. } => ConvexBody::Ball {
                center: center.clone(),
                radius: *outer,
                p: *p,
            },
        }
    }
}

/// Sampled upper bound on the modulus of convexity at one `ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulusEstimate {
    pub epsilon: f64,
    pub value_upper_bound: f64,
    pub witness: (Point, Point),
    pub sample_budget: usize,
}

/// Smallest perturbation scale used when refining witness pairs. Pairs
/// closer to antipodal than this would only be admitted at `ε ≈ 2`
/// through rounding of `‖x − y‖`.
const MIN_PERTURBATION: f64 = 1e-6;

fn modulus_value(space: &Space, x: &Point, y: &Point) -> f64 {
    (1.0 - 0.5 * space.norm_of((x + y).as_slice())).clamp(0.0, 1.0)
}

fn deterministic_unit_vectors(space: &Space) -> Vec<Point> {
    let d = space.dim();
    let mut out = Vec::new();
    for i in 0..d {
        let e = space.basis(i);
        out.push(-&e);
        out.push(e);
    }
    if d <= 3 {
        for mask in 0..(1u32 << d) {
            let v = Point::from_fn(d, |i, _| if mask & (1 << i) != 0 { -1.0 } else { 1.0 });
            let n = space.norm_of(v.as_slice());
            out.push(v / n);
        }
    }
    out
}

/// Upper bound on `inf { 1 − ‖x+y‖/2 : ‖x‖ = ‖y‖ = 1, ‖x−y‖ ≥ ε }`.
///
/// Axis and sign-vector pairs are tried first, then `budget` sampled pairs
/// interleaved with local refinement of the running best. The candidate
/// sequence for a smaller budget is a prefix of the one for a larger budget,
/// so the bound is nonincreasing in `budget` for a fixed seed.
pub fn modulus_of_convexity(space: &Space, epsilon: f64, budget: usize, seed: u64) -> Result<ModulusEstimate> {
    if !(0.0..=2.0).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must lie in [0, 2], got {epsilon}"
        )));
    }
    // Rounding of `‖x − y‖` would admit nearly antipodal pairs at `ε = 2`,
    // so inexact pairs must clear `ε` by a few ulps.
    let margin = 8.0 * f64::EPSILON * epsilon;
    let admissible = |x: &Point, y: &Point| {
        let exact_antipodes = x.iter().zip(y.iter()).all(|(a, b)| *a == -*b);
        let d = space.norm_of((x - y).as_slice());
        if exact_antipodes {
            d >= epsilon
        } else {
            d >= epsilon + margin
        }
    };

    let mut best: Option<(f64, Point, Point)> = None;
    let offer = |x: Point, y: Point, best: &mut Option<(f64, Point, Point)>| {
        if admissible(&x, &y) {
            let v = modulus_value(space, &x, &y);
            if best.as_ref().is_none_or(|(b, _, _)| v < *b) {
                *best = Some((v, x, y));
            }
        }
    };

    let fixed = deterministic_unit_vectors(space);
    for x in &fixed {
        for y in &fixed {
            offer(x.clone(), y.clone(), &mut best);
        }
    }

    let mut rng = rng::stream(seed, 0x6d6f_6475);
    for k in 0..budget {
        match k % 4 {
            1 => {
                let x = space.random_unit(&mut rng);
                let t = libm::pow(10.0, rng::uniform(&mut rng, -6.0, 0.5));
                let z = space.random_unit(&mut rng);
                let y = -&x + z * t;
                let n = space.norm_of(y.as_slice());
                if n > 0.0 {
                    offer(x, y / n, &mut best);
                }
            }
            3 => {
                let sigma = libm::pow(10.0, rng::uniform(&mut rng, -1.0, 0.0)) * libm::pow(0.5, ((k / 4) % 17) as f64);
                let sigma = sigma.max(MIN_PERTURBATION);
                let gx = space.random_unit(&mut rng);
                let gy = space.random_unit(&mut rng);
                if let Some((_, bx, by)) = best.clone() {
                    let x = &bx + gx * sigma;
                    let y = &by + gy * sigma;
                    let (nx, ny) = (space.norm_of(x.as_slice()), space.norm_of(y.as_slice()));
                    offer(x / nx, y / ny, &mut best);
                }
            }
            _ => {
                let x = space.random_unit(&mut rng);
                let y = space.random_unit(&mut rng);
                offer(x, y, &mut best);
            }
        }
    }

    // Some antipodal axis pair is always admissible, so `best` is set.
    let (value, x, y) = best.expect("antipodal axis pair is admissible for every epsilon <= 2");
    Ok(ModulusEstimate {
        epsilon,
        value_upper_bound: value,
        witness: (x, y),
        sample_budget: budget,
    })
}

/// Resolution of the bisection on `ε` in [`characteristic_of_convexity`].
pub const CHARACTERISTIC_RESOLUTION: f64 = 2.0 / 1024.0;

/// Lower bound on the characteristic of convexity `sup { ε : m(ε) = 0 }`,
/// bisecting on `ε` with the sampled modulus and the `TOL_ZERO` threshold.
pub fn characteristic_of_convexity(space: &Space, budget: usize, seed: u64) -> Result<f64> {
    let is_zero = |eps: f64| -> Result<bool> {
        Ok(modulus_of_convexity(space, eps, budget, seed)?.value_upper_bound <= TOL_ZERO)
    };
    if is_zero(2.0)? {
        return Ok(2.0);
    }
    let (mut lo, mut hi) = (0.0, 2.0);
    while hi - lo > CHARACTERISTIC_RESOLUTION {
        let mid = 0.5 * (lo + hi);
        if is_zero(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Nodes `c + k·δ` of the δ-grid over a bounding box, per coordinate.
pub(crate) fn grid_axes(lo: &[f64], hi: &[f64], center: &[f64], step: f64) -> Vec<Vec<f64>> {
    lo.iter()
        .zip(hi)
        .zip(center)
        .map(|((l, h), c)| {
            let kmin = libm::ceil((l - c) / step - 1e-9) as i64;
            let kmax = libm::floor((h - c) / step + 1e-9) as i64;
            (kmin..=kmax).map(|k| c + k as f64 * step).collect()
        })
        .collect()
}

/// Visit every point of the cartesian product of `axes`.
pub(crate) fn for_each_grid_point<F: FnMut(&Point)>(axes: &[Vec<f64>], mut visit: F) {
    let d = axes.len();
    if axes.iter().any(Vec::is_empty) {
        return;
    }
    let mut idx = vec![0usize; d];
    let mut x = Point::from_fn(d, |i, _| axes[i][0]);
    loop {
        visit(&x);
        let mut i = 0;
        loop {
            if i == d {
                return;
            }
            idx[i] += 1;
            if idx[i] < axes[i].len() {
                x[i] = axes[i][idx[i]];
                break;
            }
            idx[i] = 0;
            x[i] = axes[i][0];
            i += 1;
        }
    }
}
