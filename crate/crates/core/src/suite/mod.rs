//! Built-in benchmark problems with independent oracles.
//!
//! Each [`ProblemRecord`] carries the map (or implicit problem), the anchors
//! and bodies where a classification is expected, and oracle callbacks that
//! never call into the solvers. [`register_builtin`] self-checks every
//! oracle before returning.

pub mod oracles;
mod run;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::maps::{LinearMap, MapModel, SelfMap, Smoothness};
use crate::rng;
use crate::spaces::{ConvexBody, Region, Space};
use crate::{Error, Matrix, Point, Result};

pub use run::{run_problem, Check, CheckTolerances, OracleKind, ReportFragment, RunOptions, Table, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Tag {
    C1Invertible,
    NonsmoothWeakA,
    DegeneratePoint,
    ProperCovering,
    HadamardLevyPass,
    HadamardLevyFail,
    Implicit,
    Ode,
}

impl Tag {
    pub const ALL: [Tag; 8] = [
        Tag::C1Invertible,
        Tag::NonsmoothWeakA,
        Tag::DegeneratePoint,
        Tag::ProperCovering,
        Tag::HadamardLevyPass,
        Tag::HadamardLevyFail,
        Tag::Implicit,
        Tag::Ode,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Tag::C1Invertible => "C1_invertible",
            Tag::NonsmoothWeakA => "nonsmooth_weakA",
            Tag::DegeneratePoint => "degenerate_point",
            Tag::ProperCovering => "proper_covering",
            Tag::HadamardLevyPass => "hadamard_levy_pass",
            Tag::HadamardLevyFail => "hadamard_levy_fail",
            Tag::Implicit => "implicit",
            Tag::Ode => "ode",
        }
    }
}

/// All preimages of `y` inside the problem domain.
pub type InverseOracle = Arc<dyn Fn(&Point) -> Vec<Point> + Send + Sync>;
/// Exact solution `x(t)` of `g(t, x) = c`.
pub type SolutionOracle = Arc<dyn Fn(f64) -> Point + Send + Sync>;

/// Exact infimum of the auxiliary-map residual for a scalar target.
pub type ResidualOracle = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A certification expected to produce a given classification label.
#[derive(Clone)]
pub struct Expectation {
    pub anchor: Point,
    pub body: ConvexBody,
    pub s: f64,
    /// Auxiliary map; `None` means the inverse Jacobian at the anchor.
    pub aux: Option<LinearMap>,
    pub target_center: Option<Point>,
    /// Explicit targets; `None` samples the target ball.
    pub targets: Option<Vec<Point>>,
    pub label: &'static str,
    /// Grid-oracle reference for fixed-point-free classifications.
    pub residual_oracle: Option<ResidualOracle>,
}

/// A single inversion compared against the oracle.
#[derive(Debug, Clone)]
pub struct InversionCase {
    pub anchor: Point,
    pub body_radius: f64,
    pub s_fraction: f64,
    pub y: Point,
}

#[derive(Clone)]
pub struct MapProblem {
    pub f: MapModel,
    pub domain: Region,
    pub expectations: Vec<Expectation>,
    /// Anchors for all-scales certification with the expected outcome (certified or not).
    pub scale_anchors: Vec<(Point, bool)>,
    pub chart_anchors: Vec<Point>,
    pub inversion_cases: Vec<InversionCase>,
    pub inverse: Option<InverseOracle>,
    /// Where sheet-count targets are drawn.
    pub sheet_region: Option<Region>,
    /// Sampling domain for the Hadamard–Lévy probe.
    pub hl_domain: Option<ConvexBody>,
}

/// A self-map whose fixed-point set is known in closed form.
#[derive(Clone)]
pub struct SelfMapProblem {
    pub space: Space,
    pub map: Arc<dyn Fn(&Point) -> Point + Send + Sync>,
    pub body: ConvexBody,
    /// Distance from a point to the exact fixed-point set.
    pub fixed_set_distance: Arc<dyn Fn(&Point) -> f64 + Send + Sync>,
}

#[derive(Clone)]
pub struct ImplicitSpec {
    pub g: MapModel,
    pub b: Point,
    pub solution: SolutionOracle,
    pub queries: Vec<f64>,
}

#[derive(Clone)]
pub enum Problem {
    Map(MapProblem),
    SelfMap(SelfMapProblem),
    Implicit(ImplicitSpec),
}

#[derive(Clone)]
pub struct ProblemRecord {
    pub name: String,
    pub summary: String,
    pub tags: Vec<Tag>,
    pub params: Vec<(String, f64)>,
    pub problem: Problem,
}

impl core::fmt::Debug for ProblemRecord {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("ProblemRecord")
            .field("name", &self.name)
            .field("tags", &self.tags)
            .finish_non_exhaustive()
    }
}

impl ProblemRecord {
    pub fn has_tag(&self, tag: Tag) -> bool {
        self.tags.contains(&tag)
    }

    pub fn map(&self) -> Option<&MapProblem> {
        match &self.problem {
            Problem::Map(m) => Some(m),
            _ => None,
        }
    }
}

fn v(xs: &[f64]) -> Point {
    Point::from_column_slice(xs)
}

fn euclid_ball(center: &[f64], r: f64) -> ConvexBody {
    ConvexBody::ball(v(center), r, 2.0).expect("valid ball")
}

fn grid_anchors(dim: usize) -> Vec<Point> {
    let ticks = oracles::linspace(-1.0, 1.0, 3);
    match dim {
        1 => oracles::linspace(-1.0, 1.0, 9).into_iter().map(|x| v(&[x])).collect(),
        2 => ticks
            .iter()
            .flat_map(|&x| ticks.iter().map(move |&y| v(&[x, y])))
            .collect(),
        _ => (0..9)
            .map(|i| Point::from_fn(dim, |j, _| oracles::linspace(-1.0, 1.0, 9)[(i + 3 * j) % 9]))
            .collect(),
    }
}

fn strong_expectation(anchor: Point) -> Expectation {
    Expectation {
        body: ConvexBody::ball(anchor.clone(), 0.2, 2.0).expect("valid ball"),
        anchor,
        s: 0.1,
        aux: None,
        target_center: None,
        targets: None,
        label: "StrongA",
        residual_oracle: None,
    }
}

fn identity(dim: usize) -> ProblemRecord {
    let f = MapModel::identity(Space::euclidean(dim));
    let zero = vec![0.0; dim];
    ProblemRecord {
        name: format!("identity_{dim}d"),
        summary: format!("identity on R^{dim}"),
        tags: vec![Tag::C1Invertible, Tag::ProperCovering, Tag::HadamardLevyPass],
        params: Vec::new(),
        problem: Problem::Map(MapProblem {
            domain: Region::Body(euclid_ball(&zero, 3.0)),
            expectations: vec![strong_expectation(Point::zeros(dim))],
            scale_anchors: grid_anchors(dim).into_iter().map(|a| (a, true)).collect(),
            chart_anchors: vec![Point::zeros(dim), Point::from_element(dim, 0.5)],
            inversion_cases: Vec::new(),
            inverse: Some(Arc::new(|y: &Point| vec![y.clone()])),
            sheet_region: Some(Region::Body(euclid_ball(&zero, 2.0))),
            hl_domain: Some(euclid_ball(&zero, 20.0)),
            f,
        }),
    }
}

fn linear(kappa: f64, name: &str) -> ProblemRecord {
    let m = oracles::conditioned_2x2(kappa, PI / 6.0, PI / 5.0);
    let inv = oracles::inverse_2x2(m).expect("nonsingular");
    let matrix = Matrix::from_row_slice(2, 2, &[m[0][0], m[0][1], m[1][0], m[1][1]]);
    let f = MapModel::linear(name, matrix);
    ProblemRecord {
        name: name.to_string(),
        summary: format!("2x2 linear map with condition number {kappa}"),
        tags: vec![Tag::C1Invertible],
        params: vec![("kappa".to_string(), kappa)],
        problem: Problem::Map(MapProblem {
            domain: Region::Body(euclid_ball(&[0.0, 0.0], 3.0)),
            expectations: vec![strong_expectation(v(&[0.0, 0.0])), strong_expectation(v(&[0.5, -0.5]))],
            scale_anchors: grid_anchors(2).into_iter().map(|a| (a, true)).collect(),
            chart_anchors: vec![v(&[0.0, 0.0]), v(&[1.0, -0.5])],
            inversion_cases: Vec::new(),
            inverse: Some(Arc::new(move |y: &Point| {
                let x = oracles::apply_2x2(inv, [y[0], y[1]]);
                vec![v(&x)]
            })),
            sheet_region: None,
            hl_domain: None,
            f,
        }),
    }
}

fn cubic_map() -> MapModel {
    MapModel::new("cubic", Space::euclidean(1), Space::euclidean(1), |x| {
        x.map(|t| t * t * t + t)
    })
    .with_jacobian(|x| Matrix::from_element(1, 1, 3.0 * x[0] * x[0] + 1.0))
    .with_smoothness(Smoothness::C1)
}

fn cubic() -> ProblemRecord {
    let domain = ConvexBody::interval(-2.0, 2.0).expect("interval");
    ProblemRecord {
        name: "cubic".to_string(),
        summary: "x^3 + x on [-2, 2]".to_string(),
        tags: vec![Tag::C1Invertible, Tag::ProperCovering, Tag::HadamardLevyPass],
        params: Vec::new(),
        problem: Problem::Map(MapProblem {
            f: cubic_map(),
            domain: Region::Body(domain),
            expectations: vec![
                Expectation {
                    anchor: v(&[0.0]),
                    body: ConvexBody::interval(-0.2, 0.2).expect("interval"),
                    s: 0.09,
                    aux: Some(LinearMap::identity(1)),
                    target_center: None,
                    targets: None,
                    label: "StrongA",
                    residual_oracle: None,
                },
                strong_expectation(v(&[1.0])),
            ],
            scale_anchors: grid_anchors(1).into_iter().map(|a| (a, true)).collect(),
            chart_anchors: vec![v(&[0.0]), v(&[1.0]), v(&[-1.5])],
            inversion_cases: vec![InversionCase {
                anchor: v(&[1.0]),
                body_radius: 0.5,
                s_fraction: 1.5,
                y: v(&[2.5]),
            }],
            inverse: Some(Arc::new(|y: &Point| {
                let x = oracles::cubic_root(y[0]);
                if x.abs() <= 2.0 {
                    vec![v(&[x])]
                } else {
                    Vec::new()
                }
            })),
            sheet_region: Some(Region::Body(ConvexBody::interval(-0.99, 0.99).expect("interval"))),
            hl_domain: Some(ConvexBody::interval(-5.0, 5.0).expect("interval")),
        }),
    }
}

fn z2() -> ProblemRecord {
    let f = MapModel::new("z2", Space::euclidean(2), Space::euclidean(2), |z| {
        v(&[z[0] * z[0] - z[1] * z[1], 2.0 * z[0] * z[1]])
    })
    .with_jacobian(|z| Matrix::from_row_slice(2, 2, &[2.0 * z[0], -2.0 * z[1], 2.0 * z[1], 2.0 * z[0]]))
    .with_smoothness(Smoothness::C1);
    let shell = Region::Shell {
        center: v(&[0.0, 0.0]),
        inner: 0.5,
        outer: 2.0,
        p: 2.0,
    };
    let domain = shell.clone();
    ProblemRecord {
        name: "z2_annulus".to_string(),
        summary: "complex squaring on the annulus 0.5 <= |z| <= 2".to_string(),
        tags: vec![Tag::C1Invertible, Tag::ProperCovering],
        params: vec![("inner".to_string(), 0.5), ("outer".to_string(), 2.0)],
        problem: Problem::Map(MapProblem {
            f: f.with_region(shell),
            domain: domain.clone(),
            expectations: vec![strong_expectation(v(&[1.0, 0.0]))],
            scale_anchors: Vec::new(),
            chart_anchors: vec![v(&[1.0, 0.0]), v(&[0.0, -1.2])],
            inversion_cases: Vec::new(),
            inverse: Some(Arc::new(move |y: &Point| {
                oracles::complex_sqrt_pair(y[0], y[1])
                    .into_iter()
                    .map(|(a, b)| v(&[a, b]))
                    .filter(|z| domain.contains(z))
                    .collect()
            })),
            sheet_region: Some(Region::Shell {
                center: v(&[0.0, 0.0]),
                inner: 1.0,
                outer: 2.0,
                p: 2.0,
            }),
            hl_domain: None,
        }),
    }
}

fn projection() -> ProblemRecord {
    ProblemRecord {
        name: "projection".to_string(),
        summary: "(x, y) -> (x, 0) on the square [-1, 1]^2".to_string(),
        tags: vec![Tag::DegeneratePoint],
        params: Vec::new(),
        problem: Problem::SelfMap(SelfMapProblem {
            space: Space::euclidean(2),
            map: Arc::new(|x: &Point| v(&[x[0], 0.0])),
            body: ConvexBody::ball(v(&[0.0, 0.0]), 1.0, f64::INFINITY).expect("square"),
            fixed_set_distance: Arc::new(|x: &Point| x[1].abs()),
        }),
    }
}

/// The jump map `h_a(x) = x − a ∓ c/2` on `[a − c, a + c]` with targets around 0.
pub fn ha_weak_a(a: f64, c: f64) -> Result<ProblemRecord> {
    if !(c > 0.0) || !a.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "ha_weakA needs finite a and c > 0, got a = {a}, c = {c}"
        )));
    }
    let f = MapModel::new("ha_weakA", Space::euclidean(1), Space::euclidean(1), move |x| {
        v(&[oracles::ha(x[0], a, c)])
    })
    .with_smoothness(Smoothness::Discontinuous);
    let body = ConvexBody::interval(a - c, a + c)?;
    let targets: Vec<Point> = [0.1, -0.1, 0.3, -0.3, 0.45, -0.45]
        .iter()
        .map(|t| v(&[t * c]))
        .collect();
    Ok(ProblemRecord {
        name: "ha_weakA".to_string(),
        summary: "piecewise shift with a jump at a; weak A without fixed points".to_string(),
        tags: vec![Tag::NonsmoothWeakA],
        params: vec![("a".to_string(), a), ("c".to_string(), c)],
        problem: Problem::Map(MapProblem {
            f,
            domain: Region::Body(body.clone()),
            expectations: vec![Expectation {
                anchor: v(&[a]),
                body,
                s: 0.49 * c,
                aux: Some(LinearMap::identity(1)),
                target_center: Some(v(&[0.0])),
                targets: Some(targets),
                label: "WeakA_NoFixedPoint",
                residual_oracle: Some(Arc::new(move |y| oracles::ha_min_residual(y, c))),
            }],
            scale_anchors: Vec::new(),
            chart_anchors: Vec::new(),
            inversion_cases: Vec::new(),
            inverse: None,
            sheet_region: None,
            hl_domain: None,
        }),
    })
}

fn fold() -> ProblemRecord {
    let f = MapModel::new("fold", Space::euclidean(2), Space::euclidean(2), |x| {
        v(&[x[0] * x[0], x[1]])
    })
    .with_jacobian(|x| Matrix::from_row_slice(2, 2, &[2.0 * x[0], 0.0, 0.0, 1.0]))
    .with_smoothness(Smoothness::C1);
    ProblemRecord {
        name: "fold".to_string(),
        summary: "(x, y) -> (x^2, y), singular along x = 0".to_string(),
        tags: vec![Tag::DegeneratePoint],
        params: Vec::new(),
        problem: Problem::Map(MapProblem {
            f,
            domain: Region::Body(euclid_ball(&[0.0, 0.0], 2.0)),
            expectations: vec![
                strong_expectation(v(&[1.0, 0.0])),
                Expectation {
                    anchor: v(&[0.0, 0.0]),
                    body: euclid_ball(&[0.0, 0.0], 0.2),
                    s: 0.1,
                    aux: None,
                    target_center: None,
                    targets: None,
                    label: "Uncertified",
                    residual_oracle: None,
                },
            ],
            scale_anchors: vec![(v(&[1.0, 0.0]), true), (v(&[0.0, 0.0]), false)],
            chart_anchors: Vec::new(),
            inversion_cases: Vec::new(),
            inverse: Some(Arc::new(|y: &Point| {
                if y[0] < 0.0 {
                    return Vec::new();
                }
                let r = libm::sqrt(y[0]);
                if r == 0.0 {
                    vec![v(&[0.0, y[1]])]
                } else {
                    vec![v(&[-r, y[1]]), v(&[r, y[1]])]
                }
            })),
            sheet_region: None,
            hl_domain: None,
        }),
    }
}

fn atan() -> ProblemRecord {
    let f = MapModel::new("atan", Space::euclidean(1), Space::euclidean(1), |x| x.map(libm::atan))
        .with_jacobian(|x| Matrix::from_element(1, 1, 1.0 / (1.0 + x[0] * x[0])))
        .with_smoothness(Smoothness::C1);
    ProblemRecord {
        name: "atan".to_string(),
        summary: "arctangent: locally invertible, bounded image".to_string(),
        tags: vec![Tag::C1Invertible, Tag::HadamardLevyFail],
        params: Vec::new(),
        problem: Problem::Map(MapProblem {
            f,
            domain: Region::Body(ConvexBody::interval(-100.0, 100.0).expect("interval")),
            expectations: vec![strong_expectation(v(&[0.0]))],
            scale_anchors: Vec::new(),
            chart_anchors: vec![v(&[0.0]), v(&[0.8])],
            inversion_cases: Vec::new(),
            inverse: Some(Arc::new(|y: &Point| {
                if y[0].abs() < PI / 2.0 {
                    let x = libm::tan(y[0]);
                    if x.abs() <= 100.0 {
                        return vec![v(&[x])];
                    }
                }
                Vec::new()
            })),
            sheet_region: None,
            hl_domain: Some(ConvexBody::interval(-100.0, 100.0).expect("interval")),
        }),
    }
}

fn g_exp() -> ProblemRecord {
    let g = MapModel::new("x*exp(-t)", Space::euclidean(2), Space::euclidean(1), |z| {
        v(&[z[1] * libm::exp(-z[0])])
    })
    .with_jacobian(|z| {
        let e = libm::exp(-z[0]);
        Matrix::from_row_slice(1, 2, &[-z[1] * e, e])
    })
    .with_smoothness(Smoothness::C1);
    ProblemRecord {
        name: "g_exp".to_string(),
        summary: "g(t, x) = x exp(-t); level curves x = b e^t".to_string(),
        tags: vec![Tag::Implicit, Tag::Ode],
        params: vec![("b".to_string(), 1.0)],
        problem: Problem::Implicit(ImplicitSpec {
            g,
            b: v(&[1.0]),
            solution: Arc::new(|t| v(&[oracles::exp_trajectory(1.0, t)])),
            queries: vec![0.5, 1.0],
        }),
    }
}

fn g_cubic() -> ProblemRecord {
    let g = MapModel::new("x^3+x-t", Space::euclidean(2), Space::euclidean(1), |z| {
        v(&[z[1] * z[1] * z[1] + z[1] - z[0]])
    })
    .with_jacobian(|z| Matrix::from_row_slice(1, 2, &[-1.0, 3.0 * z[1] * z[1] + 1.0]))
    .with_smoothness(Smoothness::C1);
    ProblemRecord {
        name: "g_cubic".to_string(),
        summary: "g(t, x) = x^3 + x - t; level 0 through (0, 0)".to_string(),
        tags: vec![Tag::Implicit, Tag::Ode],
        params: vec![("b".to_string(), 0.0)],
        problem: Problem::Implicit(ImplicitSpec {
            g,
            b: v(&[0.0]),
            solution: Arc::new(|t| v(&[oracles::cubic_level(0.0, t)])),
            queries: vec![1.0, 2.0],
        }),
    }
}

/// Oracle self-check: defining equations hold to `1e-12` at 100 seeded probes.
pub fn self_check(record: &ProblemRecord) -> core::result::Result<(), String> {
    let mut rng = rng::stream(0x5e1f, 0);
    match &record.problem {
        Problem::Map(m) => {
            let Some(inv) = &m.inverse else { return Ok(()) };
            let hull = m.domain.hull();
            let mut probes = 0;
            while probes < 100 {
                let x = hull.sample_interior(&mut rng);
                if !m.domain.contains(&x) {
                    continue;
                }
                probes += 1;
                let y = m.f.apply(&x);
                let pre = inv(&y);
                let scale = y.amax().max(1.0);
                for p in &pre {
                    let r = (m.f.apply(p) - &y).amax();
                    if r > 1e-12 * scale {
                        return Err(format!("{}: oracle preimage residual {r:e}", record.name));
                    }
                }
                if !pre.iter().any(|p| (p - &x).amax() <= 1e-6 * x.amax().max(1.0)) {
                    return Err(format!("{}: oracle misses a known preimage", record.name));
                }
            }
            Ok(())
        }
        Problem::SelfMap(s) => {
            for _ in 0..100 {
                let x = s.body.sample_interior(&mut rng);
                let px = (s.map)(&x);
                if (s.fixed_set_distance)(&px) > 1e-12 || (s.fixed_set_distance)(&(s.map)(&px)) > 1e-12 {
                    return Err(format!("{}: fixed-set oracle disagrees", record.name));
                }
                if (s.fixed_set_distance)(&x) <= 1e-12 && s.space.distance(&px, &x) > 1e-12 {
                    return Err(format!("{}: point in the fixed set moves", record.name));
                }
            }
            Ok(())
        }
        Problem::Implicit(spec) => {
            let c = spec.g.apply(&crate::spaces::concat([Point::zeros(1), spec.b.clone()]));
            for _ in 0..100 {
                let t = rng::uniform(&mut rng, 0.0, 2.0);
                let x = (spec.solution)(t);
                let r = (spec
                    .g
                    .apply(&crate::spaces::concat([Point::from_element(1, t), x.clone()]))
                    - &c)
                    .amax();
                if r > 1e-12 * x.amax().max(1.0) {
                    return Err(format!("{}: solution oracle residual {r:e}", record.name));
                }
            }
            Ok(())
        }
    }
}

/// The built-in problems, in a fixed order. Panics if an oracle fails its self-check.
pub fn register_builtin() -> Vec<ProblemRecord> {
    let records = vec![
        identity(1),
        identity(2),
        identity(3),
        linear(1.0, "linear_cond1"),
        linear(10.0, "linear_cond10"),
        linear(1e3, "linear_cond1000"),
        cubic(),
        z2(),
        projection(),
        ha_weak_a(0.0, 1.0).expect("default parameters are valid"),
        fold(),
        atan(),
        g_exp(),
        g_cubic(),
    ];
    for r in &records {
        if let Err(msg) = self_check(r) {
            panic!("oracle self-check failed: {msg}");
        }
    }
    records
}

pub fn problem_names() -> Vec<String> {
    register_builtin().into_iter().map(|r| r.name).collect()
}

/// Look up a problem by name, applying parameter overrides (only `ha_weakA`
/// takes parameters: `a` and `c`).
pub fn lookup(name: &str, params: &BTreeMap<String, f64>) -> Result<ProblemRecord> {
    if name == "ha_weakA" {
        for k in params.keys() {
            if k != "a" && k != "c" {
                return Err(Error::InvalidArgument(format!("unknown parameter '{k}' for ha_weakA")));
            }
        }
        let a = params.get("a").copied().unwrap_or(0.0);
        let c = params.get("c").copied().unwrap_or(1.0);
        return ha_weak_a(a, c);
    }
    if let Some(k) = params.keys().next() {
        return Err(Error::InvalidArgument(format!(
            "problem '{name}' takes no parameter '{k}'"
        )));
    }
    register_builtin()
        .into_iter()
        .find(|r| r.name == name)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown problem '{name}'")))
}

/// `SelfMap` view of a [`SelfMapProblem`].
pub struct ClosureSelfMap<'a>(pub &'a SelfMapProblem);

impl SelfMap for ClosureSelfMap<'_> {
    fn dim(&self) -> usize {
        self.0.space.dim()
    }
    fn apply(&self, x: &Point) -> Point {
        (self.0.map)(x)
    }
    fn norm(&self, v: &Point) -> f64 {
        self.0.space.norm_of(v.as_slice())
    }
}
