//! Auxiliary maps and the property-A certificate hierarchy.
//!
//! For an anchor `a`, a convex body `C ∋ a`, an injective auxiliary map `A`
//! and a radius `s`, [`certify`] samples targets `y` with `‖y − f(a)‖ < s`
//! and classifies the family of maps `f̃_y(x) = x − A(f(x) − y)` on `C` as
//! contractive (strong A), nonexpansive (A), quasi-nonexpansive or
//! fixed-point free (weak A), or uncertified.
//!
//! Sampling only bounds Lipschitz constants from below, so a strong
//! certificate requires clearance `STRONG_MARGIN` below 1 and the
//! nonexpansive class tolerates `LIP_TOL` above 1.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::fixedpoint::{grid_min_residual, probe_fixed_point_set};
use crate::maps::{pair, LinearMap, MapModel, SelfMap};
use crate::rng::{self, derive_seed, StreamRng};
use crate::spaces::{concat, product_body, ConvexBody, Space};
use crate::tolerances::{LIP_TOL, N_TARGETS, RESIDUAL_FLOOR, STRONG_MARGIN};
use crate::{Error, Point, Result};

/// Auxiliary map `A : codomain → domain`.
#[derive(Debug, Clone)]
pub enum Auxiliary {
    Linear(LinearMap),
    /// A caller-supplied injective continuous map; injectivity is not checked.
    Map(MapModel),
    /// Block-diagonal combination acting on consecutive coordinate blocks.
    Product(Vec<Auxiliary>),
}

impl Auxiliary {
    /// Dimension of the space `A` reads from (the codomain of `f`).
    pub fn input_dim(&self) -> usize {
        match self {
            Auxiliary::Linear(l) => l.matrix.ncols(),
            Auxiliary::Map(m) => m.domain.dim(),
            Auxiliary::Product(parts) => parts.iter().map(Auxiliary::input_dim).sum(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Auxiliary::Linear(l) => l.matrix.nrows(),
            Auxiliary::Map(m) => m.codomain.dim(),
            Auxiliary::Product(parts) => parts.iter().map(Auxiliary::output_dim).sum(),
        }
    }

    pub fn apply(&self, v: &Point) -> Point {
        match self {
            Auxiliary::Linear(l) => l.apply(v),
            Auxiliary::Map(m) => m.apply(v),
            Auxiliary::Product(parts) => {
                let mut off = 0;
                concat(parts.iter().map(|p| {
                    let n = p.input_dim();
                    let block = Point::from_column_slice(&v.as_slice()[off..off + n]);
                    off += n;
                    p.apply(&block)
                }))
            }
        }
    }

    /// Smallest singular value of the linear blocks, `None` if any block is nonlinear.
    pub fn smallest_singular_value(&self) -> Option<f64> {
        match self {
            Auxiliary::Linear(l) => Some(l.smallest_singular_value()),
            Auxiliary::Map(_) => None,
            Auxiliary::Product(parts) => parts
                .iter()
                .map(Auxiliary::smallest_singular_value)
                .try_fold(f64::INFINITY, |acc, s| s.map(|s| acc.min(s))),
        }
    }

    pub fn operator_norm(&self) -> Option<f64> {
        match self {
            Auxiliary::Linear(l) => Some(l.operator_norm()),
            Auxiliary::Map(_) => None,
            Auxiliary::Product(parts) => parts
                .iter()
                .map(Auxiliary::operator_norm)
                .try_fold(0.0_f64, |acc, s| s.map(|s| acc.max(s))),
        }
    }

    pub fn is_injective(&self) -> bool {
        match self {
            Auxiliary::Linear(l) => l.is_injective(),
            Auxiliary::Map(_) => true,
            Auxiliary::Product(parts) => parts.iter().all(Auxiliary::is_injective),
        }
    }
}

impl From<LinearMap> for Auxiliary {
    fn from(l: LinearMap) -> Self {
        Auxiliary::Linear(l)
    }
}

/// `f̃_{a,y,A}(x) = x − A(f(x) − y)` on a body around `a`.
#[derive(Debug, Clone)]
pub struct TildeMap {
    pub f: MapModel,
    pub anchor: Point,
    pub target: Point,
    pub aux: Auxiliary,
    pub body: ConvexBody,
}

pub fn build_tilde(f: &MapModel, a: &Point, y: &Point, aux: &Auxiliary, body: &ConvexBody) -> Result<TildeMap> {
    let (n, m) = (f.domain.dim(), f.codomain.dim());
    for (expected, found) in [
        (n, a.len()),
        (m, y.len()),
        (m, aux.input_dim()),
        (n, aux.output_dim()),
        (n, body.dim()),
    ] {
        if expected != found {
            return Err(Error::DimensionMismatch { expected, found });
        }
    }
    if !aux.is_injective() {
        return Err(Error::DegenerateAuxiliary {
            sigma_min: aux.smallest_singular_value().unwrap_or(0.0),
        });
    }
    Ok(TildeMap {
        f: f.clone(),
        anchor: a.clone(),
        target: y.clone(),
        aux: aux.clone(),
        body: body.clone(),
    })
}

impl TildeMap {
    pub fn eval(&self, x: &Point) -> Point {
        x - self.aux.apply(&(self.f.apply(x) - &self.target))
    }

    /// Same map with a different target.
    pub fn retarget(&self, y: &Point) -> TildeMap {
        TildeMap {
            target: y.clone(),
            ..self.clone()
        }
    }
}

impl SelfMap for TildeMap {
    fn dim(&self) -> usize {
        self.f.domain.dim()
    }
    fn apply(&self, x: &Point) -> Point {
        self.eval(x)
    }
    fn norm(&self, v: &Point) -> f64 {
        self.f.domain.norm_of(v.as_slice())
    }
}

/// Auxiliary map of the pairing `(f¹, f²)` on `C¹ × C²`, built from the factors.
pub fn product_tilde(t1: &TildeMap, t2: &TildeMap) -> Result<TildeMap> {
    let f = pair(&t1.f, &t2.f);
    let a = concat([t1.anchor.clone(), t2.anchor.clone()]);
    let y = concat([t1.target.clone(), t2.target.clone()]);
    let aux = Auxiliary::Product(alloc::vec![t1.aux.clone(), t2.aux.clone()]);
    let body = product_body(t1.body.clone(), t2.body.clone());
    build_tilde(&f, &a, &y, &aux, &body)
}

fn random_pair(body: &ConvexBody, k: usize, rng: &mut StreamRng) -> (Point, Point) {
    match k % 3 {
        0 => (body.sample_interior(rng), body.sample_interior(rng)),
        1 => (body.sample_boundary(rng), body.sample_interior(rng)),
        _ => (body.sample_boundary(rng), body.sample_boundary(rng)),
    }
}

/// Sampled lower bound on the Lipschitz constant of `map` over `body`.
///
/// Random pairs alternate with refinements of the best pair so far; the
/// draw sequence for a smaller budget is a prefix of a larger one, so the
/// estimate is nondecreasing in `budget` for a fixed seed.
pub fn estimate_lipschitz<M: SelfMap + ?Sized>(map: &M, body: &ConvexBody, budget: usize, seed: u64) -> f64 {
    let mut rng = rng::stream(seed, 0x006c_6970);
    // Closer pairs lose the difference quotient to cancellation.
    let min_sep = 1e-5 * body.diameter().max(1e-300);
    let ratio = |x: &Point, z: &Point| -> Option<f64> {
        let d = map.norm(&(x - z));
        (d > min_sep).then(|| map.norm(&(map.apply(x) - map.apply(z))) / d)
    };
    let mut best = 0.0_f64;
    let mut best_pair: Option<(Point, Point)> = None;
    let scale = 0.1 * body.diameter();
    for k in 0..budget {
        let (x, z) = if k % 2 == 1 && best_pair.is_some() {
            let (bx, bz) = best_pair.clone().unwrap();
            let sigma = scale * libm::pow(0.5, ((k / 2) % 16) as f64);
            let gx = body.space().random_unit(&mut rng) * (sigma * rng::uniform(&mut rng, 0.0, 1.0));
            let gz = body.space().random_unit(&mut rng) * (sigma * rng::uniform(&mut rng, 0.0, 1.0));
            // Pull the pair together half of the time.
            let shrink = if rng::uniform(&mut rng, 0.0, 1.0) < 0.5 {
                0.5
            } else {
                1.0
            };
            let mid = (&bx + &bz) * 0.5;
            let x = body.project(&(&mid + (&bx - &mid) * shrink + gx));
            let z = body.project(&(&mid + (&bz - &mid) * shrink + gz));
            (x, z)
        } else {
            random_pair(body, k, &mut rng)
        };
        if let Some(r) = ratio(&x, &z) {
            if r > best {
                best = r;
                best_pair = Some((x, z));
            }
        }
    }
    best
}

/// Samples the body (center, axis extremes, then interior and boundary
/// points alternately) and measures how far `map` pushes them outside.
pub fn check_self_map<M: SelfMap + ?Sized>(map: &M, body: &ConvexBody, budget: usize, seed: u64) -> (bool, f64) {
    let mut rng = rng::stream(seed, 0x7365_6c66);
    let mut samples = alloc::vec![body.center()];
    samples.extend(body.axis_points(1.0));
    let mut worst = 0.0_f64;
    let mut visit = |x: &Point| worst = worst.max(body.overshoot(&map.apply(x)));
    for x in samples.iter().take(budget.max(1)) {
        visit(x);
    }
    for k in samples.len()..budget {
        let x = if k % 2 == 0 {
            body.sample_interior(&mut rng)
        } else {
            body.sample_boundary(&mut rng)
        };
        visit(&x);
    }
    (worst <= self_map_slack(body), worst)
}

fn self_map_slack(body: &ConvexBody) -> f64 {
    1e-12 * body.diameter().max(1.0)
}

/// Checks `‖map(x) − p‖ ≤ (1 + LIP_TOL)·‖x − p‖` on sampled `x` for every
/// given fixed point `p`. Returns the verdict and the worst ratio seen.
pub fn quasi_nonexpansive_check<M: SelfMap + ?Sized>(
    map: &M,
    body: &ConvexBody,
    fixed_points: &[Point],
    budget: usize,
    seed: u64,
) -> (bool, f64) {
    if fixed_points.is_empty() {
        return (false, f64::INFINITY);
    }
    let mut rng = rng::stream(seed, 0x0071_6e65);
    let mut worst = 0.0_f64;
    let min_sep = 1e-9 * body.diameter().max(1e-300);
    for k in 0..budget {
        let x = if k % 2 == 0 {
            body.sample_interior(&mut rng)
        } else {
            body.sample_boundary(&mut rng)
        };
        let tx = map.apply(&x);
        for p in fixed_points {
            let d = map.norm(&(&x - p));
            if d > min_sep {
                worst = worst.max(map.norm(&(&tx - p)) / d);
            }
        }
    }
    (worst <= 1.0 + LIP_TOL, worst)
}

#[derive(Debug, Clone, PartialEq)]
pub enum UncertifiedReason {
    DegenerateAuxiliary,
    /// Lipschitz estimate or self-map check failed and no fixed point was found
    /// while the grid oracle saw residuals below the floor.
    GridResidualBelowFloor {
        min_residual: f64,
    },
    /// No fixed point found and the dimension is too large for the grid oracle.
    NoGridOracle,
    NotQuasiNonexpansive {
        worst_ratio: f64,
    },
    WeakModeNotAllowed,
    NoCertifiedBody {
        rung: usize,
    },
    Failed(String),
}

impl fmt::Display for UncertifiedReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UncertifiedReason::DegenerateAuxiliary => write!(f, "degenerate auxiliary map"),
            UncertifiedReason::GridResidualBelowFloor { min_residual } => {
                write!(
                    f,
                    "no fixed point found but grid residual {min_residual:e} is below the floor"
                )
            }
            UncertifiedReason::NoGridOracle => write!(f, "no grid oracle"),
            UncertifiedReason::NotQuasiNonexpansive { worst_ratio } => {
                write!(f, "not quasi-nonexpansive (worst ratio {worst_ratio})")
            }
            UncertifiedReason::WeakModeNotAllowed => write!(f, "weak stage skipped"),
            UncertifiedReason::NoCertifiedBody { rung } => {
                write!(f, "no certified body at rung {rung}")
            }
            UncertifiedReason::Failed(msg) => write!(f, "{msg}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Classification {
    StrongA { lipschitz: f64 },
    NonexpansiveA { lipschitz: f64 },
    WeakAQuasi { worst_ratio: f64 },
    WeakANoFixedPoint { min_residual: f64 },
    Uncertified(UncertifiedReason),
}

impl Classification {
    pub fn label(&self) -> &'static str {
        match self {
            Classification::StrongA { .. } => "StrongA",
            Classification::NonexpansiveA { .. } => "NonexpansiveA",
            Classification::WeakAQuasi { .. } => "WeakA_Quasi",
            Classification::WeakANoFixedPoint { .. } => "WeakA_NoFixedPoint",
            Classification::Uncertified(_) => "Uncertified",
        }
    }

    pub fn is_certified(&self) -> bool {
        !matches!(self, Classification::Uncertified(_))
    }

    pub fn is_strong(&self) -> bool {
        matches!(self, Classification::StrongA { .. })
    }

    /// 0 = strong, 1 = nonexpansive, 2 = weak, 3 = uncertified.
    pub fn rank(&self) -> u8 {
        match self {
            Classification::StrongA { .. } => 0,
            Classification::NonexpansiveA { .. } => 1,
            Classification::WeakAQuasi { .. } | Classification::WeakANoFixedPoint { .. } => 2,
            Classification::Uncertified(_) => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyACertificate {
    pub classification: Classification,
    pub anchor: Point,
    pub body: ConvexBody,
    pub s_radius: f64,
    /// Center of the sampled target ball (normally `f(a)`).
    pub target_center: Point,
    pub y_samples: usize,
    pub pair_samples: usize,
    /// Largest sampled Lipschitz estimate over all targets.
    pub lipschitz_estimate: f64,
    pub self_map_worst_violation: f64,
    pub seed: u64,
}

/// Sampling budgets for one certification.
#[derive(Debug, Clone, PartialEq)]
pub struct CertBudgets {
    pub n_targets: usize,
    pub lipschitz_pairs: usize,
    pub self_map_samples: usize,
    pub fp_starts: usize,
    pub qne_samples: usize,
    /// Grid oracle step; `None` picks one from the body size and dimension.
    pub grid_step: Option<f64>,
    /// Center of the target ball; `None` means `f(a)`.
    pub target_center: Option<Point>,
    /// Run the weak-A stage when the strong and nonexpansive tests fail.
    pub weak_stage: bool,
}

impl Default for CertBudgets {
    fn default() -> Self {
        CertBudgets {
            n_targets: N_TARGETS,
            lipschitz_pairs: 256,
            self_map_samples: 128,
            fp_starts: 8,
            qne_samples: 128,
            grid_step: None,
            target_center: None,
            weak_stage: true,
        }
    }
}

impl CertBudgets {
    pub fn light() -> Self {
        CertBudgets {
            lipschitz_pairs: 48,
            self_map_samples: 32,
            qne_samples: 32,
            ..Self::default()
        }
    }
}

fn auto_grid_step(body: &ConvexBody) -> f64 {
    let (lo, hi) = body.bounding_box();
    let width = lo.iter().zip(&hi).map(|(l, h)| h - l).fold(0.0, f64::max);
    let per_axis = match body.dim() {
        1 => 2000.0,
        2 => 400.0,
        _ => 60.0,
    };
    (width / per_axis).max(1e-12)
}

/// `n` targets around `center`: the center itself, then alternately interior
/// points and points on the sphere of radius `s` (shrunk by 1e-9 since the
/// target ball is open).
pub fn sample_targets(space: &Space, center: &Point, s: f64, n: usize, seed: u64) -> Vec<Point> {
    let mut rng = rng::stream(seed, 0x0074_6774);
    let boundary = s * (1.0 - 1e-9);
    let d = space.dim() as f64;
    (0..n)
        .map(|i| {
            if i == 0 {
                center.clone()
            } else if i % 2 == 1 {
                center + space.random_unit(&mut rng) * boundary
            } else {
                let t = libm::pow(rng::uniform(&mut rng, 0.0, 1.0), 1.0 / d);
                center + space.random_unit(&mut rng) * (boundary * t)
            }
        })
        .collect()
}

/// Certify property A at `a` on `body` for targets within `s` of the target center.
pub fn certify(
    f: &MapModel,
    a: &Point,
    aux: &Auxiliary,
    body: &ConvexBody,
    s: f64,
    budgets: &CertBudgets,
    seed: u64,
) -> Result<PropertyACertificate> {
    let fa = f.eval(a)?;
    let center = budgets.target_center.clone().unwrap_or(fa);
    let targets = sample_targets(&f.codomain, &center, s, budgets.n_targets, seed);
    certify_targets(f, a, aux, body, s, &center, &targets, budgets, seed)
}

/// Certification against an explicit list of targets.
#[allow(clippy::too_many_arguments)]
pub fn certify_targets(
    f: &MapModel,
    a: &Point,
    aux: &Auxiliary,
    body: &ConvexBody,
    s: f64,
    center: &Point,
    targets: &[Point],
    budgets: &CertBudgets,
    seed: u64,
) -> Result<PropertyACertificate> {
    let mut cert = PropertyACertificate {
        classification: Classification::Uncertified(UncertifiedReason::DegenerateAuxiliary),
        anchor: a.clone(),
        body: body.clone(),
        s_radius: s,
        target_center: center.clone(),
        y_samples: targets.len(),
        pair_samples: budgets.lipschitz_pairs,
        lipschitz_estimate: 0.0,
        self_map_worst_violation: 0.0,
        seed,
    };
    let base = match build_tilde(f, a, center, aux, body) {
        Ok(t) => t,
        Err(Error::DegenerateAuxiliary { .. }) => return Ok(cert),
        Err(e) => return Err(e),
    };
    if !body.contains(a) {
        return Err(Error::InvalidArgument("anchor must lie in the body".into()));
    }

    let tildes: Vec<TildeMap> = targets.iter().map(|y| base.retarget(y)).collect();
    let mut all_self = true;
    for (i, t) in tildes.iter().enumerate() {
        let sub = derive_seed(seed, i as u64);
        let (ok, worst) = check_self_map(t, body, budgets.self_map_samples, sub);
        all_self &= ok;
        cert.self_map_worst_violation = cert.self_map_worst_violation.max(worst);
        let l = estimate_lipschitz(t, body, budgets.lipschitz_pairs, sub);
        cert.lipschitz_estimate = cert.lipschitz_estimate.max(l);
    }
    let l = cert.lipschitz_estimate;
    if all_self && l <= 1.0 - STRONG_MARGIN {
        cert.classification = Classification::StrongA { lipschitz: l };
        return Ok(cert);
    }
    if all_self && l <= 1.0 + LIP_TOL {
        cert.classification = Classification::NonexpansiveA { lipschitz: l };
        return Ok(cert);
    }
    cert.classification = if budgets.weak_stage {
        weak_classification(&tildes, body, budgets, seed)
    } else {
        Classification::Uncertified(UncertifiedReason::WeakModeNotAllowed)
    };
    Ok(cert)
}

fn weak_classification(tildes: &[TildeMap], body: &ConvexBody, budgets: &CertBudgets, seed: u64) -> Classification {
    let mut min_residual = f64::INFINITY;
    let mut worst_ratio = 0.0_f64;
    let mut any_quasi = false;
    for (i, t) in tildes.iter().enumerate() {
        let sub = derive_seed(seed, 0x1000 + i as u64);
        let set = probe_fixed_point_set(t, body, budgets.fp_starts, sub);
        if set.points.is_empty() {
            if body.dim() > 3 {
                return Classification::Uncertified(UncertifiedReason::NoGridOracle);
            }
            let step = budgets.grid_step.unwrap_or_else(|| auto_grid_step(body));
            match grid_min_residual(t, body, step) {
                Ok((r, _)) if r >= RESIDUAL_FLOOR => min_residual = min_residual.min(r),
                Ok((r, _)) => {
                    return Classification::Uncertified(UncertifiedReason::GridResidualBelowFloor { min_residual: r })
                }
                Err(e) => return Classification::Uncertified(UncertifiedReason::Failed(format!("{e}"))),
            }
        } else {
            let (ok, ratio) = quasi_nonexpansive_check(t, body, &set.points, budgets.qne_samples, sub);
            if !ok {
                return Classification::Uncertified(UncertifiedReason::NotQuasiNonexpansive { worst_ratio: ratio });
            }
            any_quasi = true;
            worst_ratio = worst_ratio.max(ratio);
        }
    }
    if any_quasi {
        Classification::WeakAQuasi { worst_ratio }
    } else {
        Classification::WeakANoFixedPoint { min_residual }
    }
}

/// One rung of a scale profile.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleRecord {
    pub r: f64,
    pub body: ConvexBody,
    pub certificate: PropertyACertificate,
}

/// Certificates on a ladder of scales with the uniformity constants
/// `dist(a,∂C) ≥ β·diam C`, `s ≥ α·diam C`, `η·r ≤ diam C ≤ γ·r`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleProfile {
    pub anchor: Point,
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub gamma: f64,
    pub r_max: f64,
    pub records: Vec<ScaleRecord>,
    pub failure: Option<UncertifiedReason>,
}

impl ScaleProfile {
    fn failed(anchor: &Point, r_max: f64, records: Vec<ScaleRecord>, reason: UncertifiedReason) -> Self {
        ScaleProfile {
            anchor: anchor.clone(),
            alpha: 0.0,
            beta: 0.0,
            eta: 0.0,
            gamma: 0.0,
            r_max,
            records,
            failure: Some(reason),
        }
    }

    pub fn is_certified(&self) -> bool {
        self.failure.is_none()
    }

    pub fn all_strong(&self) -> bool {
        self.is_certified() && self.records.iter().all(|r| r.certificate.classification.is_strong())
    }

    /// Every record satisfies the four inequalities with slack `1e-12`.
    pub fn check_invariants(&self) -> bool {
        const SLACK: f64 = 1e-12;
        self.is_certified()
            && self.records.iter().all(|rec| {
                let diam = rec.body.diameter();
                let dist = rec.body.queries(&self.anchor).map(|q| q.1).unwrap_or(0.0);
                dist >= self.beta * diam - SLACK
                    && rec.certificate.s_radius >= self.alpha * diam - SLACK
                    && self.eta * rec.r <= diam + SLACK
                    && diam <= self.gamma * rec.r + SLACK
            })
    }

    fn from_records(anchor: &Point, r_max: f64, records: Vec<ScaleRecord>) -> Self {
        let mut p = ScaleProfile {
            anchor: anchor.clone(),
            alpha: f64::INFINITY,
            beta: f64::INFINITY,
            eta: f64::INFINITY,
            gamma: 0.0,
            r_max,
            records: Vec::new(),
            failure: None,
        };
        for rec in &records {
            let diam = rec.body.diameter();
            let dist = rec.body.queries(anchor).map(|q| q.1).unwrap_or(0.0);
            p.alpha = p.alpha.min(rec.certificate.s_radius / diam);
            p.beta = p.beta.min(dist / diam);
            p.eta = p.eta.min(diam / rec.r);
            p.gamma = p.gamma.max(diam / rec.r);
        }
        p.records = records;
        p
    }
}

/// Ball radii and target radii tried at each rung: `ρ ∈ {r/2, r/4}`, `s ∈ {ρ/2, ρ/4}`.
pub fn rung_candidates(r: f64) -> [(f64, f64); 4] {
    let (r2, r4) = (r / 2.0, r / 4.0);
    [(r2, r2 / 2.0), (r2, r2 / 4.0), (r4, r4 / 2.0), (r4, r4 / 4.0)]
}

fn ball_exponent(space: &Space) -> f64 {
    match space {
        Space::Lp { p, .. } => *p,
        Space::Product(_) => 2.0,
    }
}

/// Certify at every rung of a decreasing radius ladder, keeping the first
/// certified ball at each rung.
pub fn certify_on_scales(
    f: &MapModel,
    a: &Point,
    aux_provider: &dyn Fn(&Point) -> Result<LinearMap>,
    ladder: &[f64],
    budgets: &CertBudgets,
    seed: u64,
) -> ScaleProfile {
    let r_max = ladder.iter().copied().fold(0.0, f64::max);
    if ladder.is_empty() {
        return ScaleProfile::failed(a, r_max, Vec::new(), UncertifiedReason::Failed("empty ladder".into()));
    }
    let aux = match aux_provider(a) {
        Ok(l) => Auxiliary::Linear(l),
        Err(Error::DegenerateDerivative { .. }) | Err(Error::DegenerateAuxiliary { .. }) => {
            return ScaleProfile::failed(a, r_max, Vec::new(), UncertifiedReason::DegenerateAuxiliary)
        }
        Err(e) => return ScaleProfile::failed(a, r_max, Vec::new(), UncertifiedReason::Failed(format!("{e}"))),
    };
    let p = ball_exponent(&f.domain);
    let mut records = Vec::with_capacity(ladder.len());
    for (i, &r) in ladder.iter().enumerate() {
        let mut chosen = None;
        for (j, (rho, s)) in rung_candidates(r).into_iter().enumerate() {
            let body = match ConvexBody::ball(a.clone(), rho, p) {
                Ok(b) => b,
                Err(e) => return ScaleProfile::failed(a, r_max, records, UncertifiedReason::Failed(format!("{e}"))),
            };
            let sub = derive_seed(seed, (i * 4 + j) as u64);
            match certify(f, a, &aux, &body, s, budgets, sub) {
                Ok(cert) if cert.classification.is_certified() => {
                    chosen = Some(ScaleRecord {
                        r,
                        body,
                        certificate: cert,
                    });
                    break;
                }
                Ok(_) => {}
                Err(e) => return ScaleProfile::failed(a, r_max, records, UncertifiedReason::Failed(format!("{e}"))),
            }
        }
        match chosen {
            Some(rec) => records.push(rec),
            None => return ScaleProfile::failed(a, r_max, records, UncertifiedReason::NoCertifiedBody { rung: i }),
        }
    }
    ScaleProfile::from_records(a, r_max, records)
}

/// Product profile of a pairing together with the Lipschitz bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedProfile {
    pub profile: ScaleProfile,
    /// Per rung, the maximum of the factor Lipschitz estimates (the constant
    /// of the product map under the 2-combination norm).
    pub lipschitz_max: Vec<f64>,
    /// Per rung, the minimum of the factor estimates.
    pub lipschitz_min: Vec<f64>,
    /// Largest gap between the two combination rules over all rungs.
    pub combination_discrepancy: f64,
}

/// Pair a profile of `f¹` at `a` with a C¹ profile of `f²` at `b`.
///
/// Bodies are `C_a × B_τ(b)` with `τ = diam(C_a)/2`, targets radius
/// `min(s_a, τ)`, and the constants follow the substitution
/// `β = min{β₁, ½}/√2`, `α = min{α₁, ½}/√2`, `η = min{η₁, 1}/√2`,
/// `γ = √2·max{γ₁, 1}`.
pub fn pair_certificates(p1: &ScaleProfile, p2: &ScaleProfile) -> Result<PairedProfile> {
    if !p1.is_certified() || !p2.is_certified() {
        return Err(Error::InvalidArgument("both profiles must be certified".into()));
    }
    let sqrt2 = core::f64::consts::SQRT_2;
    let b = &p2.anchor;
    let anchor = concat([p1.anchor.clone(), b.clone()]);
    let mut records = Vec::with_capacity(p1.records.len());
    let mut lmax = Vec::new();
    let mut lmin = Vec::new();
    for (i, rec) in p1.records.iter().enumerate() {
        let tau = rec.body.diameter() / 2.0;
        let p = match &p2.records.first().map(|r| &r.body) {
            Some(ConvexBody::Ball { p, .. }) => *p,
            _ => 2.0,
        };
        let body = product_body(rec.body.clone(), ConvexBody::ball(b.clone(), tau, p)?);
        let other = p2.records.get(i).or(p2.records.last());
        let l1 = rec.certificate.lipschitz_estimate;
        let l2 = other.map_or(0.0, |r| r.certificate.lipschitz_estimate);
        lmax.push(l1.max(l2));
        lmin.push(l1.min(l2));
        let classification = match other {
            Some(o) if o.certificate.classification.rank() > rec.certificate.classification.rank() => {
                o.certificate.classification.clone()
            }
            _ => match &rec.certificate.classification {
                Classification::StrongA { .. } => Classification::StrongA { lipschitz: l1.max(l2) },
                Classification::NonexpansiveA { .. } => Classification::NonexpansiveA { lipschitz: l1.max(l2) },
                c => c.clone(),
            },
        };
        let certificate = PropertyACertificate {
            classification,
            anchor: anchor.clone(),
            body: body.clone(),
            s_radius: rec.certificate.s_radius.min(tau),
            target_center: concat([
                rec.certificate.target_center.clone(),
                other.map_or_else(|| b.clone(), |o| o.certificate.target_center.clone()),
            ]),
            y_samples: rec.certificate.y_samples,
            pair_samples: rec.certificate.pair_samples,
            lipschitz_estimate: l1.max(l2),
            self_map_worst_violation: rec.certificate.self_map_worst_violation,
            seed: rec.certificate.seed,
        };
        records.push(ScaleRecord {
            r: rec.r,
            body,
            certificate,
        });
    }
    let combination_discrepancy = lmax.iter().zip(&lmin).map(|(a, b)| a - b).fold(0.0, f64::max);
    let profile = ScaleProfile {
        anchor,
        alpha: p1.alpha.min(0.5) / sqrt2,
        beta: p1.beta.min(0.5) / sqrt2,
        eta: p1.eta.min(1.0) / sqrt2,
        gamma: sqrt2 * p1.gamma.max(1.0),
        r_max: p1.r_max,
        records,
        failure: None,
    };
    Ok(PairedProfile {
        profile,
        lipschitz_max: lmax,
        lipschitz_min: lmin,
        combination_discrepancy,
    })
}

/// Constants-only substitution used by [`pair_certificates`].
pub fn paired_constants(alpha: f64, beta: f64, eta: f64, gamma: f64) -> (f64, f64, f64, f64) {
    let sqrt2 = core::f64::consts::SQRT_2;
    (
        alpha.min(0.5) / sqrt2,
        beta.min(0.5) / sqrt2,
        eta.min(1.0) / sqrt2,
        sqrt2 * gamma.max(1.0),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{inverse_jacobian_map, FnSelfMap, Smoothness};
    use crate::Matrix;

    fn v(xs: &[f64]) -> Point {
        Point::from_column_slice(xs)
    }

    fn cubic() -> MapModel {
        MapModel::new("cubic", Space::euclidean(1), Space::euclidean(1), |x| {
            x.map(|t| t * t * t + t)
        })
        .with_jacobian(|x| Matrix::from_element(1, 1, 3.0 * x[0] * x[0] + 1.0))
        .with_smoothness(Smoothness::C1)
    }

    fn jump() -> MapModel {
        MapModel::new("h_a", Space::euclidean(1), Space::euclidean(1), |x| {
            v(&[if x[0] <= 0.0 { x[0] - 0.5 } else { x[0] + 0.5 }])
        })
    }

    fn one() -> Auxiliary {
        Auxiliary::Linear(LinearMap::identity(1))
    }

    #[test]
    fn tilde_examples() {
        let id = MapModel::identity(Space::euclidean(2));
        let body = ConvexBody::ball(v(&[0.0, 0.0]), 1.0, 2.0).unwrap();
        let t = build_tilde(
            &id,
            &v(&[0.0, 0.0]),
            &v(&[0.3, -0.2]),
            &Auxiliary::Linear(LinearMap::identity(2)),
            &body,
        )
        .unwrap();
        assert!((t.eval(&v(&[0.5, 0.5])) - v(&[0.3, -0.2])).amax() < 1e-15);

        let m = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 3.0]);
        let lin = MapModel::linear("m", m.clone());
        let a = Auxiliary::Linear(LinearMap::new(m.clone().try_inverse().unwrap()));
        let y = v(&[1.0, 2.0]);
        let t = build_tilde(&lin, &v(&[0.0, 0.0]), &y, &a, &body).unwrap();
        let expected = m.try_inverse().unwrap() * &y;
        assert!((t.eval(&v(&[0.7, -0.1])) - expected).amax() < 1e-15);

        let body1 = ConvexBody::interval(-0.2, 0.2).unwrap();
        let t = build_tilde(&cubic(), &v(&[0.0]), &v(&[0.05]), &one(), &body1).unwrap();
        for x in [-0.2, 0.03, 0.11] {
            assert!((t.eval(&v(&[x]))[0] - (0.05 - x * x * x)).abs() < 1e-15);
        }
    }

    #[test]
    fn tilde_residual_identity() {
        let body1 = ConvexBody::interval(-0.2, 0.2).unwrap();
        let a = Auxiliary::Linear(LinearMap::new(Matrix::from_element(1, 1, 0.7)));
        let t = build_tilde(&cubic(), &v(&[0.0]), &v(&[0.05]), &a, &body1).unwrap();
        let x = v(&[0.13]);
        let recon = &x - t.eval(&x);
        let direct = a.apply(&(cubic().apply(&x) - v(&[0.05])));
        assert!((recon - direct).amax() < 1e-16);
    }

    #[test]
    fn tilde_rejects_bad_inputs() {
        let body = ConvexBody::interval(-1.0, 1.0).unwrap();
        let zero = Auxiliary::Linear(LinearMap::new(Matrix::zeros(1, 1)));
        assert!(matches!(
            build_tilde(&cubic(), &v(&[0.0]), &v(&[0.0]), &zero, &body),
            Err(Error::DegenerateAuxiliary { .. })
        ));
        assert!(matches!(
            build_tilde(&cubic(), &v(&[0.0, 1.0]), &v(&[0.0]), &one(), &body),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn lipschitz_examples() {
        let body = ConvexBody::interval(-0.2, 0.2).unwrap();
        let constant = FnSelfMap::new(Space::euclidean(1), |_| v(&[0.1]));
        assert_eq!(estimate_lipschitz(&constant, &body, 100, 1), 0.0);

        let t = build_tilde(&cubic(), &v(&[0.0]), &v(&[0.05]), &one(), &body).unwrap();
        let l = estimate_lipschitz(&t, &body, 4000, 1);
        assert!((0.115..=0.12 + 1e-9).contains(&l), "{l}");

        let half = FnSelfMap::new(Space::euclidean(1), |x| x * 0.5);
        assert!((estimate_lipschitz(&half, &body, 50, 2) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn lipschitz_nondecreasing_in_budget() {
        let body = ConvexBody::interval(-0.2, 0.2).unwrap();
        let t = build_tilde(&cubic(), &v(&[0.0]), &v(&[0.05]), &one(), &body).unwrap();
        let mut last = 0.0;
        for budget in [2, 10, 50, 200, 1000] {
            let l = estimate_lipschitz(&t, &body, budget, 42);
            assert!(l >= last);
            last = l;
        }
    }

    #[test]
    fn self_map_examples() {
        let body = ConvexBody::interval(-0.2, 0.2).unwrap();
        let inside = build_tilde(&cubic(), &v(&[0.0]), &v(&[0.1]), &one(), &body).unwrap();
        assert!(check_self_map(&inside, &body, 200, 1).0);
        let (ok, worst) = check_self_map(&inside.retarget(&v(&[0.25])), &body, 200, 1);
        assert!(!ok && worst >= 0.042);
        let constant = FnSelfMap::new(Space::euclidean(1), |_| v(&[0.1]));
        assert_eq!(check_self_map(&constant, &body, 50, 1), (true, 0.0));
    }

    #[test]
    fn quasi_nonexpansive_examples() {
        let body = ConvexBody::interval(-1.0, 1.0).unwrap();
        let contraction = FnSelfMap::new(Space::euclidean(1), |x| x * 0.5);
        assert!(quasi_nonexpansive_check(&contraction, &body, &[v(&[0.0])], 100, 1).0);
        let neg = FnSelfMap::new(Space::euclidean(1), |x| -x);
        let (ok, r) = quasi_nonexpansive_check(&neg, &body, &[v(&[0.0])], 100, 1);
        assert!(ok && (r - 1.0).abs() < 1e-15);
        let dbl = FnSelfMap::new(Space::euclidean(1), |x| x * 2.0);
        let (ok, r) = quasi_nonexpansive_check(&dbl, &body, &[v(&[0.0])], 100, 1);
        assert!(!ok && (r - 2.0).abs() < 1e-15);
    }

    #[test]
    fn certify_examples() {
        let id = MapModel::identity(Space::euclidean(2));
        let body = ConvexBody::ball(v(&[0.0, 0.0]), 0.4, 2.0).unwrap();
        let c = certify(
            &id,
            &v(&[0.0, 0.0]),
            &Auxiliary::Linear(LinearMap::identity(2)),
            &body,
            0.2,
            &CertBudgets::default(),
            1,
        )
        .unwrap();
        match c.classification {
            Classification::StrongA { lipschitz } => assert!(lipschitz < 1e-6),
            other => panic!("{other:?}"),
        }

        let body = ConvexBody::interval(-0.2, 0.2).unwrap();
        let c = certify(&cubic(), &v(&[0.0]), &one(), &body, 0.09, &CertBudgets::default(), 1).unwrap();
        match c.classification {
            Classification::StrongA { lipschitz } => {
                assert!(lipschitz <= 0.12 + 1e-9 && lipschitz > 0.1)
            }
            other => panic!("expected StrongA, got {other:?}"),
        }
        assert!(c.s_radius > 0.0);

        let body = ConvexBody::interval(-1.0, 1.0).unwrap();
        let budgets = CertBudgets {
            target_center: Some(v(&[0.0])),
            ..CertBudgets::default()
        };
        let c = certify(&jump(), &v(&[0.0]), &one(), &body, 0.49, &budgets, 1).unwrap();
        match c.classification {
            Classification::WeakANoFixedPoint { min_residual } => assert!(min_residual >= 0.01),
            other => panic!("expected WeakA_NoFixedPoint, got {other:?}"),
        }
    }

    #[test]
    fn certify_single_target_residual() {
        let body = ConvexBody::interval(-1.0, 1.0).unwrap();
        let budgets = CertBudgets {
            grid_step: Some(1e-3),
            ..CertBudgets::default()
        };
        let c = certify_targets(
            &jump(),
            &v(&[0.0]),
            &one(),
            &body,
            0.49,
            &v(&[0.0]),
            &[v(&[0.3])],
            &budgets,
            3,
        )
        .unwrap();
        match c.classification {
            Classification::WeakANoFixedPoint { min_residual } => {
                assert!((min_residual - 0.2).abs() <= 2e-3)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn degenerate_auxiliary_is_uncertified() {
        let body = ConvexBody::interval(-1.0, 1.0).unwrap();
        let zero = Auxiliary::Linear(LinearMap::new(Matrix::zeros(1, 1)));
        let c = certify(&cubic(), &v(&[0.0]), &zero, &body, 0.1, &CertBudgets::default(), 1).unwrap();
        assert_eq!(
            c.classification,
            Classification::Uncertified(UncertifiedReason::DegenerateAuxiliary)
        );
    }

    #[test]
    fn scales_for_c1_cubic() {
        let f = cubic();
        let provider = |a: &Point| inverse_jacobian_map(&f, a);
        let p = certify_on_scales(&f, &v(&[0.0]), &provider, &[0.4, 0.2, 0.1], &CertBudgets::default(), 5);
        assert!(p.all_strong());
        assert_eq!(p.beta, 0.5);
        assert!(p.alpha >= 0.25);
        assert!(p.check_invariants());
    }

    #[test]
    fn scales_for_degenerate_anchor() {
        let fold = MapModel::new("fold", Space::euclidean(2), Space::euclidean(2), |x| {
            v(&[x[0] * x[0], x[1]])
        })
        .with_jacobian(|x| Matrix::from_row_slice(2, 2, &[2.0 * x[0], 0.0, 0.0, 1.0]));
        let provider = |a: &Point| inverse_jacobian_map(&fold, a);
        let p = certify_on_scales(&fold, &v(&[0.0, 0.0]), &provider, &[0.4], &CertBudgets::default(), 5);
        assert!(!p.is_certified());
        assert_eq!(p.failure, Some(UncertifiedReason::DegenerateAuxiliary));
    }

    #[test]
    fn pairing_constants_substitution() {
        let (a, b, e, g) = paired_constants(0.25, 0.5, 0.5, 1.0);
        let s = core::f64::consts::SQRT_2;
        assert!((a - s / 8.0).abs() < 1e-15);
        assert!((b - s / 4.0).abs() < 1e-15);
        assert!((e - s / 4.0).abs() < 1e-15);
        assert!((g - s).abs() < 1e-15);
        let (a, b, e, g) = paired_constants(0.5, 0.5, 1.0, 1.0);
        assert_eq!((a, b, e, g), (0.5 / s, 0.5 / s, 1.0 / s, s));
    }

    #[test]
    fn product_tilde_is_componentwise() {
        let b1 = ConvexBody::interval(-0.2, 0.2).unwrap();
        let b2 = ConvexBody::interval(0.8, 1.2).unwrap();
        let t1 = build_tilde(&cubic(), &v(&[0.0]), &v(&[0.05]), &one(), &b1).unwrap();
        let f2 = jump();
        let t2 = build_tilde(&f2, &v(&[1.0]), &v(&[1.4]), &one(), &b2).unwrap();
        let t = product_tilde(&t1, &t2).unwrap();
        let mut rng = rng::stream(1, 0);
        let body = t.body.clone();
        for _ in 0..1000 {
            let x = body.sample_interior(&mut rng);
            let joint = t.eval(&x);
            let split = concat([t1.eval(&v(&[x[0]])), t2.eval(&v(&[x[1]]))]);
            assert_eq!(joint.as_slice(), split.as_slice());
        }
    }
}
