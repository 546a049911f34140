//! Fixed-point solvers and fixed-point-set probes.
//!
//! For an auxiliary map `f̃(x) = x − A(f(x) − y)` with injective `A`, the
//! fixed points of `f̃` in a body are exactly the preimages of `y` in it, so
//! everything downstream (local inversion, discreteness, injectivity) runs
//! through these solvers.

use alloc::vec::Vec;

use crate::maps::SelfMap;
use crate::rng;
use crate::spaces::{for_each_grid_point, grid_axes, ConvexBody};
use crate::tolerances::{CLUSTER_REL, FP_TOL, MAX_GRID_NODES};
use crate::{Error, Matrix, Point, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IterationMode {
    Banach,
    KrasnoselskiiMann,
    Grid,
}

/// One logged step: `k`, the residual `‖T(x_k) − x_k‖` and the size of the update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationStep {
    pub k: usize,
    pub residual: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointResult {
    pub point: Point,
    /// `‖map(point) − point‖`.
    pub residual: f64,
    pub iterations: usize,
    pub mode: IterationMode,
    /// `L^n/(1−L)·‖x₁ − x₀‖` at the final iterate when a contraction constant was supplied.
    pub apriori_bound: Option<f64>,
    pub converged: bool,
    pub log: Vec<IterationStep>,
    /// `x₀, x₁, …` when requested through [`IterationOptions::record_iterates`].
    pub iterates: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Known contraction constant `L < 1`, enabling a-posteriori stopping.
    pub lipschitz: Option<f64>,
    pub record_iterates: bool,
}

impl Default for IterationOptions {
    fn default() -> Self {
        IterationOptions {
            tol: 1e-13,
            max_iter: 10_000,
            lipschitz: None,
            record_iterates: false,
        }
    }
}

impl IterationOptions {
    pub fn with_tol(tol: f64) -> Self {
        IterationOptions { tol, ..Self::default() }
    }
}

fn escape_slack(body: &ConvexBody) -> f64 {
    1e-9 * body.diameter() + 1e-12
}

/// Picard iteration `x_{k+1} = map(x_k)`.
///
/// With a supplied `L < 1` the loop stops once
/// `‖x_{k+1} − x_k‖ ≤ tol·(1−L)/max(L, tol)` and returns `x_{k+1}`; otherwise
/// it stops when the residual `‖map(x_k) − x_k‖ ≤ tol` and returns `x_k`.
/// A 2-cycle (`‖x_{k+2} − x_k‖ ≤ tol` while steps stay above `tol`) is
/// reported as [`Error::TwoCycle`] so the caller can switch to averaging.
pub fn banach_iterate<M: SelfMap + ?Sized>(
    map: &M,
    x0: &Point,
    opts: &IterationOptions,
    body: Option<&ConvexBody>,
) -> Result<FixedPointResult> {
    let lip = opts.lipschitz.filter(|l| *l < 1.0 && *l >= 0.0);
    let mut x = x0.clone();
    let mut prev: Option<Point> = None;
    let mut first_step = None;
    let mut log = Vec::new();
    let mut iterates = Vec::new();
    if opts.record_iterates {
        iterates.push(x.clone());
    }
    for k in 0..opts.max_iter {
        let tx = map.apply(&x);
        let step = map.norm(&(&tx - &x));
        log.push(IterationStep {
            k,
            residual: step,
            step,
        });
        let d1 = *first_step.get_or_insert(step);
        if !step.is_finite() {
            return Err(Error::NonConvergent { residual: step });
        }

        if let Some(l) = lip {
            if step <= opts.tol * (1.0 - l) / l.max(opts.tol) {
                let residual = map.norm(&(map.apply(&tx) - &tx));
                if opts.record_iterates {
                    iterates.push(tx.clone());
                }
                let n = k + 1;
                return Ok(FixedPointResult {
                    point: tx,
                    residual,
                    iterations: n,
                    mode: IterationMode::Banach,
                    apriori_bound: Some(libm::pow(l, n as f64) / (1.0 - l) * d1),
                    converged: true,
                    log,
                    iterates,
                });
            }
        } else if step <= opts.tol {
            return Ok(FixedPointResult {
                point: x,
                residual: step,
                iterations: k,
                mode: IterationMode::Banach,
                apriori_bound: None,
                converged: true,
                log,
                iterates,
            });
        }

        if let Some(p) = &prev {
            if map.norm(&(&tx - p)) <= opts.tol && step > opts.tol {
                return Err(Error::TwoCycle { iteration: k });
            }
        }
        if let Some(b) = body {
            if b.overshoot(&tx) > escape_slack(b) {
                return Err(Error::EscapedBody { iteration: k + 1 });
            }
        }
        if opts.record_iterates {
            iterates.push(tx.clone());
        }
        prev = Some(core::mem::replace(&mut x, tx));
    }
    let residual = map.norm(&(map.apply(&x) - &x));
    Err(Error::MaxIterExceeded {
        iterations: opts.max_iter,
        residual,
    })
}

/// Krasnoselskii–Mann averaging `x_{k+1} = (1−λ) x_k + λ map(x_k)`, stopping
/// when `‖map(x_k) − x_k‖ ≤ tol`.
pub fn km_iterate<M: SelfMap + ?Sized>(
    map: &M,
    x0: &Point,
    relaxation: f64,
    opts: &IterationOptions,
) -> Result<FixedPointResult> {
    if !(relaxation > 0.0 && relaxation < 1.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "relaxation must lie in (0, 1), got {relaxation}"
        )));
    }
    let mut x = x0.clone();
    let mut log = Vec::new();
    let mut iterates = Vec::new();
    if opts.record_iterates {
        iterates.push(x.clone());
    }
    for k in 0..opts.max_iter {
        let tx = map.apply(&x);
        let residual = map.norm(&(&tx - &x));
        if !residual.is_finite() {
            return Err(Error::NonConvergent { residual });
        }
        log.push(IterationStep {
            k,
            residual,
            step: relaxation * residual,
        });
        if residual <= opts.tol {
            return Ok(FixedPointResult {
                point: x,
                residual,
                iterations: k,
                mode: IterationMode::KrasnoselskiiMann,
                apriori_bound: None,
                converged: true,
                log,
                iterates,
            });
        }
        x = &x * (1.0 - relaxation) + tx * relaxation;
        if opts.record_iterates {
            iterates.push(x.clone());
        }
    }
    let residual = map.norm(&(map.apply(&x) - &x));
    Err(Error::MaxIterExceeded {
        iterations: opts.max_iter,
        residual,
    })
}

/// Default Krasnoselskii–Mann relaxation.
pub const KM_RELAXATION: f64 = 0.5;

/// Banach iteration, switching to Krasnoselskii–Mann averaging when raw
/// iteration cycles or stalls.
pub fn solve<M: SelfMap + ?Sized>(
    map: &M,
    x0: &Point,
    opts: &IterationOptions,
    body: Option<&ConvexBody>,
) -> Result<FixedPointResult> {
    match banach_iterate(map, x0, opts, body) {
        Err(Error::TwoCycle { .. }) | Err(Error::MaxIterExceeded { .. }) => km_iterate(
            map,
            x0,
            KM_RELAXATION,
            &IterationOptions {
                lipschitz: None,
                ..opts.clone()
            },
        ),
        other => other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvexityVerdict {
    Empty,
    Singleton,
    ConvexSegment,
    ConvexSet,
    Nonconvex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointSet {
    pub points: Vec<Point>,
    pub residuals: Vec<f64>,
    pub verdict: ConvexityVerdict,
    /// Largest residual seen over the sampled convex combinations (0 when fewer than two points).
    pub worst_combination_residual: f64,
    pub combinations_checked: usize,
    pub starts: usize,
}

/// Convex combinations sampled per pair of fixed points.
pub const COMBINATIONS_PER_PAIR: usize = 11;

/// Stratified starts: center, `2·dim` axis points at 90% extent, then random fill.
pub fn stratified_starts(body: &ConvexBody, n_starts: usize, seed: u64) -> Vec<Point> {
    let mut starts = Vec::with_capacity(n_starts);
    starts.push(body.center());
    starts.extend(body.axis_points(0.9));
    starts.truncate(n_starts);
    let mut rng = rng::stream(seed, 0x7374_6172);
    while starts.len() < n_starts {
        starts.push(body.sample_interior(&mut rng));
    }
    starts
}

/// Merge points closer than `radius`, keeping the first representative.
pub fn cluster_points(points: &[(Point, f64)], radius: f64, norm: impl Fn(&Point) -> f64) -> Vec<(Point, f64)> {
    let mut out: Vec<(Point, f64)> = Vec::new();
    for (p, r) in points {
        if !out.iter().any(|(q, _)| norm(&(p - q)) <= radius) {
            out.push((p.clone(), *r));
        }
    }
    out
}

/// Multistart search for the fixed-point set of `map` in `body`, followed by
/// a convexity probe on sampled convex combinations of the points found.
pub fn probe_fixed_point_set<M: SelfMap + ?Sized>(
    map: &M,
    body: &ConvexBody,
    n_starts: usize,
    seed: u64,
) -> FixedPointSet {
    let opts = IterationOptions {
        tol: FP_TOL * 1e-3,
        max_iter: 2_000,
        ..IterationOptions::default()
    };
    let starts = stratified_starts(body, n_starts, seed);
    let mut found = Vec::new();
    for x0 in &starts {
        if let Ok(res) = solve(map, x0, &opts, None) {
            if res.residual <= FP_TOL && body.overshoot(&res.point) <= escape_slack(body) {
                found.push((res.point, res.residual));
            }
        }
    }
    let radius = (CLUSTER_REL * body.diameter()).max(1e-12);
    let clusters = cluster_points(&found, radius, |v| map.norm(v));
    let (points, residuals): (Vec<Point>, Vec<f64>) = clusters.into_iter().unzip();

    let mut worst = 0.0_f64;
    let mut checked = 0;
    let verdict = match points.len() {
        0 => ConvexityVerdict::Empty,
        1 => ConvexityVerdict::Singleton,
        _ => {
            let mut convex = true;
            for i in 0..points.len() {
                for j in i + 1..points.len() {
                    for k in 0..COMBINATIONS_PER_PAIR {
                        let t = k as f64 / (COMBINATIONS_PER_PAIR - 1) as f64;
                        let z = &points[i] * (1.0 - t) + &points[j] * t;
                        let r = map.norm(&(map.apply(&z) - &z));
                        worst = worst.max(r);
                        checked += 1;
                        convex &= r <= FP_TOL;
                    }
                }
            }
            if !convex {
                ConvexityVerdict::Nonconvex
            } else if collinear(&points) {
                ConvexityVerdict::ConvexSegment
            } else {
                ConvexityVerdict::ConvexSet
            }
        }
    };
    FixedPointSet {
        points,
        residuals,
        verdict,
        worst_combination_residual: worst,
        combinations_checked: checked,
        starts: starts.len(),
    }
}

fn collinear(points: &[Point]) -> bool {
    let d = points[0].len();
    let diffs = Matrix::from_fn(points.len() - 1, d, |i, j| points[i + 1][j] - points[0][j]);
    if d == 1 {
        return true;
    }
    let sv = diffs.svd(false, false).singular_values;
    let mut s: Vec<f64> = sv.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s.len() < 2 || s[1] <= 1e-9 * s[0]
}

/// Brute-force minimum of `‖map(x) − x‖` over the δ-grid (anchored at the
/// body center) intersected with `body`. Dimension at most 3.
pub fn grid_min_residual<M: SelfMap + ?Sized>(map: &M, body: &ConvexBody, step: f64) -> Result<(f64, Point)> {
    if body.dim() > 3 {
        return Err(Error::InvalidArgument(alloc::format!(
            "grid oracle needs dimension <= 3, got {}",
            body.dim()
        )));
    }
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "grid step must be positive, got {step}"
        )));
    }
    let (lo, hi) = body.bounding_box();
    let center = body.center();
    let axes = grid_axes(&lo, &hi, center.as_slice(), step);
    let nodes: f64 = axes.iter().map(|a| a.len() as f64).product();
    if nodes > MAX_GRID_NODES {
        return Err(Error::GridTooLarge { nodes });
    }
    let mut best = (f64::INFINITY, center.clone());
    for_each_grid_point(&axes, |x| {
        if body.contains(x) {
            let r = map.norm(&(map.apply(x) - x));
            if r < best.0 {
                best = (r, x.clone());
            }
        }
    });
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::FnSelfMap;
    use crate::spaces::{product_body, Space};

    fn v(xs: &[f64]) -> Point {
        Point::from_column_slice(xs)
    }

    fn line(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> FnSelfMap {
        FnSelfMap::new(Space::euclidean(1), move |x| v(&[f(x[0])]))
    }

    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (f(lo) < 0.0) == (f(mid) < 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn constant_map_converges_in_one_iteration() {
        let m = line(|_| 0.3);
        let r = banach_iterate(&m, &v(&[0.9]), &IterationOptions::default(), None).unwrap();
        assert_eq!(r.iterations, 1);
        assert_eq!(r.point, v(&[0.3]));
        assert!(r.converged);
    }

    #[test]
    fn cubic_tilde_matches_bisection() {
        let m = line(|x| 0.1 - x * x * x);
        let r = banach_iterate(&m, &v(&[0.0]), &IterationOptions::with_tol(1e-14), None).unwrap();
        let oracle = bisect(|x| x * x * x + x - 0.1, 0.0, 1.0);
        assert!((r.point[0] - oracle).abs() < 1e-12);
        assert!((r.point[0] - 0.09901).abs() < 1e-4);
    }

    #[test]
    fn apriori_bound_holds_for_halving() {
        let m = line(|x| 0.5 * x);
        let opts = IterationOptions {
            tol: 1e-12,
            lipschitz: Some(0.5),
            record_iterates: true,
            ..Default::default()
        };
        let r = banach_iterate(&m, &v(&[1.0]), &opts, None).unwrap();
        assert!(r.point[0].abs() <= 1e-12);
        let d1 = (&r.iterates[1] - &r.iterates[0]).norm();
        for (k, xk) in r.iterates.iter().enumerate() {
            let bound = libm::pow(0.5, k as f64) / 0.5 * d1;
            assert!(xk[0].abs() <= bound + 1e-300, "k={k}");
        }
        assert!(r.apriori_bound.unwrap() >= r.point[0].abs());
    }

    #[test]
    fn negation_cycles_under_picard_and_km_resolves_it() {
        let m = line(|x| -x);
        let err = banach_iterate(&m, &v(&[0.8]), &IterationOptions::default(), None).unwrap_err();
        assert!(matches!(err, Error::TwoCycle { .. }));
        let r = km_iterate(&m, &v(&[0.8]), 0.5, &IterationOptions::default()).unwrap();
        assert_eq!(r.point[0], 0.0);
        assert_eq!(r.iterations, 1);
        let r = solve(&m, &v(&[0.8]), &IterationOptions::default(), None).unwrap();
        assert_eq!(r.mode, IterationMode::KrasnoselskiiMann);
    }

    #[test]
    fn km_agrees_with_banach_on_contractions() {
        let m = line(|x| 0.3 * x.cos());
        let opts = IterationOptions::with_tol(1e-13);
        let a = banach_iterate(&m, &v(&[0.0]), &opts, None).unwrap();
        let b = km_iterate(&m, &v(&[0.0]), 0.5, &opts).unwrap();
        assert!((a.point[0] - b.point[0]).abs() <= 2.0 * 1e-13 * 10.0);
        assert!(km_iterate(&m, &v(&[0.0]), 1.5, &opts).is_err());
    }

    #[test]
    fn km_converges_for_quarter_rotation() {
        let rot = FnSelfMap::new(Space::euclidean(2), |x| v(&[-x[1], x[0]]));
        let opts = IterationOptions {
            record_iterates: true,
            ..IterationOptions::with_tol(1e-12)
        };
        let r = km_iterate(&rot, &v(&[1.0, 0.0]), 0.5, &opts).unwrap();
        assert!(r.point.norm() <= 1e-11);
        // Fejér monotonicity with respect to the fixed point 0.
        for w in r.iterates.windows(2) {
            assert!(w[1].norm() <= w[0].norm() + 1e-15);
        }
    }

    #[test]
    fn escape_is_reported() {
        let m = line(|x| 2.0 * x + 1.0);
        let body = ConvexBody::interval(-1.0, 1.0).unwrap();
        let err = banach_iterate(&m, &v(&[0.0]), &IterationOptions::default(), Some(&body)).unwrap_err();
        assert_eq!(err, Error::EscapedBody { iteration: 2 });
    }

    #[test]
    fn probe_contraction_is_singleton() {
        let m = line(|x| 0.5 * x + 0.1);
        let s = probe_fixed_point_set(&m, &ConvexBody::interval(-1.0, 1.0).unwrap(), 8, 3);
        assert_eq!(s.verdict, ConvexityVerdict::Singleton);
        assert!((s.points[0][0] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn probe_projection_finds_axis_segment() {
        let proj = FnSelfMap::new(Space::euclidean(2), |x| v(&[x[0], 0.0]));
        let i = ConvexBody::interval(-1.0, 1.0).unwrap();
        let square = product_body(i.clone(), i);
        let s = probe_fixed_point_set(&proj, &square, 16, 11);
        assert!(s.points.len() >= 5);
        assert_eq!(s.verdict, ConvexityVerdict::ConvexSegment);
        assert!(s.points.iter().all(|p| p[1] == 0.0));
        assert_eq!(s.worst_combination_residual, 0.0);
    }

    #[test]
    fn probe_jump_tilde_is_empty() {
        let m = line(|x| if x <= 0.0 { 0.8 } else { -0.2 });
        let s = probe_fixed_point_set(&m, &ConvexBody::interval(-1.0, 1.0).unwrap(), 8, 1);
        assert_eq!(s.verdict, ConvexityVerdict::Empty);
    }

    #[test]
    fn grid_oracle_examples() {
        let body = ConvexBody::interval(-1.0, 1.0).unwrap();
        let jump = line(|x| if x <= 0.0 { 0.8 } else { -0.2 });
        let (r, at) = grid_min_residual(&jump, &body, 1e-3).unwrap();
        assert!((r - 0.2).abs() <= 2e-3);
        assert!(at[0] > 0.0);

        let constant = line(|_| 0.37);
        let (r, at) = grid_min_residual(&constant, &body, 1e-3).unwrap();
        assert!(r <= 1e-3 && (at[0] - 0.37).abs() <= 1e-3);

        let cubic = line(|x| 0.1 - x * x * x);
        let (r, at) = grid_min_residual(&cubic, &body, 1e-3).unwrap();
        assert!(r <= 2e-3 && (at[0] - 0.09901).abs() <= 2e-3);

        let big = ConvexBody::ball(Point::zeros(3), 10.0, 2.0).unwrap();
        let id3 = FnSelfMap::new(Space::euclidean(3), |x| x.clone());
        assert!(matches!(
            grid_min_residual(&id3, &big, 1e-3),
            Err(Error::GridTooLarge { .. })
        ));
        let b4 = ConvexBody::ball(Point::zeros(4), 1.0, 2.0).unwrap();
        let id4 = FnSelfMap::new(Space::euclidean(4), |x| x.clone());
        assert!(grid_min_residual(&id4, &b4, 0.5).is_err());
    }
}
