//! Local inverse charts and global probes built on them.
//!
//! A chart stores a certified body `C_a` around an anchor together with the
//! auxiliary map `A` and a target radius `s`; any `y` within `s` of `f(a)` is
//! inverted by iterating `x ↦ x − A(f(x) − y)` on `C_a`. The probes in the
//! second half of the module (discreteness, sheet counting, Hadamard–Lévy,
//! dense-set certification, segment nondegeneracy) report sampled evidence
//! about global behavior; none of them is a proof.

use alloc::format;
use alloc::vec::Vec;

use crate::cert::{
    build_tilde, certify, certify_on_scales, Auxiliary, CertBudgets, Classification, PropertyACertificate, ScaleProfile,
};
use crate::fixedpoint::{banach_iterate, cluster_points, km_iterate, IterationOptions, KM_RELAXATION};
use crate::maps::{directional_derivative, inverse_jacobian_map, jacobian, JacobianMethod, LinearMap, MapModel, Side};
use crate::rng::{self, derive_seed};
use crate::spaces::{for_each_grid_point, grid_axes, ConvexBody, Region, Space};
use crate::tolerances::{CLUSTER_REL, DD_FLOOR, HL_FLOOR, INV_TOL, UNIFORM_RATIO};
use crate::{Error, Matrix, Point, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChartMode {
    Strong,
    NonexpansiveFpp,
    WeakQuasi,
}

impl ChartMode {
    pub fn label(self) -> &'static str {
        match self {
            ChartMode::Strong => "strong",
            ChartMode::NonexpansiveFpp => "nonexpansive_fpp",
            ChartMode::WeakQuasi => "weak_quasi",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChartOptions {
    /// Body radii to try, largest first.
    pub ladder: Vec<f64>,
    /// Target radii to try at each body radius, as fractions of it.
    pub s_fractions: Vec<f64>,
    /// Accept nonexpansive (and, in strictly convex spaces, quasi-nonexpansive) certificates.
    pub allow_fpp: bool,
    /// Auxiliary map; defaults to the inverse Jacobian at the anchor.
    pub aux: Option<LinearMap>,
    pub budgets: CertBudgets,
    pub seed: u64,
}

impl Default for ChartOptions {
    fn default() -> Self {
        ChartOptions {
            ladder: (0..12).map(|k| 0.2 * libm::pow(0.5, k as f64)).collect(),
            s_fractions: alloc::vec![0.5, 0.25],
            allow_fpp: false,
            aux: None,
            budgets: CertBudgets::default(),
            seed: 0,
        }
    }
}

/// A certified local inverse of `f` around `anchor`, valid on `B_s(image)`.
#[derive(Debug, Clone)]
pub struct LocalInverseChart {
    pub f: MapModel,
    pub anchor: Point,
    pub image: Point,
    pub body: ConvexBody,
    pub aux: LinearMap,
    pub s: f64,
    pub certificate: PropertyACertificate,
    pub mode: ChartMode,
}

fn ball_exponent(space: &Space) -> f64 {
    match space {
        Space::Lp { p, .. } => *p,
        Space::Product(_) => 2.0,
    }
}

fn chart_mode(c: &Classification, opts: &ChartOptions, space: &Space) -> Option<ChartMode> {
    match c {
        Classification::StrongA { .. } => Some(ChartMode::Strong),
        Classification::NonexpansiveA { .. } if opts.allow_fpp => Some(ChartMode::NonexpansiveFpp),
        Classification::WeakAQuasi { .. } if opts.allow_fpp && space.strictly_convex() => Some(ChartMode::WeakQuasi),
        _ => None,
    }
}

/// Descend the radius ladder until a certificate of an allowed mode is found.
pub fn build_chart(f: &MapModel, a: &Point, opts: &ChartOptions) -> Result<LocalInverseChart> {
    let aux = match &opts.aux {
        Some(l) => l.clone(),
        None => inverse_jacobian_map(f, a)?,
    };
    let image = f.eval(a)?;
    let p = ball_exponent(&f.domain);
    let wrapped = Auxiliary::Linear(aux.clone());
    let budgets = CertBudgets {
        weak_stage: opts.allow_fpp && f.domain.strictly_convex(),
        ..opts.budgets.clone()
    };
    let mut attempt = 0u64;
    for &rho in &opts.ladder {
        let body = ConvexBody::ball(a.clone(), rho, p)?;
        for &frac in &opts.s_fractions {
            let s = rho * frac;
            let cert = certify(f, a, &wrapped, &body, s, &budgets, derive_seed(opts.seed, attempt))?;
            attempt += 1;
            if let Some(mode) = chart_mode(&cert.classification, opts, &f.domain) {
                return Ok(LocalInverseChart {
                    f: f.clone(),
                    anchor: a.clone(),
                    image,
                    body,
                    aux,
                    s,
                    certificate: cert,
                    mode,
                });
            }
        }
    }
    Err(Error::CertificationFailed(format!(
        "radius ladder exhausted for '{}'",
        f.name
    )))
}

impl LocalInverseChart {
    /// Residual tolerance `INV_TOL·‖A‖` for `‖f(x) − y‖`.
    pub fn inv_tol(&self) -> f64 {
        INV_TOL * self.aux.operator_norm()
    }

    pub fn contains_target(&self, y: &Point) -> bool {
        y.len() == self.image.len() && self.f.codomain.distance(y, &self.image) < self.s
    }
}

fn iteration_tol(chart: &LocalInverseChart) -> f64 {
    let scale = chart.anchor.amax() + chart.body.diameter();
    1e-13 * scale.max(1.0)
}

/// Preimage of `y` inside the chart body.
pub fn invert(chart: &LocalInverseChart, y: &Point) -> Result<Point> {
    if y.len() != chart.image.len() {
        return Err(Error::DimensionMismatch {
            expected: chart.image.len(),
            found: y.len(),
        });
    }
    let distance = chart.f.codomain.distance(y, &chart.image);
    if !(distance < chart.s) {
        return Err(Error::OutOfChart {
            distance,
            reach: chart.s,
        });
    }
    let tilde = build_tilde(
        &chart.f,
        &chart.anchor,
        y,
        &Auxiliary::Linear(chart.aux.clone()),
        &chart.body,
    )?;
    let tol = iteration_tol(chart);
    let result = match chart.mode {
        ChartMode::Strong => {
            let opts = IterationOptions {
                tol,
                max_iter: 20_000,
                ..Default::default()
            };
            banach_iterate(&tilde, &chart.anchor, &opts, Some(&chart.body))
        }
        _ => {
            let opts = IterationOptions {
                tol,
                max_iter: 200_000,
                ..Default::default()
            };
            km_iterate(&tilde, &chart.anchor, KM_RELAXATION, &opts)
        }
    };
    let x = match result {
        Ok(r) => r.point,
        Err(Error::MaxIterExceeded { residual, .. }) | Err(Error::NonConvergent { residual }) => {
            return Err(Error::NonConvergent { residual })
        }
        Err(Error::EscapedBody { .. }) | Err(Error::TwoCycle { .. }) => {
            return Err(Error::NonConvergent { residual: f64::NAN })
        }
        Err(e) => return Err(e),
    };
    let residual = chart.f.codomain.distance(&chart.f.apply(&x), y);
    if residual > chart.inv_tol() || !chart.body.contains(&x) {
        return Err(Error::NonConvergent { residual });
    }
    Ok(x)
}

/// `(D_x f)⁻¹` at the preimage `x` of `y`.
pub fn inverse_derivative(chart: &LocalInverseChart, y: &Point) -> Result<Matrix> {
    let x = invert(chart, y)?;
    let j = jacobian(&chart.f, &x, JacobianMethod::Auto)?;
    if !j.is_invertible() {
        return Err(Error::DegenerateDerivative {
            sigma_min: j.smallest_singular_value,
            threshold: j.sigma_min_threshold(),
        });
    }
    let threshold = j.sigma_min_threshold();
    j.matrix.try_inverse().ok_or(Error::DegenerateDerivative {
        sigma_min: 0.0,
        threshold,
    })
}

/// Central differences of `y ↦ invert(chart, y)` at `y` (default step `10⁻⁴·max(1, ‖y‖∞)`).
pub fn finite_difference_inverse_derivative(chart: &LocalInverseChart, y: &Point, step: Option<f64>) -> Result<Matrix> {
    let m = y.len();
    let n = chart.anchor.len();
    let h = step.unwrap_or(1e-4 * y.amax().max(1.0));
    let mut out = Matrix::zeros(n, m);
    for j in 0..m {
        let mut e = Point::zeros(m);
        e[j] = h;
        let plus = invert(chart, &(y + &e))?;
        let minus = invert(chart, &(y - &e))?;
        out.set_column(j, &((plus - minus) / (2.0 * h)));
    }
    Ok(out)
}

/// Damped Newton refinement of `x0` towards a solution of `f(x) = y`.
/// Returns the final point and residual.
pub fn newton_polish(f: &MapModel, y: &Point, x0: &Point, max_iter: usize) -> Option<(Point, f64)> {
    let res = |x: &Point| f.codomain.distance(&f.apply(x), y);
    let target = 1e-14 * y.amax().max(1.0);
    let mut x = x0.clone();
    let mut r = res(&x);
    for _ in 0..max_iter {
        if !r.is_finite() {
            return None;
        }
        if r <= target {
            break;
        }
        let j = jacobian(f, &x, JacobianMethod::Auto).ok()?;
        let dx = j.matrix.lu().solve(&(f.apply(&x) - y))?;
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-4 {
            let xn = &x - &dx * t;
            let rn = res(&xn);
            if rn < r {
                x = xn;
                r = rn;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    Some((x, r))
}

fn grid_step_for(hull: &ConvexBody) -> f64 {
    let per_axis = match hull.dim() {
        1 => 256.0,
        2 => 64.0,
        _ => 16.0,
    };
    hull.diameter() / per_axis
}

/// Local minima of `‖f(x) − y‖` over grid nodes inside `region`, best first.
/// Ties are broken by node order so plateaus yield few seeds.
fn grid_seeds(f: &MapModel, y: &Point, region: &Region, step: f64, limit: usize) -> Option<Vec<Point>> {
    let hull = region.hull();
    let (lo, hi) = hull.bounding_box();
    let axes = grid_axes(&lo, &hi, hull.center().as_slice(), step);
    let total: f64 = axes.iter().map(|a| a.len() as f64).product();
    if axes.len() > 3 || total > 4e6 {
        return None;
    }
    let mut nodes = Vec::with_capacity(total as usize);
    let mut vals = Vec::with_capacity(total as usize);
    for_each_grid_point(&axes, |x| {
        vals.push(if region.contains(x) {
            f.codomain.distance(&f.apply(x), y)
        } else {
            f64::INFINITY
        });
        nodes.push(x.clone());
    });
    let d = axes.len();
    let lens: Vec<usize> = axes.iter().map(Vec::len).collect();
    // for_each_grid_point advances the first axis fastest.
    let mut strides = alloc::vec![1usize; d];
    for i in 1..d {
        strides[i] = strides[i - 1] * lens[i - 1];
    }
    let coords = |mut idx: usize| -> Vec<usize> {
        (0..d)
            .map(|i| {
                let c = idx % lens[i];
                idx /= lens[i];
                c
            })
            .collect()
    };
    let mut minima: Vec<(f64, usize)> = Vec::new();
    for (idx, &v) in vals.iter().enumerate() {
        if !v.is_finite() {
            continue;
        }
        let c = coords(idx);
        let mut is_min = true;
        let n_offsets = 3usize.pow(d as u32);
        'nbr: for o in 0..n_offsets {
            let mut k = o;
            let mut nidx = 0usize;
            let mut centre = true;
            for i in 0..d {
                let off = (k % 3) as i64 - 1;
                k /= 3;
                if off != 0 {
                    centre = false;
                }
                let ci = c[i] as i64 + off;
                if ci < 0 || ci >= lens[i] as i64 {
                    continue 'nbr;
                }
                nidx += ci as usize * strides[i];
            }
            if centre {
                continue;
            }
            let w = vals[nidx];
            if w < v || (w == v && nidx < idx) {
                is_min = false;
                break;
            }
        }
        if is_min {
            minima.push((v, idx));
        }
    }
    minima.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Some(minima.into_iter().take(limit).map(|(_, i)| nodes[i].clone()).collect())
}

fn random_region_points(region: &Region, n: usize, seed: u64) -> Vec<Point> {
    let hull = region.hull();
    let mut rng = rng::stream(seed, 0x7374_6172);
    let mut out = Vec::with_capacity(n);
    let mut tries = 0;
    while out.len() < n && tries < 50 * n.max(1) {
        tries += 1;
        let x = hull.sample_interior(&mut rng);
        if region.contains(&x) {
            out.push(x);
        }
    }
    out
}

fn polish_and_cluster(f: &MapModel, y: &Point, region: &Region, seeds: &[Point]) -> Vec<Point> {
    let mut found = Vec::new();
    for s in seeds {
        if let Some((x, r)) = newton_polish(f, y, s, 60) {
            if r <= INV_TOL && region.contains(&x) {
                found.push((x, r));
            }
        }
    }
    let radius = CLUSTER_REL * region.hull().diameter();
    let mut clusters: Vec<Point> = cluster_points(&found, radius, |v| f.domain.norm_of(v.as_slice()))
        .into_iter()
        .map(|(p, _)| p)
        .collect();
    clusters.sort_by(|a, b| {
        a.as_slice()
            .partial_cmp(b.as_slice())
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    clusters
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscretenessReport {
    pub clusters: Vec<Point>,
    /// Smallest distance between distinct clusters (`∞` with fewer than two).
    pub min_separation: f64,
}

fn min_pairwise(space: &Space, pts: &[Point]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            best = best.min(space.distance(&pts[i], &pts[j]));
        }
    }
    best
}

/// Approximate preimages of `y` in `region` from grid local minima (dimension
/// ≤ 3) or stratified multistart, refined by Newton steps and clustered.
pub fn discreteness_probe(f: &MapModel, y: &Point, region: &Region, grid_step: f64, seed: u64) -> DiscretenessReport {
    let seeds = match grid_seeds(f, y, region, grid_step, 4096) {
        Some(s) => s,
        None => random_region_points(region, 64 * region.dim(), seed),
    };
    let clusters = polish_and_cluster(f, y, region, &seeds);
    let min_separation = min_pairwise(&f.domain, &clusters);
    DiscretenessReport {
        clusters,
        min_separation,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SheetCount {
    pub y: Point,
    pub count: usize,
    pub preimages: Vec<Point>,
}

/// Preimage counts per sampled target. Counts are lower bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct SheetCounts {
    pub entries: Vec<SheetCount>,
    /// Every sample has the same count.
    pub constant: bool,
}

/// Count preimage clusters of each `y` in `region` from `starts` random
/// starts plus grid seeding in dimension ≤ 3.
pub fn preimage_count(f: &MapModel, region: &Region, ys: &[Point], starts: usize, seed: u64) -> SheetCounts {
    let hull = region.hull();
    let step = grid_step_for(&hull);
    let entries: Vec<SheetCount> = ys
        .iter()
        .enumerate()
        .map(|(i, y)| {
            let mut seeds = grid_seeds(f, y, region, step, 256).unwrap_or_default();
            seeds.extend(random_region_points(region, starts, derive_seed(seed, i as u64)));
            let preimages = polish_and_cluster(f, y, region, &seeds);
            SheetCount {
                y: y.clone(),
                count: preimages.len(),
                preimages,
            }
        })
        .collect();
    let constant = entries.windows(2).all(|w| w[0].count == w[1].count);
    SheetCounts { entries, constant }
}

/// Derivative magnitude used in the Hadamard–Lévy integrand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeMeasure {
    /// `‖D_x f‖`, the operator norm.
    OperatorNorm,
    /// `σ_min(D_x f) = 1/‖(D_x f)⁻¹‖`.
    SmallestSingular,
}

impl DerivativeMeasure {
    pub fn label(self) -> &'static str {
        match self {
            DerivativeMeasure::OperatorNorm => "operator_norm",
            DerivativeMeasure::SmallestSingular => "smallest_singular_value",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HlVerdict {
    DivergenceConsistent,
    NotEstablished,
}

impl HlVerdict {
    pub fn label(self) -> &'static str {
        match self {
            HlVerdict::DivergenceConsistent => "divergence-consistent",
            HlVerdict::NotEstablished => "not-established",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HadamardLevyReport {
    pub s_max: f64,
    pub ds: f64,
    pub measure: DerivativeMeasure,
    pub integral_lower_bound: f64,
    /// `(s_k, m̂(s_k))` at the right endpoints `s_k = k·Δs`; `m̂` is `None` when no sample has `‖f(x)‖ ≤ s_k`.
    pub profile: Vec<(f64, Option<f64>)>,
    pub verdict: HlVerdict,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HadamardLevyOptions {
    pub s_max: f64,
    pub ds: f64,
    pub samples: usize,
    pub measure: DerivativeMeasure,
}

impl Default for HadamardLevyOptions {
    fn default() -> Self {
        HadamardLevyOptions {
            s_max: 10.0,
            ds: 0.01,
            samples: 4000,
            measure: DerivativeMeasure::OperatorNorm,
        }
    }
}

/// Right-endpoint Riemann sum of `m̂(s) = min { |D_x f| : x sampled, ‖f(x)‖ ≤ s }`
/// over `[0, s_max]`, with `x` drawn from `domain`.
pub fn hadamard_levy(
    f: &MapModel,
    domain: &ConvexBody,
    opts: &HadamardLevyOptions,
    seed: u64,
) -> Result<HadamardLevyReport> {
    if !(opts.s_max > 0.0 && opts.ds > 0.0) {
        return Err(Error::InvalidArgument("s_max and ds must be positive".into()));
    }
    let mut rng = rng::stream(seed, 0x686c);
    let mut xs = alloc::vec![domain.center()];
    for k in 1..=8 {
        xs.extend(domain.axis_points(k as f64 / 8.0));
    }
    while xs.len() < opts.samples.max(xs.len()) {
        xs.push(domain.sample_interior(&mut rng));
    }
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(xs.len());
    for x in &xs {
        let j = jacobian(f, x, JacobianMethod::Auto)?;
        let m = match opts.measure {
            DerivativeMeasure::OperatorNorm => j.operator_norm,
            DerivativeMeasure::SmallestSingular => j.smallest_singular_value,
        };
        pairs.push((f.codomain.norm_of(f.apply(x).as_slice()), m));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut running = Vec::with_capacity(pairs.len());
    let mut cur = f64::INFINITY;
    for &(_, m) in &pairs {
        cur = cur.min(m);
        running.push(cur);
    }
    let k_max = libm::round(opts.s_max / opts.ds).max(1.0) as usize;
    let ds = opts.s_max / k_max as f64;
    let mut profile = Vec::with_capacity(k_max);
    let mut sum = 0.0;
    let mut floor_ok = true;
    for k in 1..=k_max {
        let s = k as f64 * ds;
        let count = pairs.partition_point(|p| p.0 <= s);
        let m = (count > 0).then(|| running[count - 1]);
        match m {
            Some(v) => {
                sum += v * ds;
                floor_ok &= v >= HL_FLOOR;
            }
            None => floor_ok = false,
        }
        profile.push((s, m));
    }
    Ok(HadamardLevyReport {
        s_max: opts.s_max,
        ds,
        measure: opts.measure,
        integral_lower_bound: sum,
        profile,
        verdict: if floor_ok {
            HlVerdict::DivergenceConsistent
        } else {
            HlVerdict::NotEstablished
        },
        samples: xs.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseScaleReport {
    pub profiles: Vec<ScaleProfile>,
    pub passed: bool,
    /// Uniform constants: minima of `α, β, η` and maximum of `γ` over the profiles.
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub gamma: f64,
    /// `½·α·η·r` with `r` the largest ladder radius.
    pub image_ball_radius: f64,
    /// Indices of sample points whose profile failed.
    pub failures: Vec<usize>,
}

/// Certify on all scales at each sample point and test that the constants
/// are uniform: each profile's `α, β, η` is at least `UNIFORM_RATIO` times
/// the largest, and `γ` at most `1/UNIFORM_RATIO` times the smallest.
pub fn dense_scale_check(
    f: &MapModel,
    points: &[Point],
    ladder: &[f64],
    budgets: &CertBudgets,
    seed: u64,
) -> DenseScaleReport {
    let provider = |a: &Point| inverse_jacobian_map(f, a);
    let profiles: Vec<ScaleProfile> = points
        .iter()
        .enumerate()
        .map(|(i, a)| certify_on_scales(f, a, &provider, ladder, budgets, derive_seed(seed, i as u64)))
        .collect();
    let failures: Vec<usize> = profiles
        .iter()
        .enumerate()
        .filter(|(_, p)| !p.is_certified())
        .map(|(i, _)| i)
        .collect();
    let ok: Vec<&ScaleProfile> = profiles.iter().filter(|p| p.is_certified()).collect();
    let fold = |g: fn(&ScaleProfile) -> f64, init: f64, op: fn(f64, f64) -> f64| ok.iter().map(|p| g(p)).fold(init, op);
    let (alpha, beta, eta) = (
        fold(|p| p.alpha, f64::INFINITY, f64::min),
        fold(|p| p.beta, f64::INFINITY, f64::min),
        fold(|p| p.eta, f64::INFINITY, f64::min),
    );
    let gamma = fold(|p| p.gamma, 0.0, f64::max);
    let uniform = !ok.is_empty()
        && alpha >= UNIFORM_RATIO * fold(|p| p.alpha, 0.0, f64::max)
        && beta >= UNIFORM_RATIO * fold(|p| p.beta, 0.0, f64::max)
        && eta >= UNIFORM_RATIO * fold(|p| p.eta, 0.0, f64::max)
        && UNIFORM_RATIO * gamma <= fold(|p| p.gamma, f64::INFINITY, f64::min);
    let passed = failures.is_empty() && uniform;
    let r = ladder.iter().copied().fold(0.0, f64::max);
    let (alpha, beta, eta, gamma) = if ok.is_empty() {
        (0.0, 0.0, 0.0, 0.0)
    } else {
        (alpha, beta, eta, gamma)
    };
    DenseScaleReport {
        profiles,
        passed,
        alpha,
        beta,
        eta,
        gamma,
        image_ball_radius: 0.5 * alpha * eta * r,
        failures,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentVerdict {
    /// Every sample has a nonvanishing directional derivative.
    Nondegenerate,
    /// Vanishing samples occur only in isolation.
    DenselyNondegenerate,
    /// Some run of consecutive samples all vanish.
    Collapsed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentReport {
    pub magnitudes: Vec<f64>,
    pub fraction_nondegenerate: f64,
    /// Index ranges `[start, end]` of runs of ≥ 2 vanishing samples.
    pub collapsed_runs: Vec<(usize, usize)>,
    pub verdict: SegmentVerdict,
}

/// One-sided directional derivatives along `p0 → p1` at `n_grid` equispaced
/// points (the last point uses the side pointing back into the segment).
pub fn segment_nondegeneracy_probe(f: &MapModel, p0: &Point, p1: &Point, n_grid: usize) -> Result<SegmentReport> {
    if n_grid < 2 {
        return Err(Error::InvalidArgument("n_grid must be at least 2".into()));
    }
    let d = p1 - p0;
    let len = f.domain.norm_of(d.as_slice());
    if len <= 0.0 {
        return Err(Error::InvalidArgument("segment endpoints coincide".into()));
    }
    let v = &d / len;
    let step = 1e-3 * len / (n_grid - 1) as f64;
    let mut magnitudes = Vec::with_capacity(n_grid);
    for i in 0..n_grid {
        let x = p0 + &d * (i as f64 / (n_grid - 1) as f64);
        let side = if i + 1 == n_grid { Side::Minus } else { Side::Plus };
        let dd = directional_derivative(f, &x, &v, side, Some(step))?;
        magnitudes.push(f.codomain.norm_of(dd.estimate.as_slice()));
    }
    let degenerate: Vec<bool> = magnitudes.iter().map(|m| !(*m > DD_FLOOR)).collect();
    let mut collapsed_runs = Vec::new();
    let mut i = 0;
    while i < n_grid {
        if degenerate[i] {
            let start = i;
            while i + 1 < n_grid && degenerate[i + 1] {
                i += 1;
            }
            if i > start {
                collapsed_runs.push((start, i));
            }
        }
        i += 1;
    }
    let good = degenerate.iter().filter(|d| !**d).count();
    let verdict = if !collapsed_runs.is_empty() {
        SegmentVerdict::Collapsed
    } else if good == n_grid {
        SegmentVerdict::Nondegenerate
    } else {
        SegmentVerdict::DenselyNondegenerate
    };
    Ok(SegmentReport {
        magnitudes,
        fraction_nondegenerate: good as f64 / n_grid as f64,
        collapsed_runs,
        verdict,
    })
}

/// Collected global evidence for one map.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GlobalReport {
    pub sheet_counts: Option<SheetCounts>,
    pub hadamard_levy: Option<HadamardLevyReport>,
    pub dense_scale: Option<DenseScaleReport>,
    pub segment: Option<SegmentReport>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::Smoothness;

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

    fn square() -> MapModel {
        MapModel::new("z2", Space::euclidean(2), Space::euclidean(2), |z| {
            v(&[z[0] * z[0] - z[1] * z[1], 2.0 * z[0] * z[1]])
        })
        .with_jacobian(|z| Matrix::from_row_slice(2, 2, &[2.0 * z[0], -2.0 * z[1], 2.0 * z[1], 2.0 * z[0]]))
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
    fn chart_examples() {
        let c = build_chart(&cubic(), &v(&[0.0]), &ChartOptions::default()).unwrap();
        assert_eq!(c.mode, ChartMode::Strong);
        assert_eq!(c.body, ConvexBody::interval(-0.2, 0.2).unwrap());
        assert!(c.s >= 0.05);

        let id = MapModel::identity(Space::euclidean(2));
        let c = build_chart(&id, &v(&[0.0, 0.0]), &ChartOptions::default()).unwrap();
        assert_eq!(c.s, 0.1);
        assert!(c.certificate.lipschitz_estimate < 1e-6);

        let fold = MapModel::new("fold", Space::euclidean(2), Space::euclidean(2), |x| {
            v(&[x[0] * x[0], x[1]])
        })
        .with_jacobian(|x| Matrix::from_row_slice(2, 2, &[2.0 * x[0], 0.0, 0.0, 1.0]));
        assert!(matches!(
            build_chart(&fold, &v(&[0.0, 0.0]), &ChartOptions::default()),
            Err(Error::DegenerateDerivative { .. })
        ));
    }

    fn wide_cubic_chart() -> LocalInverseChart {
        let opts = ChartOptions {
            ladder: alloc::vec![0.5],
            s_fractions: alloc::vec![1.5],
            ..Default::default()
        };
        build_chart(&cubic(), &v(&[1.0]), &opts).unwrap()
    }

    #[test]
    fn invert_examples() {
        let c = wide_cubic_chart();
        assert!((invert(&c, &v(&[2.0])).unwrap()[0] - 1.0).abs() < 1e-12);
        let oracle = bisect(|x| x * x * x + x - 2.5, 0.0, 2.0);
        assert!((invert(&c, &v(&[2.5])).unwrap()[0] - oracle).abs() < 1e-9);
        assert!((oracle - 1.1147).abs() < 1e-4);
        assert!(matches!(invert(&c, &v(&[3.0])), Err(Error::OutOfChart { .. })));
    }

    #[test]
    fn inverse_derivative_examples() {
        let c = wide_cubic_chart();
        let d = inverse_derivative(&c, &v(&[2.0])).unwrap();
        assert!((d[(0, 0)] - 0.25).abs() < 1e-12);
        let fd = finite_difference_inverse_derivative(&c, &v(&[2.0]), None).unwrap();
        assert!((fd[(0, 0)] - 0.25).abs() / 0.25 < 1e-4);

        let m = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 0.5, 3.0]);
        let lin = MapModel::linear("m", m.clone());
        let c = build_chart(&lin, &v(&[0.3, 0.1]), &ChartOptions::default()).unwrap();
        let d = inverse_derivative(&c, &c.image.clone()).unwrap();
        assert!((d - m.try_inverse().unwrap()).amax() < 1e-12);
    }

    #[test]
    fn discreteness_examples() {
        let shell = Region::Shell {
            center: v(&[0.0, 0.0]),
            inner: 0.5,
            outer: 2.0,
            p: 2.0,
        };
        let r = discreteness_probe(&square(), &v(&[1.0, 0.0]), &shell, 0.02, 1);
        assert_eq!(r.clusters.len(), 2);
        assert!((r.min_separation - 2.0).abs() < 1e-9);

        let body = Region::Body(ConvexBody::interval(-2.0, 2.0).unwrap());
        let r = discreteness_probe(&cubic(), &v(&[0.7]), &body, 0.01, 1);
        assert_eq!(r.clusters.len(), 1);
    }

    #[test]
    fn sheet_counts() {
        let shell = Region::Shell {
            center: v(&[0.0, 0.0]),
            inner: 0.5,
            outer: 2.0,
            p: 2.0,
        };
        let ys: Vec<Point> = (0..5)
            .map(|k| {
                let th = k as f64;
                v(&[1.5 * libm::cos(th), 1.5 * libm::sin(th)])
            })
            .collect();
        let s = preimage_count(&square(), &shell, &ys, 64, 3);
        assert!(s.constant);
        assert!(s.entries.iter().all(|e| e.count == 2));

        let body = Region::Body(ConvexBody::interval(-2.0, 2.0).unwrap());
        let s = preimage_count(&cubic(), &body, &[v(&[-0.9]), v(&[0.0]), v(&[0.5])], 32, 3);
        assert!(s.entries.iter().all(|e| e.count == 1));
    }

    #[test]
    fn hadamard_levy_examples() {
        let dom = ConvexBody::interval(-5.0, 5.0).unwrap();
        let r = hadamard_levy(&cubic(), &dom, &HadamardLevyOptions::default(), 1).unwrap();
        assert!(r.integral_lower_bound >= 10.0 * (1.0 - 1e-9));
        assert_eq!(r.verdict, HlVerdict::DivergenceConsistent);

        let id = MapModel::identity(Space::euclidean(1));
        let r = hadamard_levy(
            &id,
            &dom,
            &HadamardLevyOptions {
                s_max: 3.0,
                ..Default::default()
            },
            1,
        )
        .unwrap();
        assert!((r.integral_lower_bound - 3.0).abs() < 1e-12);

        let atan = MapModel::new("atan", Space::euclidean(1), Space::euclidean(1), |x| x.map(libm::atan))
            .with_jacobian(|x| Matrix::from_element(1, 1, 1.0 / (1.0 + x[0] * x[0])));
        let dom = ConvexBody::interval(-100.0, 100.0).unwrap();
        let r = hadamard_levy(&atan, &dom, &HadamardLevyOptions::default(), 1).unwrap();
        assert_eq!(r.verdict, HlVerdict::NotEstablished);
        assert!(r.integral_lower_bound < 2.0);
    }

    #[test]
    fn hadamard_levy_monotone_in_horizon() {
        let dom = ConvexBody::interval(-3.0, 3.0).unwrap();
        let mut last = 0.0;
        for s_max in [1.0, 2.0, 4.0, 8.0] {
            let r = hadamard_levy(
                &cubic(),
                &dom,
                &HadamardLevyOptions {
                    s_max,
                    samples: 500,
                    ..Default::default()
                },
                4,
            )
            .unwrap();
            assert!(r.integral_lower_bound >= last);
            last = r.integral_lower_bound;
        }
    }

    #[test]
    fn segment_examples() {
        let r = segment_nondegeneracy_probe(&cubic(), &v(&[-1.0]), &v(&[1.0]), 101).unwrap();
        assert_eq!(r.verdict, SegmentVerdict::Nondegenerate);
        let constant = MapModel::new("c", Space::euclidean(1), Space::euclidean(1), |_| v(&[3.0]));
        let r = segment_nondegeneracy_probe(&constant, &v(&[-1.0]), &v(&[1.0]), 11).unwrap();
        assert_eq!(r.verdict, SegmentVerdict::Collapsed);
        assert_eq!(r.fraction_nondegenerate, 0.0);
        let cube = MapModel::new("x3", Space::euclidean(1), Space::euclidean(1), |x| x.map(|t| t * t * t));
        let r = segment_nondegeneracy_probe(&cube, &v(&[-1.0]), &v(&[1.0]), 101).unwrap();
        assert_ne!(r.verdict, SegmentVerdict::Collapsed);
        assert!(r.fraction_nondegenerate >= 0.98);
    }

    #[test]
    fn dense_scale_examples() {
        let pts: Vec<Point> = (0..9).map(|i| v(&[-1.0 + 0.25 * i as f64])).collect();
        let r = dense_scale_check(&cubic(), &pts, &[0.4, 0.2], &CertBudgets::light(), 2);
        assert!(r.passed);
        assert!(r.alpha >= 0.25);
        assert!((r.image_ball_radius - 0.5 * r.alpha * r.eta * 0.4).abs() < 1e-15);

        let fold = MapModel::new("fold", Space::euclidean(2), Space::euclidean(2), |x| {
            v(&[x[0] * x[0], x[1]])
        })
        .with_jacobian(|x| Matrix::from_row_slice(2, 2, &[2.0 * x[0], 0.0, 0.0, 1.0]));
        let r = dense_scale_check(
            &fold,
            &[v(&[1.0, 0.0]), v(&[0.0, 0.0])],
            &[0.4],
            &CertBudgets::light(),
            2,
        );
        assert!(!r.passed);
        assert_eq!(r.failures, alloc::vec![1]);
    }
}
