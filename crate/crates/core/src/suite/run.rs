use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::{ClosureSelfMap, Expectation, ImplicitSpec, MapProblem, Problem, ProblemRecord, SelfMapProblem, Tag};
use crate::cert::{
    build_tilde, certify, certify_on_scales, certify_targets, pair_certificates, paired_constants, product_tilde,
    sample_targets, Auxiliary, CertBudgets, Classification, ScaleProfile, UncertifiedReason,
};
use crate::fixedpoint::{grid_min_residual, probe_fixed_point_set, ConvexityVerdict, COMBINATIONS_PER_PAIR};
use crate::implicit::{
    implicit_derivative, implicit_solve, ode_residual_check, ode_solve, rk4, uniform_grid, ImplicitOptions,
    ImplicitProblem, LevelSetRhs, OdeProblem, SignConvention,
};
use crate::inversion::{
    build_chart, finite_difference_inverse_derivative, hadamard_levy, invert, preimage_count, ChartMode, ChartOptions,
    DerivativeMeasure, HadamardLevyOptions, HlVerdict,
};
use crate::maps::{inverse_jacobian_map, relative_error, LinearMap, MapModel};
use crate::rng::{self, derive_seed};
use crate::spaces::{concat, Region};
use crate::tolerances::{FP_TOL, RESIDUAL_FLOOR};
use crate::{Error, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Task {
    Certify,
    Scales,
    Invert,
    Sheets,
    HadamardLevy,
    Implicit,
    Ode,
    FullSuite,
}

impl Task {
    /// Every task except [`Task::FullSuite`].
    pub const BASIC: [Task; 7] = [
        Task::Certify,
        Task::Scales,
        Task::Invert,
        Task::Sheets,
        Task::HadamardLevy,
        Task::Implicit,
        Task::Ode,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Task::Certify => "certify",
            Task::Scales => "scales",
            Task::Invert => "invert",
            Task::Sheets => "sheets",
            Task::HadamardLevy => "hadamard_levy",
            Task::Implicit => "implicit",
            Task::Ode => "ode",
            Task::FullSuite => "full_suite",
        }
    }

    pub fn parse(s: &str) -> Option<Task> {
        Task::BASIC
            .into_iter()
            .chain([Task::FullSuite])
            .find(|t| t.label() == s)
    }

    /// Whether the task has anything to run on `record`.
    pub fn applies_to(self, record: &ProblemRecord) -> bool {
        match (self, &record.problem) {
            (Task::FullSuite, _) => true,
            (Task::Certify, Problem::Map(m)) => !m.expectations.is_empty(),
            (Task::Certify, Problem::SelfMap(_)) => true,
            (Task::Scales, Problem::Map(m)) => !m.scale_anchors.is_empty(),
            (Task::Invert, Problem::Map(m)) => {
                record.has_tag(Tag::C1Invertible) && (!m.chart_anchors.is_empty() || !m.inversion_cases.is_empty())
            }
            (Task::Sheets, Problem::Map(m)) => m.sheet_region.is_some() && m.inverse.is_some(),
            (Task::HadamardLevy, Problem::Map(m)) => {
                m.hl_domain.is_some()
                    && (record.has_tag(Tag::HadamardLevyPass) || record.has_tag(Tag::HadamardLevyFail))
            }
            (Task::Implicit, Problem::Implicit(_)) => record.has_tag(Tag::Implicit),
            (Task::Ode, Problem::Implicit(_)) => record.has_tag(Tag::Ode),
            _ => false,
        }
    }
}

/// What a check was compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleKind {
    Bisection,
    ClosedForm,
    ComplexSqrt,
    Grid,
    Analytic,
    /// A property the result must satisfy (no external reference value).
    Invariant,
}

impl OracleKind {
    pub fn label(self) -> &'static str {
        match self {
            OracleKind::Bisection => "bisection",
            OracleKind::ClosedForm => "closed_form",
            OracleKind::ComplexSqrt => "complex_sqrt",
            OracleKind::Grid => "grid",
            OracleKind::Analytic => "analytic",
            OracleKind::Invariant => "invariant",
        }
    }
}

/// One pass/fail entry with measured values kept apart from reference values.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: Vec<(String, f64)>,
    pub oracle: Vec<(String, f64)>,
    pub oracle_kind: OracleKind,
    pub note: String,
}

/// Numeric table destined for CSV output.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportFragment {
    pub problem: String,
    pub task: Task,
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
}

impl ReportFragment {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Pass/fail thresholds applied by [`run_problem`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckTolerances {
    /// Absolute error against closed-form, bisection and analytic solutions.
    pub oracle_abs: f64,
    /// Relative error of finite-difference derivatives.
    pub derivative_rel: f64,
    /// Residual of points on a fixed-point set and of their convex combinations.
    pub fixed_set: f64,
    /// Central-difference defect of an ODE trajectory.
    pub ode_defect: f64,
    /// Gap between the level-set trajectory and RK4.
    pub rk4_gap: f64,
    /// Agreement of paired profile constants with the substitution formulas.
    pub constants: f64,
}

impl Default for CheckTolerances {
    fn default() -> Self {
        CheckTolerances {
            oracle_abs: 1e-9,
            derivative_rel: 1e-4,
            fixed_set: FP_TOL,
            ode_defect: 1e-5,
            rk4_gap: 1e-6,
            constants: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub tolerances: CheckTolerances,
    pub seed: u64,
    pub budgets: CertBudgets,
    pub ladder: Vec<f64>,
    pub roundtrip_samples: usize,
    pub sheet_samples: usize,
    pub ode_steps: usize,
    pub fp_starts: usize,
    pub weak_grid_step: f64,
    pub hadamard_levy: HadamardLevyOptions,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            tolerances: CheckTolerances::default(),
            seed: 0,
            budgets: CertBudgets::default(),
            ladder: vec![0.4, 0.2, 0.1, 0.05],
            roundtrip_samples: 100,
            sheet_samples: 20,
            ode_steps: 1000,
            fp_starts: 16,
            weak_grid_step: 1e-3,
            hadamard_levy: HadamardLevyOptions::default(),
        }
    }
}

struct Ctx<'a> {
    record: &'a ProblemRecord,
    task: Task,
    opts: &'a RunOptions,
    seed: u64,
    checks: Vec<Check>,
    tables: Vec<Table>,
}

fn pairs(xs: &[(&str, f64)]) -> Vec<(String, f64)> {
    xs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

impl Ctx<'_> {
    fn check(&mut self, what: &str, passed: bool, measured: &[(&str, f64)], oracle: &[(&str, f64)], kind: OracleKind) {
        self.check_note(what, passed, measured, oracle, kind, String::new());
    }

    fn check_note(
        &mut self,
        what: &str,
        passed: bool,
        measured: &[(&str, f64)],
        oracle: &[(&str, f64)],
        kind: OracleKind,
        note: String,
    ) {
        self.checks.push(Check {
            name: format!("{}/{}/{}", self.record.name, self.task.label(), what),
            passed,
            measured: pairs(measured),
            oracle: pairs(oracle),
            oracle_kind: kind,
            note,
        });
    }

    fn error(&mut self, what: &str, e: &Error) {
        self.check_note(what, false, &[], &[], OracleKind::Invariant, format!("error: {e}"));
    }

    fn sub_seed(&self, i: u64) -> u64 {
        derive_seed(self.seed, i)
    }
}

fn name_hash(s: &str) -> u64 {
    // FNV-1a
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x100_0000_01b3)
    })
}

/// Run one task on one problem. Failures become failed checks, never errors.
pub fn run_problem(record: &ProblemRecord, task: Task, opts: &RunOptions) -> ReportFragment {
    if task == Task::FullSuite {
        let mut out = ReportFragment {
            problem: record.name.clone(),
            task,
            checks: Vec::new(),
            tables: Vec::new(),
        };
        for t in Task::BASIC {
            if t.applies_to(record) {
                let f = run_problem(record, t, opts);
                out.checks.extend(f.checks);
                out.tables.extend(f.tables);
            }
        }
        return out;
    }
    let seed = derive_seed(opts.seed, name_hash(record.name.as_str()) ^ (task as u64));
    let mut ctx = Ctx {
        record,
        task,
        opts,
        seed,
        checks: Vec::new(),
        tables: Vec::new(),
    };
    if !task.applies_to(record) {
        ctx.check_note(
            "applicable",
            false,
            &[],
            &[],
            OracleKind::Invariant,
            "task does not apply to problem".into(),
        );
    } else {
        match (&record.problem, task) {
            (Problem::Map(m), Task::Certify) => certify_task(&mut ctx, m),
            (Problem::SelfMap(s), Task::Certify) => fixed_set_task(&mut ctx, s),
            (Problem::Map(m), Task::Scales) => scales_task(&mut ctx, m),
            (Problem::Map(m), Task::Invert) => invert_task(&mut ctx, m),
            (Problem::Map(m), Task::Sheets) => sheets_task(&mut ctx, m),
            (Problem::Map(m), Task::HadamardLevy) => hl_task(&mut ctx, m),
            (Problem::Implicit(s), Task::Implicit) => implicit_task(&mut ctx, s),
            (Problem::Implicit(s), Task::Ode) => ode_task(&mut ctx, s),
            _ => {}
        }
    }
    ReportFragment {
        problem: record.name.clone(),
        task,
        checks: ctx.checks,
        tables: ctx.tables,
    }
}

fn resolve_aux(f: &MapModel, e: &Expectation) -> core::result::Result<LinearMap, Error> {
    match &e.aux {
        Some(l) => Ok(l.clone()),
        None => inverse_jacobian_map(f, &e.anchor),
    }
}

fn certify_task(ctx: &mut Ctx<'_>, m: &MapProblem) {
    for (i, e) in m.expectations.iter().enumerate() {
        let what = format!("certify[{i}]");
        let seed = ctx.sub_seed(i as u64);
        let budgets = CertBudgets {
            target_center: e.target_center.clone(),
            grid_step: Some(ctx.opts.weak_grid_step),
            ..ctx.opts.budgets.clone()
        };
        let classification = match resolve_aux(&m.f, e) {
            Err(Error::DegenerateDerivative { .. }) => {
                Ok(Classification::Uncertified(UncertifiedReason::DegenerateAuxiliary))
            }
            Err(err) => Err(err),
            Ok(aux) => {
                let aux = Auxiliary::Linear(aux);
                let cert = match &e.targets {
                    Some(ts) => {
                        let center = e.target_center.clone().unwrap_or_else(|| m.f.apply(&e.anchor));
                        certify_targets(&m.f, &e.anchor, &aux, &e.body, e.s, &center, ts, &budgets, seed)
                    }
                    None => certify(&m.f, &e.anchor, &aux, &e.body, e.s, &budgets, seed),
                };
                cert.map(|c| {
                    if c.classification.is_strong() {
                        unique_fixed_point(ctx, m, e, &aux, &format!("{what}/unique_fixed_point"));
                    }
                    c.classification
                })
            }
        };
        let c = match classification {
            Ok(c) => c,
            Err(err) => {
                ctx.error(&what, &err);
                continue;
            }
        };
        let measured = match &c {
            Classification::StrongA { lipschitz } | Classification::NonexpansiveA { lipschitz } => {
                vec![("lipschitz_estimate", *lipschitz)]
            }
            Classification::WeakAQuasi { worst_ratio } => vec![("worst_ratio", *worst_ratio)],
            Classification::WeakANoFixedPoint { min_residual } => {
                vec![("min_residual", *min_residual)]
            }
            Classification::Uncertified(_) => Vec::new(),
        };
        let note = format!("classification {} (expected {})", c.label(), e.label);
        ctx.check_note(&what, c.label() == e.label, &measured, &[], OracleKind::Analytic, note);

        if let (Some(oracle), Some(ts)) = (&e.residual_oracle, &e.targets) {
            weak_grid_checks(ctx, m, e, ts, oracle.as_ref(), &what);
        }
    }
}

fn unique_fixed_point(ctx: &mut Ctx<'_>, m: &MapProblem, e: &Expectation, aux: &Auxiliary, what: &str) {
    let y = e.target_center.clone().unwrap_or_else(|| m.f.apply(&e.anchor));
    match build_tilde(&m.f, &e.anchor, &y, aux, &e.body) {
        Ok(t) => {
            let set = probe_fixed_point_set(&t, &e.body, ctx.opts.fp_starts, ctx.sub_seed(0x100));
            let n = set.points.len();
            ctx.check(
                what,
                n == 1,
                &[("clusters", n as f64)],
                &[("clusters", 1.0)],
                OracleKind::Invariant,
            );
        }
        Err(err) => ctx.error(what, &err),
    }
}

fn weak_grid_checks(
    ctx: &mut Ctx<'_>,
    m: &MapProblem,
    e: &Expectation,
    targets: &[Point],
    oracle: &(dyn Fn(f64) -> f64 + Send + Sync),
    what: &str,
) {
    let delta = ctx.opts.weak_grid_step;
    let aux = Auxiliary::Linear(e.aux.clone().unwrap_or_else(|| LinearMap::identity(m.f.domain.dim())));
    for y in targets {
        let name = format!("{what}/grid_residual[y={}]", y[0]);
        let t = match build_tilde(&m.f, &e.anchor, y, &aux, &e.body) {
            Ok(t) => t,
            Err(err) => {
                ctx.error(&name, &err);
                continue;
            }
        };
        match grid_min_residual(&t, &e.body, delta) {
            Ok((r, _)) => {
                let exact = oracle(y[0]);
                let ok = (r - exact).abs() <= 2.0 * delta && r >= RESIDUAL_FLOOR;
                ctx.check(
                    &name,
                    ok,
                    &[("min_residual", r)],
                    &[("min_residual", exact), ("grid_step", delta)],
                    OracleKind::Grid,
                );
            }
            Err(err) => ctx.error(&name, &err),
        }
    }
}

fn fixed_set_task(ctx: &mut Ctx<'_>, s: &SelfMapProblem) {
    let tol = ctx.opts.tolerances.fixed_set;
    let map = ClosureSelfMap(s);
    let set = probe_fixed_point_set(&map, &s.body, ctx.opts.fp_starts, ctx.sub_seed(0));
    let n = set.points.len();
    let off_set = set.points.iter().map(|p| (s.fixed_set_distance)(p)).fold(0.0, f64::max);
    let expected_combos = COMBINATIONS_PER_PAIR * n * n.saturating_sub(1) / 2;
    ctx.check(
        "fixed_points",
        n >= 5,
        &[("distinct_fixed_points", n as f64)],
        &[("minimum", 5.0)],
        OracleKind::Invariant,
    );
    ctx.check(
        "on_fixed_set",
        off_set <= tol,
        &[("max_distance_to_fixed_set", off_set)],
        &[("tolerance", tol)],
        OracleKind::ClosedForm,
    );
    ctx.check(
        "convex_combinations",
        set.worst_combination_residual <= tol && set.combinations_checked == expected_combos,
        &[
            ("worst_residual", set.worst_combination_residual),
            ("combinations", set.combinations_checked as f64),
        ],
        &[("tolerance", tol), ("combinations", expected_combos as f64)],
        OracleKind::Invariant,
    );
    ctx.check_note(
        "verdict",
        set.verdict == ConvexityVerdict::ConvexSegment,
        &[],
        &[],
        OracleKind::ClosedForm,
        format!("{:?}", set.verdict),
    );
}

fn scales_task(ctx: &mut Ctx<'_>, m: &MapProblem) {
    let provider = |a: &Point| inverse_jacobian_map(&m.f, a);
    let mut strong = Vec::new();
    for (i, (a, expect)) in m.scale_anchors.iter().enumerate() {
        let p = certify_on_scales(
            &m.f,
            a,
            &provider,
            &ctx.opts.ladder,
            &ctx.opts.budgets,
            ctx.sub_seed(i as u64),
        );
        if *expect && p.all_strong() {
            strong.push(p.clone());
        }
        let what = format!("scales[{i}]");
        let rungs = p.records.len() as f64;
        if *expect {
            let ok = p.all_strong()
                && (p.beta - 0.5).abs() <= ctx.opts.tolerances.constants
                && p.alpha >= 0.25 - ctx.opts.tolerances.constants
                && p.check_invariants()
                && p.records.len() == ctx.opts.ladder.len();
            ctx.check(
                &what,
                ok,
                &[
                    ("alpha", p.alpha),
                    ("beta", p.beta),
                    ("eta", p.eta),
                    ("gamma", p.gamma),
                    ("strong_rungs", rungs),
                ],
                &[
                    ("alpha_min", 0.25),
                    ("beta", 0.5),
                    ("rungs", ctx.opts.ladder.len() as f64),
                ],
                OracleKind::Analytic,
            );
        } else {
            let note = p.failure.as_ref().map(|r| format!("{r}")).unwrap_or_default();
            ctx.check_note(
                &what,
                !p.is_certified(),
                &[("certified_rungs", rungs)],
                &[],
                OracleKind::Analytic,
                note,
            );
        }
    }
    if let [p1, p2, ..] = strong.as_slice() {
        pairing_checks(ctx, m, p1, p2);
    }
}

fn pairing_checks(ctx: &mut Ctx<'_>, m: &MapProblem, p1: &ScaleProfile, p2: &ScaleProfile) {
    let paired = match pair_certificates(p1, p2) {
        Ok(p) => p,
        Err(e) => return ctx.error("pairing", &e),
    };
    let (alpha, beta, eta, gamma) = paired_constants(p1.alpha, p1.beta, p1.eta, p1.gamma);
    let q = &paired.profile;
    let gap = [q.alpha - alpha, q.beta - beta, q.eta - eta, q.gamma - gamma]
        .iter()
        .map(|d| d.abs())
        .fold(0.0, f64::max);
    ctx.check(
        "pairing/constants",
        gap <= ctx.opts.tolerances.constants,
        &[("alpha", q.alpha), ("beta", q.beta), ("eta", q.eta), ("gamma", q.gamma)],
        &[("alpha", alpha), ("beta", beta), ("eta", eta), ("gamma", gamma)],
        OracleKind::ClosedForm,
    );
    let lmax = paired.lipschitz_max.iter().copied().fold(0.0, f64::max);
    let lmin = paired.lipschitz_min.iter().copied().fold(0.0, f64::max);
    ctx.check_note(
        "pairing/lipschitz_combination",
        paired
            .lipschitz_max
            .iter()
            .zip(&paired.lipschitz_min)
            .all(|(a, b)| a >= b),
        &[
            ("lipschitz_max", lmax),
            ("lipschitz_min", lmin),
            ("discrepancy", paired.combination_discrepancy),
        ],
        &[],
        OracleKind::Invariant,
        "product constant taken as the maximum of the factor constants; the minimum rule is reported for comparison"
            .into(),
    );

    let (r1, r2) = (&p1.records[0], &p2.records[0]);
    let tildes = inverse_jacobian_map(&m.f, &p1.anchor).and_then(|a1| {
        let t1 = build_tilde(
            &m.f,
            &p1.anchor,
            &r1.certificate.target_center,
            &Auxiliary::Linear(a1),
            &r1.body,
        )?;
        let a2 = inverse_jacobian_map(&m.f, &p2.anchor)?;
        let t2 = build_tilde(
            &m.f,
            &p2.anchor,
            &r2.certificate.target_center,
            &Auxiliary::Linear(a2),
            &r2.body,
        )?;
        let t = product_tilde(&t1, &t2)?;
        Ok((t1, t2, t))
    });
    let (t1, t2, t) = match tildes {
        Ok(x) => x,
        Err(e) => return ctx.error("pairing/bitwise", &e),
    };
    let mut rng = rng::stream(ctx.sub_seed(0x600), 0);
    let n = 10_000;
    let mut mismatches = 0usize;
    for _ in 0..n {
        let x1 = t1.body.sample_interior(&mut rng);
        let x2 = t2.body.sample_interior(&mut rng);
        let joint = t.eval(&concat([x1.clone(), x2.clone()]));
        let parts = concat([t1.eval(&x1), t2.eval(&x2)]);
        if joint.iter().zip(parts.iter()).any(|(a, b)| a.to_bits() != b.to_bits()) {
            mismatches += 1;
        }
    }
    ctx.check(
        "pairing/bitwise",
        mismatches == 0,
        &[("mismatches", mismatches as f64), ("samples", n as f64)],
        &[("mismatches", 0.0)],
        OracleKind::Invariant,
    );
}

fn nearest(oracle: &[Point], x: &Point) -> f64 {
    oracle.iter().map(|o| (o - x).amax()).fold(f64::INFINITY, f64::min)
}

fn invert_task(ctx: &mut Ctx<'_>, m: &MapProblem) {
    let base = ChartOptions {
        budgets: ctx.opts.budgets.clone(),
        ..ChartOptions::default()
    };
    for (i, a) in m.chart_anchors.iter().enumerate() {
        let what = format!("chart[{i}]");
        let chart = match build_chart(
            &m.f,
            a,
            &ChartOptions {
                seed: ctx.sub_seed(i as u64),
                ..base.clone()
            },
        ) {
            Ok(c) => c,
            Err(e) => {
                ctx.error(&what, &e);
                continue;
            }
        };
        let tol = chart.inv_tol();
        let norm_a = chart.aux.operator_norm();

        let ys = sample_targets(
            &m.f.codomain,
            &chart.image,
            chart.s,
            ctx.opts.roundtrip_samples,
            ctx.sub_seed(0x200 + i as u64),
        );
        let (mut failures, mut worst, mut oracle_gap) = (0usize, 0.0_f64, 0.0_f64);
        for y in &ys {
            match invert(&chart, y) {
                Ok(x) => {
                    worst = worst.max(m.f.codomain.distance(&m.f.apply(&x), y));
                    if let Some(inv) = &m.inverse {
                        oracle_gap = oracle_gap.max(nearest(&inv(y), &x));
                    }
                }
                Err(_) => failures += 1,
            }
        }
        ctx.check(
            &format!("{what}/roundtrip"),
            failures == 0 && worst <= tol,
            &[
                ("failures", failures as f64),
                ("max_residual", worst),
                ("samples", ys.len() as f64),
            ],
            &[("inv_tol", tol)],
            OracleKind::Invariant,
        );
        if m.inverse.is_some() {
            let bound = ctx.opts.tolerances.oracle_abs * norm_a.max(1.0);
            ctx.check(
                &format!("{what}/oracle"),
                failures == 0 && oracle_gap <= bound,
                &[("max_error", oracle_gap)],
                &[("tolerance", bound)],
                OracleKind::ClosedForm,
            );
        }

        if chart.mode == ChartMode::Strong {
            let mut rng = rng::stream(ctx.sub_seed(0x300 + i as u64), 0);
            let (mut n, mut gap, mut fails) = (0usize, 0.0_f64, 0usize);
            for _ in 0..ctx.opts.roundtrip_samples * 4 {
                if n >= ctx.opts.roundtrip_samples {
                    break;
                }
                let x = chart.body.sample_interior(&mut rng);
                let y = m.f.apply(&x);
                if !chart.contains_target(&y) {
                    continue;
                }
                n += 1;
                match invert(&chart, &y) {
                    Ok(back) => gap = gap.max((back - &x).amax()),
                    Err(_) => fails += 1,
                }
            }
            ctx.check(
                &format!("{what}/left_inverse"),
                fails == 0 && gap <= 10.0 * tol,
                &[("max_error", gap), ("samples", n as f64), ("failures", fails as f64)],
                &[("tolerance", 10.0 * tol)],
                OracleKind::Invariant,
            );
            match build_tilde(
                &m.f,
                a,
                &chart.image,
                &Auxiliary::Linear(chart.aux.clone()),
                &chart.body,
            ) {
                Ok(t) => {
                    let set =
                        probe_fixed_point_set(&t, &chart.body, ctx.opts.fp_starts, ctx.sub_seed(0x400 + i as u64));
                    let k = set.points.len();
                    ctx.check(
                        &format!("{what}/unique_fixed_point"),
                        k == 1,
                        &[("clusters", k as f64)],
                        &[("clusters", 1.0)],
                        OracleKind::Invariant,
                    );
                }
                Err(e) => ctx.error(&format!("{what}/unique_fixed_point"), &e),
            }
        }

        match finite_difference_inverse_derivative(&chart, &chart.image, None) {
            Ok(fd) => {
                let rel = relative_error(&fd, &chart.aux.matrix);
                ctx.check(
                    &format!("{what}/inverse_derivative"),
                    rel <= ctx.opts.tolerances.derivative_rel,
                    &[("relative_error", rel)],
                    &[("tolerance", ctx.opts.tolerances.derivative_rel)],
                    OracleKind::Analytic,
                );
            }
            Err(e) => ctx.error(&format!("{what}/inverse_derivative"), &e),
        }
    }

    for (i, case) in m.inversion_cases.iter().enumerate() {
        let what = format!("case[{i}]");
        let opts = ChartOptions {
            ladder: vec![case.body_radius],
            s_fractions: vec![case.s_fraction],
            seed: ctx.sub_seed(0x500 + i as u64),
            ..base.clone()
        };
        let result = build_chart(&m.f, &case.anchor, &opts).and_then(|c| invert(&c, &case.y));
        match (result, &m.inverse) {
            (Ok(x), Some(inv)) => {
                let pre = inv(&case.y);
                let err = nearest(&pre, &x);
                let reference = pre.first().map_or(f64::NAN, |p| p[0]);
                ctx.check(
                    &what,
                    err <= ctx.opts.tolerances.oracle_abs,
                    &[("x", x[0]), ("error", err)],
                    &[("x", reference)],
                    OracleKind::Bisection,
                );
            }
            (Ok(_), None) => {}
            (Err(e), _) => ctx.error(&what, &e),
        }
    }
}

fn sample_region(region: &Region, n: usize, seed: u64) -> Vec<Point> {
    let hull = region.hull();
    let mut rng = rng::stream(seed, 0x7368);
    let mut out = Vec::with_capacity(n);
    let mut tries = 0;
    while out.len() < n && tries < 100 * n.max(1) {
        tries += 1;
        let y = hull.sample_interior(&mut rng);
        if region.contains(&y) {
            out.push(y);
        }
    }
    out
}

fn sheets_task(ctx: &mut Ctx<'_>, m: &MapProblem) {
    let (Some(region), Some(inv)) = (&m.sheet_region, &m.inverse) else {
        return;
    };
    let ys = sample_region(region, ctx.opts.sheet_samples, ctx.sub_seed(0));
    let starts = 32 * m.f.domain.dim();
    let counts = preimage_count(&m.f, &m.domain, &ys, starts, ctx.sub_seed(1));
    let mut mismatches = 0usize;
    let mut rows = Vec::with_capacity(ys.len());
    let kind = if m.f.name == "z2" {
        OracleKind::ComplexSqrt
    } else {
        OracleKind::ClosedForm
    };
    for e in &counts.entries {
        let expected = inv(&e.y).len();
        if expected != e.count {
            mismatches += 1;
        }
        let mut row: Vec<f64> = e.y.iter().copied().collect();
        row.push(e.count as f64);
        row.push(expected as f64);
        rows.push(row);
    }
    let count = counts.entries.first().map_or(0.0, |e| e.count as f64);
    ctx.check(
        "sheet_counts",
        mismatches == 0 && counts.constant && !counts.entries.is_empty(),
        &[
            ("count", count),
            ("samples", counts.entries.len() as f64),
            ("mismatches", mismatches as f64),
        ],
        &[("count", counts.entries.first().map_or(0.0, |e| inv(&e.y).len() as f64))],
        kind,
    );
    let mut header: Vec<String> = (0..m.f.codomain.dim()).map(|i| format!("y{i}")).collect();
    header.push("count".into());
    header.push("oracle_count".into());
    ctx.tables.push(Table {
        name: format!("sheets_{}", ctx.record.name),
        header,
        rows,
    });
}

fn hl_task(ctx: &mut Ctx<'_>, m: &MapProblem) {
    let Some(domain) = &m.hl_domain else { return };
    let opts = &ctx.opts.hadamard_levy;
    let report = match hadamard_levy(&m.f, domain, opts, ctx.sub_seed(0)) {
        Ok(r) => r,
        Err(e) => return ctx.error("integral", &e),
    };
    let alt = hadamard_levy(
        &m.f,
        domain,
        &HadamardLevyOptions {
            measure: DerivativeMeasure::SmallestSingular,
            ..opts.clone()
        },
        ctx.sub_seed(0),
    );
    let alt_bound = alt.as_ref().map_or(f64::NAN, |r| r.integral_lower_bound);
    let note = format!(
        "verdict {} with {}; smallest-singular-value bound {:.6}",
        report.verdict.label(),
        report.measure.label(),
        alt_bound
    );
    let measured = [
        ("integral_lower_bound", report.integral_lower_bound),
        ("s_max", report.s_max),
    ];
    if ctx.record.has_tag(Tag::HadamardLevyPass) {
        let ok =
            report.verdict == HlVerdict::DivergenceConsistent && report.integral_lower_bound >= 0.99 * report.s_max;
        ctx.check_note(
            "integral",
            ok,
            &measured,
            &[("minimum", 0.99 * report.s_max)],
            OracleKind::Analytic,
            note,
        );
    } else {
        let ok = report.verdict == HlVerdict::NotEstablished && report.integral_lower_bound < 2.0;
        ctx.check_note(
            "integral",
            ok,
            &measured,
            &[("saturation_bound", 2.0)],
            OracleKind::Analytic,
            note,
        );
    }
    let rows = report
        .profile
        .iter()
        .map(|(s, m)| vec![*s, m.unwrap_or(f64::NAN)])
        .collect();
    ctx.tables.push(Table {
        name: format!("hadamard_levy_{}", ctx.record.name),
        header: vec!["s".into(), "m_hat".into()],
        rows,
    });
}

fn implicit_problem(ctx: &mut Ctx<'_>, s: &ImplicitSpec) -> Option<ImplicitProblem> {
    match ImplicitProblem::new(s.g.clone(), Point::zeros(1), s.b.clone()) {
        Ok(p) => Some(p),
        Err(e) => {
            ctx.error("problem", &e);
            None
        }
    }
}

fn implicit_task(ctx: &mut Ctx<'_>, s: &ImplicitSpec) {
    let Some(p) = implicit_problem(ctx, s) else {
        return;
    };
    let opts = ImplicitOptions::default();
    let solve = |t: f64| implicit_solve(&p, &Point::from_element(1, t), &opts);
    for &t in &s.queries {
        let what = format!("h[t={t}]");
        match solve(t) {
            Ok(h) => {
                let exact = (s.solution)(t);
                let err = (&h - &exact).amax();
                ctx.check(
                    &what,
                    err <= ctx.opts.tolerances.oracle_abs,
                    &[("h", h[0]), ("error", err)],
                    &[("h", exact[0])],
                    OracleKind::Analytic,
                );
            }
            Err(e) => ctx.error(&what, &e),
        }
    }
    if let Some(&t) = s.queries.first() {
        let step = 1e-4;
        let fd = solve(t + step).and_then(|hp| solve(t - step).map(|hm| (hp - hm) / (2.0 * step)));
        let exact = solve(t).and_then(|h| implicit_derivative(&p, &Point::from_element(1, t), &h));
        match (fd, exact) {
            (Ok(fd), Ok(d)) => {
                let rel = (fd[0] - d[(0, 0)]).abs() / d[(0, 0)].abs().max(1e-300);
                ctx.check(
                    "derivative",
                    rel <= ctx.opts.tolerances.derivative_rel,
                    &[("finite_difference", fd[0]), ("relative_error", rel)],
                    &[("implicit_derivative", d[(0, 0)])],
                    OracleKind::Invariant,
                );
            }
            (Err(e), _) | (_, Err(e)) => ctx.error("derivative", &e),
        }
    }
}

fn ode_task(ctx: &mut Ctx<'_>, s: &ImplicitSpec) {
    let grid = uniform_grid(1.0, ctx.opts.ode_steps.max(2));
    let problem = match OdeProblem::new(s.g.clone(), s.b.clone(), SignConvention::ChainRule) {
        Ok(p) => p,
        Err(e) => return ctx.error("problem", &e),
    };
    let sol = match ode_solve(&problem, &grid, &ImplicitOptions::default()) {
        Ok(sol) => sol,
        Err(e) => return ctx.error("solve", &e),
    };
    let err = sol
        .u
        .iter()
        .zip(&grid)
        .map(|(u, &t)| (u - (s.solution)(t)).amax())
        .fold(0.0, f64::max);
    let level = sol.level_residuals.iter().copied().fold(0.0, f64::max);
    let kind = if s.g.name.contains("exp") {
        OracleKind::Analytic
    } else {
        OracleKind::Bisection
    };
    let tol = ctx.opts.tolerances;
    ctx.check(
        "trajectory",
        err <= tol.oracle_abs,
        &[("max_error", err), ("nodes", grid.len() as f64)],
        &[("tolerance", tol.oracle_abs)],
        kind,
    );
    ctx.check(
        "level_residual",
        level <= tol.oracle_abs,
        &[("max_level_residual", level)],
        &[("tolerance", tol.oracle_abs)],
        OracleKind::Invariant,
    );

    let chain = problem.rhs();
    let literal = LevelSetRhs::new(&s.g, 1, SignConvention::Literal);
    match (
        ode_residual_check(&chain, &sol.u, &grid),
        ode_residual_check(&literal, &sol.u, &grid),
    ) {
        (Ok(dc), Ok(dp)) => {
            ctx.check(
                "defect_chain_rule",
                dc <= tol.ode_defect,
                &[("max_defect", dc)],
                &[("tolerance", tol.ode_defect)],
                OracleKind::Invariant,
            );
            ctx.check_note(
                "defect_literal_sign",
                dp > 1.0,
                &[("max_defect", dp)],
                &[("minimum", 1.0)],
                OracleKind::Invariant,
                "the literal sign flips u' and must fail the differential check".into(),
            );
        }
        (Err(e), _) | (_, Err(e)) => ctx.error("defect", &e),
    }
    match rk4(&chain, &s.b, &grid) {
        Ok(r) => {
            let gap = r.iter().zip(&sol.u).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);
            ctx.check(
                "rk4_agreement",
                gap <= tol.rk4_gap,
                &[("max_gap", gap)],
                &[("tolerance", tol.rk4_gap)],
                OracleKind::Invariant,
            );
        }
        Err(e) => ctx.error("rk4_agreement", &e),
    }

    let mut rows = Vec::with_capacity(grid.len());
    for (i, (&t, u)) in grid.iter().zip(&sol.u).enumerate() {
        let defect = if i == 0 || i + 1 == grid.len() {
            f64::NAN
        } else {
            let slope = (&sol.u[i + 1] - &sol.u[i - 1]) / (grid[i + 1] - grid[i - 1]);
            chain.eval_vector(t, u).map_or(f64::NAN, |f| (slope - f).norm())
        };
        let mut row = vec![t];
        row.extend(u.iter().copied());
        row.push(sol.level_residuals[i]);
        row.push(defect);
        rows.push(row);
    }
    let mut header = vec!["t".to_string()];
    header.extend((0..s.b.len()).map(|i| format!("u{i}")));
    header.push("level_residual".into());
    header.push("defect".into());
    ctx.tables.push(Table {
        name: format!("trajectory_{}", ctx.record.name),
        header,
        rows,
    });
}
