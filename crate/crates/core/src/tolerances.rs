//! Numerical thresholds shared across modules.

/// Decision threshold for "modulus of convexity is zero".
pub const TOL_ZERO: f64 = 1e-9;

/// Relative threshold for invertibility: `σ_min > SIGMA_MIN_REL · ‖J‖`.
pub const SIGMA_MIN_REL: f64 = 1e-8;

/// A certified contraction must have its sampled Lipschitz estimate at most `1 − STRONG_MARGIN`.
pub const STRONG_MARGIN: f64 = 0.02;

/// Slack above 1 tolerated for nonexpansive and quasi-nonexpansive checks.
pub const LIP_TOL: f64 = 1e-3;

/// Residual below which a point counts as a fixed point.
pub const FP_TOL: f64 = 1e-10;

/// Minimum grid residual required before declaring an auxiliary map fixed-point free.
pub const RESIDUAL_FLOOR: f64 = 0.01;

/// Base inversion tolerance; charts scale it by `‖A‖`.
pub const INV_TOL: f64 = 1e-9;

/// Directional derivatives at or below this magnitude count as vanishing.
pub const DD_FLOOR: f64 = 1e-6;

/// Successive Richardson estimates further apart than this flag non-convergence.
pub const RICHARDSON_TOL: f64 = 1e-3;

/// Fixed points closer than `CLUSTER_REL · diam(body)` are merged.
pub const CLUSTER_REL: f64 = 1e-6;

/// Largest grid the brute-force residual oracle will scan.
pub const MAX_GRID_NODES: f64 = 1e8;

/// Number of targets sampled per certification.
pub const N_TARGETS: usize = 16;

/// Hadamard–Lévy: the sampled derivative floor must stay at or above this.
pub const HL_FLOOR: f64 = 1e-2;

/// Dense-set check: each profile constant must be at least this fraction of the best one.
pub const UNIFORM_RATIO: f64 = 0.25;
