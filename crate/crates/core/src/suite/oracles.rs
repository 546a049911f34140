//! Reference solutions written independently of the solvers: bisection,
//! closed-form inverses and analytic trajectories.

use alloc::vec::Vec;

/// Root of a continuous scalar `g` on `[lo, hi]` with `g(lo)·g(hi) ≤ 0`,
/// by bisection to the last representable midpoint.
pub fn bisect(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut glo = g(lo);
    if glo == 0.0 {
        return lo;
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let gm = g(mid);
        if gm == 0.0 {
            return mid;
        }
        if (gm < 0.0) == (glo < 0.0) {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Real root of `x³ + x = y` (the map is strictly increasing).
pub fn cubic_root(y: f64) -> f64 {
    let bound = y.abs().max(1.0);
    bisect(|x| x * x * x + x - y, -bound, bound)
}

/// Principal complex square root of `u + iv` via the half-angle formulas.
pub fn complex_sqrt(u: f64, v: f64) -> (f64, f64) {
    let r = libm::hypot(u, v);
    let re = libm::sqrt(0.5 * (r + u));
    let im = libm::sqrt(0.5 * (r - u));
    (re, if v < 0.0 { -im } else { im })
}

/// Both square roots of `u + iv`.
pub fn complex_sqrt_pair(u: f64, v: f64) -> [(f64, f64); 2] {
    let (a, b) = complex_sqrt(u, v);
    [(a, b), (-a, -b)]
}

/// Inverse of `[[a, b], [c, d]]` by the adjugate formula.
pub fn inverse_2x2(m: [[f64; 2]; 2]) -> Option<[[f64; 2]; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det == 0.0 {
        return None;
    }
    Some([[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]])
}

pub fn apply_2x2(m: [[f64; 2]; 2], x: [f64; 2]) -> [f64; 2] {
    [m[0][0] * x[0] + m[0][1] * x[1], m[1][0] * x[0] + m[1][1] * x[1]]
}

/// `R(θ₁)·diag(κ, 1)·R(θ₂)ᵀ`, condition number `κ` and smallest singular value 1.
pub fn conditioned_2x2(kappa: f64, theta1: f64, theta2: f64) -> [[f64; 2]; 2] {
    let (s1, c1) = (libm::sin(theta1), libm::cos(theta1));
    let (s2, c2) = (libm::sin(theta2), libm::cos(theta2));
    let d = [kappa, 1.0];
    // R1 · D · R2ᵀ written out entrywise.
    let r1 = [[c1, -s1], [s1, c1]];
    let r2t = [[c2, s2], [-s2, c2]];
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = (0..2).map(|k| r1[i][k] * d[k] * r2t[k][j]).sum();
        }
    }
    out
}

/// Jump map `x − a ∓ c/2` (minus on `x ≤ a`).
pub fn ha(x: f64, a: f64, c: f64) -> f64 {
    if x <= a {
        x - a - c / 2.0
    } else {
        x - a + c / 2.0
    }
}

/// Infimum over `[a − c, a + c]` of `|x − (x − (h_a(x) − y))|`, i.e. of `|h_a(x) − y|`.
pub fn ha_min_residual(y: f64, c: f64) -> f64 {
    // Left branch attains c/2 + y at x = a; right branch approaches c/2 − y as x → a⁺.
    (c / 2.0 + y).abs().min((c / 2.0 - y).abs())
}

/// `u(t) = b·eᵗ`, the level curve of `x·e^{−t}` through `(0, b)`.
pub fn exp_trajectory(b: f64, t: f64) -> f64 {
    b * libm::exp(t)
}

/// Solution of `x³ + x − t = c`.
pub fn cubic_level(c: f64, t: f64) -> f64 {
    cubic_root(t + c)
}

/// Evenly spaced values on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => alloc::vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracles_satisfy_their_equations() {
        for y in [-10.0, -2.5, 0.0, 0.1, 2.0, 2.5] {
            let x = cubic_root(y);
            assert!((x * x * x + x - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
        assert!((cubic_root(2.0) - 1.0).abs() < 1e-15);
        for (u, v) in [(1.0, 0.0), (-1.0, 0.0), (0.3, -1.2), (-2.0, 0.5)] {
            for (a, b) in complex_sqrt_pair(u, v) {
                assert!((a * a - b * b - u).abs() < 1e-14 && (2.0 * a * b - v).abs() < 1e-14);
            }
        }
        let m = conditioned_2x2(1e3, 0.5, 1.1);
        let inv = inverse_2x2(m).unwrap();
        let x = apply_2x2(m, apply_2x2(inv, [0.3, -0.7]));
        assert!((x[0] - 0.3).abs() < 1e-12 && (x[1] + 0.7).abs() < 1e-12);
        assert!((ha_min_residual(0.3, 1.0) - 0.2).abs() < 1e-15);
    }
}
