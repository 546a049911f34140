//! Certified local inversion of maps between finite-dimensional normed spaces.
//!
//! The crate certifies "property A" for a map `f` at an anchor `a`: for every
//! target `y` near `f(a)` the auxiliary map `x ↦ x − A(f(x) − y)` is a
//! contractive, nonexpansive or quasi-nonexpansive (or fixed-point-free) self
//! map of a convex body around `a`. Fixed points of the auxiliary map are
//! exactly the preimages of `y` inside the body, so a certificate turns into a
//! local inverse computed by fixed-point iteration.
//!
//! Everything here is pure computation: no IO, deterministic given a seed.
//! The crate is `no_std` and only needs `alloc`.
//!
//! Modules, bottom up:
//!
//! - [`spaces`]: p-norm space models, convex bodies, modulus of convexity.
//! - [`maps`]: map models, Jacobians, directional derivatives, pairing.
//! - [`fixedpoint`]: Banach and Krasnoselskii–Mann iteration, fixed-point-set probes.
//! - [`cert`]: auxiliary maps and the property-A certificate hierarchy.
//! - [`inversion`]: local inverse charts and global probes.
//! - [`implicit`]: implicit-function and level-set ODE solving.
//! - [`suite`]: built-in benchmark problems with independent oracles.
//!
//! ```
//! use localinv_core::inversion::{build_chart, invert, ChartOptions};
//! use localinv_core::maps::{MapModel, Smoothness};
//! use localinv_core::spaces::Space;
//! use localinv_core::{Matrix, Point};
//!
//! let f = MapModel::new("cubic", Space::euclidean(1), Space::euclidean(1), |x| x.map(|t| t * t * t + t))
//!     .with_jacobian(|x| Matrix::from_element(1, 1, 3.0 * x[0] * x[0] + 1.0))
//!     .with_smoothness(Smoothness::C1);
//! let chart = build_chart(&f, &Point::from_element(1, 1.0), &ChartOptions::default())?;
//! let x = invert(&chart, &Point::from_element(1, 2.05))?;
//! assert!((x[0].powi(3) + x[0] - 2.05).abs() < 1e-9);
//! # Ok::<(), localinv_core::Error>(())
//! ```
#![no_std]
#![forbid(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod cert;
pub mod error;
pub mod fixedpoint;
pub mod implicit;
pub mod inversion;
pub mod maps;
pub mod rng;
pub mod spaces;
pub mod suite;
pub mod tolerances;

pub use error::{Error, Result};

/// Points and vectors of every space model.
pub type Point = nalgebra::DVector<f64>;

/// Dense real matrices (Jacobians, auxiliary linear maps).
pub type Matrix = nalgebra::DMatrix<f64>;
