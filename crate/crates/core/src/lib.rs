//! Asymptotic directional conductivity (ADC) of periodic shell lattices.
//!
//! A shell lattice is a periodic middle surface in the flat torus
//! `[-1,1]^3` thickened by `±ε` along its normal. As `ε → 0` its effective
//! conductivity divided by the solid volume fraction converges to a
//! symmetric 3×3 matrix `k_A` that depends only on the middle surface.
//! This crate evaluates `k_A` on triangle meshes, optimizes surfaces
//! against objectives built from it, and carries two independent reference
//! computations on surfaces of revolution.
//!
//! Module map:
//! - [`mesh`]: periodic triangle meshes, geometry caches, remeshing, surgery
//! - [`adc`]: the ADC matrix, directional values and bounds
//! - [`optimize`]: shape gradients, preconditioning, line search, pipeline
//! - [`revolve`]: closed-form and semi-analytic oracles for revolution surfaces
//! - [`surfgen`]: TPMS approximants, planes, tubes and random perturbations
//! - [`study`]: convergence studies and log-log slope fits

pub mod adc;
pub mod error;
pub mod linalg;
pub mod mesh;
pub mod optimize;
pub mod revolve;
pub mod study;
pub mod surfgen;

pub use adc::{AdcEvaluator, AdcResult};
pub use error::{Error, Result};
pub use mesh::{GeometryCache, PeriodicSurfaceMesh};

/// Edge length of the periodic cell `Y = [-1,1]^3`.
pub const PERIOD: f64 = 2.0;

/// Volume of the periodic cell.
pub const CELL_VOLUME: f64 = PERIOD * PERIOD * PERIOD;
