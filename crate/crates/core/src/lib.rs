//! Numerical laboratory for front propagation in random space-time media.
//!
//! The crate builds stationary random environments with an exactly finite
//! temporal range of dependence, evolves KPP reaction-advection-diffusion
//! fronts and level-set G-equation fronts through them with monotone
//! explicit schemes, measures travel/arrival times, estimates the
//! normalized subadditive limit of those times, sweeps directions to
//! assemble the asymptotic spreading shape (Wulff shape), and runs scaled
//! experiments that compare solutions against the homogenized limit.
//!
//! All randomness is hash-derived from explicit 64-bit seeds; every result
//! is reproducible from `(spec, seed)` alone.

pub mod env;
pub mod error;
pub mod geq;
pub mod grid;
pub mod homog;
pub mod noise;
pub mod pde;
pub mod scalar;
pub mod stats;
pub mod subadd;
pub mod ttime;
pub mod wulff;

pub use env::{EnvMode, EnvironmentRealization, EnvironmentSpec, ReactionForm, ReactionSpec};
pub use error::{CoreError, Result};
pub use grid::{Grid, RegionMask};
pub use scalar::Scalar;

/// Default scalar type for experiments.
pub type Real = f64;

/// `f64` aliases for the scalar-generic building blocks.
pub type GridF64 = grid::Grid<f64>;
pub type EnvF64 = env::EnvironmentRealization<f64>;
pub type SolutionF64 = pde::SolutionField<f64>;
pub type LevelFunctionF64 = geq::LevelFunction<f64>;

/// `f32` aliases, mostly exercised by tests to keep the kernels
/// scalar-agnostic.
pub type GridF32 = grid::Grid<f32>;
pub type EnvF32 = env::EnvironmentRealization<f32>;
pub type SolutionF32 = pde::SolutionField<f32>;
