//! Simulation and verification toolkit for heavy-tailed Lévy-driven spatial
//! moving-average random fields.
//!
//! The field under study is the stationary moving average
//! `X_v = ∫ f(v-u) Λ(du)` over `R^d`, driven by a Lévy basis whose jump
//! measure has a regularly varying right tail of index `α > 0`. The crate
//! provides:
//!
//! - [`regvar`]: analytic jump-measure families (tail masses, quantiles,
//!   norming constants) and the regular-variation toolkit,
//! - [`kernels`]: radial integration kernels, suprema over sets and the
//!   tail constant `∫ sup_{v∈B} f^α(v-u) du`,
//! - [`geometry`]: convex bodies, intrinsic volumes, Steiner/tube formulas
//!   and the cube-grid approximation of growing index sets,
//! - [`simulator`]: exact compound-Poisson / Poisson-series simulation of
//!   the field on grids, with suprema and discretization accounting,
//! - [`extremes`]: Monte Carlo experiments checking the supremum-tail
//!   equivalence and the Fréchet extreme-value limit, with diagnostics,
//! - [`config`]: the experiment configuration schema shared by the CLI and
//!   the Python bindings.

pub mod config;
pub mod error;
pub mod extremes;
pub mod geometry;
pub mod kernels;
pub mod regvar;
pub mod rng;
pub mod simulator;
pub mod stats;

pub use error::{Error, Result};
pub use geometry::{ConvexBody, GridScheme, PConvexSet};
pub use kernels::Kernel;
pub use regvar::TailModel;
pub use simulator::{JumpField, SimulationWindow};
