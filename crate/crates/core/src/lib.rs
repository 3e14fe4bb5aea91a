//! Levenberg–Marquardt–Langevin (LML) diffusion sampling against analytic
//! Gaussian-mixture score oracles.
//!
//! The crate is organised bottom-up:
//!
//! - [`schedule`]: noise schedules `(α_t, σ_t)`, log-SNR, VP drift/diffusion and timestep grids.
//! - [`oracle`]: a point-mass mixture whose diffused marginal, score, ε and Hessian are closed-form.
//! - [`lmgeom`]: the damped rank-1 Hessian geometry applied to ε in `O(d)` via Sherman–Morrison.
//! - [`samplers`]: Langevin / Newton / damped dynamics, exponential-integrator solvers,
//!   annealed Langevin and the full LML sampler.
//! - [`diagnostics`]: finite differences, Hessian error bounds, divergence estimators,
//!   decay fits and the overhead benchmark.
//! - [`cli`]: JSON-configured experiment commands with deterministic CSV/JSON outputs.

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod lmgeom;
pub mod oracle;
pub mod rng;
pub mod samplers;
pub mod schedule;
pub(crate) mod vecops;

pub use error::{Error, Result};
pub use lmgeom::{DampedGeometryConfig, GeometryState, Rank1Hessian};
pub use oracle::{EpsProvider, GaussianMixtureOracle};
pub use schedule::{NoiseSchedule, ScheduleKind, TimestepGrid};
