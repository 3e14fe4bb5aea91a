//! Samplers: exponential-integrator solvers, the damped-geometry guided
//! sampler, annealed Langevin and fixed-level Langevin dynamics.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lmgeom::DampedGeometryConfig;
use crate::schedule::{NoiseSchedule, TimestepGrid};

pub mod fixed_level;
pub mod langevin;
pub mod lml;
pub mod solver;

pub use fixed_level::{fixed_level_run, FixedLevelConfig, FixedLevelRun, FixedLevelVariant, Snapshot};
pub use lml::{annealed_langevin_sample, lml_sample, AnnealedConfig};

/// Arithmetic precision of sampler states.
///
/// `F32` rounds every state and every ε̂ to single precision after each
/// operation; internal reductions stay in double.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F64,
    F32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub schedule: NoiseSchedule,
    pub steps: usize,
    /// Solver order, 1 (DDIM) or 2 (two-step multistep).
    pub order: u8,
    /// `None` runs the plain solver.
    pub geometry: Option<DampedGeometryConfig>,
    pub eps_clip: f64,
    pub seed: u64,
    pub chains: usize,
    pub precision: Precision,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            schedule: NoiseSchedule::default(),
            steps: 10,
            order: 2,
            geometry: None,
            eps_clip: 1e-3,
            seed: 0,
            chains: 1,
            precision: Precision::F64,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.steps == 0 {
            return Err(Error::invalid("steps must be at least 1"));
        }
        if !matches!(self.order, 1 | 2) {
            return Err(Error::invalid(format!("unsupported solver order {}", self.order)));
        }
        if self.chains == 0 {
            return Err(Error::invalid("chains must be at least 1"));
        }
        if let Some(g) = &self.geometry {
            g.validate()?;
        }
        Ok(())
    }
}

/// Trajectory of one chain. `states[0]` is `x_N`, `states[N]` is the output;
/// `eps[k]`/`eps_lm[k]` are the raw and guided ε̂ used for the (k+1)-th step.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerRun {
    pub grid: TimestepGrid,
    pub states: Vec<DVector<f64>>,
    pub eps: Vec<DVector<f64>>,
    pub eps_lm: Vec<DVector<f64>>,
    pub seed: u64,
    pub chain: u64,
    /// Wall time of each step, oracle call included.
    pub step_nanos: Vec<u64>,
}

impl SamplerRun {
    pub fn new(grid: TimestepGrid, seed: u64, chain: u64) -> Self {
        let n = grid.steps();
        Self {
            grid,
            states: Vec::with_capacity(n + 1),
            eps: Vec::with_capacity(n),
            eps_lm: Vec::with_capacity(n),
            seed,
            chain,
            step_nanos: Vec::with_capacity(n),
        }
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("sampler run has no states")
    }

    /// Network evaluations spent by the run.
    pub fn nfe(&self) -> usize {
        self.eps.len()
    }
}
