//! Full samplers: the LML diffusion sampler (with the plain solver as its
//! geometry-free special case) and annealed Langevin.

use nalgebra::DVector;
use rayon::prelude::*;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::lmgeom::lm_guided_eps_into;
use crate::oracle::EpsProvider;
use crate::rng::{fill_standard_normal, split, ChainRng};
use crate::samplers::solver::StepCoeffs;
use crate::samplers::{Precision, SamplerConfig, SamplerRun};
use crate::schedule::make_grid;
use crate::vecops::all_finite;

fn round_f32(v: &mut [f64]) {
    for x in v.iter_mut() {
        *x = *x as f32 as f64;
    }
}

/// One chain of the LML sampler.
///
/// Per step `i = N..1`: evaluate `ε_i`, mix it with `ε_{i+1}`, apply the damped
/// rank-1 geometry and renormalise, then advance with the order-1 or order-2
/// exponential integrator using the guided ε. Without geometry the guided ε is
/// `ε_i` itself and this is the baseline solver.
pub fn lml_sample_chain<P: EpsProvider + ?Sized>(
    cfg: &SamplerConfig,
    provider: &P,
    rng: &mut ChainRng,
    chain: u64,
) -> Result<SamplerRun> {
    cfg.validate()?;
    let d = provider.dim();
    let grid = make_grid(&cfg.schedule, cfg.steps, cfg.eps_clip)?;
    let coeffs = StepCoeffs::for_grid(&grid, &cfg.schedule)?;
    let n = grid.steps();
    let sigma_n = cfg.schedule.sigma(grid.time(n))?;

    let mut x = vec![0.0; d];
    fill_standard_normal(rng, &mut x);
    x.iter_mut().for_each(|v| *v *= sigma_n);
    if cfg.precision == Precision::F32 {
        round_f32(&mut x);
    }

    let mut run = SamplerRun::new(grid.clone(), cfg.seed, chain);
    run.states.push(DVector::from_column_slice(&x));

    let mut eps = vec![0.0; d];
    let mut guided = vec![0.0; d];
    let mut prev_eps: Option<Vec<f64>> = None;
    let mut prev_guided: Option<Vec<f64>> = None;
    let mut next = vec![0.0; d];

    for i in (1..=n).rev() {
        let started = Instant::now();
        let t = grid.time(i);
        provider.eps_into(&x, t, &mut eps)?;
        if cfg.precision == Precision::F32 {
            round_f32(&mut eps);
        }
        match &cfg.geometry {
            Some(g) => lm_guided_eps_into(&eps, prev_eps.as_deref(), g, &mut guided)?,
            None => guided.copy_from_slice(&eps),
        }
        let c = coeffs[i].as_ref().expect("coefficients exist for every step");
        if cfg.order == 2 {
            c.apply2_into(&x, &guided, prev_guided.as_deref(), &mut next);
        } else {
            c.apply_into(&x, &guided, &mut next);
        }
        if cfg.precision == Precision::F32 {
            round_f32(&mut next);
        }
        if !all_finite(&next) {
            return Err(Error::NonFinite("sampler state"));
        }
        std::mem::swap(&mut x, &mut next);

        run.eps.push(DVector::from_column_slice(&eps));
        run.eps_lm.push(DVector::from_column_slice(&guided));
        run.states.push(DVector::from_column_slice(&x));
        run.step_nanos.push(started.elapsed().as_nanos() as u64);

        match prev_eps.as_mut() {
            Some(p) => p.copy_from_slice(&eps),
            None => prev_eps = Some(eps.clone()),
        }
        match prev_guided.as_mut() {
            Some(p) => p.copy_from_slice(&guided),
            None => prev_guided = Some(guided.clone()),
        }
    }
    Ok(run)
}

/// All chains of a configuration; chain `c` draws from `split(seed, c)`.
pub fn lml_sample<P: EpsProvider + ?Sized>(cfg: &SamplerConfig, provider: &P) -> Result<Vec<SamplerRun>> {
    cfg.validate()?;
    (0..cfg.chains as u64)
        .into_par_iter()
        .map(|c| lml_sample_chain(cfg, provider, &mut split(cfg.seed, c), c))
        .collect()
}

/// Annealed Langevin settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnealedConfig {
    /// Langevin updates per noise level.
    pub inner_steps: usize,
    /// Step size at the top level; `None` uses `2e-5 · σ_N² / σ_0²`, i.e. a
    /// step of `2e-5` at the smallest level.
    pub step_scale: Option<f64>,
}

impl Default for AnnealedConfig {
    fn default() -> Self {
        Self {
            inner_steps: 1,
            step_scale: None,
        }
    }
}

/// One chain of annealed Langevin.
///
/// Starting from `x_N ~ N(0, σ_N² I)`, visits the levels `t_{N−1}, …, t_0` and
/// runs `K` Langevin updates at each with step `ε₀ σ_i² / σ_N²`.
pub fn annealed_langevin_chain<P: EpsProvider + ?Sized>(
    cfg: &SamplerConfig,
    annealed: &AnnealedConfig,
    provider: &P,
    rng: &mut ChainRng,
    chain: u64,
) -> Result<SamplerRun> {
    cfg.validate()?;
    if annealed.inner_steps == 0 {
        return Err(Error::invalid("annealed Langevin needs at least one inner step per level"));
    }
    let d = provider.dim();
    let grid = make_grid(&cfg.schedule, cfg.steps, cfg.eps_clip)?;
    let n = grid.steps();
    let sigma_n = cfg.schedule.sigma(grid.time(n))?;
    let sigma_0 = cfg.schedule.sigma(grid.time(0))?;
    let eps0 = annealed
        .step_scale
        .unwrap_or(2e-5 * sigma_n * sigma_n / (sigma_0 * sigma_0));
    if !(eps0 > 0.0 && eps0.is_finite()) {
        return Err(Error::invalid("annealed step scale must be positive"));
    }

    let mut x = vec![0.0; d];
    fill_standard_normal(rng, &mut x);
    x.iter_mut().for_each(|v| *v *= sigma_n);

    let mut run = SamplerRun::new(grid.clone(), cfg.seed, chain);
    run.states.push(DVector::from_column_slice(&x));
    let mut eps = vec![0.0; d];
    let mut xi = vec![0.0; d];

    for i in (0..n).rev() {
        let started = Instant::now();
        let t = grid.time(i);
        let sigma = cfg.schedule.sigma(t)?;
        let h = eps0 * sigma * sigma / (sigma_n * sigma_n);
        let noise = (2.0 * h).sqrt();
        for _ in 0..annealed.inner_steps {
            provider.eps_into(&x, t, &mut eps)?;
            fill_standard_normal(rng, &mut xi);
            // score = −ε/σ
            for a in 0..d {
                x[a] += -h * eps[a] / sigma + noise * xi[a];
            }
        }
        if !all_finite(&x) {
            return Err(Error::NonFinite("annealed Langevin state"));
        }
        run.eps.push(DVector::from_column_slice(&eps));
        run.eps_lm.push(DVector::from_column_slice(&eps));
        run.states.push(DVector::from_column_slice(&x));
        run.step_nanos.push(started.elapsed().as_nanos() as u64);
    }
    Ok(run)
}

pub fn annealed_langevin_sample<P: EpsProvider + ?Sized>(
    cfg: &SamplerConfig,
    annealed: &AnnealedConfig,
    provider: &P,
) -> Result<Vec<SamplerRun>> {
    cfg.validate()?;
    (0..cfg.chains as u64)
        .into_par_iter()
        .map(|c| annealed_langevin_chain(cfg, annealed, provider, &mut split(cfg.seed, c), c))
        .collect()
}

/// Step sizes used at each level, in visiting order.
pub fn annealed_step_sizes(cfg: &SamplerConfig, annealed: &AnnealedConfig) -> Result<Vec<f64>> {
    let grid = make_grid(&cfg.schedule, cfg.steps, cfg.eps_clip)?;
    let n = grid.steps();
    let sigma_n = cfg.schedule.sigma(grid.time(n))?;
    let sigma_0 = cfg.schedule.sigma(grid.time(0))?;
    let eps0 = annealed
        .step_scale
        .unwrap_or(2e-5 * sigma_n * sigma_n / (sigma_0 * sigma_0));
    (0..n)
        .rev()
        .map(|i| Ok(eps0 * cfg.schedule.sigma(grid.time(i))?.powi(2) / (sigma_n * sigma_n)))
        .collect()
}
