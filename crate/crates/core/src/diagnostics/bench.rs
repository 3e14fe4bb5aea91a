//! Per-step arithmetic overhead of the damped geometry over a plain solver step.
//!
//! Only the sampler arithmetic is timed; ε̂ vectors are fixed random inputs, so
//! the score evaluation is excluded by construction.

use serde::{Deserialize, Serialize};
use std::hint::black_box;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::lmgeom::{lm_guided_eps_into, DampedGeometryConfig};
use crate::rng::{fill_standard_normal, split, AUX_STREAM_BASE};
use crate::samplers::solver::StepCoeffs;
use crate::schedule::{make_grid, NoiseSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverheadReport {
    pub d: usize,
    pub reps: usize,
    /// Median ns per plain exponential-integrator step.
    pub baseline_ns: f64,
    /// Median ns per step with the geometry applied to ε̂ first.
    pub lml_ns: f64,
    pub ratio: f64,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Times `reps` batches of each kernel, interleaved, on one thread.
pub fn overhead_benchmark(d: usize, reps: usize) -> Result<OverheadReport> {
    if d == 0 {
        return Err(Error::invalid("benchmark dimension must be at least 1"));
    }
    if reps == 0 {
        return Err(Error::invalid("benchmark needs at least one repetition"));
    }
    let schedule = NoiseSchedule::default();
    let grid = make_grid(&schedule, 10, 1e-3)?;
    let coeffs = StepCoeffs::new(5, &grid, &schedule)?;
    let cfg = DampedGeometryConfig::default();

    let mut rng = split(0, AUX_STREAM_BASE);
    let mut x = vec![0.0; d];
    let mut cur = vec![0.0; d];
    let mut prev = vec![0.0; d];
    fill_standard_normal(&mut rng, &mut x);
    fill_standard_normal(&mut rng, &mut cur);
    fill_standard_normal(&mut rng, &mut prev);
    let mut guided = vec![0.0; d];
    let mut out = vec![0.0; d];

    let iters = ((1usize << 20) / d).max(4);
    let baseline = |out: &mut [f64]| {
        let t = Instant::now();
        for _ in 0..iters {
            coeffs.apply_into(black_box(&x), black_box(&cur), out);
            black_box(&mut *out);
        }
        t.elapsed().as_nanos() as f64 / iters as f64
    };
    let lml = |out: &mut [f64], guided: &mut [f64]| -> Result<f64> {
        let t = Instant::now();
        for _ in 0..iters {
            lm_guided_eps_into(black_box(&cur), Some(black_box(&prev)), &cfg, guided)?;
            coeffs.apply_into(black_box(&x), guided, out);
            black_box(&mut *out);
        }
        Ok(t.elapsed().as_nanos() as f64 / iters as f64)
    };

    baseline(&mut out);
    lml(&mut out, &mut guided)?;
    let mut b = Vec::with_capacity(reps);
    let mut l = Vec::with_capacity(reps);
    for _ in 0..reps {
        b.push(baseline(&mut out));
        l.push(lml(&mut out, &mut guided)?);
    }
    let baseline_ns = median(&mut b);
    let lml_ns = median(&mut l);
    Ok(OverheadReport {
        d,
        reps,
        baseline_ns,
        lml_ns,
        ratio: lml_ns / baseline_ns,
    })
}
