//! Ensembles of Langevin-type chains at a fixed noise level, used to probe
//! stationarity and convergence rates of the damped dynamics.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{EpsProvider, GaussianMixtureOracle, NoiseLevel, DENSE_DIM_CAP};
use crate::rng::{fill_standard_normal, split, standard_normal, ChainRng};
use crate::samplers::langevin::{preconditioner_divergence, Preconditioner};
use crate::vecops::all_finite;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixedLevelVariant {
    PlainLangevin,
    Newton,
    DampedExact,
    DampedLm,
    DampedExactCorrected,
}

impl FixedLevelVariant {
    pub fn name(&self) -> &'static str {
        match self {
            FixedLevelVariant::PlainLangevin => "plain-langevin",
            FixedLevelVariant::Newton => "newton",
            FixedLevelVariant::DampedExact => "damped-exact",
            FixedLevelVariant::DampedLm => "damped-lm",
            FixedLevelVariant::DampedExactCorrected => "damped-exact-corrected",
        }
    }

    fn needs_dense(&self) -> bool {
        !matches!(self, FixedLevelVariant::PlainLangevin)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedLevelConfig {
    pub t: f64,
    pub h: f64,
    pub n_steps: usize,
    pub variant: FixedLevelVariant,
    pub lambda: f64,
    pub chains: usize,
    pub seed: u64,
    /// Chains start at `init_mean + init_std · ξ`.
    pub init_mean: Vec<f64>,
    pub init_std: f64,
    /// Steps (0 = initial state) at which the whole ensemble is recorded.
    pub snapshot_steps: Vec<usize>,
}

impl FixedLevelConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::invalid("fixed-level step size must be positive"));
        }
        if !(self.h * self.n_steps as f64).is_finite() {
            return Err(Error::invalid("fixed-level horizon is not finite"));
        }
        if self.chains == 0 {
            return Err(Error::invalid("fixed-level run needs at least one chain"));
        }
        if self.init_mean.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: self.init_mean.len(),
            });
        }
        if !(self.init_std >= 0.0) {
            return Err(Error::invalid("init_std must be non-negative"));
        }
        if self.variant.needs_dense() && dim > DENSE_DIM_CAP {
            return Err(Error::TooLarge {
                dim,
                cap: DENSE_DIM_CAP,
            });
        }
        match self.variant {
            FixedLevelVariant::DampedLm if !(self.lambda > 0.0) => {
                return Err(Error::invalid("damped-lm needs lambda > 0"))
            }
            FixedLevelVariant::DampedExact | FixedLevelVariant::DampedExactCorrected
                if !(self.lambda >= 0.0) =>
            {
                return Err(Error::invalid("damping must be non-negative"))
            }
            _ => {}
        }
        if self.snapshot_steps.iter().any(|&s| s > self.n_steps) {
            return Err(Error::invalid("snapshot step beyond n_steps"));
        }
        if self.snapshot_steps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("snapshot steps must be strictly increasing"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    /// Row-major `chains × d`.
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedLevelRun {
    pub dim: usize,
    pub chains: usize,
    pub snapshots: Vec<Snapshot>,
}

enum Dynamics {
    /// Single-component target with a constant preconditioner: the score is
    /// affine, so the Euler step is `x' = A x + b + C ξ` (row-major `A`, `C`).
    Affine { a: Vec<f64>, b: Vec<f64>, c: Vec<f64> },
    Plain,
    /// State-independent preconditioner (single-component target).
    Constant(Preconditioner),
    /// Recomputed at every step.
    Varying,
}

#[inline]
fn matvec_into(m: &DMatrix<f64>, v: &[f64], out: &mut [f64]) {
    let d = v.len();
    for (a, o) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for b in 0..d {
            s += m[(a, b)] * v[b];
        }
        *o = s;
    }
}

struct ChainKernel<'a> {
    oracle: &'a GaussianMixtureOracle,
    lvl: NoiseLevel,
    cfg: &'a FixedLevelConfig,
    dynamics: &'a Dynamics,
}

impl ChainKernel<'_> {
    fn varying_preconditioner(&self, x: &[f64], score: &[f64]) -> Result<(Preconditioner, Option<DVector<f64>>)> {
        let cfg = self.cfg;
        match cfg.variant {
            FixedLevelVariant::DampedLm => {
                let eps: Vec<f64> = score.iter().map(|s| -self.lvl.sigma * s).collect();
                Ok((Preconditioner::rank1_damped(&eps, self.lvl.sigma, cfg.lambda)?, None))
            }
            FixedLevelVariant::Newton => {
                let g = self.oracle.neg_hessian_at(&self.lvl, x);
                Ok((Preconditioner::from_damped(&g, 0.0, true)?, None))
            }
            FixedLevelVariant::DampedExact => {
                let g = self.oracle.neg_hessian_at(&self.lvl, x);
                Ok((Preconditioner::from_damped(&g, cfg.lambda, false)?, None))
            }
            FixedLevelVariant::DampedExactCorrected => {
                let g = self.oracle.neg_hessian_at(&self.lvl, x);
                let pc = Preconditioner::from_damped(&g, cfg.lambda, false)?;
                let third = self.oracle.log_density_third_at(&self.lvl, x);
                let div = preconditioner_divergence(&pc.p, &third);
                Ok((pc, Some(div)))
            }
            FixedLevelVariant::PlainLangevin => Ok((Preconditioner::identity(x.len()), None)),
        }
    }

    /// Advances `x` by `steps` Euler–Maruyama steps.
    fn advance(&self, x: &mut [f64], steps: usize, rng: &mut ChainRng, buf: &mut Buffers) -> Result<()> {
        let d = x.len();
        let h = self.cfg.h;
        let noise_scale = (2.0 * h).sqrt();
        match self.dynamics {
            Dynamics::Affine { a, b, c } if d == 1 => {
                let (a, b, c) = (a[0], b[0], c[0]);
                let mut v = x[0];
                for _ in 0..steps {
                    v = a * v + b + c * standard_normal(rng);
                }
                x[0] = v;
            }
            Dynamics::Affine { a, b, c } => {
                for _ in 0..steps {
                    fill_standard_normal(rng, &mut buf.xi);
                    buf.drift.copy_from_slice(b);
                    for (r, o) in buf.drift.iter_mut().enumerate() {
                        let (ar, cr) = (&a[r * d..(r + 1) * d], &c[r * d..(r + 1) * d]);
                        for k in 0..d {
                            *o += ar[k] * x[k] + cr[k] * buf.xi[k];
                        }
                    }
                    x.copy_from_slice(&buf.drift);
                }
            }
            Dynamics::Plain => {
                for _ in 0..steps {
                    self.oracle.score_at(&self.lvl, x, &mut buf.scratch, &mut buf.score);
                    fill_standard_normal(rng, &mut buf.xi);
                    for a in 0..d {
                        x[a] += h * buf.score[a] + noise_scale * buf.xi[a];
                    }
                }
            }
            Dynamics::Constant(pc) => {
                for _ in 0..steps {
                    self.oracle.score_at(&self.lvl, x, &mut buf.scratch, &mut buf.score);
                    fill_standard_normal(rng, &mut buf.xi);
                    matvec_into(&pc.p, &buf.score, &mut buf.drift);
                    matvec_into(&pc.sqrt, &buf.xi, &mut buf.noise);
                    for a in 0..d {
                        x[a] += h * buf.drift[a] + noise_scale * buf.noise[a];
                    }
                }
            }
            Dynamics::Varying => {
                for _ in 0..steps {
                    self.oracle.score_at(&self.lvl, x, &mut buf.scratch, &mut buf.score);
                    fill_standard_normal(rng, &mut buf.xi);
                    let (pc, div) = self.varying_preconditioner(x, &buf.score)?;
                    matvec_into(&pc.p, &buf.score, &mut buf.drift);
                    if let Some(div) = div {
                        for a in 0..d {
                            buf.drift[a] += div[a];
                        }
                    }
                    matvec_into(&pc.sqrt, &buf.xi, &mut buf.noise);
                    for a in 0..d {
                        x[a] += h * buf.drift[a] + noise_scale * buf.noise[a];
                    }
                }
            }
        }
        if !all_finite(x) {
            return Err(Error::NonFinite("fixed-level chain"));
        }
        Ok(())
    }

    fn run(&self, chain: u64) -> Result<Vec<f64>> {
        let cfg = self.cfg;
        let d = self.oracle.dim();
        let mut rng = split(cfg.seed, chain);
        let mut x = vec![0.0; d];
        fill_standard_normal(&mut rng, &mut x);
        for (v, m) in x.iter_mut().zip(&cfg.init_mean) {
            *v = m + cfg.init_std * *v;
        }
        let mut buf = Buffers {
            scratch: vec![0.0; self.oracle.components()],
            score: vec![0.0; d],
            drift: vec![0.0; d],
            xi: vec![0.0; d],
            noise: vec![0.0; d],
        };
        let mut out = Vec::with_capacity(cfg.snapshot_steps.len() * d);
        let mut done = 0;
        for &step in &cfg.snapshot_steps {
            self.advance(&mut x, step - done, &mut rng, &mut buf)?;
            done = step;
            out.extend_from_slice(&x);
        }
        self.advance(&mut x, cfg.n_steps - done, &mut rng, &mut buf)?;
        Ok(out)
    }
}

struct Buffers {
    scratch: Vec<f64>,
    score: Vec<f64>,
    drift: Vec<f64>,
    xi: Vec<f64>,
    noise: Vec<f64>,
}

/// Folds the constant preconditioner and the affine score `−(x − αμ)/σ²` into
/// one affine map.
fn affine_step(dynamics: Dynamics, lvl: &NoiseLevel, center: &[f64], h: f64) -> Dynamics {
    let d = center.len();
    let pc = match dynamics {
        Dynamics::Plain => Preconditioner::identity(d),
        Dynamics::Constant(pc) => pc,
        other => return other,
    };
    let k = h / (lvl.sigma * lvl.sigma);
    let m = DVector::from_iterator(d, center.iter().map(|y| lvl.alpha * y));
    let a = DMatrix::identity(d, d) - &pc.p * k;
    let b = &pc.p * m * k;
    let c = &pc.sqrt * (2.0 * h).sqrt();
    let row_major = |m: &DMatrix<f64>| m.transpose().as_slice().to_vec();
    Dynamics::Affine {
        a: row_major(&a),
        b: b.as_slice().to_vec(),
        c: row_major(&c),
    }
}

/// Evolves `cfg.chains` independent chains at fixed `t` and records snapshots.
/// Chain `c` uses the stream `split(seed, c)`; results do not depend on the
/// number of worker threads.
pub fn fixed_level_run(cfg: &FixedLevelConfig, oracle: &GaussianMixtureOracle) -> Result<FixedLevelRun> {
    let d = oracle.dim();
    cfg.validate(d)?;
    let lvl = oracle.level(cfg.t)?;
    let dynamics = match cfg.variant {
        FixedLevelVariant::PlainLangevin => Dynamics::Plain,
        FixedLevelVariant::DampedLm => Dynamics::Varying,
        FixedLevelVariant::Newton
        | FixedLevelVariant::DampedExact
        | FixedLevelVariant::DampedExactCorrected
            if oracle.has_constant_hessian() =>
        {
            let lambda = if cfg.variant == FixedLevelVariant::Newton {
                0.0
            } else {
                cfg.lambda
            };
            let g = oracle.neg_hessian_at(&lvl, &cfg.init_mean);
            // The divergence term vanishes for a constant preconditioner.
            Dynamics::Constant(Preconditioner::from_damped(
                &g,
                lambda,
                cfg.variant == FixedLevelVariant::Newton,
            )?)
        }
        _ => Dynamics::Varying,
    };
    let dynamics = if oracle.components() == 1 {
        affine_step(dynamics, &lvl, oracle.center(0), cfg.h)
    } else {
        dynamics
    };
    let kernel = ChainKernel {
        oracle,
        lvl,
        cfg,
        dynamics: &dynamics,
    };
    let per_chain: Vec<Vec<f64>> = (0..cfg.chains as u64)
        .into_par_iter()
        .map(|c| kernel.run(c))
        .collect::<Result<_>>()?;

    let snapshots = cfg
        .snapshot_steps
        .iter()
        .enumerate()
        .map(|(k, &step)| {
            let mut samples = Vec::with_capacity(cfg.chains * d);
            for chain in &per_chain {
                samples.extend_from_slice(&chain[k * d..(k + 1) * d]);
            }
            Snapshot {
                step,
                time: step as f64 * cfg.h,
                samples,
            }
        })
        .collect();
    Ok(FixedLevelRun {
        dim: d,
        chains: cfg.chains,
        snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplers::langevin::{damped_step, langevin_step, GeometrySource};
    use crate::schedule::NoiseSchedule;

    fn unit_gaussian() -> GaussianMixtureOracle {
        GaussianMixtureOracle::uniform(vec![vec![0.0]], NoiseSchedule::ve(0.01, 1.0)).unwrap()
    }

    fn base(variant: FixedLevelVariant, lambda: f64) -> FixedLevelConfig {
        FixedLevelConfig {
            t: 1.0,
            h: 0.01,
            n_steps: 50,
            variant,
            lambda,
            chains: 4,
            seed: 7,
            init_mean: vec![0.5],
            init_std: 1.0,
            snapshot_steps: vec![0, 25, 50],
        }
    }

    #[test]
    fn fast_path_matches_step_functions() {
        let o = unit_gaussian();
        let score = |x: &[f64]| o.score(x, 1.0);
        let hess = |x: &[f64]| o.hessian_exact(x, 1.0);
        for (variant, lambda) in [
            (FixedLevelVariant::PlainLangevin, 0.0),
            (FixedLevelVariant::DampedExact, 1.0),
            (FixedLevelVariant::DampedExact, 4.0),
        ] {
            let cfg = base(variant, lambda);
            let run = fixed_level_run(&cfg, &o).unwrap();
            let mut rng = split(7, 2);
            let mut x = vec![0.0];
            fill_standard_normal(&mut rng, &mut x);
            x[0] += 0.5;
            let geo = GeometrySource::ExactHessian {
                hessian: &hess,
                third: None,
            };
            for _ in 0..50 {
                let next = match variant {
                    FixedLevelVariant::PlainLangevin => langevin_step(&x, score, 0.01, &mut rng),
                    _ => damped_step(&x, score, &geo, lambda, 0.01, &mut rng, false),
                };
                x = next.unwrap().as_slice().to_vec();
            }
            assert!((run.snapshots[2].samples[2] - x[0]).abs() < 1e-12);
            assert_eq!(run.snapshots[0].samples.len(), 4);
            assert!((run.snapshots[1].time - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn varying_paths_run() {
        let o = GaussianMixtureOracle::uniform(vec![vec![-1.0, 0.0], vec![1.0, 0.5]], NoiseSchedule::ve(0.01, 1.0))
            .unwrap();
        for (variant, lambda) in [
            (FixedLevelVariant::DampedLm, 1.0),
            (FixedLevelVariant::DampedExact, 2.0),
            (FixedLevelVariant::DampedExactCorrected, 2.0),
            (FixedLevelVariant::PlainLangevin, 0.0),
        ] {
            let mut cfg = base(variant, lambda);
            cfg.init_mean = vec![0.2, 0.1];
            let run = fixed_level_run(&cfg, &o).unwrap();
            assert!(run.snapshots.iter().all(|s| all_finite(&s.samples)));
        }
    }

    #[test]
    fn newton_refuses_mixture_outside_log_concave_region() {
        let o = GaussianMixtureOracle::uniform(vec![vec![-3.0], vec![3.0]], NoiseSchedule::ve(0.01, 1.0)).unwrap();
        let mut cfg = base(FixedLevelVariant::Newton, 0.0);
        cfg.init_mean = vec![0.0];
        cfg.init_std = 0.0;
        assert!(matches!(fixed_level_run(&cfg, &o), Err(Error::NotLogConcave { .. })));
    }

    #[test]
    fn config_validation() {
        let o = unit_gaussian();
        let mut c = base(FixedLevelVariant::DampedLm, 0.0);
        assert!(fixed_level_run(&c, &o).is_err());
        c.lambda = 1.0;
        c.snapshot_steps = vec![60];
        assert!(fixed_level_run(&c, &o).is_err());
        c.snapshot_steps = vec![10, 5];
        assert!(fixed_level_run(&c, &o).is_err());
        c.snapshot_steps = vec![];
        c.h = 0.0;
        assert!(fixed_level_run(&c, &o).is_err());
    }

    #[test]
    fn plain_langevin_stationary_variance() {
        // Euler chain on N(0,1): AR(1) with coefficient (1 − h); stationary
        // variance 2h / (1 − (1 − h)²).
        let o = unit_gaussian();
        let h = 0.05;
        let cfg = FixedLevelConfig {
            t: 1.0,
            h,
            n_steps: 400,
            variant: FixedLevelVariant::PlainLangevin,
            lambda: 0.0,
            chains: 20_000,
            seed: 1,
            init_mean: vec![0.0],
            init_std: 0.0,
            snapshot_steps: vec![400],
        };
        let run = fixed_level_run(&cfg, &o).unwrap();
        let s = &run.snapshots[0].samples;
        let var = s.iter().map(|v| v * v).sum::<f64>() / s.len() as f64;
        let exact = 2.0 * h / (1.0 - (1.0 - h) * (1.0 - h));
        assert!((var - exact).abs() < 0.04 * exact, "{var} vs {exact}");
    }
}
