//! Closed-form score oracle for point-mass mixture data.
//!
//! With data `p_0 = Σ_i w_i δ_{y_i}` and forward conditionals
//! `N(α_t y, σ_t² I)`, the diffused marginal is a Gaussian mixture and every
//! derivative of its log-density is a posterior moment of `y`:
//!
//! ```text
//! w̃_i(x,t) ∝ w_i exp(−‖x − α_t y_i‖² / 2σ_t²)
//! ∇ log p_t   = −(x − α_t ȳ) / σ_t²,                     ȳ = Σ w̃_i y_i
//! ∇² log p_t  = −I/σ_t² + (α_t²/σ_t⁴) Cov_w̃[y]
//! ∂³ log p_t  = (α_t³/σ_t⁶) E_w̃[(y−ȳ)⊗(y−ȳ)⊗(y−ȳ)]
//! ```
//!
//! The oracle is exact, so it stands in for a trained noise predictor with
//! zero approximation error.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::rng;
use crate::schedule::NoiseSchedule;
use crate::vecops::{all_finite, log_sum_exp};

/// Largest dimension for which dense Hessians are materialised.
pub const DENSE_DIM_CAP: usize = 64;

/// Anything that predicts the noise `ε(x, t) = −σ_t ∇ log p_t(x)`.
///
/// Implementations must be deterministic in `(x, t)` and return finite
/// values for finite inputs.
pub trait EpsProvider: Sync {
    fn dim(&self) -> usize;

    fn eps_into(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<()>;

    fn eps(&self, x: &[f64], t: f64) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.dim());
        self.eps_into(x, t, out.as_mut_slice())?;
        Ok(out)
    }
}

/// `(t, α_t, σ_t)` resolved once so hot loops avoid re-evaluating the schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseLevel {
    pub t: f64,
    pub alpha: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone)]
pub struct GaussianMixtureOracle {
    schedule: NoiseSchedule,
    dim: usize,
    /// Row-major `k × d`.
    centers: Vec<f64>,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    diameter: f64,
}

impl GaussianMixtureOracle {
    pub fn new(centers: Vec<Vec<f64>>, weights: Vec<f64>, schedule: NoiseSchedule) -> Result<Self> {
        schedule.validate()?;
        let k = centers.len();
        if k == 0 {
            return Err(Error::invalid("mixture needs at least one center"));
        }
        if weights.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: weights.len(),
            });
        }
        let dim = centers[0].len();
        if dim == 0 {
            return Err(Error::invalid("centers must have positive dimension"));
        }
        for c in &centers {
            if c.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: c.len(),
                });
            }
            if !all_finite(c) {
                return Err(Error::NonFinite("mixture centers"));
            }
        }
        if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::invalid("mixture weights must be positive and finite"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "mixture weights must sum to 1 (got {total})"
            )));
        }
        let flat: Vec<f64> = centers.iter().flatten().copied().collect();
        let mut diameter: f64 = 0.0;
        for i in 0..k {
            for j in i + 1..k {
                let d2: f64 = (0..dim)
                    .map(|a| (flat[i * dim + a] - flat[j * dim + a]).powi(2))
                    .sum();
                diameter = diameter.max(d2.sqrt());
            }
        }
        Ok(Self {
            schedule,
            dim,
            centers: flat,
            log_weights: weights.iter().map(|w| w.ln()).collect(),
            weights,
            diameter,
        })
    }

    /// Equal-weight mixture.
    pub fn uniform(centers: Vec<Vec<f64>>, schedule: NoiseSchedule) -> Result<Self> {
        let k = centers.len().max(1);
        Self::new(centers, vec![1.0 / k as f64; k], schedule)
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn center(&self, i: usize) -> &[f64] {
        &self.centers[i * self.dim..(i + 1) * self.dim]
    }

    /// Dataset diameter `max_{i,j} ‖y_i − y_j‖`.
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// A single component makes the diffused Hessian independent of `x`.
    pub fn has_constant_hessian(&self) -> bool {
        self.components() == 1
    }

    pub fn level(&self, t: f64) -> Result<NoiseLevel> {
        let (alpha, sigma) = self.schedule.alpha_sigma(t)?;
        if sigma <= 0.0 {
            return Err(Error::ZeroSigma(t));
        }
        Ok(NoiseLevel { t, alpha, sigma })
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Writes unnormalised log-responsibilities into `out` and returns their log-sum-exp.
    fn logits_into(&self, lvl: &NoiseLevel, x: &[f64], out: &mut [f64]) -> f64 {
        let d = self.dim;
        let inv2s2 = 0.5 / (lvl.sigma * lvl.sigma);
        for (i, o) in out.iter_mut().enumerate() {
            let c = &self.centers[i * d..(i + 1) * d];
            let mut r2 = 0.0;
            for a in 0..d {
                let diff = x[a] - lvl.alpha * c[a];
                r2 += diff * diff;
            }
            *o = self.log_weights[i] - r2 * inv2s2;
        }
        log_sum_exp(out)
    }

    /// Posterior responsibilities at a resolved level, written into `w`.
    pub fn posterior_at(&self, lvl: &NoiseLevel, x: &[f64], w: &mut [f64]) {
        if w.len() == 1 {
            w[0] = 1.0;
            return;
        }
        let lse = self.logits_into(lvl, x, w);
        for v in w.iter_mut() {
            *v = (*v - lse).exp();
        }
    }

    /// Posterior mean `ȳ(x, t) = E[y | x_t = x]`; `scratch` holds `K` weights.
    pub fn posterior_mean_at(&self, lvl: &NoiseLevel, x: &[f64], scratch: &mut [f64], out: &mut [f64]) {
        self.posterior_at(lvl, x, scratch);
        self.posterior_mean_into(scratch, out);
    }

    pub fn posterior_weights(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let lvl = self.level(t)?;
        let mut w = vec![0.0; self.components()];
        self.posterior_at(&lvl, x, &mut w);
        Ok(w)
    }

    /// Posterior mean `ȳ`, given responsibilities.
    fn posterior_mean_into(&self, w: &[f64], out: &mut [f64]) {
        let d = self.dim;
        out.iter_mut().for_each(|v| *v = 0.0);
        for (i, &wi) in w.iter().enumerate() {
            let c = &self.centers[i * d..(i + 1) * d];
            for a in 0..d {
                out[a] += wi * c[a];
            }
        }
    }

    pub fn diffused_logpdf(&self, x: &[f64], t: f64) -> Result<f64> {
        self.check_dim(x)?;
        let lvl = self.level(t)?;
        let mut buf = vec![0.0; self.components()];
        let lse = self.logits_into(&lvl, x, &mut buf);
        let d = self.dim as f64;
        Ok(lse - 0.5 * d * (2.0 * PI).ln() - d * lvl.sigma.ln())
    }

    /// Score at a resolved level; `scratch` must hold one slot per component.
    pub fn score_at(&self, lvl: &NoiseLevel, x: &[f64], scratch: &mut [f64], out: &mut [f64]) {
        self.posterior_at(lvl, x, scratch);
        self.posterior_mean_into(scratch, out);
        let inv_s2 = 1.0 / (lvl.sigma * lvl.sigma);
        for a in 0..self.dim {
            out[a] = -(x[a] - lvl.alpha * out[a]) * inv_s2;
        }
    }

    pub fn score(&self, x: &[f64], t: f64) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        let lvl = self.level(t)?;
        let mut scratch = vec![0.0; self.components()];
        let mut out = DVector::zeros(self.dim);
        self.score_at(&lvl, x, &mut scratch, out.as_mut_slice());
        if !all_finite(out.as_slice()) {
            return Err(Error::NonFinite("score"));
        }
        Ok(out)
    }

    /// `−∇² log p_t`, i.e. `I/σ² − (α²/σ⁴) Cov_w̃[y]`, at a resolved level.
    pub fn neg_hessian_at(&self, lvl: &NoiseLevel, x: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        let mut w = vec![0.0; self.components()];
        self.posterior_at(lvl, x, &mut w);
        let mut mean = vec![0.0; d];
        self.posterior_mean_into(&w, &mut mean);
        let s2 = lvl.sigma * lvl.sigma;
        let coef = lvl.alpha * lvl.alpha / (s2 * s2);
        let mut m = DMatrix::identity(d, d) / s2;
        if self.components() > 1 {
            for (i, &wi) in w.iter().enumerate() {
                let c = self.center(i);
                for a in 0..d {
                    let da = c[a] - mean[a];
                    for b in 0..d {
                        m[(a, b)] -= coef * wi * da * (c[b] - mean[b]);
                    }
                }
            }
        }
        m
    }

    /// Dense `∇² log p_t(x)`; capped at [`DENSE_DIM_CAP`].
    pub fn hessian_exact(&self, x: &[f64], t: f64) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        self.check_dense()?;
        let lvl = self.level(t)?;
        Ok(-self.neg_hessian_at(&lvl, x))
    }

    /// Third derivative of `log p_t` as `d` slices: `slices[k][(a, b)] = ∂³ log p / ∂x_a ∂x_b ∂x_k`.
    pub fn log_density_third_at(&self, lvl: &NoiseLevel, x: &[f64]) -> Vec<DMatrix<f64>> {
        let d = self.dim;
        let mut slices = vec![DMatrix::zeros(d, d); d];
        if self.components() == 1 {
            return slices;
        }
        let mut w = vec![0.0; self.components()];
        self.posterior_at(lvl, x, &mut w);
        let mut mean = vec![0.0; d];
        self.posterior_mean_into(&w, &mut mean);
        let s2 = lvl.sigma * lvl.sigma;
        let coef = lvl.alpha.powi(3) / (s2 * s2 * s2);
        let mut dev = vec![0.0; d];
        for (i, &wi) in w.iter().enumerate() {
            let c = self.center(i);
            for a in 0..d {
                dev[a] = c[a] - mean[a];
            }
            for (k, slice) in slices.iter_mut().enumerate() {
                let s = coef * wi * dev[k];
                for a in 0..d {
                    for b in 0..d {
                        slice[(a, b)] += s * dev[a] * dev[b];
                    }
                }
            }
        }
        slices
    }

    pub fn check_dense(&self) -> Result<()> {
        if self.dim > DENSE_DIM_CAP {
            return Err(Error::TooLarge {
                dim: self.dim,
                cap: DENSE_DIM_CAP,
            });
        }
        Ok(())
    }

    /// Draws `y ~ p_0`.
    pub fn sample_data<R: Rng + ?Sized>(&self, rng: &mut R) -> &[f64] {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let k = self.components();
        for i in 0..k {
            acc += self.weights[i];
            if u < acc {
                return self.center(i);
            }
        }
        self.center(k - 1)
    }

    /// Draws `x_t ~ p_t` into `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, lvl: &NoiseLevel, rng: &mut R, out: &mut [f64]) {
        let y = self.sample_data(rng).to_vec();
        for a in 0..self.dim {
            out[a] = lvl.alpha * y[a] + lvl.sigma * rng::standard_normal(rng);
        }
    }

    /// `n` draws from `p_t`, row-major `n × d`.
    pub fn sample<R: Rng + ?Sized>(&self, t: f64, n: usize, rng: &mut R) -> Result<Vec<f64>> {
        let lvl = self.level(t)?;
        let mut out = vec![0.0; n * self.dim];
        for row in out.chunks_mut(self.dim) {
            self.sample_into(&lvl, rng, row);
        }
        Ok(out)
    }

    /// CDF of the one-dimensional diffused marginal.
    pub fn cdf_1d(&self, x: f64, t: f64) -> Result<f64> {
        if self.dim != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: self.dim,
            });
        }
        let lvl = self.level(t)?;
        Ok(self
            .weights
            .iter()
            .zip(&self.centers)
            .map(|(w, y)| w * normal_cdf((x - lvl.alpha * y) / lvl.sigma))
            .sum())
    }
}

impl EpsProvider for GaussianMixtureOracle {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eps_into(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        self.check_dim(x)?;
        let lvl = self.level(t)?;
        let mut scratch = vec![0.0; self.components()];
        self.score_at(&lvl, x, &mut scratch, out);
        for v in out.iter_mut() {
            *v *= -lvl.sigma;
        }
        if !all_finite(out) {
            return Err(Error::NonFinite("eps"));
        }
        Ok(())
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Normalises logits to probabilities with log-sum-exp.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|v| (v - lse).exp()).collect()
}
