//! Exponential-integrator denoising steps in ε-parameterisation.
//!
//! Order 1 (DDIM):
//! `x_{i−1} = (α_{i−1}/α_i) x_i − σ_{i−1}(e^{h_i} − 1) ε̂` with `h_i = ℓ(t_{i−1}) − ℓ(t_i)`.
//!
//! Order 2 (multistep): the same update with
//! `ε̄ = (1 + 1/2r) ε̂_i − (1/2r) ε̂_{i+1}`, `r = h_{i+1}/h_i`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::schedule::{NoiseSchedule, TimestepGrid};

/// Per-step coefficients of the exponential integrator, precomputed for a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCoeffs {
    /// `α_{i−1}/α_i`.
    pub alpha_ratio: f64,
    /// `σ_{i−1}(e^{h_i} − 1)`.
    pub eps_coef: f64,
    /// `h_i`, log-SNR gap of this step.
    pub h: f64,
    /// `h_{i+1}/h_i`, if a previous step exists.
    pub r: Option<f64>,
}

impl StepCoeffs {
    pub fn new(i: usize, grid: &TimestepGrid, schedule: &NoiseSchedule) -> Result<Self> {
        if i == 0 || i > grid.steps() {
            return Err(Error::invalid(format!(
                "solver step index {i} outside 1..={}",
                grid.steps()
            )));
        }
        let (t_cur, t_next) = (grid.time(i), grid.time(i - 1));
        let (a_cur, _) = schedule.alpha_sigma(t_cur)?;
        let (a_next, s_next) = schedule.alpha_sigma(t_next)?;
        let h = schedule.log_snr(t_next)? - schedule.log_snr(t_cur)?;
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::Degenerate("log-SNR gap of a solver step is not positive"));
        }
        let r = if i < grid.steps() {
            let h_prev = schedule.log_snr(t_cur)? - schedule.log_snr(grid.time(i + 1))?;
            Some(h_prev / h)
        } else {
            None
        };
        Ok(Self {
            alpha_ratio: a_next / a_cur,
            eps_coef: s_next * h.exp_m1(),
            h,
            r,
        })
    }

    /// All steps of a grid, indexed by `i` (entry 0 unused).
    pub fn for_grid(grid: &TimestepGrid, schedule: &NoiseSchedule) -> Result<Vec<Option<Self>>> {
        let mut v = vec![None];
        for i in 1..=grid.steps() {
            v.push(Some(Self::new(i, grid, schedule)?));
        }
        Ok(v)
    }

    #[inline]
    pub fn apply_into(&self, x: &[f64], eps: &[f64], out: &mut [f64]) {
        for ((o, x), e) in out.iter_mut().zip(x).zip(eps) {
            *o = self.alpha_ratio * x - self.eps_coef * e;
        }
    }

    /// Second-order update; falls back to order 1 when `eps_prev` is absent.
    pub fn apply2_into(&self, x: &[f64], eps: &[f64], eps_prev: Option<&[f64]>, out: &mut [f64]) {
        match (eps_prev, self.r) {
            (Some(ep), Some(r)) => {
                let c = 0.5 / r;
                for (((o, x), e), p) in out.iter_mut().zip(x).zip(eps).zip(ep) {
                    let bar = (1.0 + c) * e - c * p;
                    *o = self.alpha_ratio * x - self.eps_coef * bar;
                }
            }
            _ => self.apply_into(x, eps, out),
        }
    }
}

fn check_dims(x: &[f64], eps: &[f64]) -> Result<()> {
    if x.len() != eps.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: eps.len(),
        });
    }
    Ok(())
}

/// One DDIM step from `t_i` to `t_{i−1}`.
pub fn ddim_step(
    x: &[f64],
    eps: &[f64],
    i: usize,
    grid: &TimestepGrid,
    schedule: &NoiseSchedule,
) -> Result<DVector<f64>> {
    check_dims(x, eps)?;
    let c = StepCoeffs::new(i, grid, schedule)?;
    let mut out = DVector::zeros(x.len());
    c.apply_into(x, eps, out.as_mut_slice());
    Ok(out)
}

/// DDIM written through the data prediction: `α_{i−1} x̂_0 + σ_{i−1} ε̂`.
pub fn ddim_step_data_form(
    x: &[f64],
    eps: &[f64],
    i: usize,
    grid: &TimestepGrid,
    schedule: &NoiseSchedule,
) -> Result<DVector<f64>> {
    check_dims(x, eps)?;
    if i == 0 || i > grid.steps() {
        return Err(Error::invalid("solver step index out of range"));
    }
    let (a_i, s_i) = schedule.alpha_sigma(grid.time(i))?;
    let (a_n, s_n) = schedule.alpha_sigma(grid.time(i - 1))?;
    Ok(DVector::from_iterator(
        x.len(),
        x.iter().zip(eps).map(|(x, e)| {
            let x0 = (x - s_i * e) / a_i;
            a_n * x0 + s_n * e
        }),
    ))
}

/// Two-step exponential multistep update from `t_i` to `t_{i−1}`.
///
/// `eps_prev` is `ε̂_{i+1}` from the previous step; without it this is [`ddim_step`].
pub fn multistep2_step(
    x: &[f64],
    eps: &[f64],
    eps_prev: Option<&[f64]>,
    i: usize,
    grid: &TimestepGrid,
    schedule: &NoiseSchedule,
) -> Result<DVector<f64>> {
    check_dims(x, eps)?;
    if let Some(p) = eps_prev {
        check_dims(x, p)?;
    }
    let c = StepCoeffs::new(i, grid, schedule)?;
    let mut out = DVector::zeros(x.len());
    c.apply2_into(x, eps, eps_prev, out.as_mut_slice());
    Ok(out)
}
