//! Error of the rank-1 Hessian approximation and its a-priori bound.
//!
//! Signs follow [`crate::lmgeom`]: both the exact object and the rank-1 form
//! approximate the positive `−∇² log p_t`.

use serde::{Deserialize, Serialize};

use super::{finite_diff_hessian, hs_error, hs_norm};
use crate::error::{Error, Result};
use crate::lmgeom::low_rank_hessian;
use crate::oracle::{EpsProvider, GaussianMixtureOracle, NoiseLevel};
use crate::vecops::norm;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prop1Error {
    pub error: f64,
    /// `ε = 0`: the rank-1 form is undefined and `error` is `‖−∇² log p‖_HS`.
    pub degenerate: bool,
}

/// HS distance between `−∇² log p_t(x)` and `εεᵀ/(σ²‖ε‖²)`.
pub fn prop1_error(oracle: &GaussianMixtureOracle, x: &[f64], t: f64) -> Result<Prop1Error> {
    let exact = -oracle.hessian_exact(x, t)?;
    let lvl = oracle.level(t)?;
    let eps = oracle.eps(x, t)?;
    match low_rank_hessian(eps.as_slice(), lvl.sigma) {
        Ok(r1) => Ok(Prop1Error {
            error: hs_error(&exact, &r1.to_dense()?)?,
            degenerate: false,
        }),
        Err(Error::Degenerate(_)) => Ok(Prop1Error {
            error: hs_norm(&exact),
            degenerate: true,
        }),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBoundInputs {
    /// Bound on `‖x_t‖` over the test set.
    pub delta1: f64,
    /// Error of the ε model; zero for an analytic oracle.
    pub delta2: f64,
    /// Bound on `‖∇² r‖_HS`, `r(x) = ‖x − α_t ȳ(x)‖`.
    pub delta3: f64,
    pub diameter: f64,
    pub alpha: f64,
    pub sigma: f64,
}

impl ErrorBoundInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::ZeroSigma(self.sigma));
        }
        let all = [self.delta1, self.delta2, self.delta3, self.diameter, self.alpha, self.sigma];
        if !all.iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(Error::invalid("bound inputs must be finite and non-negative"));
        }
        Ok(())
    }
}

/// `(δ1 + α δ2 + α D)(2 + δ3 + 2 α² D² / σ²)`.
pub fn prop2_bound(inp: &ErrorBoundInputs) -> Result<f64> {
    inp.validate()?;
    let a = inp.alpha;
    let first = inp.delta1 + a * inp.delta2 + a * inp.diameter;
    let second = 2.0 + inp.delta3 + 2.0 * a * a * inp.diameter * inp.diameter / (inp.sigma * inp.sigma);
    Ok(first * second)
}

/// `r(x) = ‖x − α ȳ(x)‖` with the posterior mean re-evaluated at `x`.
pub fn residual_norm(oracle: &GaussianMixtureOracle, lvl: &NoiseLevel, x: &[f64]) -> f64 {
    let mut w = vec![0.0; oracle.components()];
    let mut ybar = vec![0.0; x.len()];
    oracle.posterior_mean_at(lvl, x, &mut w, &mut ybar);
    let r: Vec<f64> = x.iter().zip(&ybar).map(|(x, y)| x - lvl.alpha * y).collect();
    norm(&r)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prop2Check {
    pub inputs: ErrorBoundInputs,
    pub bound: f64,
    /// `r(x) ‖∇² r(x)‖_HS` per point.
    pub empirical: Vec<f64>,
    /// `‖∇² r(x)‖_HS` per point.
    pub curvature: Vec<f64>,
    pub violations: usize,
}

/// Evaluates `r ‖∇² r‖_HS` at each point (row-major `n × d`) against the bound
/// with `δ1 = max ‖x‖`, `δ2 = 0`, `δ3 = max ‖∇² r‖_HS`.
///
/// The second derivative uses central differences with step `rel_step · σ_t`.
/// The bound assumes `‖ȳ‖ ≤ D`, which holds when the origin lies in the convex
/// hull of the centers.
pub fn prop2_check(oracle: &GaussianMixtureOracle, t: f64, points: &[f64], rel_step: f64) -> Result<Prop2Check> {
    let d = oracle.dim();
    if points.is_empty() {
        return Err(Error::EmptyInput("prop2_check"));
    }
    if points.len() % d != 0 {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: points.len() % d,
        });
    }
    let lvl = oracle.level(t)?;
    let h = rel_step * lvl.sigma;
    let mut residual = Vec::new();
    let mut curvature = Vec::new();
    let mut delta1: f64 = 0.0;
    for x in points.chunks(d) {
        delta1 = delta1.max(norm(x));
        let hr = finite_diff_hessian(|z| residual_norm(oracle, &lvl, z), x, h)?;
        residual.push(residual_norm(oracle, &lvl, x));
        curvature.push(hs_norm(&hr));
    }
    let delta3 = curvature.iter().cloned().fold(0.0, f64::max);
    let inputs = ErrorBoundInputs {
        delta1,
        delta2: 0.0,
        delta3,
        diameter: oracle.diameter(),
        alpha: lvl.alpha,
        sigma: lvl.sigma,
    };
    let bound = prop2_bound(&inputs)?;
    let empirical: Vec<f64> = residual.iter().zip(&curvature).map(|(r, c)| r * c).collect();
    let violations = empirical.iter().filter(|&&e| !(e <= bound)).count();
    Ok(Prop2Check {
        inputs,
        bound,
        empirical,
        curvature,
        violations,
    })
}
