//! Euler–Maruyama steps of fixed-level Langevin dynamics and their
//! preconditioned variants:
//!
//! ```text
//! x' = x + h·P·∇log p(x) [+ h·div P] + sqrt(2h)·P^{1/2} ξ
//! ```
//!
//! with `P = I` (Langevin), `P = (−∇²log p)⁻¹` (Newton), or
//! `P = (G + λI)⁻¹` where `G` is either the exact `−∇²log p` or its rank-1
//! approximation `εεᵀ/(σ²‖ε‖²)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};
use crate::oracle::DENSE_DIM_CAP;
use crate::rng::fill_standard_normal;
use crate::vecops::{all_finite, norm_sq};

/// A symmetric positive-definite preconditioner and its symmetric square root.
#[derive(Debug, Clone, PartialEq)]
pub struct Preconditioner {
    pub p: DMatrix<f64>,
    pub sqrt: DMatrix<f64>,
}

impl Preconditioner {
    pub fn identity(d: usize) -> Self {
        Self {
            p: DMatrix::identity(d, d),
            sqrt: DMatrix::identity(d, d),
        }
    }

    /// `P = (G + λI)⁻¹` for symmetric `G`. `newton` selects the error reported
    /// when the damped matrix is not positive definite.
    pub fn from_damped(g: &DMatrix<f64>, lambda: f64, newton: bool) -> Result<Self> {
        let d = g.nrows();
        if d > DENSE_DIM_CAP {
            return Err(Error::TooLarge {
                dim: d,
                cap: DENSE_DIM_CAP,
            });
        }
        let m = g + DMatrix::identity(d, d) * lambda;
        let eig = SymmetricEigen::new(m);
        let min = eig.eigenvalues.min();
        if !(min > 0.0) {
            let min_g = min - lambda;
            return Err(if newton {
                Error::NotLogConcave { min_eig: min_g }
            } else {
                Error::DampingTooSmall { required: -min_g }
            });
        }
        let v = &eig.eigenvectors;
        let inv = DVector::from_iterator(d, eig.eigenvalues.iter().map(|m| 1.0 / m));
        let inv_sqrt = inv.map(f64::sqrt);
        Ok(Self {
            p: v * DMatrix::from_diagonal(&inv) * v.transpose(),
            sqrt: v * DMatrix::from_diagonal(&inv_sqrt) * v.transpose(),
        })
    }

    /// Inverse of `εεᵀ/(σ²‖ε‖²) + λI` in closed form: with unit `u`,
    /// `P = (1/λ)(I − β uuᵀ)`, `β = c/(λ + c)`, `c = 1/σ²`, and
    /// `P^{1/2} = λ^{−1/2}(I − γ uuᵀ)`, `γ = 1 − sqrt(1 − β)`.
    pub fn rank1_damped(eps: &[f64], sigma: f64, lambda: f64) -> Result<Self> {
        let d = eps.len();
        if d > DENSE_DIM_CAP {
            return Err(Error::TooLarge {
                dim: d,
                cap: DENSE_DIM_CAP,
            });
        }
        if !(lambda > 0.0) {
            return Err(Error::DampingTooSmall { required: 0.0 });
        }
        let n2 = norm_sq(eps);
        if !(n2 > 0.0) {
            let s = 1.0 / lambda;
            return Ok(Self {
                p: DMatrix::identity(d, d) * s,
                sqrt: DMatrix::identity(d, d) * s.sqrt(),
            });
        }
        let u = DVector::from_column_slice(eps) / n2.sqrt();
        let c = 1.0 / (sigma * sigma);
        let (beta, gamma) = rank1_shrinkage(c, lambda);
        let uu = &u * u.transpose();
        let id = DMatrix::identity(d, d);
        Ok(Self {
            p: (&id - &uu * beta) / lambda,
            sqrt: (&id - &uu * gamma) / lambda.sqrt(),
        })
    }
}

/// `(β, γ)` with `β = c/(λ+c)` and `γ = 1 − sqrt(1 − β)`, computed without cancellation.
pub fn rank1_shrinkage(c: f64, lambda: f64) -> (f64, f64) {
    let beta = c / (lambda + c);
    let root = (lambda / (lambda + c)).sqrt();
    (beta, beta / (1.0 + root))
}

/// Exact divergence of `x ↦ P(x) = (G(x) + λI)⁻¹` with `G = −∇²log p`:
/// `(div P)_i = Σ_{a,b,j} P_ia T_abj P_bj` where `T = ∂³ log p`.
pub fn preconditioner_divergence(p: &DMatrix<f64>, third: &[DMatrix<f64>]) -> DVector<f64> {
    let d = p.nrows();
    let mut out = DVector::zeros(d);
    for (j, t_j) in third.iter().enumerate() {
        // (P T_j P)_{i j} summed over j.
        let col = t_j * p.column(j);
        out += p * col;
    }
    debug_assert_eq!(out.len(), d);
    out
}

/// `x + h·drift + sqrt(2h)·L ξ`; `sqrt = None` means `L = I`.
pub fn preconditioned_update<R: Rng + ?Sized>(
    x: &[f64],
    drift: &[f64],
    sqrt: Option<&DMatrix<f64>>,
    h: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if !all_finite(drift) {
        return Err(Error::NonFinite("langevin drift"));
    }
    let d = x.len();
    let mut xi = vec![0.0; d];
    fill_standard_normal(rng, &mut xi);
    let noise_scale = (2.0 * h).sqrt();
    let noise = match sqrt {
        Some(l) => l * DVector::from_vec(xi),
        None => DVector::from_vec(xi),
    };
    Ok(DVector::from_iterator(
        d,
        (0..d).map(|a| x[a] + h * drift[a] + noise_scale * noise[a]),
    ))
}

fn check_step(h: f64) -> Result<()> {
    if !(h >= 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("step size must be non-negative, got {h}")));
    }
    Ok(())
}

/// Unadjusted Langevin step `x + h ∇log p + sqrt(2h) ξ`.
pub fn langevin_step<F, R>(x: &[f64], score_fn: F, h: f64, rng: &mut R) -> Result<DVector<f64>>
where
    F: Fn(&[f64]) -> Result<DVector<f64>>,
    R: Rng + ?Sized,
{
    check_step(h)?;
    let s = score_fn(x)?;
    preconditioned_update(x, s.as_slice(), None, h, rng)
}

/// Newton–Langevin step with `P = (−∇²log p)⁻¹`; fails outside log-concave regions.
pub fn newton_langevin_step<F, G, R>(
    x: &[f64],
    score_fn: F,
    hessian_fn: G,
    h: f64,
    rng: &mut R,
) -> Result<DVector<f64>>
where
    F: Fn(&[f64]) -> Result<DVector<f64>>,
    G: Fn(&[f64]) -> Result<DMatrix<f64>>,
    R: Rng + ?Sized,
{
    check_step(h)?;
    let neg_h = -hessian_fn(x)?;
    let pc = Preconditioner::from_damped(&neg_h, 0.0, true)?;
    let s = score_fn(x)?;
    let drift = &pc.p * s;
    preconditioned_update(x, drift.as_slice(), Some(&pc.sqrt), h, rng)
}

/// Where the damped geometry comes from.
pub enum GeometrySource<'a> {
    /// `−∇²log p` from the exact Hessian; `third` supplies `∂³ log p` for the
    /// divergence correction.
    ExactHessian {
        hessian: &'a dyn Fn(&[f64]) -> Result<DMatrix<f64>>,
        third: Option<&'a dyn Fn(&[f64]) -> Result<Vec<DMatrix<f64>>>>,
    },
    /// Rank-1 `εεᵀ/(σ²‖ε‖²)` from the noise prediction.
    LmRank1 {
        eps: &'a dyn Fn(&[f64]) -> Result<DVector<f64>>,
        sigma: f64,
    },
}

/// Preconditioner of the damped dynamics at `x`.
pub fn damped_preconditioner(x: &[f64], geometry: &GeometrySource<'_>, lambda: f64) -> Result<Preconditioner> {
    match geometry {
        GeometrySource::ExactHessian { hessian, .. } => {
            let neg_h = -hessian(x)?;
            Preconditioner::from_damped(&neg_h, lambda, false)
        }
        GeometrySource::LmRank1 { eps, sigma } => {
            let e = eps(x)?;
            Preconditioner::rank1_damped(e.as_slice(), *sigma, lambda)
        }
    }
}

/// Damped Langevin step with `P = (G + λI)⁻¹`.
///
/// With `corrected`, the drift gains `div P` so the continuous dynamics keep
/// `p` stationary even when `P` varies with `x`; this needs the exact
/// geometry and its third-derivative source.
pub fn damped_step<F, R>(
    x: &[f64],
    score_fn: F,
    geometry: &GeometrySource<'_>,
    lambda: f64,
    h: f64,
    rng: &mut R,
    corrected: bool,
) -> Result<DVector<f64>>
where
    F: Fn(&[f64]) -> Result<DVector<f64>>,
    R: Rng + ?Sized,
{
    check_step(h)?;
    let pc = damped_preconditioner(x, geometry, lambda)?;
    let s = score_fn(x)?;
    let mut drift = &pc.p * s;
    if corrected {
        match geometry {
            GeometrySource::ExactHessian {
                third: Some(third), ..
            } => {
                drift += preconditioner_divergence(&pc.p, &third(x)?);
            }
            _ => {
                return Err(Error::invalid(
                    "divergence correction needs the exact geometry with third derivatives",
                ))
            }
        }
    }
    preconditioned_update(x, drift.as_slice(), Some(&pc.sqrt), h, rng)
}
