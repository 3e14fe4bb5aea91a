//! Damped rank-1 Hessian geometry in ε-space.
//!
//! The diffused Hessian is approximated by the outer product
//! `εεᵀ / (σ_t² ‖ε‖²)`; adding `λI` makes it invertible and the inverse is
//! applied in `O(d)` with Sherman–Morrison:
//!
//! ```text
//! ε̃     = κ ε_prev + (1 − κ) ε
//! ε_raw = (I − ε̃ε̃ᵀ / (λ + ‖ε̃‖²)) ε
//! ε_LM  = ε_raw · ‖ε‖ / ‖ε_raw‖
//! ```
//!
//! The scalar prefactor of the inverse only rescales the result and is
//! dropped by the final normalisation. Dense forms exist for diagnostics
//! only and are capped at [`DENSE_DIM_CAP`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::DENSE_DIM_CAP;
use crate::vecops::{axpby, axpby_norm_sq, dot, gram3, norm, norm_sq};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DampedGeometryConfig {
    pub lambda: f64,
    pub kappa: f64,
}

impl Default for DampedGeometryConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            kappa: 1e-8,
        }
    }
}

impl DampedGeometryConfig {
    pub fn new(lambda: f64, kappa: f64) -> Result<Self> {
        let cfg = Self { lambda, kappa };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!(
                "lambda must be positive and finite (rank-1 geometry is singular at 0), got {}",
                self.lambda
            )));
        }
        if !(0.0..1.0).contains(&self.kappa) {
            return Err(Error::invalid(format!(
                "kappa must lie in [0, 1), got {}",
                self.kappa
            )));
        }
        Ok(())
    }
}

/// ε from the previous timestep, absent before the first step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GeometryState {
    pub prev_eps: Option<DVector<f64>>,
}

/// `scale · u uᵀ`, kept factored.
#[derive(Debug, Clone, PartialEq)]
pub struct Rank1Hessian {
    pub scale: f64,
    pub direction: DVector<f64>,
}

impl Rank1Hessian {
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.direction * (self.scale * self.direction.dot(v))
    }

    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        check_dense(self.direction.len())?;
        Ok(&self.direction * self.direction.transpose() * self.scale)
    }
}

fn check_dense(d: usize) -> Result<()> {
    if d > DENSE_DIM_CAP {
        return Err(Error::TooLarge {
            dim: d,
            cap: DENSE_DIM_CAP,
        });
    }
    Ok(())
}

fn check_same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(())
}

/// `κ·prev + (1 − κ)·cur`, or `cur` when there is no previous ε.
pub fn ema_mix(prev: Option<&[f64]>, cur: &[f64], kappa: f64) -> Result<DVector<f64>> {
    match prev {
        None => Ok(DVector::from_column_slice(cur)),
        Some(p) => {
            check_same_len(cur, p)?;
            Ok(DVector::from_iterator(
                cur.len(),
                p.iter().zip(cur).map(|(p, c)| kappa * p + (1.0 - kappa) * c),
            ))
        }
    }
}

/// `(I − ε̃ε̃ᵀ/(λ + ‖ε̃‖²)) v` without forming the matrix. `ε̃ = 0` gives `v`.
pub fn sm_apply(eps_tilde: &[f64], v: &[f64], lambda: f64) -> Result<DVector<f64>> {
    check_same_len(eps_tilde, v)?;
    let c = dot(eps_tilde, v) / (lambda + norm_sq(eps_tilde));
    Ok(DVector::from_iterator(
        v.len(),
        v.iter().zip(eps_tilde).map(|(v, e)| v - c * e),
    ))
}

/// Rescales `v` to the norm of `reference`.
pub fn normalize_to(reference: &[f64], v: &[f64]) -> Result<DVector<f64>> {
    check_same_len(reference, v)?;
    let nv = norm(v);
    if !(nv > 0.0) {
        return Err(Error::Degenerate("cannot normalise a zero direction"));
    }
    let s = norm(reference) / nv;
    Ok(DVector::from_iterator(v.len(), v.iter().map(|x| x * s)))
}

/// Sherman–Morrison geometry applied to `cur` and renormalised, written into `out`.
///
/// Works from the three inner products of `cur` and `prev`. The coefficient on
/// `cur` is formed as `(λ + κ⟨ε̃, prev⟩)/(λ + ‖ε̃‖²)` rather than `1 − c(1−κ)`,
/// which keeps it accurate when `λ ≪ ‖ε̃‖²`.
pub fn lm_guided_eps_into(
    cur: &[f64],
    prev: Option<&[f64]>,
    cfg: &DampedGeometryConfig,
    out: &mut [f64],
) -> Result<()> {
    check_same_len(cur, out)?;
    let p = match prev {
        Some(p) if cfg.kappa != 0.0 => p,
        _ => {
            // ε̃ = cur: the deflation only rescales cur, which the normalisation undoes.
            if !(norm_sq(cur) > 0.0) {
                return Err(Error::Degenerate("eps is zero; geometry normalisation undefined"));
            }
            out.copy_from_slice(cur);
            return Ok(());
        }
    };
    check_same_len(cur, p)?;
    let k = cfg.kappa;
    let (nc, np, cp) = gram3(cur, p);
    if !(nc > 0.0) {
        return Err(Error::Degenerate("eps is zero; geometry normalisation undefined"));
    }
    let mix_prev = k * np + (1.0 - k) * cp; // ⟨ε̃, prev⟩
    let mix_cur = k * cp + (1.0 - k) * nc; // ⟨ε̃, cur⟩
    let mix_norm = k * mix_prev + (1.0 - k) * mix_cur; // ‖ε̃‖²
    let denom = cfg.lambda + mix_norm;
    let a = (cfg.lambda + k * mix_prev) / denom;
    let b = -k * mix_cur / denom;

    // ‖a·cur + b·prev‖² follows from the inner products unless the two terms
    // nearly cancel, in which case it is accumulated explicitly.
    let spread = a * a * nc + b * b * np + 2.0 * (a * b * cp).abs();
    let analytic = a * a * nc + b * b * np + 2.0 * a * b * cp;
    if analytic > 1e-2 * spread && analytic.is_finite() {
        let s = (nc / analytic).sqrt();
        axpby(a * s, cur, b * s, p, out);
        return Ok(());
    }
    let raw_sq = axpby_norm_sq(a, cur, b, p, out);
    if !(raw_sq > 0.0) || !raw_sq.is_finite() {
        return Err(Error::Degenerate("geometry-applied eps vanished"));
    }
    let s = (nc / raw_sq).sqrt();
    for o in out.iter_mut() {
        *o *= s;
    }
    Ok(())
}

/// Geometry-guided ε for one step; returns the new state carrying `cur`.
pub fn lm_guided_eps(
    cur: &DVector<f64>,
    state: GeometryState,
    cfg: &DampedGeometryConfig,
) -> Result<(DVector<f64>, GeometryState)> {
    cfg.validate()?;
    let mut out = DVector::zeros(cur.len());
    lm_guided_eps_into(
        cur.as_slice(),
        state.prev_eps.as_ref().map(|p| p.as_slice()),
        cfg,
        out.as_mut_slice(),
    )?;
    Ok((
        out,
        GeometryState {
            prev_eps: Some(cur.clone()),
        },
    ))
}

/// Outer-product approximation `εεᵀ / (σ² ‖ε‖²)` of `−∇² log p_t`.
pub fn low_rank_hessian(eps: &[f64], sigma: f64) -> Result<Rank1Hessian> {
    let n2 = norm_sq(eps);
    if !(n2 > 0.0) {
        return Err(Error::Degenerate("rank-1 Hessian needs a non-zero eps"));
    }
    if !(sigma > 0.0) {
        return Err(Error::Degenerate("rank-1 Hessian needs sigma > 0"));
    }
    Ok(Rank1Hessian {
        scale: 1.0 / (sigma * sigma * n2),
        direction: DVector::from_column_slice(eps),
    })
}

/// Dense `I − ε̃ε̃ᵀ/(λ + ‖ε̃‖²)`.
pub fn sm_factor_dense(eps_tilde: &[f64], lambda: f64) -> Result<DMatrix<f64>> {
    check_dense(eps_tilde.len())?;
    let e = DVector::from_column_slice(eps_tilde);
    let d = e.len();
    Ok(DMatrix::identity(d, d) - &e * e.transpose() / (lambda + e.norm_squared()))
}

/// Dense inverse of `εεᵀ/(σ²‖ε‖²) + λI`.
///
/// With `λ' = σ²‖ε‖²λ` this is `(σ²‖ε‖²/λ')(I − εεᵀ/(λ' + ‖ε‖²))`.
pub fn damped_inverse_dense(eps: &[f64], sigma: f64, lambda: f64) -> Result<DMatrix<f64>> {
    check_dense(eps.len())?;
    if !(lambda > 0.0) {
        return Err(Error::invalid("lambda must be positive"));
    }
    let n2 = norm_sq(eps);
    if !(n2 > 0.0 && sigma > 0.0) {
        return Err(Error::Degenerate("damped inverse needs non-zero eps and sigma"));
    }
    let lambda_p = sigma * sigma * n2 * lambda;
    let e = DVector::from_column_slice(eps);
    let d = e.len();
    let inner = DMatrix::identity(d, d) - &e * e.transpose() / (lambda_p + n2);
    Ok(inner * (sigma * sigma * n2 / lambda_p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
    }

    /// Dense route: mix, build the SM factor as a matrix, multiply, renormalise.
    fn dense_guided(cur: &[f64], prev: Option<&[f64]>, cfg: &DampedGeometryConfig) -> DVector<f64> {
        let tilde = ema_mix(prev, cur, cfg.kappa).unwrap();
        let m = sm_factor_dense(tilde.as_slice(), cfg.lambda).unwrap();
        let raw = m * v(cur);
        let s = v(cur).norm() / raw.norm();
        raw * s
    }

    #[test]
    fn ema_cases() {
        let prev = [1.0, 0.0];
        let cur = [0.0, 1.0];
        assert_eq!(ema_mix(Some(&prev), &cur, 0.0).unwrap(), v(&cur));
        assert_eq!(ema_mix(Some(&prev), &cur, 1.0).unwrap(), v(&prev));
        assert_eq!(ema_mix(Some(&prev), &cur, 0.5).unwrap(), v(&[0.5, 0.5]));
        assert_eq!(ema_mix(None, &cur, 0.5).unwrap(), v(&cur));
        assert!(ema_mix(Some(&[1.0]), &cur, 0.5).is_err());
    }

    #[test]
    fn sm_apply_cases() {
        assert_eq!(sm_apply(&[1.0, 0.0], &[1.0, 0.0], 1.0).unwrap(), v(&[0.5, 0.0]));
        assert_eq!(sm_apply(&[1.0, 0.0], &[0.0, 3.0], 0.1).unwrap(), v(&[0.0, 3.0]));
        assert_eq!(sm_apply(&[0.0, 0.0], &[2.0, -1.0], 0.1).unwrap(), v(&[2.0, -1.0]));
    }

    #[test]
    fn normalize_cases() {
        assert_eq!(normalize_to(&[3.0, 4.0], &[1.0, 0.0]).unwrap(), v(&[5.0, 0.0]));
        let x = normalize_to(&[0.0, 5.0], &[3.0, 4.0]).unwrap();
        assert!((x - v(&[3.0, 4.0])).norm() < 1e-15);
        assert!(matches!(normalize_to(&[1.0], &[0.0]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn guided_eps_worked_example() {
        // κ = ½ with prev chosen so that ε̃ = (1,1)/√2 for cur = (1,0).
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let cur = [1.0, 0.0];
        let prev = [2.0 * r - 1.0, 2.0 * r];
        let cfg = DampedGeometryConfig::new(1.0, 0.5).unwrap();
        let tilde = ema_mix(Some(&prev), &cur, 0.5).unwrap();
        assert!((tilde - v(&[r, r])).norm() < 1e-15);
        let raw = sm_apply(&[r, r], &cur, 1.0).unwrap();
        assert!((raw - v(&[0.75, -0.25])).norm() < 1e-15);

        let state = GeometryState {
            prev_eps: Some(v(&prev)),
        };
        let (out, next) = lm_guided_eps(&v(&cur), state, &cfg).unwrap();
        assert!((out[0] - 0.9487).abs() < 5e-5 && (out[1] + 0.3162).abs() < 5e-5);
        assert!(rel(&out, &dense_guided(&cur, Some(&prev), &cfg)) < 1e-12);
        assert_eq!(next.prev_eps.unwrap(), v(&cur));
    }

    #[test]
    fn guided_eps_identity_cases() {
        let cfg0 = DampedGeometryConfig::new(0.3, 0.0).unwrap();
        let cur = v(&[0.3, -1.2, 2.0]);
        let state = GeometryState {
            prev_eps: Some(v(&[5.0, 1.0, 0.0])),
        };
        let (out, _) = lm_guided_eps(&cur, state, &cfg0).unwrap();
        assert!(rel(&out, &cur) < 1e-15);

        // cur orthogonal to ε̃: with κ = ½, prev = −cur + 2w for w ⟂ cur gives ε̃ = w.
        let cur = [1.0, 0.0, 0.0];
        let prev = [-1.0, 2.0, 0.0];
        let cfg = DampedGeometryConfig::new(0.01, 0.5).unwrap();
        let mut out = [0.0; 3];
        lm_guided_eps_into(&cur, Some(&prev), &cfg, &mut out).unwrap();
        assert!(rel(&v(&out), &v(&cur)) < 1e-15);

        assert!(lm_guided_eps(&v(&[0.0, 0.0]), GeometryState::default(), &cfg).is_err());
    }

    #[test]
    fn low_rank_hessian_cases() {
        let h = low_rank_hessian(&[0.6, 0.8], 1.0).unwrap();
        assert!((h.scale - 1.0).abs() < 1e-15);
        let h2 = low_rank_hessian(&[-3.0, -4.0], 1.0).unwrap();
        assert!((h.to_dense().unwrap() - h2.to_dense().unwrap()).norm() < 1e-15);
        assert!(low_rank_hessian(&[0.0, 0.0], 1.0).is_err());
        assert!(low_rank_hessian(&[1.0, 0.0], 0.0).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let e: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let sigma = 0.37;
        let dense = low_rank_hessian(&e, sigma).unwrap().to_dense().unwrap();
        let mut eig: Vec<f64> = SymmetricEigen::new(dense).eigenvalues.iter().copied().collect();
        eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((eig[7] - 1.0 / (sigma * sigma)).abs() < 1e-10);
        assert!(eig[..7].iter().all(|x| x.abs() < 1e-10));

        let w = v(&[1.0, 2.0]);
        let h = low_rank_hessian(&[0.6, 0.8], 2.0).unwrap();
        assert!((h.apply(&w) - h.to_dense().unwrap() * &w).norm() < 1e-15);
    }

    #[test]
    fn damped_inverse_cases() {
        let m = damped_inverse_dense(&[1.0, 0.0], 1.0, 1.0).unwrap();
        assert!((m - DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.0])).norm() < 1e-15);
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let f = sm_factor_dense(&[1.0, 0.0], 1.0).unwrap();
        assert!((g * f - DMatrix::identity(2, 2)).norm() < 1e-15);

        let f = sm_factor_dense(&[0.6, 0.8], 1e12).unwrap();
        assert!((f - DMatrix::identity(2, 2)).amax() < 1e-6);

        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let d = rng.random_range(1..=16);
            let e: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let sigma = rng.random_range(0.05..1.0);
            let lambda = 10f64.powf(rng.random_range(-4.0..2.0));
            let inv = damped_inverse_dense(&e, sigma, lambda).unwrap();
            let g = low_rank_hessian(&e, sigma).unwrap().to_dense().unwrap()
                + DMatrix::identity(d, d) * lambda;
            assert!((g * inv - DMatrix::identity(d, d)).norm() < 1e-9);

            // Sherman–Morrison in λ' form.
            let n2: f64 = e.iter().map(|x| x * x).sum();
            let lp = sigma * sigma * n2 * lambda;
            let ev = v(&e);
            let a = &ev * ev.transpose() + DMatrix::identity(d, d) * lp;
            let b = (DMatrix::identity(d, d) - &ev * ev.transpose() / (lp + n2)) / lp;
            assert!((a * b - DMatrix::identity(d, d)).norm() < 1e-10);
        }
        assert!(damped_inverse_dense(&[0.0; 65], 1.0, 1.0).is_err());
    }

    #[test]
    fn sm_factor_is_positive_definite() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let d = rng.random_range(1..=16);
            let e: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
            let lambda = 10f64.powf(rng.random_range(-4.0..2.0));
            let f = sm_factor_dense(&e, lambda).unwrap();
            let min = SymmetricEigen::new(f).eigenvalues.min();
            let n2: f64 = e.iter().map(|x| x * x).sum();
            let expect = lambda / (lambda + n2);
            assert!((min - expect).abs() < 1e-10 && min > 0.0);
        }
    }

    #[test]
    fn deflection_shrinks_with_damping() {
        let cur = [1.0, 0.3, -0.5];
        let prev = [-0.2, 1.0, 0.4];
        let angle = |lambda: f64| {
            let cfg = DampedGeometryConfig::new(lambda, 0.3).unwrap();
            let mut out = [0.0; 3];
            lm_guided_eps_into(&cur, Some(&prev), &cfg, &mut out).unwrap();
            let c = dot(&out, &cur) / (norm(&out) * norm(&cur));
            c.clamp(-1.0, 1.0).acos()
        };
        let mut last = f64::INFINITY;
        for k in -8..=8 {
            let a = angle(10f64.powi(k));
            assert!(a <= last + 1e-12, "angle grew at lambda=1e{k}");
            last = a;
        }
        assert!(last < 1e-7);
    }

    #[test]
    fn config_validation() {
        assert!(DampedGeometryConfig::new(0.0, 0.1).is_err());
        assert!(DampedGeometryConfig::new(1.0, 1.0).is_err());
        assert!(DampedGeometryConfig::new(1.0, -0.1).is_err());
        assert_eq!(DampedGeometryConfig::default(), DampedGeometryConfig::new(1e-3, 1e-8).unwrap());
    }

    fn vec_strategy(d: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-3.0f64..3.0, d)
    }

    proptest! {
        #[test]
        fn sm_apply_matches_dense(
            (e, x) in (1usize..=32).prop_flat_map(|d| (vec_strategy(d), vec_strategy(d))),
            log_lambda in -4.0f64..2.0,
        ) {
            let lambda = 10f64.powf(log_lambda);
            let fast = sm_apply(&e, &x, lambda).unwrap();
            let dense = sm_factor_dense(&e, lambda).unwrap() * v(&x);
            // Absolute in ‖x‖: the deflation cancels when λ ≪ ‖e‖².
            prop_assert!((&fast - &dense).norm() <= 1e-12 * v(&x).norm().max(1e-300));
        }

        #[test]
        fn guided_eps_preserves_norm_and_matches_dense(
            (cur, prev) in (1usize..=32).prop_flat_map(|d| (vec_strategy(d), vec_strategy(d))),
            log_lambda in -4.0f64..2.0,
            kappa in 0.0f64..0.99,
        ) {
            prop_assume!(norm(&cur) > 1e-3);
            let cfg = DampedGeometryConfig::new(10f64.powf(log_lambda), kappa).unwrap();
            let mut out = vec![0.0; cur.len()];
            lm_guided_eps_into(&cur, Some(&prev), &cfg, &mut out).unwrap();
            prop_assert!((norm(&out) - norm(&cur)).abs() <= 1e-12 * norm(&cur));
            let dense = dense_guided(&cur, Some(&prev), &cfg);
            prop_assert!(rel(&v(&out), &dense) < 1e-9);
        }

        #[test]
        fn kappa_zero_is_identity(
            (cur, prev) in (1usize..=32).prop_flat_map(|d| (vec_strategy(d), vec_strategy(d))),
            log_lambda in -4.0f64..4.0,
        ) {
            prop_assume!(norm(&cur) > 1e-6);
            let cfg = DampedGeometryConfig::new(10f64.powf(log_lambda), 0.0).unwrap();
            let mut out = vec![0.0; cur.len()];
            lm_guided_eps_into(&cur, Some(&prev), &cfg, &mut out).unwrap();
            prop_assert!(rel(&v(&out), &v(&cur)) <= 1e-12);
        }
    }
}
