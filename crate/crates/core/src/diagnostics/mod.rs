//! Independent checks and estimators: finite differences, Hilbert–Schmidt
//! errors of the Hessian approximation and its bound, divergence estimators,
//! exponential decay fits and the per-step overhead benchmark.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub mod bench;
pub mod divergence;
pub mod fit;
pub mod hessian;
pub mod report;

pub use bench::{overhead_benchmark, OverheadReport};
pub use divergence::{
    chi2_gaussians, chi2_histogram, gaussian_fit_chi2, ks_statistic, ks_two_sample, sliced_wasserstein,
    ProjectedReference,
};
pub use fit::{decay_fit, DecayFit};
pub use hessian::{prop1_error, prop2_bound, prop2_check, ErrorBoundInputs, Prop1Error, Prop2Check};
pub use report::{DiagnosticsReport, Provenance, Series, SeriesPoint};

/// Central-difference gradient of a scalar function.
pub fn finite_diff_gradient<F>(f: F, x: &[f64], h: f64) -> Result<DVector<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    check_step(h)?;
    let mut xp = x.to_vec();
    let mut g = DVector::zeros(x.len());
    for j in 0..x.len() {
        xp[j] = x[j] + h;
        let fp = f(&xp);
        xp[j] = x[j] - h;
        let fm = f(&xp);
        xp[j] = x[j];
        if !(fp.is_finite() && fm.is_finite()) {
            return Err(Error::NonFinite("finite-difference function value"));
        }
        g[j] = (fp - fm) / (2.0 * h);
    }
    Ok(g)
}

/// Central-difference Jacobian, `J[(i, j)] = ∂f_i/∂x_j`.
pub fn finite_diff_jacobian<F>(f: F, x: &[f64], h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> DVector<f64>,
{
    check_step(h)?;
    let mut xp = x.to_vec();
    let mut cols = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        xp[j] = x[j] + h;
        let fp = f(&xp);
        xp[j] = x[j] - h;
        let fm = f(&xp);
        xp[j] = x[j];
        if fp.len() != fm.len() {
            return Err(Error::DimensionMismatch {
                expected: fp.len(),
                found: fm.len(),
            });
        }
        if !(fp.iter().chain(fm.iter()).all(|v| v.is_finite())) {
            return Err(Error::NonFinite("finite-difference function value"));
        }
        cols.push((fp - fm) / (2.0 * h));
    }
    if cols.is_empty() {
        return Err(Error::EmptyInput("finite_diff_jacobian"));
    }
    Ok(DMatrix::from_columns(&cols))
}

/// Central-difference Hessian of a scalar function.
pub fn finite_diff_hessian<F>(f: F, x: &[f64], h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    check_step(h)?;
    let d = x.len();
    let mut xp = x.to_vec();
    let at = |xp: &mut Vec<f64>, i: usize, si: f64, j: usize, sj: f64| {
        xp[i] += si * h;
        xp[j] += sj * h;
        let v = f(xp);
        xp[i] = x[i];
        xp[j] = x[j];
        v
    };
    let f0 = f(x);
    let mut hm = DMatrix::zeros(d, d);
    for i in 0..d {
        let fp = at(&mut xp, i, 1.0, i, 0.0);
        let fm = at(&mut xp, i, -1.0, i, 0.0);
        hm[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in 0..i {
            let pp = at(&mut xp, i, 1.0, j, 1.0);
            let pm = at(&mut xp, i, 1.0, j, -1.0);
            let mp = at(&mut xp, i, -1.0, j, 1.0);
            let mm = at(&mut xp, i, -1.0, j, -1.0);
            let v = (pp - pm - mp + mm) / (4.0 * h * h);
            hm[(i, j)] = v;
            hm[(j, i)] = v;
        }
    }
    if !hm.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("finite-difference Hessian"));
    }
    Ok(hm)
}

fn check_step(h: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    Ok(())
}

/// Hilbert–Schmidt (Frobenius) norm.
pub fn hs_norm(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn hs_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::invalid(format!(
            "shape mismatch {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(hs_norm(&(a - b)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_functions_are_exact() {
        let f = |x: &[f64]| 3.0 * x[0] - 2.0 * x[1] + 0.5;
        let g = finite_diff_gradient(f, &[0.3, -1.1], 1e-3).unwrap();
        assert!((g[0] - 3.0).abs() < 1e-12 && (g[1] + 2.0).abs() < 1e-12);
        let jf = |x: &[f64]| DVector::from_vec(vec![x[0] + 2.0 * x[1], -x[1]]);
        let j = finite_diff_jacobian(jf, &[1.0, 2.0], 1e-3).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, -1.0]);
        assert!(hs_error(&j, &want).unwrap() < 1e-12);
    }

    #[test]
    fn quadratic_gradient_and_hessian() {
        let f = |x: &[f64]| 0.5 * x.iter().map(|v| v * v).sum::<f64>();
        let x = [0.7, -0.2, 1.9];
        let g = finite_diff_gradient(f, &x, 1e-5).unwrap();
        for k in 0..3 {
            assert!((g[k] - x[k]).abs() < 1e-8);
        }
        let h = finite_diff_hessian(f, &x, 1e-3).unwrap();
        assert!(hs_error(&h, &DMatrix::identity(3, 3)).unwrap() < 1e-6);
    }

    #[test]
    fn bad_inputs() {
        let f = |x: &[f64]| x[0];
        assert!(finite_diff_gradient(f, &[1.0], 0.0).is_err());
        let g = |x: &[f64]| x[0].ln();
        assert!(finite_diff_gradient(g, &[0.0], 1e-3).is_err());
        assert!(hs_error(&DMatrix::zeros(2, 2), &DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn hs_cases() {
        for d in 1..6 {
            let i = DMatrix::<f64>::identity(d, d);
            assert!((hs_norm(&i) - (d as f64).sqrt()).abs() < 1e-15);
            assert_eq!(hs_error(&i, &i).unwrap(), 0.0);
        }
        let u = DVector::from_vec(vec![0.6, 0.0, -0.8]);
        assert!((hs_norm(&(&u * u.transpose())) - 1.0).abs() < 1e-15);
    }
}
