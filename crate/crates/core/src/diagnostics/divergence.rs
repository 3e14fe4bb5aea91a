//! Sample-quality estimators: χ² (closed form and histogram), Kolmogorov–Smirnov,
//! and sliced 2-Wasserstein.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::fill_standard_normal;

/// `χ²(N(μ1, s1²) ‖ N(μ2, s2²))`.
///
/// Equals `s2²/(s1 sqrt(2s2² − s1²)) · exp((μ1 − μ2)²/(2s2² − s1²)) − 1`, finite
/// only when `2 s2² > s1²`.
pub fn chi2_gaussians(mu1: f64, s1: f64, mu2: f64, s2: f64) -> Result<f64> {
    if !(s1 > 0.0 && s2 > 0.0 && s1.is_finite() && s2.is_finite() && mu1.is_finite() && mu2.is_finite()) {
        return Err(Error::invalid("chi2_gaussians needs finite means and positive scales"));
    }
    let q = 2.0 * s2 * s2 - s1 * s1;
    if !(q > 0.0) {
        return Err(Error::InfiniteDivergence("2 s2^2 <= s1^2"));
    }
    let dm = mu1 - mu2;
    let log_a = 2.0 * s2.ln() - s1.ln() - 0.5 * q.ln();
    Ok((log_a + dm * dm / q).exp_m1())
}

fn mean_var(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::EmptyInput("sample moments need at least two samples"));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, var))
}

/// χ² of the Gaussian moment-matched to `samples` against `N(μ2, s2²)`.
pub fn gaussian_fit_chi2(samples: &[f64], mu2: f64, s2: f64) -> Result<f64> {
    let (m, v) = mean_var(samples)?;
    if !(v > 0.0) {
        return Err(Error::Degenerate("samples have zero variance"));
    }
    chi2_gaussians(m, v.sqrt(), mu2, s2)
}

/// Histogram χ² estimate with `bins` equal-mass bins of the target.
///
/// Bin `k` holds samples with `cdf(x) ∈ [k/bins, (k+1)/bins)`; the estimate is
/// `bins · Σ p̂_k² − 1`, biased upward by about `(bins − 1)/n`.
pub fn chi2_histogram<F>(samples: &[f64], cdf: F, bins: usize) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if samples.is_empty() {
        return Err(Error::EmptyInput("chi2_histogram"));
    }
    if bins == 0 {
        return Err(Error::invalid("chi2_histogram needs at least one bin"));
    }
    let mut counts = vec![0u64; bins];
    for &x in samples {
        let u = cdf(x);
        if !u.is_finite() {
            return Err(Error::NonFinite("target cdf"));
        }
        let k = ((u * bins as f64).floor().max(0.0) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let n = samples.len() as f64;
    let s: f64 = counts.iter().map(|&c| (c as f64 / n).powi(2)).sum();
    Ok(bins as f64 * s - 1.0)
}

fn sorted(samples: &[f64], what: &'static str) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::EmptyInput(what));
    }
    if samples.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite(what));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

/// One-sample Kolmogorov–Smirnov statistic `sup |F_n − F|` for a continuous `cdf`.
pub fn ks_statistic<F>(samples: &[f64], cdf: F) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let s = sorted(samples, "ks_statistic")?;
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(d)
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    let a = sorted(a, "ks_two_sample")?;
    let b = sorted(b, "ks_two_sample")?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Squared 2-Wasserstein distance between two sorted 1D empirical measures.
fn w2_sq_sorted(u: &[f64], v: &[f64]) -> f64 {
    let (n, m) = (u.len() as u64, v.len() as u64);
    let total = (n * m) as f64;
    let (mut i, mut j) = (0usize, 0usize);
    let mut pos = 0u64;
    let mut acc = 0.0;
    while i < u.len() && j < v.len() {
        let next_u = (i as u64 + 1) * m;
        let next_v = (j as u64 + 1) * n;
        let next = next_u.min(next_v);
        let diff = u[i] - v[j];
        acc += (next - pos) as f64 / total * diff * diff;
        pos = next;
        if next_u == next {
            i += 1;
        }
        if next_v == next {
            j += 1;
        }
    }
    acc
}

fn check_rows(x: &[f64], d: usize, what: &'static str) -> Result<()> {
    if x.is_empty() || d == 0 {
        return Err(Error::EmptyInput(what));
    }
    if x.len() % d != 0 {
        return Err(Error::invalid("sample array is not a multiple of the dimension"));
    }
    Ok(())
}

fn project_sorted(x: &[f64], d: usize, theta: &[f64], out: &mut Vec<f64>) -> Result<()> {
    out.clear();
    out.extend(x.chunks(d).map(|row| row.iter().zip(theta).map(|(x, t)| x * t).sum::<f64>()));
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sliced_wasserstein samples"));
    }
    out.sort_by(f64::total_cmp);
    Ok(())
}

/// A reference sample projected and sorted once along fixed random directions,
/// so many candidates can be compared against it cheaply.
#[derive(Debug, Clone)]
pub struct ProjectedReference {
    d: usize,
    directions: Vec<Vec<f64>>,
    sorted: Vec<Vec<f64>>,
}

impl ProjectedReference {
    pub fn new<R: Rng + ?Sized>(reference: &[f64], d: usize, n_proj: usize, rng: &mut R) -> Result<Self> {
        check_rows(reference, d, "sliced_wasserstein")?;
        if n_proj == 0 {
            return Err(Error::invalid("sliced_wasserstein needs at least one projection"));
        }
        let mut directions = Vec::with_capacity(n_proj);
        let mut sorted = Vec::with_capacity(n_proj);
        for _ in 0..n_proj {
            let mut theta = vec![0.0; d];
            loop {
                fill_standard_normal(rng, &mut theta);
                let n = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n > 0.0 {
                    theta.iter_mut().for_each(|v| *v /= n);
                    break;
                }
            }
            let mut p = Vec::new();
            project_sorted(reference, d, &theta, &mut p)?;
            directions.push(theta);
            sorted.push(p);
        }
        Ok(Self { d, directions, sorted })
    }

    /// Sliced 2-Wasserstein distance from `x` to the reference.
    pub fn distance(&self, x: &[f64]) -> Result<f64> {
        check_rows(x, self.d, "sliced_wasserstein")?;
        let mut p = Vec::with_capacity(x.len() / self.d);
        let mut acc = 0.0;
        for (theta, reference) in self.directions.iter().zip(&self.sorted) {
            project_sorted(x, self.d, theta, &mut p)?;
            acc += w2_sq_sorted(&p, reference);
        }
        Ok((acc / self.directions.len() as f64).sqrt())
    }
}

/// Sliced 2-Wasserstein distance `sqrt(mean_θ W2²(θᵀA, θᵀB))` over `n_proj`
/// random unit directions. `a` and `b` are row-major with `d` columns and may
/// have different numbers of rows.
pub fn sliced_wasserstein<R: Rng + ?Sized>(a: &[f64], b: &[f64], d: usize, n_proj: usize, rng: &mut R) -> Result<f64> {
    check_rows(a, d, "sliced_wasserstein")?;
    ProjectedReference::new(b, d, n_proj, rng)?.distance(a)
}
