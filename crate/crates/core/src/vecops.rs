//! Slice kernels shared by the hot paths.

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

const LANES: usize = 8;

/// `(‖a‖², ‖b‖², ⟨a, b⟩)` in one pass, with independent lane accumulators so
/// the loop vectorises.
pub fn gram3(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let (mut aa, mut bb, mut ab) = ([0.0; LANES], [0.0; LANES], [0.0; LANES]);
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..LANES {
            aa[l] += x[l] * x[l];
            bb[l] += y[l] * y[l];
            ab[l] += x[l] * y[l];
        }
    }
    for (l, (x, y)) in ra.iter().zip(rb).enumerate() {
        aa[l] += x * x;
        bb[l] += y * y;
        ab[l] += x * y;
    }
    let sum = |v: [f64; LANES]| v.iter().sum::<f64>();
    (sum(aa), sum(bb), sum(ab))
}

/// `out = p·a + q·b`.
pub fn axpby(p: f64, a: &[f64], q: f64, b: &[f64], out: &mut [f64]) {
    for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
        *o = p * x + q * y;
    }
}

/// `out = p·a + q·b`; returns `‖out‖²`.
pub fn axpby_norm_sq(p: f64, a: &[f64], q: f64, b: &[f64], out: &mut [f64]) -> f64 {
    let mut acc = [0.0; LANES];
    let n = out.len() - out.len() % LANES;
    for ((o, x), y) in out[..n]
        .chunks_exact_mut(LANES)
        .zip(a[..n].chunks_exact(LANES))
        .zip(b[..n].chunks_exact(LANES))
    {
        for l in 0..LANES {
            let r = p * x[l] + q * y[l];
            acc[l] += r * r;
            o[l] = r;
        }
    }
    for (l, ((o, x), y)) in out[n..].iter_mut().zip(&a[n..]).zip(&b[n..]).enumerate() {
        let r = p * x + q * y;
        acc[l] += r * r;
        *o = r;
    }
    acc.iter().sum()
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Numerically stable `log Σ exp(v_i)`.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
