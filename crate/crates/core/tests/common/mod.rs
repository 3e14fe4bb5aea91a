#![allow(dead_code)]

use lml_core::oracle::EpsProvider;
use lml_core::schedule::NoiseSchedule;

/// Time at which `ln(σ/α)` equals `u`, by bisection.
pub fn time_at_log_ratio(schedule: &NoiseSchedule, u: f64, lo: f64, hi: f64) -> f64 {
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if -schedule.log_snr(m).unwrap() < u {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Probability-flow ODE integrated with classical RK4 on `n` uniform steps of
/// `u = ln(σ/α)` from `t_hi` down to `t_lo`. In `y = x/α` the flow reads
/// `dy/du = e^u ε̂(α y, t(u))`, which is smooth in `u` all the way to `t_lo`.
pub fn pf_ode_rk4<P: EpsProvider>(
    provider: &P,
    schedule: &NoiseSchedule,
    x: &[f64],
    t_hi: f64,
    t_lo: f64,
    n: usize,
) -> Vec<f64> {
    let d = x.len();
    let u_hi = -schedule.log_snr(t_hi).unwrap();
    let u_lo = -schedule.log_snr(t_lo).unwrap();
    let time = |u: f64| {
        if u == u_hi {
            t_hi
        } else if u == u_lo {
            t_lo
        } else {
            time_at_log_ratio(schedule, u, t_lo, t_hi)
        }
    };
    let rhs = |y: &[f64], u: f64| -> Vec<f64> {
        let t = time(u);
        let alpha = schedule.alpha(t).unwrap();
        let x: Vec<f64> = y.iter().map(|v| alpha * v).collect();
        let mut eps = vec![0.0; d];
        provider.eps_into(&x, t, &mut eps).unwrap();
        eps.iter().map(|e| u.exp() * e).collect()
    };
    let axpy = |x: &[f64], a: f64, k: &[f64]| -> Vec<f64> { x.iter().zip(k).map(|(x, k)| x + a * k).collect() };
    let du = (u_lo - u_hi) / n as f64;
    let alpha_hi = schedule.alpha(t_hi).unwrap();
    let mut y: Vec<f64> = x.iter().map(|v| v / alpha_hi).collect();
    for s in 0..n {
        let u = u_hi + s as f64 * du;
        let u_next = if s + 1 == n { u_lo } else { u + du };
        let k1 = rhs(&y, u);
        let k2 = rhs(&axpy(&y, 0.5 * du, &k1), u + 0.5 * du);
        let k3 = rhs(&axpy(&y, 0.5 * du, &k2), u + 0.5 * du);
        let k4 = rhs(&axpy(&y, du, &k3), u_next);
        for j in 0..d {
            y[j] += du / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
    let alpha_lo = schedule.alpha(t_lo).unwrap();
    y.iter().map(|v| alpha_lo * v).collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Least-squares slope of `ln err` against `ln n`, negated.
pub fn observed_order(ns: &[usize], errs: &[f64]) -> f64 {
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    -sxy / sxx
}
