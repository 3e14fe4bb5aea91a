//! Noise schedules `(α_t, σ_t)` of the forward process `x_t = α_t x_0 + σ_t z`
//! and the uniform timestep grids the samplers walk.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScheduleKind {
    /// Variance preserving with linear `β(t) = β_min + t (β_max − β_min)`.
    VpLinear { beta_min: f64, beta_max: f64 },
    /// Variance exploding: `α ≡ 1`, `σ(t) = σ_min (σ_max/σ_min)^t`.
    Ve { sigma_min: f64, sigma_max: f64 },
    /// Variance preserving cosine schedule with offset `s`.
    Cosine { s: f64 },
}

impl ScheduleKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScheduleKind::VpLinear { .. } => "vp-linear",
            ScheduleKind::Ve { .. } => "ve",
            ScheduleKind::Cosine { .. } => "cosine",
        }
    }

    pub fn is_variance_preserving(&self) -> bool {
        !matches!(self, ScheduleKind::Ve { .. })
    }
}

/// Serialised flat, e.g. `{"kind": "ve", "sigma_min": 0.01, "sigma_max": 1, "t_max": 1}`;
/// `t_min`/`t_max` default to the constructor values of the kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FlatSchedule", into = "FlatSchedule")]
pub struct NoiseSchedule {
    pub kind: ScheduleKind,
    pub t_min: f64,
    pub t_max: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FlatSchedule {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigma_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigma_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t_max: Option<f64>,
}

impl TryFrom<FlatSchedule> for NoiseSchedule {
    type Error = Error;

    fn try_from(f: FlatSchedule) -> Result<Self> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| Error::config(format!("schedule kind `{}` needs `{name}`", f.kind)))
        };
        let stray = |present: &[(Option<f64>, &str)]| match present.iter().find(|(v, _)| v.is_some()) {
            Some((_, name)) => Err(Error::config(format!(
                "schedule kind `{}` does not take `{name}`",
                f.kind
            ))),
            None => Ok(()),
        };
        let base = match f.kind.as_str() {
            "vp-linear" => {
                stray(&[(f.sigma_min, "sigma_min"), (f.sigma_max, "sigma_max"), (f.s, "s")])?;
                Self::vp_linear(need(f.beta_min, "beta_min")?, need(f.beta_max, "beta_max")?)
            }
            "ve" => {
                stray(&[(f.beta_min, "beta_min"), (f.beta_max, "beta_max"), (f.s, "s")])?;
                Self::ve(need(f.sigma_min, "sigma_min")?, need(f.sigma_max, "sigma_max")?)
            }
            "cosine" => {
                stray(&[
                    (f.beta_min, "beta_min"),
                    (f.beta_max, "beta_max"),
                    (f.sigma_min, "sigma_min"),
                    (f.sigma_max, "sigma_max"),
                ])?;
                Self::cosine(need(f.s, "s")?)
            }
            other => return Err(Error::config(format!("unknown schedule kind `{other}`"))),
        };
        Self::new(base.kind, f.t_min.unwrap_or(base.t_min), f.t_max.unwrap_or(base.t_max))
    }
}

impl From<NoiseSchedule> for FlatSchedule {
    fn from(s: NoiseSchedule) -> Self {
        let mut f = FlatSchedule {
            kind: s.kind.name().to_string(),
            t_min: Some(s.t_min),
            t_max: Some(s.t_max),
            ..Default::default()
        };
        match s.kind {
            ScheduleKind::VpLinear { beta_min, beta_max } => {
                f.beta_min = Some(beta_min);
                f.beta_max = Some(beta_max);
            }
            ScheduleKind::Ve { sigma_min, sigma_max } => {
                f.sigma_min = Some(sigma_min);
                f.sigma_max = Some(sigma_max);
            }
            ScheduleKind::Cosine { s } => f.s = Some(s),
        }
        f
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::vp_linear(0.1, 20.0)
    }
}

impl NoiseSchedule {
    pub fn new(kind: ScheduleKind, t_min: f64, t_max: f64) -> Result<Self> {
        let s = Self { kind, t_min, t_max };
        s.validate()?;
        Ok(s)
    }

    pub fn vp_linear(beta_min: f64, beta_max: f64) -> Self {
        Self {
            kind: ScheduleKind::VpLinear { beta_min, beta_max },
            t_min: 0.0,
            t_max: 1.0,
        }
    }

    pub fn ve(sigma_min: f64, sigma_max: f64) -> Self {
        Self {
            kind: ScheduleKind::Ve {
                sigma_min,
                sigma_max,
            },
            t_min: 0.0,
            t_max: 1.0,
        }
    }

    pub fn cosine(s: f64) -> Self {
        Self {
            kind: ScheduleKind::Cosine { s },
            t_min: 0.0,
            t_max: 0.9946,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(format!("schedule: {m}")));
        if !(self.t_min.is_finite() && self.t_max.is_finite()) || self.t_min < 0.0 {
            return bad("t_min must be finite and non-negative");
        }
        if self.t_max <= self.t_min {
            return bad("t_max must exceed t_min");
        }
        match self.kind {
            ScheduleKind::VpLinear { beta_min, beta_max } => {
                if !(beta_min > 0.0 && beta_max >= beta_min && beta_max.is_finite()) {
                    return bad("vp-linear needs 0 < beta_min <= beta_max");
                }
            }
            ScheduleKind::Ve {
                sigma_min,
                sigma_max,
            } => {
                if !(sigma_min > 0.0 && sigma_max > sigma_min && sigma_max.is_finite()) {
                    return bad("ve needs 0 < sigma_min < sigma_max");
                }
            }
            ScheduleKind::Cosine { s } => {
                if !(s > 0.0 && s.is_finite()) {
                    return bad("cosine offset s must be positive");
                }
                if self.t_max >= 1.0 {
                    return bad("cosine schedule needs t_max < 1 (alpha vanishes at t = 1)");
                }
            }
        }
        Ok(())
    }

    fn check_range(&self, t: f64) -> Result<()> {
        if t.is_finite() && t >= self.t_min && t <= self.t_max {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                t,
                min: self.t_min,
                max: self.t_max,
            })
        }
    }

    /// `log α(t)` in closed form, unchecked.
    fn log_alpha_unchecked(&self, t: f64) -> f64 {
        match self.kind {
            ScheduleKind::VpLinear { beta_min, beta_max } => {
                -0.25 * t * t * (beta_max - beta_min) - 0.5 * t * beta_min
            }
            ScheduleKind::Ve { .. } => 0.0,
            ScheduleKind::Cosine { s } => {
                let f = |u: f64| (FRAC_PI_2 * (u + s) / (1.0 + s)).cos();
                f(t).ln() - f(0.0).ln()
            }
        }
    }

    /// `log σ(t)`, unchecked. For VP kinds this is `½ log(1 − α²)` via `expm1`
    /// so it stays accurate as `t → 0`.
    fn log_sigma_unchecked(&self, t: f64) -> f64 {
        match self.kind {
            ScheduleKind::Ve {
                sigma_min,
                sigma_max,
            } => sigma_min.ln() + t * (sigma_max / sigma_min).ln(),
            _ => 0.5 * (-(2.0 * self.log_alpha_unchecked(t)).exp_m1()).ln(),
        }
    }

    pub fn alpha_sigma(&self, t: f64) -> Result<(f64, f64)> {
        self.check_range(t)?;
        let alpha = self.log_alpha_unchecked(t).exp();
        let sigma = match self.kind {
            ScheduleKind::Ve { .. } => self.log_sigma_unchecked(t).exp(),
            _ => (-(2.0 * self.log_alpha_unchecked(t)).exp_m1()).max(0.0).sqrt(),
        };
        Ok((alpha, sigma))
    }

    pub fn alpha(&self, t: f64) -> Result<f64> {
        Ok(self.alpha_sigma(t)?.0)
    }

    pub fn sigma(&self, t: f64) -> Result<f64> {
        Ok(self.alpha_sigma(t)?.1)
    }

    /// `ℓ(t) = log(α/σ)`. Infinite at the VP origin.
    pub fn log_snr(&self, t: f64) -> Result<f64> {
        self.check_range(t)?;
        Ok(self.log_alpha_unchecked(t) - self.log_sigma_unchecked(t))
    }

    /// Drift and squared diffusion of the linear forward SDE
    /// `dx = f_t x dt + g_t dW` whose conditionals are `N(α_t x_0, σ_t² I)`:
    /// `f_t = d log α/dt`, `g_t² = dσ²/dt − 2 f_t σ²`.
    pub fn vp_drift_diffusion(&self, t: f64) -> Result<(f64, f64)> {
        self.check_range(t)?;
        Ok(match self.kind {
            ScheduleKind::VpLinear { beta_min, beta_max } => {
                let beta = beta_min + t * (beta_max - beta_min);
                (-0.5 * beta, beta)
            }
            ScheduleKind::Cosine { s } => {
                let f = -FRAC_PI_2 / (1.0 + s) * (FRAC_PI_2 * (t + s) / (1.0 + s)).tan();
                (f, -2.0 * f)
            }
            ScheduleKind::Ve {
                sigma_min,
                sigma_max,
            } => {
                let sigma = self.log_sigma_unchecked(t).exp();
                (0.0, 2.0 * sigma * sigma * (sigma_max / sigma_min).ln())
            }
        })
    }
}

/// Timestep grid `t_0 < t_1 < … < t_N`, indexed so that `time(i)` is `t_i`.
/// Samplers walk it from `i = N` down to `i = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimestepGrid {
    times: Vec<f64>,
}

impl TimestepGrid {
    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::invalid("grid needs at least two times"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times[0] <= 0.0 {
            return Err(Error::invalid(
                "grid times must be positive and strictly monotone",
            ));
        }
        Ok(Self { times })
    }

    /// Number of steps `N`.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    /// Times from `t_N` down to `t_0`.
    pub fn descending(&self) -> impl Iterator<Item = f64> + '_ {
        self.times.iter().rev().copied()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }
}

/// `N + 1` uniformly spaced times from `t_max` down to `eps_clip`.
pub fn make_grid(schedule: &NoiseSchedule, n: usize, eps_clip: f64) -> Result<TimestepGrid> {
    if n == 0 {
        return Err(Error::invalid("grid needs N >= 1"));
    }
    if !(eps_clip > 0.0 && eps_clip < schedule.t_max) || eps_clip < schedule.t_min {
        return Err(Error::invalid(format!(
            "eps_clip must lie in (max(0, t_min), t_max), got {eps_clip}"
        )));
    }
    let span = schedule.t_max - eps_clip;
    let mut times: Vec<f64> = (0..=n)
        .map(|i| eps_clip + span * (i as f64) / (n as f64))
        .collect();
    times[n] = schedule.t_max;
    TimestepGrid::from_times(times)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn vp() -> NoiseSchedule {
        NoiseSchedule::vp_linear(0.1, 20.0)
    }

    #[test]
    fn vp_no_noise_limit() {
        let (a, s) = vp().alpha_sigma(0.0).unwrap();
        assert_eq!(a, 1.0);
        assert_eq!(s, 0.0);
        let (a, s) = vp().alpha_sigma(1e-9).unwrap();
        assert!((a - 1.0).abs() < 1e-9 && s < 1e-4 && s > 0.0);
    }

    #[test]
    fn vp_linear_at_one() {
        let (a, s) = vp().alpha_sigma(1.0).unwrap();
        assert!((a - (-5.025f64).exp()).abs() < 1e-15);
        // σ² = 1 − exp(−∫β) with ∫_0^1 β = 10.05, integrated by Simpson's rule.
        let n = 1000;
        let beta = |t: f64| 0.1 + t * 19.9;
        let hq = 1.0 / n as f64;
        let mut integral = beta(0.0) + beta(1.0);
        for k in 1..n {
            integral += if k % 2 == 1 { 4.0 } else { 2.0 } * beta(k as f64 * hq);
        }
        integral *= hq / 3.0;
        assert!((s - (1.0 - (-integral).exp()).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn variance_preserving_identity() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for sched in [vp(), NoiseSchedule::cosine(0.008)] {
            for _ in 0..200 {
                let t = rng.random_range(sched.t_min..sched.t_max);
                let (a, s) = sched.alpha_sigma(t).unwrap();
                assert!((a * a + s * s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn log_snr_cases() {
        // α = σ at the time where α² = ½.
        let sched = vp();
        let (mut lo, mut hi) = (1e-6, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let (a, s) = sched.alpha_sigma(mid).unwrap();
            if a > s {
                lo = mid
            } else {
                hi = mid
            }
        }
        assert!(sched.log_snr(lo).unwrap().abs() < 1e-9);

        let ve = NoiseSchedule::ve(0.01, 50.0);
        for t in [0.1, 0.5, 1.0] {
            let s = ve.sigma(t).unwrap();
            assert!((ve.log_snr(t).unwrap() + s.ln()).abs() < 1e-12);
        }

        let (a, s) = sched.alpha_sigma(1.0).unwrap();
        assert!((sched.log_snr(1.0).unwrap() - (a / s).ln()).abs() < 1e-12);
    }

    #[test]
    fn log_snr_strictly_decreasing() {
        for sched in [vp(), NoiseSchedule::cosine(0.008), NoiseSchedule::ve(0.01, 50.0)] {
            let mut prev = f64::INFINITY;
            for k in 1..=500 {
                let t = sched.t_min + (sched.t_max - sched.t_min) * k as f64 / 500.0;
                let l = sched.log_snr(t).unwrap();
                assert!(l < prev);
                prev = l;
            }
        }
    }

    #[test]
    fn drift_diffusion_match_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let h = 1e-6;
        for sched in [vp(), NoiseSchedule::cosine(0.008), NoiseSchedule::ve(0.01, 50.0)] {
            for _ in 0..100 {
                let t = rng.random_range(0.05..sched.t_max - 0.05);
                let (f, g2) = sched.vp_drift_diffusion(t).unwrap();
                let la = |u: f64| sched.alpha(u).unwrap().ln();
                let s2 = |u: f64| sched.sigma(u).unwrap().powi(2);
                let f_fd = (la(t + h) - la(t - h)) / (2.0 * h);
                let ds2 = (s2(t + h) - s2(t - h)) / (2.0 * h);
                let g2_fd = ds2 - 2.0 * f_fd * s2(t);
                if sched.kind.is_variance_preserving() {
                    assert!((f - f_fd).abs() <= 1e-6 * f.abs(), "{f} vs {f_fd}");
                } else {
                    assert_eq!(f, 0.0);
                    assert!(f_fd.abs() < 1e-9);
                }
                assert!((g2 - g2_fd).abs() <= 1e-6 * g2.abs(), "{g2} vs {g2_fd}");
            }
        }
    }

    #[test]
    fn vp_linear_drift_is_half_beta() {
        let (f, g2) = vp().vp_drift_diffusion(0.3).unwrap();
        let beta = 0.1 + 0.3 * 19.9;
        assert!((f + 0.5 * beta).abs() < 1e-15);
        assert!((g2 - beta).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(matches!(vp().alpha_sigma(1.5), Err(Error::OutOfRange { .. })));
        assert!(matches!(vp().log_snr(-0.1), Err(Error::OutOfRange { .. })));
        assert!(vp().vp_drift_diffusion(f64::NAN).is_err());
    }

    #[test]
    fn grid_shapes() {
        let g = make_grid(&vp(), 1, 1e-3).unwrap();
        assert_eq!(g.times(), &[1e-3, 1.0]);
        let g = make_grid(&vp(), 10, 1e-3).unwrap();
        assert_eq!(g.steps(), 10);
        assert!((g.time(10) - g.time(9) - (1.0 - 1e-3) / 10.0).abs() < 1e-15);
        let d: Vec<f64> = g.descending().collect();
        assert!(d.windows(2).all(|w| w[0] > w[1]));
        assert_eq!(d[0], 1.0);
        let g4 = make_grid(&vp(), 4, 1e-12).unwrap();
        assert!((g4.time(4) - g4.time(3) - 0.25).abs() < 1e-11);
    }

    #[test]
    fn grid_errors() {
        assert!(make_grid(&vp(), 0, 1e-3).is_err());
        assert!(make_grid(&vp(), 5, 1.0).is_err());
        assert!(make_grid(&vp(), 5, 0.0).is_err());
    }

    #[test]
    fn grid_points_preserve_variance() {
        let g = make_grid(&vp(), 37, 1e-3).unwrap();
        for &t in g.times() {
            let (a, s) = vp().alpha_sigma(t).unwrap();
            assert!((a * a + s * s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn monotone_alpha_sigma() {
        for sched in [vp(), NoiseSchedule::cosine(0.008), NoiseSchedule::ve(0.01, 50.0)] {
            let mut prev = sched.alpha_sigma(sched.t_min + 1e-6).unwrap();
            for k in 1..=200 {
                let t = sched.t_min + (sched.t_max - sched.t_min) * k as f64 / 200.0;
                let cur = sched.alpha_sigma(t).unwrap();
                assert!(cur.0 <= prev.0 && cur.1 >= prev.1 && cur.0 > 0.0 && cur.1 > 0.0);
                prev = cur;
            }
        }
    }

    #[test]
    fn kind_round_trips_through_json() {
        let s = NoiseSchedule::ve(0.01, 1.0);
        let j = serde_json::to_string(&s).unwrap();
        let back: NoiseSchedule = serde_json::from_str(&j).unwrap();
        assert_eq!(s, back);
        assert!(serde_json::from_str::<ScheduleKind>(r#"{"kind":"edm"}"#).is_err());
        let c: NoiseSchedule = serde_json::from_str(r#"{"kind":"cosine","s":0.008}"#).unwrap();
        assert_eq!(c, NoiseSchedule::cosine(0.008));
        let v: NoiseSchedule =
            serde_json::from_str(r#"{"kind":"vp-linear","beta_min":0.1,"beta_max":20,"t_min":0.001}"#).unwrap();
        assert_eq!(v.t_min, 0.001);
        assert!(serde_json::from_str::<NoiseSchedule>(r#"{"kind":"ve","sigma_min":0.01,"sigma_max":1,"tmax":1}"#).is_err());
        assert!(serde_json::from_str::<NoiseSchedule>(r#"{"kind":"ve","sigma_min":1,"sigma_max":0.5}"#).is_err());
        assert!(serde_json::from_str::<NoiseSchedule>(r#"{"kind":"ve","sigma_min":0.1,"sigma_max":1,"s":1}"#).is_err());
        assert!(serde_json::from_str::<NoiseSchedule>(r#"{"kind":"ve","sigma_min":0.1}"#).is_err());
    }
}
