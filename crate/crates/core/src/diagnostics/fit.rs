//! Least-squares fit of `log v = intercept + rate · t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Slope of `log v` against `t`; negative for a decaying series.
    pub rate: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn decay_fit(times: &[f64], values: &[f64]) -> Result<DecayFit> {
    if times.len() != values.len() {
        return Err(Error::DimensionMismatch {
            expected: times.len(),
            found: values.len(),
        });
    }
    if times.len() < 2 {
        return Err(Error::EmptyInput("decay_fit needs at least two points"));
    }
    if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::invalid("decay_fit needs finite positive values"));
    }
    let n = times.len() as f64;
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let tm = times.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for (t, y) in times.iter().zip(&ys) {
        stt += (t - tm) * (t - tm);
        sty += (t - tm) * (y - ym);
        syy += (y - ym) * (y - ym);
    }
    if !(stt > 0.0) {
        return Err(Error::Degenerate("decay_fit times are all equal"));
    }
    let rate = sty / stt;
    let intercept = ym - rate * tm;
    let r2 = if syy > 0.0 { (sty * sty) / (stt * syy) } else { 1.0 };
    Ok(DecayFit { rate, intercept, r2 })
}
