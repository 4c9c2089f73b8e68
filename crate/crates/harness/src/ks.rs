//! Kolmogorov–Smirnov distance to the standard normal.

use esteq::stats::normal_cdf;

use crate::error::{HarnessError, Result};

pub const MIN_SAMPLES: usize = 30;

/// Asymptotic 1% critical value `1.63/√m`.
pub fn critical_value(m: usize) -> f64 {
    1.63 / (m as f64).sqrt()
}

/// `sup_x |F_m(x) − Φ(x)|`.
pub fn ks_distance(samples: &[f64]) -> Result<f64> {
    if samples.len() < MIN_SAMPLES {
        return Err(HarnessError::TooFewSamples {
            needed: MIN_SAMPLES,
            have: samples.len(),
        });
    }
    if samples.iter().any(|v| v.is_nan()) {
        return Err(HarnessError::Scenario("NaN in KS sample".into()));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in s.iter().enumerate() {
        let f = normal_cdf(*x);
        d = d.max((i as f64 + 1.0) / m - f).max(f - i as f64 / m);
    }
    Ok(d)
}
