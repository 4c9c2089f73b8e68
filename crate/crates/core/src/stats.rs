//! Standard normal distribution functions.

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

fn std_normal() -> Normal {
    Normal::standard()
}

pub fn normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

pub fn normal_pdf(x: f64) -> f64 {
    std_normal().pdf(x)
}

/// `Φ⁻¹(p)` for `p ∈ (0, 1)`; infinite at the endpoints.
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        let n = std_normal();
        let x = n.inverse_cdf(p);
        // one Newton step polishes the erf inversion to CDF accuracy
        let d = n.pdf(x);
        if d > 0.0 {
            x - (n.cdf(x) - p) / d
        } else {
            x
        }
    }
}
