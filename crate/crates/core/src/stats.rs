use std::f64::consts::FRAC_1_SQRT_2;

use statrs::distribution::{ContinuousCDF, Normal};

fn standard() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Standard normal CDF, with exact limits at the infinities.
pub fn norm_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
    }
}

/// Upper tail `1 - Φ(x)` without cancellation.
pub fn norm_sf(x: f64) -> f64 {
    if x == f64::INFINITY {
        0.0
    } else if x == f64::NEG_INFINITY {
        1.0
    } else {
        0.5 * libm::erfc(x * FRAC_1_SQRT_2)
    }
}

/// Probability of `(lo, hi]` under `N(0, 1)`.
pub fn norm_interval(lo: f64, hi: f64) -> f64 {
    if lo >= 0.0 {
        norm_sf(lo) - norm_sf(hi)
    } else {
        norm_cdf(hi) - norm_cdf(lo)
    }
}

/// `Φ⁻¹(p)`, polished with Newton steps against [`norm_cdf`] so that
/// `norm_sf(norm_quantile(1 - a))` reproduces `a` to rounding.
pub fn norm_quantile(p: f64) -> f64 {
    let mut x = standard().inverse_cdf(p);
    if !x.is_finite() {
        return x;
    }
    for _ in 0..2 {
        let density = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        if density <= 0.0 {
            break;
        }
        let err = if p > 0.5 { (1.0 - p) - norm_sf(x) } else { norm_cdf(x) - p };
        x -= err / density;
    }
    x
}

/// Binomial Monte-Carlo standard error `sqrt(p(1-p)/reps)`.
pub fn binomial_se(p: f64, reps: usize) -> f64 {
    (p * (1.0 - p) / reps as f64).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_reference_values() {
        assert!((norm_quantile(0.95) - 1.6448536269514722).abs() < 1e-9);
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((norm_sf(norm_quantile(0.95)) - 0.05).abs() < 1e-16);
        assert!((norm_cdf(norm_quantile(0.01)) - 0.01).abs() < 1e-16);
        let v = norm_interval(-1.0, 1.0);
        assert!((v - 0.6826894921370859).abs() < 1e-12, "{v}");
        assert!((norm_interval(5.0, f64::INFINITY) - 2.866515718791939e-7).abs() < 1e-15);
    }
}
