//! Log-space arithmetic and normal distribution helpers.

use statrs::function::erf::erfc;

/// `log(sum(exp(xs)))`, shifted by the maximum. Empty or all -inf gives -inf.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `log(mean(exp(xs)))`.
pub fn logmeanexp(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NEG_INFINITY;
    }
    logsumexp(xs) - (xs.len() as f64).ln()
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;
pub const LN_2PI: f64 = 2.0 * LN_SQRT_2PI;

pub fn std_normal_logpdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

pub fn normal_logpdf(x: f64, mean: f64, std: f64) -> f64 {
    std_normal_logpdf((x - mean) / std) - std.ln()
}

/// Standard normal cdf, accurate in both tails.
pub fn phi(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Mass of a standard normal on `[a, b]`, computed on the side of the
/// distribution where the subtraction does not cancel.
pub fn std_normal_mass(a: f64, b: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    if a > 0.0 {
        (phi(-a) - phi(-b)).max(0.0)
    } else {
        (phi(b) - phi(a)).max(0.0)
    }
}

/// Inverse standard normal cdf.
pub fn phi_inv(p: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::standard().inverse_cdf(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logmeanexp_edges() {
        assert_eq!(logmeanexp(&[]), f64::NEG_INFINITY);
        assert_eq!(logmeanexp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        assert!((logmeanexp(&[1000.0, 1000.0]) - 1000.0).abs() < 1e-12);
        assert!((logsumexp(&[0.0_f64.ln(), 2f64.ln()]) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn normal_tails() {
        assert!((phi(0.0) - 0.5).abs() < 1e-16);
        assert!((std_normal_mass(8.0, f64::INFINITY) - 6.22096057427e-16).abs() < 1e-24);
        assert!((normal_logpdf(0.0, 0.0, 1.0) - (1.0 / (2.0 * std::f64::consts::PI).sqrt()).ln()).abs() < 1e-15);
        assert!((phi_inv(phi(1.3)) - 1.3).abs() < 1e-9);
    }
}
