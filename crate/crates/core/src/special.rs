//! Special functions: standard normal density and distribution, Gamma, and
//! absolute moments of the standard normal law.
//!
//! `erfc` and `tgamma` come from `libm` (musl port; `tgamma` is a
//! Lanczos-class approximation). Generic wrappers evaluate in `f64`.

use crate::real::Real;

pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// `P(Z <= x)` for `Z ~ N(0, 1)`, accurate in both tails.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * libm::erfc(-x * core::f64::consts::FRAC_1_SQRT_2)
    }
}

#[inline]
pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

/// `E|Z|^p = 2^{p/2} Γ((p+1)/2) / √π` for `Z ~ N(0, 1)`, `p > -1`.
pub fn abs_normal_moment<T: Real>(p: T) -> T {
    let p = p.as_f64();
    let v = 2f64.powf(p / 2.0) * gamma((p + 1.0) / 2.0) / core::f64::consts::PI.sqrt();
    T::lit(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cdf_reference_values() {
        assert_relative_eq!(normal_cdf(0.0), 0.5, epsilon = 1e-16);
        assert_relative_eq!(normal_cdf(1.0), 0.841_344_746_068_542_9, epsilon = 1e-15);
        assert_relative_eq!(normal_cdf(-3.0), 0.001_349_898_031_630_094_6, max_relative = 1e-13);
        assert_relative_eq!(normal_cdf(-10.0), 7.619_853_024_160_527e-24, max_relative = 1e-12);
        assert_eq!(normal_cdf(f64::INFINITY), 1.0);
        assert_eq!(normal_cdf(f64::NEG_INFINITY), 0.0);
    }

    #[test]
    fn gamma_reference_values() {
        assert_relative_eq!(gamma(5.0), 24.0, max_relative = 1e-14);
        assert_relative_eq!(gamma(0.5), core::f64::consts::PI.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(gamma(2.5), 1.329_340_388_179_137, max_relative = 1e-14);
    }

    #[test]
    fn abs_moments_closed_forms() {
        assert_relative_eq!(abs_normal_moment(2.0_f64), 1.0, max_relative = 1e-14);
        assert_relative_eq!(
            abs_normal_moment(3.0_f64),
            4.0 * INV_SQRT_2PI,
            max_relative = 1e-14
        );
        assert_relative_eq!(abs_normal_moment(4.0_f64), 3.0, max_relative = 1e-14);
        assert_relative_eq!(abs_normal_moment(3.0_f32), 1.595_769, max_relative = 1e-6);
    }
}
