//! Scalar math shims. `core` has no transcendental functions, so the
//! `no_std` build routes through `libm`; `erf`/`erfc` come from `libm`
//! either way.

#[cfg(feature = "std")]
macro_rules! shim {
    ($name:ident, $libm_name:ident) => {
        #[inline]
        pub(crate) fn $name(x: f64) -> f64 {
            x.$name()
        }
    };
}

#[cfg(not(feature = "std"))]
macro_rules! shim {
    ($name:ident, $libm_name:ident) => {
        #[inline]
        pub(crate) fn $name(x: f64) -> f64 {
            libm::$libm_name(x)
        }
    };
}

shim!(exp, exp);
shim!(ln, log);
shim!(sqrt, sqrt);

#[cfg(feature = "std")]
#[inline]
pub(crate) fn abs(x: f64) -> f64 {
    x.abs()
}

#[cfg(not(feature = "std"))]
#[inline]
pub(crate) fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

#[cfg(feature = "std")]
#[inline]
pub(crate) fn ln_1p(x: f64) -> f64 {
    x.ln_1p()
}

#[cfg(not(feature = "std"))]
#[inline]
pub(crate) fn ln_1p(x: f64) -> f64 {
    libm::log1p(x)
}

#[inline]
pub(crate) fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// log(1 + e^x) without overflow for large |x|.
#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + ln_1p(exp(-x))
    } else {
        ln_1p(exp(x))
    }
}

/// Logistic sigmoid, stable on both tails.
#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

pub(crate) const LN_2PI: f64 = 1.8378770664093453;

/// log Φ(z) for the standard normal CDF, usable far into the left tail.
/// The erfc form holds full precision until its result underflows around
/// z ≈ −37; beyond that the asymptotic tail expansion takes over (where
/// its truncation error is < 1e-11 of the log value).
pub(crate) fn log_normal_cdf(z: f64) -> f64 {
    if z > -36.0 {
        ln(0.5 * erfc(-z * core::f64::consts::FRAC_1_SQRT_2))
    } else {
        // Φ(z) = φ(z)/(−z) · (1 − 1/z² + 3/z⁴ − 15/z⁶ + 105/z⁸ − ...)
        let zi = 1.0 / (z * z);
        let series = 1.0 - zi * (1.0 - 3.0 * zi * (1.0 - 5.0 * zi * (1.0 - 7.0 * zi)));
        -0.5 * z * z - 0.5 * LN_2PI - ln(-z) + ln(series)
    }
}

/// φ(z)/Φ(z), the inverse Mills ratio of the standard normal.
pub(crate) fn normal_hazard(z: f64) -> f64 {
    let log_pdf = -0.5 * z * z - 0.5 * LN_2PI;
    exp(log_pdf - log_normal_cdf(z))
}

/// Inverse standard normal CDF (Acklam's rational approximation,
/// relative error below 1.2e-9 — ample for quasi-Monte-Carlo draws).
pub(crate) fn inverse_normal_cdf(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = sqrt(-2.0 * ln(p));
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -inverse_normal_cdf(1.0 - p)
    }
}

/// SplitMix64: tiny deterministic generator used to derive quasi-random
/// sequence shifts from a seed.
pub(crate) struct SplitMix64(pub u64);

impl SplitMix64 {
    pub(crate) fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub(crate) fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_tails() {
        assert!((softplus(0.0) - core::f64::consts::LN_2).abs() < 1e-15);
        assert!((softplus(50.0) - 50.0).abs() < 1e-15);
        assert!(softplus(-50.0) > 0.0 && softplus(-50.0) < 1e-20);
    }

    #[test]
    fn log_cdf_tail_is_smooth() {
        // Direct erfc form and tail expansion must agree near the switch.
        for &z in &[-35.0, -35.9, -36.1, -37.0] {
            let direct = ln(0.5 * erfc(-z * core::f64::consts::FRAC_1_SQRT_2));
            let zi = 1.0 / (z * z);
            let series = 1.0 - zi * (1.0 - 3.0 * zi * (1.0 - 5.0 * zi * (1.0 - 7.0 * zi)));
            let tail = -0.5 * z * z - 0.5 * LN_2PI - ln(-z) + ln(series);
            assert!(
                (direct - tail).abs() < 1e-9 * tail.abs(),
                "z={z}: {direct} vs {tail}"
            );
            assert!(log_normal_cdf(z).is_finite());
        }
        // sanity at moderate z against fixed references
        assert!((log_normal_cdf(-6.0) + 20.73676894997471).abs() < 1e-9);
        assert!((log_normal_cdf(0.0) - ln(0.5)).abs() < 1e-15);
    }

    #[test]
    fn inverse_cdf_round_trip() {
        for &p in &[1e-9, 0.02, 0.3, 0.5, 0.77, 0.999, 1.0 - 1e-9] {
            let z = inverse_normal_cdf(p);
            let back = 0.5 * erfc(-z * core::f64::consts::FRAC_1_SQRT_2);
            assert!((back - p).abs() < 2e-9, "p={p} back={back}");
        }
    }
}
