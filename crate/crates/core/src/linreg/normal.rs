//! Standard normal distribution helpers.

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use libm::erfc;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

pub fn pdf(u: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * u * u).exp()
}

pub fn ln_pdf(u: f64) -> f64 {
    -0.5 * u * u - LN_SQRT_2PI
}

/// Φ(u), through erfc so both tails keep full relative precision.
pub fn cdf(u: f64) -> f64 {
    0.5 * erfc(-u * std::f64::consts::FRAC_1_SQRT_2)
}

/// ln Φ(u) without cancellation in either tail.
pub fn ln_cdf(u: f64) -> f64 {
    if u < -8.0 {
        let tail = 0.5 * erfc(-u * std::f64::consts::FRAC_1_SQRT_2);
        if tail > 1e-300 {
            tail.ln()
        } else {
            // Asymptotic Mills-ratio expansion for the deep tail.
            let z2 = 1.0 / (u * u);
            let series = 1.0 - z2 * (1.0 - 3.0 * z2 * (1.0 - 5.0 * z2 * (1.0 - 7.0 * z2)));
            ln_pdf(u) - (-u).ln() + series.ln()
        }
    } else if u > 0.0 {
        (-cdf(-u)).ln_1p()
    } else {
        cdf(u).ln()
    }
}

/// φ(u) / Φ(u), finite for every finite `u`.
pub fn mills(u: f64) -> f64 {
    (ln_pdf(u) - ln_cdf(u)).exp()
}

/// Φ⁻¹(p) for p in (0, 1).
/// Φ⁻¹(p), polished with Newton steps on the accurate `cdf`.
pub fn inv_cdf(p: f64) -> f64 {
    let mut x = Normal::standard().inverse_cdf(p);
    if !x.is_finite() {
        return x;
    }
    for _ in 0..2 {
        let d = pdf(x);
        if d < 1e-300 {
            break;
        }
        x -= (cdf(x) - p) / d;
    }
    x
}

/// Upper `1 - alpha/2` quantile of Student's t with `df` degrees of freedom.
pub fn t_critical(alpha: f64, df: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df)
        .map(|t| t.inverse_cdf(1.0 - alpha / 2.0))
        .unwrap_or(f64::NAN)
}

/// Two-sided 95% normal critical value.
pub fn z95() -> f64 {
    inv_cdf(0.975)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetry() {
        let mut u = -8.0;
        while u <= 8.0 {
            assert!((cdf(u) + cdf(-u) - 1.0).abs() < 1e-14, "u = {u}");
            u += 0.01;
        }
    }

    #[test]
    fn known_values() {
        assert_eq!(cdf(0.0), 0.5);
        assert!((cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15, "{:e}", cdf(1.0) - 0.841_344_746_068_542_9);
        assert!((z95() - 1.959_963_984_540_054).abs() < 1e-14);
        for p in [1e-6, 0.01, 0.3, 0.5, 0.8, 0.999] {
            assert!((cdf(inv_cdf(p)) - p).abs() < 4e-16 * p.max(1e-2), "p = {p}");
        }
    }

    #[test]
    fn log_cdf_tails() {
        // ln Φ(-10) and ln Φ(-40), reference values from mpmath.
        assert!((ln_cdf(-10.0) - (-53.231_285_150_512_47)).abs() < 1e-9);
        assert!((ln_cdf(-40.0) - (-804.608_442_013_754_6)).abs() < 1e-6);
        assert!((ln_cdf(5.0) - (-2.866_516_129_637_636e-7)).abs() < 1e-18, "{:e}", ln_cdf(5.0));
        let mut u = -60.0;
        let mut prev = f64::NEG_INFINITY;
        while u < 10.0 {
            let v = ln_cdf(u);
            assert!(v.is_finite() && v >= prev, "u = {u}");
            prev = v;
            u += 0.1;
        }
    }

    #[test]
    fn welch_critical_value() {
        assert!((t_critical(0.05, 2.0) - 4.302_652_729_696_142).abs() < 1e-6);
    }
}
