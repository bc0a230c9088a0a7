//! Scalar kernels: the stretched logistic `ω(t) = 1/(1+e^{-2t})` and its
//! derivatives, Gaussian and chi-square tails, and the closed-form tail
//! bounds used by the region and initialization results.
//!
//! The unchecked functions are the hot path and propagate NaN. The
//! [`checked`] module wraps them with explicit domain validation.

use crate::error::{domain, Result};

/// Stretched logistic `1/(1+e^{-2t})`, evaluated on the branch that cannot
/// overflow.
#[inline]
pub fn omega(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-2.0 * t).exp())
    } else {
        let e = (2.0 * t).exp();
        e / (1.0 + e)
    }
}

/// `ω' = 2ω(1-ω)`, with `1-ω(t)` taken as `ω(-t)` so the tails keep full
/// relative precision.
#[inline]
pub fn omega_d1(t: f64) -> f64 {
    2.0 * omega(t) * omega(-t)
}

/// `ω'' = 2ω'(1-2ω)`
#[inline]
pub fn omega_d2(t: f64) -> f64 {
    let w = omega(t);
    let wc = omega(-t);
    2.0 * (2.0 * w * wc) * (wc - w)
}

/// `ω''' = 4ω'(1-6ω+6ω²)`, using `1-6ω+6ω² = 1-3ω'`.
#[inline]
pub fn omega_d3(t: f64) -> f64 {
    let d1 = omega_d1(t);
    4.0 * d1 * (1.0 - 3.0 * d1)
}

pub fn std_normal_cdf(t: f64) -> f64 {
    0.5 * libm::erfc(-t / std::f64::consts::SQRT_2)
}

pub fn std_normal_upper_tail(t: f64) -> f64 {
    0.5 * libm::erfc(t / std::f64::consts::SQRT_2)
}

/// `P(χ²_d > x)`.
pub fn chi_square_upper_tail(d: u32, x: f64) -> Result<f64> {
    if d == 0 {
        return domain("chi-square degrees of freedom must be at least 1");
    }
    if !(x >= 0.0) {
        return domain(format!("chi-square argument must be non-negative, got {x}"));
    }
    Ok(regularized_gamma_q(f64::from(d) / 2.0, x / 2.0))
}

/// Chernoff bound `(r/√d)^d e^{-(r²-d)/2}` on `P(χ²_d > r²)`, valid for
/// `r² ≥ d`.
pub fn chi_square_chernoff_bound(d: u32, r: f64) -> Result<f64> {
    if d == 0 {
        return domain("chi-square degrees of freedom must be at least 1");
    }
    let df = f64::from(d);
    // r = √d must land in the domain despite rounding in the square root.
    if !(r * r >= df * (1.0 - 4.0 * f64::EPSILON)) {
        return domain(format!("Chernoff bound needs r² ≥ d (r = {r}, d = {d})"));
    }
    let log = df * (r / df.sqrt()).ln() - (r * r - df) / 2.0;
    Ok(log.exp().min(1.0))
}

/// Regularized upper incomplete gamma `Q(a, x) = Γ(a, x)/Γ(a)`.
///
/// Series for `P` below `x < a + 1`, Lentz continued fraction above.
pub fn regularized_gamma_q(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    let log_prefactor = a * x.ln() - x - libm::lgamma(a);
    if x < a + 1.0 {
        1.0 - lower_gamma_series(a, x, log_prefactor)
    } else {
        upper_gamma_fraction(a, x, log_prefactor)
    }
}

const GAMMA_EPS: f64 = 1e-16;
const GAMMA_MAX_ITER: usize = 10_000;

fn lower_gamma_series(a: f64, x: f64, log_prefactor: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..GAMMA_MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * GAMMA_EPS {
            break;
        }
    }
    sum * log_prefactor.exp()
}

fn upper_gamma_fraction(a: f64, x: f64, log_prefactor: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..GAMMA_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < GAMMA_EPS {
            break;
        }
    }
    log_prefactor.exp() * h
}

/// Domain-checked entry points: non-finite input is rejected instead of
/// propagated.
pub mod checked {
    use super::*;

    fn finite(name: &str, t: f64) -> Result<f64> {
        if t.is_finite() {
            Ok(t)
        } else {
            domain(format!("{name}: argument must be finite, got {t}"))
        }
    }

    pub fn omega(t: f64) -> Result<f64> {
        finite("omega", t).map(super::omega)
    }

    pub fn omega_d1(t: f64) -> Result<f64> {
        finite("omega_d1", t).map(super::omega_d1)
    }

    pub fn omega_d2(t: f64) -> Result<f64> {
        finite("omega_d2", t).map(super::omega_d2)
    }

    pub fn omega_d3(t: f64) -> Result<f64> {
        finite("omega_d3", t).map(super::omega_d3)
    }

    pub fn std_normal_cdf(t: f64) -> Result<f64> {
        finite("std_normal_cdf", t).map(super::std_normal_cdf)
    }

    pub fn std_normal_upper_tail(t: f64) -> Result<f64> {
        finite("std_normal_upper_tail", t).map(super::std_normal_upper_tail)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `Q(k/2, x)` built up from `Q(1/2, x) = erfc(√x)` or `Q(1, x) = e^{-x}`
    /// with the recurrence `Q(a+1, x) = Q(a, x) + x^a e^{-x}/Γ(a+1)`.
    fn q_half_integer_oracle(d: u32, x: f64) -> f64 {
        let half = x / 2.0;
        let (mut a, mut q) = if d.is_multiple_of(2) {
            (1.0, (-half).exp())
        } else {
            (0.5, libm::erfc(half.sqrt()))
        };
        while a < f64::from(d) / 2.0 - 1e-9 {
            q += (a * half.ln() - half - libm::lgamma(a + 1.0)).exp();
            a += 1.0;
        }
        q
    }

    fn grid(lo: f64, hi: f64, step: f64) -> impl Iterator<Item = f64> {
        let n = ((hi - lo) / step).round() as usize;
        (0..=n).map(move |i| lo + step * i as f64)
    }

    #[test]
    fn omega_values() {
        assert_eq!(omega(0.0), 0.5);
        assert!((omega(1.0) - 0.880_797_077_977_882_3).abs() < 1e-15);
        let t = 1.7;
        assert!((omega(t) + omega(-t) - 1.0).abs() <= f64::EPSILON);
        assert_eq!(omega(800.0), 1.0);
        assert_eq!(omega(-800.0), 0.0);
        assert!(omega(-300.0) > 0.0);
        assert!(omega(700.0).is_finite() && omega(-700.0).is_finite());
    }

    #[test]
    fn derivatives_at_zero() {
        assert_eq!(omega_d1(0.0), 0.5);
        assert_eq!(omega_d2(0.0), 0.0);
        assert_eq!(omega_d3(0.0), -1.0);
    }

    #[test]
    fn derivatives_match_central_differences() {
        let h = 1e-5;
        for t in grid(-10.0, 10.0, 0.1) {
            let fd1 = (omega(t + h) - omega(t - h)) / (2.0 * h);
            let fd2 = (omega_d1(t + h) - omega_d1(t - h)) / (2.0 * h);
            let fd3 = (omega_d2(t + h) - omega_d2(t - h)) / (2.0 * h);
            assert!((omega_d1(t) - fd1).abs() <= 1e-6, "ω' at {t}");
            assert!((omega_d2(t) - fd2).abs() <= 1e-6, "ω'' at {t}");
            assert!((omega_d3(t) - fd3).abs() <= 1e-6, "ω''' at {t}");
        }
    }

    #[test]
    fn higher_derivatives_dominated_by_first() {
        for t in grid(-10.0, 10.0, 0.1) {
            assert!(omega_d2(t).abs() <= 2.0 * omega_d1(t));
            assert!(omega_d3(t).abs() <= 4.0 * omega_d1(t));
        }
    }

    #[test]
    fn normal_tail_values() {
        assert_eq!(std_normal_upper_tail(0.0), 0.5);
        assert!((std_normal_upper_tail(1.0) - 0.158_655_253_931_457_05).abs() < 1e-15);
        // Φ(-1/2)
        assert!((std_normal_cdf(-0.5) - 0.308_537_538_725_986_9).abs() < 1e-15);
        for t in [0.0, 0.5, 1.0, 2.0, 4.0] {
            assert!(std_normal_upper_tail(t) <= 0.5 * (-t * t / 2.0).exp());
        }
    }

    #[test]
    fn normal_cdf_and_tail_are_complementary() {
        for t in grid(-8.0, 8.0, 0.05) {
            let total = std_normal_cdf(t) + std_normal_upper_tail(t);
            assert!((total - 1.0).abs() <= 2.0 * f64::EPSILON, "t = {t}");
        }
    }

    #[test]
    fn chi_square_closed_forms() {
        let q = chi_square_upper_tail(2, 4.0).unwrap();
        assert!((q - (-2.0f64).exp()).abs() < 1e-16);
        let q = chi_square_upper_tail(4, 16.0).unwrap();
        assert!((q / (9.0 * (-8.0f64).exp()) - 1.0).abs() < 1e-14);
        for d in [1, 2, 7, 64] {
            assert_eq!(chi_square_upper_tail(d, 0.0).unwrap(), 1.0);
        }
        assert!(chi_square_upper_tail(0, 1.0).is_err());
    }

    #[test]
    fn chi_square_matches_recurrence_oracle() {
        for d in [1, 2, 3, 5, 10, 33, 64, 101, 200] {
            for x in [0.1, 0.5, 1.0, 3.0, 10.0, 50.0, 150.0, 300.0, 600.0, 1000.0] {
                let got = chi_square_upper_tail(d, x).unwrap();
                let want = q_half_integer_oracle(d, x);
                if want < 1e-300 {
                    continue;
                }
                let rel = (got - want).abs() / want;
                assert!(rel <= 1e-10, "d={d} x={x}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn chernoff_bound_dominates_tail() {
        assert!((chi_square_chernoff_bound(9, 3.0).unwrap() - 1.0).abs() < 1e-15);
        let b = chi_square_chernoff_bound(4, 4.0).unwrap();
        assert!((b - 16.0 * (-6.0f64).exp()).abs() < 1e-15);
        assert!((b - 0.039_660).abs() < 1e-5);
        assert!(b >= chi_square_upper_tail(4, 16.0).unwrap());
        for d in 1..=64u32 {
            for ratio in [1.0, 1.5, 2.0, 4.0] {
                let r = (ratio * f64::from(d)).sqrt();
                let bound = chi_square_chernoff_bound(d, r).unwrap();
                let tail = chi_square_upper_tail(d, r * r).unwrap();
                assert!(bound >= tail, "d={d} r²/d={ratio}");
            }
        }
        assert!(chi_square_chernoff_bound(4, 1.9).is_err());
    }

    #[test]
    fn checked_rejects_non_finite() {
        assert!(checked::omega(f64::NAN).is_err());
        assert!(checked::omega_d1(f64::INFINITY).is_err());
        assert!(checked::omega_d3(f64::NEG_INFINITY).is_err());
        assert!(checked::std_normal_upper_tail(f64::NAN).is_err());
        assert_eq!(checked::omega(0.0).unwrap(), 0.5);
    }
}
