//! Invariant suites for the scalar kernels, the quadrature engine and the
//! population operator. Each suite reduces a grid of checks to a few
//! worst-case [`Assertion`]s.

use rand::Rng;

use super::Assertion;
use crate::error::Result;
use crate::kernels::{
    chi_square_chernoff_bound, chi_square_upper_tail, omega, omega_d1, omega_d2, omega_d3, std_normal_upper_tail,
};
use crate::model::{mixed_region_probes, MixtureModel, Region};
use crate::population::{normal_difference_identity_check, omega_floor_margin, pop_em};
use crate::quadrature::{expect_omega, expect_omega_d1, gauss_expectation, standard_normal_pdf, GhRule};
use crate::rng::{self, Purpose};
use crate::vector::{distance, max_abs_diff, neg};

/// Absolute slack on quadrature-level inequalities.
pub const QUAD_SLACK: f64 = 1e-9;

fn grid(lo: f64, hi: f64, step: f64) -> impl Iterator<Item = f64> {
    let count = ((hi - lo) / step).round() as usize;
    (0..=count).map(move |i| lo + step * i as f64)
}

fn max_over(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(f64::NEG_INFINITY, f64::max)
}

/// Derivative identities, finite-difference agreement and the
/// `|ω''| ≤ 2ω'`, `|ω'''| ≤ 4ω'` dominations on `[−10, 10]`.
pub fn kernel_identities() -> Vec<Assertion> {
    let h = 1e-5;
    let fd = |f: fn(f64) -> f64, t: f64| (f(t + h) - f(t - h)) / (2.0 * h);
    let ts: Vec<f64> = grid(-10.0, 10.0, 0.01).collect();
    let fd_err = max_over(ts.iter().map(|&t| {
        (omega_d1(t) - fd(omega, t))
            .abs()
            .max((omega_d2(t) - fd(omega_d1, t)).abs())
            .max((omega_d3(t) - fd(omega_d2, t)).abs())
    }));
    let closed_err = max_over(ts.iter().map(|&t| {
        let w = omega(t);
        let w1 = omega_d1(t);
        (w1 - 2.0 * w * (1.0 - w))
            .abs()
            .max((omega_d2(t) - 2.0 * w1 * (1.0 - 2.0 * w)).abs())
            .max((omega_d3(t) - 4.0 * w1 * (1.0 - 6.0 * w + 6.0 * w * w)).abs())
    }));
    let d2_ratio = max_over(ts.iter().map(|&t| omega_d2(t).abs() / (2.0 * omega_d1(t))));
    let d3_ratio = max_over(ts.iter().map(|&t| omega_d3(t).abs() / (4.0 * omega_d1(t))));
    vec![
        Assertion::at_most("omega derivatives vs finite differences", fd_err, 1e-6),
        Assertion::at_most("omega derivative closed forms", closed_err, 1e-12),
        Assertion::at_most("|omega''| / (2 omega')", d2_ratio, 1.0 + 1e-12),
        Assertion::at_most("|omega'''| / (4 omega')", d3_ratio, 1.0 + 1e-12),
    ]
}

/// Normal survival against `½e^{−t²/2}` and the chi-square Chernoff bound
/// against the exact tail.
pub fn tail_dominations() -> Result<Vec<Assertion>> {
    let normal_gap = max_over(grid(0.0, 40.0, 0.01).map(|t| std_normal_upper_tail(t) - 0.5 * (-0.5 * t * t).exp()));
    let mut chernoff_gap = f64::NEG_INFINITY;
    for d in 1..=64u32 {
        for factor in [1.0, 1.01, 1.1, 1.5, 2.0, 3.0, 4.0, 8.0] {
            let r = (factor * d as f64).sqrt();
            let exact = chi_square_upper_tail(d, r * r)?;
            chernoff_gap = chernoff_gap.max(exact - chi_square_chernoff_bound(d, r)?);
        }
    }
    Ok(vec![
        Assertion::at_most("normal tail minus half gaussian bound", normal_gap, 0.0),
        Assertion::at_most("chi-square tail minus Chernoff bound", chernoff_gap, 0.0),
    ])
}

/// Composite Simpson estimate of `E f(αZ + β)` on `[−12, 12]`.
pub fn simpson_expectation(f: impl Fn(f64) -> f64, alpha: f64, beta: f64, panels: usize) -> f64 {
    let (lo, hi) = (-12.0, 12.0);
    let panels = panels + panels % 2;
    let h = (hi - lo) / panels as f64;
    let g = |z: f64| standard_normal_pdf(z) * f(alpha * z + beta);
    let mut acc = g(lo) + g(hi);
    for i in 1..panels {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * g(lo + h * i as f64);
    }
    acc * h / 3.0
}

pub const ORACLE_ALPHAS: [f64; 5] = [0.1, 1.0, 5.0, 20.0, 50.0];
pub const ORACLE_BETAS: [f64; 5] = [-20.0, -2.0, 0.0, 3.0, 30.0];

/// Rule invariants, agreement with a 10⁶-panel Simpson oracle on a 5×5
/// `(α, β)` grid, and order-61 against order-121 agreement.
pub fn quadrature_oracle(rule: &GhRule) -> Result<Vec<Assertion>> {
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let weight_sum: f64 = rule.weights().iter().sum();
    let nodes = rule.nodes();
    let asym = max_over((0..nodes.len()).map(|i| (nodes[i] + nodes[nodes.len() - 1 - i]).abs()));
    let increasing = nodes.windows(2).all(|w| w[0] < w[1]) && rule.weights().iter().all(|&w| w > 0.0);
    let second = rule.integrate(|x| 2.0 * x * x) / sqrt_pi;

    let mut oracle_gap: f64 = 0.0;
    for &alpha in &ORACLE_ALPHAS {
        for &beta in &ORACLE_BETAS {
            let gh = gauss_expectation(omega, alpha, beta, rule)?;
            oracle_gap = oracle_gap.max((gh - simpson_expectation(omega, alpha, beta, 1_000_000)).abs());
        }
    }
    let low = GhRule::new(61)?;
    let high = GhRule::new(121)?;
    let mut doubling_gap: f64 = 0.0;
    for alpha in [0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0] {
        for beta in [-100.0, -30.0, -5.0, -1.0, 0.0, 1.0, 5.0, 30.0, 100.0] {
            let a = gauss_expectation(omega, alpha, beta, &low)?;
            let b = gauss_expectation(omega, alpha, beta, &high)?;
            doubling_gap = doubling_gap.max((a - b).abs());
        }
    }
    Ok(vec![
        Assertion::within("gauss-hermite weight sum", weight_sum, sqrt_pi, 1e-12 * sqrt_pi),
        Assertion::at_most("gauss-hermite node asymmetry", asym, 1e-12),
        Assertion::at_least("nodes increasing with positive weights", f64::from(u8::from(increasing)), 1.0),
        Assertion::within("E Z^2 through the rule", second, 1.0, 1e-12),
        Assertion::at_most("quadrature vs dense Simpson", oracle_gap, 1e-10),
        Assertion::at_most("order 61 vs order 121", doubling_gap, 1e-10),
    ])
}

/// Monotonicity in `α`, the `½` floor, the shifted lower bound, the
/// region floor on `E ω` and the cap on `E ω'`.
pub fn sigmoid_lemmas(rule: &GhRule, probes: usize, seed: u64) -> Result<Vec<Assertion>> {
    let betas = [0.0, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0, 50.0];
    let alphas: Vec<f64> = grid(0.0, 50.0, 0.25).collect();
    let mut rise = f64::NEG_INFINITY;
    let mut floor = f64::INFINITY;
    for &beta in &betas {
        let mut running_min = f64::INFINITY;
        for &alpha in &alphas {
            let v = expect_omega(alpha, beta, rule);
            rise = rise.max(v - running_min);
            running_min = running_min.min(v);
            floor = floor.min(v);
        }
    }

    let mut shifted = f64::INFINITY;
    for alpha in [0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0] {
        for beta in [0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0] {
            let v = expect_omega(alpha, beta, rule);
            for q in [0.0, 0.25 * beta, 0.5 * beta, beta] {
                let bound = omega(beta - q) * (1.0 - 0.5 * (-q * q / (2.0 * alpha * alpha)).exp());
                shifted = shifted.min(v - bound);
            }
        }
    }

    let mut region_margin = f64::INFINITY;
    for (d, s, r) in [(4, 20.0, 2.0), (4, 60.0, 6.0), (2, 10.0, 1.5)] {
        let model = MixtureModel::with_snr(d, s, 1.0)?;
        let region = Region::new(0.5, r)?;
        let points = mixed_region_probes(&model, region, probes, seed)?;
        region_margin = region_margin.min(omega_floor_margin(&model, region, &points, rule)?);
    }

    let mut cap_gap = f64::NEG_INFINITY;
    for sigma in [0.1, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0] {
        let span = 2.0 * sigma * sigma;
        for mu in grid(-span, span, span / 20.0) {
            let v = expect_omega_d1(sigma, mu, rule);
            cap_gap = cap_gap.max(v - 2.0 * (-0.5 * (mu / sigma).powi(2)).exp());
        }
    }

    Ok(vec![
        Assertion::at_most("E omega non-increasing in alpha (largest rise)", rise, QUAD_SLACK),
        Assertion::at_least("E omega floor minus 1/2 for beta >= 0", floor - 0.5, -QUAD_SLACK),
        Assertion::at_least("E omega minus shifted lower bound", shifted, -QUAD_SLACK),
        Assertion::at_least("E omega minus region floor 1 - exp(-(as/r)^2/5)", region_margin, -QUAD_SLACK),
        Assertion::at_most("E omega' minus 2exp(-(mu/sigma)^2/2)", cap_gap, QUAD_SLACK),
    ])
}

/// The Gaussian interpolation identity for `ω` on random and edge cases.
pub fn interpolation_identity(rule: &GhRule, cases: usize, seed: u64) -> Result<Vec<Assertion>> {
    let mut rng = rng::stream(seed, Purpose::Experiment, 5);
    let mut tuples = vec![(0.3, 1.2, 0.3, 1.2), (0.0, 1.0, 1.0, 1.0), (0.0, 1.0, 0.0, 2.0)];
    for _ in 0..cases {
        tuples.push((
            rng.random_range(-5.0..5.0),
            rng.random_range(0.2..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(0.2..5.0),
        ));
    }
    let mut gap: f64 = 0.0;
    for (m0, s0, m1, s1) in tuples {
        gap = gap.max(normal_difference_identity_check(m0, s0, m1, s1, rule)?.gap);
    }
    Ok(vec![Assertion::at_most("interpolation identity gap", gap, 1e-9)])
}

/// Fixed point at `θ*` and odd symmetry of the population operator.
pub fn population_symmetry(rule: &GhRule, seed: u64) -> Result<Vec<Assertion>> {
    let mut fixed: f64 = 0.0;
    let mut odd: f64 = 0.0;
    let mut rng = rng::stream(seed, Purpose::Experiment, 6);
    for d in [1, 2, 8, 16] {
        for s in [1.0, 2.0, 5.0, 10.0, 20.0] {
            let model = MixtureModel::with_snr(d, s, 1.0)?;
            let m = pop_em(model.theta_star(), &model, rule)?;
            fixed = fixed.max(distance(&m, model.theta_star()) / model.theta_norm());
            for _ in 0..5 {
                let theta: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0) * s).collect();
                let plus = pop_em(&theta, &model, rule)?;
                let minus = pop_em(&neg(&theta), &model, rule)?;
                odd = odd.max(max_abs_diff(&plus, &neg(&minus)));
            }
        }
    }
    Ok(vec![
        Assertion::at_most("relative fixed-point residual at theta*", fixed, 1e-8),
        Assertion::at_most("odd symmetry residual", odd, 1e-12),
    ])
}

/// Every suite above, as run by the `kernels-selftest` experiment.
pub fn kernels_selftest(rule: &GhRule, seed: u64) -> Result<Vec<Assertion>> {
    let mut out = kernel_identities();
    out.extend(tail_dominations()?);
    out.extend(quadrature_oracle(rule)?);
    out.extend(sigmoid_lemmas(rule, 1_000, seed)?);
    out.extend(interpolation_identity(rule, 10, seed)?);
    out.extend(population_symmetry(rule, seed)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_pass(v: &[Assertion]) {
        for a in v {
            assert!(a.pass, "{a:?}");
        }
    }

    #[test]
    fn kernel_suites_pass() {
        all_pass(&kernel_identities());
        all_pass(&tail_dominations().unwrap());
    }

    #[test]
    fn quadrature_suite_passes() {
        all_pass(&quadrature_oracle(&GhRule::default()).unwrap());
    }

    #[test]
    fn sigmoid_suites_pass() {
        let rule = GhRule::default();
        all_pass(&sigmoid_lemmas(&rule, 200, 1).unwrap());
        all_pass(&interpolation_identity(&rule, 10, 1).unwrap());
        all_pass(&population_symmetry(&rule, 1).unwrap());
    }

    #[test]
    fn simpson_oracle_is_exact_on_constants() {
        let v = simpson_expectation(|_| 1.0, 1.0, 0.0, 10_000);
        assert!((v - 1.0).abs() < 1e-12);
    }
}
