//! One-dimensional Gaussian expectations `E f(αZ + β)`, `Z ~ N(0, 1)`.
//!
//! Every population quantity reduces to integrals of this form. Gauss–Hermite
//! is used while it resolves the integrand; once `α` is large enough that a
//! sigmoid-type `f` looks like a step on the scale of the Hermite nodes, the
//! engine switches to adaptive Gauss–Kronrod on the truncated real line with
//! breakpoints placed around the transition `z₀ = -β/α`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::kernels::{omega_d1, omega_d2};

pub const DEFAULT_ORDER: usize = 61;
pub const MAX_ORDER: usize = 512;

/// Gauss–Hermite rule for `∫ g(x) e^{-x²} dx` (physicists' convention).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GhRule {
    order: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GhRule {
    /// Builds the rule from the eigenvalues of the Hermite Jacobi matrix
    /// (Sturm bisection), polished by Newton steps on the Hermite function
    /// `ψ_n`. Weights come from the Christoffel sum `e^{-x²}/Σ ψ_k(x)²`.
    ///
    /// Weights of the outermost nodes fall below `f64::MIN_POSITIVE` once
    /// the largest node exceeds about 26.6 (order ≳ 350) and flush to zero.
    pub fn new(order: usize) -> Result<Self> {
        if !(1..=MAX_ORDER).contains(&order) {
            return domain(format!("Gauss–Hermite order must be in 1..={MAX_ORDER}, got {order}"));
        }
        let half = order / 2;
        let mut positive = Vec::with_capacity(half);
        // Eigenvalues in descending order: index order-1 is the largest.
        for k in 0..half {
            let x = jacobi_eigenvalue(order, order - 1 - k);
            positive.push(newton_polish(order, x));
        }
        let mut nodes = Vec::with_capacity(order);
        nodes.extend(positive.iter().map(|x| -x));
        if order % 2 == 1 {
            nodes.push(0.0);
        }
        nodes.extend(positive.iter().rev());
        let weights = nodes.iter().map(|&x| christoffel_weight(order, x)).collect();
        Ok(Self {
            order,
            nodes,
            weights,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `Σ wᵢ g(xᵢ) ≈ ∫ g(x) e^{-x²} dx`
    pub fn integrate<F: Fn(f64) -> f64>(&self, g: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * g(x))
            .sum()
    }

    /// Largest `|α|` for which the plain rule is trusted on sigmoid-type
    /// integrands. For `ω(√2αx + β)` the nearest complex poles sit at
    /// distance `π/(2√2α)` from the real axis, which gives a Gauss–Hermite
    /// error of order `exp(-π√m/α)`; the cut keeps that below `e^{-40}`.
    pub fn resolved_alpha(&self) -> f64 {
        PI * (self.order as f64).sqrt() / 40.0
    }
}

impl Default for GhRule {
    fn default() -> Self {
        Self::new(DEFAULT_ORDER).expect("default order is in range")
    }
}

/// Sturm count: number of eigenvalues of the Hermite Jacobi matrix below `x`.
fn sturm_count(order: usize, x: f64) -> usize {
    let mut count = 0;
    let mut q = -x;
    if q < 0.0 {
        count += 1;
    }
    for k in 1..order {
        let b2 = k as f64 / 2.0;
        let prev = if q == 0.0 { f64::EPSILON * (1.0 + x.abs()) } else { q };
        q = -x - b2 / prev;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// The `k`-th smallest (0-based) eigenvalue by bisection.
fn jacobi_eigenvalue(order: usize, k: usize) -> f64 {
    let bound = (2.0 * order as f64 + 1.0).sqrt() + 1.0;
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(order, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Returns `(ψ_n(x), ψ_{n-1}(x), Σ_{k<n} ψ_k(x)²)` for the normalized
/// Hermite functions.
fn hermite_functions(order: usize, x: f64) -> (f64, f64, f64) {
    let mut prev = 0.0;
    let mut cur = PI.powf(-0.25) * (-x * x / 2.0).exp();
    let mut sum_sq = 0.0;
    for k in 1..=order {
        sum_sq += cur * cur;
        let kf = k as f64;
        let next = (2.0 / kf).sqrt() * x * cur - ((kf - 1.0) / kf).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    (cur, prev, sum_sq)
}

fn newton_polish(order: usize, mut x: f64) -> f64 {
    for _ in 0..3 {
        let (psi_n, psi_nm1, _) = hermite_functions(order, x);
        let deriv = (2.0 * order as f64).sqrt() * psi_nm1 - x * psi_n;
        if deriv == 0.0 || !deriv.is_finite() {
            break;
        }
        let step = psi_n / deriv;
        x -= step;
        if step.abs() <= 1e-16 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

fn christoffel_weight(order: usize, x: f64) -> f64 {
    let (_, _, sum_sq) = hermite_functions(order, x);
    (-x * x).exp() / sum_sq
}

/// `E f(αZ + β)` for `Z ~ N(0, 1)`.
///
/// Fails if the result is not finite.
pub fn gauss_expectation<F: Fn(f64) -> f64>(f: F, alpha: f64, beta: f64, rule: &GhRule) -> Result<f64> {
    if !(alpha.is_finite() && beta.is_finite()) {
        return domain(format!("gauss_expectation needs finite α, β (got {alpha}, {beta})"));
    }
    let value = expectation(&f, alpha, beta, rule);
    if value.is_finite() {
        Ok(value)
    } else {
        domain(format!("integrand is not finite at the quadrature nodes (α = {alpha}, β = {beta})"))
    }
}

pub(crate) fn expectation<F: Fn(f64) -> f64>(f: &F, alpha: f64, beta: f64, rule: &GhRule) -> f64 {
    if alpha == 0.0 {
        return f(beta);
    }
    let alpha = alpha.abs();
    if alpha <= rule.resolved_alpha() {
        let s = std::f64::consts::SQRT_2 * alpha;
        rule.integrate(|x| f(s * x + beta)) / PI.sqrt()
    } else {
        split_expectation(f, alpha, beta)
    }
}

/// Beyond `|z| = 12` the standard normal carries less than 4e-33 of mass.
const Z_TRUNCATION: f64 = 12.0;
const PANEL_TOL: f64 = 1e-16;

fn split_expectation<F: Fn(f64) -> f64>(f: &F, alpha: f64, beta: f64) -> f64 {
    let z0 = -beta / alpha;
    let mut cuts = vec![-Z_TRUNCATION, Z_TRUNCATION];
    for k in [0.0, 1.0, 4.0, 16.0, 64.0] {
        for sign in [-1.0, 1.0] {
            let c = z0 + sign * k / alpha;
            if c > -Z_TRUNCATION && c < Z_TRUNCATION {
                cuts.push(c);
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let g = |z: f64| standard_normal_pdf(z) * f(alpha * z + beta);
    cuts.windows(2)
        .map(|w| adaptive_gauss_kronrod(&g, w[0], w[1], PANEL_TOL))
        .sum()
}

pub fn standard_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Largest `|β|` (given `α`) below which [`expect_tanh`] and
/// [`expect_omega_d1`] actually integrate. Past it every node sees an
/// argument beyond 150 in magnitude, so `tanh` is ±1 and `ω'` is below
/// `2e^{-300}`.
fn saturation_cut(alpha: f64) -> f64 {
    (38.0 * alpha.abs() + 150.0).max(300.0)
}

/// `E tanh(αZ + β) = 2 E ω(αZ + β) - 1`, computed for `|β|` and reflected so
/// the result is exactly odd in `β`.
pub fn expect_tanh(alpha: f64, beta: f64, rule: &GhRule) -> f64 {
    let b = beta.abs();
    let v = if b > saturation_cut(alpha) {
        1.0
    } else {
        expectation(&f64::tanh, alpha, b, rule)
    };
    reflect_odd(v, beta)
}

fn reflect_odd(v: f64, beta: f64) -> f64 {
    if beta == 0.0 {
        0.0
    } else if beta < 0.0 {
        -v
    } else {
        v
    }
}

/// `E ω(αZ + β)`.
pub fn expect_omega(alpha: f64, beta: f64, rule: &GhRule) -> f64 {
    0.5 * (1.0 + expect_tanh(alpha, beta, rule))
}

/// `E ω'(αZ + β)`, even in `β`.
pub fn expect_omega_d1(alpha: f64, beta: f64, rule: &GhRule) -> f64 {
    let b = beta.abs();
    if b > saturation_cut(alpha) {
        0.0
    } else {
        expectation(&omega_d1, alpha, b, rule)
    }
}

/// `E ω''(αZ + β)`, odd in `β`.
pub fn expect_omega_d2(alpha: f64, beta: f64, rule: &GhRule) -> f64 {
    let b = beta.abs();
    if b > saturation_cut(alpha) {
        return 0.0;
    }
    reflect_odd(expectation(&omega_d2, alpha, b, rule), beta)
}

// 15-point Kronrod extension of the 7-point Gauss–Legendre rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod_15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, (kronrod - gauss).abs() * half)
}

/// Recursive bisection until each panel's Kronrod–Gauss gap is below its
/// share of `tol` (or 1e-14 relative).
pub fn adaptive_gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (value, err) = gauss_kronrod_15(f, a, b);
        if err <= tol.max(1e-14 * value.abs()) || depth >= 48 {
            return value;
        }
        let mid = 0.5 * (a + b);
        recurse(f, a, mid, 0.5 * tol, depth + 1) + recurse(f, mid, b, 0.5 * tol, depth + 1)
    }
    if a == b {
        return 0.0;
    }
    recurse(f, a, b, tol, 0)
}

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GlRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GlRule {
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 || order > MAX_ORDER {
            return domain(format!("Gauss–Legendre order must be in 1..={MAX_ORDER}, got {order}"));
        }
        let n = order as f64;
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        for i in 0..order.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (n + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre(order, x);
                dp = d;
                let step = p / d;
                x -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(order, x);
            if d.is_finite() {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[order - 1 - i] = x;
            weights[i] = w;
            weights[order - 1 - i] = w;
        }
        if order % 2 == 1 {
            nodes[order / 2] = 0.0;
        }
        Ok(Self { nodes, weights })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `∫_a^b g(x) dx`
    pub fn integrate<F: Fn(f64) -> f64>(&self, g: F, a: f64, b: f64) -> f64 {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        h * self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * g(c + h * x))
            .sum::<f64>()
    }
}

/// `(P_n(x), P_n'(x))`
fn legendre(order: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=order {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if order == 1 {
        return (x, 1.0);
    }
    let n = order as f64;
    (p1, n * (x * p1 - p0) / (x * x - 1.0))
}
