//! The population EM operator `M(θ) = 2 E[Y ω(⟨Y,θ⟩/σ²)]` and checks of
//! its stability and contraction on `D_{a,r}`.
//!
//! Stein's identity for the symmetric mixture collapses `M` to two scalar
//! Gaussian expectations:
//!
//! `M(θ) = 2θ E ω'(τZ + μ) + θ* (2 E ω(τZ + μ) - 1)`, with `μ = ⟨θ,θ*⟩/σ²`
//! and `τ = ‖θ‖/σ`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, domain, Error, Result};
use crate::kernels::omega;
use crate::model::{mixed_region_probes, MixtureModel, Region};
use crate::quadrature::{expect_omega, expect_omega_d1, expect_omega_d2, expect_tanh, GhRule, GlRule};
use crate::rng::{self, Purpose};
use crate::vector::{distance, dot, lincomb, norm};

/// Slack on theorem-level inequalities (quadrature plus rounding headroom).
pub const THEOREM_SLACK: f64 = 1e-6;
/// Tolerance on individual expectations.
pub const EXPECTATION_TOL: f64 = 1e-9;

/// `(μ, τ)` such that `⟨θ, X⟩/σ² ~ N(μ, τ²)` for `X ~ N(θ*, σ²I)`.
fn projection_params(theta: &[f64], model: &MixtureModel) -> (f64, f64) {
    let s2 = model.sigma() * model.sigma();
    (dot(theta, model.theta_star()) / s2, norm(theta) / model.sigma())
}

pub fn pop_em(theta: &[f64], model: &MixtureModel, rule: &GhRule) -> Result<Vec<f64>> {
    check_dim(model.dim(), theta.len())?;
    let (mu, tau) = projection_params(theta, model);
    let e_d1 = expect_omega_d1(tau, mu, rule);
    let e_tanh = expect_tanh(tau, mu, rule);
    Ok(lincomb(2.0 * e_d1, theta, e_tanh, model.theta_star()))
}

/// Plain Monte Carlo estimate `2·mean(Yᵢ ω(⟨θ,Yᵢ⟩/σ²))` over fresh draws.
/// Only used to cross-check [`pop_em`].
pub fn pop_em_mc_oracle(theta: &[f64], model: &MixtureModel, n_mc: usize, seed: u64) -> Result<Vec<f64>> {
    check_dim(model.dim(), theta.len())?;
    if n_mc < 10_000 {
        return domain(format!("Monte Carlo oracle needs n_mc ≥ 10⁴, got {n_mc}"));
    }
    let s2 = model.sigma() * model.sigma();
    let mut rng = rng::stream(seed, Purpose::MonteCarlo, 0);
    let mut acc = vec![0.0; model.dim()];
    model.for_each_draw(n_mc, &mut rng, |y| {
        let w = omega(dot(theta, y) / s2);
        for (a, v) in acc.iter_mut().zip(y) {
            *a += v * w;
        }
    });
    Ok(acc.into_iter().map(|a| 2.0 * a / n_mc as f64).collect())
}

/// Contraction factor `γ(s, r) = 76 r⁴ e^{-(s/r)²/16}`.
pub fn gamma_contraction(s: f64, r: f64) -> Result<f64> {
    if !(r >= 1.0) {
        return domain(format!("γ(s, r) needs r ≥ 1, got {r}"));
    }
    if !(s >= 0.0) {
        return domain(format!("γ(s, r) needs s ≥ 0, got {s}"));
    }
    Ok(76.0 * r.powi(4) * (-(s / r).powi(2) / 16.0).exp())
}

/// Lower bound `1 - e^{-(as/r)²/5}` on `E ω(⟨θ,X⟩/σ²)` over `D_{a,r}`.
pub fn lemma_omega_lower_bound(a: f64, s: f64, r: f64) -> Result<f64> {
    if !(a > 0.0 && a <= 1.0) || !(r >= 1.0) || !(s >= 0.0) {
        return domain(format!("bound needs a ∈ (0, 1], r ≥ 1, s ≥ 0 (a = {a}, r = {r}, s = {s})"));
    }
    Ok(1.0 - (-(a * s / r).powi(2) / 5.0).exp())
}

/// The `(c₁, c₂)` window `c₁ ≤ r ≤ c₂ s/√log(es)` on which the contraction
/// and stability statements are asserted. The default is the concrete
/// instance for `a = ½`, `κ₁ = κ₂ = ¾`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidityWindow {
    pub c1: f64,
    pub c2: f64,
}

impl Default for ValidityWindow {
    fn default() -> Self {
        Self { c1: 6.0, c2: 0.125 }
    }
}

impl ValidityWindow {
    pub fn upper(&self, s: f64) -> f64 {
        self.c2 * s / (std::f64::consts::E * s).ln().sqrt()
    }

    pub fn contains(&self, s: f64, r: f64) -> bool {
        s > 0.0 && r >= self.c1 && r <= self.upper(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StabilityKind {
    InnerProduct,
    Norm,
}

/// Result of checking one population stability bound over region probes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub kind: StabilityKind,
    #[serde(flatten)]
    pub region: Region,
    pub s: f64,
    pub d: usize,
    pub kappa: f64,
    pub probes: usize,
    /// `a/κ₁` for the inner-product bound, `κ₂ r` for the norm bound (both
    /// in units of `‖θ*‖²` and `‖θ*‖` respectively).
    pub bound: f64,
    /// Minimum of `⟨M(θ),θ*⟩/‖θ*‖²`, or maximum of `‖M(θ)‖/‖θ*‖`.
    pub observed: f64,
    /// Distance from `observed` to `bound` on the safe side.
    pub margin: f64,
    pub extremal_theta: Vec<f64>,
    pub pass: bool,
}

fn validate_probes(probes: usize) -> Result<()> {
    if probes == 0 {
        return Err(Error::Precondition("probe set is empty".into()));
    }
    Ok(())
}

/// `M` evaluated at every probe, in probe order.
fn map_probes(points: &[Vec<f64>], model: &MixtureModel, rule: &GhRule) -> Result<Vec<Vec<f64>>> {
    points.par_iter().map(|p| pop_em(p, model, rule)).collect()
}

/// Checks `⟨M(θ), θ*⟩ ≥ (a/κ₁)‖θ*‖²` on probes of `D_{a,r}`.
pub fn inner_product_stability_check(
    model: &MixtureModel,
    region: Region,
    kappa1: f64,
    probes: usize,
    rule: &GhRule,
    seed: u64,
) -> Result<StabilityReport> {
    let (a, r, s) = (region.a(), region.r(), model.snr());
    if !(kappa1 > a && kappa1 < 1.0) {
        return Err(Error::Precondition(format!("κ₁ ∈ (a, 1) violated: κ₁ = {kappa1}, a = {a}")));
    }
    let cap = a * s / (5.0 * (2.0 / (1.0 - a / kappa1)).ln()).sqrt();
    if !(r <= cap) {
        return Err(Error::Precondition(format!(
            "r ≤ as/√(5 log(2/(1 - a/κ₁))) violated: r = {r} > {cap:.6}"
        )));
    }
    validate_probes(probes)?;
    let points = mixed_region_probes(model, region, probes, seed)?;
    let images = map_probes(&points, model, rule)?;
    let tt = dot(model.theta_star(), model.theta_star());
    let (idx, observed) = images
        .iter()
        .map(|m| dot(m, model.theta_star()) / tt)
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, v)| if v < best.1 { (i, v) } else { best });
    let bound = a / kappa1;
    Ok(StabilityReport {
        kind: StabilityKind::InnerProduct,
        region,
        s,
        d: model.dim(),
        kappa: kappa1,
        probes: points.len(),
        bound,
        observed,
        margin: observed - bound,
        extremal_theta: points[idx].clone(),
        pass: observed >= bound - EXPECTATION_TOL,
    })
}

/// Checks `‖M(θ)‖ ≤ κ₂ r ‖θ*‖` on probes of `D_{a,r}`.
pub fn norm_stability_check(
    model: &MixtureModel,
    region: Region,
    kappa2: f64,
    probes: usize,
    rule: &GhRule,
    seed: u64,
) -> Result<StabilityReport> {
    let (a, r, s) = (region.a(), region.r(), model.snr());
    if !(kappa2 > 0.0 && kappa2 < 1.0) {
        return Err(Error::Precondition(format!("κ₂ ∈ (0, 1) violated: κ₂ = {kappa2}")));
    }
    if !(r >= 4.0 / kappa2) {
        return Err(Error::Precondition(format!("r ≥ 4/κ₂ violated: r = {r} < {:.6}", 4.0 / kappa2)));
    }
    let cap = a * s / (5.0 * (8.0 / kappa2).ln()).sqrt();
    if !(r <= cap) {
        return Err(Error::Precondition(format!(
            "r ≤ as/√(5 log(8/κ₂)) violated: r = {r} > {cap:.6}"
        )));
    }
    validate_probes(probes)?;
    let points = mixed_region_probes(model, region, probes, seed)?;
    let images = map_probes(&points, model, rule)?;
    let tn = model.theta_norm();
    let (idx, observed) = images
        .iter()
        .map(|m| norm(m) / tn)
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best });
    let bound = kappa2 * r;
    Ok(StabilityReport {
        kind: StabilityKind::Norm,
        region,
        s,
        d: model.dim(),
        kappa: kappa2,
        probes: points.len(),
        bound,
        observed,
        margin: bound - observed,
        extremal_theta: points[idx].clone(),
        pass: observed <= bound + EXPECTATION_TOL,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    #[serde(flatten)]
    pub region: Region,
    pub s: f64,
    pub d: usize,
    pub gamma: f64,
    pub max_ratio: f64,
    pub argmax_theta: Vec<f64>,
    /// Largest `‖M(θ)-θ*‖ - γ‖θ-θ*‖` over the probes.
    pub max_excess: f64,
    pub probes: usize,
    pub order: usize,
    /// `γ < 1`; otherwise the contraction statement says nothing.
    pub theorem_applies: bool,
    pub pass: bool,
}

/// Scans `‖M(θ) - θ*‖ / ‖θ - θ*‖` over probes of `D_{1/2,r}` and compares it
/// with `γ(s, r)`.
pub fn contraction_scan(
    model: &MixtureModel,
    region: Region,
    probes: usize,
    rule: &GhRule,
    seed: u64,
) -> Result<ContractionReport> {
    if region.a() != 0.5 {
        return domain(format!("contraction is stated for a = 1/2, got a = {}", region.a()));
    }
    validate_probes(probes)?;
    let points = mixed_region_probes(model, region, probes, seed)?;
    scan_points(model, region, &points, rule)
}

/// [`contraction_scan`] over caller-supplied points of `D_{1/2,r}`.
pub fn scan_points(
    model: &MixtureModel,
    region: Region,
    points: &[Vec<f64>],
    rule: &GhRule,
) -> Result<ContractionReport> {
    validate_probes(points.len())?;
    let s = model.snr();
    let gamma = gamma_contraction(s, region.r())?;
    let distances = probe_distances(model, points, rule)?;
    let mut max_ratio = 0.0;
    let mut argmax = model.theta_star().to_vec();
    let mut max_excess = f64::NEG_INFINITY;
    for (p, &(before, after)) in points.iter().zip(&distances) {
        max_excess = max_excess.max(after - gamma * before);
        if before > 0.0 {
            let ratio = after / before;
            if ratio > max_ratio {
                max_ratio = ratio;
                argmax = p.clone();
            }
        }
    }
    let theorem_applies = gamma < 1.0;
    Ok(ContractionReport {
        region,
        s,
        d: model.dim(),
        gamma,
        max_ratio,
        argmax_theta: argmax,
        max_excess,
        probes: points.len(),
        order: rule.order(),
        theorem_applies,
        pass: !theorem_applies || max_excess <= THEOREM_SLACK,
    })
}

/// `(‖θ − θ*‖, ‖M(θ) − θ*‖)` for each point.
pub fn probe_distances(model: &MixtureModel, points: &[Vec<f64>], rule: &GhRule) -> Result<Vec<(f64, f64)>> {
    let images = map_probes(points, model, rule)?;
    let star = model.theta_star();
    Ok(points
        .iter()
        .zip(&images)
        .map(|(p, m)| (distance(p, star), distance(m, star)))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

/// Both sides of the interpolation identity for `ρ = ω`:
///
/// `E ω(X₁) - E ω(X₀) = ∫₀¹ E[(μ₁-μ₀) ω'(X_λ) + ½(σ₁²-σ₀²) ω''(X_λ)] dλ`
///
/// with `X_λ ~ N(μ_λ, σ_λ²)`, `μ_λ = (1-λ)μ₀ + λμ₁` and
/// `σ_λ² = (1-λ)σ₀² + λσ₁²`. The λ-integral uses 64-point Gauss–Legendre.
pub fn normal_difference_identity_check(
    mu0: f64,
    sigma0: f64,
    mu1: f64,
    sigma1: f64,
    rule: &GhRule,
) -> Result<IdentityCheck> {
    if !(sigma0 > 0.0 && sigma1 > 0.0) {
        return domain(format!("σ₀, σ₁ must be positive (got {sigma0}, {sigma1})"));
    }
    let lhs = 0.5 * (expect_tanh(sigma1, mu1, rule) - expect_tanh(sigma0, mu0, rule));
    let (v0, v1) = (sigma0 * sigma0, sigma1 * sigma1);
    let gl = GlRule::new(64)?;
    let rhs = gl.integrate(
        |lambda| {
            let mu = (1.0 - lambda) * mu0 + lambda * mu1;
            let sd = ((1.0 - lambda) * v0 + lambda * v1).sqrt();
            (mu1 - mu0) * expect_omega_d1(sd, mu, rule) + 0.5 * (v1 - v0) * expect_omega_d2(sd, mu, rule)
        },
        0.0,
        1.0,
    );
    Ok(IdentityCheck {
        lhs,
        rhs,
        gap: (lhs - rhs).abs(),
    })
}

/// Smallest margin `E ω(⟨θ,X⟩/σ²) - (1 - e^{-(as/r)²/5})` over the points.
pub fn omega_floor_margin(model: &MixtureModel, region: Region, points: &[Vec<f64>], rule: &GhRule) -> Result<f64> {
    let bound = lemma_omega_lower_bound(region.a(), model.snr(), region.r())?;
    points
        .iter()
        .map(|p| {
            check_dim(model.dim(), p.len())?;
            let (mu, tau) = projection_params(p, model);
            Ok(expect_omega(tau, mu, rule) - bound)
        })
        .try_fold(f64::INFINITY, |acc, m: Result<f64>| Ok(acc.min(m?)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_region_points, ProbeMode};
    use crate::vector::{max_abs_diff, neg};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn rule() -> GhRule {
        GhRule::default()
    }

    fn random_vec(d: usize, seed: u64, scale_by: f64) -> Vec<f64> {
        let mut rng = rng::stream(seed, Purpose::Experiment, 99);
        (0..d).map(|_| scale_by * rng.sample::<f64, _>(StandardNormal)).collect()
    }

    /// Central-difference Jacobian of `M` at `theta`.
    fn jacobian_fd(theta: &[f64], model: &MixtureModel, h: f64) -> Vec<Vec<f64>> {
        let d = theta.len();
        (0..d)
            .map(|j| {
                let mut plus = theta.to_vec();
                let mut minus = theta.to_vec();
                plus[j] += h;
                minus[j] -= h;
                let mp = pop_em(&plus, model, &rule()).unwrap();
                let mm = pop_em(&minus, model, &rule()).unwrap();
                mp.iter().zip(&mm).map(|(a, b)| (a - b) / (2.0 * h)).collect()
            })
            .collect()
    }

    #[test]
    fn fixed_point_and_origin() {
        for d in [1, 2, 8, 16] {
            for s in [1.0, 2.0, 5.0, 10.0, 20.0] {
                let model = MixtureModel::with_snr(d, s, 1.3).unwrap();
                let m = pop_em(model.theta_star(), &model, &rule()).unwrap();
                let rel = distance(&m, model.theta_star()) / model.theta_norm();
                assert!(rel <= 1e-8, "d={d} s={s}: {rel:e}");
            }
        }
        let model = MixtureModel::with_snr(3, 4.0, 1.0).unwrap();
        assert_eq!(pop_em(&[0.0; 3], &model, &rule()).unwrap(), vec![0.0; 3]);
        assert!(pop_em(&[1.0], &model, &rule()).is_err());
    }

    #[test]
    fn odd_symmetry() {
        let model = MixtureModel::new(random_vec(5, 1, 2.0), 0.8).unwrap();
        for seed in 0..20 {
            let theta = random_vec(5, 100 + seed, 3.0);
            let plus = pop_em(&theta, &model, &rule()).unwrap();
            let minus = pop_em(&neg(&theta), &model, &rule()).unwrap();
            assert!(max_abs_diff(&plus, &neg(&minus)) <= 1e-12);
        }
    }

    #[test]
    fn rotation_equivariance() {
        // Rotation by π/5 in the (0, 2) plane.
        let (c, s) = ((std::f64::consts::PI / 5.0).cos(), (std::f64::consts::PI / 5.0).sin());
        let rotate = |v: &[f64]| {
            let mut w = v.to_vec();
            w[0] = c * v[0] - s * v[2];
            w[2] = s * v[0] + c * v[2];
            w
        };
        let model = MixtureModel::new(vec![2.0, -1.0, 0.5, 1.5], 1.1).unwrap();
        let rotated = model.map_center(rotate).unwrap();
        for seed in 0..10 {
            let theta = random_vec(4, 200 + seed, 2.0);
            let lhs = pop_em(&rotate(&theta), &rotated, &rule()).unwrap();
            let rhs = rotate(&pop_em(&theta, &model, &rule()).unwrap());
            assert!(max_abs_diff(&lhs, &rhs) <= 1e-10);
        }
    }

    #[test]
    fn monte_carlo_oracle_agrees() {
        let model = MixtureModel::with_snr(4, 5.0, 1.0).unwrap();
        let region = Region::new(0.5, 2.0).unwrap();
        let n_mc = 1_000_000;
        let theta = &sample_region_points(&model, region, 1, 3, ProbeMode::UniformRejection).unwrap()[0];
        let exact = pop_em(theta, &model, &rule()).unwrap();
        let mc = pop_em_mc_oracle(theta, &model, n_mc, 8).unwrap();
        // Per-coordinate SE of 2Yω ≤ 2·√E[Y_j²]/√n.
        for j in 0..4 {
            let second = model.theta_star()[j].powi(2) + model.sigma().powi(2);
            let se = 2.0 * second.sqrt() / (n_mc as f64).sqrt();
            assert!((exact[j] - mc[j]).abs() <= 6.0 * se, "coord {j}: {} vs {}", exact[j], mc[j]);
        }
        let again = pop_em_mc_oracle(theta, &model, n_mc, 8).unwrap();
        assert_eq!(mc, again);
        let origin = pop_em_mc_oracle(&[0.0; 4], &model, 10_000, 2).unwrap();
        let cap = 6.0 / 100.0 * model.sigma() * (1.0 + model.snr().powi(2)).sqrt();
        assert!(origin.iter().all(|v| v.abs() <= cap));
        assert!(pop_em_mc_oracle(theta, &model, 100, 1).is_err());
    }

    #[test]
    fn gamma_values() {
        assert_eq!(gamma_contraction(0.0, 1.0).unwrap(), 76.0);
        let g = gamma_contraction(40.0, 2.0).unwrap();
        assert!((g / (1216.0 * (-25.0f64).exp()) - 1.0).abs() < 1e-14);
        assert!((g - 1.689e-8).abs() < 1e-11);
        let threshold = 4.0 * 76f64.ln().sqrt();
        assert!((threshold - 8.32417).abs() < 1e-5);
        assert!(gamma_contraction(threshold - 1e-6, 1.0).unwrap() > 1.0);
        assert!(gamma_contraction(threshold + 1e-6, 1.0).unwrap() < 1.0);
        assert!(gamma_contraction(3.0, 0.5).is_err());
    }

    #[test]
    fn omega_lower_bound_values() {
        assert_eq!(lemma_omega_lower_bound(0.5, 0.0, 2.0).unwrap(), 0.0);
        let b = lemma_omega_lower_bound(0.5, 20.0, 2.0).unwrap();
        assert!((b - (1.0 - (-5.0f64).exp())).abs() < 1e-15);
        assert!((b - 0.993_262_1).abs() < 1e-7);
    }

    #[test]
    fn omega_floor_holds_on_probes() {
        for (d, s, r) in [(2, 5.0, 2.0), (4, 20.0, 2.0), (3, 10.0, 6.0)] {
            let model = MixtureModel::with_snr(d, s, 1.0).unwrap();
            let region = Region::new(0.5, r).unwrap();
            let points = mixed_region_probes(&model, region, 200, 5).unwrap();
            let margin = omega_floor_margin(&model, region, &points, &rule()).unwrap();
            assert!(margin >= -EXPECTATION_TOL, "d={d} s={s} r={r}: {margin}");
        }
    }

    #[test]
    fn inner_product_stability() {
        let model = MixtureModel::with_snr(4, 60.0, 1.0).unwrap();
        let region = Region::new(0.5, 6.0).unwrap();
        let report = inner_product_stability_check(&model, region, 0.75, 1_000, &rule(), 3).unwrap();
        assert!(report.pass, "{report:?}");
        assert!(report.observed >= 2.0 / 3.0);
        // r-cap for s = 60 is about 10.03.
        let wide = Region::new(0.5, 11.0).unwrap();
        let err = inner_product_stability_check(&model, wide, 0.75, 10, &rule(), 3).unwrap_err();
        assert!(err.to_string().contains("log(2/(1 - a/κ₁))"));
        assert!(inner_product_stability_check(&model, region, 0.4, 10, &rule(), 3).is_err());
    }

    #[test]
    fn norm_stability() {
        let model = MixtureModel::with_snr(4, 120.0, 1.0).unwrap();
        let region = Region::new(0.5, 6.0).unwrap();
        let report = norm_stability_check(&model, region, 0.75, 1_000, &rule(), 4).unwrap();
        assert!(report.pass, "{report:?}");
        // θ* itself maps to a point of norm ‖θ*‖ ≤ κ₂ r ‖θ*‖.
        assert!(report.observed >= 1.0 - 1e-9);
        let small = Region::new(0.5, 5.0).unwrap();
        let err = norm_stability_check(&model, small, 0.75, 10, &rule(), 4).unwrap_err();
        assert!(err.to_string().contains("4/κ₂"));
    }

    #[test]
    fn contraction_at_high_snr() {
        let model = MixtureModel::with_snr(2, 100.0, 1.0).unwrap();
        let region = Region::new(0.5, 6.0).unwrap();
        let report = contraction_scan(&model, region, 2_000, &rule(), 1).unwrap();
        let gamma = gamma_contraction(100.0, 6.0).unwrap();
        assert!((gamma - 2.84e-3).abs() < 1e-5);
        assert!(report.theorem_applies && report.pass);
        assert!(report.max_ratio < 1.0 && report.max_ratio <= gamma);
    }

    #[test]
    fn contraction_silent_when_gamma_exceeds_one() {
        let model = MixtureModel::with_snr(2, 1.0, 1.0).unwrap();
        let region = Region::new(0.5, 1.0).unwrap();
        let report = contraction_scan(&model, region, 200, &rule(), 1).unwrap();
        assert!(!report.theorem_applies);
        assert!(report.pass);
        assert!(report.max_ratio > 0.0);
        let off = Region::new(0.4, 1.0).unwrap();
        assert!(contraction_scan(&model, off, 10, &rule(), 1).is_err());
    }

    #[test]
    fn local_ratio_matches_jacobian() {
        let model = MixtureModel::with_snr(3, 3.0, 1.0).unwrap();
        let star = model.theta_star().to_vec();
        let eps = 1e-6;
        let mut theta = star.clone();
        theta[0] += eps;
        let ratio = distance(&pop_em(&theta, &model, &rule()).unwrap(), &star) / eps;
        let jac = jacobian_fd(&star, &model, 1e-4);
        let column = &jac[0];
        assert!((ratio - norm(column)).abs() <= 1e-4 * norm(column).max(1e-3), "{ratio} vs {}", norm(column));

        let high = MixtureModel::with_snr(2, 100.0, 1.0).unwrap();
        let region = Region::new(0.5, 6.0).unwrap();
        let mut near = high.theta_star().to_vec();
        near[0] += eps;
        let report = scan_points(&high, region, &[near], &rule()).unwrap();
        assert!(report.max_ratio <= report.gamma + 1e-3);
    }

    #[test]
    fn interpolation_identity() {
        let r = rule();
        let same = normal_difference_identity_check(0.3, 1.2, 0.3, 1.2, &r).unwrap();
        assert_eq!(same.lhs, 0.0);
        assert!(same.rhs.abs() < 1e-15);
        let shift = normal_difference_identity_check(0.0, 1.0, 1.0, 1.0, &r).unwrap();
        assert!(shift.gap <= 1e-9, "{shift:?}");
        let spread = normal_difference_identity_check(0.0, 1.0, 0.0, 2.0, &r).unwrap();
        assert!(spread.gap <= 1e-9, "{spread:?}");
        let both = normal_difference_identity_check(-2.0, 0.3, 5.0, 7.0, &r).unwrap();
        assert!(both.gap <= 1e-9, "{both:?}");
        assert!(normal_difference_identity_check(0.0, 0.0, 1.0, 1.0, &r).is_err());
    }

    #[test]
    fn validity_window() {
        let w = ValidityWindow::default();
        assert!(w.contains(120.0, 6.0));
        assert!(!w.contains(100.0, 6.0));
        assert!(!w.contains(1000.0, 5.0));
        let upper = w.upper(120.0);
        assert!((upper - 120.0 / (8.0 * (std::f64::consts::E * 120.0).ln().sqrt())).abs() < 1e-12);
    }
}
