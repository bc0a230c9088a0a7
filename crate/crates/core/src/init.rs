//! Random initializers, the norm estimator `T̂`, and multi-start EM.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, domain, Error, Result};
use crate::kernels::{chi_square_upper_tail, std_normal_cdf};
use crate::model::{Dataset, MixtureModel};
use crate::rng::{self, Purpose, StreamRng};
use crate::sample_em::{reduce_rows, run_em, EmConfig, EmTrace};
use crate::vector::dot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    KnownNorm,
    EstimatedNorm,
}

/// Outcome of drawing many initializers and counting hits of `D̃_{a,r}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitReport {
    pub strategy: InitStrategy,
    pub draws: u64,
    pub hits: u64,
    pub empirical_prob: f64,
    /// Binomial standard error of `empirical_prob`.
    pub std_error: f64,
    pub theoretical_lower_bound: f64,
    /// The bound is `≤ 0` and says nothing.
    pub vacuous: bool,
    pub t_hat: Option<f64>,
    /// Empirical `P(|T̂ − ‖θ*‖²| < ε)` used in the estimated-norm bound.
    pub p_event: Option<f64>,
}

impl InitReport {
    pub fn new(strategy: InitStrategy, draws: u64, hits: u64, bound: f64) -> Self {
        let p = hits as f64 / draws as f64;
        Self {
            strategy,
            draws,
            hits,
            empirical_prob: p,
            std_error: (p * (1.0 - p) / draws as f64).sqrt(),
            theoretical_lower_bound: bound,
            vacuous: bound <= 0.0,
            t_hat: None,
            p_event: None,
        }
    }

    /// `empirical ≥ bound − k·SE`.
    pub fn dominates(&self, k: f64) -> bool {
        self.empirical_prob >= self.theoretical_lower_bound - k * self.std_error
    }
}

/// `T̂ = (1/n)Σ(‖Yᵢ‖² − dσ²)`, an unbiased estimate of `‖θ*‖²`.
pub fn t_hat(dataset: &Dataset, sigma: f64) -> f64 {
    let sum = reduce_rows(dataset, |y, acc| acc[0] += dot(y, y));
    sum[0] / dataset.n() as f64 - dataset.dim() as f64 * sigma * sigma
}

/// `T̂` without materializing a dataset. `Σ‖Yᵢ‖²/σ²` is noncentral
/// chi-square with `nd` degrees of freedom and noncentrality `n s²`, drawn
/// as `(Z + √λ)² + χ²_{nd−1}`.
pub fn sample_t_hat(model: &MixtureModel, n: usize, rng: &mut StreamRng) -> f64 {
    let s2 = model.sigma() * model.sigma();
    let k = (n * model.dim()) as f64;
    let lambda = n as f64 * model.snr().powi(2);
    let z: f64 = rng.sample(StandardNormal);
    let central = if k > 1.0 {
        2.0 * Gamma::new(0.5 * (k - 1.0), 1.0).expect("shape is positive").sample(rng)
    } else {
        0.0
    };
    let total = (z + lambda.sqrt()).powi(2) + central;
    s2 * (total - k) / n as f64
}

/// `Var T̂ = 2σ²(dσ² + 2‖θ*‖²)/n`.
pub fn t_hat_variance(n: usize, d: usize, sigma: f64, norm_theta: f64) -> f64 {
    let s2 = sigma * sigma;
    2.0 * s2 * (d as f64 * s2 + 2.0 * norm_theta * norm_theta) / n as f64
}

pub(crate) fn gaussian_draw(d: usize, sd: f64, rng: &mut StreamRng) -> Vec<f64> {
    (0..d).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// `θ̂₀ ~ N(0, ‖θ*‖² I_d)`.
pub fn init_known_norm(model: &MixtureModel, seed: u64) -> Vec<f64> {
    known_norm_draw(model, seed, 0)
}

fn known_norm_draw(model: &MixtureModel, seed: u64, index: u64) -> Vec<f64> {
    let mut rng = rng::stream(seed, Purpose::Init, index);
    gaussian_draw(model.dim(), model.theta_norm(), &mut rng)
}

/// Variance `T̂₊ + ε` of the estimated-norm initializer.
pub fn estimated_norm_variance(t_hat: f64, epsilon: f64) -> f64 {
    t_hat.max(0.0) + epsilon
}

/// `θ̂₀ ~ N(0, (T̂₊ + σ²/2) I_d)`. Returns the draw and `T̂`.
pub fn init_estimated_norm(dataset: &Dataset, sigma: f64, seed: u64) -> (Vec<f64>, f64) {
    init_estimated_norm_with(dataset, sigma, 0.5 * sigma * sigma, seed)
}

/// [`init_estimated_norm`] with variance inflation `ε` in place of `σ²/2`.
pub fn init_estimated_norm_with(dataset: &Dataset, sigma: f64, epsilon: f64, seed: u64) -> (Vec<f64>, f64) {
    let th = t_hat(dataset, sigma);
    let sd = estimated_norm_variance(th, epsilon).sqrt();
    let mut rng = rng::stream(seed, Purpose::Init, 0);
    (gaussian_draw(dataset.dim(), sd, &mut rng), th)
}

fn check_bound_args(a: f64, r: f64, d: usize) -> Result<()> {
    if !(a > 0.0 && a < 1.0) || !(r >= 1.0) || d == 0 {
        return domain(format!("bound needs a ∈ (0, 1), r ≥ 1, d ≥ 1 (a = {a}, r = {r}, d = {d})"));
    }
    Ok(())
}

fn chi_tail(d: usize, x: f64) -> Result<f64> {
    let d = u32::try_from(d).map_err(|_| Error::Domain(format!("dimension {d} too large")))?;
    chi_square_upper_tail(d, x)
}

/// `2Φ(−a) − P(χ²_d > r²)`.
pub fn init_prob_lower_bound(a: f64, r: f64, d: usize) -> Result<f64> {
    check_bound_args(a, r, d)?;
    Ok(2.0 * std_normal_cdf(-a) - chi_tail(d, r * r)?)
}

/// `[2Φ(−a) − P(χ²_d > r²/2)]·P(E)`.
pub fn init_prob_lower_bound_estimated(a: f64, r: f64, d: usize, p_event: f64) -> Result<f64> {
    check_bound_args(a, r, d)?;
    if !(0.0..=1.0).contains(&p_event) {
        return domain(format!("P(E) must lie in [0, 1], got {p_event}"));
    }
    Ok((2.0 * std_normal_cdf(-a) - chi_tail(d, 0.5 * r * r)?) * p_event)
}

/// `P(|T̂ − ‖θ*‖²| > ε) ≤ 2exp(−nε²/(36dσ²‖θ*‖²))`, valid for `s ≥ 1` and
/// `ε < 5dσ‖θ*‖`.
pub fn t_hat_tail_bound(n: usize, d: usize, sigma: f64, norm_theta: f64, epsilon: f64) -> Result<f64> {
    if n == 0 || d == 0 || !(sigma > 0.0) || !(epsilon >= 0.0) {
        return domain(format!("tail bound needs n, d ≥ 1, σ > 0, ε ≥ 0 (ε = {epsilon})"));
    }
    if !(norm_theta / sigma >= 1.0) {
        return domain(format!("hypothesis s ≥ 1 violated: s = {}", norm_theta / sigma));
    }
    let cap = 5.0 * d as f64 * sigma * norm_theta;
    if !(epsilon < cap) {
        return domain(format!("hypothesis ε < 5dσ‖θ*‖ violated: ε = {epsilon} ≥ {cap}"));
    }
    let expo = n as f64 * epsilon * epsilon / (36.0 * d as f64 * sigma * sigma * norm_theta * norm_theta);
    Ok(2.0 * (-expo).exp())
}

/// `log cosh x` without overflow.
fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Average of `log(½φ_θ(y) + ½φ_{−θ}(y))` over the sample.
pub fn log_likelihood(theta: &[f64], dataset: &Dataset, sigma: f64) -> Result<f64> {
    check_dim(dataset.dim(), theta.len())?;
    let s2 = sigma * sigma;
    let tt = dot(theta, theta);
    let sum = reduce_rows(dataset, |y, acc| {
        acc[0] += log_cosh(dot(y, theta) / s2) - 0.5 * (dot(y, y) + tt) / s2;
    });
    let d = dataset.dim() as f64;
    Ok(sum[0] / dataset.n() as f64 - 0.5 * d * (2.0 * std::f64::consts::PI * s2).ln())
}

/// Result of running EM from `m` random starts.
#[derive(Debug, Clone)]
pub struct MultiStart {
    pub traces: Vec<EmTrace>,
    pub log_likelihoods: Vec<f64>,
    pub best: usize,
    pub t_hat: Option<f64>,
}

impl MultiStart {
    pub fn best_trace(&self) -> &EmTrace {
        &self.traces[self.best]
    }
}

/// The `index`-th initializer of a multi-start run. Prefixes are shared
/// across `m`: start `k` does not depend on how many starts follow it.
pub fn initializer(
    strategy: InitStrategy,
    model: &MixtureModel,
    t_hat_value: f64,
    epsilon: f64,
    seed: u64,
    index: u64,
) -> Vec<f64> {
    match strategy {
        InitStrategy::KnownNorm => known_norm_draw(model, seed, index),
        InitStrategy::EstimatedNorm => {
            let sd = estimated_norm_variance(t_hat_value, epsilon).sqrt();
            let mut rng = rng::stream(seed, Purpose::Init, index);
            gaussian_draw(model.dim(), sd, &mut rng)
        }
    }
}

/// Runs EM from `m` initializers and keeps the final iterate with the
/// largest log-likelihood (lowest index on ties).
pub fn multi_start(
    dataset: &Dataset,
    model: &MixtureModel,
    m: usize,
    strategy: InitStrategy,
    epsilon: f64,
    config: &EmConfig,
    seed: u64,
) -> Result<MultiStart> {
    if m == 0 {
        return domain("multi-start needs m ≥ 1");
    }
    let th = (strategy == InitStrategy::EstimatedNorm).then(|| t_hat(dataset, model.sigma()));
    let starts: Vec<Vec<f64>> = (0..m as u64)
        .map(|k| initializer(strategy, model, th.unwrap_or(0.0), epsilon, seed, k))
        .collect();
    let traces: Vec<EmTrace> = starts
        .par_iter()
        .map(|t0| run_em(t0, dataset, model, config))
        .collect::<Result<_>>()?;
    let log_likelihoods: Vec<f64> = traces
        .iter()
        .map(|t| log_likelihood(t.final_iterate(), dataset, model.sigma()))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (k, &ll) in log_likelihoods.iter().enumerate() {
        if ll > log_likelihoods[best] {
            best = k;
        }
    }
    Ok(MultiStart {
        traces,
        log_likelihoods,
        best,
        t_hat: th,
    })
}

/// `1 − (1 − q)^m`.
pub fn multi_start_success_bound(q: f64, m: usize) -> f64 {
    1.0 - (1.0 - q.clamp(0.0, 1.0)).powi(m as i32)
}
