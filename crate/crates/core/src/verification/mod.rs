//! Monte Carlo estimators for the quantities the theory bounds only
//! abstractly, and the experiment pipeline built on them.

pub mod experiment;
pub mod selftest;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::init::{
    gaussian_draw, init_prob_lower_bound, init_prob_lower_bound_estimated, initializer, multi_start,
    sample_t_hat, t_hat, t_hat_tail_bound, t_hat_variance, InitReport, InitStrategy,
};
use crate::model::{nested_region_probes, sample_region_points, MixtureModel, ProbeMode, Region};
use crate::population::{gamma_contraction, pop_em};
use crate::quadrature::GhRule;
use crate::rng::{self, child_seed, Purpose};
use crate::sample_em::{max_ratio_above_floor, run_em, sample_em_step, sign_aligned_error, EmConfig, EmTrace};
use crate::vector::distance;

/// One checked inequality in an experiment report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub observed: f64,
    pub bound: f64,
    pub pass: bool,
}

impl Assertion {
    /// Passes when `observed ≤ bound`.
    pub fn at_most(name: impl Into<String>, observed: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            observed,
            bound,
            pass: observed <= bound,
        }
    }

    /// Passes when `observed ≥ bound`.
    pub fn at_least(name: impl Into<String>, observed: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            observed,
            bound,
            pass: observed >= bound,
        }
    }

    /// Passes when `|observed − bound| ≤ tol`.
    pub fn within(name: impl Into<String>, observed: f64, bound: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            observed,
            bound,
            pass: (observed - bound).abs() <= tol,
        }
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Probe-maximum lower estimate of `S_{a,r} = sup_{D_{a,r}} ‖M_n(θ) − M(θ)‖`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationEstimate {
    #[serde(flatten)]
    pub region: Region,
    pub n: usize,
    pub probes: usize,
    pub seeds: Vec<u64>,
    /// Maximum over probes and seeds.
    pub s_hat: f64,
    /// Per-seed maximum over probes, in seed order.
    pub per_seed: Vec<f64>,
    /// Per-seed `‖M_n(θ*) − θ*‖`.
    pub pointwise: Vec<f64>,
    pub per_n_curve: Vec<(usize, f64)>,
}

impl DeviationEstimate {
    pub fn median(&self) -> f64 {
        median(&self.per_seed)
    }

    pub fn pointwise_mean(&self) -> f64 {
        self.pointwise.iter().sum::<f64>() / self.pointwise.len() as f64
    }
}

/// Dataset seeds for a replicate sweep. Fixed per replicate index so that a
/// sweep over `n` reuses the same streams (each dataset extends the last).
fn dataset_seeds(seed: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|k| child_seed(seed, Purpose::Dataset, k)).collect()
}

pub fn estimate_sup_deviation(
    model: &MixtureModel,
    region: Region,
    n: usize,
    probes: usize,
    n_seeds: usize,
    rule: &GhRule,
    seed: u64,
) -> Result<DeviationEstimate> {
    let points = deviation_probes(model, region, probes, n_seeds, seed)?;
    let images: Vec<Vec<f64>> = points.par_iter().map(|p| pop_em(p, model, rule)).collect::<Result<_>>()?;
    deviation_at(model, region, n, &points, &images, seed, n_seeds)
}

fn deviation_probes(model: &MixtureModel, region: Region, probes: usize, n_seeds: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if probes < 100 {
        return domain(format!("deviation estimate needs at least 100 probes, got {probes}"));
    }
    if n_seeds == 0 {
        return domain("deviation estimate needs at least one seed");
    }
    if model.dim() > 16 {
        return domain(format!("deviation estimate supports d ≤ 16, got {}", model.dim()));
    }
    nested_region_probes(model, region, probes, seed)
}

fn deviation_at(
    model: &MixtureModel,
    region: Region,
    n: usize,
    points: &[Vec<f64>],
    images: &[Vec<f64>],
    seed: u64,
    n_seeds: usize,
) -> Result<DeviationEstimate> {
    let seeds = dataset_seeds(seed, n_seeds);
    let mut per_seed = Vec::with_capacity(n_seeds);
    let mut pointwise = Vec::with_capacity(n_seeds);
    for &ds in &seeds {
        let data = model.sample_dataset(n, ds)?;
        let devs: Vec<f64> = points
            .par_iter()
            .zip(images)
            .map(|(p, m)| Ok(distance(&sample_em_step(p, &data, model.sigma())?, m)))
            .collect::<Result<_>>()?;
        per_seed.push(devs.iter().copied().fold(0.0, f64::max));
        pointwise.push(devs[0]);
    }
    let s_hat = per_seed.iter().copied().fold(0.0, f64::max);
    Ok(DeviationEstimate {
        region,
        n,
        probes: points.len(),
        seeds,
        s_hat,
        per_n_curve: vec![(n, median(&per_seed))],
        per_seed,
        pointwise,
    })
}

/// Deviation estimates over an increasing grid of sample sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationCurve {
    pub estimates: Vec<DeviationEstimate>,
    /// `(n, median over seeds of the probe maximum)`.
    pub per_n_curve: Vec<(usize, f64)>,
    /// `(n, mean over seeds of ‖M_n(θ*) − θ*‖)`.
    pub pointwise_curve: Vec<(usize, f64)>,
    pub sup_slope: f64,
    pub pointwise_slope: f64,
}

pub fn deviation_curve(
    model: &MixtureModel,
    region: Region,
    n_grid: &[usize],
    probes: usize,
    n_seeds: usize,
    rule: &GhRule,
    seed: u64,
) -> Result<DeviationCurve> {
    if n_grid.len() < 2 || n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return domain("n_grid needs at least two strictly increasing sizes");
    }
    let points = deviation_probes(model, region, probes, n_seeds, seed)?;
    let images: Vec<Vec<f64>> = points.par_iter().map(|p| pop_em(p, model, rule)).collect::<Result<_>>()?;
    let estimates: Vec<DeviationEstimate> = n_grid
        .iter()
        .map(|&n| deviation_at(model, region, n, &points, &images, seed, n_seeds))
        .collect::<Result<_>>()?;
    let per_n_curve: Vec<(usize, f64)> = estimates.iter().map(|e| (e.n, e.median())).collect();
    let pointwise_curve: Vec<(usize, f64)> = estimates.iter().map(|e| (e.n, e.pointwise_mean())).collect();
    let xs: Vec<f64> = n_grid.iter().map(|&n| n as f64).collect();
    let slope = |curve: &[(usize, f64)]| log_log_slope(&xs, &curve.iter().map(|c| c.1).collect::<Vec<_>>());
    Ok(DeviationCurve {
        sup_slope: slope(&per_n_curve),
        pointwise_slope: slope(&pointwise_curve),
        estimates,
        per_n_curve,
        pointwise_curve,
    })
}

/// `r‖θ*‖√(‖θ*‖² + σ²)√(d log(1/δ)/n)`, the deviation bound without its
/// unspecified constant.
pub fn deviation_shape(model: &MixtureModel, r: f64, n: usize, delta: f64) -> f64 {
    let t = model.theta_norm();
    let d = model.dim() as f64;
    r * t * (t * t + model.sigma().powi(2)).sqrt() * (d * (1.0 / delta).ln() / n as f64).sqrt()
}

/// Fraction of initializer draws landing in `D̃_{a,r}`, with the matching
/// lower bound. The estimated-norm strategy pairs each draw with a fresh
/// `T̂` over `n` samples and estimates `P(|T̂ − ‖θ*‖²| < σ²/2)` from the
/// same replicates.
pub fn empirical_region_probability(
    model: &MixtureModel,
    region: Region,
    strategy: InitStrategy,
    draws: u64,
    n: usize,
    epsilon: f64,
    seed: u64,
) -> Result<InitReport> {
    if draws < 1_000 {
        return domain(format!("region probability needs at least 10³ draws, got {draws}"));
    }
    let (a, r, d) = (region.a(), region.r(), model.dim());
    match strategy {
        InitStrategy::KnownNorm => {
            let hits = (0..draws)
                .into_par_iter()
                .map(|k| {
                    let theta = initializer(strategy, model, 0.0, epsilon, seed, k);
                    Ok::<u64, crate::Error>(u64::from(model.in_d_tilde(&theta, region)?))
                })
                .try_reduce(|| 0, |x, y| Ok(x + y))?;
            Ok(InitReport::new(strategy, draws, hits, init_prob_lower_bound(a, r, d)?))
        }
        InitStrategy::EstimatedNorm => {
            if n == 0 {
                return domain("estimated-norm strategy needs n ≥ 1");
            }
            let target = model.theta_norm().powi(2);
            let half_var = 0.5 * model.sigma().powi(2);
            let (hits, events) = (0..draws)
                .into_par_iter()
                .map(|k| {
                    let mut rng = rng::stream(seed, Purpose::Replicate, k);
                    let th = sample_t_hat(model, n, &mut rng);
                    let sd = (th.max(0.0) + epsilon).sqrt();
                    let theta = gaussian_draw(d, sd, &mut rng);
                    let hit = u64::from(model.in_d_tilde(&theta, region)?);
                    Ok::<_, crate::Error>((hit, u64::from((th - target).abs() < half_var)))
                })
                .try_reduce(|| (0, 0), |x, y| Ok((x.0 + y.0, x.1 + y.1)))?;
            let p_event = events as f64 / draws as f64;
            let bound = init_prob_lower_bound_estimated(a, r, d, p_event)?;
            let mut report = InitReport::new(strategy, draws, hits, bound);
            report.p_event = Some(p_event);
            Ok(report)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub n: usize,
    pub epsilon: f64,
    pub replicates: u64,
    pub exceedances: u64,
    pub empirical: f64,
    /// `None` when a hypothesis of the bound fails; see `precondition`.
    pub bound: Option<f64>,
    pub precondition: Option<String>,
}

impl TailReport {
    pub fn dominated(&self) -> bool {
        self.bound.is_none_or(|b| self.empirical <= b)
    }
}

/// Empirical `P(|T̂ − ‖θ*‖²| > ε)` over replicates of the exact `T̂` law.
pub fn empirical_t_hat_tail(model: &MixtureModel, n: usize, epsilon: f64, replicates: u64, seed: u64) -> Result<TailReport> {
    if replicates < 1_000 {
        return domain(format!("tail estimate needs at least 10³ replicates, got {replicates}"));
    }
    let target = model.theta_norm().powi(2);
    let exceedances = (0..replicates)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng::stream(seed, Purpose::Replicate, k);
            u64::from((sample_t_hat(model, n, &mut rng) - target).abs() > epsilon)
        })
        .sum::<u64>();
    let (bound, precondition) = match t_hat_tail_bound(n, model.dim(), model.sigma(), model.theta_norm(), epsilon) {
        Ok(b) => (Some(b), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(TailReport {
        n,
        epsilon,
        replicates,
        exceedances,
        empirical: exceedances as f64 / replicates as f64,
        bound,
        precondition,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub replicates: usize,
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
    pub target_mean: f64,
    pub predicted_variance: f64,
}

/// Mean and variance of `T̂` over freshly sampled datasets.
pub fn t_hat_moments(model: &MixtureModel, n: usize, replicates: usize, seed: u64) -> Result<Moments> {
    if replicates < 2 {
        return domain("moments need at least two replicates");
    }
    let values: Vec<f64> = dataset_seeds(seed, replicates)
        .into_par_iter()
        .map(|ds| Ok(t_hat(&model.sample_dataset(n, ds)?, model.sigma())))
        .collect::<Result<_>>()?;
    let k = replicates as f64;
    let mean = values.iter().sum::<f64>() / k;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    Ok(Moments {
        replicates,
        n,
        mean,
        variance,
        std_error: (variance / k).sqrt(),
        target_mean: model.theta_norm().powi(2),
        predicted_variance: t_hat_variance(n, model.dim(), model.sigma(), model.theta_norm()),
    })
}

/// One EM run from a uniform point of `D_{1/2,r}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub index: usize,
    pub data_seed: u64,
    pub steps: usize,
    pub final_error: f64,
    /// `final_error / (√(d/n)‖θ*‖)`.
    pub scaled_error: f64,
    /// Largest step ratio whose starting error exceeds twice the final error.
    pub max_ratio_above_floor: Option<f64>,
    pub all_in_region: bool,
    pub start_in_region: bool,
}

#[derive(Debug, Clone)]
pub struct ConvergenceStudy {
    pub traces: Vec<EmTrace>,
    pub runs: Vec<RunSummary>,
    pub gamma: f64,
    /// Median of `scaled_error` over runs.
    pub c_median: f64,
}

/// Multiple of a run's final error below which step ratios are noise.
pub const NOISE_FLOOR_FACTOR: f64 = 2.0;

pub fn convergence_study(
    model: &MixtureModel,
    n: usize,
    runs: usize,
    config: &EmConfig,
    seed: u64,
) -> Result<ConvergenceStudy> {
    if runs == 0 {
        return domain("convergence study needs at least one run");
    }
    let region = Region::new(0.5, config.r)?;
    let scale = (model.dim() as f64 / n as f64).sqrt() * model.theta_norm();
    let results: Vec<(EmTrace, RunSummary)> = (0..runs)
        .into_par_iter()
        .map(|k| {
            let data_seed = child_seed(seed, Purpose::Dataset, k as u64);
            let data = model.sample_dataset(n, data_seed)?;
            let init_seed = child_seed(seed, Purpose::Init, k as u64);
            let theta0 = sample_region_points(model, region, 1, init_seed, ProbeMode::UniformRejection)?.remove(0);
            let trace = run_em(&theta0, &data, model, config)?;
            let final_error = trace.final_error();
            let summary = RunSummary {
                index: k,
                data_seed,
                steps: trace.steps(),
                final_error,
                scaled_error: final_error / scale,
                max_ratio_above_floor: max_ratio_above_floor(&trace, NOISE_FLOOR_FACTOR * final_error),
                all_in_region: trace.in_region.iter().all(|&b| b),
                start_in_region: model.in_d(&theta0, region)?,
            };
            Ok((trace, summary))
        })
        .collect::<Result<_>>()?;
    let (traces, runs): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let c_median = median(&runs.iter().map(|r| r.scaled_error).collect::<Vec<_>>());
    Ok(ConvergenceStudy {
        traces,
        runs,
        gamma: gamma_contraction(model.snr(), config.r)?,
        c_median,
    })
}

/// Multi-start success fractions for several `m` sharing the same starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub m_values: Vec<usize>,
    pub meta_seeds: usize,
    /// Success means best final sign-aligned error `≤ success_tol·‖θ*‖`.
    pub success_tol: f64,
    pub successes: Vec<usize>,
    pub success_fraction: Vec<f64>,
    /// Per meta-seed, per start: final sign-aligned error over `‖θ*‖`.
    pub start_errors: Vec<Vec<f64>>,
}

#[allow(clippy::too_many_arguments)]
pub fn multi_start_sweep(
    model: &MixtureModel,
    n: usize,
    m_values: &[usize],
    meta_seeds: usize,
    strategy: InitStrategy,
    epsilon: f64,
    config: &EmConfig,
    seed: u64,
) -> Result<SweepResult> {
    let m_max = m_values.iter().copied().max().unwrap_or(0);
    if m_max == 0 || m_values.contains(&0) {
        return domain("multi-start sweep needs m ≥ 1");
    }
    if meta_seeds == 0 {
        return domain("multi-start sweep needs at least one meta-seed");
    }
    let success_tol = 0.1;
    let tn = model.theta_norm();
    let per_seed: Vec<(Vec<bool>, Vec<f64>)> = (0..meta_seeds)
        .into_par_iter()
        .map(|j| {
            let data = model.sample_dataset(n, child_seed(seed, Purpose::Dataset, j as u64))?;
            let init_seed = child_seed(seed, Purpose::Init, j as u64);
            let run = multi_start(&data, model, m_max, strategy, epsilon, config, init_seed)?;
            let errors: Vec<f64> = run
                .traces
                .iter()
                .map(|t| Ok(sign_aligned_error(t.final_iterate(), model)? / tn))
                .collect::<Result<_>>()?;
            let ok = m_values
                .iter()
                .map(|&m| errors[best_prefix(&run.log_likelihoods[..m])] <= success_tol)
                .collect();
            Ok((ok, errors))
        })
        .collect::<Result<_>>()?;
    let successes: Vec<usize> = (0..m_values.len())
        .map(|i| per_seed.iter().filter(|(ok, _)| ok[i]).count())
        .collect();
    Ok(SweepResult {
        m_values: m_values.to_vec(),
        meta_seeds,
        success_tol,
        success_fraction: successes.iter().map(|&c| c as f64 / meta_seeds as f64).collect(),
        successes,
        start_errors: per_seed.into_iter().map(|(_, e)| e).collect(),
    })
}

/// Index of the largest value, first one on ties.
fn best_prefix(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = k;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::std_normal_cdf;
    use crate::quadrature::GlRule;

    #[test]
    fn slope_and_median() {
        let xs = [1.0, 10.0, 100.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-0.5)).collect();
        assert!((log_log_slope(&xs, &ys) + 0.5).abs() < 1e-12);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn deviation_estimates() {
        let model = MixtureModel::with_snr(4, 5.0, 1.0).unwrap();
        let region = Region::new(0.5, 2.0).unwrap();
        let rule = GhRule::default();
        let est = estimate_sup_deviation(&model, region, 1_000, 100, 3, &rule, 1).unwrap();
        assert_eq!(est.per_seed.len(), 3);
        assert!(est.s_hat >= est.median() && est.s_hat > 0.0);
        // Pointwise deviation at θ* stays at CLT scale.
        let cap = 6.0 * model.theta_norm() * ((1.0 + 1.0 / 25.0) * 4.0 / 1_000.0f64).sqrt();
        assert!(est.pointwise.iter().all(|&p| p <= cap));
        assert!(estimate_sup_deviation(&model, region, 1_000, 50, 3, &rule, 1).is_err());

        // Nested probe sets: more probes never lower the estimate.
        let more = estimate_sup_deviation(&model, region, 1_000, 300, 3, &rule, 1).unwrap();
        assert!(more.per_seed.iter().zip(&est.per_seed).all(|(m, e)| m >= e));
    }

    #[test]
    fn deviation_rate() {
        let model = MixtureModel::with_snr(4, 5.0, 1.0).unwrap();
        let region = Region::new(0.5, 2.0).unwrap();
        let curve = deviation_curve(&model, region, &[100, 1_000, 10_000], 100, 10, &GhRule::default(), 2).unwrap();
        assert!((curve.sup_slope + 0.5).abs() < 0.15, "{}", curve.sup_slope);
        assert!((curve.pointwise_slope + 0.5).abs() < 0.15, "{}", curve.pointwise_slope);
        assert!(curve.per_n_curve.windows(2).all(|w| w[1].1 < w[0].1));
    }

    #[test]
    fn region_probability_near_certain() {
        let model = MixtureModel::with_snr(3, 5.0, 1.0).unwrap();
        let region = Region::new(0.01, 10.0 * 3f64.sqrt()).unwrap();
        let rep = empirical_region_probability(&model, region, InitStrategy::KnownNorm, 20_000, 0, 0.0, 1).unwrap();
        assert!((rep.theoretical_lower_bound - 2.0 * std_normal_cdf(-0.01)).abs() < 1e-12);
        assert!(rep.empirical_prob >= 0.99 - 3.0 * rep.std_error);
        assert!(rep.dominates(3.0));
    }

    #[test]
    fn region_probability_in_one_dimension() {
        // d = 1: θ̂₀ = ‖θ*‖Z lands in D̃_{a,r} iff a ≤ |Z| ≤ r.
        let model = MixtureModel::new(vec![2.0], 1.0).unwrap();
        let region = Region::new(0.5, 3.0).unwrap();
        let gl = GlRule::new(64).unwrap();
        let truth = 2.0 * gl.integrate(|z| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt(), 0.5, 3.0);
        let rep = empirical_region_probability(&model, region, InitStrategy::KnownNorm, 50_000, 0, 0.0, 4).unwrap();
        assert!((rep.empirical_prob - truth).abs() <= 3.0 * rep.std_error + 1e-12);
        assert!(rep.dominates(3.0));
    }

    #[test]
    fn estimated_norm_probability() {
        let model = MixtureModel::with_snr(4, 10.0, 1.0).unwrap();
        let region = Region::new(0.5, 2.0 * 8f64.sqrt()).unwrap();
        let rep =
            empirical_region_probability(&model, region, InitStrategy::EstimatedNorm, 5_000, 10_000, 0.5, 3).unwrap();
        assert!(rep.p_event.unwrap() > 0.9);
        assert!(rep.dominates(3.0));
    }

    #[test]
    fn tail_estimates() {
        let model = MixtureModel::with_snr(4, 2.0, 1.0).unwrap();
        let rep = empirical_t_hat_tail(&model, 10_000, 0.5, 5_000, 1).unwrap();
        assert!(rep.dominated());
        assert!(rep.bound.is_some());
        let zero = empirical_t_hat_tail(&model, 10_000, 0.0, 1_000, 1).unwrap();
        assert_eq!(zero.empirical, 1.0);
        assert_eq!(zero.bound, Some(2.0));
        let huge = empirical_t_hat_tail(&model, 10_000, 100.0, 1_000, 1).unwrap();
        assert!(huge.bound.is_none() && huge.precondition.is_some());
        assert_eq!(huge.empirical, 0.0);
    }

    #[test]
    fn convergence_and_sweep() {
        let model = MixtureModel::with_snr(4, 10.0, 1.0).unwrap();
        let config = EmConfig::default();
        let study = convergence_study(&model, 2_000, 4, &config, 5).unwrap();
        assert!(study.runs.iter().all(|r| r.start_in_region && r.all_in_region));
        assert!(study.c_median < 10.0);
        let sweep = multi_start_sweep(&model, 2_000, &[1, 3], 6, InitStrategy::EstimatedNorm, 0.5, &config, 2).unwrap();
        assert!(sweep.success_fraction[1] >= sweep.success_fraction[0]);
        assert_eq!(sweep.start_errors.len(), 6);
        assert_eq!(sweep.start_errors[0].len(), 3);
    }
}
