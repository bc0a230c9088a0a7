//! The sample EM operator `M_n`, its surrogate objective and the iterate
//! runner.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, domain, Result};
use crate::kernels::omega;
use crate::model::{format_float, Dataset, MixtureModel, Region};
use crate::population::gamma_contraction;
use crate::vector::{add, distance, dot, is_finite};

/// Rows per leaf of the pairwise reduction. Fixed so that sums do not depend
/// on the thread count.
const CHUNK_ROWS: usize = 512;

/// `Σ_i g(yᵢ)` for a vector-valued `g`, summed per chunk and then pairwise
/// across chunks in index order.
pub(crate) fn reduce_rows<G>(dataset: &Dataset, g: G) -> Vec<f64>
where
    G: Fn(&[f64], &mut [f64]) + Sync,
{
    let d = dataset.dim();
    let partials: Vec<Vec<f64>> = dataset
        .points()
        .par_chunks(CHUNK_ROWS * d)
        .map(|chunk| {
            let mut acc = vec![0.0; d];
            for row in chunk.chunks_exact(d) {
                g(row, &mut acc);
            }
            acc
        })
        .collect();
    pairwise(partials, d)
}

fn pairwise(mut parts: Vec<Vec<f64>>, d: usize) -> Vec<f64> {
    if parts.is_empty() {
        return vec![0.0; d];
    }
    while parts.len() > 1 {
        parts = parts
            .chunks(2)
            .map(|pair| match pair {
                [x, y] => add(x, y),
                [x] => x.clone(),
                _ => unreachable!(),
            })
            .collect();
    }
    parts.pop().unwrap()
}

/// `M_n(θ) = (2/n)Σ yᵢ ω(⟨yᵢ,θ⟩/σ²) − ȳ`, evaluated as `(1/n)Σ yᵢ tanh(⟨yᵢ,θ⟩/σ²)`.
pub fn sample_em_step(theta: &[f64], dataset: &Dataset, sigma: f64) -> Result<Vec<f64>> {
    check_dim(dataset.dim(), theta.len())?;
    let s2 = sigma * sigma;
    let sum = reduce_rows(dataset, |y, acc| {
        let w = (dot(y, theta) / s2).tanh();
        for (a, v) in acc.iter_mut().zip(y) {
            *a += w * v;
        }
    });
    let n = dataset.n() as f64;
    Ok(sum.into_iter().map(|v| v / n).collect())
}

/// Sample average of `Q_y(θ′|θ) = −½‖θ′‖² + (2ω(⟨θ,y⟩/σ²) − 1)⟨θ′,y⟩ − ½‖y‖²`.
pub fn q_objective(theta_prime: &[f64], theta: &[f64], dataset: &Dataset, sigma: f64) -> Result<f64> {
    check_dim(dataset.dim(), theta.len())?;
    check_dim(dataset.dim(), theta_prime.len())?;
    let s2 = sigma * sigma;
    let sum = reduce_rows(dataset, |y, acc| {
        let w = 2.0 * omega(dot(theta, y) / s2) - 1.0;
        acc[0] += w * dot(theta_prime, y) - 0.5 * dot(y, y);
    });
    let tp = dot(theta_prime, theta_prime);
    Ok(sum[0] / dataset.n() as f64 - 0.5 * tp)
}

/// θ′-gradient of [`q_objective`]: `−θ′ − (1 − 2ω(⟨θ,y⟩/σ²))·ȳ_w`.
pub fn q_gradient(theta_prime: &[f64], theta: &[f64], dataset: &Dataset, sigma: f64) -> Result<Vec<f64>> {
    check_dim(dataset.dim(), theta_prime.len())?;
    let s2 = sigma * sigma;
    check_dim(dataset.dim(), theta.len())?;
    let sum = reduce_rows(dataset, |y, acc| {
        let w = 1.0 - 2.0 * omega(dot(theta, y) / s2);
        for (a, v) in acc.iter_mut().zip(y) {
            *a += w * v;
        }
    });
    let n = dataset.n() as f64;
    Ok(theta_prime.iter().zip(sum).map(|(t, v)| -t - v / n).collect())
}

/// `min(‖θ − θ*‖, ‖θ + θ*‖)`.
pub fn sign_aligned_error(theta: &[f64], model: &MixtureModel) -> Result<f64> {
    check_dim(model.dim(), theta.len())?;
    let star = model.theta_star();
    let plus: f64 = theta.iter().zip(star).map(|(t, s)| (t + s) * (t + s)).sum();
    Ok(distance(theta, star).min(plus.sqrt()))
}

/// `γᵗ·err₀ + floor`.
pub fn iterate_envelope(t: u32, err0: f64, gamma: f64, floor: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&gamma) {
        return domain(format!("envelope needs γ ∈ [0, 1), got {gamma}"));
    }
    if !(floor >= 0.0) {
        return domain(format!("envelope floor must be non-negative, got {floor}"));
    }
    let decay = if t == 0 { 1.0 } else { gamma.powi(t as i32) };
    Ok(decay * err0 + floor)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iter: usize,
    /// Stop once `‖θ̂_{t+1} − θ̂_t‖ ≤ step_tol·‖θ*‖`.
    pub step_tol: f64,
    /// Radius of the `D̃_{1/2,r}` membership recorded per iterate.
    pub r: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iter: 500,
            step_tol: 1e-10,
            r: 6.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIter,
    StepTol,
    Diverged,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::MaxIter => "max_iter",
            StopReason::StepTol => "step_tol",
            StopReason::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmTrace {
    pub iterates: Vec<Vec<f64>>,
    /// Sign-aligned errors.
    pub errors: Vec<f64>,
    /// Plain `‖θ̂_t − θ*‖`.
    pub raw_errors: Vec<f64>,
    /// `errors[k+1]/errors[k]`; `None` where `errors[k] = 0`.
    pub ratios: Vec<Option<f64>>,
    pub in_region: Vec<bool>,
    pub stop_reason: StopReason,
    pub seed: u64,
    pub n: usize,
    pub model_fingerprint: String,
    pub region: Region,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub stop_reason: StopReason,
    pub iterations: usize,
    pub final_error: f64,
    pub final_raw_error: f64,
    pub n: usize,
    pub seed: u64,
    pub model_fingerprint: String,
    pub gamma_theoretical: f64,
}

impl EmTrace {
    pub fn final_iterate(&self) -> &[f64] {
        self.iterates.last().expect("a trace always holds θ̂₀")
    }

    pub fn final_error(&self) -> f64 {
        *self.errors.last().expect("a trace always holds θ̂₀")
    }

    /// Number of EM steps taken.
    pub fn steps(&self) -> usize {
        self.iterates.len() - 1
    }

    pub fn summary(&self, snr: f64) -> TraceSummary {
        TraceSummary {
            stop_reason: self.stop_reason,
            iterations: self.steps(),
            final_error: self.final_error(),
            final_raw_error: *self.raw_errors.last().unwrap(),
            n: self.n,
            seed: self.seed,
            model_fingerprint: self.model_fingerprint.clone(),
            gamma_theoretical: gamma_contraction(snr, self.region.r()).unwrap_or(f64::NAN),
        }
    }

    /// One row per iterate: `t, theta_1..theta_d, error, ratio, in_region`.
    /// The ratio on row `t` is `errors[t]/errors[t-1]` and empty on row 0.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let d = self.iterates[0].len();
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|j| format!("theta_{j}")));
        header.extend(["error", "ratio", "in_region"].map(String::from));
        w.write_record(&header)?;
        for (t, theta) in self.iterates.iter().enumerate() {
            let mut rec = vec![t.to_string()];
            rec.extend(theta.iter().map(|&v| format_float(v)));
            rec.push(format_float(self.errors[t]));
            rec.push(match t.checked_sub(1).and_then(|k| self.ratios[k]) {
                Some(r) => format_float(r),
                None => String::new(),
            });
            rec.push(self.in_region[t].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut out, self)?;
        out.write_all(b"\n")?;
        Ok(())
    }
}

/// Iterates `θ̂_{t+1} = M_n(θ̂_t)` from `theta0`.
pub fn run_em(theta0: &[f64], dataset: &Dataset, model: &MixtureModel, config: &EmConfig) -> Result<EmTrace> {
    check_dim(model.dim(), theta0.len())?;
    check_dim(model.dim(), dataset.dim())?;
    if config.max_iter == 0 {
        return domain("max_iter must be at least 1");
    }
    if !(config.step_tol >= 0.0) {
        return domain(format!("step_tol must be non-negative, got {}", config.step_tol));
    }
    let region = Region::new(0.5, config.r)?;
    let tol = config.step_tol * model.theta_norm();
    let star = model.theta_star();

    let mut trace = EmTrace {
        iterates: Vec::new(),
        errors: Vec::new(),
        raw_errors: Vec::new(),
        ratios: Vec::new(),
        in_region: Vec::new(),
        stop_reason: StopReason::MaxIter,
        seed: dataset.seed(),
        n: dataset.n(),
        model_fingerprint: model.fingerprint(),
        region,
    };
    let record = |trace: &mut EmTrace, theta: Vec<f64>| -> Result<()> {
        let err = sign_aligned_error(&theta, model)?;
        if let Some(&prev) = trace.errors.last() {
            trace.ratios.push((prev > 0.0).then(|| err / prev));
        }
        trace.errors.push(err);
        trace.raw_errors.push(distance(&theta, star));
        trace.in_region.push(model.in_d_tilde(&theta, region)?);
        trace.iterates.push(theta);
        Ok(())
    };

    record(&mut trace, theta0.to_vec())?;
    for _ in 0..config.max_iter {
        let current = trace.final_iterate();
        let next = sample_em_step(current, dataset, model.sigma())?;
        if !is_finite(&next) {
            trace.stop_reason = StopReason::Diverged;
            return Ok(trace);
        }
        let step = distance(&next, current);
        record(&mut trace, next)?;
        if step <= tol {
            trace.stop_reason = StopReason::StepTol;
            return Ok(trace);
        }
    }
    Ok(trace)
}

/// Largest per-step ratio among steps whose starting error exceeds `floor`.
pub fn max_ratio_above_floor(trace: &EmTrace, floor: f64) -> Option<f64> {
    trace
        .ratios
        .iter()
        .zip(&trace.errors)
        .filter(|(_, &e)| e > floor)
        .filter_map(|(r, _)| *r)
        .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::pop_em;
    use crate::quadrature::GhRule;
    use crate::rng::{self, Purpose};
    use crate::vector::{lincomb, max_abs_diff, neg, norm, scale, sub};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian(d: usize, seed: u64, index: u64) -> Vec<f64> {
        let mut rng = rng::stream(seed, Purpose::Experiment, index);
        (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    }

    /// Direct transcription of `(2/n)Σ yω(⟨y,θ⟩/σ²) − ȳ` with a naive loop.
    fn naive_step(theta: &[f64], data: &Dataset, sigma: f64) -> Vec<f64> {
        let n = data.n() as f64;
        let mut out = vec![0.0; data.dim()];
        for y in data.rows() {
            let w = omega(dot(y, theta) / (sigma * sigma));
            for j in 0..y.len() {
                out[j] += (2.0 * y[j] * w - y[j]) / n;
            }
        }
        out
    }

    #[test]
    fn step_matches_naive_formula() {
        let model = MixtureModel::with_snr(3, 2.0, 1.5).unwrap();
        let data = model.sample_dataset(5_000, 11).unwrap();
        for k in 0..5 {
            let theta = scale(&gaussian(3, 1, k), 2.0);
            let fast = sample_em_step(&theta, &data, model.sigma()).unwrap();
            let slow = naive_step(&theta, &data, model.sigma());
            assert!(max_abs_diff(&fast, &slow) <= 1e-12, "{fast:?} vs {slow:?}");
        }
        assert!(sample_em_step(&[1.0], &data, 1.0).is_err());
    }

    #[test]
    fn step_at_origin_is_zero() {
        let model = MixtureModel::with_snr(4, 3.0, 1.0).unwrap();
        let data = model.sample_dataset(777, 5).unwrap();
        assert_eq!(sample_em_step(&[0.0; 4], &data, 1.0).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn saturated_single_point() {
        let y = vec![1.0, 2.0, -0.5];
        let data = Dataset::from_rows(vec![y.clone()], 0, "x").unwrap();
        let theta = scale(&y, 50.0 / dot(&y, &y));
        let m = sample_em_step(&theta, &data, 1.0).unwrap();
        assert!(max_abs_diff(&m, &y) <= 1e-12);
    }

    #[test]
    fn step_is_independent_of_thread_count() {
        let model = MixtureModel::with_snr(5, 4.0, 1.0).unwrap();
        let data = model.sample_dataset(20_000, 3).unwrap();
        let theta = gaussian(5, 2, 0);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| sample_em_step(&theta, &data, 1.0).unwrap());
        let b = three.install(|| sample_em_step(&theta, &data, 1.0).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn gradient_vanishes_at_step() {
        let model = MixtureModel::with_snr(4, 2.5, 0.8).unwrap();
        let data = model.sample_dataset(2_000, 9).unwrap();
        for k in 0..10 {
            let theta = scale(&gaussian(4, 3, k), 2.0);
            let m = sample_em_step(&theta, &data, 0.8).unwrap();
            let g = q_gradient(&m, &theta, &data, 0.8).unwrap();
            assert!(norm(&g) <= 1e-10, "{g:?}");
        }
    }

    #[test]
    fn objective_is_exact_quadratic() {
        let model = MixtureModel::with_snr(3, 2.0, 1.0).unwrap();
        let data = model.sample_dataset(500, 4).unwrap();
        let theta = gaussian(3, 5, 0);
        for k in 0..10 {
            let t1 = scale(&gaussian(3, 6, k), 3.0);
            let t2 = scale(&gaussian(3, 7, k), 3.0);
            let q1 = q_objective(&t1, &theta, &data, 1.0).unwrap();
            let q2 = q_objective(&t2, &theta, &data, 1.0).unwrap();
            let g2 = q_gradient(&t2, &theta, &data, 1.0).unwrap();
            let diff = sub(&t1, &t2);
            let lhs = q1 - q2 - dot(&g2, &diff);
            assert!((lhs + 0.5 * dot(&diff, &diff)).abs() <= 1e-10);
        }
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let model = MixtureModel::with_snr(3, 2.0, 1.2).unwrap();
        let data = model.sample_dataset(300, 8).unwrap();
        let theta = gaussian(3, 9, 0);
        let h = 1e-5;
        for k in 0..5 {
            let tp = gaussian(3, 10, k);
            let dir = gaussian(3, 11, k);
            let dir = scale(&dir, 1.0 / norm(&dir));
            let plus = q_objective(&lincomb(1.0, &tp, h, &dir), &theta, &data, 1.2).unwrap();
            let minus = q_objective(&lincomb(1.0, &tp, -h, &dir), &theta, &data, 1.2).unwrap();
            let fd = (plus - minus) / (2.0 * h);
            let exact = dot(&q_gradient(&tp, &theta, &data, 1.2).unwrap(), &dir);
            assert!((fd - exact).abs() <= 1e-6, "{fd} vs {exact}");
        }
    }

    #[test]
    fn sign_aligned_error_cases() {
        let model = MixtureModel::new(vec![3.0, 4.0], 1.0).unwrap();
        assert_eq!(sign_aligned_error(&[-3.0, -4.0], &model).unwrap(), 0.0);
        assert_eq!(sign_aligned_error(&[0.0, 0.0], &model).unwrap(), 5.0);
        let e = sign_aligned_error(&[3.001, 4.0], &model).unwrap();
        assert!((e - 0.001).abs() < 1e-12);
    }

    #[test]
    fn envelope_values() {
        assert_eq!(iterate_envelope(0, 2.0, 0.3, 0.1).unwrap(), 2.1);
        assert_eq!(iterate_envelope(5, 2.0, 0.0, 0.1).unwrap(), 0.1);
        let v = iterate_envelope(10, 1.0, 0.5, 0.01).unwrap();
        assert!((v - 0.010_976_562_5).abs() < 1e-15);
        assert!(iterate_envelope(1, 1.0, 1.0, 0.0).is_err());
        assert!(iterate_envelope(1, 1.0, 0.5, -1.0).is_err());
    }

    #[test]
    fn origin_is_a_fixed_point() {
        let model = MixtureModel::with_snr(4, 10.0, 1.0).unwrap();
        let data = model.sample_dataset(1_000, 1).unwrap();
        let trace = run_em(&[0.0; 4], &data, &model, &EmConfig::default()).unwrap();
        assert_eq!(trace.stop_reason, StopReason::StepTol);
        assert!(trace.iterates.iter().all(|t| t.iter().all(|&v| v == 0.0)));
        assert!(trace.errors.iter().all(|&e| (e - model.theta_norm()).abs() < 1e-12));
        assert!(trace.in_region.iter().all(|&b| !b));
    }

    #[test]
    fn converged_start_stops_after_one_step() {
        let model = MixtureModel::with_snr(3, 8.0, 1.0).unwrap();
        let data = model.sample_dataset(2_000, 2).unwrap();
        let first = run_em(model.theta_star(), &data, &model, &EmConfig::default()).unwrap();
        assert_eq!(first.stop_reason, StopReason::StepTol);
        let fixed = first.final_iterate().to_vec();
        let again = run_em(&fixed, &data, &model, &EmConfig::default()).unwrap();
        assert_eq!(again.steps(), 1);
        assert_eq!(again.stop_reason, StopReason::StepTol);
    }

    #[test]
    fn converges_toward_truth() {
        let model = MixtureModel::with_snr(4, 10.0, 1.0).unwrap();
        let data = model.sample_dataset(10_000, 7).unwrap();
        let theta0 = lincomb(0.5, model.theta_star(), 0.3, &gaussian(4, 12, 0));
        let trace = run_em(&theta0, &data, &model, &EmConfig::default()).unwrap();
        assert_eq!(trace.stop_reason, StopReason::StepTol);
        assert_eq!(trace.errors.len(), trace.iterates.len());
        assert_eq!(trace.ratios.len() + 1, trace.errors.len());
        let floor = (4.0f64 / 10_000.0).sqrt() * model.theta_norm();
        assert!(trace.final_error() <= 10.0 * floor);
        assert!(trace.in_region.iter().all(|&b| b));
        let neg_trace = run_em(&neg(&theta0), &data, &model, &EmConfig::default()).unwrap();
        assert!((neg_trace.final_error() - trace.final_error()).abs() < 1e-9);
    }

    #[test]
    fn consistency_with_population_operator() {
        // Averaged over seeds the deviation shrinks by about √10 per decade.
        let model = MixtureModel::with_snr(4, 5.0, 1.0).unwrap();
        let rule = GhRule::default();
        let theta = lincomb(0.8, model.theta_star(), 0.5, &gaussian(4, 13, 0));
        let exact = pop_em(&theta, &model, &rule).unwrap();
        let mean_dev = |n: usize| -> f64 {
            (0..20)
                .map(|s| {
                    let data = model.sample_dataset(n, 100 + s).unwrap();
                    distance(&sample_em_step(&theta, &data, 1.0).unwrap(), &exact)
                })
                .sum::<f64>()
                / 20.0
        };
        let ratio = mean_dev(200) / mean_dev(20_000);
        assert!((ratio.log10() / 2.0 - 0.5).abs() < 0.15, "ratio {ratio}");
    }

    #[test]
    fn trace_outputs() {
        let model = MixtureModel::with_snr(2, 10.0, 1.0).unwrap();
        let data = model.sample_dataset(500, 3).unwrap();
        let trace = run_em(&scale(model.theta_star(), 0.6), &data, &model, &EmConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("trace.csv");
        trace.write_csv(&csv_path).unwrap();
        let text = std::fs::read_to_string(&csv_path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,theta_1,theta_2,error,ratio,in_region");
        assert!(lines.next().unwrap().ends_with(",,true"));
        assert_eq!(text.lines().count(), trace.iterates.len() + 1);
        trace.write_json(&dir.path().join("trace.json")).unwrap();
        let summary = trace.summary(model.snr());
        assert_eq!(summary.iterations, trace.steps());
        let json = serde_json::to_string(&summary).unwrap();
        assert!(json.contains("\"stop_reason\":\"step_tol\""));
    }
}
