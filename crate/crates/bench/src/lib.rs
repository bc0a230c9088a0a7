//! Fixtures shared by the benchmarks.

use em_basin::{Dataset, MixtureModel};

pub struct Fixture {
    pub model: MixtureModel,
    pub dataset: Dataset,
    pub theta: Vec<f64>,
}

/// A model at SNR 10 with `n` draws and a start halfway to `θ*`.
pub fn fixture(d: usize, n: usize) -> Fixture {
    let model = MixtureModel::with_snr(d, 10.0, 1.0).expect("valid model");
    let dataset = model.sample_dataset(n, 42).expect("valid sample");
    let theta = model.theta_star().iter().map(|v| 0.5 * v).collect();
    Fixture { model, dataset, theta }
}
