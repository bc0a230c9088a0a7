#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod init;
pub mod kernels;
pub mod model;
pub mod population;
pub mod quadrature;
pub mod rng;
pub mod sample_em;
pub mod vector;
pub mod verification;

pub use error::{Error, Result};
pub use init::InitStrategy;
pub use model::{Dataset, MixtureModel, Region};
pub use quadrature::{gauss_expectation, GhRule};
pub use sample_em::{EmConfig, EmTrace};
pub use verification::experiment::{run_experiment, Experiment, ExperimentConfig, ExperimentReport, Params};
pub use verification::Assertion;
