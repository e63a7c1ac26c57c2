//! Quantum state tomography from complete Pauli measurements.
//!
//! The crate simulates measurement counts for n-qubit states, computes the
//! linear-inversion and thresholding estimates, and samples the prob- and
//! dens- pseudo-posteriors with a Metropolis-Hastings chain over a
//! Dirichlet-weighted mixture of rank-one projectors.

pub mod data;
pub mod error;
pub mod estimators;
pub mod gibbs;
pub mod harness;
pub mod pauli;
pub mod rng;
pub mod states;

pub use data::{empirical_frequencies, load_dataset, save_dataset, simulate_dataset, Dataset, EmpiricalFrequencies};
pub use error::{DensityViolation, Error, Result};
pub use estimators::{
    default_lambda, default_tau, inversion_estimator, loss_dens, loss_prob, thresholding_estimator, LambdaRule,
    LossFamily, LossKind,
};
pub use gibbs::{run_chain, ChainState, GibbsOutput, PriorParams, SamplerConfig};
pub use pauli::{
    Axis, BasisIndex, CMatrix, HermitianMatrix, Outcome, PauliLetter, ProbabilityTable, Setting, Sign,
};
pub use states::{mse, validate_density, DensityMatrix, StateScenario};
pub use harness::{
    eigenvalue_report, run_benchmark, run_benchmark_detailed, EigenReportConfig, EigenvalueReport, EstimatorKind,
    ExperimentConfig, ResultRow, SamplerSettings,
};
pub use states::MatrixJson;
