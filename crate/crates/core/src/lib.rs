//! Similarity learning as distance regression.
//!
//! A map `h` from feature space into `R^k` is fitted so that the Euclidean
//! distances `‖h(x_i) − h(x_j)‖` regress onto a supervised distance matrix.
//! Alongside training, the crate assembles Rademacher-complexity
//! generalization certificates for norm-bounded linear and kernel classes and
//! checks them empirically with a seeded coverage experiment.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below fix the common double-precision case.

pub mod bounds;
pub mod data;
pub mod error;
pub mod harness;
pub mod hypotheses;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod optimizer;
pub mod scalar;

pub use bounds::{
    certify, empirical_rademacher_mc, generalization_bound, loss_bound_m, rademacher_bound_kernel,
    rademacher_bound_linear, BoundCertificate, BoundMode, McEstimate,
};
pub use data::{
    confusion_to_distance, data_radii, empirical_risk, pairwise_distances, validate_distance_matrix,
    ConfusionMatrix, DataRadii, DistanceMatrix, SampleMatrix,
};
pub use error::{Error, Result};
pub use harness::{
    generate_synthetic, holdout_risk, run_coverage_experiment, ExperimentReport, SyntheticData, SyntheticSpec,
    TrialResult,
};
pub use hypotheses::{Hypothesis, KernelMap, LinearMap, Model};
pub use kernels::{
    feature_space_radius, gram, kernel_eval, psd_check, GramMatrix, KernelFamily, KernelSpec, PsdCheck,
};
pub use optimizer::{objective, risk_gradient, smoothed_risk, train, ModelClass, TrainConfig, TrainReport};
pub use scalar::Real;

pub type SampleMatrix64 = SampleMatrix<f64>;
pub type DistanceMatrix64 = DistanceMatrix<f64>;
pub type ConfusionMatrix64 = ConfusionMatrix<f64>;
pub type GramMatrix64 = GramMatrix<f64>;
pub type KernelSpec64 = KernelSpec<f64>;
pub type LinearMap64 = LinearMap<f64>;
pub type KernelMap64 = KernelMap<f64>;
pub type Model64 = Model<f64>;
pub type ModelClass64 = ModelClass<f64>;
pub type TrainConfig64 = TrainConfig<f64>;
pub type TrainReport64 = TrainReport<f64>;
pub type BoundCertificate64 = BoundCertificate<f64>;
pub type SyntheticSpec64 = SyntheticSpec<f64>;
pub type ExperimentReport64 = ExperimentReport<f64>;

pub type SampleMatrix32 = SampleMatrix<f32>;
pub type DistanceMatrix32 = DistanceMatrix<f32>;
pub type LinearMap32 = LinearMap<f32>;
pub type Model32 = Model<f32>;
