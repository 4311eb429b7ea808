//! Prewhitened nonparametric (HAC and fixed-b) autocorrelation-robust F-type
//! tests for linear restrictions `Rβ = r` in the regression `y = Xβ + u`.
//!
//! The crate covers the whole pipeline:
//!
//! - [`model`]: the regression/hypothesis container, AR(1) and MA(d)
//!   correlation matrices and exact Gaussian sampling.
//! - [`kernels`] and [`bandwidth`]: kernel functions and the Andrews,
//!   Newey–West and fixed-b bandwidth rules.
//! - [`prewhiten`]: VAR(p) prewhitening, recoloring and the covariance
//!   estimator `Ω̂` together with its typed undefinedness reasons.
//! - [`testing`]: the statistic `T`, scenario selection and the
//!   artificial-regressor adjusted statistic `T̄`.
//! - [`diagnostics`]: which size/power breakdown applies to a concrete
//!   design, and the witness designs used to certify non-degeneracy.
//! - [`montecarlo`]: rejection probabilities, size over a covariance family,
//!   power curves and critical-value calibration.
//! - [`cli`]: the `pwhac` command-line front end.

pub mod bandwidth;
pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod model;
pub mod montecarlo;
pub mod prewhiten;
pub mod testing;

pub use bandwidth::{BandwidthOutcome, BandwidthRule, BandwidthUndefined, LagWeights, OmegaSpec};
pub use config::EstimatorConfig;
pub use diagnostics::{diagnose, witness_design, DiagnosticsReport, Verdict};
pub use error::{Error, Result};
pub use kernels::Kernel;
pub use model::{CovarianceFamily, NullPoint, RegressionProblem};
pub use prewhiten::{assemble_omega, Definiteness, OmegaOutcome, UndefinedReason};
pub use testing::{test_statistic, AdjustedProblem, Scenario, TestResult};
