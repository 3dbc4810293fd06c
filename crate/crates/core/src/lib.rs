//! Relative navigation filter for the capture of a tumbling target satellite.
//!
//! A chaser spacecraft observes the pose of a point of reference (POR) on a
//! free-tumbling target through a low-rate 3D vision sensor. This crate
//! estimates the full relative state — orientation, angular velocity, inertia
//! ratios, CM-to-CM position and velocity, POR offset from the target centre
//! of mass, and the principal-axis misalignment — with a 21-state
//! multiplicative extended Kalman filter, and keeps predicting the POR pose
//! through vision dropouts so a capture can still be completed.
//!
//! Module map:
//! - [`attitude`]: quaternion algebra and constant-rate propagation
//! - [`dynamics`]: Euler rotational and Clohessy-Wiltshire translational
//!   models, their Jacobians, and the ground-truth integrator
//! - [`discretize`]: matrix exponential and the van Loan construction of the
//!   discrete transition matrix and process-noise covariance
//! - [`ekf`]: the filter itself (predict / update / open-loop pose prediction)
//! - [`sim`]: scenario-driven experiment engine and Monte-Carlo batches
//! - [`metrics`]: convergence, consistency (NEES) and prediction-error metrics
//! - [`validate`]: built-in self-checks against independent numerical oracles

pub mod attitude;
pub mod discretize;
pub mod dynamics;
pub mod ekf;
pub mod layout;
pub mod metrics;
pub mod sim;
pub mod validate;

pub use attitude::Quaternion;
pub use dynamics::{InertiaRatios, NoiseIntensities, OrbitRate, TargetGeometry, TruthState};
pub use ekf::{Ekf, FilterConfig, FilterState, MeasurementNoise, PoseMeasurement};
pub use sim::{RunResult, Scenario};

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("matrix exponential failed: {0}")]
    Expm(&'static str),
    #[error("innovation covariance is not invertible")]
    SingularInnovation,
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("measurement marked invalid")]
    InvalidMeasurement,
}

pub type Result<T> = std::result::Result<T, Error>;
