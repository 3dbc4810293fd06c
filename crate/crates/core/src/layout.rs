//! Index layout of the 21-component error state.
//!
//! One canonical ordering is shared by the continuous error model, the
//! discrete transition matrix, the process-noise and estimate covariances and
//! the measurement sensitivity matrix:
//!
//! ```text
//! [ dq_v | omega | p | r_o | v_o | rho_t | deta_v ]
//!    0..3   3..6  6..9 9..12 12..15 15..18  18..21
//! ```

use nalgebra::{SMatrix, SVector};

/// Attitude error vector part `dq_v`.
pub const ATT: usize = 0;
/// Target body rates `omega`.
pub const RATE: usize = 3;
/// Inertia ratios `p`.
pub const INERTIA: usize = 6;
/// CM-to-CM position `r_o`.
pub const POS: usize = 9;
/// CM-to-CM velocity `v_o`.
pub const VEL: usize = 12;
/// POR offset from the target CM `rho_t`.
pub const POR: usize = 15;
/// Principal-axis misalignment error vector part `deta_v`.
pub const ETA: usize = 18;

/// Total error-state dimension.
pub const DIM: usize = 21;
/// Process-noise input dimension (torque + force disturbances).
pub const NOISE_DIM: usize = 6;
/// Measurement dimension (position + orientation vector part).
pub const MEAS_DIM: usize = 6;

pub type StateVector = SVector<f64, DIM>;
pub type StateMatrix = SMatrix<f64, DIM, DIM>;
pub type NoiseMatrix = SMatrix<f64, DIM, NOISE_DIM>;
pub type NoiseCovariance = SMatrix<f64, NOISE_DIM, NOISE_DIM>;
pub type MeasMatrix = SMatrix<f64, MEAS_DIM, DIM>;
pub type MeasCovariance = SMatrix<f64, MEAS_DIM, MEAS_DIM>;
pub type MeasVector = SVector<f64, MEAS_DIM>;
pub type GainMatrix = SMatrix<f64, DIM, MEAS_DIM>;
