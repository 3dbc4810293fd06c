//! The 21-state multiplicative extended Kalman filter.
//!
//! Between updates the filter carries nominal quaternions `q` (target
//! orientation) and `eta` (principal-axis misalignment) plus the vector
//! estimates; the attitude error states exist only transiently inside an
//! update and are folded back into the nominals by the quaternion reset
//! `q <- dq (x) q`, `eta <- deta (.) eta`.
//!
//! The body-to-camera rotation used by the pose model is the transpose of
//! [`Quaternion::to_rotation`]: with the error composed on the left
//! (`q = dq (x) q_nom`), that is the map whose small-error expansion
//! `I + 2 [dq_v]x` produces the `-2 R [rho_t]x` sensitivity block below.

use nalgebra::{Matrix3, Vector3};

use crate::attitude::{cross_matrix, quat_mul, ProductOp, Quaternion, SmallRotation};
use crate::discretize::{DiscreteModel, ParameterWalk};
use crate::dynamics::{
    continuous_error_model, propagate_truth, InertiaRatios, NoiseIntensities, OrbitRate,
    TruthState,
};
use crate::layout::{self, MeasCovariance, MeasMatrix, MeasVector, StateMatrix, StateVector};
use crate::{Error, Result};

/// 99.9% quantile of the chi-square distribution with 6 degrees of freedom;
/// default innovation-rejection gate.
pub const INNOVATION_GATE: f64 = 22.45774448445559;

/// Norm the attitude corrections are clamped to when an update diverges.
const MAX_CORRECTION_NORM: f64 = 0.99;

/// Longest interval one open-loop prediction step may cover, s.
const MAX_PREDICT_STEP: f64 = 0.1;

/// Per-axis measurement noise of the vision sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementNoise {
    /// Position noise std, m.
    pub sigma_pos: f64,
    /// Isotropic quaternion vector-part noise std.
    pub sigma_quat: f64,
}

impl MeasurementNoise {
    /// `diag(sigma_pos^2 I3, sigma_quat^2 I3)`.
    pub fn covariance(&self) -> MeasCovariance {
        let mut r = MeasCovariance::zeros();
        for i in 0..3 {
            r[(i, i)] = self.sigma_pos * self.sigma_pos;
            r[(i + 3, i + 3)] = self.sigma_quat * self.sigma_quat;
        }
        r
    }
}

/// One timestamped pose sample of the POR frame in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseMeasurement {
    pub t: f64,
    /// Position of the POR frame in the camera frame, m.
    pub pos: Vector3<f64>,
    /// Orientation of the POR frame in the camera frame.
    pub quat: Quaternion,
    /// False while the sensor is occluded.
    pub valid: bool,
}

/// Filter tuning and model inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub orbit: OrbitRate,
    pub intensities: NoiseIntensities,
    pub meas_noise: MeasurementNoise,
    pub walk: ParameterWalk,
    /// Joseph-form covariance update (PSD-safe); the plain `(I - KH)P` form
    /// is kept behind this switch for fidelity testing.
    pub joseph_update: bool,
    /// Innovation-rejection gate on the normalized innovation squared.
    pub gate: Option<f64>,
    /// Gauss-Newton relinearization passes per measurement. `1` is the plain
    /// single-pass update; the extra passes only matter while the pose model
    /// is linearized far from the truth (early transient, cold parameter
    /// estimates) and reduce to the same result once converged.
    pub update_iterations: usize,
}

impl FilterConfig {
    pub fn new(
        orbit: OrbitRate,
        intensities: NoiseIntensities,
        meas_noise: MeasurementNoise,
    ) -> Self {
        FilterConfig {
            orbit,
            intensities,
            meas_noise,
            walk: ParameterWalk::default(),
            joseph_update: true,
            gate: Some(INNOVATION_GATE),
            update_iterations: 1,
        }
    }
}

/// Total filter state between update cycles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterState {
    /// Nominal target orientation, `{B}` w.r.t. `{A}`.
    pub q: Quaternion,
    /// Nominal principal-axis misalignment.
    pub eta: Quaternion,
    /// Body rates, rad/s.
    pub omega: Vector3<f64>,
    /// Inertia ratios.
    pub ratios: Vector3<f64>,
    /// CM-to-CM position, m.
    pub pos: Vector3<f64>,
    /// CM-to-CM velocity, m/s.
    pub vel: Vector3<f64>,
    /// POR offset from the target CM in `{B}`, m.
    pub por: Vector3<f64>,
    /// Error-state covariance.
    pub cov: StateMatrix,
    pub t: f64,
}

impl FilterState {
    /// Default initial covariance: loose enough to cover the bundled
    /// scenario; tighten per deployment through the scenario config.
    pub fn default_covariance() -> StateMatrix {
        block_diagonal_covariance(&[0.3, 0.1, 0.5, 0.5, 0.05, 0.2, 0.3])
    }

    pub fn is_finite(&self) -> bool {
        self.q.as_vector().iter().all(|x| x.is_finite())
            && self.eta.as_vector().iter().all(|x| x.is_finite())
            && self.omega.iter().all(|x| x.is_finite())
            && self.ratios.iter().all(|x| x.is_finite())
            && self.pos.iter().all(|x| x.is_finite())
            && self.vel.iter().all(|x| x.is_finite())
            && self.por.iter().all(|x| x.is_finite())
            && self.cov.iter().all(|x| x.is_finite())
    }

    /// POR pose reconstructed from the state: `(r_o + R rho_t, eta (x) q)`.
    pub fn reconstructed_pose(&self) -> (Vector3<f64>, Quaternion) {
        let pos = self.pos + rot_body_to_cam(&self.q) * self.por;
        let quat = quat_mul(&self.eta, &self.q, ProductOp::Otimes);
        (pos, quat)
    }
}

/// Builds a block-diagonal covariance from seven per-block standard
/// deviations in state order.
pub fn block_diagonal_covariance(stds: &[f64; 7]) -> StateMatrix {
    let mut p = StateMatrix::zeros();
    for (block, std) in stds.iter().enumerate() {
        for k in 0..3 {
            let i = 3 * block + k;
            p[(i, i)] = std * std;
        }
    }
    p
}

/// Body-frame-to-camera-frame rotation for a `{B}`-w.r.t.-`{A}` quaternion.
pub fn rot_body_to_cam(q: &Quaternion) -> Matrix3<f64> {
    q.to_rotation().transpose()
}

/// Pose sensitivity matrix at the post-reset linearization point
/// (`dq_v = deta_v = 0`):
///
/// ```text
/// H = [ -2 R [rho_t]x   0   I3   0    R    0  ]
///     [      I3         0   0    0    0    I3 ]
/// ```
///
/// with `R` the body-to-camera rotation of the nominal quaternion.
pub fn sensitivity_matrix(q_nom: &Quaternion, por: Vector3<f64>) -> MeasMatrix {
    let r = rot_body_to_cam(q_nom);
    let mut h = MeasMatrix::zeros();
    h.fixed_view_mut::<3, 3>(0, layout::ATT)
        .copy_from(&(-2.0 * r * cross_matrix(por)));
    h.fixed_view_mut::<3, 3>(0, layout::POS)
        .copy_from(&Matrix3::identity());
    h.fixed_view_mut::<3, 3>(0, layout::POR).copy_from(&r);
    h.fixed_view_mut::<3, 3>(3, layout::ATT)
        .copy_from(&Matrix3::identity());
    h.fixed_view_mut::<3, 3>(3, layout::ETA)
        .copy_from(&Matrix3::identity());
    h
}

/// What an update call did with its measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOutcome {
    /// Correction applied.
    Applied,
    /// Measurement flagged invalid (occlusion); no update.
    Invalid,
    /// Innovation failed the chi-square gate; no update.
    Gated,
}

/// The filter: configuration, live state and health counters.
#[derive(Debug, Clone)]
pub struct Ekf {
    pub config: FilterConfig,
    pub state: FilterState,
    /// Latched when the state goes non-finite or an update becomes singular;
    /// the state freezes from then on.
    pub fault: bool,
    pub updates_applied: usize,
    pub updates_rejected: usize,
    /// Updates whose attitude correction had to be clamped.
    pub divergence_warnings: usize,
    /// Normalized innovation squared of the most recent gated or applied
    /// update; a whiteness diagnostic for the harness.
    pub last_nis: Option<f64>,
}

impl Ekf {
    pub fn new(config: FilterConfig, state: FilterState) -> Self {
        Ekf {
            config,
            state,
            fault: false,
            updates_applied: 0,
            updates_rejected: 0,
            divergence_warnings: 0,
            last_nis: None,
        }
    }

    /// Propagates estimate and covariance over `dt` with no measurement.
    ///
    /// The covariance is discretized about the rate estimate at the start of
    /// the interval; the mean runs through the same integrator as the ground
    /// truth, so a noise-free, truth-initialized filter tracks it exactly.
    pub fn predict(&mut self, dt: f64) {
        if self.fault || dt <= 0.0 {
            return;
        }
        if !self.state.is_finite() {
            self.fault = true;
            return;
        }

        let ratios = InertiaRatios::from_ratios(self.state.ratios);
        let model = continuous_error_model(self.state.omega, &ratios, self.config.orbit);
        let discrete = match DiscreteModel::from_error_model(
            &model,
            &self.config.intensities.covariance(),
            &self.config.walk,
            dt,
        ) {
            Ok(d) => d,
            Err(_) => {
                self.fault = true;
                return;
            }
        };

        let mean = TruthState {
            q: self.state.q,
            omega: self.state.omega,
            pos: self.state.pos,
            vel: self.state.vel,
            t: self.state.t,
        };
        let mean = match propagate_truth(&mean, &ratios, self.config.orbit, dt, None) {
            Ok(s) => s,
            Err(_) => {
                self.fault = true;
                return;
            }
        };

        self.state.q = mean.q;
        self.state.omega = mean.omega;
        self.state.pos = mean.pos;
        self.state.vel = mean.vel;
        self.state.t = mean.t;

        let cov = discrete.phi * self.state.cov * discrete.phi.transpose() + discrete.q;
        self.state.cov = symmetrize(&cov);
        if !self.state.is_finite() {
            self.fault = true;
        }
    }

    /// Innovation, sensitivity matrix and innovation covariance for a valid
    /// measurement. Does not mutate the filter.
    pub fn innovation(
        &self,
        meas: &PoseMeasurement,
    ) -> Result<(MeasVector, MeasMatrix, MeasCovariance)> {
        if !meas.valid {
            return Err(Error::InvalidMeasurement);
        }
        let (pred_pos, _) = self.state.reconstructed_pose();
        let e_pos = meas.pos - pred_pos;

        // Vector part of eta* (x) mu (x) q*, sign-adjusted: with both error
        // states reset the predicted value is zero and this is the innovation.
        let e_quat = quat_mul(
            &quat_mul(&self.state.eta.conjugate(), &meas.quat, ProductOp::Otimes),
            &self.state.q.conjugate(),
            ProductOp::Otimes,
        )
        .positive_scalar();

        let mut e = MeasVector::zeros();
        e.fixed_rows_mut::<3>(0).copy_from(&e_pos);
        e.fixed_rows_mut::<3>(3).copy_from(&e_quat.v);

        let h = sensitivity_matrix(&self.state.q, self.state.por);
        let s = h * self.state.cov * h.transpose() + self.config.meas_noise.covariance();
        Ok((e, h, s))
    }

    /// Measurement update with quaternion reset.
    ///
    /// Runs `update_iterations` Gauss-Newton passes: each pass relinearizes
    /// the pose model about the latest iterate and recomputes the full
    /// correction from the prior. One pass is the classic EKF update.
    pub fn update(&mut self, meas: &PoseMeasurement) -> Result<UpdateOutcome> {
        if self.fault {
            return Err(Error::NonFinite("filter state (faulted)"));
        }
        if !meas.valid {
            return Ok(UpdateOutcome::Invalid);
        }
        let (e, h, s) = self.innovation(meas)?;

        let chol = match s.cholesky() {
            Some(c) => c,
            None => {
                self.fault = true;
                return Err(Error::SingularInnovation);
            }
        };
        let nis = e.dot(&chol.solve(&e));
        self.last_nis = Some(nis);
        if let Some(gate) = self.config.gate {
            if nis > gate {
                self.updates_rejected += 1;
                return Ok(UpdateOutcome::Gated);
            }
        }

        let prior = self.state;
        // K = P H^T S^-1, via S K^T = H P.
        let mut k = chol.solve(&(h * prior.cov)).transpose();
        let mut h_lin = h;
        let mut delta: StateVector = k * e;
        self.apply_mean_correction(&prior, &delta);

        for _ in 1..self.config.update_iterations.max(1) {
            let (e_i, h_i, s_i) = self.innovation(meas)?;
            let chol_i = match s_i.cholesky() {
                Some(c) => c,
                None => break,
            };
            // Residual re-expressed about the prior: e_i + H_i (iterate - prior).
            let applied = state_difference(&self.state, &prior);
            let total = e_i + h_i * applied;
            k = chol_i.solve(&(h_i * prior.cov)).transpose();
            h_lin = h_i;
            delta = k * total;
            self.apply_mean_correction(&prior, &delta);
        }

        self.update_covariance(&prior, &k, &h_lin, &delta);
        self.state.q = self.state.q.normalized();
        self.state.eta = self.state.eta.normalized();
        self.updates_applied += 1;
        if !self.state.is_finite() {
            self.fault = true;
            return Err(Error::NonFinite("filter state after update"));
        }
        Ok(UpdateOutcome::Applied)
    }

    /// Open-loop pose prediction `dt` ahead on a copy of the filter: repeated
    /// prediction steps of at most 0.1 s, no updates, live state untouched.
    pub fn predict_pose(&self, dt: f64) -> (Vector3<f64>, Quaternion) {
        if dt <= 0.0 {
            return self.state.reconstructed_pose();
        }
        let mut shadow = self.clone();
        let steps = (dt / MAX_PREDICT_STEP).ceil() as usize;
        let h = dt / steps as f64;
        for _ in 0..steps {
            shadow.predict(h);
        }
        shadow.state.reconstructed_pose()
    }

    /// Rebuilds the mean from the prior plus a total correction; the attitude
    /// components go through the multiplicative reset. The covariance is left
    /// untouched (it still belongs to the prior during iteration).
    fn apply_mean_correction(&mut self, prior: &FilterState, delta: &StateVector) {
        let (dq_v, clamped_q) = clamp_rotation(delta.fixed_rows::<3>(layout::ATT).into_owned());
        let (deta_v, clamped_eta) =
            clamp_rotation(delta.fixed_rows::<3>(layout::ETA).into_owned());
        self.divergence_warnings += usize::from(clamped_q) + usize::from(clamped_eta);

        self.state.omega = prior.omega + delta.fixed_rows::<3>(layout::RATE).into_owned();
        self.state.ratios = prior.ratios + delta.fixed_rows::<3>(layout::INERTIA).into_owned();
        self.state.pos = prior.pos + delta.fixed_rows::<3>(layout::POS).into_owned();
        self.state.vel = prior.vel + delta.fixed_rows::<3>(layout::VEL).into_owned();
        self.state.por = prior.por + delta.fixed_rows::<3>(layout::POR).into_owned();

        let dq = SmallRotation::new(dq_v).expect("clamped").to_quaternion();
        let deta = SmallRotation::new(deta_v).expect("clamped").to_quaternion();
        self.state.q = quat_mul(&dq, &prior.q, ProductOp::Otimes);
        self.state.eta = quat_mul(&deta, &prior.eta, ProductOp::Odot);
    }

    fn update_covariance(
        &mut self,
        prior: &FilterState,
        k: &layout::GainMatrix,
        h: &MeasMatrix,
        delta: &StateVector,
    ) {
        let cov = if self.config.joseph_update {
            let ikh = StateMatrix::identity() - k * h;
            ikh * prior.cov * ikh.transpose()
                + k * self.config.meas_noise.covariance() * k.transpose()
        } else {
            (StateMatrix::identity() - k * h) * prior.cov
        };

        // Reset Jacobian: folding the corrections re-expresses the attitude
        // errors about the new nominals, dq' = (s I - [dq_v]x) dq and
        // deta' = (s I + [deta_v]x) deta; negligible for small corrections,
        // load-bearing for the large transient ones.
        let dq = SmallRotation::new(clamp_rotation(delta.fixed_rows::<3>(layout::ATT).into_owned()).0)
            .expect("clamped")
            .to_quaternion();
        let deta =
            SmallRotation::new(clamp_rotation(delta.fixed_rows::<3>(layout::ETA).into_owned()).0)
                .expect("clamped")
                .to_quaternion();
        let mut g = StateMatrix::identity();
        g.fixed_view_mut::<3, 3>(layout::ATT, layout::ATT)
            .copy_from(&(Matrix3::identity() * dq.s - cross_matrix(dq.v)));
        g.fixed_view_mut::<3, 3>(layout::ETA, layout::ETA)
            .copy_from(&(Matrix3::identity() * deta.s + cross_matrix(deta.v)));
        self.state.cov = symmetrize(&(g * cov * g.transpose()));
    }
}

/// Error coordinates of `state` about `prior`: multiplicative for the
/// quaternions, additive elsewhere.
fn state_difference(state: &FilterState, prior: &FilterState) -> StateVector {
    let dq = quat_mul(&state.q, &prior.q.conjugate(), ProductOp::Otimes).positive_scalar();
    let deta = quat_mul(&prior.eta.conjugate(), &state.eta, ProductOp::Otimes).positive_scalar();
    let mut d = StateVector::zeros();
    d.fixed_rows_mut::<3>(layout::ATT).copy_from(&dq.v);
    d.fixed_rows_mut::<3>(layout::RATE)
        .copy_from(&(state.omega - prior.omega));
    d.fixed_rows_mut::<3>(layout::INERTIA)
        .copy_from(&(state.ratios - prior.ratios));
    d.fixed_rows_mut::<3>(layout::POS)
        .copy_from(&(state.pos - prior.pos));
    d.fixed_rows_mut::<3>(layout::VEL)
        .copy_from(&(state.vel - prior.vel));
    d.fixed_rows_mut::<3>(layout::POR)
        .copy_from(&(state.por - prior.por));
    d.fixed_rows_mut::<3>(layout::ETA).copy_from(&deta.v);
    d
}

/// Scales an attitude correction back inside the representable ball; the
/// flag reports that a divergence-sized correction was clamped.
fn clamp_rotation(v: Vector3<f64>) -> (Vector3<f64>, bool) {
    let n = v.norm();
    if n >= 1.0 {
        (v * (MAX_CORRECTION_NORM / n), true)
    } else {
        (v, false)
    }
}

fn symmetrize(m: &StateMatrix) -> StateMatrix {
    (m + m.transpose()) * 0.5
}
