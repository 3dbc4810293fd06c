//! Continuous-time truth and error-state models.
//!
//! Rotational motion follows Euler's equation in inertia-ratio form, the
//! translational motion follows the Clohessy-Wiltshire equations for a chaser
//! on a circular orbit, and [`continuous_error_model`] assembles the 21-state
//! linearized error dynamics shared by the discretization and the filter.

use nalgebra::{Matrix3, Vector3};

use crate::attitude::{cross_matrix, propagate_const_rate, Quaternion};
use crate::layout::{self, NoiseMatrix, StateMatrix, StateVector};
use crate::{Error, Result};

/// Longest RK4 substep used by the ground-truth integrator, in seconds.
pub const MAX_SUBSTEP: f64 = 1e-3;

/// Dimensionless inertia ratios of the target and the disturbance-scaling
/// matrix `J = diag(1, Ixx/Iyy, Ixx/Izz)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertiaRatios {
    /// `(p_x, p_y, p_z)` with `p_x = (Iyy - Izz)/Ixx` and cyclic companions.
    pub p: Vector3<f64>,
    /// Torque-disturbance scaling `diag(1, Ixx/Iyy, Ixx/Izz)`.
    pub j: Matrix3<f64>,
}

impl InertiaRatios {
    /// Ratios of a rigid body with the given principal moments of inertia.
    pub fn from_moments(moments: Vector3<f64>) -> Result<Self> {
        if !(moments.iter().all(|m| m.is_finite() && *m > 0.0)) {
            return Err(Error::NonFinite("principal moments of inertia"));
        }
        let (ixx, iyy, izz) = (moments[0], moments[1], moments[2]);
        Ok(InertiaRatios {
            p: Vector3::new((iyy - izz) / ixx, (izz - ixx) / iyy, (ixx - iyy) / izz),
            j: Matrix3::from_diagonal(&Vector3::new(1.0, ixx / iyy, ixx / izz)),
        })
    }

    /// Rebuilds the ratios (and `J`) from an estimated `p` vector.
    ///
    /// For physical inertias every `|p_i| < 1`, which keeps the recovery of
    /// the moment ratios well defined: `Iyy/Ixx = (1 + p_x)/(1 - p_y)`.
    pub fn from_ratios(p: Vector3<f64>) -> Self {
        let a = (1.0 + p[0]) / (1.0 - p[1]);
        let b = a - p[0];
        InertiaRatios {
            p,
            j: Matrix3::from_diagonal(&Vector3::new(1.0, 1.0 / a, 1.0 / b)),
        }
    }
}

/// Circular-orbit angular rate of the chaser, `n = (0, 0, n_z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitRate {
    pub n_z: f64,
}

impl OrbitRate {
    pub fn new(n_z: f64) -> Self {
        OrbitRate { n_z }
    }

    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, self.n_z)
    }
}

/// Ground-truth relative state of the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthState {
    /// Target orientation, `{B}` with respect to `{A}`.
    pub q: Quaternion,
    /// Body rates in `{B}`, rad/s.
    pub omega: Vector3<f64>,
    /// CM-to-CM position in `{A}`, m.
    pub pos: Vector3<f64>,
    /// CM-to-CM velocity in `{A}`, m/s.
    pub vel: Vector3<f64>,
    /// Time, s.
    pub t: f64,
}

impl TruthState {
    pub fn is_finite(&self) -> bool {
        self.q.as_vector().iter().all(|x| x.is_finite())
            && self.omega.iter().all(|x| x.is_finite())
            && self.pos.iter().all(|x| x.is_finite())
            && self.vel.iter().all(|x| x.is_finite())
            && self.t.is_finite()
    }
}

/// Fixed geometric parameters of the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetGeometry {
    /// POR offset from the target CM, expressed in `{B}`, m.
    pub por_offset: Vector3<f64>,
    /// Rotation between the POR frame and the principal axes.
    pub eta: Quaternion,
}

/// White-noise intensities of the torque and force disturbances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseIntensities {
    pub sigma_torque: f64,
    pub sigma_force: f64,
}

impl NoiseIntensities {
    pub fn zero() -> Self {
        NoiseIntensities { sigma_torque: 0.0, sigma_force: 0.0 }
    }

    /// `diag(sigma_torque^2 I3, sigma_force^2 I3)`.
    pub fn covariance(&self) -> layout::NoiseCovariance {
        let mut s = layout::NoiseCovariance::zeros();
        for i in 0..3 {
            s[(i, i)] = self.sigma_torque * self.sigma_torque;
            s[(i + 3, i + 3)] = self.sigma_force * self.sigma_force;
        }
        s
    }
}

/// Torque-free angular acceleration in inertia-ratio form:
/// `(p_x w_y w_z, p_y w_x w_z, p_z w_x w_y)`.
pub fn euler_accel(omega: Vector3<f64>, ratios: &InertiaRatios) -> Vector3<f64> {
    let p = ratios.p;
    Vector3::new(
        p[0] * omega[1] * omega[2],
        p[1] * omega[0] * omega[2],
        p[2] * omega[0] * omega[1],
    )
}

/// Jacobians of [`euler_accel`] with respect to the body rates and the
/// inertia ratios.
pub fn rot_jacobians(omega: Vector3<f64>, ratios: &InertiaRatios) -> (Matrix3<f64>, Matrix3<f64>) {
    let p = ratios.p;
    let a = Matrix3::new(
        0.0,
        p[0] * omega[2],
        p[0] * omega[1],
        p[1] * omega[2],
        0.0,
        p[1] * omega[0],
        p[2] * omega[1],
        p[2] * omega[0],
        0.0,
    );
    let b = Matrix3::from_diagonal(&Vector3::new(
        omega[1] * omega[2],
        omega[0] * omega[2],
        omega[0] * omega[1],
    ));
    (a, b)
}

/// Clohessy-Wiltshire relative acceleration:
/// `-2 n x v_o + (3 n_z^2 r_x, 0, -n_z^2 r_z)`.
pub fn cw_accel(pos: Vector3<f64>, vel: Vector3<f64>, orbit: OrbitRate) -> Vector3<f64> {
    let nz2 = orbit.n_z * orbit.n_z;
    -2.0 * orbit.vector().cross(&vel) + Vector3::new(3.0 * nz2 * pos[0], 0.0, -nz2 * pos[2])
}

/// Gradient of the orbital-mechanics acceleration with respect to position.
fn cw_gradient(orbit: OrbitRate) -> Matrix3<f64> {
    let nz2 = orbit.n_z * orbit.n_z;
    Matrix3::from_diagonal(&Vector3::new(3.0 * nz2, 0.0, -nz2))
}

/// Continuous error dynamics `d(chi)/dt = A chi + B eps` over the layout of
/// [`crate::layout`].
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorModel {
    pub a: StateMatrix,
    pub b: NoiseMatrix,
}

/// Assembles the 21-state error model linearized about the nominal body rate
/// and inertia ratios. Columns of the POR offset and principal-axis states
/// are identically zero: the parameters enter only the measurements.
pub fn continuous_error_model(
    omega_nom: Vector3<f64>,
    ratios: &InertiaRatios,
    orbit: OrbitRate,
) -> ErrorModel {
    let mut a = StateMatrix::zeros();
    let (jac_rate, jac_ratio) = rot_jacobians(omega_nom, ratios);

    a.fixed_view_mut::<3, 3>(layout::ATT, layout::ATT)
        .copy_from(&(-cross_matrix(omega_nom)));
    a.fixed_view_mut::<3, 3>(layout::ATT, layout::RATE)
        .copy_from(&(Matrix3::identity() * 0.5));
    a.fixed_view_mut::<3, 3>(layout::RATE, layout::RATE)
        .copy_from(&jac_rate);
    a.fixed_view_mut::<3, 3>(layout::RATE, layout::INERTIA)
        .copy_from(&jac_ratio);
    a.fixed_view_mut::<3, 3>(layout::POS, layout::VEL)
        .copy_from(&Matrix3::identity());
    a.fixed_view_mut::<3, 3>(layout::VEL, layout::POS)
        .copy_from(&cw_gradient(orbit));
    a.fixed_view_mut::<3, 3>(layout::VEL, layout::VEL)
        .copy_from(&(-2.0 * cross_matrix(orbit.vector())));

    let mut b = NoiseMatrix::zeros();
    b.fixed_view_mut::<3, 3>(layout::RATE, 0).copy_from(&ratios.j);
    b.fixed_view_mut::<3, 3>(layout::VEL, 3)
        .copy_from(&Matrix3::identity());

    ErrorModel { a, b }
}

/// Full nonlinear drift of the error coordinates about a body-rate
/// linearization point, with the total rates, positions and parameters as
/// coordinates. Finite differences of this map are the independent check for
/// [`continuous_error_model`].
pub fn error_drift(chi: &StateVector, omega_nom: Vector3<f64>, orbit: OrbitRate) -> StateVector {
    let dqv = chi.fixed_rows::<3>(layout::ATT).into_owned();
    let omega = chi.fixed_rows::<3>(layout::RATE).into_owned();
    let p = chi.fixed_rows::<3>(layout::INERTIA).into_owned();
    let pos = chi.fixed_rows::<3>(layout::POS).into_owned();
    let vel = chi.fixed_rows::<3>(layout::VEL).into_owned();

    // d(dq_v)/dt = 1/2 (-(w + w_nom) x dq_v + dq_o (w - w_nom)), the exact
    // kinematics of dq = q (x) q_nom* with q_nom held at the nominal rate.
    let dqo = (1.0 - dqv.norm_squared()).max(0.0).sqrt();
    let att_dot = 0.5 * (-(omega + omega_nom).cross(&dqv) + dqo * (omega - omega_nom));

    let psi = Vector3::new(
        p[0] * omega[1] * omega[2],
        p[1] * omega[0] * omega[2],
        p[2] * omega[0] * omega[1],
    );

    let mut out = StateVector::zeros();
    out.fixed_rows_mut::<3>(layout::ATT).copy_from(&att_dot);
    out.fixed_rows_mut::<3>(layout::RATE).copy_from(&psi);
    out.fixed_rows_mut::<3>(layout::POS).copy_from(&vel);
    out.fixed_rows_mut::<3>(layout::VEL)
        .copy_from(&cw_accel(pos, vel, orbit));
    out
}

/// Advances the ground truth by `dt` with fixed-step RK4 on the rates and the
/// translational state (substep at most [`MAX_SUBSTEP`]); the quaternion is
/// advanced per substep at the substep-mean rate. `disturbance`, when given,
/// is a `(torque, force)` pair held constant over the whole call.
pub fn propagate_truth(
    state: &TruthState,
    ratios: &InertiaRatios,
    orbit: OrbitRate,
    dt: f64,
    disturbance: Option<(Vector3<f64>, Vector3<f64>)>,
) -> Result<TruthState> {
    if !state.is_finite() || !dt.is_finite() || dt < 0.0 {
        return Err(Error::NonFinite("truth state"));
    }
    if dt == 0.0 {
        return Ok(*state);
    }

    let (eps_torque, eps_force) = disturbance.unwrap_or((Vector3::zeros(), Vector3::zeros()));
    let torque = ratios.j * eps_torque;

    let deriv = |omega: Vector3<f64>, pos: Vector3<f64>, vel: Vector3<f64>| {
        (
            euler_accel(omega, ratios) + torque,
            vel,
            cw_accel(pos, vel, orbit) + eps_force,
        )
    };

    let steps = (dt / MAX_SUBSTEP).ceil() as usize;
    let h = dt / steps as f64;

    let mut q = state.q;
    let mut omega = state.omega;
    let mut pos = state.pos;
    let mut vel = state.vel;

    for _ in 0..steps {
        let (kw1, kr1, kv1) = deriv(omega, pos, vel);
        let (kw2, kr2, kv2) = deriv(
            omega + kw1 * (h / 2.0),
            pos + kr1 * (h / 2.0),
            vel + kv1 * (h / 2.0),
        );
        let (kw3, kr3, kv3) = deriv(
            omega + kw2 * (h / 2.0),
            pos + kr2 * (h / 2.0),
            vel + kv2 * (h / 2.0),
        );
        let (kw4, kr4, kv4) = deriv(omega + kw3 * h, pos + kr3 * h, vel + kv3 * h);

        let omega_next = omega + (kw1 + kw2 * 2.0 + kw3 * 2.0 + kw4) * (h / 6.0);
        pos += (kr1 + kr2 * 2.0 + kr3 * 2.0 + kr4) * (h / 6.0);
        vel += (kv1 + kv2 * 2.0 + kv3 * 2.0 + kv4) * (h / 6.0);

        q = propagate_const_rate(&q, (omega + omega_next) * 0.5, h);
        omega = omega_next;
    }

    let out = TruthState { q, omega, pos, vel, t: state.t + dt };
    if !out.is_finite() {
        return Err(Error::NonFinite("propagated truth state"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::validate::cw_closed_form;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn target_ratios() -> InertiaRatios {
        InertiaRatios::from_moments(Vector3::new(4.0, 8.0, 5.0)).unwrap()
    }

    #[test]
    fn ratios_from_principal_moments() {
        let r = target_ratios();
        assert_abs_diff_eq!(r.p, Vector3::new(0.75, 0.125, -0.8), epsilon = 1e-15);
        assert_abs_diff_eq!(r.j[(0, 0)], 1.0, epsilon = 0.0);
        assert_abs_diff_eq!(r.j[(1, 1)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(r.j[(2, 2)], 0.8, epsilon = 1e-15);
    }

    #[test]
    fn ratios_round_trip_through_p() {
        let r = target_ratios();
        let back = InertiaRatios::from_ratios(r.p);
        assert_abs_diff_eq!(back.j, r.j, epsilon = 1e-14);
        // Third ratio is redundant but must come out consistent.
        assert_abs_diff_eq!(back.p, r.p, epsilon = 1e-15);
    }

    #[test]
    fn euler_accel_principal_axis_and_sphere() {
        let r = target_ratios();
        let out = euler_accel(Vector3::new(5.0, 0.0, 0.0), &r);
        assert_abs_diff_eq!(out, Vector3::zeros(), epsilon = 0.0);

        let sphere = InertiaRatios::from_moments(Vector3::new(3.0, 3.0, 3.0)).unwrap();
        let out = euler_accel(Vector3::new(0.4, -1.2, 2.2), &sphere);
        assert_abs_diff_eq!(out, Vector3::zeros(), epsilon = 0.0);
    }

    #[test]
    fn euler_accel_hand_value() {
        let out = euler_accel(Vector3::new(1.0, 2.0, 3.0), &target_ratios());
        assert_abs_diff_eq!(out, Vector3::new(4.5, 0.375, -1.6), epsilon = 1e-14);
    }

    #[test]
    fn euler_accel_even_under_paired_negation() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let r = target_ratios();
        for _ in 0..50 {
            let w = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let flipped = Vector3::new(w[0], -w[1], -w[2]);
            assert_abs_diff_eq!(
                euler_accel(w, &r)[0],
                euler_accel(flipped, &r)[0],
                epsilon = 0.0
            );
            let flipped = Vector3::new(-w[0], w[1], -w[2]);
            assert_abs_diff_eq!(
                euler_accel(w, &r)[1],
                euler_accel(flipped, &r)[1],
                epsilon = 0.0
            );
        }
    }

    #[test]
    fn jacobians_zero_rate_and_hand_value() {
        let r = target_ratios();
        let (a, b) = rot_jacobians(Vector3::zeros(), &r);
        assert_abs_diff_eq!(a, Matrix3::zeros(), epsilon = 0.0);
        assert_abs_diff_eq!(b, Matrix3::zeros(), epsilon = 0.0);

        let (_, b) = rot_jacobians(Vector3::new(1.0, 2.0, 3.0), &r);
        let expected = Matrix3::from_diagonal(&Vector3::new(6.0, 3.0, 2.0));
        assert_abs_diff_eq!(b, expected, epsilon = 1e-14);
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let h = 1e-6;
        for _ in 0..100 {
            let p = Vector3::new(
                rng.random_range(-0.9..0.9),
                rng.random_range(-0.9..0.9),
                rng.random_range(-0.9..0.9),
            );
            let ratios = InertiaRatios { p, j: Matrix3::identity() };
            let w = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let (a, b) = rot_jacobians(w, &ratios);
            for k in 0..3 {
                let mut dw = Vector3::zeros();
                dw[k] = h;
                let col = (euler_accel(w + dw, &ratios) - euler_accel(w - dw, &ratios)) / (2.0 * h);
                assert_abs_diff_eq!(col, a.column(k).into_owned(), epsilon = 1e-6);

                let mut dp = Vector3::zeros();
                dp[k] = h;
                let plus = InertiaRatios { p: p + dp, j: Matrix3::identity() };
                let minus = InertiaRatios { p: p - dp, j: Matrix3::identity() };
                let col = (euler_accel(w, &plus) - euler_accel(w, &minus)) / (2.0 * h);
                assert_abs_diff_eq!(col, b.column(k).into_owned(), epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn cw_accel_equilibrium_and_free_space() {
        let orbit = OrbitRate::new(1.13e-3);
        assert_abs_diff_eq!(
            cw_accel(Vector3::zeros(), Vector3::zeros(), orbit),
            Vector3::zeros(),
            epsilon = 0.0
        );
        let free = OrbitRate::new(0.0);
        assert_abs_diff_eq!(
            cw_accel(Vector3::new(9.0, -4.0, 2.0), Vector3::new(1.0, 2.0, 3.0), free),
            Vector3::zeros(),
            epsilon = 0.0
        );
    }

    #[test]
    fn cw_accel_hand_value() {
        let orbit = OrbitRate::new(1.13e-3);
        let out = cw_accel(Vector3::new(1000.0, 0.0, 0.0), Vector3::zeros(), orbit);
        assert_abs_diff_eq!(out[0], 3.8307e-3, epsilon = 1e-7);
        assert_abs_diff_eq!(out[1], 0.0, epsilon = 0.0);
        assert_abs_diff_eq!(out[2], 0.0, epsilon = 0.0);
    }

    #[test]
    fn error_model_static_sparsity() {
        let ratios = InertiaRatios { p: Vector3::zeros(), j: Matrix3::identity() };
        let model = continuous_error_model(Vector3::zeros(), &ratios, OrbitRate::new(0.0));
        // Only the dq_v <- omega and r_o <- v_o couplings survive.
        let mut expected = StateMatrix::zeros();
        expected
            .fixed_view_mut::<3, 3>(layout::ATT, layout::RATE)
            .copy_from(&(Matrix3::identity() * 0.5));
        expected
            .fixed_view_mut::<3, 3>(layout::POS, layout::VEL)
            .copy_from(&Matrix3::identity());
        assert_abs_diff_eq!(model.a, expected, epsilon = 0.0);
    }

    #[test]
    fn error_model_parameter_columns_are_zero() {
        let model = continuous_error_model(
            Vector3::new(0.1, 0.2, 0.15),
            &target_ratios(),
            OrbitRate::new(1.13e-3),
        );
        for col in layout::POR..layout::DIM {
            assert_abs_diff_eq!(model.a.column(col).amax(), 0.0, epsilon = 0.0);
        }
        let n = model.a.fixed_view::<3, 3>(layout::VEL, layout::POS).into_owned();
        let nz2 = 1.13e-3f64 * 1.13e-3;
        assert_abs_diff_eq!(
            n,
            Matrix3::from_diagonal(&Vector3::new(3.0 * nz2, 0.0, -nz2)),
            epsilon = 0.0
        );
    }

    #[test]
    fn error_model_matches_drift_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let orbit = OrbitRate::new(1.13e-3);
        let h = 5e-6;
        for _ in 0..50 {
            let omega_nom = Vector3::new(
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
            );
            let p = Vector3::new(
                rng.random_range(-0.9..0.9),
                rng.random_range(-0.9..0.9),
                rng.random_range(-0.9..0.9),
            );
            let ratios = InertiaRatios { p, j: Matrix3::identity() };
            let model = continuous_error_model(omega_nom, &ratios, orbit);

            let mut chi = StateVector::zeros();
            chi.fixed_rows_mut::<3>(layout::RATE).copy_from(&omega_nom);
            chi.fixed_rows_mut::<3>(layout::INERTIA).copy_from(&p);
            chi.fixed_rows_mut::<3>(layout::POS)
                .copy_from(&Vector3::new(12.0, -3.0, 7.0));
            chi.fixed_rows_mut::<3>(layout::VEL)
                .copy_from(&Vector3::new(0.05, -0.02, 0.01));

            for k in 0..layout::DIM {
                let mut plus = chi;
                let mut minus = chi;
                plus[k] += h;
                minus[k] -= h;
                let col = (error_drift(&plus, omega_nom, orbit)
                    - error_drift(&minus, omega_nom, orbit))
                    / (2.0 * h);
                let max_err = (col - model.a.column(k)).amax();
                assert!(
                    max_err < 1e-6,
                    "column {k}: finite-difference mismatch {max_err:.3e}"
                );
            }
        }
    }

    #[test]
    fn truth_rest_state_only_advances_time() {
        let s = TruthState {
            q: Quaternion::identity(),
            omega: Vector3::zeros(),
            pos: Vector3::new(5.0, 1.0, -2.0),
            vel: Vector3::zeros(),
            t: 0.0,
        };
        let out =
            propagate_truth(&s, &target_ratios(), OrbitRate::new(0.0), 2.5, None).unwrap();
        assert_abs_diff_eq!(out.pos, s.pos, epsilon = 0.0);
        assert_abs_diff_eq!(out.vel, s.vel, epsilon = 0.0);
        assert_abs_diff_eq!(out.omega, s.omega, epsilon = 0.0);
        assert_abs_diff_eq!(out.q.as_vector(), s.q.as_vector(), epsilon = 0.0);
        assert_abs_diff_eq!(out.t, 2.5, epsilon = 0.0);
    }

    #[test]
    fn truth_rejects_non_finite() {
        let s = TruthState {
            q: Quaternion::identity(),
            omega: Vector3::new(f64::NAN, 0.0, 0.0),
            pos: Vector3::zeros(),
            vel: Vector3::zeros(),
            t: 0.0,
        };
        assert!(propagate_truth(&s, &target_ratios(), OrbitRate::new(0.0), 1.0, None).is_err());
    }

    #[test]
    fn torque_free_tumble_conserves_momentum_and_energy() {
        let moments = Vector3::new(4.0, 8.0, 5.0);
        let inertia = Matrix3::from_diagonal(&moments);
        let ratios = InertiaRatios::from_moments(moments).unwrap();
        let mut s = TruthState {
            q: Quaternion::identity(),
            omega: Vector3::new(0.1, 0.2, 0.15),
            pos: Vector3::zeros(),
            vel: Vector3::zeros(),
            t: 0.0,
        };
        let h0 = (inertia * s.omega).norm();
        let e0 = 0.5 * s.omega.dot(&(inertia * s.omega));
        for _ in 0..120 {
            s = propagate_truth(&s, &ratios, OrbitRate::new(0.0), 1.0, None).unwrap();
        }
        let h = (inertia * s.omega).norm();
        let e = 0.5 * s.omega.dot(&(inertia * s.omega));
        assert!((h - h0).abs() / h0 < 1e-9, "momentum drift {:e}", (h - h0) / h0);
        assert!((e - e0).abs() / e0 < 1e-9, "energy drift {:e}", (e - e0) / e0);
    }

    #[test]
    fn translation_matches_cw_closed_form_over_one_orbit() {
        let orbit = OrbitRate::new(1.13e-3);
        let r0 = Vector3::new(30.0, -10.0, 5.0);
        let mut s = TruthState {
            q: Quaternion::identity(),
            omega: Vector3::zeros(),
            pos: r0,
            vel: Vector3::zeros(),
            t: 0.0,
        };
        let period = 2.0 * std::f64::consts::PI / orbit.n_z;
        let ratios = target_ratios();
        let chunk = period / 64.0;
        for _ in 0..64 {
            s = propagate_truth(&s, &ratios, orbit, chunk, None).unwrap();
        }
        let (r_exact, v_exact) = cw_closed_form(r0, Vector3::zeros(), orbit.n_z, period);
        assert!((s.pos - r_exact).norm() < 1e-6, "pos err {:e}", (s.pos - r_exact).norm());
        assert!((s.vel - v_exact).norm() < 1e-9, "vel err {:e}", (s.vel - v_exact).norm());
    }

    #[test]
    fn truth_propagation_is_bit_deterministic() {
        let s = TruthState {
            q: Quaternion::from_axis_angle(Vector3::new(1.0, 1.0, 1.0).normalize(), 0.4),
            omega: Vector3::new(0.1, 0.2, 0.15),
            pos: Vector3::new(10.0, -5.0, 2.0),
            vel: Vector3::new(0.01, 0.02, -0.03),
            t: 0.0,
        };
        let d = Some((Vector3::new(1e-4, -2e-4, 5e-5), Vector3::new(-1e-4, 3e-4, 1e-4)));
        let a = propagate_truth(&s, &target_ratios(), OrbitRate::new(1.13e-3), 7.3, d).unwrap();
        let b = propagate_truth(&s, &target_ratios(), OrbitRate::new(1.13e-3), 7.3, d).unwrap();
        assert_eq!(a.q.as_vector(), b.q.as_vector());
        assert_eq!(a.omega, b.omega);
        assert_eq!(a.pos, b.pos);
        assert_eq!(a.vel, b.vel);
    }
}
