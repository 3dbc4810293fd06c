//! Built-in self-checks against independent numerical oracles.
//!
//! Each check recomputes a quantity the estimator depends on through an
//! unrelated route — central finite differences, fine-step matrix-ODE
//! integration, closed-form solutions, conservation laws — and reports the
//! worst disagreement. The `validate` CLI subcommand prints these as a
//! pass/fail table; the acceptance tests pin them at fixed tolerances.

use nalgebra::{DMatrix, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::attitude::{quat_mul, ProductOp, Quaternion, SmallRotation};
use crate::discretize::van_loan;
use crate::dynamics::{
    continuous_error_model, error_drift, propagate_truth, InertiaRatios, OrbitRate, TruthState,
};
use crate::ekf::{rot_body_to_cam, sensitivity_matrix};
use crate::layout::{self, MeasMatrix, StateVector};

/// Outcome of one self-check.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub max_error: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_error.is_finite() && self.max_error < self.tolerance
    }
}

/// Error injections for negative-control testing of the checks themselves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Perturbation {
    #[default]
    None,
    /// Biases the first block of the assembled sensitivity matrix.
    SensitivityBias,
}

/// Runs the full check suite.
pub fn run_checks(perturb: Perturbation) -> Vec<CheckResult> {
    vec![
        CheckResult {
            name: "pose sensitivity vs finite differences",
            max_error: sensitivity_fd_error(100, 42, perturb),
            tolerance: 1e-6,
        },
        CheckResult {
            name: "error model vs finite differences",
            max_error: error_model_fd_error(100, 43),
            tolerance: 1e-6,
        },
        CheckResult {
            name: "van Loan vs matrix-ODE integration",
            max_error: van_loan_ode_error(20, 44),
            tolerance: 1e-6,
        },
        CheckResult {
            name: "double-integrator process noise closed form",
            max_error: double_integrator_error(),
            tolerance: 1e-10,
        },
        CheckResult {
            name: "momentum and energy conservation",
            max_error: conservation_error(),
            tolerance: 1e-9,
        },
        CheckResult {
            name: "relative orbit vs closed form",
            max_error: cw_closed_form_error(),
            tolerance: 1e-6,
        },
    ]
}

fn random_unit_quat(rng: &mut ChaCha12Rng) -> Quaternion {
    loop {
        let q = Quaternion::new(
            Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ),
            rng.random_range(-1.0..1.0),
        );
        if q.norm() > 0.1 {
            return q.normalized();
        }
    }
}

fn random_vec(rng: &mut ChaCha12Rng, scale: f64) -> Vector3<f64> {
    Vector3::new(
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
    )
}

/// Central finite differences of the full nonlinear pose-measurement map,
/// perturbing each of the 21 error coordinates and recomposing the
/// quaternions multiplicatively.
pub fn measurement_jacobian_fd(
    q_nom: &Quaternion,
    eta_nom: &Quaternion,
    pos: Vector3<f64>,
    por: Vector3<f64>,
    h: f64,
) -> MeasMatrix {
    let measure = |chi: &StateVector| -> nalgebra::Vector6<f64> {
        let dq = SmallRotation::new(chi.fixed_rows::<3>(layout::ATT).into_owned())
            .expect("perturbation too large")
            .to_quaternion();
        let deta = SmallRotation::new(chi.fixed_rows::<3>(layout::ETA).into_owned())
            .expect("perturbation too large")
            .to_quaternion();
        let q = quat_mul(&dq, q_nom, ProductOp::Otimes);
        let eta = quat_mul(&deta, eta_nom, ProductOp::Odot);
        let r_o = pos + chi.fixed_rows::<3>(layout::POS).into_owned();
        let rho = por + chi.fixed_rows::<3>(layout::POR).into_owned();

        let pose = r_o + rot_body_to_cam(&q) * rho;
        let predicted = pos + rot_body_to_cam(q_nom) * por;
        let mu = quat_mul(&eta, &q, ProductOp::Otimes);
        let e2 = quat_mul(
            &quat_mul(&eta_nom.conjugate(), &mu, ProductOp::Otimes),
            &q_nom.conjugate(),
            ProductOp::Otimes,
        )
        .positive_scalar();

        let mut out = nalgebra::Vector6::zeros();
        out.fixed_rows_mut::<3>(0).copy_from(&(pose - predicted));
        out.fixed_rows_mut::<3>(3).copy_from(&e2.v);
        out
    };

    let mut jac = MeasMatrix::zeros();
    for k in 0..layout::DIM {
        let mut plus = StateVector::zeros();
        let mut minus = StateVector::zeros();
        plus[k] = h;
        minus[k] = -h;
        let col = (measure(&plus) - measure(&minus)) / (2.0 * h);
        jac.column_mut(k).copy_from(&col);
    }
    jac
}

/// Worst deviation between the assembled sensitivity matrix and finite
/// differences over `count` random states.
pub fn sensitivity_fd_error(count: usize, seed: u64, perturb: Perturbation) -> f64 {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let q_nom = random_unit_quat(&mut rng);
        let eta_nom = random_unit_quat(&mut rng);
        let pos = random_vec(&mut rng, 10.0);
        let por = random_vec(&mut rng, 0.5);

        let mut h = sensitivity_matrix(&q_nom, por);
        if perturb == Perturbation::SensitivityBias {
            h[(0, layout::ATT)] += 1e-3;
        }
        let fd = measurement_jacobian_fd(&q_nom, &eta_nom, pos, por, 1e-6);
        worst = worst.max((h - fd).amax());
    }
    worst
}

/// Worst deviation between the assembled continuous error model and finite
/// differences of the nonlinear drift over `count` random linearization
/// points.
pub fn error_model_fd_error(count: usize, seed: u64) -> f64 {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let orbit = OrbitRate::new(1.13e-3);
    let h = 5e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let omega_nom = random_vec(&mut rng, 0.5);
        let p = random_vec(&mut rng, 0.9);
        let ratios = InertiaRatios { p, j: nalgebra::Matrix3::identity() };
        let model = continuous_error_model(omega_nom, &ratios, orbit);

        let mut chi = StateVector::zeros();
        chi.fixed_rows_mut::<3>(layout::RATE).copy_from(&omega_nom);
        chi.fixed_rows_mut::<3>(layout::INERTIA).copy_from(&p);
        chi.fixed_rows_mut::<3>(layout::POS)
            .copy_from(&random_vec(&mut rng, 20.0));
        chi.fixed_rows_mut::<3>(layout::VEL)
            .copy_from(&random_vec(&mut rng, 0.1));

        for k in 0..layout::DIM {
            let mut plus = chi;
            let mut minus = chi;
            plus[k] += h;
            minus[k] -= h;
            let col =
                (error_drift(&plus, omega_nom, orbit) - error_drift(&minus, omega_nom, orbit))
                    / (2.0 * h);
            worst = worst.max((col - model.a.column(k)).amax());
        }
    }
    worst
}

/// RK4 integration of the transition ODE `dX/dt = A X, X(0) = I` and the
/// covariance ODE `dP/dt = A P + P A^T + G, P(0) = 0` over one interval.
pub fn integrate_transition_ode(
    a: &DMatrix<f64>,
    g: &DMatrix<f64>,
    dt: f64,
    steps: usize,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let h = dt / steps as f64;
    let mut x = DMatrix::identity(n, n);
    let mut p = DMatrix::zeros(n, n);

    let dx = |x: &DMatrix<f64>| a * x;
    let dp = |p: &DMatrix<f64>| a * p + p * a.transpose() + g;

    for _ in 0..steps {
        let k1 = dx(&x);
        let k2 = dx(&(&x + &k1 * (h / 2.0)));
        let k3 = dx(&(&x + &k2 * (h / 2.0)));
        let k4 = dx(&(&x + &k3 * h));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);

        let k1 = dp(&p);
        let k2 = dp(&(&p + &k1 * (h / 2.0)));
        let k3 = dp(&(&p + &k2 * (h / 2.0)));
        let k4 = dp(&(&p + &k3 * h));
        p += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    (x, p)
}

/// Largest elementwise deviation of `a` from `b`, relative to the largest
/// magnitude in `b`.
pub fn max_rel_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(f64::MIN_POSITIVE)
}

/// Worst relative deviation between the van Loan pair and matrix-ODE
/// integration at `count` random linearization points of the error model.
pub fn van_loan_ode_error(count: usize, seed: u64) -> f64 {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let orbit = OrbitRate::new(1.13e-3);
    let dt = 0.5;
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let omega_nom = random_vec(&mut rng, 0.5);
        let p = random_vec(&mut rng, 0.9);
        let ratios = InertiaRatios::from_ratios(p);
        let model = continuous_error_model(omega_nom, &ratios, orbit);

        let a = DMatrix::from_iterator(layout::DIM, layout::DIM, model.a.iter().copied());
        let b = DMatrix::from_iterator(layout::DIM, layout::NOISE_DIM, model.b.iter().copied());
        let s = DMatrix::from_partial_diagonal(
            layout::NOISE_DIM,
            layout::NOISE_DIM,
            &[1e-8, 1e-8, 1e-8, 4e-8, 4e-8, 4e-8],
        );

        let (phi, q) = van_loan(&a, &b, &s, dt).expect("van Loan");
        let (phi_ode, q_ode) = integrate_transition_ode(&a, &(&b * &s * b.transpose()), dt, 1000);
        worst = worst.max(max_rel_error(&phi, &phi_ode));
        worst = worst.max(max_rel_error(&q, &q_ode));
    }
    worst
}

/// Deviation of the van Loan Q from the closed-form double-integrator
/// covariance `sigma^2 [[T^3/3, T^2/2], [T^2/2, T]]`.
pub fn double_integrator_error() -> f64 {
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
    let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
    let sigma2 = 0.04;
    let s = DMatrix::from_row_slice(1, 1, &[sigma2]);
    let dt = 0.5;
    let (_, q) = van_loan(&a, &b, &s, dt).expect("van Loan");
    let expected = DMatrix::from_row_slice(
        2,
        2,
        &[
            sigma2 * dt.powi(3) / 3.0,
            sigma2 * dt * dt / 2.0,
            sigma2 * dt * dt / 2.0,
            sigma2 * dt,
        ],
    );
    (q - expected).amax()
}

/// Relative drift of angular momentum and rotational kinetic energy over a
/// 120 s torque-free tumble.
pub fn conservation_error() -> f64 {
    let moments = Vector3::new(4.0, 8.0, 5.0);
    let inertia = nalgebra::Matrix3::from_diagonal(&moments);
    let ratios = InertiaRatios::from_moments(moments).expect("positive moments");
    let mut s = TruthState {
        q: Quaternion::identity(),
        omega: Vector3::new(0.1, 0.2, 0.15),
        pos: Vector3::zeros(),
        vel: Vector3::zeros(),
        t: 0.0,
    };
    let h0 = (inertia * s.omega).norm();
    let e0 = 0.5 * s.omega.dot(&(inertia * s.omega));
    for _ in 0..240 {
        s = propagate_truth(&s, &ratios, OrbitRate::new(0.0), 0.5, None).expect("finite");
    }
    let h = (inertia * s.omega).norm();
    let e = 0.5 * s.omega.dot(&(inertia * s.omega));
    ((h - h0).abs() / h0).max((e - e0).abs() / e0)
}

/// Closed-form solution of the relative-orbit equations for a chaser rate
/// `n_z`: radial x, along-track y, cross-track z.
pub fn cw_closed_form(
    r0: Vector3<f64>,
    v0: Vector3<f64>,
    n_z: f64,
    t: f64,
) -> (Vector3<f64>, Vector3<f64>) {
    let n = n_z;
    let (snt, cnt) = (n * t).sin_cos();
    let r = Vector3::new(
        (4.0 - 3.0 * cnt) * r0[0] + snt / n * v0[0] + 2.0 / n * (1.0 - cnt) * v0[1],
        6.0 * (snt - n * t) * r0[0] + r0[1] + 2.0 / n * (cnt - 1.0) * v0[0]
            + (4.0 * snt - 3.0 * n * t) / n * v0[1],
        r0[2] * cnt + v0[2] / n * snt,
    );
    let v = Vector3::new(
        3.0 * n * snt * r0[0] + cnt * v0[0] + 2.0 * snt * v0[1],
        6.0 * n * (cnt - 1.0) * r0[0] - 2.0 * snt * v0[0] + (4.0 * cnt - 3.0) * v0[1],
        -r0[2] * n * snt + v0[2] * cnt,
    );
    (r, v)
}

/// Position deviation of the truth integrator from the closed-form relative
/// orbit after a quarter orbit.
pub fn cw_closed_form_error() -> f64 {
    let orbit = OrbitRate::new(1.13e-3);
    let r0 = Vector3::new(30.0, -10.0, 5.0);
    let v0 = Vector3::new(0.01, -0.02, 0.005);
    let mut s = TruthState {
        q: Quaternion::identity(),
        omega: Vector3::zeros(),
        pos: r0,
        vel: v0,
        t: 0.0,
    };
    let ratios = InertiaRatios::from_ratios(Vector3::zeros());
    let horizon = 0.25 * 2.0 * std::f64::consts::PI / orbit.n_z;
    let chunk = horizon / 16.0;
    for _ in 0..16 {
        s = propagate_truth(&s, &ratios, orbit, chunk, None).expect("finite");
    }
    let (r_exact, _) = cw_closed_form(r0, v0, orbit.n_z, horizon);
    (s.pos - r_exact).norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pristine_checks_all_pass() {
        for check in run_checks(Perturbation::None) {
            assert!(
                check.passed(),
                "{}: {:.3e} exceeds {:.1e}",
                check.name,
                check.max_error,
                check.tolerance
            );
        }
    }

    #[test]
    fn sensitivity_bias_is_caught() {
        let err = sensitivity_fd_error(5, 42, Perturbation::SensitivityBias);
        assert!(err > 1e-6, "injected bias must fail the check, got {err:e}");
    }

    #[test]
    fn closed_form_orbit_reduces_to_rest() {
        let (r, v) = cw_closed_form(Vector3::zeros(), Vector3::zeros(), 1.13e-3, 500.0);
        assert!(r.norm() == 0.0 && v.norm() == 0.0);
    }
}
