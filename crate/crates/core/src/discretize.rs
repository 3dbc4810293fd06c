//! Matrix exponential and the van Loan construction of the discrete-time
//! transition matrix and process-noise covariance.
//!
//! The exponential uses scaling-and-squaring with the diagonal Pade(13)
//! approximant (Higham 2005); the van Loan step exponentiates the 42x42
//! augmented block matrix once per sampling interval and reads the discrete
//! pair `(Phi, Q)` out of its blocks.

use nalgebra::{DMatrix, Vector3};

use crate::dynamics::ErrorModel;
use crate::layout::{self, NoiseCovariance, StateMatrix};
use crate::{Error, Result};

/// Pade(13) numerator coefficients.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Scaling threshold for Pade(13) (Higham 2005, Table 10.2).
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling-and-squaring with Pade(13).
pub fn expm(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "expm requires a square matrix");
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Expm("non-finite input"));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }

    let norm = one_norm(m);
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as u32
    } else {
        0
    };
    let scaled = m / 2f64.powi(squarings as i32);

    let eye = DMatrix::identity(n, n);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;

    let u_inner = &a6 * (&a6 * PADE13[13] + &a4 * PADE13[11] + &a2 * PADE13[9])
        + &a6 * PADE13[7]
        + &a4 * PADE13[5]
        + &a2 * PADE13[3]
        + &eye * PADE13[1];
    let u = &scaled * u_inner;
    let v = &a6 * (&a6 * PADE13[12] + &a4 * PADE13[10] + &a2 * PADE13[8])
        + &a6 * PADE13[6]
        + &a4 * PADE13[4]
        + &a2 * PADE13[2]
        + &eye * PADE13[0];

    // exp(A) ~= (V - U)^-1 (V + U)
    let mut result = (&v - &u)
        .lu()
        .solve(&(&v + &u))
        .ok_or(Error::Expm("singular Pade denominator"))?;
    for _ in 0..squarings {
        result = &result * &result;
    }
    Ok(result)
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// One van Loan evaluation: forms
///
/// ```text
/// exp( [ -A   B S B^T ]     )   =  [ D11  D12 ]
///      [  0      A^T   ] * T       [  0   D22 ]
/// ```
///
/// and returns `Phi = D22^T` and `Q = sym(Phi * D12)`.
pub fn van_loan(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    noise_cov: &DMatrix<f64>,
    dt: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    assert_eq!(n, b.nrows());
    assert_eq!(b.ncols(), noise_cov.nrows());

    let bsb = b * noise_cov * b.transpose();
    let mut aug = DMatrix::zeros(2 * n, 2 * n);
    aug.view_mut((0, 0), (n, n)).copy_from(&(-a));
    aug.view_mut((0, n), (n, n)).copy_from(&bsb);
    aug.view_mut((n, n), (n, n)).copy_from(&a.transpose());
    aug *= dt;

    let d = expm(&aug)?;
    let d12 = d.view((0, n), (n, n)).into_owned();
    let phi = d.view((n, n), (n, n)).transpose();
    let q_raw = &phi * d12;
    let q = (&q_raw + q_raw.transpose()) * 0.5;
    Ok((phi, q))
}

/// Discrete model of the 21-state error dynamics over one sampling interval.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel {
    /// State-transition matrix.
    pub phi: StateMatrix,
    /// Process-noise covariance, symmetric PSD.
    pub q: StateMatrix,
    /// Sampling time, s.
    pub dt: f64,
}

/// Optional artificial random-walk intensities keeping the parameter gains
/// alive. All zero by default, which leaves the parameter rows of `Q` exactly
/// empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParameterWalk {
    pub sigma_ratios: f64,
    pub sigma_por: f64,
    pub sigma_eta: f64,
}

impl Default for ParameterWalk {
    fn default() -> Self {
        ParameterWalk { sigma_ratios: 0.0, sigma_por: 0.0, sigma_eta: 0.0 }
    }
}

impl ParameterWalk {
    pub fn is_zero(&self) -> bool {
        self.sigma_ratios == 0.0 && self.sigma_por == 0.0 && self.sigma_eta == 0.0
    }
}

impl DiscreteModel {
    /// Discretizes a continuous error model over `dt`.
    pub fn from_error_model(
        model: &ErrorModel,
        noise_cov: &NoiseCovariance,
        walk: &ParameterWalk,
        dt: f64,
    ) -> Result<DiscreteModel> {
        let a = DMatrix::from_iterator(layout::DIM, layout::DIM, model.a.iter().copied());
        let b = DMatrix::from_iterator(layout::DIM, layout::NOISE_DIM, model.b.iter().copied());
        let s = DMatrix::from_iterator(
            layout::NOISE_DIM,
            layout::NOISE_DIM,
            noise_cov.iter().copied(),
        );
        let (phi_d, q_d) = van_loan(&a, &b, &s, dt)?;

        let mut phi = StateMatrix::zeros();
        let mut q = StateMatrix::zeros();
        for i in 0..layout::DIM {
            for j in 0..layout::DIM {
                phi[(i, j)] = phi_d[(i, j)];
                q[(i, j)] = q_d[(i, j)];
            }
        }
        if !walk.is_zero() {
            let walk_var = Vector3::new(
                walk.sigma_ratios * walk.sigma_ratios,
                walk.sigma_por * walk.sigma_por,
                walk.sigma_eta * walk.sigma_eta,
            ) * dt;
            for k in 0..3 {
                q[(layout::INERTIA + k, layout::INERTIA + k)] += walk_var[0];
                q[(layout::POR + k, layout::POR + k)] += walk_var[1];
                q[(layout::ETA + k, layout::ETA + k)] += walk_var[2];
            }
        }
        Ok(DiscreteModel { phi, q, dt })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{continuous_error_model, InertiaRatios, OrbitRate};
    use crate::validate::{integrate_transition_ode, max_rel_error};
    use approx::assert_abs_diff_eq;
    use nalgebra::Matrix3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn expm_zero_is_identity() {
        let z = DMatrix::<f64>::zeros(5, 5);
        let e = expm(&z).unwrap();
        assert_abs_diff_eq!(e, DMatrix::identity(5, 5), epsilon = 1e-15);
    }

    #[test]
    fn expm_diagonal() {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -2.0]));
        let e = expm(&d).unwrap();
        assert_abs_diff_eq!(e[(0, 0)], 1f64.exp(), epsilon = 1e-13);
        assert_abs_diff_eq!(e[(1, 1)], (-2f64).exp(), epsilon = 1e-14);
        assert_abs_diff_eq!(e[(0, 1)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn expm_nilpotent() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let e = expm(&m).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert_abs_diff_eq!(e, expected, epsilon = 1e-15);
    }

    #[test]
    fn expm_large_norm_needs_scaling() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![30.0, -30.0]));
        let e = expm(&m).unwrap();
        assert!((e[(0, 0)] - 30f64.exp()).abs() / 30f64.exp() < 1e-12);
        assert!((e[(1, 1)] - (-30f64).exp()).abs() < 1e-20);
    }

    #[test]
    fn expm_rejects_non_finite() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, f64::INFINITY, 0.0, 0.0]);
        assert!(expm(&m).is_err());
    }

    #[test]
    fn van_loan_pure_wiener() {
        let n = 4;
        let a = DMatrix::zeros(n, n);
        let b = DMatrix::identity(n, n);
        let s = DMatrix::identity(n, n);
        let dt = 0.7;
        let (phi, q) = van_loan(&a, &b, &s, dt).unwrap();
        assert_abs_diff_eq!(phi, DMatrix::identity(n, n), epsilon = 1e-13);
        assert_abs_diff_eq!(q, DMatrix::identity(n, n) * dt, epsilon = 1e-13);
    }

    #[test]
    fn van_loan_double_integrator_closed_form() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let sigma2 = 0.3;
        let s = DMatrix::from_row_slice(1, 1, &[sigma2]);
        let dt = 0.5;
        let (phi, q) = van_loan(&a, &b, &s, dt).unwrap();
        assert_abs_diff_eq!(phi, DMatrix::from_row_slice(2, 2, &[1.0, dt, 0.0, 1.0]), epsilon = 1e-12);
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
        assert_abs_diff_eq!(q, expected, epsilon = 1e-10);
    }

    #[test]
    fn van_loan_matches_matrix_ode_on_random_stable_system() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let n = layout::DIM;
        let mut a = DMatrix::zeros(n, n);
        for x in a.iter_mut() {
            *x = rng.random_range(-0.5..0.5);
        }
        // Push the spectrum left so the system is comfortably stable.
        for i in 0..n {
            a[(i, i)] -= 1.0;
        }
        let mut b = DMatrix::zeros(n, layout::NOISE_DIM);
        for x in b.iter_mut() {
            *x = rng.random_range(-1.0..1.0);
        }
        let s = DMatrix::identity(layout::NOISE_DIM, layout::NOISE_DIM) * 0.04;
        let dt = 0.5;

        let (phi, q) = van_loan(&a, &b, &s, dt).unwrap();
        let (phi_ode, q_ode) = integrate_transition_ode(&a, &(&b * &s * b.transpose()), dt, 2000);
        assert!(max_rel_error(&phi, &phi_ode) < 1e-8);
        assert!(max_rel_error(&q, &q_ode) < 1e-6);
    }

    #[test]
    fn transition_semigroup_property() {
        let ratios = InertiaRatios::from_moments(Vector3::new(4.0, 8.0, 5.0)).unwrap();
        let model = continuous_error_model(Vector3::new(0.1, 0.2, 0.15), &ratios, OrbitRate::new(1.13e-3));
        let a = DMatrix::from_iterator(layout::DIM, layout::DIM, model.a.iter().copied());
        let b = DMatrix::zeros(layout::DIM, 1);
        let s = DMatrix::zeros(1, 1);
        let (phi_1, _) = van_loan(&a, &b, &s, 0.3).unwrap();
        let (phi_2, _) = van_loan(&a, &b, &s, 0.2).unwrap();
        let (phi_sum, _) = van_loan(&a, &b, &s, 0.5).unwrap();
        assert!(((&phi_2 * &phi_1) - phi_sum).amax() < 1e-9);
    }

    #[test]
    fn q_scales_linearly_with_noise_covariance() {
        let ratios = InertiaRatios::from_moments(Vector3::new(4.0, 8.0, 5.0)).unwrap();
        let model = continuous_error_model(Vector3::new(0.1, 0.2, 0.15), &ratios, OrbitRate::new(1.13e-3));
        let walk = ParameterWalk::default();
        let mut cov = NoiseCovariance::zeros();
        for i in 0..3 {
            cov[(i, i)] = 1e-8;
            cov[(i + 3, i + 3)] = 4e-8;
        }
        let base = DiscreteModel::from_error_model(&model, &cov, &walk, 0.5).unwrap();
        let scaled = DiscreteModel::from_error_model(&model, &(cov * 3.0), &walk, 0.5).unwrap();
        let rel = (scaled.q - base.q * 3.0).amax() / base.q.amax().max(1e-300);
        assert!(rel < 1e-10, "relative deviation {rel:e}");
    }

    #[test]
    fn parameter_block_is_identity_and_noiseless() {
        let ratios = InertiaRatios::from_moments(Vector3::new(4.0, 8.0, 5.0)).unwrap();
        let model = continuous_error_model(Vector3::new(0.1, 0.2, 0.15), &ratios, OrbitRate::new(1.13e-3));
        let cov = crate::dynamics::NoiseIntensities { sigma_torque: 1e-4, sigma_force: 1e-4 }
            .covariance();
        let d = DiscreteModel::from_error_model(&model, &cov, &ParameterWalk::default(), 0.5)
            .unwrap();

        // POR and principal-axis states are constants with no process noise.
        for i in layout::POR..layout::DIM {
            for j in 0..layout::DIM {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(d.phi[(i, j)], expected, epsilon = 1e-14);
                assert_abs_diff_eq!(d.q[(i, j)], 0.0, epsilon = 1e-20);
                assert_abs_diff_eq!(d.q[(j, i)], 0.0, epsilon = 1e-20);
            }
        }
        // Inertia ratios transition as identity too (their rows of A vanish).
        for k in 0..3 {
            assert_abs_diff_eq!(d.phi[(layout::INERTIA + k, layout::INERTIA + k)], 1.0, epsilon = 1e-14);
        }

        // Symmetric and PSD.
        assert!((d.q - d.q.transpose()).amax() < 1e-12);
        let min_eig = d.q.symmetric_eigenvalues().min();
        assert!(min_eig >= -1e-10 * d.q.trace());
    }

    /// Sample covariance of fine-step stochastic Euler runs of the CW block
    /// against the van Loan Q.
    #[test]
    fn q_matches_monte_carlo_sampling() {
        let orbit = OrbitRate::new(1.13e-3);
        let nz2 = orbit.n_z * orbit.n_z;
        let sigma_f = 2e-3;
        let dt = 0.5;

        let mut a = DMatrix::zeros(6, 6);
        a.view_mut((0, 3), (3, 3)).copy_from(&Matrix3::identity());
        a.view_mut((3, 0), (3, 3))
            .copy_from(&Matrix3::from_diagonal(&Vector3::new(3.0 * nz2, 0.0, -nz2)));
        a.view_mut((3, 3), (3, 3))
            .copy_from(&(-2.0 * crate::attitude::cross_matrix(orbit.vector())));
        let mut b = DMatrix::zeros(6, 3);
        b.view_mut((3, 0), (3, 3)).copy_from(&Matrix3::identity());
        let s = DMatrix::identity(3, 3) * (sigma_f * sigma_f);

        let (_, q) = van_loan(&a, &b, &s, dt).unwrap();

        let n_steps = 50;
        let h = dt / n_steps as f64;
        let n_runs = 100_000;
        let mut rng = ChaCha12Rng::seed_from_u64(97);
        let mut acc = DMatrix::<f64>::zeros(6, 6);
        let mut chi = nalgebra::DVector::<f64>::zeros(6);
        for _ in 0..n_runs {
            chi.fill(0.0);
            for _ in 0..n_steps {
                let drift = &a * &chi * h;
                chi += drift;
                for k in 0..3 {
                    let z: f64 = rng.sample(StandardNormal);
                    chi[3 + k] += sigma_f * h.sqrt() * z;
                }
            }
            acc += &chi * chi.transpose();
        }
        let sample = acc / n_runs as f64;
        let rel = (&sample - &q).norm() / q.norm();
        assert!(rel < 0.05, "Monte-Carlo covariance off by {rel:.3}");
    }
}
