//! Convergence, consistency and prediction-error metrics for scenario runs.

use nalgebra::Vector3;
use serde::Serialize;

use crate::attitude::{error_quat, quat_mul, ProductOp, Quaternion};
use crate::dynamics::{InertiaRatios, TargetGeometry, TruthState};
use crate::ekf::{rot_body_to_cam, FilterState};
use crate::layout::{self, StateVector};

/// Attitude error between two orientations as a rotation angle in degrees,
/// always in `[0, 180]`.
pub fn attitude_error_deg(q_true: &Quaternion, q_est: &Quaternion) -> f64 {
    error_quat(q_true, q_est).rotation_angle().to_degrees()
}

/// True POR position in the camera frame.
pub fn true_por_position(truth: &TruthState, geometry: &TargetGeometry) -> Vector3<f64> {
    truth.pos + rot_body_to_cam(&truth.q) * geometry.por_offset
}

/// True POR orientation in the camera frame, `eta (x) q`.
pub fn true_por_attitude(truth: &TruthState, geometry: &TargetGeometry) -> Quaternion {
    quat_mul(&geometry.eta, &truth.q, ProductOp::Otimes)
}

/// POR pose errors of a snapshot against the truth: position in metres and
/// attitude in degrees, both in the measured POR frame — the quantities a
/// capture has to track.
pub fn por_pose_error(
    truth: &TruthState,
    geometry: &TargetGeometry,
    est: &FilterState,
) -> (f64, f64) {
    let (est_pos, est_quat) = est.reconstructed_pose();
    let pos = (est_pos - true_por_position(truth, geometry)).norm();
    let att = attitude_error_deg(&true_por_attitude(truth, geometry), &est_quat);
    (pos, att)
}

/// Estimation error of a filter snapshot in the 21 error coordinates, with
/// the attitude blocks through the multiplicative error maps.
pub fn error_vector(
    truth: &TruthState,
    true_ratios: Vector3<f64>,
    geometry: &TargetGeometry,
    est: &FilterState,
) -> StateVector {
    let dq = error_quat(&truth.q, &est.q);
    // The misalignment error composes on the other side: deta = eta_nom* (x) eta.
    let deta = quat_mul(&est.eta.conjugate(), &geometry.eta, ProductOp::Otimes).positive_scalar();

    let mut e = StateVector::zeros();
    e.fixed_rows_mut::<3>(layout::ATT).copy_from(&dq.v);
    e.fixed_rows_mut::<3>(layout::RATE)
        .copy_from(&(truth.omega - est.omega));
    e.fixed_rows_mut::<3>(layout::INERTIA)
        .copy_from(&(true_ratios - est.ratios));
    e.fixed_rows_mut::<3>(layout::POS)
        .copy_from(&(truth.pos - est.pos));
    e.fixed_rows_mut::<3>(layout::VEL)
        .copy_from(&(truth.vel - est.vel));
    e.fixed_rows_mut::<3>(layout::POR)
        .copy_from(&(geometry.por_offset - est.por));
    e.fixed_rows_mut::<3>(layout::ETA).copy_from(&deta.v);
    e
}

/// Normalized estimation error squared of one snapshot; `None` when the
/// covariance is singular (flagged sample).
pub fn compute_nees(
    truth: &TruthState,
    true_ratios: Vector3<f64>,
    geometry: &TargetGeometry,
    est: &FilterState,
) -> Option<f64> {
    let e = error_vector(truth, true_ratios, geometry, est);
    let chol = est.cov.cholesky()?;
    Some(e.dot(&chol.solve(&e)))
}

/// Per-run summary written to `metrics.json`.
#[derive(Debug, Clone, Serialize)]
pub struct Metrics {
    pub convergence_time_s: Option<f64>,
    /// RMS POR-frame attitude error after convergence, deg.
    pub post_convergence_rms_attitude_deg: Option<f64>,
    /// RMS target-body attitude error (the q estimate alone), deg.
    pub post_convergence_rms_body_attitude_deg: Option<f64>,
    pub post_convergence_rms_por_position_m: Option<f64>,
    pub post_convergence_rms_rate_rad_s: Option<f64>,
    pub post_convergence_rms_ratios: Option<f64>,
    pub ratios_final: Option<[f64; 3]>,
    pub por_final_m: Option<[f64; 3]>,
    pub updates_applied: usize,
    pub updates_rejected: usize,
    pub invalid_measurements: usize,
    pub faulted: bool,
    pub nees_times_s: Vec<f64>,
    pub nees: Vec<Option<f64>>,
    /// Normalized innovation squared per applied or gated update.
    pub nis_times_s: Vec<f64>,
    pub nis: Vec<f64>,
    pub occlusion_times_s: Vec<f64>,
    pub occlusion_position_error_m: Vec<f64>,
    pub occlusion_attitude_error_deg: Vec<f64>,
}

impl Metrics {
    /// Metrics shell for runs without ground truth (measurement replay).
    pub fn without_truth(
        updates_applied: usize,
        updates_rejected: usize,
        invalid_measurements: usize,
        faulted: bool,
    ) -> Self {
        Metrics {
            convergence_time_s: None,
            post_convergence_rms_attitude_deg: None,
            post_convergence_rms_body_attitude_deg: None,
            post_convergence_rms_por_position_m: None,
            post_convergence_rms_rate_rad_s: None,
            post_convergence_rms_ratios: None,
            ratios_final: None,
            por_final_m: None,
            updates_applied,
            updates_rejected,
            invalid_measurements,
            faulted,
            nees_times_s: Vec::new(),
            nees: Vec::new(),
            nis_times_s: Vec::new(),
            nis: Vec::new(),
            occlusion_times_s: Vec::new(),
            occlusion_position_error_m: Vec::new(),
            occlusion_attitude_error_deg: Vec::new(),
        }
    }
}

/// Attitude < 1 degree and POR position < 1 cm count as converged; the
/// condition has to hold over this many seconds to latch.
const CONVERGED_ATT_DEG: f64 = 1.0;
const CONVERGED_POS_M: f64 = 0.01;
const CONVERGED_HOLD_S: f64 = 1.0;

/// Aligned per-sample inputs for [`summarize`].
pub struct MetricsInput<'a> {
    pub times: &'a [f64],
    pub truth: &'a [TruthState],
    pub estimates: &'a [Option<FilterState>],
    pub invalid: &'a [bool],
    pub nis: &'a [Option<f64>],
    pub geometry: &'a TargetGeometry,
    pub inertia: Vector3<f64>,
    pub updates_applied: usize,
    pub updates_rejected: usize,
    pub faulted: bool,
}

/// Computes the run metrics from aligned truth/estimate series.
pub fn summarize(input: MetricsInput<'_>) -> Metrics {
    let true_ratios = InertiaRatios::from_moments(input.inertia)
        .map(|r| r.p)
        .unwrap_or_else(|_| Vector3::zeros());

    let n = input.times.len();
    let mut att_err = vec![f64::NAN; n];
    let mut body_att_err = vec![f64::NAN; n];
    let mut pos_err = vec![f64::NAN; n];
    for k in 0..n {
        if let Some(est) = &input.estimates[k] {
            let (pos, att) = por_pose_error(&input.truth[k], input.geometry, est);
            pos_err[k] = pos;
            att_err[k] = att;
            body_att_err[k] = attitude_error_deg(&input.truth[k].q, &est.q);
        }
    }

    // Convergence: first estimated sample from which the thresholds hold for
    // CONVERGED_HOLD_S.
    let mut convergence_time = None;
    'outer: for k in 0..n {
        if input.estimates[k].is_none() {
            continue;
        }
        if att_err[k] >= CONVERGED_ATT_DEG || pos_err[k] >= CONVERGED_POS_M {
            continue;
        }
        let t_end = input.times[k] + CONVERGED_HOLD_S;
        for j in k..n {
            if input.times[j] > t_end {
                break;
            }
            if att_err[j] >= CONVERGED_ATT_DEG || pos_err[j] >= CONVERGED_POS_M {
                continue 'outer;
            }
        }
        convergence_time = Some(input.times[k]);
        break;
    }

    // Post-convergence window: from convergence up to the first dropout.
    let window_end = input
        .invalid
        .iter()
        .position(|occluded| *occluded)
        .map(|k| input.times[k])
        .unwrap_or(f64::INFINITY);

    let rms = |values: &dyn Fn(usize) -> Option<f64>| -> Option<f64> {
        let start = convergence_time?;
        let mut sum = 0.0;
        let mut count = 0usize;
        for k in 0..n {
            if input.times[k] < start || input.times[k] >= window_end {
                continue;
            }
            if let Some(v) = values(k) {
                sum += v * v;
                count += 1;
            }
        }
        (count > 0).then(|| (sum / count as f64).sqrt())
    };

    let rms_att = rms(&|k| att_err[k].is_finite().then_some(att_err[k]));
    let rms_body_att = rms(&|k| body_att_err[k].is_finite().then_some(body_att_err[k]));
    let rms_pos = rms(&|k| pos_err[k].is_finite().then_some(pos_err[k]));
    let rms_rate = rms(&|k| {
        input.estimates[k]
            .as_ref()
            .map(|e| (input.truth[k].omega - e.omega).norm())
    });
    let rms_ratios = rms(&|k| {
        input.estimates[k]
            .as_ref()
            .map(|e| (true_ratios - e.ratios).norm())
    });

    let last = input.estimates.iter().rev().flatten().next();
    let ratios_final = last.map(|e| [e.ratios[0], e.ratios[1], e.ratios[2]]);
    let por_final = last.map(|e| [e.por[0], e.por[1], e.por[2]]);

    let mut nees_times = Vec::new();
    let mut nees = Vec::new();
    for k in 0..n {
        if let Some(est) = &input.estimates[k] {
            nees_times.push(input.times[k]);
            nees.push(compute_nees(
                &input.truth[k],
                true_ratios,
                input.geometry,
                est,
            ));
        }
    }

    let mut nis_times = Vec::new();
    let mut nis = Vec::new();
    for k in 0..n {
        if let Some(v) = input.nis[k] {
            nis_times.push(input.times[k]);
            nis.push(v);
        }
    }

    let mut occ_t = Vec::new();
    let mut occ_pos = Vec::new();
    let mut occ_att = Vec::new();
    for k in 0..n {
        if input.invalid[k] && input.estimates[k].is_some() {
            occ_t.push(input.times[k]);
            occ_pos.push(pos_err[k]);
            occ_att.push(att_err[k]);
        }
    }

    Metrics {
        convergence_time_s: convergence_time,
        post_convergence_rms_attitude_deg: rms_att,
        post_convergence_rms_body_attitude_deg: rms_body_att,
        post_convergence_rms_por_position_m: rms_pos,
        post_convergence_rms_rate_rad_s: rms_rate,
        post_convergence_rms_ratios: rms_ratios,
        ratios_final,
        por_final_m: por_final,
        updates_applied: input.updates_applied,
        updates_rejected: input.updates_rejected,
        invalid_measurements: input.invalid.iter().filter(|x| **x).count(),
        faulted: input.faulted,
        nees_times_s: nees_times,
        nees,
        nis_times_s: nis_times,
        nis,
        occlusion_times_s: occ_t,
        occlusion_position_error_m: occ_pos,
        occlusion_attitude_error_deg: occ_att,
    }
}
