//! Scenario configuration: a flat TOML schema with explicit units in the key
//! names. Every key is optional and defaults to the bundled occluded-capture
//! scenario, so a config only has to state what it changes.

use anyhow::{bail, Context};
use nalgebra::Vector3;
use serde::Deserialize;

use relnav::attitude::Quaternion;
use relnav::discretize::ParameterWalk;
use relnav::dynamics::{NoiseIntensities, OrbitRate, TargetGeometry, TruthState};
use relnav::ekf::MeasurementNoise;
use relnav::sim::{InitMode, Scenario};

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub inertia_kgm2: Option<[f64; 3]>,
    pub por_offset_m: Option<[f64; 3]>,
    /// Principal-axis misalignment quaternion, vector part first.
    pub misalignment_quat: Option<[f64; 4]>,
    /// Initial target orientation quaternion, vector part first.
    pub initial_attitude_quat: Option<[f64; 4]>,
    pub initial_rate_rad_s: Option<[f64; 3]>,
    pub initial_position_m: Option<[f64; 3]>,
    pub initial_velocity_m_s: Option<[f64; 3]>,
    pub orbit_rate_rad_s: Option<f64>,
    pub meas_rate_hz: Option<f64>,
    pub meas_noise_pos_m: Option<f64>,
    pub meas_noise_quat: Option<f64>,
    pub filter_meas_noise_pos_m: Option<f64>,
    pub filter_meas_noise_quat: Option<f64>,
    pub process_noise_torque: Option<f64>,
    pub process_noise_force: Option<f64>,
    pub occlusions_s: Option<Vec<[f64; 2]>>,
    pub duration_s: Option<f64>,
    pub seed: Option<u64>,
    pub filter_start_s: Option<f64>,
    /// One of `perturbed`, `truth`, `prior_draw`.
    pub init_mode: Option<String>,
    pub init_attitude_err_rad: Option<f64>,
    pub init_rate_err_rad_s: Option<f64>,
    /// Initial marginal standard deviations per state block:
    /// attitude, rate, ratios, position, velocity, POR offset, misalignment.
    pub initial_std: Option<[f64; 7]>,
    pub param_walk_ratios: Option<f64>,
    pub param_walk_por_m: Option<f64>,
    pub param_walk_misalignment: Option<f64>,
    pub gate_enabled: Option<bool>,
    pub joseph_update: Option<bool>,
    pub update_iterations: Option<usize>,
    pub disturbance_hold_s: Option<f64>,
}

fn vec3(v: [f64; 3]) -> Vector3<f64> {
    Vector3::new(v[0], v[1], v[2])
}

fn quat(v: [f64; 4]) -> anyhow::Result<Quaternion> {
    let q = Quaternion::new(Vector3::new(v[0], v[1], v[2]), v[3]);
    if (q.norm() - 1.0).abs() > 1e-6 {
        bail!("quaternion {v:?} is not unit norm");
    }
    Ok(q.normalized())
}

impl ScenarioFile {
    pub fn parse(text: &str) -> anyhow::Result<ScenarioFile> {
        // toml's error display carries line/column positions.
        toml::from_str(text).map_err(|e| anyhow::anyhow!("{e}"))
    }

    pub fn into_scenario(self) -> anyhow::Result<Scenario> {
        let mut s = Scenario::default();
        if let Some(v) = self.inertia_kgm2 {
            s.inertia = vec3(v);
        }
        let mut geometry = TargetGeometry {
            por_offset: s.geometry.por_offset,
            eta: s.geometry.eta,
        };
        if let Some(v) = self.por_offset_m {
            geometry.por_offset = vec3(v);
        }
        if let Some(v) = self.misalignment_quat {
            geometry.eta = quat(v).context("misalignment_quat")?;
        }
        s.geometry = geometry;

        let mut initial = s.initial;
        if let Some(v) = self.initial_attitude_quat {
            initial.q = quat(v).context("initial_attitude_quat")?;
        }
        if let Some(v) = self.initial_rate_rad_s {
            initial.omega = vec3(v);
        }
        if let Some(v) = self.initial_position_m {
            initial.pos = vec3(v);
        }
        if let Some(v) = self.initial_velocity_m_s {
            initial.vel = vec3(v);
        }
        s.initial = TruthState { t: 0.0, ..initial };

        if let Some(v) = self.orbit_rate_rad_s {
            s.orbit = OrbitRate::new(v);
        }
        if let Some(v) = self.meas_rate_hz {
            s.meas_rate = v;
        }
        if let Some(v) = self.meas_noise_pos_m {
            s.meas_noise.sigma_pos = v;
        }
        if let Some(v) = self.meas_noise_quat {
            s.meas_noise.sigma_quat = v;
        }
        if self.filter_meas_noise_pos_m.is_some() || self.filter_meas_noise_quat.is_some() {
            let fallback = s.meas_noise;
            s.filter_meas_noise = Some(MeasurementNoise {
                sigma_pos: self.filter_meas_noise_pos_m.unwrap_or(fallback.sigma_pos),
                sigma_quat: self.filter_meas_noise_quat.unwrap_or(fallback.sigma_quat),
            });
        }
        if self.process_noise_torque.is_some() || self.process_noise_force.is_some() {
            s.intensities = NoiseIntensities {
                sigma_torque: self.process_noise_torque.unwrap_or(s.intensities.sigma_torque),
                sigma_force: self.process_noise_force.unwrap_or(s.intensities.sigma_force),
            };
        }
        if let Some(v) = self.occlusions_s {
            s.occlusions = v.into_iter().map(|w| (w[0], w[1])).collect();
        }
        if let Some(v) = self.duration_s {
            s.duration = v;
        }
        if let Some(v) = self.seed {
            s.seed = v;
        }
        if let Some(v) = self.filter_start_s {
            s.filter_start = v;
        }
        if let Some(mode) = self.init_mode {
            s.init_mode = match mode.as_str() {
                "perturbed" => InitMode::Perturbed,
                "truth" => InitMode::Truth,
                "prior_draw" => InitMode::PriorDraw,
                other => bail!("unknown init_mode {other:?} (perturbed | truth | prior_draw)"),
            };
        }
        if let Some(v) = self.init_attitude_err_rad {
            s.init_attitude_err = v;
        }
        if let Some(v) = self.init_rate_err_rad_s {
            s.init_rate_err = v;
        }
        if let Some(v) = self.initial_std {
            s.initial_std = v;
        }
        if self.param_walk_ratios.is_some()
            || self.param_walk_por_m.is_some()
            || self.param_walk_misalignment.is_some()
        {
            s.walk = ParameterWalk {
                sigma_ratios: self.param_walk_ratios.unwrap_or(s.walk.sigma_ratios),
                sigma_por: self.param_walk_por_m.unwrap_or(s.walk.sigma_por),
                sigma_eta: self.param_walk_misalignment.unwrap_or(s.walk.sigma_eta),
            };
        }
        if let Some(v) = self.gate_enabled {
            s.gate_enabled = v;
        }
        if let Some(v) = self.joseph_update {
            s.joseph_update = v;
        }
        if let Some(v) = self.update_iterations {
            s.update_iterations = v;
        }
        if let Some(v) = self.disturbance_hold_s {
            s.disturbance_hold = v;
        }
        Ok(s)
    }
}

/// Loads a scenario from an optional config path; no path means the bundled
/// default scenario.
pub fn load_scenario(path: Option<&std::path::Path>) -> anyhow::Result<Scenario> {
    let Some(path) = path else {
        return Ok(Scenario::default());
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let file = ScenarioFile::parse(&text)
        .with_context(|| format!("cannot parse config {}", path.display()))?;
    file.into_scenario()
}
