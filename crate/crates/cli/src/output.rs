//! CSV and JSON writers plus the measurement-log reader.
//!
//! All floating-point values are serialized with 17 significant digits so a
//! written file round-trips to the exact same f64 bits. CSV files are
//! comma-separated with a header row, '.' decimal separator, UTF-8.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use nalgebra::Vector3;

use relnav::attitude::Quaternion;
use relnav::dynamics::TruthState;
use relnav::ekf::{FilterState, PoseMeasurement};
use relnav::layout;
use relnav::metrics::Metrics;

/// 17 significant digits: round-trip exact for f64.
fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn push_row(out: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{}", fmt(*v));
    }
    out.push('\n');
}

pub fn write_truth_csv(path: &Path, truth: &[TruthState]) -> anyhow::Result<()> {
    let mut out = String::from(
        "t_s,q_v1,q_v2,q_v3,q_s,omega_x,omega_y,omega_z,ro_x,ro_y,ro_z,vo_x,vo_y,vo_z\n",
    );
    for s in truth {
        push_row(
            &mut out,
            &[
                s.t, s.q.v[0], s.q.v[1], s.q.v[2], s.q.s, s.omega[0], s.omega[1], s.omega[2],
                s.pos[0], s.pos[1], s.pos[2], s.vel[0], s.vel[1], s.vel[2],
            ],
        );
    }
    fs::write(path, out).with_context(|| format!("cannot write {}", path.display()))
}

pub fn estimate_header() -> String {
    let mut header = String::from(
        "t_s,q_v1,q_v2,q_v3,q_s,omega_x,omega_y,omega_z,p_x,p_y,p_z,\
         ro_x,ro_y,ro_z,vo_x,vo_y,vo_z,rhot_x,rhot_y,rhot_z,\
         eta_v1,eta_v2,eta_v3,eta_s,trace_p",
    );
    let blocks = ["dqv", "omega", "p", "ro", "vo", "rhot", "detav"];
    for block in blocks {
        for axis in 1..=3 {
            let _ = write!(header, ",std_{block}_{axis}");
        }
    }
    header.push('\n');
    header
}

pub fn estimate_row(t: f64, s: &FilterState) -> Vec<f64> {
    let mut row = vec![
        t, s.q.v[0], s.q.v[1], s.q.v[2], s.q.s, s.omega[0], s.omega[1], s.omega[2],
        s.ratios[0], s.ratios[1], s.ratios[2], s.pos[0], s.pos[1], s.pos[2], s.vel[0],
        s.vel[1], s.vel[2], s.por[0], s.por[1], s.por[2], s.eta.v[0], s.eta.v[1], s.eta.v[2],
        s.eta.s, s.cov.trace(),
    ];
    for i in 0..layout::DIM {
        row.push(s.cov[(i, i)].max(0.0).sqrt());
    }
    row
}

pub fn write_estimate_csv<'a, I>(path: &Path, series: I) -> anyhow::Result<()>
where
    I: IntoIterator<Item = (f64, &'a FilterState)>,
{
    let mut out = estimate_header();
    for (t, s) in series {
        push_row(&mut out, &estimate_row(t, s));
    }
    fs::write(path, out).with_context(|| format!("cannot write {}", path.display()))
}

pub fn write_measurements_csv(path: &Path, meas: &[PoseMeasurement]) -> anyhow::Result<()> {
    let mut out = String::from("t_s,rc_x,rc_y,rc_z,mu_v1,mu_v2,mu_v3,mu_s,valid\n");
    for m in meas {
        let mut row = String::new();
        for v in [m.t, m.pos[0], m.pos[1], m.pos[2], m.quat.v[0], m.quat.v[1], m.quat.v[2], m.quat.s] {
            let _ = write!(row, "{},", fmt(v));
        }
        let _ = writeln!(row, "{}", if m.valid { 1 } else { 0 });
        out.push_str(&row);
    }
    fs::write(path, out).with_context(|| format!("cannot write {}", path.display()))
}

pub fn write_metrics_json(path: &Path, metrics: &Metrics) -> anyhow::Result<()> {
    let json = serde_json::to_string_pretty(metrics).context("serialize metrics")?;
    fs::write(path, json).with_context(|| format!("cannot write {}", path.display()))
}

/// Parses a measurement log in the `measurements.csv` schema. Timestamps must
/// be strictly increasing and valid rows must carry unit-norm quaternions;
/// violations are reported with their row number.
pub fn read_measurement_log(path: &Path) -> anyhow::Result<Vec<PoseMeasurement>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read log {}", path.display()))?;
    let mut out = Vec::new();
    let mut last_t = f64::NEG_INFINITY;
    for (index, line) in text.lines().enumerate() {
        if index == 0 {
            if !line.starts_with("t_s,") {
                bail!("row 1: missing measurement header");
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let row = index + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            bail!("row {row}: expected 9 columns, found {}", fields.len());
        }
        let mut values = [0.0f64; 8];
        for (i, field) in fields[..8].iter().enumerate() {
            values[i] = field
                .trim()
                .parse()
                .with_context(|| format!("row {row}: bad number {field:?}"))?;
        }
        let valid = match fields[8].trim() {
            "0" => false,
            "1" => true,
            other => bail!("row {row}: valid flag must be 0 or 1, found {other:?}"),
        };
        if values[0] <= last_t {
            bail!(
                "row {row}: timestamp {} is not strictly increasing (previous {})",
                values[0],
                last_t
            );
        }
        last_t = values[0];
        let quat = Quaternion::new(Vector3::new(values[4], values[5], values[6]), values[7]);
        if valid && (quat.norm() - 1.0).abs() > 1e-6 {
            bail!("row {row}: quaternion is not unit norm");
        }
        out.push(PoseMeasurement {
            t: values[0],
            pos: Vector3::new(values[1], values[2], values[3]),
            quat,
            valid,
        });
    }
    Ok(out)
}

/// Parses a truth series in the `truth.csv` schema.
pub fn read_truth_csv(path: &Path) -> anyhow::Result<Vec<TruthState>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read truth {}", path.display()))?;
    let mut out = Vec::new();
    for (index, line) in text.lines().enumerate() {
        if index == 0 || line.trim().is_empty() {
            continue;
        }
        let row = index + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 14 {
            bail!("row {row}: expected 14 columns, found {}", fields.len());
        }
        let mut v = [0.0f64; 14];
        for (i, field) in fields.iter().enumerate() {
            v[i] = field
                .trim()
                .parse()
                .with_context(|| format!("row {row}: bad number {field:?}"))?;
        }
        out.push(TruthState {
            t: v[0],
            q: Quaternion::new(Vector3::new(v[1], v[2], v[3]), v[4]),
            omega: Vector3::new(v[5], v[6], v[7]),
            pos: Vector3::new(v[8], v[9], v[10]),
            vel: Vector3::new(v[11], v[12], v[13]),
        });
    }
    Ok(out)
}
