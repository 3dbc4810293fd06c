//! Command-line harness: scenario simulation, measurement-log replay and
//! numerical self-validation.
//!
//! Exit codes: 0 success, 1 input error, 2 filter divergence, 3 validation
//! failure.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use relnav::metrics::{self, Metrics};
use relnav::sim::{self, Scenario};
use relnav::validate::{run_checks, Perturbation};

#[derive(Parser)]
#[command(
    name = "relnav",
    about = "Relative-navigation estimator for the capture of a tumbling target satellite",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario: propagate truth, synthesize measurements, run the
    /// filter and write truth/estimate/measurement CSVs plus metrics.
    Simulate {
        /// Scenario config (TOML); defaults to the bundled occluded-capture
        /// scenario.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Fan out N independent runs with consecutive seeds into
        /// out/run_000, out/run_001, ...
        #[arg(long)]
        batch: Option<usize>,
    },
    /// Drive the filter from a recorded measurement log.
    Replay {
        /// Measurement log in the measurements.csv schema.
        #[arg(long)]
        log: PathBuf,
        /// Scenario config describing the filter setup.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Optional truth series; enables truth-relative metrics.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Run the built-in oracle checks and print a pass/fail table.
    Validate {
        /// Self-test hook: bias the sensitivity assembly so the check must
        /// fail.
        #[arg(long, hide = true)]
        perturb_h: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Simulate { config, out, seed, batch } => {
            let mut scenario = config::load_scenario(config.as_deref())?;
            if let Some(seed) = seed {
                scenario.seed = seed;
            }
            match batch {
                None => cmd_simulate(&scenario, &out),
                Some(runs) => cmd_simulate_batch(&scenario, &out, runs),
            }
        }
        Command::Replay { log, config, out, truth } => {
            let scenario = config::load_scenario(config.as_deref())?;
            cmd_replay(&log, &scenario, &out, truth.as_deref())
        }
        Command::Validate { perturb_h } => {
            let perturb = if perturb_h {
                Perturbation::SensitivityBias
            } else {
                Perturbation::None
            };
            Ok(cmd_validate(perturb))
        }
    }
}

fn cmd_simulate(scenario: &Scenario, out: &Path) -> anyhow::Result<ExitCode> {
    std::fs::create_dir_all(out)
        .with_context(|| format!("cannot create output directory {}", out.display()))?;
    let result = sim::run_scenario(scenario).map_err(|e| anyhow::anyhow!("{e}"))?;

    output::write_truth_csv(&out.join("truth.csv"), &result.truth)?;
    output::write_measurements_csv(&out.join("measurements.csv"), &result.measurements)?;
    let series = result
        .times
        .iter()
        .zip(&result.estimates)
        .filter_map(|(t, e)| e.as_ref().map(|e| (*t, e)));
    output::write_estimate_csv(&out.join("estimate.csv"), series)?;
    output::write_metrics_json(&out.join("metrics.json"), &result.metrics)?;

    if result.faulted {
        eprintln!("filter divergence recorded; outputs written to {}", out.display());
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_simulate_batch(base: &Scenario, out: &Path, runs: usize) -> anyhow::Result<ExitCode> {
    std::fs::create_dir_all(out)
        .with_context(|| format!("cannot create output directory {}", out.display()))?;
    let scenarios = sim::seed_batch(base, runs);
    let results = sim::run_batch(&scenarios);

    let mut any_fault = false;
    let mut summary = Vec::new();
    for (i, (scenario, result)) in scenarios.iter().zip(results).enumerate() {
        let result = result.map_err(|e| anyhow::anyhow!("run {i}: {e}"))?;
        let dir = out.join(format!("run_{i:03}"));
        std::fs::create_dir_all(&dir)?;
        output::write_truth_csv(&dir.join("truth.csv"), &result.truth)?;
        output::write_measurements_csv(&dir.join("measurements.csv"), &result.measurements)?;
        let series = result
            .times
            .iter()
            .zip(&result.estimates)
            .filter_map(|(t, e)| e.as_ref().map(|e| (*t, e)));
        output::write_estimate_csv(&dir.join("estimate.csv"), series)?;
        output::write_metrics_json(&dir.join("metrics.json"), &result.metrics)?;
        any_fault |= result.faulted;
        summary.push(serde_json::json!({
            "run": i,
            "seed": scenario.seed,
            "convergence_time_s": result.metrics.convergence_time_s,
            "faulted": result.faulted,
        }));
    }
    std::fs::write(
        out.join("batch.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(if any_fault { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn cmd_replay(
    log: &Path,
    scenario: &Scenario,
    out: &Path,
    truth: Option<&Path>,
) -> anyhow::Result<ExitCode> {
    let measurements = output::read_measurement_log(log)?;
    std::fs::create_dir_all(out)
        .with_context(|| format!("cannot create output directory {}", out.display()))?;

    if measurements.is_empty() {
        output::write_estimate_csv(&out.join("estimate.csv"), std::iter::empty())?;
        output::write_metrics_json(
            &out.join("metrics.json"),
            &Metrics::without_truth(0, 0, 0, false),
        )?;
        return Ok(ExitCode::SUCCESS);
    }

    let replay = sim::replay_measurements(scenario, &measurements)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    output::write_estimate_csv(
        &out.join("estimate.csv"),
        replay.times.iter().copied().zip(&replay.estimates),
    )?;

    let invalid_count = measurements.iter().filter(|m| !m.valid).count();
    let metrics = match truth {
        None => Metrics::without_truth(
            replay.updates_applied,
            replay.updates_rejected,
            invalid_count,
            replay.faulted,
        ),
        Some(truth_path) => {
            let truth_series = output::read_truth_csv(truth_path)?;
            replay_metrics(scenario, &measurements, &replay, &truth_series)?
        }
    };
    output::write_metrics_json(&out.join("metrics.json"), &metrics)?;

    if replay.faulted {
        eprintln!("filter divergence recorded; outputs written to {}", out.display());
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

/// Truth-relative metrics for a replay, aligning the truth series to the
/// replayed timestamps.
fn replay_metrics(
    scenario: &Scenario,
    measurements: &[relnav::ekf::PoseMeasurement],
    replay: &sim::ReplayResult,
    truth_series: &[relnav::dynamics::TruthState],
) -> anyhow::Result<Metrics> {
    let mut truth = Vec::with_capacity(replay.times.len());
    for t in &replay.times {
        let Some(sample) = truth_series.iter().find(|s| (s.t - t).abs() < 1e-9) else {
            bail!("truth series has no sample at t = {t}");
        };
        truth.push(*sample);
    }
    let estimates: Vec<Option<relnav::ekf::FilterState>> =
        replay.estimates.iter().map(|e| Some(*e)).collect();
    let invalid: Vec<bool> = measurements
        .iter()
        .filter(|m| replay.times.iter().any(|t| (m.t - t).abs() < 1e-9))
        .map(|m| !m.valid)
        .collect();
    let nis = vec![None; replay.times.len()];
    Ok(metrics::summarize(metrics::MetricsInput {
        times: &replay.times,
        truth: &truth,
        estimates: &estimates,
        invalid: &invalid,
        nis: &nis,
        geometry: &scenario.geometry,
        inertia: scenario.inertia,
        updates_applied: replay.updates_applied,
        updates_rejected: replay.updates_rejected,
        faulted: replay.faulted,
    }))
}

fn cmd_validate(perturb: Perturbation) -> ExitCode {
    let checks = run_checks(perturb);
    println!(
        "{:<44} {:>12} {:>11} {:>7}",
        "check", "max error", "tolerance", "result"
    );
    let mut all_pass = true;
    for check in &checks {
        let pass = check.passed();
        all_pass &= pass;
        println!(
            "{:<44} {:>12.3e} {:>11.1e} {:>7}",
            check.name,
            check.max_error,
            check.tolerance,
            if pass { "PASS" } else { "FAIL" }
        );
    }
    if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    }
}
