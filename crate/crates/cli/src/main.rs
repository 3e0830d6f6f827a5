//! `mfc`: run model-free path-tracking scenarios, split them across
//! processes, generate tracks and validate configurations.
//!
//! Exit codes: 0 success, 1 validation error, 2 runtime abort, 3 protocol
//! violation.

use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use mfc_core::cosim::{controller_drive, plant_serve, ServeOptions, DEFAULT_ENDPOINT};
use mfc_core::scenario::{Scenario, ScenarioError, TrackSource};
use mfc_core::sim::{run_closed_loop, RunOptions, Trace};
use mfc_core::track::{self, dump_track_csv, RefPath};
use mfc_core::tracking::TrackingMetrics;

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

#[derive(Parser)]
#[command(
    name = "mfc",
    version,
    about = "Model-free control path-tracking simulator and lockstep co-simulation harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario in process; writes trace.csv and metrics.json.
    Run(ScenarioArgs),
    /// Serve the plant side of a split session, then write the outputs.
    Serve(EndpointArgs),
    /// Drive the controller side of a split session.
    Drive(EndpointArgs),
    /// Generate the scenario's track and dump it as loadable CSV.
    GenTrack(ScenarioArgs),
    /// Validate a scenario file, listing every violated constraint.
    Validate(ScenarioArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory; overrides the scenario's `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed; overrides the scenario's `seed` (and its digest, so both
    /// split-session sides must receive the same override).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EndpointArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// host:port of the co-simulation link.
    #[arg(long, default_value = DEFAULT_ENDPOINT)]
    endpoint: String,
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run(args) => cmd_run(args),
        Command::Serve(args) => cmd_serve(args),
        Command::Drive(args) => cmd_drive(args),
        Command::GenTrack(args) => cmd_gen_track(args),
        Command::Validate(args) => cmd_validate(args),
    }
}

/// Loads, applies overrides and resolves the track.
fn prepare(args: &ScenarioArgs) -> Result<(Scenario, RefPath), (u8, String)> {
    let mut scenario =
        Scenario::load(&args.scenario).map_err(|e| (EXIT_VALIDATION, e.to_string()))?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    if let Some(out) = &args.out {
        scenario.out_dir = Some(out.clone());
    }
    let base = args
        .scenario
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let (path, _spec) = scenario
        .resolve_track(&base)
        .map_err(|e| (EXIT_VALIDATION, e.to_string()))?;
    Ok((scenario, path))
}

fn out_dir(scenario: &Scenario) -> PathBuf {
    scenario.out_dir.clone().unwrap_or_else(|| "out".into())
}

fn write_outputs(
    scenario: &Scenario,
    trace: &Trace,
    metrics: &TrackingMetrics,
) -> Result<(), (u8, String)> {
    let dir = out_dir(scenario);
    std::fs::create_dir_all(&dir).map_err(|e| {
        (
            EXIT_RUNTIME,
            format!("cannot create {}: {e}", dir.display()),
        )
    })?;
    let trace_path = dir.join("trace.csv");
    std::fs::write(&trace_path, trace.to_csv()).map_err(|e| {
        (
            EXIT_RUNTIME,
            format!("cannot write {}: {e}", trace_path.display()),
        )
    })?;
    let metrics_path = dir.join("metrics.json");
    std::fs::write(&metrics_path, metrics.to_flat_json()).map_err(|e| {
        (
            EXIT_RUNTIME,
            format!("cannot write {}: {e}", metrics_path.display()),
        )
    })?;
    println!(
        "wrote {} ({} rows) and {}",
        trace_path.display(),
        trace.rows.len(),
        metrics_path.display()
    );
    println!(
        "metrics: e_y_max = {:.4} m, e_v_max = {:.4} m/s ({:.3} km/h), e_psi_max = {:.4} deg",
        metrics.e_y_max,
        metrics.e_v_max,
        metrics.e_v_max * 3.6,
        metrics.e_psi_max.to_degrees()
    );
    Ok(())
}

fn bail(code: u8, msg: String) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn cmd_run(args: ScenarioArgs) -> ExitCode {
    let (scenario, path) = match prepare(&args) {
        Ok(v) => v,
        Err((code, msg)) => return bail(code, msg),
    };
    match run_closed_loop(&scenario, &path, RunOptions::default()) {
        Ok((trace, metrics)) => match write_outputs(&scenario, &trace, &metrics) {
            Ok(()) => ExitCode::SUCCESS,
            Err((code, msg)) => bail(code, msg),
        },
        Err(e) => bail(EXIT_RUNTIME, e.to_string()),
    }
}

fn cmd_serve(args: EndpointArgs) -> ExitCode {
    let (scenario, path) = match prepare(&args.scenario) {
        Ok(v) => v,
        Err((code, msg)) => return bail(code, msg),
    };
    let listener = match TcpListener::bind(&args.endpoint) {
        Ok(l) => l,
        Err(e) => return bail(EXIT_RUNTIME, format!("cannot bind {}: {e}", args.endpoint)),
    };
    match listener.local_addr() {
        Ok(addr) => println!("listening on {addr}"),
        Err(e) => return bail(EXIT_RUNTIME, format!("cannot read bound address: {e}")),
    }
    match plant_serve(&scenario, &path, listener, ServeOptions::default()) {
        Ok(outcome) => {
            println!(
                "session over ({}), {} frames sent, {} received, max round-trip {:?}",
                outcome.ended_by,
                outcome.stats.frames_sent,
                outcome.stats.frames_received,
                outcome.stats.max_round_trip
            );
            match write_outputs(&scenario, &outcome.trace, &outcome.metrics) {
                Ok(()) => ExitCode::SUCCESS,
                Err((code, msg)) => bail(code, msg),
            }
        }
        Err(e) => bail(e.exit_code() as u8, e.to_string()),
    }
}

fn cmd_drive(args: EndpointArgs) -> ExitCode {
    let (scenario, path) = match prepare(&args.scenario) {
        Ok(v) => v,
        Err((code, msg)) => return bail(code, msg),
    };
    match controller_drive(&scenario, &path, &args.endpoint, Duration::from_secs(5)) {
        Ok(outcome) => {
            println!(
                "drove {} control steps; session ended by server ({})",
                outcome.steps, outcome.ended_by
            );
            ExitCode::SUCCESS
        }
        Err(e) => bail(e.exit_code() as u8, e.to_string()),
    }
}

fn cmd_gen_track(args: ScenarioArgs) -> ExitCode {
    let scenario = match Scenario::load(&args.scenario) {
        Ok(mut s) => {
            if let Some(out) = &args.out {
                s.out_dir = Some(out.clone());
            }
            s
        }
        Err(e) => return bail(EXIT_VALIDATION, e.to_string()),
    };
    let spec = match &scenario.track {
        TrackSource::Preset { preset } => match track::preset(preset) {
            Some(spec) => spec,
            None => return bail(EXIT_VALIDATION, format!("unknown track preset {preset:?}")),
        },
        TrackSource::Inline(spec) => spec.clone(),
        TrackSource::File { file } => {
            return bail(
                EXIT_VALIDATION,
                format!(
                    "scenario track is already a file ({}); nothing to generate",
                    file.display()
                ),
            )
        }
    };
    let (path, warnings) = match spec.generate(track::DEFAULT_DS) {
        Ok(v) => v,
        Err(e) => return bail(EXIT_VALIDATION, e.to_string()),
    };
    for w in warnings {
        eprintln!("warning: {w}");
    }
    let dir = out_dir(&scenario);
    if let Err(e) = std::fs::create_dir_all(&dir) {
        return bail(
            EXIT_RUNTIME,
            format!("cannot create {}: {e}", dir.display()),
        );
    }
    let csv_path = dir.join("track.csv");
    if let Err(e) = std::fs::write(&csv_path, dump_track_csv(&path)) {
        return bail(
            EXIT_RUNTIME,
            format!("cannot write {}: {e}", csv_path.display()),
        );
    }
    println!(
        "wrote {} ({} points, {:.1} m)",
        csv_path.display(),
        path.points().len(),
        path.length()
    );
    ExitCode::SUCCESS
}

fn cmd_validate(args: ScenarioArgs) -> ExitCode {
    let scenario = match Scenario::load(&args.scenario) {
        Ok(s) => s,
        Err(ScenarioError::Invalid(errs)) => {
            for e in &errs {
                eprintln!("invalid: {e}");
            }
            eprintln!("{} constraint(s) violated", errs.len());
            return ExitCode::from(EXIT_VALIDATION);
        }
        Err(e) => return bail(EXIT_VALIDATION, e.to_string()),
    };
    // pre-flight the track too, so a missing file is caught here
    let base = args
        .scenario
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    if let Err(e) = scenario.resolve_track(&base) {
        return bail(EXIT_VALIDATION, e.to_string());
    }
    println!("scenario OK (digest {})", scenario.digest());
    ExitCode::SUCCESS
}
