//! Command-line front end: `simulate`, `backlog` and `sweep`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use satground::link::LinkParams;
use satground::sim::audit;
use satground::sim::backlog::{backlog_csv, backlog_experiment, latency_slope, BacklogParams};
use satground::sim::engine::{run, RunOutput, SimError};
use satground::sim::metrics::{self, records_csv, trace_text};
use satground::sim::scenario::Scenario;
use satground::sim::sweep::{ablation_sweep, parse_values, sweep_csv, Dimension, SweepError};
use satground::sim::workload::ByteSize;

#[derive(Parser)]
#[command(name = "satground", version, about = "Satellite-ground collaborative inference simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write summary, per-query CSV and protocol trace.
    Simulate(SimulateArgs),
    /// Transmit-everything baseline: latency against capture index.
    Backlog(BacklogArgs),
    /// Run a scenario once per value of one parameter.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file; the built-in canonical scenario when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BacklogArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2.0)]
    capture_interval: f64,
    /// Link rate, bits per second.
    #[arg(long, default_value_t = 30e6)]
    rate: f64,
    #[arg(long, default_value_t = 60.0)]
    period: f64,
    #[arg(long, default_value_t = 3.0)]
    contact: f64,
    #[arg(long, default_value_t = 7200.0)]
    horizon: f64,
    /// Image size in bytes, `N` or `LO..HI`.
    #[arg(long, default_value = "600000")]
    image_bytes: String,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long)]
    dimension: String,
    /// `a,b,c` or `start:stop:step`.
    #[arg(long)]
    values: String,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    User(String),
    Invariant(String),
}

impl From<SimError> for Failure {
    fn from(err: SimError) -> Self {
        match err {
            SimError::Invariant { .. } => Failure::Invariant(err.to_string()),
            other => Failure::User(other.to_string()),
        }
    }
}

impl From<SweepError> for Failure {
    fn from(err: SweepError) -> Self {
        match err {
            SweepError::Sim(e) => e.into(),
            other => Failure::User(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Backlog(a) => backlog(a),
        Command::Sweep(a) => sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            match &failure {
                Failure::User(msg) => eprintln!("error: {msg}"),
                Failure::Invariant(msg) => eprintln!("invariant violation: {msg}"),
            }
            ExitCode::from(failure.code())
        }
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::User(_) => 1,
            Failure::Invariant(_) => 2,
        }
    }
}

fn load_scenario(args: &ScenarioArgs) -> Result<Scenario, Failure> {
    let mut s = match &args.scenario {
        Some(path) => Scenario::load(path).map_err(|e| Failure::User(e.to_string()))?,
        None => Scenario::canonical(),
    };
    if let Some(seed) = args.seed {
        s.config.rng_seed = seed;
    }
    Ok(s)
}

/// Writes via a temporary file and rename so readers never see partial output.
fn write_file(path: &Path, content: &str) -> Result<(), Failure> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, content)
        .and_then(|()| std::fs::rename(&tmp, path))
        .map_err(|e| Failure::User(format!("cannot write {}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::User(format!("cannot create {}: {e}", dir.display())))
}

fn link_params(s: &Scenario) -> LinkParams {
    LinkParams {
        uplink_rate: s.config.uplink_rate,
        downlink_rate: s.config.downlink_rate,
        chunk_size: s.config.secondary_chunk_size,
        propagation_delay: s.timing.propagation_delay,
    }
}

fn write_run(dir: &Path, out: &RunOutput) -> Result<(), Failure> {
    create_dir(dir)?;
    write_file(&dir.join("summary.txt"), &out.summary.to_text())?;
    write_file(&dir.join("queries.csv"), &records_csv(&out.records))?;
    write_file(&dir.join("trace.log"), &trace_text(&out.trace))?;
    write_file(&dir.join("backlog.csv"), &metrics::backlog_csv(&out.summary.backlog))?;
    Ok(())
}

fn check(scenario: &Scenario, out: &RunOutput) -> Result<(), Failure> {
    let errors = audit::audit(out, &link_params(scenario));
    if errors.is_empty() {
        Ok(())
    } else {
        Err(Failure::Invariant(errors.join("; ")))
    }
}

fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let scenario = load_scenario(&args.scenario)?;
    let out = run(&scenario)?;
    check(&scenario, &out)?;
    write_run(&args.out, &out)?;
    println!("{}", out.summary.one_line());
    Ok(())
}

fn backlog(args: BacklogArgs) -> Result<(), Failure> {
    let image_bytes = ByteSize::parse(&args.image_bytes)
        .ok_or_else(|| Failure::User(format!("bad --image-bytes {:?}", args.image_bytes)))?;
    let params = BacklogParams {
        capture_interval: args.capture_interval,
        rate_bps: args.rate,
        period: args.period,
        contact: args.contact,
        horizon: args.horizon,
        image_bytes,
        seed: args.seed,
    };
    let points = backlog_experiment(&params).map_err(Failure::User)?;
    create_dir(&args.out)?;
    write_file(&args.out.join("backlog.csv"), &backlog_csv(&points))?;
    let mean = points.iter().map(|p| p.latency).sum::<f64>() / points.len().max(1) as f64;
    let max = points.iter().map(|p| p.latency).fold(0.0, f64::max);
    println!(
        "images={} drain_ratio={:.3} slope={:.6}s/index mean_latency={:.3}s max_latency={:.3}s",
        points.len(),
        params.drain_ratio(),
        latency_slope(&points),
        mean,
        max
    );
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<(), Failure> {
    let scenario = load_scenario(&args.scenario)?;
    let dimension: Dimension = args.dimension.parse()?;
    let values = parse_values(&args.values)?;
    let points = ablation_sweep(&scenario, dimension, &values)?;
    create_dir(&args.out)?;
    for p in &points {
        let s = dimension.apply(&scenario, p.value)?;
        check(&s, &p.output)?;
        let dir = args.out.join(format!("{}={}", dimension.name(), p.value));
        create_dir(&dir)?;
        write_file(&dir.join("summary.txt"), &p.output.summary.to_text())?;
        println!("{}={} {}", dimension.name(), p.value, p.output.summary.one_line());
    }
    write_file(&args.out.join("sweep.csv"), &sweep_csv(dimension, &points))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use satground::sim::scenario::ScenarioError;

    #[test]
    fn exit_codes() {
        let invariant = SimError::Invariant {
            time: 1.0,
            what: "archive over cap".into(),
        };
        assert_eq!(Failure::from(invariant).code(), 2);
        let user = SimError::Scenario(ScenarioError::UnknownKey("x".into()));
        assert_eq!(Failure::from(user).code(), 1);
        assert_eq!(Failure::from(SweepError::NoValues).code(), 1);
    }
}
