//! Command-line surface: runs experiments, paired comparisons, model
//! generation and oracle checks, emitting CSV.
//!
//! Exit codes: 0 success, 1 validation/check failure, 2 I/O failure, 3 bad
//! flags, 4 oracle-domain violation. Diagnostics go to standard error only.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::engine::{self, Event, PmWindow, SimParams, SimulationTrace};
use crate::model::{AgentId, AgentKind};
use crate::oracle::{self, OracleError};
use crate::scenario::{self, GenParams, ScenarioError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_FLAGS: i32 = 3;
pub const EXIT_ORACLE_DOMAIN: i32 = 4;

/// Replication concurrency cap; 0 means sequential.
pub const THREADS_ENV: &str = "RENASS_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "renass",
    version,
    about = "Availability simulator for reconfigurable networked software systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a seeded simulation and write the availability series as CSV.
    Run(RunArgs),
    /// Paired-seed comparison of reconfiguration on vs off.
    Compare(CompareArgs),
    /// Generate a random model file.
    Generate(GenerateArgs),
    /// Validate the Monte Carlo engine against the exact oracle.
    OracleCheck(OracleCheckArgs),
}

#[derive(Debug, Args)]
struct SimFlags {
    /// Model file (JSON).
    #[arg(long)]
    model: PathBuf,
    /// Simulation length in ticks.
    #[arg(long)]
    ticks: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Replace every agent's reliability with this value.
    #[arg(long)]
    reliability: Option<f64>,
    /// Preventive-maintenance window, repeatable: kind:index:period:duration
    /// (e.g. com:3:100:5).
    #[arg(long = "pm", value_name = "WINDOW")]
    pm: Vec<String>,
    #[arg(long, default_value_t = 1)]
    replications: u64,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    sim: SimFlags,
    /// Disable reconfiguration.
    #[arg(long)]
    no_reconfig: bool,
    /// Output CSV path; an events sidecar is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    sim: SimFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 306)]
    components: u64,
    #[arg(long, default_value_t = 459)]
    connectors: u64,
    #[arg(long, default_value_t = 40)]
    services: u64,
    #[arg(long, default_value_t = 10)]
    businesses: u64,
    #[arg(long, default_value_t = 0.3)]
    critical_fraction: f64,
    #[arg(long, default_value_t = 2)]
    substitutes: u64,
    #[arg(long, default_value_t = 1)]
    support_min: u64,
    #[arg(long, default_value_t = 3)]
    support_max: u64,
    #[arg(long, default_value_t = 0.9999)]
    reliability: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct OracleCheckArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    ticks: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100_000)]
    replications: u64,
}

#[derive(Debug)]
struct CliError {
    code: i32,
    message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        let code = match &e {
            ScenarioError::Io(_) => EXIT_IO,
            ScenarioError::Infeasible(_) => EXIT_FLAGS,
            _ => EXIT_VALIDATION,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<engine::EngineError> for CliError {
    fn from(e: engine::EngineError) -> Self {
        let code = match &e {
            engine::EngineError::InvalidParams(_) => EXIT_FLAGS,
            _ => EXIT_VALIDATION,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new(EXIT_IO, e.to_string())
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        CliError::new(EXIT_ORACLE_DOMAIN, e.to_string())
    }
}

/// Parses args and dispatches; returns the process exit code.
pub fn main_entry<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    EXIT_OK
                }
                _ => {
                    eprint!("{e}");
                    EXIT_FLAGS
                }
            };
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Compare(args) => cmd_compare(&args),
        Command::Generate(args) => cmd_generate(&args),
        Command::OracleCheck(args) => cmd_oracle_check(&args),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(0)
}

fn parse_pm(spec: &str) -> Result<PmWindow, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    let err = || {
        CliError::new(
            EXIT_FLAGS,
            format!("bad --pm value '{spec}', expected kind:index:period:duration"),
        )
    };
    if parts.len() != 4 {
        return Err(err());
    }
    let kind = match parts[0] {
        "com" | "component" => AgentKind::Component,
        "con" | "connector" => AgentKind::Connector,
        _ => return Err(err()),
    };
    let index = parts[1].parse().map_err(|_| err())?;
    let period = parts[2].parse().map_err(|_| err())?;
    let duration = parts[3].parse().map_err(|_| err())?;
    Ok(PmWindow {
        agent: AgentId { kind, index },
        period,
        duration,
    })
}

fn sim_params(flags: &SimFlags, reconfig_enabled: bool) -> Result<SimParams, CliError> {
    let mut params = SimParams::new(flags.ticks, flags.seed);
    params.reconfig_enabled = reconfig_enabled;
    params.reliability_override = flags.reliability;
    params.replications = flags.replications;
    params.pm_schedule = flags
        .pm
        .iter()
        .map(|s| parse_pm(s))
        .collect::<Result<_, _>>()?;
    Ok(params)
}

/// Formats a probability-like value with 9 significant digits.
pub fn fmt9(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v:.8}");
    }
    let exp = v.abs().log10().floor() as i32;
    let decimals = (8 - exp).max(0) as usize;
    format!("{v:.decimals$}")
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents)
        .map_err(|e| CliError::new(EXIT_IO, format!("cannot write {}: {e}", path.display())))
}

fn events_sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("events.csv")
}

fn events_csv(traces: &[SimulationTrace]) -> String {
    let mut text = String::from("replication,tick,event,subject,detail\n");
    for (rep, trace) in traces.iter().enumerate() {
        for e in &trace.events {
            let (name, subject, detail) = match e {
                Event::Fail { agent, .. } => ("fail", *agent, String::new()),
                Event::Recover { agent, .. } => ("recover", *agent, String::new()),
                Event::SubstituteIn {
                    original, old, new, ..
                } => ("substitute_in", *original, format!("{old}->{new}")),
                Event::SubstituteOut { original, old, .. } => {
                    ("substitute_out", *original, format!("{old}->{original}"))
                }
                Event::PmStart { agent, .. } => ("pm_start", *agent, String::new()),
                Event::PmEnd { agent, .. } => ("pm_end", *agent, String::new()),
            };
            let _ = writeln!(text, "{rep},{},{name},{subject},{detail}", e.tick());
        }
    }
    text
}

fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let model = scenario::load(&args.sim.model)?;
    let params = sim_params(&args.sim, !args.no_reconfig)?;
    let traces = engine::run_replications(&model, &params, threads())?;

    let first = &traces[0];
    let n_bus = first.business_ids.len();
    let n_rep = traces.len() as f64;
    let mut text = String::from("tick,system_a0");
    for id in &first.business_ids {
        let _ = write!(text, ",business_{id}_a0");
    }
    text.push('\n');
    for row in 0..first.samples.len() {
        let tick = first.samples[row].tick;
        let system: f64 = traces.iter().map(|t| t.samples[row].system).sum::<f64>() / n_rep;
        let _ = write!(text, "{tick},{}", fmt9(system));
        for b in 0..n_bus {
            let v: f64 = traces
                .iter()
                .map(|t| t.samples[row].per_business[b])
                .sum::<f64>()
                / n_rep;
            let _ = write!(text, ",{}", fmt9(v));
        }
        text.push('\n');
    }
    write_file(&args.out, &text)?;
    write_file(&events_sidecar_path(&args.out), &events_csv(&traces))?;
    Ok(())
}

fn cmd_compare(args: &CompareArgs) -> Result<(), CliError> {
    let model = scenario::load(&args.sim.model)?;
    let on = sim_params(&args.sim, true)?;
    let mut off = on.clone();
    off.reconfig_enabled = false;

    let reconfig_traces = engine::run_replications(&model, &on, threads())?;
    let baseline_traces = engine::run_replications(&model, &off, threads())?;

    let n_rep = reconfig_traces.len();
    let ticks = reconfig_traces[0].samples.len();
    let mean_and_se = |traces: &[SimulationTrace], row: usize| {
        let values: Vec<f64> = traces.iter().map(|t| t.samples[row].system).collect();
        let mean = values.iter().sum::<f64>() / n_rep as f64;
        let se = if n_rep > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n_rep - 1) as f64;
            (var / n_rep as f64).sqrt()
        } else {
            0.0
        };
        (mean, se)
    };

    let with_se = n_rep > 1;
    let mut text = String::from("tick,a0_reconfig,a0_baseline,gap");
    if with_se {
        text.push_str(",se_reconfig,se_baseline");
    }
    text.push('\n');
    let mut gaps = Vec::with_capacity(ticks);
    for row in 0..ticks {
        let tick = reconfig_traces[0].samples[row].tick;
        let (re, re_se) = mean_and_se(&reconfig_traces, row);
        let (base, base_se) = mean_and_se(&baseline_traces, row);
        let gap = re - base;
        gaps.push(gap);
        let _ = write!(text, "{tick},{},{},{}", fmt9(re), fmt9(base), fmt9(gap));
        if with_se {
            let _ = write!(text, ",{},{}", fmt9(re_se), fmt9(base_se));
        }
        text.push('\n');
    }
    write_file(&args.out, &text)?;

    let min_gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let half = gaps.len() / 2;
    let gap_trend = if half == 0 {
        0.0
    } else {
        gaps[half..].iter().sum::<f64>() / (gaps.len() - half) as f64
            - gaps[..half].iter().sum::<f64>() / half as f64
    };
    println!("min_gap {}", fmt9(min_gap));
    println!("gap_trend {}", fmt9(gap_trend));
    Ok(())
}

fn cmd_generate(args: &GenerateArgs) -> Result<(), CliError> {
    let params = GenParams {
        components: args.components,
        connectors: args.connectors,
        services: args.services,
        businesses: args.businesses,
        critical_fraction: args.critical_fraction,
        substitutes_per_critical_agent: args.substitutes,
        support_size_range: (args.support_min, args.support_max),
        reliability: args.reliability,
        seed: args.seed,
    };
    let model = scenario::generate(&params)?;
    scenario::save(&model, &args.out)?;
    Ok(())
}

fn cmd_oracle_check(args: &OracleCheckArgs) -> Result<(), CliError> {
    let model = scenario::load(&args.model)?;
    let oracle_value = oracle::exact_expected_availability(&model, args.ticks)?;

    let mut params = SimParams::new(args.ticks, args.seed);
    params.replications = args.replications;
    let traces = engine::run_replications(&model, &params, threads())?;
    let estimates: Vec<f64> = traces
        .iter()
        .map(|t| t.samples.last().expect("non-empty trace").system)
        .collect();
    let n = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / n;
    let var = if estimates.len() > 1 {
        estimates.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let se = (var / n).sqrt();
    let z = if se > 0.0 {
        (mean - oracle_value) / se
    } else if mean == oracle_value {
        0.0
    } else {
        f64::INFINITY
    };

    println!("oracle {}", fmt9(oracle_value));
    println!("estimate {}", fmt9(mean));
    println!("replications {}", estimates.len());
    println!("z {}", fmt9(z));
    if z.abs() <= 3.0 {
        Ok(())
    } else {
        Err(CliError::new(
            EXIT_VALIDATION,
            format!(
                "Monte Carlo estimate {mean} disagrees with oracle {oracle_value} (|z| = {})",
                z.abs()
            ),
        ))
    }
}
