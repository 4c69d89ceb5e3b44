//! `sos`: run DTN scenarios, compare routing schemes, generate contact
//! traces, query the foremost-journey oracle and serve the key registry.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sos_core::analytics::{self, compute_metrics, Report, ReportFormat, RunMeta};
use sos_core::netsim::{
    foremost_oracle, generate_waypoint_trace, load_trace, run_with_contacts, write_trace, EventLog, Scenario,
    ScenarioError, SimError, WaypointParams,
};
use sos_core::registry::serve_until_signal;
use sos_core::Scheme;
use tracing_subscriber::EnvFilter;

#[derive(Debug, thiserror::Error)]
enum CliError {
    /// Bad flags, scenario or parameters: exit 2.
    #[error("{0}")]
    Config(String),
    /// Anything that fails after the inputs were accepted: exit 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Scenario(e) => e.into(),
            SimError::Runtime(msg) => CliError::Runtime(msg),
        }
    }
}

fn io_error(path: &Path) -> impl Fn(io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

#[derive(Parser)]
#[command(name = "sos", version, about = "Delay-tolerant social network simulator")]
#[command(after_help = "Set SOS_LOG=off|info|debug to control diagnostics on stderr.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its metrics report.
    Run(RunArgs),
    /// Run one scenario under several schemes and write one row per scheme.
    Compare(CompareArgs),
    /// Generate a random-waypoint contact trace as CSV.
    GenTrace(GenTraceArgs),
    /// Print the earliest possible delivery time between two nodes.
    Oracle(OracleArgs),
    /// Key registry service.
    Registry {
        #[command(subcommand)]
        command: RegistryCommand,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => ReportFormat::Json,
            Format::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Routing scheme, replacing the scenario's: direct | first_contact | epidemic | snw:L=8 |
    /// prophet:p_init=0.75,beta=0.25,gamma=0.98,aging=1
    #[arg(long)]
    scheme: Option<Scheme>,
    /// Seed, replacing the scenario's.
    #[arg(long)]
    seed: Option<u64>,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format; inferred from the --out extension when omitted, else json.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Also write the full event log as NDJSON.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Skip crypto timing records, making report and log byte-reproducible.
    #[arg(long)]
    no_crypto_timings: bool,
}

#[derive(Args)]
struct CompareArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Comma-separated scheme list; rows keep this order.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    schemes: Vec<String>,
    /// Seed, replacing the scenario's.
    #[arg(long)]
    seed: Option<u64>,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format; inferred from the --out extension when omitted, else csv.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Skip crypto timing records, making the output byte-reproducible.
    #[arg(long)]
    no_crypto_timings: bool,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct GenTraceArgs {
    /// Number of nodes, named n0, n1, ...
    #[arg(long, default_value_t = 10)]
    nodes: usize,
    /// Mobility seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trace path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Area width in meters.
    #[arg(long, default_value_t = 1000.0)]
    width: f64,
    /// Area height in meters.
    #[arg(long, default_value_t = 1000.0)]
    height: f64,
    /// Minimum speed in m/s.
    #[arg(long, default_value_t = 0.5)]
    speed_min: f64,
    /// Maximum speed in m/s.
    #[arg(long, default_value_t = 1.5)]
    speed_max: f64,
    /// Minimum pause at a waypoint in seconds.
    #[arg(long, default_value_t = 0.0)]
    pause_min: f64,
    /// Maximum pause at a waypoint in seconds.
    #[arg(long, default_value_t = 120.0)]
    pause_max: f64,
    /// Radio range in meters.
    #[arg(long, default_value_t = 10.0)]
    range: f64,
    /// Sampling step in seconds.
    #[arg(long, default_value_t = 1.0)]
    dt: f64,
    /// Trace length in seconds.
    #[arg(long, default_value_t = 3600.0)]
    horizon: f64,
    /// Link bandwidth in bytes per second.
    #[arg(long, default_value_t = sos_core::netsim::DEFAULT_WAYPOINT_BANDWIDTH)]
    bandwidth: f64,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct OracleArgs {
    /// Contact trace (CSV).
    #[arg(long)]
    trace: PathBuf,
    /// Source node id.
    #[arg(long)]
    src: String,
    /// Destination node id.
    #[arg(long)]
    dst: String,
    /// Departure time in seconds.
    #[arg(long, default_value_t = 0.0)]
    t0: f64,
}

#[derive(Subcommand)]
enum RegistryCommand {
    /// Serve the registry over HTTP until interrupted.
    Serve {
        /// Listen address.
        #[arg(long, default_value = "127.0.0.1:7000")]
        bind: String,
        /// Append-only record log.
        #[arg(long, default_value = "registry.log")]
        store: PathBuf,
    },
}

fn infer_format(explicit: Option<Format>, out: Option<&Path>, fallback: Format) -> Format {
    explicit.unwrap_or_else(|| match out.and_then(|p| p.extension()).and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
        Some(ext) if ext.eq_ignore_ascii_case("json") => Format::Json,
        _ => fallback,
    })
}

fn load_scenario(path: &Path, seed: Option<u64>, no_timings: bool) -> Result<Scenario, CliError> {
    let mut scenario = Scenario::load(path)?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    if no_timings {
        scenario.record_crypto_timings = false;
    }
    Ok(scenario)
}

fn simulate(scenario: &Scenario) -> Result<(Report, EventLog), CliError> {
    scenario.validate()?;
    let contacts = scenario.contacts()?;
    tracing::info!(scheme = %scenario.scheme, seed = scenario.seed, contacts = contacts.len(), "running");
    let log = run_with_contacts(scenario, &contacts)?;
    let metrics = compute_metrics(&log).map_err(|e| CliError::Runtime(e.to_string()))?;
    let meta = RunMeta {
        scheme: scenario.scheme.to_string(),
        seed: scenario.seed,
        scenario_digest: scenario.digest(&contacts),
    };
    Ok((Report::new(meta, metrics), log))
}

fn emit(reports: &[Report], format: Format, out: Option<&Path>) -> Result<(), CliError> {
    let bytes = analytics::render_reports(reports, format.into());
    match out {
        Some(path) => std::fs::write(path, bytes).map_err(io_error(path)),
        None => io::stdout()
            .lock()
            .write_all(&bytes)
            .map_err(|e| CliError::Runtime(format!("stdout: {e}"))),
    }
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let mut scenario = load_scenario(&args.scenario, args.seed, args.no_crypto_timings)?;
    if let Some(scheme) = args.scheme {
        scenario.scheme = scheme;
    }
    let (report, log) = simulate(&scenario)?;
    let format = infer_format(args.format, args.out.as_deref(), Format::Json);
    emit(std::slice::from_ref(&report), format, args.out.as_deref())?;
    if let Some(path) = &args.log {
        let file = File::create(path).map_err(io_error(path))?;
        let mut w = BufWriter::new(file);
        log.write_ndjson(&mut w).map_err(io_error(path))?;
        w.flush().map_err(io_error(path))?;
    }
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<(), CliError> {
    let schemes: Vec<Scheme> = args
        .schemes
        .iter()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<Scheme>().map_err(|e| CliError::Config(e.to_string())))
        .collect::<Result<_, _>>()?;
    if schemes.is_empty() {
        return Err(CliError::Config("--schemes needs at least one scheme".into()));
    }
    let base = load_scenario(&args.scenario, args.seed, args.no_crypto_timings)?;
    base.validate()?;

    let results: Vec<Result<Report, CliError>> = std::thread::scope(|s| {
        let handles: Vec<_> = schemes
            .iter()
            .map(|scheme| {
                let mut scenario = base.clone();
                scenario.scheme = *scheme;
                s.spawn(move || simulate(&scenario).map(|(report, _)| report))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(CliError::Runtime("run panicked".into())))
            })
            .collect()
    });
    let reports = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let format = infer_format(args.format, args.out.as_deref(), Format::Csv);
    emit(&reports, format, args.out.as_deref())
}

fn cmd_gen_trace(args: GenTraceArgs) -> Result<(), CliError> {
    let params = WaypointParams {
        width_m: args.width,
        height_m: args.height,
        nodes: args.nodes,
        speed_min: args.speed_min,
        speed_max: args.speed_max,
        pause_min: args.pause_min,
        pause_max: args.pause_max,
        range_m: args.range,
        dt_s: args.dt,
        horizon_s: args.horizon,
        bandwidth_bps: args.bandwidth,
        ..WaypointParams::default()
    };
    let contacts = generate_waypoint_trace(&params, args.seed).map_err(|e| CliError::Config(e.to_string()))?;
    tracing::info!(contacts = contacts.len(), "trace generated");
    match &args.out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path).map_err(io_error(path))?);
            write_trace(&mut w, &contacts).map_err(io_error(path))?;
            w.flush().map_err(io_error(path))
        }
        None => write_trace(io::stdout().lock(), &contacts).map_err(|e| CliError::Runtime(format!("stdout: {e}"))),
    }
}

fn cmd_oracle(args: OracleArgs) -> Result<(), CliError> {
    if !args.t0.is_finite() {
        return Err(CliError::Config("--t0 must be finite".into()));
    }
    let contacts = load_trace(&args.trace).map_err(|e| CliError::Config(e.to_string()))?;
    match foremost_oracle(&contacts, &args.src, &args.dst, args.t0) {
        Some(t) => println!("{t}"),
        None => println!("unreachable"),
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
        Command::GenTrace(args) => cmd_gen_trace(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Registry {
            command: RegistryCommand::Serve { bind, store },
        } => serve_until_signal(&bind, &store).map_err(|e| CliError::Runtime(e.to_string())),
    }
}

fn main() -> ExitCode {
    let filter = EnvFilter::try_from_env("SOS_LOG").unwrap_or_else(|_| EnvFilter::new("off"));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(io::stderr)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            // Keep usage errors to one line.
            let rendered = e.to_string();
            eprintln!("{}", rendered.lines().next().unwrap_or("error: invalid arguments"));
            return ExitCode::from(2);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
