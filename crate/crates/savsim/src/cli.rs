//! Command-line front end.
//!
//! Exit codes: 0 success, 1 validation or oracle failure, 2 usage error,
//! 3 I/O error.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use savsim_core::engine::{Scenario, SimNetwork, LOG_CSV_HEADER, OCCUPANCY_CSV_HEADER};
use savsim_core::metrics::{aggregates_csv, records_csv, MetricsRecord};
use savsim_core::netgraph::StopDistanceTable;
use savsim_core::scenario_gen::{generate_network, SyntheticSpec};
use savsim_core::traffic::Behavior;

use crate::io::{self, IoError, LoadedScenario};
use crate::oracle;
use crate::overrides::{apply_overrides, Override};
use crate::runner::{self, RunnerOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

pub const REPLICATIONS_CSV: &str = "replications.csv";
pub const AGGREGATE_CSV: &str = "aggregate.csv";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_AGGREGATE_CSV: &str = "sweep_aggregate.csv";
pub const NETWORK_JSON: &str = "network.json";
pub const SCENARIO_JSON: &str = "scenario.json";
pub const EVENTS_DIR: &str = "events";
pub const OCCUPANCY_DIR: &str = "occupancy";

#[derive(Debug, Parser)]
#[command(
    name = "savsim",
    version,
    about = "Shared autonomous vehicle fleet simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Emit per-replication event logs and progress messages.
    #[arg(long, global = true)]
    pub verbose: bool,
    /// Maximum worker threads for replications.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a network file and print every violation found.
    Validate(NetworkArgs),
    /// Write a synthetic grid network and a matching scenario.
    Generate(GenerateArgs),
    /// Run all replications of one scenario.
    Run(RunArgs),
    /// Run a fleet-size by behavior grid.
    Sweep(SweepArgs),
    /// Compare the stop-distance table with the split-graph oracle.
    OracleCheck(NetworkArgs),
}

#[derive(Debug, Args)]
pub struct NetworkArgs {
    #[arg(long, required_unless_present = "scenario")]
    pub network: Option<PathBuf>,
    /// Use the network referenced by this scenario.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, env = "SAVSIM_OUT", default_value = "savsim-out")]
    pub out: PathBuf,
    /// Seeds stop placement and becomes the scenario's base seed.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// `synthetic.<field>=value` adjusts the generator; other keys edit the
    /// written scenario.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<Override>,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Replaces the network referenced by the scenario.
    #[arg(long)]
    pub network: Option<PathBuf>,
    #[arg(long, env = "SAVSIM_OUT", default_value = "savsim-out")]
    pub out: PathBuf,
    /// Replaces the scenario's base seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replications: Option<u32>,
    /// Dotted-path override of a scenario field, e.g. policy.capacity=4.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<Override>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: ScenarioArgs,
    /// Serve this request list in every replication instead of drawing demand.
    #[arg(long)]
    pub requests: Option<PathBuf>,
    /// Also write per-edge occupancy time series (`occupancy/`).
    #[arg(long)]
    pub occupancy: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: ScenarioArgs,
    #[arg(long, value_delimiter = ',', default_value = "2,4,6,8,10")]
    pub fleet_sizes: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "cautious,normal,aggressive", value_parser = parse_behavior)]
    pub profiles: Vec<Behavior>,
}

fn parse_behavior(s: &str) -> Result<Behavior, String> {
    s.parse().map_err(|e: savsim_core::Error| e.to_string())
}

/// A failed command and the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

impl Failure {
    fn invalid(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_INVALID,
            error: error.into(),
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        let code = match &e {
            IoError::Read { .. } | IoError::Write { .. } | IoError::Parse { .. } => EXIT_IO,
            IoError::Model { .. } | IoError::InvalidNetwork { .. } => EXIT_INVALID,
            IoError::Override(_) | IoError::OverrideType { .. } => EXIT_USAGE,
        };
        Self {
            code,
            error: e.into(),
        }
    }
}

impl From<savsim_core::Error> for Failure {
    fn from(e: savsim_core::Error) -> Self {
        Self::invalid(e)
    }
}

/// Parses `args` (including the program name), executes the command and
/// returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            f.code
        }
    }
}

pub fn execute(cli: &Cli) -> Result<i32, Failure> {
    match &cli.command {
        Command::Validate(args) => validate(args),
        Command::Generate(args) => generate(args),
        Command::Run(args) => run_scenario(cli, args),
        Command::Sweep(args) => sweep(cli, args),
        Command::OracleCheck(args) => oracle_check(args),
    }
}

fn network_path(args: &NetworkArgs) -> Result<PathBuf, Failure> {
    match (&args.network, &args.scenario) {
        (Some(p), _) => Ok(p.clone()),
        (None, Some(s)) => Ok(io::load_scenario(s, &[])?.network_path),
        (None, None) => Err(Failure {
            code: EXIT_USAGE,
            error: anyhow!("--network or --scenario is required"),
        }),
    }
}

fn validate(args: &NetworkArgs) -> Result<i32, Failure> {
    let path = network_path(args)?;
    let graph = io::read_network(&path)?;
    let report = graph.validate();
    if report.is_empty() {
        println!(
            "{}: valid ({} vertices, {} edges, {} stops)",
            path.display(),
            graph.vertices().len(),
            graph.edges().len(),
            graph.stops().len()
        );
        Ok(EXIT_OK)
    } else {
        println!(
            "{}: {} violation(s)",
            path.display(),
            report.violations.len()
        );
        print!("{report}");
        Ok(EXIT_INVALID)
    }
}

fn oracle_check(args: &NetworkArgs) -> Result<i32, Failure> {
    let path = network_path(args)?;
    let graph = io::load_network(&path)?;
    let table = StopDistanceTable::build(&graph)?;
    let report = oracle::check_table(&graph, &table);
    println!(
        "{}: {} stop pairs, {} table entries, max |difference| {:.3e} m",
        path.display(),
        report.pairs_checked,
        report.table_entries,
        report.max_abs_difference
    );
    for m in &report.mismatches {
        println!(
            "mismatch {} -> {}: table {:?}, oracle {}",
            m.from, m.to, m.table, m.oracle
        );
    }
    Ok(if report.passed() {
        EXIT_OK
    } else {
        EXIT_INVALID
    })
}

fn generate(args: &GenerateArgs) -> Result<i32, Failure> {
    let (spec_overrides, scenario_overrides): (Vec<Override>, Vec<Override>) = args
        .overrides
        .iter()
        .cloned()
        .partition(|o| o.path.first().map(String::as_str) == Some("synthetic"));

    let mut spec = SyntheticSpec {
        seed: args.seed,
        ..SyntheticSpec::default()
    };
    if !spec_overrides.is_empty() {
        let stripped: Vec<Override> = spec_overrides
            .into_iter()
            .map(|o| Override {
                path: o.path[1..].to_vec(),
                value: o.value,
            })
            .collect();
        let mut doc = serde_json::to_value(spec).expect("spec serializes");
        apply_overrides(&mut doc, &stripped).map_err(IoError::from)?;
        spec = serde_json::from_value(doc).map_err(|e| Failure {
            code: EXIT_USAGE,
            error: anyhow!("synthetic override: {e}"),
        })?;
    }
    let synthetic = generate_network(&spec)?;

    let mut scenario = synthetic.scenario(args.seed);
    if !scenario_overrides.is_empty() {
        let mut doc = serde_json::to_value(&scenario).expect("scenario serializes");
        apply_overrides(&mut doc, &scenario_overrides).map_err(IoError::from)?;
        scenario = serde_json::from_value(doc).map_err(|e| Failure {
            code: EXIT_USAGE,
            error: anyhow!("scenario override: {e}"),
        })?;
    }

    let network_file = args.out.join(NETWORK_JSON);
    let scenario_file = args.out.join(SCENARIO_JSON);
    io::write_network(&network_file, &synthetic.graph)?;
    io::write_atomic(
        &scenario_file,
        io::scenario_json(Path::new(NETWORK_JSON), &scenario).as_bytes(),
    )?;
    println!(
        "wrote {} and {}",
        network_file.display(),
        scenario_file.display()
    );
    Ok(EXIT_OK)
}

fn prepare(args: &ScenarioArgs) -> Result<(SimNetwork, Scenario), Failure> {
    let LoadedScenario {
        network_path,
        mut scenario,
    } = io::load_scenario(&args.scenario, &args.overrides)?;
    let network_path = args.network.clone().unwrap_or(network_path);
    if let Some(seed) = args.seed {
        scenario.base_seed = seed;
    }
    if let Some(r) = args.replications {
        scenario.replications = r;
    }
    let graph = io::load_network(&network_path)?;
    let net = SimNetwork::with_tie_break(graph, scenario.tie_break)
        .with_context(|| format!("network {}", network_path.display()))
        .map_err(Failure::invalid)?;
    scenario.validate(&net)?;
    Ok((net, scenario))
}

fn write_records(out: &Path, name: &str, records: &[MetricsRecord]) -> Result<(), Failure> {
    io::write_atomic(&out.join(name), records_csv(records).as_bytes())?;
    Ok(())
}

fn csv_lines<T: std::fmt::Display>(header: &str, rows: &[T]) -> String {
    let mut text = String::from(header);
    text.push('\n');
    for row in rows {
        text.push_str(&row.to_string());
        text.push('\n');
    }
    text
}

fn run_scenario(cli: &Cli, args: &RunArgs) -> Result<i32, Failure> {
    let (net, scenario) = prepare(&args.common)?;
    let fixed = match &args.requests {
        Some(p) => Some(io::load_requests(p, &net.graph)?),
        None => None,
    };
    let options = RunnerOptions {
        jobs: cli.jobs,
        event_log: cli.verbose,
        occupancy: args.occupancy,
        audit: false,
    };
    let runs = runner::run_replications(&net, &scenario, fixed.as_deref(), options)?;

    let out = &args.common.out;
    let mut records: Vec<MetricsRecord> = Vec::with_capacity(runs.len());
    for run in runs {
        let name = format!("replication_{:03}.csv", run.record.replication);
        if let Some(log) = &run.log {
            io::write_atomic(
                &out.join(EVENTS_DIR).join(&name),
                csv_lines(LOG_CSV_HEADER, log).as_bytes(),
            )?;
        }
        if let Some(samples) = &run.occupancy {
            io::write_atomic(
                &out.join(OCCUPANCY_DIR).join(&name),
                csv_lines(OCCUPANCY_CSV_HEADER, samples).as_bytes(),
            )?;
        }
        records.push(run.record);
    }
    let result =
        savsim_core::engine::ScenarioResult::from_records(records).expect("replications >= 1");
    write_records(out, REPLICATIONS_CSV, &result.records)?;
    io::write_atomic(
        &out.join(AGGREGATE_CSV),
        aggregates_csv(std::slice::from_ref(&result.aggregate)).as_bytes(),
    )?;

    let mean = |name| result.aggregate.metric(name).map_or(0.0, |s| s.mean);
    println!(
        "{} x{} {}: {} replications, mean trips {:.2}, mean wait {:.2} min -> {}",
        scenario.label,
        scenario.fleet_size,
        scenario.profile,
        scenario.replications,
        mean("trips_completed"),
        mean("avg_wait_min"),
        out.display()
    );
    Ok(EXIT_OK)
}

fn sweep(cli: &Cli, args: &SweepArgs) -> Result<i32, Failure> {
    let (net, base) = prepare(&args.common)?;
    if cli.verbose {
        eprintln!(
            "sweeping {} fleet sizes x {} profiles x {} replications",
            args.fleet_sizes.len(),
            args.profiles.len(),
            base.replications
        );
    }
    let result = runner::run_sweep(&net, &base, &args.fleet_sizes, &args.profiles, cli.jobs)?;
    let records: Vec<MetricsRecord> = result.records().cloned().collect();
    let out = &args.common.out;
    write_records(out, SWEEP_CSV, &records)?;
    io::write_atomic(
        &out.join(SWEEP_AGGREGATE_CSV),
        aggregates_csv(&result.aggregates()).as_bytes(),
    )?;
    println!(
        "{} cells, {} rows -> {}",
        result.cells.len(),
        records.len(),
        out.display()
    );
    Ok(EXIT_OK)
}
