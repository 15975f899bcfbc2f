//! Command-line front end: data generation, end-to-end runs, chain queries,
//! and benchmark sweeps behind one executable.
//!
//! Exit codes: `0` success, `1` runtime failure, `2` usage or configuration
//! error, `3` queried thing not found.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bench::{
    self, GatewayPolicy, MetricsReport, NiCostModel, RunArtifacts, ScenarioConfig, SweepAxis,
};
use crate::chain::{self, AccountName, ChainState, NetworkModel};
use crate::contract::{ContractError, ContractRuntime, CostModel};
use crate::ingest::{synthesize_dataset, DamageLevel, DamageScenario, SynthParams};
use crate::pipeline::NoveltyEngine;
use crate::shm::NoveltyRecord;

/// Exit status for a failed command, by failure class.
#[derive(Debug)]
enum CliError {
    /// Bad flags, bad config, missing config file: exit 2.
    Usage(String),
    /// The queried entity does not exist: exit 3.
    NotFound(String),
    /// Anything that broke mid-run: exit 1.
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Usage(_) => 2,
            CliError::NotFound(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::NotFound(m) | CliError::Runtime(m) => m,
        }
    }
}

macro_rules! runtime_from {
    ($($ty:ty => $prefix:literal),+ $(,)?) => {
        $(impl From<$ty> for CliError {
            fn from(err: $ty) -> Self {
                CliError::Runtime(format!(concat!($prefix, ": {}"), err))
            }
        })+
    };
}

runtime_from! {
    bench::BenchError => "bench",
    chain::ChainError => "chain",
    crate::ingest::IngestError => "ingest",
    crate::pipeline::PipelineError => "pipeline",
    crate::shm::ShmError => "shm",
    std::io::Error => "io",
}

#[derive(Parser, Debug)]
#[command(
    name = "trestle",
    about = "Bridge-health monitoring on a simulated DPoS chain",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a deterministic synthetic strain dataset as CSV files.
    Generate(GenerateArgs),
    /// Run calibrate-then-monitor end to end and persist the chain.
    Run(RunArgs),
    /// Query a persisted run: accounts, transactions, blocks, table rows.
    Query(QueryArgs),
    /// Sweep one scaling axis and write the report table.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Damage level: H, D1, D2 or D3.
    #[arg(long, default_value = "H")]
    level: DamageLevel,
    /// Number of files (vehicle passages) to generate.
    #[arg(long, default_value_t = 6)]
    files: usize,
    /// Sensors per file.
    #[arg(long, default_value_t = 51)]
    sensors: usize,
    /// Samples per file.
    #[arg(long, default_value_t = 256)]
    samples: usize,
    /// Sampling rate in Hz.
    #[arg(long, default_value_t = 256)]
    rate: u32,
    /// Bridge identifier embedded in file names and rows.
    #[arg(long, default_value = "br1")]
    bridge: String,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Directory the CSV files and manifest are written into.
    #[arg(long, default_value = "data")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args, Debug)]
struct QueryArgs {
    /// Persisted state file written by `run`.
    #[arg(long, default_value = "out/state.json")]
    state: PathBuf,
    #[command(subcommand)]
    what: QueryKind,
}

#[derive(Subcommand, Debug)]
enum QueryKind {
    /// Look up an account by name.
    Account { name: String },
    /// Look up a transaction by id.
    Transaction { id: String },
    /// Look up a block by height or id.
    Block { key: String },
    /// List a contract's table rows, optionally for one epoch.
    Table {
        contract: String,
        #[arg(long)]
        epoch: Option<u64>,
    },
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Optional TOML configuration supplying the base scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Producer counts to sweep, for example `5,10,20`.
    #[arg(long, value_delimiter = ',')]
    nodes: Option<Vec<usize>>,
    /// Sensor counts to sweep, for example `15,25,35,51`.
    #[arg(long, value_delimiter = ',')]
    sensors: Option<Vec<usize>>,
    /// Also run the raw-storage counterfactual at the base shape and
    /// report the ledger ratio.
    #[arg(long)]
    storage: bool,
    #[arg(long, default_value = "bench_out")]
    out_dir: PathBuf,
}

/// The TOML configuration. Every key has a default; unknown keys are
/// rejected so typos fail loudly.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CliConfig {
    pub sensors: usize,
    pub producers: usize,
    pub buffer_mb: usize,
    pub sample_rate_hz: u32,
    pub bandwidth_mbps: f64,
    pub delay_ms: f64,
    pub eps: f64,
    pub n_ref: Option<f64>,
    pub seed: u64,
    pub run: RunSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub bridge_id: String,
    pub files_per_epoch: usize,
    pub samples_per_file: usize,
    pub epochs: usize,
    pub healthy_epochs: usize,
    pub worstcase_epochs: usize,
    pub monitor_level: DamageLevel,
    pub epoch_interval_ms: u64,
    pub group_width: usize,
    pub out_dir: PathBuf,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            sensors: 51,
            producers: 5,
            buffer_mb: 150,
            sample_rate_hz: 256,
            bandwidth_mbps: 100.0,
            delay_ms: 5.0,
            eps: 0.15,
            n_ref: None,
            seed: 42,
            run: RunSection::default(),
        }
    }
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            bridge_id: "br1".into(),
            files_per_epoch: 6,
            samples_per_file: 64,
            epochs: 4,
            healthy_epochs: 4,
            worstcase_epochs: 1,
            monitor_level: DamageLevel::H,
            epoch_interval_ms: 2_000,
            group_width: 1,
            out_dir: PathBuf::from("out"),
        }
    }
}

/// Largest producer set the configuration accepts.
pub const MAX_PRODUCERS: usize = 50;

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let config: CliConfig =
            toml::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(2..=999).contains(&self.sensors) {
            return Err(format!("sensors {} not in 2..=999", self.sensors));
        }
        if self.producers == 0 || self.producers > MAX_PRODUCERS {
            return Err(format!("producers {} not in 1..={MAX_PRODUCERS}", self.producers));
        }
        if self.buffer_mb == 0 {
            return Err("buffer_mb must be positive".into());
        }
        if self.sample_rate_hz == 0 {
            return Err("sample_rate_hz must be positive".into());
        }
        if !(self.bandwidth_mbps > 0.0) || !(self.delay_ms > 0.0) {
            return Err("bandwidth_mbps and delay_ms must be positive".into());
        }
        if !self.eps.is_finite() || self.eps <= 0.0 || self.eps >= 1.0 {
            return Err(format!("eps {} must lie strictly between 0 and 1", self.eps));
        }
        if let Some(n_ref) = self.n_ref {
            if !n_ref.is_finite() || n_ref <= 0.0 {
                return Err(format!("n_ref {n_ref} must be positive"));
            }
        }
        Ok(())
    }

    /// Lowers the configuration into a benchmark scenario.
    pub fn to_scenario(&self) -> Result<ScenarioConfig, String> {
        let network = NetworkModel::new(self.delay_ms, self.bandwidth_mbps * 1e6)
            .map_err(|e| e.to_string())?;
        Ok(ScenarioConfig {
            bridge_id: self.run.bridge_id.clone(),
            producers: self.producers,
            sensors: self.sensors,
            files_per_epoch: self.run.files_per_epoch,
            samples_per_file: self.run.samples_per_file,
            epochs: self.run.epochs,
            healthy_epochs: self.run.healthy_epochs,
            worstcase_epochs: self.run.worstcase_epochs,
            monitor_level: self.run.monitor_level,
            with_ni: true,
            group_width: self.run.group_width,
            eps: self.eps,
            n_ref: self.n_ref,
            buffer_bytes: self.buffer_mb << 20,
            seed: self.seed,
            sample_rate_hz: self.sample_rate_hz,
            epoch_interval_ms: self.run.epoch_interval_ms,
            gateway: GatewayPolicy::Fixed(1),
            network,
            cost: CostModel::default(),
            ni_cost: NiCostModel::default(),
        })
    }
}

/// Everything `run` persists, reloadable by `query`.
#[derive(Debug, Serialize, Deserialize)]
pub struct PersistedState {
    pub chain: ChainState,
    pub runtime: ContractRuntime,
    pub contract: Option<String>,
    pub engine: Option<NoveltyEngine>,
    pub report: MetricsReport,
    pub records: Vec<NoveltyRecord>,
    pub finalized_at: BTreeMap<u64, f64>,
}

/// Parses the process arguments, runs the command, and returns the exit
/// code. Errors print to standard error.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version are successful exits; everything else is a
            // usage error.
            let _ = err.print();
            return if err.use_stderr() { 2 } else { 0 };
        }
    };
    let mut stdout = std::io::stdout();
    match dispatch(cli, &mut stdout) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {}", err.message());
            err.exit_code()
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Generate(args) => cmd_generate(args, out),
        Command::Run(args) => cmd_run(args, out),
        Command::Query(args) => cmd_query(args, out),
        Command::Bench(args) => cmd_bench(args, out),
    }
}

#[derive(Debug, Serialize)]
struct ManifestEntry {
    name: String,
    bytes: usize,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest {
    bridge_id: String,
    level: String,
    seed: u64,
    sensors: usize,
    samples: usize,
    sample_rate_hz: u32,
    files: Vec<ManifestEntry>,
}

fn cmd_generate(args: GenerateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let params = SynthParams {
        bridge_id: args.bridge.clone(),
        scenario: DamageScenario::new(args.level, args.sensors),
        files: args.files,
        sensors: args.sensors,
        samples: args.samples,
        sample_rate_hz: args.rate,
        seed: args.seed,
    };
    params
        .validate()
        .map_err(|e| CliError::Usage(format!("bad generator parameters: {e}")))?;
    let dataset = synthesize_dataset(&params)?;
    fs::create_dir_all(&args.out_dir)?;
    let mut entries = Vec::with_capacity(dataset.len());
    for file in &dataset {
        fs::write(args.out_dir.join(&file.name), &file.bytes)?;
        entries.push(ManifestEntry {
            name: file.name.clone(),
            bytes: file.bytes.len(),
            sha256: hex::encode(Sha256::digest(&file.bytes)),
        });
    }
    let manifest = Manifest {
        bridge_id: args.bridge,
        level: args.level.label().to_string(),
        seed: args.seed,
        sensors: args.sensors,
        samples: args.samples,
        sample_rate_hz: args.rate,
        files: entries,
    };
    let manifest_json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(args.out_dir.join("manifest.json"), format!("{manifest_json}\n"))?;
    writeln!(
        out,
        "wrote {} files and manifest.json to {}",
        dataset.len(),
        args.out_dir.display()
    )?;
    Ok(())
}

fn cmd_run(args: RunArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let config = CliConfig::load(&args.config).map_err(CliError::Usage)?;
    let scenario = config.to_scenario().map_err(CliError::Usage)?;
    scenario
        .validate()
        .map_err(|e| CliError::Usage(format!("bad run shape: {e}")))?;

    let artifacts = bench::run_scenario(&scenario)?;
    let RunArtifacts {
        report,
        chain,
        finalized_at,
        runtime,
        contract,
        engine,
        records,
    } = artifacts;

    for epoch in 0..scenario.epochs as u64 {
        let in_epoch: Vec<&NoveltyRecord> =
            records.iter().filter(|r| r.epoch == epoch).collect();
        let unhealthy = in_epoch
            .iter()
            .filter(|r| r.state == crate::shm::HealthState::Unhealthy)
            .count();
        let mean_ni =
            in_epoch.iter().map(|r| r.ni_norm).sum::<f64>() / in_epoch.len().max(1) as f64;
        writeln!(
            out,
            "epoch {epoch}: {} records, {} unhealthy, mean index {:.3}",
            in_epoch.len(),
            unhealthy,
            mean_ni,
        )?;
    }

    let out_dir = &config.run.out_dir;
    fs::create_dir_all(out_dir)?;
    let mut log = Vec::new();
    chain.write_chain_log(&mut log)?;
    fs::write(out_dir.join("chain.ndjson"), log)?;

    let state = PersistedState {
        chain,
        runtime: runtime.unwrap_or_default(),
        contract: contract.clone(),
        engine,
        report: report.clone(),
        records: records.clone(),
        finalized_at,
    };
    let state_json = serde_json::to_string(&state).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(out_dir.join("state.json"), state_json)?;
    let summary_json =
        serde_json::to_string_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(out_dir.join("summary.json"), format!("{summary_json}\n"))?;

    let final_line = serde_json::json!({
        "records_written": records.len(),
        "unhealthy_events": report.unhealthy_events,
        "lib_height": state.chain.lib_height(),
        "contract": contract,
        "out_dir": out_dir,
    });
    writeln!(out, "{final_line}")?;
    Ok(())
}

fn load_state(path: &Path) -> Result<PersistedState, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read state {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Runtime(format!("corrupt state {}: {e}", path.display())))
}

fn cmd_query(args: QueryArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let state = load_state(&args.state)?;
    let value = match args.what {
        QueryKind::Account { name } => {
            let account = AccountName::new(name.clone())
                .map_err(|e| CliError::Usage(format!("bad account name: {e}")))?;
            let found = state
                .chain
                .account(&account)
                .map_err(|_| CliError::NotFound(format!("no account {name:?}")))?;
            serde_json::to_value(found)
        }
        QueryKind::Transaction { id } => {
            let (tx, status) = state
                .chain
                .transaction(&id)
                .map_err(|_| CliError::NotFound(format!("no transaction {id:?}")))?;
            serde_json::to_value(serde_json::json!({ "transaction": tx, "status": status }))
        }
        QueryKind::Block { key } => {
            let block = if key.bytes().all(|b| b.is_ascii_digit()) && !key.is_empty() {
                let height: u64 = key
                    .parse()
                    .map_err(|e| CliError::Usage(format!("bad height {key:?}: {e}")))?;
                state.chain.block(height)
            } else {
                state.chain.block_by_id(&key)
            }
            .map_err(|_| CliError::NotFound(format!("no block {key:?}")))?;
            serde_json::to_value(block)
        }
        QueryKind::Table { contract, epoch } => {
            let found = state.runtime.contract(&contract).map_err(|e| match e {
                ContractError::UnknownContract(name) => {
                    CliError::NotFound(format!("no contract {name:?}"))
                }
                other => CliError::Runtime(other.to_string()),
            })?;
            let rows: Vec<_> = match epoch {
                Some(epoch) => found.rows_in_epoch(epoch).collect(),
                None => found.rows().collect(),
            };
            serde_json::to_value(rows)
        }
    }
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    let pretty = serde_json::to_string_pretty(&value).map_err(|e| CliError::Runtime(e.to_string()))?;
    writeln!(out, "{pretty}")?;
    Ok(())
}

fn cmd_bench(args: BenchArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let config = match &args.config {
        Some(path) => CliConfig::load(path).map_err(CliError::Usage)?,
        None => CliConfig::default(),
    };
    let mut base = config.to_scenario().map_err(CliError::Usage)?;

    let (axis, values) = match (&args.nodes, &args.sensors) {
        (Some(nodes), None) => (SweepAxis::Producers, nodes.clone()),
        (None, Some(sensors)) => (SweepAxis::Sensors, sensors.clone()),
        (Some(_), Some(_)) => {
            return Err(CliError::Usage(
                "pass exactly one of --nodes and --sensors".into(),
            ));
        }
        (None, None) if args.storage => (SweepAxis::Producers, vec![base.producers]),
        (None, None) => {
            return Err(CliError::Usage(
                "nothing to do: pass --nodes, --sensors or --storage".into(),
            ));
        }
    };
    if values.is_empty() {
        return Err(CliError::Usage("the sweep list is empty".into()));
    }
    // A producer sweep models each producer running its own gateway, so
    // submission fan-in scales with the validator set; a sensor sweep keeps
    // one gateway so only the data volume grows.
    base.gateway = match axis {
        SweepAxis::Producers => GatewayPolicy::PerProducer,
        SweepAxis::Sensors => GatewayPolicy::Fixed(1),
    };

    fs::create_dir_all(&args.out_dir)?;
    let outcome = bench::sweep(&base, axis, &values)
        .map_err(|e| match e {
            bench::BenchError::Sweep(msg) => CliError::Usage(msg),
            other => other.into(),
        })?;
    let mut csv_bytes = Vec::new();
    bench::write_reports_csv(&mut csv_bytes, &outcome.reports)?;
    fs::write(args.out_dir.join("sweep.csv"), &csv_bytes)?;
    let json = serde_json::to_string_pretty(&outcome).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(args.out_dir.join("reports.json"), format!("{json}\n"))?;
    writeln!(
        out,
        "swept {:?} over {:?}: tx non-decreasing = {}, latency strictly increasing = {}",
        outcome.axis,
        outcome.values,
        outcome.verdicts.tx_confirmed_non_decreasing,
        outcome.verdicts.latency_strictly_increasing,
    )?;

    if args.storage {
        let mut with = base.clone();
        with.with_ni = true;
        let mut without = base.clone();
        without.with_ni = false;
        let with_report = bench::run_scenario(&with)?.report;
        let without_report = bench::run_scenario(&without)?.report;
        let comparison = bench::storage_comparison(&with_report, &without_report)?;
        let json = serde_json::to_string_pretty(&comparison)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        fs::write(args.out_dir.join("storage.json"), format!("{json}\n"))?;
        writeln!(
            out,
            "storage: {} raw values vs {} index values, ratio {}{}",
            comparison.values_without,
            comparison.values_with,
            comparison.value_ratio,
            if comparison.value_ratio_is_exact { " (exact)" } else { "" },
        )?;
    }
    writeln!(out, "reports written to {}", args.out_dir.display())?;
    Ok(())
}
