//! Scenario harness: the full pipeline against the simulated chain.
//!
//! [`run_scenario`] wires the layers together for one configuration:
//! deterministic synthetic data, off-chain baseline and calibration, one
//! novelty record per sensor group per epoch pushed through the contract
//! runtime, and the discrete-event simulator carrying the transactions to
//! irreversibility. It returns both the raw artifacts (chain, contract
//! state, finality times) and a [`MetricsReport`] of throughput, latency,
//! CPU occupancy, and ledger growth.
//!
//! The harness can also run the storage counterfactual (`with_ni = false`),
//! where every raw sample row is submitted instead of the per-group index,
//! and compare the two ledgers with [`storage_comparison`]. [`sweep`] reruns
//! one scenario along a single axis (producer count or sensor count) and
//! reports whether throughput and finality latency move the way a larger
//! deployment would expect.
//!
//! Everything here is virtual-time deterministic. The one deliberate
//! exception is [`measure_ni_cost`], a wall-clock probe of the index
//! computation meant for picking [`NiCostModel`] constants; nothing calls
//! it on the simulation paths.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{
    AccountName, ChainConfig, ChainError, ChainState, NetworkModel, Transaction, TxStatus,
    BLOCK_CPU_BUDGET_US, BLOCK_INTERVAL_MS,
};
use crate::chain::sim::Simulator;
use crate::contract::{ContractError, ContractRuntime, CostModel};
use crate::ingest::{group_count, DamageLevel, DamageScenario, IngestError, SynthParams};
use crate::ingest::synthesize_frame;
use crate::pipeline::{NoveltyEngine, PipelineError};
use crate::shm::{NoveltyRecord, SensorFrame};

/// Errors produced by the benchmark harness.
#[derive(Debug, Error)]
pub enum BenchError {
    #[error("bad scenario config: {0}")]
    Config(String),
    #[error("bad sweep: {0}")]
    Sweep(String),
    #[error("reports are not comparable: {0}")]
    ConfigMismatch(String),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Contract(#[from] ContractError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How many gateway accounts feed transactions into the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatewayPolicy {
    /// A fixed number of gateways, independent of the producer count.
    Fixed(u32),
    /// One gateway per block producer.
    PerProducer,
}

impl GatewayPolicy {
    pub fn count(self, producers: usize) -> usize {
        match self {
            GatewayPolicy::Fixed(k) => k as usize,
            GatewayPolicy::PerProducer => producers,
        }
    }
}

/// Deterministic cost model for the novelty computation itself.
///
/// The simulation cannot time the host CPU without losing reproducibility,
/// so the index computation is charged a fixed cost per decomposition plus
/// a per-value cost over the snapshot matrix it factorizes. The defaults
/// were picked from wall-clock probes (see [`measure_ni_cost`]) rounded to
/// stable values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NiCostModel {
    pub base_us: f64,
    pub per_value_us: f64,
}

impl Default for NiCostModel {
    fn default() -> Self {
        Self {
            base_us: 200.0,
            per_value_us: 0.01,
        }
    }
}

impl NiCostModel {
    /// Cost of decomposing one group's snapshot matrix, in microseconds.
    pub fn group_cost_us(&self, width: usize, samples: usize, files: usize) -> f64 {
        self.base_us + self.per_value_us * (width * samples * files) as f64
    }

    /// Cost of scoring a whole epoch, in milliseconds.
    pub fn epoch_cost_ms(
        &self,
        groups: usize,
        width: usize,
        samples: usize,
        files: usize,
    ) -> f64 {
        groups as f64 * self.group_cost_us(width, samples, files) / 1000.0
    }
}

/// One benchmark scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub bridge_id: String,
    pub producers: usize,
    pub sensors: usize,
    /// Files collected per epoch (`m`).
    pub files_per_epoch: usize,
    /// Samples per file (`n_t`).
    pub samples_per_file: usize,
    /// Monitoring epochs driven through the chain.
    pub epochs: usize,
    /// Healthy epochs consumed off-chain for the baseline.
    pub healthy_epochs: usize,
    /// Worst-case exemplar epochs consumed off-chain for calibration.
    pub worstcase_epochs: usize,
    /// Damage level of the monitored data.
    pub monitor_level: DamageLevel,
    /// `true` stores one index per group; `false` stores every raw row.
    pub with_ni: bool,
    pub group_width: usize,
    pub eps: f64,
    /// Externally supplied normalization reference; `None` calibrates from
    /// the worst exemplar in the pool.
    pub n_ref: Option<f64>,
    /// Edge buffer capacity the ingress frames flow through.
    pub buffer_bytes: usize,
    pub seed: u64,
    pub sample_rate_hz: u32,
    /// Wall time between epoch completions; must be a multiple of the block
    /// interval.
    pub epoch_interval_ms: u64,
    pub gateway: GatewayPolicy,
    pub network: NetworkModel,
    pub cost: CostModel,
    pub ni_cost: NiCostModel,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            bridge_id: "br1".into(),
            producers: 5,
            sensors: 8,
            files_per_epoch: 6,
            samples_per_file: 64,
            epochs: 4,
            healthy_epochs: 4,
            worstcase_epochs: 1,
            monitor_level: DamageLevel::H,
            with_ni: true,
            group_width: 1,
            eps: 0.15,
            n_ref: None,
            buffer_bytes: crate::ingest::DEFAULT_BUFFER_BYTES,
            seed: 42,
            sample_rate_hz: 256,
            epoch_interval_ms: 2_000,
            gateway: GatewayPolicy::Fixed(1),
            network: NetworkModel::default(),
            cost: CostModel::default(),
            ni_cost: NiCostModel::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        let fail = |msg: String| Err(BenchError::Config(msg));
        if self.producers == 0 || self.producers > 676 {
            return fail(format!("producer count {} not in 1..=676", self.producers));
        }
        if self.epochs == 0 {
            return fail("at least one monitoring epoch is required".into());
        }
        if self.epoch_interval_ms == 0 || self.epoch_interval_ms % BLOCK_INTERVAL_MS != 0 {
            return fail(format!(
                "epoch interval {} ms is not a positive multiple of {} ms",
                self.epoch_interval_ms, BLOCK_INTERVAL_MS
            ));
        }
        if self.gateway.count(self.producers) == 0 {
            return fail("at least one gateway is required".into());
        }
        if self.with_ni && self.healthy_epochs == 0 {
            return fail("index mode needs at least one healthy epoch for the baseline".into());
        }
        group_count(self.sensors, self.group_width)?;
        // The generator enforces the rest (sensor and sample bounds).
        self.synth_params(DamageLevel::H).validate()?;
        Ok(())
    }

    fn synth_params(&self, level: DamageLevel) -> SynthParams {
        SynthParams {
            bridge_id: self.bridge_id.clone(),
            scenario: DamageScenario::new(level, self.sensors),
            files: self.files_per_epoch,
            sensors: self.sensors,
            samples: self.samples_per_file,
            sample_rate_hz: self.sample_rate_hz,
            seed: self.seed,
        }
    }

    /// Number of sensor groups (records per epoch in index mode).
    pub fn groups(&self) -> usize {
        group_count(self.sensors, self.group_width).expect("validated")
    }

    /// Virtual time at which epoch `e`'s data is complete.
    pub fn epoch_ready_ms(&self, epoch: usize) -> u64 {
        (epoch as u64 + 1) * self.epoch_interval_ms
    }
}

/// Measured outcome of one scenario run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub producers: usize,
    pub sensors: usize,
    pub files_per_epoch: usize,
    pub samples_per_file: usize,
    pub epochs: usize,
    pub with_ni: bool,
    pub blocks_total: u64,
    pub blocks_per_sec: f64,
    pub tx_confirmed: u64,
    pub avg_latency_ms: f64,
    pub max_latency_ms: f64,
    /// CPU-budget occupancy of every block in the monitoring span, in
    /// percent of the 5000 us budget.
    pub cpu_pct_series: Vec<f64>,
    pub cpu_mean_pct: f64,
    /// Coefficient of variation of the per-block CPU series.
    pub cpu_cv: f64,
    /// Scalar data values the ledger retains for monitoring.
    pub ledger_values: u64,
    /// Payload bytes of the monitoring transactions.
    pub ledger_bytes: u64,
    pub unhealthy_events: u64,
}

/// Everything a scenario run leaves behind.
#[derive(Debug)]
pub struct RunArtifacts {
    pub report: MetricsReport,
    pub chain: ChainState,
    pub finalized_at: BTreeMap<u64, f64>,
    /// Contract runtime and name, present in index mode.
    pub runtime: Option<ContractRuntime>,
    pub contract: Option<String>,
    /// The scoring engine with its frozen baseline, present in index mode.
    pub engine: Option<NoveltyEngine>,
    /// Every record pushed during monitoring, in submission order.
    pub records: Vec<NoveltyRecord>,
}

/// Spells producer account names `bpaa`, `bpab`, ... deterministically.
pub fn producer_names(n: usize) -> Vec<AccountName> {
    spelled_names("bp", n)
}

/// Spells gateway account names `gwaa`, `gwab`, ... deterministically.
pub fn gateway_names(n: usize) -> Vec<AccountName> {
    spelled_names("gw", n)
}

fn spelled_names(prefix: &str, n: usize) -> Vec<AccountName> {
    assert!(n <= 676, "two letters spell at most 676 names");
    (0..n)
        .map(|i| {
            let name = format!(
                "{prefix}{}{}",
                (b'a' + (i / 26) as u8) as char,
                (b'a' + (i % 26) as u8) as char
            );
            AccountName::new(name).expect("spelled names are valid")
        })
        .collect()
}

/// Generator-fed ingress: frames enter the bounded buffer in capture order
/// and epochs are cut from its oldest end, exactly as a field deployment
/// would batch live files.
struct Ingress {
    buffer: crate::ingest::BufferState,
    next_file: usize,
}

impl Ingress {
    fn new(capacity_bytes: usize) -> Result<Self, BenchError> {
        Ok(Self {
            buffer: crate::ingest::BufferState::new(capacity_bytes)?,
            next_file: 0,
        })
    }

    fn epoch(
        &mut self,
        config: &ScenarioConfig,
        level: DamageLevel,
    ) -> Result<Vec<SensorFrame>, BenchError> {
        let params = config.synth_params(level);
        for index in self.next_file..self.next_file + config.files_per_epoch {
            self.buffer.push(synthesize_frame(&params, index)?)?;
        }
        self.next_file += config.files_per_epoch;
        Ok(self.buffer.epoch_batch(config.files_per_epoch)?)
    }
}

/// Runs one scenario end to end. See the module docs for the shape.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunArtifacts, BenchError> {
    config.validate()?;
    let producers = producer_names(config.producers);
    let chain_config = ChainConfig {
        network: config.network,
        cost: config.cost,
        ..ChainConfig::default()
    };
    let mut sim = Simulator::new(ChainState::new(chain_config, producers)?);

    let gateways = gateway_names(config.gateway.count(config.producers));
    let owner = AccountName::new("monitor").expect("static name");
    sim.chain_mut().create_account(owner.clone(), 0)?;
    for gateway in &gateways {
        sim.chain_mut().create_account(gateway.clone(), 0)?;
    }

    let mut runtime = None;
    let mut contract = None;
    let mut engine = None;
    let mut ingress = Ingress::new(config.buffer_bytes)?;

    if config.with_ni {
        let mut rt = ContractRuntime::new();
        let name = rt.deploy(sim.chain_mut(), &owner, "nvlt", 0)?;
        for gateway in &gateways {
            rt.authorize(sim.chain(), &name, &owner, gateway)?;
        }

        let mut eng = NoveltyEngine::new(&config.bridge_id, config.group_width, config.eps)?;
        for _ in 0..config.healthy_epochs {
            let frames = ingress.epoch(config, DamageLevel::H)?;
            eng.observe_healthy_epoch(&frames)?;
        }
        eng.finalize_baseline()?;
        for _ in 0..config.worstcase_epochs {
            let frames = ingress.epoch(config, DamageLevel::D3)?;
            eng.observe_worstcase_epoch(&frames)?;
        }
        eng.calibrate(config.n_ref)?;

        runtime = Some(rt);
        contract = Some(name);
        engine = Some(eng);
    }

    // Submit the whole monitoring load up front; arrival times gate block
    // inclusion, so this is equivalent to feeding it in live.
    let ni_ms = if config.with_ni {
        config.ni_cost.epoch_cost_ms(
            config.groups(),
            config.group_width,
            config.samples_per_file,
            config.files_per_epoch,
        )
    } else {
        0.0
    };
    let mut records = Vec::new();
    let mut monitored: Vec<(String, u64)> = Vec::new();
    let mut ledger_bytes = 0u64;
    let mut ledger_values = 0u64;
    let mut load_cpu_us = 0u64;
    for epoch in 0..config.epochs {
        let ready = config.epoch_ready_ms(epoch);
        let frames = ingress.epoch(config, config.monitor_level)?;
        let mut queue_ms = vec![0.0f64; gateways.len()];
        let mut submit_one = |sim: &mut Simulator,
                              lane: usize,
                              payload_len: usize|
         -> (f64, &AccountName) {
            let size = payload_len + crate::chain::TX_HEADER_BYTES;
            let start = ready as f64 + ni_ms + queue_ms[lane];
            queue_ms[lane] += config.network.serialization_ms(size);
            load_cpu_us += config.cost.action_cost_us(payload_len);
            let _ = sim;
            (start, &gateways[lane])
        };

        if config.with_ni {
            let eng = engine.as_mut().expect("index mode");
            let rt = runtime.as_mut().expect("index mode");
            let name = contract.as_deref().expect("index mode");
            let epoch_records = eng.monitor_epoch(epoch as u64, &frames)?;
            for (j, record) in epoch_records.iter().enumerate() {
                let payload = crate::contract::ActionPayload::from_record(record).render();
                let (start, actor) = submit_one(&mut sim, j % gateways.len(), payload.len());
                let actor = actor.clone();
                let receipt = rt.push_addnovelty(sim.chain_mut(), name, &actor, record, start)?;
                monitored.push((receipt.tx.tx_id, ready));
                ledger_bytes += payload.len() as u64;
                ledger_values += 1;
            }
            records.extend(epoch_records);
        } else {
            for (f, frame) in frames.iter().enumerate() {
                for row in 0..frame.n_samples() {
                    let values: Vec<f64> =
                        (0..frame.sensor_count()).map(|j| frame.values()[(row, j)]).collect();
                    let payload = serde_json::json!({
                        "bridge": config.bridge_id,
                        "file": frame.file_id(),
                        "row": row,
                        "values": values,
                    })
                    .to_string();
                    let lane = (f * frame.n_samples() + row) % gateways.len();
                    let (start, actor) = submit_one(&mut sim, lane, payload.len());
                    let tx =
                        Transaction::new(actor.clone(), "rawlog", "rawsample", payload.clone(), start);
                    let receipt = sim.submit(tx)?;
                    monitored.push((receipt.tx_id, ready));
                    ledger_bytes += payload.len() as u64;
                    ledger_values += frame.sensor_count() as u64;
                }
            }
        }
    }

    // Finish the monitoring window, then keep the cadence going until the
    // backlog drains and every block is irreversible.
    let horizon = config.epoch_ready_ms(config.epochs.saturating_sub(1)) + config.epoch_interval_ms;
    sim.run_until(horizon)?;
    let backlog_blocks = load_cpu_us / BLOCK_CPU_BUDGET_US + 1;
    sim.drain(2 * backlog_blocks * BLOCK_INTERVAL_MS + 30_000)?;

    let finalized_at = sim.finalized_at().clone();
    let chain = sim.into_chain();

    let mut latency_sum = 0.0;
    let mut latency_max = 0.0f64;
    for (tx_id, ready) in &monitored {
        let (_, status) = chain.transaction(tx_id)?;
        let TxStatus::Committed { height, irreversible } = status else {
            return Err(BenchError::Config(format!(
                "monitoring transaction {tx_id} never committed"
            )));
        };
        debug_assert!(irreversible, "drain leaves every block irreversible");
        let latency = finalized_at[&height] - *ready as f64;
        latency_sum += latency;
        latency_max = latency_max.max(latency);
    }
    let avg_latency_ms = if monitored.is_empty() {
        0.0
    } else {
        latency_sum / monitored.len() as f64
    };

    // Per-block budget occupancy over the monitoring span: every block slot
    // after the first epoch's data is ready, up to the slot that absorbs
    // the last epoch.
    let span_start = config.epoch_ready_ms(0);
    let span_end = config.epoch_ready_ms(config.epochs - 1) + config.epoch_interval_ms;
    let cpu_pct_series: Vec<f64> = chain
        .blocks()
        .iter()
        .filter(|b| b.timestamp_ms > span_start && b.timestamp_ms <= span_end)
        .map(|b| 100.0 * b.cpu_used_us as f64 / BLOCK_CPU_BUDGET_US as f64)
        .collect();
    let cpu_mean_pct = cpu_pct_series.iter().sum::<f64>() / cpu_pct_series.len().max(1) as f64;
    let cpu_cv = if cpu_mean_pct == 0.0 {
        0.0
    } else {
        let var = cpu_pct_series
            .iter()
            .map(|p| (p - cpu_mean_pct) * (p - cpu_mean_pct))
            .sum::<f64>()
            / cpu_pct_series.len() as f64;
        var.sqrt() / cpu_mean_pct
    };

    let head_secs = chain.head().timestamp_ms as f64 / 1000.0;
    let unhealthy_events = chain
        .events()
        .iter()
        .filter(|line| line.as_str() == crate::contract::UNHEALTHY_EVENT)
        .count() as u64;
    let report = MetricsReport {
        producers: config.producers,
        sensors: config.sensors,
        files_per_epoch: config.files_per_epoch,
        samples_per_file: config.samples_per_file,
        epochs: config.epochs,
        with_ni: config.with_ni,
        blocks_total: chain.head_height(),
        blocks_per_sec: chain.head_height() as f64 / head_secs,
        tx_confirmed: chain.confirmed_tx_count(),
        avg_latency_ms,
        max_latency_ms: latency_max,
        cpu_pct_series,
        cpu_mean_pct,
        cpu_cv,
        ledger_values,
        ledger_bytes,
        unhealthy_events,
    };
    Ok(RunArtifacts {
        report,
        chain,
        finalized_at,
        runtime,
        contract,
        engine,
        records,
    })
}

/// The axis a [`sweep`] varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Producers,
    Sensors,
}

/// Scaling verdicts over a sweep's reports, in sweep order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepVerdicts {
    /// Confirmed transactions never shrink as the axis grows.
    pub tx_confirmed_non_decreasing: bool,
    /// Mean finality latency strictly grows with the axis.
    pub latency_strictly_increasing: bool,
}

/// Outcome of a single-axis sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub axis: SweepAxis,
    pub values: Vec<usize>,
    pub reports: Vec<MetricsReport>,
    pub verdicts: SweepVerdicts,
}

/// Reruns `base` with the given axis set to each value in turn. Values must
/// be strictly increasing so the verdicts are meaningful.
pub fn sweep(
    base: &ScenarioConfig,
    axis: SweepAxis,
    values: &[usize],
) -> Result<SweepOutcome, BenchError> {
    if values.is_empty() {
        return Err(BenchError::Sweep("no axis values given".into()));
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(BenchError::Sweep(format!(
            "axis values must be strictly increasing, got {values:?}"
        )));
    }
    let mut reports = Vec::with_capacity(values.len());
    for &value in values {
        let mut config = base.clone();
        match axis {
            SweepAxis::Producers => config.producers = value,
            SweepAxis::Sensors => config.sensors = value,
        }
        reports.push(run_scenario(&config)?.report);
    }
    let verdicts = SweepVerdicts {
        tx_confirmed_non_decreasing: reports
            .windows(2)
            .all(|w| w[0].tx_confirmed <= w[1].tx_confirmed),
        latency_strictly_increasing: reports
            .windows(2)
            .all(|w| w[0].avg_latency_ms < w[1].avg_latency_ms),
    };
    Ok(SweepOutcome {
        axis,
        values: values.to_vec(),
        reports,
        verdicts,
    })
}

/// Ledger growth of index storage versus raw storage for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageComparison {
    pub values_with: u64,
    pub values_without: u64,
    /// `values_without / values_with`; exact when the division is.
    pub value_ratio: u64,
    pub value_ratio_is_exact: bool,
    pub bytes_with: u64,
    pub bytes_without: u64,
    pub byte_ratio: f64,
}

/// Compares an index-mode report against a raw-mode report of the same
/// deployment shape.
pub fn storage_comparison(
    with_ni: &MetricsReport,
    without_ni: &MetricsReport,
) -> Result<StorageComparison, BenchError> {
    if !with_ni.with_ni || without_ni.with_ni {
        return Err(BenchError::ConfigMismatch(
            "expected one index-mode and one raw-mode report, in that order".into(),
        ));
    }
    let same = with_ni.producers == without_ni.producers
        && with_ni.sensors == without_ni.sensors
        && with_ni.files_per_epoch == without_ni.files_per_epoch
        && with_ni.samples_per_file == without_ni.samples_per_file
        && with_ni.epochs == without_ni.epochs;
    if !same {
        return Err(BenchError::ConfigMismatch(format!(
            "deployment shapes differ: {}x{}x{}x{}x{} vs {}x{}x{}x{}x{}",
            with_ni.producers,
            with_ni.sensors,
            with_ni.files_per_epoch,
            with_ni.samples_per_file,
            with_ni.epochs,
            without_ni.producers,
            without_ni.sensors,
            without_ni.files_per_epoch,
            without_ni.samples_per_file,
            without_ni.epochs,
        )));
    }
    if with_ni.ledger_values == 0 {
        return Err(BenchError::ConfigMismatch(
            "index-mode report stored no values".into(),
        ));
    }
    Ok(StorageComparison {
        values_with: with_ni.ledger_values,
        values_without: without_ni.ledger_values,
        value_ratio: without_ni.ledger_values / with_ni.ledger_values,
        value_ratio_is_exact: without_ni.ledger_values % with_ni.ledger_values == 0,
        bytes_with: with_ni.ledger_bytes,
        bytes_without: without_ni.ledger_bytes,
        byte_ratio: without_ni.ledger_bytes as f64 / with_ni.ledger_bytes.max(1) as f64,
    })
}

/// Writes reports as CSV: one row per report, stable column order.
pub fn write_reports_csv<W: Write>(out: W, reports: &[MetricsReport]) -> Result<(), BenchError> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record([
        "producers",
        "sensors",
        "m",
        "epochs",
        "with_ni",
        "blocks_per_sec",
        "tx_confirmed",
        "avg_latency_ms",
        "cpu_mean_pct",
        "cpu_cv",
        "ledger_values",
        "ledger_bytes",
    ])?;
    for r in reports {
        writer.write_record([
            r.producers.to_string(),
            r.sensors.to_string(),
            r.files_per_epoch.to_string(),
            r.epochs.to_string(),
            r.with_ni.to_string(),
            format!("{:.3}", r.blocks_per_sec),
            r.tx_confirmed.to_string(),
            format!("{:.3}", r.avg_latency_ms),
            format!("{:.3}", r.cpu_mean_pct),
            format!("{:.4}", r.cpu_cv),
            r.ledger_values.to_string(),
            r.ledger_bytes.to_string(),
        ])?;
    }
    writer.flush().map_err(BenchError::from)?;
    Ok(())
}

impl From<csv::Error> for BenchError {
    fn from(err: csv::Error) -> Self {
        BenchError::Io(std::io::Error::other(err))
    }
}

/// Wall-clock probe of the index computation for one epoch, in
/// milliseconds. Diagnostic only: results vary by host, so nothing on the
/// simulation paths may call this.
pub fn measure_ni_cost(
    sensors: usize,
    group_width: usize,
    files: usize,
    samples: usize,
    seed: u64,
) -> Result<f64, BenchError> {
    use crate::ingest::group_snapshot_matrix;
    use crate::shm::compute_pom;

    let params = SynthParams {
        bridge_id: "probe".into(),
        scenario: DamageScenario::new(DamageLevel::H, sensors),
        files,
        sensors,
        samples,
        sample_rate_hz: 256,
        seed,
    };
    let frames: Vec<SensorFrame> = (0..files)
        .map(|i| synthesize_frame(&params, i))
        .collect::<Result<Vec<_>, _>>()?;
    let groups = group_count(sensors, group_width)?;
    let start = Instant::now();
    for g in 0..groups {
        let snapshots = group_snapshot_matrix(&frames, g, group_width)?;
        compute_pom(&snapshots).map_err(PipelineError::from)?;
    }
    Ok(start.elapsed().as_secs_f64() * 1000.0)
}
