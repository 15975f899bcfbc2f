//! Deterministic delegated-proof-of-stake chain state machine.
//!
//! Blocks are produced on a fixed 500 ms cadence by a round-robin producer
//! schedule. Finality is two-staged: a block first collects stage-one
//! confirmations from producers; once a two-thirds supermajority is reached,
//! stage-two confirmations begin, and a second supermajority makes the block
//! irreversible, advancing the last irreversible block (LIB). The LIB never
//! moves backwards and never passes the head.
//!
//! The module is a pure state machine: callers decide when slots fire and
//! when confirmations arrive (see [`sim`] for the discrete-event driver), so
//! every trajectory is replayable. Blocks serialize to a canonical NDJSON
//! log whose lines hash into the block ids, giving byte-identical logs for
//! identical runs.

pub mod sim;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::contract::CostModel;

/// Milliseconds between consecutive blocks.
pub const BLOCK_INTERVAL_MS: u64 = 500;

/// Per-block CPU budget in microseconds.
pub const BLOCK_CPU_BUDGET_US: u64 = 5_000;

/// Fixed per-transaction envelope overhead added to the payload size.
pub const TX_HEADER_BYTES: usize = 32;

/// Name of the system account that signs the genesis block.
pub const GENESIS_PRODUCER: &str = "eosio";

/// Parent id of the genesis block.
pub const GENESIS_PARENT_ID: &str =
    "0000000000000000000000000000000000000000000000000000000000000000";

/// Smallest number of confirmations that constitutes a two-thirds
/// supermajority of `n` producers: `floor(2n/3) + 1`.
pub fn supermajority(n: usize) -> usize {
    n * 2 / 3 + 1
}

/// Errors produced by the chain state machine.
#[derive(Debug, Error)]
pub enum ChainError {
    #[error("invalid account name {0:?}: need 1-12 chars from a-z, 1-5 and '.', no leading or trailing '.'")]
    InvalidName(String),
    #[error("account {0} already exists")]
    DuplicateAccount(String),
    #[error("unknown account {0}")]
    UnknownAccount(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid network parameters: {0}")]
    InvalidNetwork(String),
    #[error("transaction payload is empty")]
    EmptyPayload,
    #[error("transaction size {size} bytes exceeds the {max} byte limit")]
    OversizedTransaction { size: usize, max: usize },
    #[error("duplicate transaction {0}")]
    DuplicateTransaction(String),
    #[error("cannot produce at {now} ms: the next slot boundary is {expected} ms")]
    NotSlotBoundary { now: u64, expected: u64 },
    #[error("wrong producer for slot {slot}: schedule expects {expected}, got {got}")]
    WrongProducer {
        slot: u64,
        expected: String,
        got: String,
    },
    #[error("producer {0} is not in the active schedule")]
    UnknownProducer(String),
    #[error("{kind} {key} not found")]
    NotFound { kind: &'static str, key: String },
    #[error("stage-two confirmation of block {height} needs {needed} stage-one confirmations first (have {have})")]
    PrematureStageTwo {
        height: u64,
        have: usize,
        needed: usize,
    },
    #[error("malformed chain log at line {line}: {detail}")]
    MalformedLog { line: usize, detail: String },
    #[error("simulation stalled: no progress after {waited_ms} ms of virtual time")]
    Stalled { waited_ms: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// An EOSIO-style account name: 1 to 12 characters drawn from `a`-`z`,
/// `1`-`5` and `.`, with no leading or trailing dot.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AccountName(String);

impl AccountName {
    pub fn new(name: impl Into<String>) -> Result<Self, ChainError> {
        let name = name.into();
        let ok_len = (1..=12).contains(&name.len());
        let ok_chars = name
            .chars()
            .all(|c| c.is_ascii_lowercase() || ('1'..='5').contains(&c) || c == '.');
        let ok_dots = !name.starts_with('.') && !name.ends_with('.');
        if ok_len && ok_chars && ok_dots {
            Ok(Self(name))
        } else {
            Err(ChainError::InvalidName(name))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AccountName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for AccountName {
    type Err = ChainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

/// A named principal on the chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Account {
    pub name: AccountName,
    pub created_at_ms: u64,
}

/// The ordered set of block producers and the round in which it activated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProducerSchedule {
    round_index: u64,
    producers: Vec<AccountName>,
}

impl ProducerSchedule {
    /// Builds a schedule from a non-empty list of distinct producer names.
    pub fn new(producers: Vec<AccountName>) -> Result<Self, ChainError> {
        if producers.is_empty() {
            return Err(ChainError::InvalidSchedule("no producers".into()));
        }
        let distinct: BTreeSet<&AccountName> = producers.iter().collect();
        if distinct.len() != producers.len() {
            return Err(ChainError::InvalidSchedule(
                "duplicate producer names".into(),
            ));
        }
        Ok(Self {
            round_index: 0,
            producers,
        })
    }

    /// Number of producers in the schedule.
    pub fn len(&self) -> usize {
        self.producers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.producers.is_empty()
    }

    /// The round in which this schedule became active.
    pub fn round_index(&self) -> u64 {
        self.round_index
    }

    /// Producers in rotation order.
    pub fn producers(&self) -> &[AccountName] {
        &self.producers
    }

    /// The producer that owns the block slot at `timestamp_ms`:
    /// `producers[(timestamp_ms / 500) mod n]`.
    pub fn producer_at(&self, timestamp_ms: u64) -> &AccountName {
        let slot = timestamp_ms / BLOCK_INTERVAL_MS;
        &self.producers[(slot % self.producers.len() as u64) as usize]
    }

    /// Position of a producer in the rotation, if present.
    pub fn position_of(&self, name: &AccountName) -> Option<usize> {
        self.producers.iter().position(|p| p == name)
    }

    /// Confirmations needed per stage for this schedule.
    pub fn supermajority(&self) -> usize {
        supermajority(self.producers.len())
    }
}

/// Link parameters used to convert message sizes into delivery delays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    propagation_delay_ms: f64,
    bandwidth_bps: f64,
}

impl NetworkModel {
    pub fn new(propagation_delay_ms: f64, bandwidth_bps: f64) -> Result<Self, ChainError> {
        if !propagation_delay_ms.is_finite() || propagation_delay_ms < 0.0 {
            return Err(ChainError::InvalidNetwork(format!(
                "propagation delay must be finite and non-negative, got {propagation_delay_ms}"
            )));
        }
        if !bandwidth_bps.is_finite() || bandwidth_bps <= 0.0 {
            return Err(ChainError::InvalidNetwork(format!(
                "bandwidth must be finite and positive, got {bandwidth_bps}"
            )));
        }
        Ok(Self {
            propagation_delay_ms,
            bandwidth_bps,
        })
    }

    pub fn propagation_delay_ms(&self) -> f64 {
        self.propagation_delay_ms
    }

    pub fn bandwidth_bps(&self) -> f64 {
        self.bandwidth_bps
    }

    /// Time to push `bytes` onto the wire, in milliseconds.
    pub fn serialization_ms(&self, bytes: usize) -> f64 {
        bytes as f64 * 8.0 / self.bandwidth_bps * 1000.0
    }

    /// One-hop delivery time: propagation plus serialization. A 100 byte
    /// message over 100 Mbps with 5 ms of propagation arrives after
    /// 5.008 ms.
    pub fn delivery_time_ms(&self, bytes: usize) -> f64 {
        self.propagation_delay_ms + self.serialization_ms(bytes)
    }
}

impl Default for NetworkModel {
    /// 5 ms propagation, 100 Mbps bandwidth.
    fn default() -> Self {
        Self {
            propagation_delay_ms: 5.0,
            bandwidth_bps: 100_000_000.0,
        }
    }
}

/// A signed action submission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transaction {
    pub id: String,
    pub actor: AccountName,
    pub contract: String,
    pub action: String,
    pub payload: String,
    pub submitted_at_ms: f64,
}

impl Transaction {
    /// Builds a transaction; the id is a SHA-256 over every other field.
    pub fn new(
        actor: AccountName,
        contract: impl Into<String>,
        action: impl Into<String>,
        payload: impl Into<String>,
        submitted_at_ms: f64,
    ) -> Self {
        let contract = contract.into();
        let action = action.into();
        let payload = payload.into();
        let mut hasher = Sha256::new();
        hasher.update(actor.as_str().as_bytes());
        hasher.update([0u8]);
        hasher.update(contract.as_bytes());
        hasher.update([0u8]);
        hasher.update(action.as_bytes());
        hasher.update([0u8]);
        hasher.update(format!("{submitted_at_ms}").as_bytes());
        hasher.update([0u8]);
        hasher.update(payload.as_bytes());
        let id = hex::encode(hasher.finalize());
        Self {
            id,
            actor,
            contract,
            action,
            payload,
            submitted_at_ms,
        }
    }

    /// Wire size: payload bytes plus the fixed envelope header.
    pub fn size_bytes(&self) -> usize {
        self.payload.len() + TX_HEADER_BYTES
    }
}

/// Stages of the two-stage confirmation protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfirmStage {
    First,
    Second,
}

/// Confirmation tallies for one block after a [`ChainState::confirm_block`]
/// call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfirmCounts {
    pub stage_one: usize,
    pub stage_two: usize,
}

/// A produced block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub height: u64,
    pub parent_id: String,
    pub producer: AccountName,
    pub timestamp_ms: u64,
    pub transactions: Vec<Transaction>,
    pub confirmations: BTreeSet<AccountName>,
    pub second_confirmations: BTreeSet<AccountName>,
    pub cpu_used_us: u64,
    pub id: String,
}

impl Block {
    /// Sum of transaction wire sizes, without the block header.
    pub fn payload_bytes(&self) -> usize {
        self.transactions.iter().map(Transaction::size_bytes).sum()
    }
}

/// One line of the canonical NDJSON chain log. Field order is fixed; the
/// block id is the SHA-256 of the line as rendered at production time, when
/// both confirmation counts are still zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockLogLine {
    pub height: u64,
    pub parent_id: String,
    pub producer: String,
    pub timestamp: u64,
    pub tx_ids: Vec<String>,
    pub confirmations: usize,
    pub second_confirmations: usize,
    pub cpu_used_us: u64,
}

impl BlockLogLine {
    pub fn from_block(block: &Block) -> Self {
        Self {
            height: block.height,
            parent_id: block.parent_id.clone(),
            producer: block.producer.to_string(),
            timestamp: block.timestamp_ms,
            tx_ids: block.transactions.iter().map(|t| t.id.clone()).collect(),
            confirmations: block.confirmations.len(),
            second_confirmations: block.second_confirmations.len(),
            cpu_used_us: block.cpu_used_us,
        }
    }

    /// Canonical rendering: compact JSON in declaration order.
    pub fn render(&self) -> String {
        serde_json::to_string(self).expect("log line serialization cannot fail")
    }

    /// The block id implied by this line: the hash of the production-time
    /// rendering, with confirmation counts zeroed.
    pub fn block_id(&self) -> String {
        let mut at_production = self.clone();
        at_production.confirmations = 0;
        at_production.second_confirmations = 0;
        let mut hasher = Sha256::new();
        hasher.update(at_production.render().as_bytes());
        hex::encode(hasher.finalize())
    }
}

/// A transaction waiting for inclusion, keyed by network arrival time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingTx {
    pub arrival_ms: f64,
    pub tx: Transaction,
}

/// Receipt returned when a transaction is accepted into the pending pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TxReceipt {
    pub tx_id: String,
    pub size_bytes: usize,
    pub arrival_ms: f64,
}

/// Where a transaction currently lives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum TxStatus {
    Pending { arrival_ms: f64 },
    Committed { height: u64, irreversible: bool },
}

/// Static chain parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub network: NetworkModel,
    pub cost: CostModel,
    pub max_txs_per_block: usize,
    pub max_payload_bytes: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            network: NetworkModel::default(),
            cost: CostModel::default(),
            max_txs_per_block: 10_000,
            max_payload_bytes: 1 << 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PendingSchedule {
    schedule: ProducerSchedule,
    proposed_at_height: u64,
}

/// The full replicated state: accounts, schedule, blocks, and the pending
/// transaction pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    config: ChainConfig,
    schedule: ProducerSchedule,
    pending_schedule: Option<PendingSchedule>,
    accounts: BTreeMap<AccountName, Account>,
    blocks: Vec<Block>,
    pending: Vec<PendingTx>,
    committed_index: BTreeMap<String, u64>,
    accepted_txs: u64,
    lib_height: u64,
    events: Vec<String>,
}

impl ChainState {
    /// Creates a chain with a genesis block at timestamp 0. Accounts are
    /// created for the system producer and for every scheduled producer.
    pub fn new(config: ChainConfig, producers: Vec<AccountName>) -> Result<Self, ChainError> {
        let schedule = ProducerSchedule::new(producers)?;
        let genesis_line = BlockLogLine {
            height: 0,
            parent_id: GENESIS_PARENT_ID.to_string(),
            producer: GENESIS_PRODUCER.to_string(),
            timestamp: 0,
            tx_ids: Vec::new(),
            confirmations: 0,
            second_confirmations: 0,
            cpu_used_us: 0,
        };
        let genesis = Block {
            height: 0,
            parent_id: GENESIS_PARENT_ID.to_string(),
            producer: AccountName::new(GENESIS_PRODUCER)?,
            timestamp_ms: 0,
            transactions: Vec::new(),
            confirmations: BTreeSet::new(),
            second_confirmations: BTreeSet::new(),
            cpu_used_us: 0,
            id: genesis_line.block_id(),
        };
        let mut state = Self {
            config,
            schedule,
            pending_schedule: None,
            accounts: BTreeMap::new(),
            blocks: vec![genesis],
            pending: Vec::new(),
            committed_index: BTreeMap::new(),
            accepted_txs: 0,
            lib_height: 0,
            events: Vec::new(),
        };
        state.create_account(AccountName::new(GENESIS_PRODUCER)?, 0)?;
        for producer in state.schedule.producers.clone() {
            state.create_account(producer, 0)?;
        }
        Ok(state)
    }

    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn schedule(&self) -> &ProducerSchedule {
        &self.schedule
    }

    pub fn head(&self) -> &Block {
        self.blocks.last().expect("genesis always exists")
    }

    pub fn head_height(&self) -> u64 {
        self.head().height
    }

    pub fn lib_height(&self) -> u64 {
        self.lib_height
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn pending(&self) -> &[PendingTx] {
        &self.pending
    }

    /// Total transactions ever accepted into the pool.
    pub fn accepted_txs(&self) -> u64 {
        self.accepted_txs
    }

    /// Ordered log of account, contract and schedule events.
    pub fn events(&self) -> &[String] {
        &self.events
    }

    /// Appends a line to the event log (used by the contract runtime).
    pub fn record_event(&mut self, line: String) {
        self.events.push(line);
    }

    /// Registers a new account.
    pub fn create_account(&mut self, name: AccountName, now_ms: u64) -> Result<(), ChainError> {
        if self.accounts.contains_key(&name) {
            return Err(ChainError::DuplicateAccount(name.to_string()));
        }
        self.events
            .push(format!("account {name} created at {now_ms} ms"));
        self.accounts.insert(
            name.clone(),
            Account {
                name,
                created_at_ms: now_ms,
            },
        );
        Ok(())
    }

    pub fn account(&self, name: &AccountName) -> Result<&Account, ChainError> {
        self.accounts.get(name).ok_or_else(|| ChainError::NotFound {
            kind: "account",
            key: name.to_string(),
        })
    }

    pub fn has_account(&self, name: &AccountName) -> bool {
        self.accounts.contains_key(name)
    }

    pub fn accounts(&self) -> impl Iterator<Item = &Account> {
        self.accounts.values()
    }

    /// Proposes a replacement producer schedule. It activates at the first
    /// round boundary after the proposing block becomes irreversible, so
    /// in-flight confirmations always tally against a stable producer set.
    pub fn propose_schedule(&mut self, producers: Vec<AccountName>) -> Result<u64, ChainError> {
        for producer in &producers {
            if !self.accounts.contains_key(producer) {
                return Err(ChainError::UnknownAccount(producer.to_string()));
            }
        }
        let schedule = ProducerSchedule::new(producers)?;
        let proposed_at_height = self.head_height();
        self.pending_schedule = Some(PendingSchedule {
            schedule,
            proposed_at_height,
        });
        Ok(proposed_at_height)
    }

    fn schedule_activation_due(&self, slot: u64) -> bool {
        match &self.pending_schedule {
            Some(pending) => {
                slot % self.schedule.len() as u64 == 0
                    && self.lib_height >= pending.proposed_at_height
            }
            None => false,
        }
    }

    fn maybe_activate_schedule(&mut self, slot: u64) {
        if !self.schedule_activation_due(slot) {
            return;
        }
        let mut schedule = self.pending_schedule.take().expect("just checked").schedule;
        schedule.round_index = slot / schedule.len() as u64;
        self.events.push(format!(
            "schedule of {} producers activated at slot {slot}",
            schedule.len()
        ));
        self.schedule = schedule;
    }

    /// The producer that will own the slot at `now_ms`, accounting for a
    /// pending schedule that activates on that slot.
    pub fn scheduled_producer(&self, now_ms: u64) -> &AccountName {
        let slot = now_ms / BLOCK_INTERVAL_MS;
        if self.schedule_activation_due(slot) {
            let pending = &self
                .pending_schedule
                .as_ref()
                .expect("activation implies a pending schedule")
                .schedule;
            return pending.producer_at(now_ms);
        }
        self.schedule.producer_at(now_ms)
    }

    /// Accepts a transaction into the pending pool. Its network arrival
    /// time is the submission time plus one delivery delay for its size.
    pub fn submit_transaction(&mut self, tx: Transaction) -> Result<TxReceipt, ChainError> {
        if !self.accounts.contains_key(&tx.actor) {
            return Err(ChainError::UnknownAccount(tx.actor.to_string()));
        }
        if tx.payload.is_empty() {
            return Err(ChainError::EmptyPayload);
        }
        let size = tx.size_bytes();
        if size > self.config.max_payload_bytes {
            return Err(ChainError::OversizedTransaction {
                size,
                max: self.config.max_payload_bytes,
            });
        }
        if self.committed_index.contains_key(&tx.id)
            || self.pending.iter().any(|p| p.tx.id == tx.id)
        {
            return Err(ChainError::DuplicateTransaction(tx.id.clone()));
        }
        let arrival_ms = tx.submitted_at_ms + self.config.network.delivery_time_ms(size);
        let entry = PendingTx {
            arrival_ms,
            tx,
        };
        let key = (entry.arrival_ms, entry.tx.id.clone());
        let pos = self
            .pending
            .partition_point(|p| (p.arrival_ms, p.tx.id.clone()) <= key);
        let receipt = TxReceipt {
            tx_id: entry.tx.id.clone(),
            size_bytes: size,
            arrival_ms,
        };
        self.pending.insert(pos, entry);
        self.accepted_txs += 1;
        Ok(receipt)
    }

    /// Produces the block for the slot at `now_ms`.
    ///
    /// The slot must be exactly one interval past the head and `producer`
    /// must be the scheduled owner. Pending transactions that have arrived
    /// by `now_ms` are drained in arrival order until the next one would
    /// exceed the 5000 us CPU budget or the transaction-count cap.
    pub fn produce_block(
        &mut self,
        now_ms: u64,
        producer: &AccountName,
    ) -> Result<&Block, ChainError> {
        let expected = self.head().timestamp_ms + BLOCK_INTERVAL_MS;
        if now_ms != expected {
            return Err(ChainError::NotSlotBoundary {
                now: now_ms,
                expected,
            });
        }
        let slot = now_ms / BLOCK_INTERVAL_MS;
        self.maybe_activate_schedule(slot);
        let scheduled = self.schedule.producer_at(now_ms);
        if scheduled != producer {
            return Err(ChainError::WrongProducer {
                slot,
                expected: scheduled.to_string(),
                got: producer.to_string(),
            });
        }

        let mut cpu_used_us = 0u64;
        let mut taken = 0usize;
        let now_f = now_ms as f64;
        while taken < self.pending.len().min(self.config.max_txs_per_block) {
            let candidate = &self.pending[taken];
            if candidate.arrival_ms > now_f {
                break;
            }
            let cost = self.config.cost.action_cost_us(candidate.tx.payload.len());
            if cpu_used_us + cost > BLOCK_CPU_BUDGET_US {
                break;
            }
            cpu_used_us += cost;
            taken += 1;
        }
        let transactions: Vec<Transaction> = self
            .pending
            .drain(..taken)
            .map(|p| p.tx)
            .collect();

        let parent_id = self.head().id.clone();
        let height = self.head_height() + 1;
        let line = BlockLogLine {
            height,
            parent_id: parent_id.clone(),
            producer: producer.to_string(),
            timestamp: now_ms,
            tx_ids: transactions.iter().map(|t| t.id.clone()).collect(),
            confirmations: 0,
            second_confirmations: 0,
            cpu_used_us,
        };
        let id = line.block_id();
        for tx in &transactions {
            self.committed_index.insert(tx.id.clone(), height);
        }
        self.blocks.push(Block {
            height,
            parent_id,
            producer: producer.clone(),
            timestamp_ms: now_ms,
            transactions,
            confirmations: BTreeSet::new(),
            second_confirmations: BTreeSet::new(),
            cpu_used_us,
            id,
        });
        Ok(self.head())
    }

    /// Records one producer's confirmation of a block at the given stage.
    ///
    /// Confirmations are idempotent per producer and stage. Stage two opens
    /// only after stage one has reached the supermajority. Returns the
    /// tallies after the insertion.
    pub fn confirm_block(
        &mut self,
        height: u64,
        producer: &AccountName,
        stage: ConfirmStage,
    ) -> Result<ConfirmCounts, ChainError> {
        if height == 0 || height > self.head_height() {
            return Err(ChainError::NotFound {
                kind: "block",
                key: height.to_string(),
            });
        }
        if self.schedule.position_of(producer).is_none() {
            return Err(ChainError::UnknownProducer(producer.to_string()));
        }
        let needed = self.schedule.supermajority();
        let block = &mut self.blocks[height as usize];
        match stage {
            ConfirmStage::First => {
                block.confirmations.insert(producer.clone());
            }
            ConfirmStage::Second => {
                if block.confirmations.len() < needed {
                    return Err(ChainError::PrematureStageTwo {
                        height,
                        have: block.confirmations.len(),
                        needed,
                    });
                }
                block.second_confirmations.insert(producer.clone());
            }
        }
        Ok(ConfirmCounts {
            stage_one: block.confirmations.len(),
            stage_two: block.second_confirmations.len(),
        })
    }

    /// Advances the last irreversible block over every consecutive block
    /// whose two confirmation stages have both reached the supermajority.
    /// Returns the (monotone) LIB height.
    pub fn advance_lib(&mut self) -> u64 {
        let needed = self.schedule.supermajority();
        let mut lib = self.lib_height;
        while lib < self.head_height() {
            let block = &self.blocks[(lib + 1) as usize];
            if block.confirmations.len() >= needed && block.second_confirmations.len() >= needed {
                lib += 1;
            } else {
                break;
            }
        }
        self.lib_height = lib;
        lib
    }

    pub fn block(&self, height: u64) -> Result<&Block, ChainError> {
        self.blocks
            .get(height as usize)
            .ok_or_else(|| ChainError::NotFound {
                kind: "block",
                key: height.to_string(),
            })
    }

    pub fn block_by_id(&self, id: &str) -> Result<&Block, ChainError> {
        self.blocks
            .iter()
            .find(|b| b.id == id)
            .ok_or_else(|| ChainError::NotFound {
                kind: "block",
                key: id.to_string(),
            })
    }

    /// Locates a transaction in a committed block or the pending pool.
    pub fn transaction(&self, id: &str) -> Result<(&Transaction, TxStatus), ChainError> {
        if let Some(&height) = self.committed_index.get(id) {
            let tx = self.blocks[height as usize]
                .transactions
                .iter()
                .find(|t| t.id == id)
                .expect("committed index points to the containing block");
            return Ok((
                tx,
                TxStatus::Committed {
                    height,
                    irreversible: height <= self.lib_height,
                },
            ));
        }
        if let Some(p) = self.pending.iter().find(|p| p.tx.id == id) {
            return Ok((
                &p.tx,
                TxStatus::Pending {
                    arrival_ms: p.arrival_ms,
                },
            ));
        }
        Err(ChainError::NotFound {
            kind: "transaction",
            key: id.to_string(),
        })
    }

    /// Count of transactions in irreversible blocks.
    pub fn confirmed_tx_count(&self) -> u64 {
        self.blocks[..=self.lib_height as usize]
            .iter()
            .map(|b| b.transactions.len() as u64)
            .sum()
    }

    /// Count of transactions in all produced blocks.
    pub fn committed_tx_count(&self) -> u64 {
        self.committed_index.len() as u64
    }

    /// Accepted transactions are never lost: every one is either committed
    /// to a block or still pending.
    pub fn conservation_holds(&self) -> bool {
        self.committed_tx_count() + self.pending.len() as u64 == self.accepted_txs
    }

    /// Writes the canonical NDJSON chain log, one line per block from
    /// genesis to head.
    pub fn write_chain_log<W: Write>(&self, mut out: W) -> Result<(), ChainError> {
        for block in &self.blocks {
            let line = BlockLogLine::from_block(block);
            out.write_all(line.render().as_bytes())?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Reads a canonical chain log, verifying hash links, contiguous heights
/// and the 500 ms cadence.
pub fn read_chain_log<R: BufRead>(input: R) -> Result<Vec<BlockLogLine>, ChainError> {
    let mut lines = Vec::new();
    let mut parent_id = GENESIS_PARENT_ID.to_string();
    for (idx, raw) in input.lines().enumerate() {
        let raw = raw?;
        if raw.trim().is_empty() {
            continue;
        }
        let line: BlockLogLine =
            serde_json::from_str(&raw).map_err(|e| ChainError::MalformedLog {
                line: idx + 1,
                detail: e.to_string(),
            })?;
        if line.height != lines.len() as u64 {
            return Err(ChainError::MalformedLog {
                line: idx + 1,
                detail: format!("expected height {}, got {}", lines.len(), line.height),
            });
        }
        if line.timestamp != line.height * BLOCK_INTERVAL_MS {
            return Err(ChainError::MalformedLog {
                line: idx + 1,
                detail: format!(
                    "block {} timestamp {} is off the {} ms cadence",
                    line.height, line.timestamp, BLOCK_INTERVAL_MS
                ),
            });
        }
        if line.parent_id != parent_id {
            return Err(ChainError::MalformedLog {
                line: idx + 1,
                detail: format!(
                    "parent id {} does not match hash {} of the previous line",
                    line.parent_id, parent_id
                ),
            });
        }
        parent_id = line.block_id();
        lines.push(line);
    }
    if lines.is_empty() {
        return Err(ChainError::MalformedLog {
            line: 0,
            detail: "log has no genesis line".into(),
        });
    }
    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(raw: &[&str]) -> Vec<AccountName> {
        raw.iter().map(|n| AccountName::new(*n).unwrap()).collect()
    }

    fn test_chain(producers: &[&str]) -> ChainState {
        ChainState::new(ChainConfig::default(), names(producers)).unwrap()
    }

    fn flat_cost(cost_us: u64) -> CostModel {
        CostModel::new(cost_us, 0.0).unwrap()
    }

    /// Produce every slot up to and including `until_ms`, using whichever
    /// producer the schedule expects.
    fn produce_until(chain: &mut ChainState, until_ms: u64) {
        let mut now = chain.head().timestamp_ms + BLOCK_INTERVAL_MS;
        while now <= until_ms {
            let producer = chain.scheduled_producer(now).clone();
            chain.produce_block(now, &producer).unwrap();
            now += BLOCK_INTERVAL_MS;
        }
    }

    fn fully_confirm(chain: &mut ChainState, height: u64) {
        for producer in chain.schedule().producers().to_vec() {
            chain
                .confirm_block(height, &producer, ConfirmStage::First)
                .unwrap();
        }
        for producer in chain.schedule().producers().to_vec() {
            chain
                .confirm_block(height, &producer, ConfirmStage::Second)
                .unwrap();
        }
    }

    #[test]
    fn account_names_follow_the_charset_rules() {
        for ok in ["a", "eosio", "bp.a", "abc12345", "zz34.xx", "aaaaaaaaaaaa"] {
            assert!(AccountName::new(ok).is_ok(), "{ok} should be valid");
        }
        for bad in [
            "",
            "aaaaaaaaaaaaa",
            "Upper",
            "zero0",
            "six6",
            ".lead",
            "trail.",
            "under_score",
        ] {
            assert!(
                matches!(AccountName::new(bad), Err(ChainError::InvalidName(_))),
                "{bad} should be invalid"
            );
        }
    }

    #[test]
    fn supermajority_is_two_thirds_plus_one() {
        assert_eq!(supermajority(4), 3);
        assert_eq!(supermajority(5), 4);
        assert_eq!(supermajority(7), 5);
        assert_eq!(supermajority(10), 7);
        assert_eq!(supermajority(21), 15);
        assert_eq!(supermajority(50), 34);
    }

    #[test]
    fn delivery_time_adds_serialization_to_propagation() {
        let net = NetworkModel::default();
        assert!((net.delivery_time_ms(100) - 5.008).abs() < 1e-12);
        assert!((net.serialization_ms(0)).abs() < 1e-15);
        assert!(NetworkModel::new(-1.0, 1.0).is_err());
        assert!(NetworkModel::new(5.0, 0.0).is_err());
    }

    #[test]
    fn sixty_seconds_is_one_hundred_twenty_blocks() {
        let mut chain = test_chain(&["bpa", "bpb", "bpc", "bpd"]);
        produce_until(&mut chain, 60_000);
        assert_eq!(chain.head_height(), 120);
        assert_eq!(chain.head().timestamp_ms, 60_000);
    }

    #[test]
    fn production_requires_the_exact_slot_boundary() {
        let mut chain = test_chain(&["bpa", "bpb"]);
        let bpa = AccountName::new("bpa").unwrap();
        let bpb = AccountName::new("bpb").unwrap();
        // Slot 1 belongs to bpb ((500/500) mod 2 = 1).
        assert!(matches!(
            chain.produce_block(750, &bpb),
            Err(ChainError::NotSlotBoundary { expected: 500, .. })
        ));
        assert!(matches!(
            chain.produce_block(1000, &bpa),
            Err(ChainError::NotSlotBoundary { expected: 500, .. })
        ));
        assert!(matches!(
            chain.produce_block(500, &bpa),
            Err(ChainError::WrongProducer { .. })
        ));
        let block = chain.produce_block(500, &bpb).unwrap();
        assert_eq!(block.height, 1);
        assert_eq!(block.timestamp_ms, 500);
        // Producing the same slot again is off the boundary.
        assert!(matches!(
            chain.produce_block(500, &bpb),
            Err(ChainError::NotSlotBoundary { expected: 1000, .. })
        ));
    }

    #[test]
    fn timestamps_step_by_exactly_one_interval() {
        let mut chain = test_chain(&["bpa", "bpb", "bpc"]);
        produce_until(&mut chain, 5_000);
        for pair in chain.blocks().windows(2) {
            assert_eq!(pair[1].timestamp_ms, pair[0].timestamp_ms + 500);
            assert_eq!(pair[1].parent_id, pair[0].id);
        }
    }

    #[test]
    fn budget_drain_takes_five_hundred_ten_microsecond_actions() {
        let config = ChainConfig {
            cost: flat_cost(10),
            ..ChainConfig::default()
        };
        let mut chain = ChainState::new(config, names(&["bpa", "bpb"])).unwrap();
        let actor = AccountName::new("bpa").unwrap();
        for i in 0..1000 {
            let tx = Transaction::new(
                actor.clone(),
                "datalog",
                "store",
                format!("{{\"i\":{i}}}"),
                0.0,
            );
            chain.submit_transaction(tx).unwrap();
        }
        let bpb = AccountName::new("bpb").unwrap();
        let block = chain.produce_block(500, &bpb).unwrap();
        assert_eq!(block.transactions.len(), 500);
        assert_eq!(block.cpu_used_us, 5_000);
        let bpa = AccountName::new("bpa").unwrap();
        let block = chain.produce_block(1000, &bpa).unwrap();
        assert_eq!(block.transactions.len(), 500);
        assert_eq!(chain.pending_len(), 0);
        assert!(chain.conservation_holds());
    }

    #[test]
    fn transactions_wait_for_their_network_arrival() {
        let mut chain = test_chain(&["bpa", "bpb"]);
        let actor = AccountName::new("bpa").unwrap();
        // Submitted at 400 ms; arrival is 400 + 5.0digit ms > 400.
        let tx = Transaction::new(actor, "datalog", "store", "{\"i\":1}", 498.0);
        let receipt = chain.submit_transaction(tx).unwrap();
        assert!(receipt.arrival_ms > 500.0);
        let bpb = AccountName::new("bpb").unwrap();
        let block = chain.produce_block(500, &bpb).unwrap();
        assert!(block.transactions.is_empty());
        let bpa = AccountName::new("bpa").unwrap();
        let block = chain.produce_block(1000, &bpa).unwrap();
        assert_eq!(block.transactions.len(), 1);
    }

    #[test]
    fn drain_preserves_arrival_order() {
        let mut chain = test_chain(&["bpa", "bpb"]);
        let actor = AccountName::new("bpa").unwrap();
        // Submit in reverse arrival order.
        for i in (0..5).rev() {
            let tx = Transaction::new(
                actor.clone(),
                "datalog",
                "store",
                format!("{{\"i\":{i}}}"),
                i as f64 * 10.0,
            );
            chain.submit_transaction(tx).unwrap();
        }
        let bpb = AccountName::new("bpb").unwrap();
        let block = chain.produce_block(500, &bpb).unwrap();
        let times: Vec<f64> = block
            .transactions
            .iter()
            .map(|t| t.submitted_at_ms)
            .collect();
        assert_eq!(times, vec![0.0, 10.0, 20.0, 30.0, 40.0]);
    }

    #[test]
    fn submission_validates_actor_payload_and_size() {
        let mut chain = test_chain(&["bpa", "bpb"]);
        let ghost = AccountName::new("ghost").unwrap();
        let tx = Transaction::new(ghost, "datalog", "store", "{}", 0.0);
        assert!(matches!(
            chain.submit_transaction(tx),
            Err(ChainError::UnknownAccount(_))
        ));
        let actor = AccountName::new("bpa").unwrap();
        let tx = Transaction::new(actor.clone(), "datalog", "store", "", 0.0);
        assert!(matches!(
            chain.submit_transaction(tx),
            Err(ChainError::EmptyPayload)
        ));
        let huge = "x".repeat(2 << 20);
        let tx = Transaction::new(actor.clone(), "datalog", "store", huge, 0.0);
        assert!(matches!(
            chain.submit_transaction(tx),
            Err(ChainError::OversizedTransaction { .. })
        ));
        let tx = Transaction::new(actor, "datalog", "store", "{\"i\":1}", 0.0);
        let dup = tx.clone();
        chain.submit_transaction(tx).unwrap();
        assert!(matches!(
            chain.submit_transaction(dup),
            Err(ChainError::DuplicateTransaction(_))
        ));
    }

    #[test]
    fn lib_advances_over_fully_confirmed_prefix() {
        let mut chain = test_chain(&["bpa", "bpb", "bpc", "bpd"]);
        produce_until(&mut chain, 3_000);
        assert_eq!(chain.head_height(), 6);
        for height in 1..=5 {
            fully_confirm(&mut chain, height);
        }
        // Block 6 only reaches stage one.
        for producer in chain.schedule().producers().to_vec() {
            chain
                .confirm_block(6, &producer, ConfirmStage::First)
                .unwrap();
        }
        assert_eq!(chain.advance_lib(), 5);
        assert_eq!(chain.lib_height(), 5);
        assert!(matches!(
            chain.transaction("missing"),
            Err(ChainError::NotFound { kind: "transaction", .. })
        ));
    }

    #[test]
    fn lib_needs_exactly_the_supermajority_per_stage() {
        let producers = ["bpa", "bpb", "bpc", "bpd"];
        let mut chain = test_chain(&producers);
        let names = names(&producers);
        produce_until(&mut chain, 500);
        let needed = chain.schedule().supermajority();
        assert_eq!(needed, 3);

        // One short of the stage-one supermajority: stage two refuses.
        for name in &names[..needed - 1] {
            chain.confirm_block(1, name, ConfirmStage::First).unwrap();
        }
        assert!(matches!(
            chain.confirm_block(1, &names[0], ConfirmStage::Second),
            Err(ChainError::PrematureStageTwo { have: 2, needed: 3, .. })
        ));
        assert_eq!(chain.advance_lib(), 0);

        // Reaching stage one opens stage two, but LIB still waits.
        chain
            .confirm_block(1, &names[needed - 1], ConfirmStage::First)
            .unwrap();
        for name in &names[..needed - 1] {
            chain.confirm_block(1, name, ConfirmStage::Second).unwrap();
        }
        assert_eq!(chain.advance_lib(), 0, "one short of stage two must not advance");
        chain
            .confirm_block(1, &names[needed - 1], ConfirmStage::Second)
            .unwrap();
        assert_eq!(chain.advance_lib(), 1);
    }

    #[test]
    fn confirmations_are_idempotent_and_gated() {
        let mut chain = test_chain(&["bpa", "bpb", "bpc"]);
        produce_until(&mut chain, 500);
        let bpa = AccountName::new("bpa").unwrap();
        let counts = chain.confirm_block(1, &bpa, ConfirmStage::First).unwrap();
        assert_eq!(counts.stage_one, 1);
        let counts = chain.confirm_block(1, &bpa, ConfirmStage::First).unwrap();
        assert_eq!(counts.stage_one, 1, "repeat confirmation must not double count");
        let outsider = AccountName::new("other").unwrap();
        chain.create_account(outsider.clone(), 0).unwrap();
        assert!(matches!(
            chain.confirm_block(1, &outsider, ConfirmStage::First),
            Err(ChainError::UnknownProducer(_))
        ));
        assert!(matches!(
            chain.confirm_block(7, &bpa, ConfirmStage::First),
            Err(ChainError::NotFound { .. })
        ));
        assert!(matches!(
            chain.confirm_block(0, &bpa, ConfirmStage::First),
            Err(ChainError::NotFound { .. })
        ));
    }

    #[test]
    fn schedule_changes_wait_for_irreversibility_and_round_boundaries() {
        let mut chain = test_chain(&["bpa", "bpb", "bpc"]);
        for name in ["bpx", "bpy", "bpz"] {
            chain.create_account(AccountName::new(name).unwrap(), 0).unwrap();
        }
        produce_until(&mut chain, 1_000);
        chain
            .propose_schedule(names(&["bpx", "bpy", "bpz"]))
            .unwrap();
        // Not irreversible yet: the old schedule keeps producing past the
        // next round boundary (slot 3).
        produce_until(&mut chain, 2_000);
        assert_eq!(chain.schedule().producers()[0].as_str(), "bpa");
        for height in 1..=4 {
            fully_confirm(&mut chain, height);
        }
        chain.advance_lib();
        // Now irreversible; the swap happens at the next slot divisible by
        // the schedule length (slot 6, timestamp 3000).
        produce_until(&mut chain, 2_500);
        assert_eq!(chain.schedule().producers()[0].as_str(), "bpa");
        produce_until(&mut chain, 3_000);
        assert_eq!(chain.schedule().producers()[0].as_str(), "bpx");
        assert_eq!(chain.schedule().round_index(), 2);
        assert_eq!(chain.head().producer.as_str(), "bpx");
    }

    #[test]
    fn chain_log_round_trips_and_verifies_hash_links() {
        let config = ChainConfig {
            cost: flat_cost(25),
            ..ChainConfig::default()
        };
        let mut chain = ChainState::new(config, names(&["bpa", "bpb"])).unwrap();
        let actor = AccountName::new("bpa").unwrap();
        for i in 0..30 {
            let tx = Transaction::new(
                actor.clone(),
                "datalog",
                "store",
                format!("{{\"i\":{i}}}"),
                i as f64,
            );
            chain.submit_transaction(tx).unwrap();
        }
        produce_until(&mut chain, 2_000);
        fully_confirm(&mut chain, 1);
        chain.advance_lib();

        let mut log = Vec::new();
        chain.write_chain_log(&mut log).unwrap();
        let lines = read_chain_log(&log[..]).unwrap();
        assert_eq!(lines.len(), chain.blocks().len());
        assert_eq!(lines[0].parent_id, GENESIS_PARENT_ID);
        for (line, block) in lines.iter().zip(chain.blocks()) {
            assert_eq!(line.block_id(), block.id);
            assert_eq!(line.tx_ids.len(), block.transactions.len());
        }
        // The exported line carries final confirmation counts.
        assert_eq!(lines[1].confirmations, 2);
        assert_eq!(lines[1].second_confirmations, 2);

        // Field order in the rendered line is canonical.
        let rendered = lines[0].render();
        let keys = [
            "\"height\"",
            "\"parent_id\"",
            "\"producer\"",
            "\"timestamp\"",
            "\"tx_ids\"",
            "\"confirmations\"",
            "\"second_confirmations\"",
            "\"cpu_used_us\"",
        ];
        let mut last = 0;
        for key in keys {
            let pos = rendered.find(key).expect("key present");
            assert!(pos > last || key == "\"height\"", "{key} out of order");
            last = pos;
        }

        // Tampering with a line breaks the hash link from its successor.
        let text = String::from_utf8(log).unwrap();
        let mut raw_lines: Vec<String> = text.lines().map(String::from).collect();
        let mut line1: BlockLogLine = serde_json::from_str(&raw_lines[1]).unwrap();
        assert!(!line1.tx_ids.is_empty(), "tamper target needs transactions");
        line1.tx_ids.remove(0);
        raw_lines[1] = line1.render();
        let tampered = raw_lines.join("\n") + "\n";
        assert!(matches!(
            read_chain_log(tampered.as_bytes()),
            Err(ChainError::MalformedLog { .. })
        ));
    }

    #[test]
    fn transaction_ids_are_deterministic_and_distinct() {
        let actor = AccountName::new("bpa").unwrap();
        let a = Transaction::new(actor.clone(), "c", "act", "{\"i\":1}", 1.0);
        let b = Transaction::new(actor.clone(), "c", "act", "{\"i\":1}", 1.0);
        assert_eq!(a.id, b.id);
        let c = Transaction::new(actor.clone(), "c", "act", "{\"i\":2}", 1.0);
        assert_ne!(a.id, c.id);
        let d = Transaction::new(actor, "c", "act", "{\"i\":1}", 2.0);
        assert_ne!(a.id, d.id);
        assert_eq!(a.size_bytes(), 7 + TX_HEADER_BYTES);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn conservation_and_monotone_lib_hold_under_random_traffic(
            seed in 0u64..500,
            submissions in 0usize..40,
            slots in 1u64..20,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let producers = ["bpa", "bpb", "bpc", "bpd", "bpe"];
            let mut chain = test_chain(&producers);
            let prod_names = names(&producers);
            let actor = AccountName::new("bpa").unwrap();
            for i in 0..submissions {
                let at = rng.gen_range(0.0..(slots as f64 * 500.0));
                let tx = Transaction::new(
                    actor.clone(),
                    "datalog",
                    "store",
                    format!("{{\"i\":{i}}}"),
                    at,
                );
                chain.submit_transaction(tx).unwrap();
            }
            let mut last_lib = 0;
            for slot in 1..=slots {
                let now = slot * 500;
                let producer = chain.schedule().producer_at(now).clone();
                chain.produce_block(now, &producer).unwrap();
                prop_assert!(chain.conservation_holds());
                // Randomly push some blocks through both stages.
                if rng.gen_bool(0.6) {
                    let height = rng.gen_range(1..=chain.head_height());
                    for name in &prod_names {
                        chain.confirm_block(height, name, ConfirmStage::First).unwrap();
                    }
                    for name in &prod_names {
                        chain.confirm_block(height, name, ConfirmStage::Second).unwrap();
                    }
                }
                let lib = chain.advance_lib();
                prop_assert!(lib >= last_lib, "LIB went backwards");
                prop_assert!(lib <= chain.head_height(), "LIB passed the head");
                last_lib = lib;
            }
        }
    }
}
