//! Smart-contract runtime: named contracts, an authenticated `addnovelty`
//! action, and multi-index tables over novelty records.
//!
//! Contracts are named `<id>_<timestamp>` and own one table keyed by the
//! packed primary key `(epoch << 16) | sensor_index`, so rows iterate in
//! `(epoch, sensor)` order and one epoch maps to one contiguous key range.
//! Actions execute immediately against the table and submit a transaction
//! carrying the canonical JSON payload to the chain, where block producers
//! charge its CPU cost against the 5000 us per-block budget.
//!
//! A normalized novelty index within `eps` of 1 makes the action emit the
//! event string `Unhealthy bridge detected!`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{AccountName, ChainError, ChainState, Transaction, TxReceipt};
use crate::shm::{classify, HealthState, NoveltyRecord};

/// Event string emitted when an action stores an unhealthy record.
pub const UNHEALTHY_EVENT: &str = "Unhealthy bridge detected!";

/// Bits of the packed primary key reserved for the sensor index.
pub const SENSOR_INDEX_BITS: u32 = 16;

/// Largest epoch a packed key can carry.
pub const MAX_EPOCH: u64 = (1 << (64 - SENSOR_INDEX_BITS)) - 1;

/// Largest sensor index a packed key can carry.
pub const MAX_SENSOR_INDEX: u64 = (1 << SENSOR_INDEX_BITS) - 1;

/// Errors produced by the contract runtime.
#[derive(Debug, Error)]
pub enum ContractError {
    #[error("malformed contract name {0:?}: expected <id>_<timestamp>")]
    MalformedName(String),
    #[error("contract {0} already exists")]
    DuplicateContract(String),
    #[error("unknown contract {0}")]
    UnknownContract(String),
    #[error("account {actor} is not authorized on contract {contract}")]
    AuthFailure { contract: String, actor: String },
    #[error("row with key {key} already exists in contract {contract}")]
    DuplicateKey { contract: String, key: u64 },
    #[error("no row with key {key} in contract {contract}")]
    RowNotFound { contract: String, key: u64 },
    #[error("stale row reference: key {key} in contract {contract} no longer points at the same row")]
    StaleReference { contract: String, key: u64 },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("invalid cost model: {0}")]
    InvalidCost(String),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// Per-action CPU pricing: a fixed base plus a per-payload-byte rate,
/// rounded up to whole microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    base_cost_us: u64,
    per_byte_cost_us: f64,
}

impl CostModel {
    pub fn new(base_cost_us: u64, per_byte_cost_us: f64) -> Result<Self, ContractError> {
        if !per_byte_cost_us.is_finite() || per_byte_cost_us < 0.0 {
            return Err(ContractError::InvalidCost(format!(
                "per-byte cost must be finite and non-negative, got {per_byte_cost_us}"
            )));
        }
        Ok(Self {
            base_cost_us,
            per_byte_cost_us,
        })
    }

    pub fn base_cost_us(&self) -> u64 {
        self.base_cost_us
    }

    pub fn per_byte_cost_us(&self) -> f64 {
        self.per_byte_cost_us
    }

    /// CPU charge for an action with a payload of `payload_bytes`.
    pub fn action_cost_us(&self, payload_bytes: usize) -> u64 {
        self.base_cost_us + (self.per_byte_cost_us * payload_bytes as f64).ceil() as u64
    }
}

impl Default for CostModel {
    /// 100 us per action plus 0.1 us per payload byte.
    fn default() -> Self {
        Self {
            base_cost_us: 100,
            per_byte_cost_us: 0.1,
        }
    }
}

/// Packs an epoch and sensor index into the table's primary key.
pub fn pack_key(epoch: u64, sensor_index: u64) -> Result<u64, ContractError> {
    if epoch > MAX_EPOCH {
        return Err(ContractError::InvalidRecord(format!(
            "epoch {epoch} exceeds the packable maximum {MAX_EPOCH}"
        )));
    }
    if sensor_index > MAX_SENSOR_INDEX {
        return Err(ContractError::InvalidRecord(format!(
            "sensor index {sensor_index} exceeds the packable maximum {MAX_SENSOR_INDEX}"
        )));
    }
    Ok((epoch << SENSOR_INDEX_BITS) | sensor_index)
}

/// Splits a packed primary key back into `(epoch, sensor_index)`.
pub fn unpack_key(key: u64) -> (u64, u64) {
    (key >> SENSOR_INDEX_BITS, key & MAX_SENSOR_INDEX)
}

/// Extracts the sensor index from a group identifier's trailing decimal
/// digits: `s007` maps to 7.
pub fn sensor_index_of(sensor_group: &str) -> Result<u64, ContractError> {
    let digits: String = sensor_group
        .chars()
        .rev()
        .take_while(|c| c.is_ascii_digit())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    if digits.is_empty() {
        return Err(ContractError::InvalidRecord(format!(
            "sensor group {sensor_group:?} has no trailing index digits"
        )));
    }
    let index: u64 = digits.parse().map_err(|_| {
        ContractError::InvalidRecord(format!(
            "sensor group {sensor_group:?} index digits overflow"
        ))
    })?;
    if index > MAX_SENSOR_INDEX {
        return Err(ContractError::InvalidRecord(format!(
            "sensor index {index} exceeds the packable maximum {MAX_SENSOR_INDEX}"
        )));
    }
    Ok(index)
}

/// Validates a `<id>_<timestamp>` contract name: a non-empty id, one final
/// underscore, and a non-empty all-digit timestamp.
pub fn validate_contract_name(name: &str) -> Result<(), ContractError> {
    let Some((id, timestamp)) = name.rsplit_once('_') else {
        return Err(ContractError::MalformedName(name.to_string()));
    };
    if id.is_empty() || timestamp.is_empty() || !timestamp.bytes().all(|b| b.is_ascii_digit()) {
        return Err(ContractError::MalformedName(name.to_string()));
    }
    Ok(())
}

/// Canonical wire form of an `addnovelty` action payload: compact JSON with
/// exactly these fields in exactly this order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionPayload {
    pub bridge_id: String,
    pub sensor_group: String,
    pub epoch: u64,
    pub ni_raw: f64,
    pub ni_norm: f64,
    pub state: HealthState,
    pub eps: f64,
}

impl ActionPayload {
    pub fn from_record(record: &NoveltyRecord) -> Self {
        Self {
            bridge_id: record.bridge_id.clone(),
            sensor_group: record.sensor_group.clone(),
            epoch: record.epoch,
            ni_raw: record.ni_raw,
            ni_norm: record.ni_norm,
            state: record.state,
            eps: record.eps,
        }
    }

    /// Renders the canonical UTF-8 payload with no insignificant
    /// whitespace.
    pub fn render(&self) -> String {
        serde_json::to_string(self).expect("payload serialization cannot fail")
    }
}

/// One stored table row. The `uid` changes when a key is erased and
/// re-added, which is how stale references are detected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub key: u64,
    pub uid: u64,
    pub bridge_id: String,
    pub sensor_group: String,
    pub epoch: u64,
    pub sensor_index: u64,
    pub ni_raw: f64,
    pub ni_norm: f64,
    pub state: HealthState,
    pub eps: f64,
}

/// A handle returned by [`ContractRuntime::find`]; passing it to
/// [`ContractRuntime::erase`] removes exactly the row it was taken from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowRef {
    pub contract: String,
    pub key: u64,
    pub uid: u64,
}

/// A deployed contract: its authorization set and its table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contract {
    pub name: String,
    pub owner: AccountName,
    pub deployed_at_ms: u64,
    pub authorized: BTreeSet<AccountName>,
    table: BTreeMap<u64, TableRow>,
    next_uid: u64,
}

impl Contract {
    /// Number of rows in the table.
    pub fn table_len(&self) -> usize {
        self.table.len()
    }

    /// Rows in primary-key order.
    pub fn rows(&self) -> impl Iterator<Item = &TableRow> {
        self.table.values()
    }

    /// Rows recorded for one epoch, in sensor order.
    pub fn rows_in_epoch(&self, epoch: u64) -> impl Iterator<Item = &TableRow> {
        let start = epoch << SENSOR_INDEX_BITS;
        let end = start | MAX_SENSOR_INDEX;
        self.table.range(start..=end).map(|(_, row)| row)
    }

    pub fn get_row(&self, key: u64) -> Option<&TableRow> {
        self.table.get(&key)
    }
}

/// Result of a successful `addnovelty` action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionReceipt {
    pub tx: TxReceipt,
    pub key: u64,
    pub row_uid: u64,
    pub cost_us: u64,
    pub events: Vec<String>,
}

/// Registry of deployed contracts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContractRuntime {
    contracts: BTreeMap<String, Contract>,
}

impl ContractRuntime {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contracts(&self) -> impl Iterator<Item = &Contract> {
        self.contracts.values()
    }

    pub fn contract(&self, name: &str) -> Result<&Contract, ContractError> {
        self.contracts
            .get(name)
            .ok_or_else(|| ContractError::UnknownContract(name.to_string()))
    }

    /// Deploys a contract named `<base_id>_<now_ms>` owned by `owner`,
    /// recording the deployment as a transaction on the chain. Contract
    /// names are globally unique.
    pub fn deploy(
        &mut self,
        chain: &mut ChainState,
        owner: &AccountName,
        base_id: &str,
        now_ms: u64,
    ) -> Result<String, ContractError> {
        let name = format!("{base_id}_{now_ms}");
        validate_contract_name(&name)?;
        chain.account(owner)?;
        if self.contracts.contains_key(&name) {
            return Err(ContractError::DuplicateContract(name));
        }
        let payload = serde_json::json!({ "contract": name, "owner": owner.as_str() });
        let tx = Transaction::new(
            owner.clone(),
            name.clone(),
            "deploy",
            payload.to_string(),
            now_ms as f64,
        );
        chain.submit_transaction(tx)?;
        chain.record_event(format!("contract {name} deployed by {owner} at {now_ms} ms"));
        self.contracts.insert(
            name.clone(),
            Contract {
                name: name.clone(),
                owner: owner.clone(),
                deployed_at_ms: now_ms,
                authorized: BTreeSet::from([owner.clone()]),
                table: BTreeMap::new(),
                next_uid: 0,
            },
        );
        Ok(name)
    }

    /// Grants `grantee` the right to push actions. Only the owner may
    /// grant.
    pub fn authorize(
        &mut self,
        chain: &ChainState,
        contract: &str,
        owner: &AccountName,
        grantee: &AccountName,
    ) -> Result<(), ContractError> {
        chain.account(grantee)?;
        let entry = self
            .contracts
            .get_mut(contract)
            .ok_or_else(|| ContractError::UnknownContract(contract.to_string()))?;
        if &entry.owner != owner {
            return Err(ContractError::AuthFailure {
                contract: contract.to_string(),
                actor: owner.to_string(),
            });
        }
        entry.authorized.insert(grantee.clone());
        Ok(())
    }

    /// Executes `addnovelty`: authenticates the actor, derives the packed
    /// primary key, inserts the row, and submits the canonical payload as a
    /// transaction at `submitted_at_ms`.
    ///
    /// The table is only mutated if every check and the chain submission
    /// succeed. Storing a record whose state is unhealthy emits
    /// [`UNHEALTHY_EVENT`].
    pub fn push_addnovelty(
        &mut self,
        chain: &mut ChainState,
        contract: &str,
        actor: &AccountName,
        record: &NoveltyRecord,
        submitted_at_ms: f64,
    ) -> Result<ActionReceipt, ContractError> {
        let entry = self
            .contracts
            .get_mut(contract)
            .ok_or_else(|| ContractError::UnknownContract(contract.to_string()))?;
        if !entry.authorized.contains(actor) {
            return Err(ContractError::AuthFailure {
                contract: contract.to_string(),
                actor: actor.to_string(),
            });
        }
        let expected_state = classify(record.ni_norm, record.eps)
            .map_err(|e| ContractError::InvalidRecord(e.to_string()))?;
        if expected_state != record.state {
            return Err(ContractError::InvalidRecord(format!(
                "state {} disagrees with the threshold rule for index {} and eps {}",
                record.state, record.ni_norm, record.eps
            )));
        }
        if !record.ni_raw.is_finite() || record.ni_raw < 0.0 {
            return Err(ContractError::InvalidRecord(format!(
                "raw index must be finite and non-negative, got {}",
                record.ni_raw
            )));
        }
        let sensor_index = sensor_index_of(&record.sensor_group)?;
        let key = pack_key(record.epoch, sensor_index)?;
        if entry.table.contains_key(&key) {
            return Err(ContractError::DuplicateKey {
                contract: contract.to_string(),
                key,
            });
        }

        let payload = ActionPayload::from_record(record).render();
        let cost_us = chain.config().cost.action_cost_us(payload.len());
        let tx = Transaction::new(
            actor.clone(),
            contract.to_string(),
            "addnovelty",
            payload,
            submitted_at_ms,
        );
        let tx_receipt = chain.submit_transaction(tx)?;

        let uid = entry.next_uid;
        entry.next_uid += 1;
        entry.table.insert(
            key,
            TableRow {
                key,
                uid,
                bridge_id: record.bridge_id.clone(),
                sensor_group: record.sensor_group.clone(),
                epoch: record.epoch,
                sensor_index,
                ni_raw: record.ni_raw,
                ni_norm: record.ni_norm,
                state: record.state,
                eps: record.eps,
            },
        );
        let mut events = Vec::new();
        if record.state == HealthState::Unhealthy {
            events.push(UNHEALTHY_EVENT.to_string());
            chain.record_event(UNHEALTHY_EVENT.to_string());
        }
        Ok(ActionReceipt {
            tx: tx_receipt,
            key,
            row_uid: uid,
            cost_us,
            events,
        })
    }

    /// Looks up the row with the given packed key.
    pub fn find(&self, contract: &str, key: u64) -> Result<RowRef, ContractError> {
        let entry = self.contract(contract)?;
        let row = entry.get_row(key).ok_or(ContractError::RowNotFound {
            contract: contract.to_string(),
            key,
        })?;
        Ok(RowRef {
            contract: contract.to_string(),
            key,
            uid: row.uid,
        })
    }

    /// Erases the row a [`RowRef`] points at and returns it. A reference
    /// whose row was already erased (or erased and re-added) is stale.
    pub fn erase(&mut self, row_ref: &RowRef) -> Result<TableRow, ContractError> {
        let entry = self
            .contracts
            .get_mut(&row_ref.contract)
            .ok_or_else(|| ContractError::UnknownContract(row_ref.contract.clone()))?;
        match entry.table.get(&row_ref.key) {
            Some(row) if row.uid == row_ref.uid => Ok(entry
                .table
                .remove(&row_ref.key)
                .expect("row existence just checked")),
            _ => Err(ContractError::StaleReference {
                contract: row_ref.contract.clone(),
                key: row_ref.key,
            }),
        }
    }
}
