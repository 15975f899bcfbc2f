//! Discrete-event driver for the chain state machine.
//!
//! The simulator owns a virtual millisecond clock. Block production fires
//! on every 500 ms slot boundary; confirmation traffic flows through an
//! event queue whose delivery times come from the [`NetworkModel`]:
//!
//! * a produced block fans out to the other producers over a serialized
//!   unicast link, so the `k`-th peer receives it after `k` block
//!   serializations plus one propagation delay;
//! * each receiving producer sends its stage-one confirmation one hop
//!   later;
//! * once stage one reaches the supermajority, every producer observes that
//!   (one hop) and answers with its stage-two confirmation, staggered by
//!   its send rank.
//!
//! Every delay is a pure function of sizes and the schedule, so two runs
//! with the same inputs replay the same event sequence tick for tick.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use super::{
    AccountName, Block, ChainError, ChainState, ConfirmStage, Transaction, TxReceipt,
    BLOCK_INTERVAL_MS,
};

/// Wire overhead of a block beyond its transactions.
pub const BLOCK_HEADER_BYTES: usize = 128;

/// Size of one confirmation message.
pub const CONFIRM_MSG_BYTES: usize = 64;

/// Virtual time in milliseconds with a total order, usable as an event key.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimTime(pub f64);

impl Eq for SimTime {}

impl PartialOrd for SimTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum EventKind {
    /// A peer finished receiving a block.
    Receive { height: u64, peer: AccountName },
    /// A stage-one confirmation is tallied.
    ConfirmOne { height: u64, peer: AccountName },
    /// A stage-two confirmation is tallied.
    ConfirmTwo { height: u64, peer: AccountName },
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Event {
    at: SimTime,
    seq: u64,
    kind: EventKind,
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; reverse so the earliest event wins.
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

/// Event-driven chain runner. See the module docs for the timing model.
#[derive(Debug)]
pub struct Simulator {
    chain: ChainState,
    events: BinaryHeap<Event>,
    seq: u64,
    next_slot_ms: u64,
    stage_two_opened: BTreeSet<u64>,
    finalized_at: BTreeMap<u64, f64>,
}

impl Simulator {
    pub fn new(chain: ChainState) -> Self {
        let next_slot_ms = chain.head().timestamp_ms + BLOCK_INTERVAL_MS;
        Self {
            chain,
            events: BinaryHeap::new(),
            seq: 0,
            next_slot_ms,
            stage_two_opened: BTreeSet::new(),
            finalized_at: BTreeMap::new(),
        }
    }

    pub fn chain(&self) -> &ChainState {
        &self.chain
    }

    /// Mutable chain access, for account setup and action submission
    /// between run segments.
    pub fn chain_mut(&mut self) -> &mut ChainState {
        &mut self.chain
    }

    pub fn into_chain(self) -> ChainState {
        self.chain
    }

    /// Virtual times at which each block became irreversible.
    pub fn finalized_at(&self) -> &BTreeMap<u64, f64> {
        &self.finalized_at
    }

    /// Submits a transaction through the chain's admission checks.
    pub fn submit(&mut self, tx: Transaction) -> Result<TxReceipt, ChainError> {
        self.chain.submit_transaction(tx)
    }

    fn push_event(&mut self, at: f64, kind: EventKind) {
        let event = Event {
            at: SimTime(at),
            seq: self.seq,
            kind,
        };
        self.seq += 1;
        self.events.push(event);
    }

    fn next_event_at(&self) -> Option<f64> {
        self.events.peek().map(|e| e.at.0)
    }

    /// Runs every slot and event up to and including `until_ms`. Events
    /// that tie with a slot boundary are processed before the block fires.
    pub fn run_until(&mut self, until_ms: u64) -> Result<(), ChainError> {
        loop {
            let slot_due = self.next_slot_ms <= until_ms;
            let event_due = self
                .next_event_at()
                .is_some_and(|at| at <= until_ms as f64);
            match (slot_due, event_due) {
                (true, true) => {
                    if self.next_event_at().expect("event due") <= self.next_slot_ms as f64 {
                        self.process_next_event()?;
                    } else {
                        self.produce_slot()?;
                    }
                }
                (true, false) => self.produce_slot()?,
                (false, true) => self.process_next_event()?,
                (false, false) => return Ok(()),
            }
        }
    }

    /// Keeps the cadence going until the pending pool is empty, then flushes
    /// the remaining confirmation traffic so the LIB catches the head.
    /// Fails with [`ChainError::Stalled`] if the pool has not drained after
    /// `max_extra_ms` of additional virtual time.
    pub fn drain(&mut self, max_extra_ms: u64) -> Result<(), ChainError> {
        let start = self.next_slot_ms;
        while self.chain.pending_len() > 0 {
            if self.next_slot_ms - start > max_extra_ms {
                return Err(ChainError::Stalled {
                    waited_ms: self.next_slot_ms - start,
                });
            }
            let slot = self.next_slot_ms;
            while self.next_event_at().is_some_and(|at| at <= slot as f64) {
                self.process_next_event()?;
            }
            self.produce_slot()?;
        }
        while !self.events.is_empty() {
            self.process_next_event()?;
        }
        Ok(())
    }

    fn produce_slot(&mut self) -> Result<(), ChainError> {
        let now = self.next_slot_ms;
        let producer = self.chain.scheduled_producer(now).clone();
        self.chain.produce_block(now, &producer)?;
        self.next_slot_ms = now + BLOCK_INTERVAL_MS;

        let head: &Block = self.chain.head();
        let height = head.height;
        let block_bytes = head.payload_bytes() + BLOCK_HEADER_BYTES;
        let schedule = self.chain.schedule();
        let n = schedule.len();
        let position = schedule
            .position_of(&producer)
            .expect("the block producer is scheduled");
        let peers: Vec<AccountName> = schedule.producers().to_vec();
        let net = self.chain.config().network;

        // The producer endorses its own block immediately.
        self.push_event(
            now as f64,
            EventKind::ConfirmOne {
                height,
                peer: producer,
            },
        );
        // Everyone else gets the block over the serialized fan-out and
        // confirms one hop after receiving it.
        for k in 1..n {
            let peer = peers[(position + k) % n].clone();
            let received = now as f64 + k as f64 * net.serialization_ms(block_bytes)
                + net.propagation_delay_ms();
            self.push_event(received, EventKind::Receive { height, peer });
        }
        Ok(())
    }

    fn process_next_event(&mut self) -> Result<(), ChainError> {
        let event = self.events.pop().expect("caller checked for an event");
        let now = event.at.0;
        match event.kind {
            EventKind::Receive { height, peer } => {
                let net = self.chain.config().network;
                let counted = now + net.propagation_delay_ms()
                    + net.serialization_ms(CONFIRM_MSG_BYTES);
                self.push_event(counted, EventKind::ConfirmOne { height, peer });
            }
            EventKind::ConfirmOne { height, peer } => {
                let counts = match self.chain.confirm_block(height, &peer, ConfirmStage::First) {
                    Ok(counts) => counts,
                    // A schedule change can orphan in-flight votes; the
                    // network would simply discard them.
                    Err(ChainError::UnknownProducer(_)) => return Ok(()),
                    Err(other) => return Err(other),
                };
                let needed = self.chain.schedule().supermajority();
                if counts.stage_one >= needed && self.stage_two_opened.insert(height) {
                    let net = self.chain.config().network;
                    let peers: Vec<AccountName> = self.chain.schedule().producers().to_vec();
                    for (rank, peer) in peers.into_iter().enumerate() {
                        // One hop to observe the supermajority, then each
                        // producer's vote lands in send-rank order.
                        let at = now
                            + 2.0 * net.propagation_delay_ms()
                            + (rank + 1) as f64 * net.serialization_ms(CONFIRM_MSG_BYTES);
                        self.push_event(at, EventKind::ConfirmTwo { height, peer });
                    }
                }
            }
            EventKind::ConfirmTwo { height, peer } => {
                match self.chain.confirm_block(height, &peer, ConfirmStage::Second) {
                    Ok(_) => {}
                    Err(ChainError::UnknownProducer(_)) => return Ok(()),
                    Err(other) => return Err(other),
                }
                let before = self.chain.lib_height();
                let after = self.chain.advance_lib();
                for finalized in before + 1..=after {
                    self.finalized_at.insert(finalized, now);
                }
            }
        }
        Ok(())
    }
}
