//! Bridge-health monitoring on a simulated delegated-proof-of-stake chain.
//!
//! The crate wires together four layers:
//!
//! 1. [`ingest`]: strain CSV parsing, a bounded edge buffer, and a seeded
//!    synthetic data generator for healthy and damaged bridge scenarios.
//! 2. [`shm`]: snapshot matrices, dominant proper orthogonal modes via SVD,
//!    healthy baselines, and novelty indices with threshold classification.
//! 3. [`chain`] and [`contract`]: a deterministic EOSIO-style block producer
//!    schedule with two-stage finality, plus a smart-contract runtime whose
//!    `addnovelty` action stores novelty records in multi-index tables.
//! 4. [`bench`]: discrete-event scenario runs, node/sensor sweeps, and the
//!    on-chain storage comparison between raw readings and novelty indices.
//!
//! [`pipeline`] glues ingestion to novelty scoring (calibrate, then monitor)
//! and [`cli`] exposes the whole thing as `generate`, `run`, `query`, and
//! `bench` subcommands.
//!
//! Everything is deterministic: given one seed and one configuration, every
//! run produces byte-identical chain logs, reports, and synthetic datasets.

pub mod bench;
pub mod chain;
pub mod cli;
pub mod contract;
pub mod ingest;
pub mod pipeline;
pub mod shm;
