//! Deploys the novelty contract and pushes records into its table.
//!
//! The runtime models an EOSIO-style multi-index table: each `addnovelty`
//! action inserts one row keyed by `(epoch, sensor index)` packed into a
//! single u64 primary key. Unauthorized actors are rejected, rows can be
//! looked up by key or scanned by epoch, and an above-threshold index
//! raises the on-chain alert event.
//!
//! Run with `cargo run --example contract_actions`.

use std::error::Error;

use trestle::chain::sim::Simulator;
use trestle::chain::{AccountName, ChainConfig, ChainState};
use trestle::contract::{pack_key, ContractRuntime};
use trestle::shm::NoveltyRecord;

fn main() -> Result<(), Box<dyn Error>> {
    let producers: Vec<AccountName> = ["alice", "bob", "carol"]
        .into_iter()
        .map(AccountName::new)
        .collect::<Result<_, _>>()?;
    let mut chain = ChainState::new(ChainConfig::default(), producers)?;

    let owner = AccountName::new("bridgeadmin")?;
    let gateway = AccountName::new("gateway")?;
    let stranger = AccountName::new("stranger")?;
    for account in [&owner, &gateway, &stranger] {
        chain.create_account(account.clone(), 0)?;
    }

    let mut runtime = ContractRuntime::new();
    let contract = runtime.deploy(&mut chain, &owner, "nvlt", 0)?;
    runtime.authorize(&chain, &contract, &owner, &gateway)?;
    println!("deployed {contract}, gateway authorized");

    // A healthy record and an above-threshold one.
    let quiet = NoveltyRecord::new("br1", "s001", 1, 0.083, 0.083, 0.15)?;
    let loud = NoveltyRecord::new("br1", "s002", 1, 0.94, 0.94, 0.15)?;
    runtime.push_addnovelty(&mut chain, &contract, &gateway, &quiet, 100.0)?;
    let receipt = runtime.push_addnovelty(&mut chain, &contract, &gateway, &loud, 150.0)?;
    println!(
        "pushed 2 records; second cost {} us, events: {:?}",
        receipt.cost_us, receipt.events,
    );

    // Only authorized actors may push.
    let rejected = runtime.push_addnovelty(&mut chain, &contract, &stranger, &quiet, 200.0);
    println!("unauthorized push rejected: {}", rejected.unwrap_err());

    // Primary-key lookup and epoch scan against the table.
    let key = pack_key(1, 2)?;
    let row = runtime
        .contract(&contract)?
        .get_row(key)
        .expect("row stored above");
    println!(
        "row {key}: group {} norm {:.2} state {}",
        row.sensor_group, row.ni_norm, row.state,
    );
    let in_epoch = runtime.contract(&contract)?.rows_in_epoch(1).count();
    println!("epoch 1 holds {in_epoch} rows");

    // Actions ride ordinary transactions: run the chain forward and the
    // pushes above become irreversible.
    let mut sim = Simulator::new(chain);
    sim.run_until(10_000)?;
    println!(
        "chain at 10 s: {} committed txs, lib {}",
        sim.chain().committed_tx_count(),
        sim.chain().lib_height(),
    );
    Ok(())
}
