//! Runs the block-production simulator for one simulated minute.
//!
//! Five producers take 500 ms slots in name order. A handful of
//! transactions is submitted up front with staggered submission times; each
//! one arrives after its network delivery delay, is pulled into the next
//! block, and becomes irreversible once a supermajority of producers has
//! confirmed the block twice.
//!
//! Run with `cargo run --example chain_sim`.

use std::error::Error;

use trestle::chain::sim::Simulator;
use trestle::chain::{AccountName, BlockLogLine, ChainConfig, ChainState, Transaction};

fn main() -> Result<(), Box<dyn Error>> {
    let producers: Vec<AccountName> = ["alice", "bob", "carol", "dave", "erin"]
        .into_iter()
        .map(AccountName::new)
        .collect::<Result<_, _>>()?;
    let mut chain = ChainState::new(ChainConfig::default(), producers)?;
    println!(
        "schedule: {} producers, supermajority {}",
        chain.schedule().len(),
        chain.schedule().supermajority(),
    );

    let gateway = AccountName::new("gateway")?;
    chain.create_account(gateway.clone(), 0)?;

    let mut sim = Simulator::new(chain);
    for i in 0..6 {
        let tx = Transaction::new(
            gateway.clone(),
            "bridgelog",
            "note",
            format!("{{\"seq\":{i}}}"),
            1_000.0 * i as f64,
        );
        let receipt = sim.submit(tx)?;
        println!(
            "submitted {} ({} bytes, arrives at {:.2} ms)",
            &receipt.tx_id[..12],
            receipt.size_bytes,
            receipt.arrival_ms,
        );
    }

    sim.run_until(60_000)?;
    let chain = sim.chain();
    println!(
        "after 60 s: head {} blocks, lib {}, {} committed txs",
        chain.head_height(),
        chain.lib_height(),
        chain.committed_tx_count(),
    );

    // The chain log is an append-only NDJSON stream; show the first lines.
    println!("chain log head:");
    for block in chain.blocks().iter().skip(1).take(3) {
        println!("  {}", BlockLogLine::from_block(block).render());
    }
    Ok(())
}
