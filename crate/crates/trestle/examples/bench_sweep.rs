//! Sweeps the producer count and compares index versus raw storage.
//!
//! Each sweep point reruns the same desk-scale scenario with one axis
//! changed. Confirmed-transaction totals should never shrink as the network
//! grows, while mean finality latency should rise (longer confirmation
//! rounds). The storage comparison then reruns one configuration twice --
//! storing per-group novelty indices versus every raw reading -- and reports
//! the exact ledger-value ratio.
//!
//! Run with `cargo run --example bench_sweep --release`.

use std::error::Error;

use trestle::bench::{
    run_scenario, storage_comparison, sweep, GatewayPolicy, ScenarioConfig, SweepAxis,
};

fn main() -> Result<(), Box<dyn Error>> {
    let mut base = ScenarioConfig::default();
    base.gateway = GatewayPolicy::PerProducer;

    let outcome = sweep(&base, SweepAxis::Producers, &[4, 8, 16])?;
    println!("producer sweep:");
    for (value, report) in outcome.values.iter().zip(&outcome.reports) {
        println!(
            "  {:>3} producers: {:>4} confirmed txs, {:>8.2} ms mean latency, cpu cv {:.3}",
            value, report.tx_confirmed, report.avg_latency_ms, report.cpu_cv,
        );
    }
    println!(
        "  throughput non-decreasing: {}, latency strictly increasing: {}",
        outcome.verdicts.tx_confirmed_non_decreasing,
        outcome.verdicts.latency_strictly_increasing,
    );

    // Same deployment, two storage policies.
    let with_ni = run_scenario(&ScenarioConfig::default())?.report;
    let mut raw = ScenarioConfig::default();
    raw.with_ni = false;
    let without_ni = run_scenario(&raw)?.report;
    let cmp = storage_comparison(&with_ni, &without_ni)?;
    println!(
        "storage: {} values with indices vs {} raw, ratio {}x (exact: {})",
        cmp.values_with, cmp.values_without, cmp.value_ratio, cmp.value_ratio_is_exact,
    );
    println!(
        "bytes: {} vs {}, ratio {:.1}x",
        cmp.bytes_with, cmp.bytes_without, cmp.byte_ratio,
    );
    Ok(())
}
