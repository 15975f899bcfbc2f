//! Generates a small synthetic strain dataset and parses one file back.
//!
//! Two scenarios are produced from the same seed: a healthy bridge and a
//! severely damaged one. Only the damage signature differs between them --
//! per-file amplitude, jitter, and noise draws are shared, so the two
//! datasets are directly comparable.
//!
//! Run with `cargo run --example generate_dataset`.

use std::error::Error;

use trestle::ingest::{parse_frame, synthesize_dataset, DamageLevel, DamageScenario, SynthParams};

fn main() -> Result<(), Box<dyn Error>> {
    let mut params = SynthParams {
        bridge_id: "br1".into(),
        scenario: DamageScenario::new(DamageLevel::H, 8),
        files: 4,
        sensors: 8,
        samples: 32,
        sample_rate_hz: 256,
        seed: 7,
    };

    for level in [DamageLevel::H, DamageLevel::D3] {
        params.scenario = DamageScenario::new(level, params.sensors);
        let files = synthesize_dataset(&params)?;
        println!("{level} scenario ({} files):", files.len());
        for file in &files {
            println!("  {} ({} bytes)", file.name, file.bytes.len());
        }
    }

    // Parse the first healthy file back into a frame and inspect it.
    params.scenario = DamageScenario::new(DamageLevel::H, params.sensors);
    let files = synthesize_dataset(&params)?;
    let frame = parse_frame(
        files[0].bytes.as_slice(),
        "br1",
        &files[0].name,
        params.sample_rate_hz,
    )?;
    println!(
        "parsed {}: {} samples x {} sensors, first reading {:.6}",
        frame.file_id(),
        frame.n_samples(),
        frame.sensor_count(),
        frame.values()[(0, 0)],
    );
    Ok(())
}
