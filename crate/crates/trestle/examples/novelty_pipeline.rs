//! Walks the novelty pipeline end to end: baseline, calibration, monitoring.
//!
//! Four healthy epochs establish the per-group baseline mode shapes, one
//! worst-case exemplar epoch widens the calibration pool, and then a healthy
//! and a damaged epoch are scored against the frozen baseline. Damage shows
//! up as a normalized index above the threshold.
//!
//! Run with `cargo run --example novelty_pipeline`.

use std::error::Error;

use trestle::ingest::{synthesize_frame, DamageLevel, DamageScenario, SynthParams};
use trestle::pipeline::NoveltyEngine;
use trestle::shm::{HealthState, SensorFrame};

const SENSORS: usize = 8;
const FILES_PER_EPOCH: usize = 6;

/// One epoch of frames at the given damage level; `epoch` offsets the file
/// indices so consecutive epochs see fresh noise draws.
fn epoch_frames(level: DamageLevel, epoch: usize) -> Result<Vec<SensorFrame>, Box<dyn Error>> {
    let params = SynthParams {
        bridge_id: "br1".into(),
        scenario: DamageScenario::new(level, SENSORS),
        files: FILES_PER_EPOCH,
        sensors: SENSORS,
        samples: 64,
        sample_rate_hz: 256,
        seed: 42,
    };
    let start = epoch * FILES_PER_EPOCH;
    (start..start + FILES_PER_EPOCH)
        .map(|index| synthesize_frame(&params, index).map_err(Into::into))
        .collect()
}

fn main() -> Result<(), Box<dyn Error>> {
    let mut engine = NoveltyEngine::new("br1", 1, 0.15)?;

    // Phase 1: healthy epochs accumulate the baseline.
    for epoch in 0..4 {
        engine.observe_healthy_epoch(&epoch_frames(DamageLevel::H, epoch)?)?;
    }
    engine.finalize_baseline()?;
    println!(
        "baseline frozen over {} healthy epochs, {} sensor groups",
        engine.healthy_epoch_count(),
        engine.group_count().unwrap_or(0),
    );

    // Phase 2: a worst-case exemplar epoch, then calibration.
    engine.observe_worstcase_epoch(&epoch_frames(DamageLevel::D3, 4)?)?;
    let calibration = engine.calibrate(None)?;
    println!(
        "calibrated: n_ref = {:.6} from {} healthy raw indices",
        calibration.n_ref(),
        calibration.healthy_count(),
    );

    // Phase 3: monitoring. Score one healthy and one damaged epoch.
    for (epoch, level) in [(0u64, DamageLevel::H), (1, DamageLevel::D3)] {
        let records = engine.monitor_epoch(epoch, &epoch_frames(level, 5 + epoch as usize)?)?;
        let unhealthy = records
            .iter()
            .filter(|r| r.state == HealthState::Unhealthy)
            .count();
        let mean: f64 =
            records.iter().map(|r| r.ni_norm).sum::<f64>() / records.len() as f64;
        println!(
            "epoch {epoch} ({level}): mean normalized index {mean:.4}, {unhealthy}/{} unhealthy",
            records.len(),
        );
        for record in records.iter().take(3) {
            println!(
                "  {} raw {:.4} norm {:.4} -> {}",
                record.sensor_group, record.ni_raw, record.ni_norm, record.state,
            );
        }
    }
    Ok(())
}
