//! Epoch-by-epoch orchestration of the novelty computation.
//!
//! [`NoveltyEngine`] walks one bridge through three phases:
//!
//! 1. **Baseline** — feed epochs of known-healthy frames with
//!    [`NoveltyEngine::observe_healthy_epoch`], then freeze the per-group
//!    baselines with [`NoveltyEngine::finalize_baseline`]. Finalizing also
//!    scores the collected healthy epochs against the new baseline, seeding
//!    the calibration pool with the raw indices a healthy structure emits.
//! 2. **Calibration** — optionally feed epochs of worst-case exemplar data
//!    (for example from a validated structural model of severe damage) with
//!    [`NoveltyEngine::observe_worstcase_epoch`], then fix the reference
//!    with [`NoveltyEngine::calibrate`]. The reference is the maximum raw
//!    index seen across the pool, so the worst exemplar maps to 1.
//! 3. **Monitoring** — [`NoveltyEngine::monitor_epoch`] turns each epoch of
//!    frames into one [`NoveltyRecord`] per sensor group, ready to be
//!    pushed on chain.
//!
//! The engine is serializable, so a monitoring deployment can persist the
//! frozen baseline and calibration and resume scoring later.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{group_count, group_snapshot_matrix, sensor_group_name, IngestError};
use crate::shm::{
    calibrate, compute_pom, healthy_baseline, normalize_novelty, raw_novelty, Calibration,
    FeatureVector, NoveltyRecord, SensorFrame, ShmError,
};

/// Errors produced while driving the pipeline.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("step {step} is not allowed in the {phase:?} phase")]
    WrongPhase { step: &'static str, phase: Phase },
    #[error("epoch has frames for bridge {got:?}, engine monitors {expected:?}")]
    WrongBridge { expected: String, got: String },
    #[error("epoch has {got} sensors, engine expects {expected}")]
    WrongShape { expected: usize, got: usize },
    #[error("threshold band eps must lie strictly between 0 and 1, got {0}")]
    BadEps(f64),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Shm(#[from] ShmError),
}

/// Where the engine currently is in its lifecycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Collecting healthy epochs.
    Baseline,
    /// Baseline frozen; collecting worst-case exemplars.
    Calibrating,
    /// Calibration frozen; scoring monitoring epochs.
    Monitoring,
}

/// Per-bridge novelty scoring engine. See the module docs for the lifecycle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoveltyEngine {
    bridge_id: String,
    group_width: usize,
    eps: f64,
    phase: Phase,
    sensors: Option<usize>,
    healthy_modes: Vec<Vec<FeatureVector>>,
    baselines: Vec<FeatureVector>,
    raw_pool: Vec<f64>,
    calibration: Option<Calibration>,
}

impl NoveltyEngine {
    pub fn new(
        bridge_id: impl Into<String>,
        group_width: usize,
        eps: f64,
    ) -> Result<Self, PipelineError> {
        if group_width == 0 {
            return Err(IngestError::BadDimensions("group width must be positive".into()).into());
        }
        if !eps.is_finite() || eps <= 0.0 || eps >= 1.0 {
            return Err(PipelineError::BadEps(eps));
        }
        Ok(Self {
            bridge_id: bridge_id.into(),
            group_width,
            eps,
            phase: Phase::Baseline,
            sensors: None,
            healthy_modes: Vec::new(),
            baselines: Vec::new(),
            raw_pool: Vec::new(),
            calibration: None,
        })
    }

    pub fn bridge_id(&self) -> &str {
        &self.bridge_id
    }

    pub fn group_width(&self) -> usize {
        self.group_width
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// How many healthy epochs have been collected so far.
    pub fn healthy_epoch_count(&self) -> usize {
        self.healthy_modes.first().map_or(0, Vec::len)
    }

    /// Number of sensor groups, known once the first epoch has been seen.
    pub fn group_count(&self) -> Option<usize> {
        self.sensors
            .map(|s| group_count(s, self.group_width).expect("validated on first epoch"))
    }

    /// The frozen calibration, once [`NoveltyEngine::calibrate`] has run.
    pub fn calibration(&self) -> Option<&Calibration> {
        self.calibration.as_ref()
    }

    /// The frozen baseline of one group, once the baseline is finalized.
    pub fn baseline(&self, group: usize) -> Option<&FeatureVector> {
        self.baselines.get(group)
    }

    /// Extracts the dominant mode of every sensor group of one epoch.
    fn epoch_modes(&mut self, frames: &[SensorFrame]) -> Result<Vec<FeatureVector>, PipelineError> {
        let first = frames
            .first()
            .ok_or_else(|| IngestError::BadDimensions("an epoch needs at least one frame".into()))?;
        for frame in frames {
            if frame.bridge_id() != self.bridge_id {
                return Err(PipelineError::WrongBridge {
                    expected: self.bridge_id.clone(),
                    got: frame.bridge_id().to_string(),
                });
            }
        }
        let sensors = first.sensor_count();
        match self.sensors {
            None => {
                group_count(sensors, self.group_width)?;
                self.sensors = Some(sensors);
            }
            Some(expected) if expected != sensors => {
                return Err(PipelineError::WrongShape {
                    expected,
                    got: sensors,
                });
            }
            Some(_) => {}
        }
        let groups = group_count(sensors, self.group_width)?;
        let mut modes = Vec::with_capacity(groups);
        for g in 0..groups {
            let snapshots = group_snapshot_matrix(frames, g, self.group_width)?;
            modes.push(compute_pom(&snapshots)?);
        }
        Ok(modes)
    }

    /// Records one epoch of known-healthy frames for the baseline.
    pub fn observe_healthy_epoch(&mut self, frames: &[SensorFrame]) -> Result<(), PipelineError> {
        if self.phase != Phase::Baseline {
            return Err(PipelineError::WrongPhase {
                step: "observe_healthy_epoch",
                phase: self.phase,
            });
        }
        let modes = self.epoch_modes(frames)?;
        if self.healthy_modes.is_empty() {
            self.healthy_modes = modes.into_iter().map(|m| vec![m]).collect();
        } else {
            for (per_group, mode) in self.healthy_modes.iter_mut().zip(modes) {
                per_group.push(mode);
            }
        }
        Ok(())
    }

    /// Freezes the per-group baselines and seeds the calibration pool with
    /// the raw indices of the collected healthy epochs.
    pub fn finalize_baseline(&mut self) -> Result<(), PipelineError> {
        if self.phase != Phase::Baseline {
            return Err(PipelineError::WrongPhase {
                step: "finalize_baseline",
                phase: self.phase,
            });
        }
        if self.healthy_modes.is_empty() {
            return Err(ShmError::EmptyBaseline.into());
        }
        let mut baselines = Vec::with_capacity(self.healthy_modes.len());
        for per_group in &self.healthy_modes {
            baselines.push(healthy_baseline(per_group)?);
        }
        for (per_group, baseline) in self.healthy_modes.iter().zip(&baselines) {
            for mode in per_group {
                self.raw_pool.push(raw_novelty(mode, baseline)?);
            }
        }
        self.baselines = baselines;
        self.phase = Phase::Calibrating;
        Ok(())
    }

    /// Scores one epoch of worst-case exemplar frames against the frozen
    /// baseline and adds the raw indices to the calibration pool.
    pub fn observe_worstcase_epoch(&mut self, frames: &[SensorFrame]) -> Result<(), PipelineError> {
        if self.phase != Phase::Calibrating {
            return Err(PipelineError::WrongPhase {
                step: "observe_worstcase_epoch",
                phase: self.phase,
            });
        }
        let modes = self.epoch_modes(frames)?;
        for (mode, baseline) in modes.iter().zip(&self.baselines) {
            self.raw_pool.push(raw_novelty(mode, baseline)?);
        }
        Ok(())
    }

    /// Freezes the normalization reference at the maximum raw index in the
    /// pool. An externally supplied reference can be passed instead.
    pub fn calibrate(&mut self, n_ref: Option<f64>) -> Result<&Calibration, PipelineError> {
        if self.phase != Phase::Calibrating {
            return Err(PipelineError::WrongPhase {
                step: "calibrate",
                phase: self.phase,
            });
        }
        let healthy = self.healthy_epoch_count();
        let calibration = match n_ref {
            Some(reference) => Calibration::new(reference, healthy)?,
            None => calibrate(&self.raw_pool, healthy)?,
        };
        self.calibration = Some(calibration);
        self.phase = Phase::Monitoring;
        Ok(self.calibration.as_ref().expect("just set"))
    }

    /// Scores one monitoring epoch: one record per sensor group, in group
    /// order.
    pub fn monitor_epoch(
        &mut self,
        epoch: u64,
        frames: &[SensorFrame],
    ) -> Result<Vec<NoveltyRecord>, PipelineError> {
        if self.phase != Phase::Monitoring {
            return Err(PipelineError::WrongPhase {
                step: "monitor_epoch",
                phase: self.phase,
            });
        }
        let modes = self.epoch_modes(frames)?;
        let calibration = self.calibration.as_ref().expect("set when entering phase");
        let mut records = Vec::with_capacity(modes.len());
        for (g, (mode, baseline)) in modes.iter().zip(&self.baselines).enumerate() {
            let ni_raw = raw_novelty(mode, baseline)?;
            let ni_norm = normalize_novelty(ni_raw, calibration)?;
            records.push(NoveltyRecord::new(
                self.bridge_id.clone(),
                sensor_group_name(g),
                epoch,
                ni_raw,
                ni_norm,
                self.eps,
            )?);
        }
        Ok(records)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{synthesize_frame, DamageLevel, DamageScenario, SynthParams};
    use crate::shm::HealthState;

    fn epoch(level: DamageLevel, seed: u64, files: usize) -> Vec<SensorFrame> {
        let params = SynthParams {
            bridge_id: "br1".into(),
            scenario: DamageScenario::new(level, 8),
            files,
            sensors: 8,
            samples: 64,
            sample_rate_hz: 256,
            seed,
        };
        (0..files)
            .map(|i| synthesize_frame(&params, i).unwrap())
            .collect()
    }

    fn ready_engine() -> NoveltyEngine {
        let mut engine = NoveltyEngine::new("br1", 1, 0.15).unwrap();
        for seed in 0..4 {
            engine.observe_healthy_epoch(&epoch(DamageLevel::H, seed, 6)).unwrap();
        }
        engine.finalize_baseline().unwrap();
        engine
            .observe_worstcase_epoch(&epoch(DamageLevel::D3, 100, 6))
            .unwrap();
        engine.calibrate(None).unwrap();
        engine
    }

    #[test]
    fn lifecycle_enforces_phase_order() {
        let mut engine = NoveltyEngine::new("br1", 1, 0.15).unwrap();
        assert_eq!(engine.phase(), Phase::Baseline);
        assert!(matches!(
            engine.monitor_epoch(0, &epoch(DamageLevel::H, 1, 2)),
            Err(PipelineError::WrongPhase { step: "monitor_epoch", .. })
        ));
        assert!(matches!(
            engine.calibrate(None),
            Err(PipelineError::WrongPhase { step: "calibrate", .. })
        ));
        engine.observe_healthy_epoch(&epoch(DamageLevel::H, 1, 2)).unwrap();
        engine.finalize_baseline().unwrap();
        assert_eq!(engine.phase(), Phase::Calibrating);
        assert!(matches!(
            engine.observe_healthy_epoch(&epoch(DamageLevel::H, 2, 2)),
            Err(PipelineError::WrongPhase { step: "observe_healthy_epoch", .. })
        ));
        engine.observe_worstcase_epoch(&epoch(DamageLevel::D3, 3, 2)).unwrap();
        engine.calibrate(None).unwrap();
        assert_eq!(engine.phase(), Phase::Monitoring);
        assert!(matches!(
            engine.observe_worstcase_epoch(&epoch(DamageLevel::D3, 4, 2)),
            Err(PipelineError::WrongPhase { step: "observe_worstcase_epoch", .. })
        ));
    }

    #[test]
    fn rejects_bad_construction_parameters() {
        assert!(matches!(
            NoveltyEngine::new("br1", 1, 0.0),
            Err(PipelineError::BadEps(_))
        ));
        assert!(matches!(
            NoveltyEngine::new("br1", 1, 1.0),
            Err(PipelineError::BadEps(_))
        ));
        assert!(NoveltyEngine::new("br1", 0, 0.15).is_err());
        assert!(NoveltyEngine::new("br1", 3, 0.15).is_ok());
    }

    #[test]
    fn rejects_mismatched_epochs() {
        let mut engine = NoveltyEngine::new("br1", 1, 0.15).unwrap();
        engine.observe_healthy_epoch(&epoch(DamageLevel::H, 1, 2)).unwrap();
        let mut foreign = epoch(DamageLevel::H, 2, 2);
        foreign[0] = SensorFrame::new(
            "other",
            "other_H_2_0000.csv",
            256,
            foreign[0].values().clone(),
        )
        .unwrap();
        assert!(matches!(
            engine.observe_healthy_epoch(&foreign),
            Err(PipelineError::WrongBridge { .. })
        ));
        let narrow_params = SynthParams {
            bridge_id: "br1".into(),
            scenario: DamageScenario::new(DamageLevel::H, 4),
            files: 2,
            sensors: 4,
            samples: 64,
            sample_rate_hz: 256,
            seed: 3,
        };
        let narrow: Vec<SensorFrame> = (0..2)
            .map(|i| synthesize_frame(&narrow_params, i).unwrap())
            .collect();
        assert!(matches!(
            engine.observe_healthy_epoch(&narrow),
            Err(PipelineError::WrongShape { expected: 8, got: 4 })
        ));
        assert!(matches!(
            engine.observe_healthy_epoch(&[]),
            Err(PipelineError::Ingest(_))
        ));
    }

    #[test]
    fn monitoring_yields_one_record_per_group_in_order() {
        let mut engine = ready_engine();
        assert_eq!(engine.group_count(), Some(8));
        let records = engine.monitor_epoch(7, &epoch(DamageLevel::H, 50, 6)).unwrap();
        assert_eq!(records.len(), 8);
        for (g, record) in records.iter().enumerate() {
            assert_eq!(record.sensor_group, sensor_group_name(g));
            assert_eq!(record.epoch, 7);
            assert_eq!(record.bridge_id, "br1");
            assert_eq!(record.eps, 0.15);
            assert!((0.0..=1.0).contains(&record.ni_norm));
        }
    }

    #[test]
    fn healthy_epochs_score_healthy_and_severe_damage_scores_unhealthy() {
        let mut engine = ready_engine();
        let healthy = engine.monitor_epoch(0, &epoch(DamageLevel::H, 60, 6)).unwrap();
        let healthy_ok = healthy
            .iter()
            .filter(|r| r.state == HealthState::Healthy)
            .count();
        assert!(healthy_ok >= 7, "{healthy_ok}/8 healthy groups flagged healthy");
        let damaged = engine.monitor_epoch(1, &epoch(DamageLevel::D3, 61, 6)).unwrap();
        let damaged_bad = damaged
            .iter()
            .filter(|r| r.state == HealthState::Unhealthy)
            .count();
        assert!(damaged_bad >= 7, "{damaged_bad}/8 damaged groups flagged unhealthy");
    }

    #[test]
    fn wider_groups_reduce_the_record_count() {
        let mut engine = NoveltyEngine::new("br1", 3, 0.15).unwrap();
        engine.observe_healthy_epoch(&epoch(DamageLevel::H, 1, 4)).unwrap();
        engine.observe_healthy_epoch(&epoch(DamageLevel::H, 2, 4)).unwrap();
        engine.finalize_baseline().unwrap();
        engine.observe_worstcase_epoch(&epoch(DamageLevel::D3, 3, 4)).unwrap();
        engine.calibrate(None).unwrap();
        let records = engine.monitor_epoch(0, &epoch(DamageLevel::H, 4, 4)).unwrap();
        assert_eq!(records.len(), 8 - 3 + 1);
    }

    #[test]
    fn external_reference_overrides_the_pool() {
        let mut engine = NoveltyEngine::new("br1", 1, 0.15).unwrap();
        engine.observe_healthy_epoch(&epoch(DamageLevel::H, 1, 4)).unwrap();
        engine.finalize_baseline().unwrap();
        let calibration = engine.calibrate(Some(0.5)).unwrap();
        assert_eq!(calibration.n_ref(), 0.5);
        assert_eq!(calibration.healthy_count(), 1);
    }

    #[test]
    fn engine_state_survives_a_serde_round_trip() {
        let mut engine = ready_engine();
        let json = serde_json::to_string(&engine).unwrap();
        let mut revived: NoveltyEngine = serde_json::from_str(&json).unwrap();
        let a = engine.monitor_epoch(3, &epoch(DamageLevel::D2, 70, 6)).unwrap();
        let b = revived.monitor_epoch(3, &epoch(DamageLevel::D2, 70, 6)).unwrap();
        assert_eq!(a, b);
    }
}
