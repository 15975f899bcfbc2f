//! Deterministic synthetic strain data for healthy and damaged bridges.
//!
//! Each file captures one vehicle passage: two damped sinusoid modes shaped
//! across the array by a half-sine span profile, with a per-file amplitude
//! factor, a small phase jitter, and Gaussian sensor noise. Damage scales
//! the amplitude of the affected sensors by `1 + severity`, shifts their
//! phase, and mixes in a third damped mode whose weight grows with
//! severity. All three effects rotate the dominant left singular shape of
//! the affected channels away from the healthy baseline by an angle that
//! grows with severity: higher severity, higher novelty index.
//!
//! Generation is pure: one `ChaCha8` stream per `(seed, file_index)` pair,
//! so any file can be regenerated independently and datasets are identical
//! across runs and platforms.

use std::collections::BTreeSet;
use std::fmt;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::IngestError;
use crate::shm::SensorFrame;

/// First vibration mode: amplitude, frequency (Hz), decay rate (1/s).
const MODE_ONE: (f64, f64, f64) = (1.0, 3.2, 0.9);
/// Second vibration mode.
const MODE_TWO: (f64, f64, f64) = (0.6, 7.9, 1.6);
/// Mode excited only by damage; its amplitude scales with severity.
const MODE_DAMAGE: (f64, f64, f64) = (0.8, 5.1, 1.1);
/// Per-file amplitude factor range.
const AMPLITUDE_RANGE: (f64, f64) = (0.85, 1.15);
/// Per-file phase jitter range, radians.
const JITTER_RANGE: (f64, f64) = (-0.02, 0.02);
/// Sensor noise standard deviation, in strain units.
const NOISE_SIGMA: f64 = 0.08;
/// Phase shift per unit severity, radians. Kept small: the damage mode,
/// not the phase, carries most of the severity signal, so the mode
/// rotation stays well below saturation even at the highest level.
const PHASE_SHIFT_PER_SEVERITY: f64 = 0.25;

/// Damage intensity levels and their severity coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum DamageLevel {
    /// Healthy.
    H,
    /// Light damage, severity 0.3.
    D1,
    /// Moderate damage, severity 0.6.
    D2,
    /// Severe damage, severity 0.95.
    D3,
}

impl DamageLevel {
    pub const ALL: [DamageLevel; 4] = [
        DamageLevel::H,
        DamageLevel::D1,
        DamageLevel::D2,
        DamageLevel::D3,
    ];

    pub fn severity(self) -> f64 {
        match self {
            DamageLevel::H => 0.0,
            DamageLevel::D1 => 0.3,
            DamageLevel::D2 => 0.6,
            DamageLevel::D3 => 0.95,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DamageLevel::H => "H",
            DamageLevel::D1 => "D1",
            DamageLevel::D2 => "D2",
            DamageLevel::D3 => "D3",
        }
    }
}

impl fmt::Display for DamageLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for DamageLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "H" | "h" => Ok(DamageLevel::H),
            "D1" | "d1" => Ok(DamageLevel::D1),
            "D2" | "d2" => Ok(DamageLevel::D2),
            "D3" | "d3" => Ok(DamageLevel::D3),
            other => Err(format!("unknown damage level {other:?} (use H, D1, D2 or D3)")),
        }
    }
}

/// A damage level plus the set of affected sensors.
///
/// Damaged scenarios default to affecting the whole array; healthy
/// scenarios affect nothing.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct DamageScenario {
    level: DamageLevel,
    affected: BTreeSet<usize>,
}

impl DamageScenario {
    pub fn new(level: DamageLevel, sensor_count: usize) -> Self {
        let affected = match level {
            DamageLevel::H => BTreeSet::new(),
            _ => (0..sensor_count).collect(),
        };
        Self { level, affected }
    }

    /// A scenario damaging only the given zero-based sensor indices.
    pub fn with_affected(
        level: DamageLevel,
        affected: BTreeSet<usize>,
        sensor_count: usize,
    ) -> Result<Self, IngestError> {
        match level {
            DamageLevel::H if !affected.is_empty() => {
                return Err(IngestError::BadDimensions(
                    "a healthy scenario cannot affect sensors".into(),
                ));
            }
            DamageLevel::H => {}
            _ if affected.is_empty() => {
                return Err(IngestError::BadDimensions(
                    "a damaged scenario must affect at least one sensor".into(),
                ));
            }
            _ => {}
        }
        if let Some(&max) = affected.iter().next_back() {
            if max >= sensor_count {
                return Err(IngestError::BadDimensions(format!(
                    "affected sensor {max} out of range for {sensor_count} sensors"
                )));
            }
        }
        Ok(Self { level, affected })
    }

    pub fn level(&self) -> DamageLevel {
        self.level
    }

    pub fn severity(&self) -> f64 {
        self.level.severity()
    }

    pub fn affected(&self) -> &BTreeSet<usize> {
        &self.affected
    }
}

/// Everything the generator needs to produce one dataset.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SynthParams {
    pub bridge_id: String,
    pub scenario: DamageScenario,
    pub files: usize,
    pub sensors: usize,
    pub samples: usize,
    pub sample_rate_hz: u32,
    pub seed: u64,
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.files == 0 {
            return Err(IngestError::BadDimensions("files must be positive".into()));
        }
        if self.sensors < 2 || self.sensors > 999 {
            return Err(IngestError::BadDimensions(format!(
                "sensor count {} must lie in 2..=999",
                self.sensors
            )));
        }
        if self.samples < 2 {
            return Err(IngestError::BadDimensions(format!(
                "samples per file {} must be at least 2",
                self.samples
            )));
        }
        if self.sample_rate_hz == 0 {
            return Err(IngestError::BadDimensions(
                "sample rate must be positive".into(),
            ));
        }
        if let Some(&max) = self.scenario.affected().iter().next_back() {
            if max >= self.sensors {
                return Err(IngestError::BadDimensions(format!(
                    "affected sensor {max} out of range for {} sensors",
                    self.sensors
                )));
            }
        }
        Ok(())
    }
}

/// One generated CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedCsv {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// Canonical dataset file name: `<bridge>_<scenario>_<seed>_<index>.csv`,
/// with the index zero-padded so lexicographic order is capture order.
pub fn file_name(bridge_id: &str, level: DamageLevel, seed: u64, index: usize) -> String {
    format!("{bridge_id}_{}_{seed}_{index:04}.csv", level.label())
}

/// Generates the sample matrix (`samples x sensors`) of one file.
pub fn synthesize_frame(params: &SynthParams, file_index: usize) -> Result<SensorFrame, IngestError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(file_index as u64 + 1);
    let amplitude = rng.gen_range(AMPLITUDE_RANGE.0..AMPLITUDE_RANGE.1);
    let jitter = rng.gen_range(JITTER_RANGE.0..JITTER_RANGE.1);
    let noise = Normal::new(0.0, NOISE_SIGMA).expect("constant sigma is valid");

    let s = params.sensors;
    let severity = params.scenario.severity();
    let span_shape: Vec<f64> = (0..s)
        .map(|j| (std::f64::consts::PI * (j + 1) as f64 / (s + 1) as f64).sin())
        .collect();
    let gains: Vec<f64> = (0..s)
        .map(|j| {
            if params.scenario.affected().contains(&j) {
                1.0 + severity
            } else {
                1.0
            }
        })
        .collect();
    let phases: Vec<f64> = (0..s)
        .map(|j| {
            if params.scenario.affected().contains(&j) {
                jitter + severity * PHASE_SHIFT_PER_SEVERITY
            } else {
                jitter
            }
        })
        .collect();

    let mut values = DMatrix::<f64>::zeros(params.samples, s);
    for k in 0..params.samples {
        let t = k as f64 / params.sample_rate_hz as f64;
        for j in 0..s {
            let (a1, f1, d1) = MODE_ONE;
            let (a2, f2, d2) = MODE_TWO;
            let (a3, f3, d3) = MODE_DAMAGE;
            let phase = phases[j];
            let mut carrier = a1
                * (-d1 * t).exp()
                * (2.0 * std::f64::consts::PI * f1 * t + phase).sin()
                + a2 * (-d2 * t).exp() * (2.0 * std::f64::consts::PI * f2 * t + phase).sin();
            if params.scenario.affected().contains(&j) {
                carrier += severity
                    * a3
                    * (-d3 * t).exp()
                    * (2.0 * std::f64::consts::PI * f3 * t + jitter).sin();
            }
            values[(k, j)] =
                amplitude * span_shape[j] * gains[j] * carrier + noise.sample(&mut rng);
        }
    }
    let file_id = file_name(
        &params.bridge_id,
        params.scenario.level(),
        params.seed,
        file_index,
    );
    Ok(SensorFrame::new(
        params.bridge_id.clone(),
        file_id,
        params.sample_rate_hz,
        values,
    )?)
}

/// Renders one file as CSV bytes: header `t,s001,...`, one row per sample.
pub fn synthesize_file(params: &SynthParams, file_index: usize) -> Result<NamedCsv, IngestError> {
    let frame = synthesize_frame(params, file_index)?;
    let mut text = String::with_capacity(frame.n_samples() * frame.sensor_count() * 14);
    text.push('t');
    for j in 0..frame.sensor_count() {
        text.push(',');
        text.push_str(&super::sensor_group_name(j));
    }
    text.push('\n');
    for k in 0..frame.n_samples() {
        let t = k as f64 / params.sample_rate_hz as f64;
        write!(text, "{t:.6}").expect("writing to a string cannot fail");
        for j in 0..frame.sensor_count() {
            write!(text, ",{:.9}", frame.values()[(k, j)])
                .expect("writing to a string cannot fail");
        }
        text.push('\n');
    }
    Ok(NamedCsv {
        name: frame.file_id().to_string(),
        bytes: text.into_bytes(),
    })
}

/// Generates a whole dataset of `params.files` CSV files.
pub fn synthesize_dataset(params: &SynthParams) -> Result<Vec<NamedCsv>, IngestError> {
    params.validate()?;
    (0..params.files)
        .map(|index| synthesize_file(params, index))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{group_snapshot_matrix, parse_frame};
    use crate::shm::{compute_pom, healthy_baseline, raw_novelty};

    fn params(level: DamageLevel, seed: u64) -> SynthParams {
        SynthParams {
            bridge_id: "br1".into(),
            scenario: DamageScenario::new(level, 8),
            files: 6,
            sensors: 8,
            samples: 64,
            sample_rate_hz: 256,
            seed,
        }
    }

    #[test]
    fn file_names_are_canonical() {
        assert_eq!(file_name("br1", DamageLevel::D3, 42, 0), "br1_D3_42_0000.csv");
        assert_eq!(file_name("br1", DamageLevel::H, 7, 123), "br1_H_7_0123.csv");
    }

    #[test]
    fn severities_are_fixed_per_level() {
        assert_eq!(DamageLevel::H.severity(), 0.0);
        assert_eq!(DamageLevel::D1.severity(), 0.3);
        assert_eq!(DamageLevel::D2.severity(), 0.6);
        assert_eq!(DamageLevel::D3.severity(), 0.95);
        assert_eq!("d2".parse::<DamageLevel>().unwrap(), DamageLevel::D2);
        assert!("D9".parse::<DamageLevel>().is_err());
    }

    #[test]
    fn scenario_validation_checks_the_affected_set() {
        let healthy = DamageScenario::new(DamageLevel::H, 8);
        assert!(healthy.affected().is_empty());
        let damaged = DamageScenario::new(DamageLevel::D2, 8);
        assert_eq!(damaged.affected().len(), 8);
        assert!(DamageScenario::with_affected(
            DamageLevel::H,
            BTreeSet::from([1]),
            8
        )
        .is_err());
        assert!(DamageScenario::with_affected(DamageLevel::D1, BTreeSet::new(), 8).is_err());
        assert!(DamageScenario::with_affected(
            DamageLevel::D1,
            BTreeSet::from([8]),
            8
        )
        .is_err());
        let partial =
            DamageScenario::with_affected(DamageLevel::D3, BTreeSet::from([2, 3]), 8).unwrap();
        assert_eq!(partial.affected().len(), 2);
    }

    #[test]
    fn generation_is_deterministic_per_seed_and_index() {
        let p = params(DamageLevel::D1, 42);
        let a = synthesize_file(&p, 3).unwrap();
        let b = synthesize_file(&p, 3).unwrap();
        assert_eq!(a, b);
        let c = synthesize_file(&p, 4).unwrap();
        assert_ne!(a.bytes, c.bytes);
        let other_seed = params(DamageLevel::D1, 43);
        let d = synthesize_file(&other_seed, 3).unwrap();
        assert_ne!(a.bytes, d.bytes);
    }

    #[test]
    fn csv_bytes_parse_back_to_the_frame_within_written_precision() {
        let p = params(DamageLevel::D2, 7);
        let frame = synthesize_frame(&p, 0).unwrap();
        let file = synthesize_file(&p, 0).unwrap();
        let parsed = parse_frame(&file.bytes, "br1", &file.name, 256).unwrap();
        assert_eq!(parsed.n_samples(), frame.n_samples());
        assert_eq!(parsed.sensor_count(), frame.sensor_count());
        for k in 0..frame.n_samples() {
            for j in 0..frame.sensor_count() {
                let diff = (parsed.values()[(k, j)] - frame.values()[(k, j)]).abs();
                assert!(diff <= 5e-10, "row {k} col {j} differs by {diff}");
            }
        }
    }

    #[test]
    fn unaffected_sensors_are_identical_across_levels() {
        let mut healthy = params(DamageLevel::H, 11);
        healthy.files = 1;
        let mut partial = healthy.clone();
        partial.scenario =
            DamageScenario::with_affected(DamageLevel::D3, BTreeSet::from([2]), 8).unwrap();
        let h = synthesize_frame(&healthy, 0).unwrap();
        let d = synthesize_frame(&partial, 0).unwrap();
        for j in (0..8).filter(|j| *j != 2) {
            for k in 0..64 {
                assert_eq!(h.values()[(k, j)], d.values()[(k, j)], "sensor {j} row {k}");
            }
        }
        let mut changed = false;
        for k in 0..64 {
            changed |= h.values()[(k, 2)] != d.values()[(k, 2)];
        }
        assert!(changed, "the affected sensor must actually change");
    }

    /// Mean raw novelty index of one monitoring epoch against a healthy
    /// baseline built from the same seed's healthy epochs.
    fn mean_raw_ni(seed: u64, level: DamageLevel) -> f64 {
        let healthy = params(DamageLevel::H, seed);
        let monitored = params(level, seed + 1000);
        let sensors = healthy.sensors;
        let healthy_epochs = 4;
        let mut healthy_frames = Vec::new();
        for e in 0..healthy_epochs {
            let frames: Vec<_> = (0..healthy.files)
                .map(|i| synthesize_frame(&healthy, e * healthy.files + i).unwrap())
                .collect();
            healthy_frames.push(frames);
        }
        let monitor_frames: Vec<_> = (0..monitored.files)
            .map(|i| synthesize_frame(&monitored, i).unwrap())
            .collect();

        let mut total = 0.0;
        for sensor in 0..sensors {
            let modes: Vec<_> = healthy_frames
                .iter()
                .map(|frames| {
                    compute_pom(&group_snapshot_matrix(frames, sensor, 1).unwrap()).unwrap()
                })
                .collect();
            let baseline = healthy_baseline(&modes).unwrap();
            let mode =
                compute_pom(&group_snapshot_matrix(&monitor_frames, sensor, 1).unwrap()).unwrap();
            total += raw_novelty(&mode, &baseline).unwrap();
        }
        total / sensors as f64
    }

    #[test]
    fn median_novelty_orders_strictly_by_severity() {
        let seeds: Vec<u64> = (0..20).collect();
        let mut medians = Vec::new();
        for level in DamageLevel::ALL {
            let mut values: Vec<f64> = seeds.iter().map(|s| mean_raw_ni(*s, level)).collect();
            values.sort_by(f64::total_cmp);
            let median = (values[9] + values[10]) / 2.0;
            medians.push(median);
        }
        assert!(
            medians[0] < medians[1] && medians[1] < medians[2] && medians[2] < medians[3],
            "median raw NI must increase with severity: {medians:?}"
        );
    }
}
