//! Strain-data ingestion: CSV parsing, the bounded edge buffer, and
//! per-sensor snapshot grouping.
//!
//! Input files carry one header line `t,s001,...,sNNN` and one row per time
//! sample, decimal-point floats throughout. Parsed frames queue in a
//! [`BufferState`] sized in bytes; when the buffer is full the oldest
//! frames are evicted first, and epochs are cut from the front in FIFO
//! order, so an epoch always holds the `m` oldest resident frames.
//!
//! [`group_snapshot_matrix`] turns an epoch of frames into one snapshot
//! matrix per sensor group: a group is a sliding window of `width` adjacent
//! sensor channels (default width 1, one group per sensor), each file
//! contributing one mean-centered column of the window's samples. Running
//! the novelty pipeline over all groups of an epoch therefore yields
//! exactly `s - width + 1` index values, one per group.
//!
//! The [`synth`] submodule generates deterministic synthetic datasets for
//! healthy and damaged scenarios.

pub mod synth;

use std::collections::VecDeque;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::shm::{SensorFrame, ShmError, SnapshotMatrix};

pub use synth::{
    file_name, synthesize_dataset, synthesize_file, synthesize_frame, DamageLevel,
    DamageScenario, NamedCsv, SynthParams,
};

/// Default edge-buffer capacity: 150 MB.
pub const DEFAULT_BUFFER_BYTES: usize = 150 * (1 << 20);

/// Errors produced by the ingestion layer.
#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed csv at line {line}: {detail}")]
    MalformedCsv { line: usize, detail: String },
    #[error("non-finite value at line {line}, column {column}")]
    NonFinite { line: usize, column: usize },
    #[error("ragged csv at line {line}: expected {expected} fields, got {got}")]
    RaggedRows {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("frame of {bytes} bytes exceeds the {capacity} byte buffer")]
    FrameTooLarge { bytes: usize, capacity: usize },
    #[error("epoch needs {need} frames but only {have} are buffered")]
    InsufficientFrames { have: usize, need: usize },
    #[error("bad dimensions: {0}")]
    BadDimensions(String),
    #[error(transparent)]
    Frame(#[from] ShmError),
}

/// Canonical name of the sensor group starting at zero-based sensor
/// `start_index`: groups are labeled by their first sensor, one-based.
pub fn sensor_group_name(start_index: usize) -> String {
    format!("s{:03}", start_index + 1)
}

/// Number of sliding-window groups over `sensor_count` channels.
pub fn group_count(sensor_count: usize, width: usize) -> Result<usize, IngestError> {
    if width == 0 || width > sensor_count {
        return Err(IngestError::BadDimensions(format!(
            "group width {width} must lie in 1..={sensor_count}"
        )));
    }
    Ok(sensor_count - width + 1)
}

/// Parses one strain CSV file into a frame.
///
/// The header must start with a `t` column; every data row must carry one
/// finite decimal value per column. The time column is positional only and
/// is not stored.
pub fn parse_frame(
    bytes: &[u8],
    bridge_id: &str,
    file_id: &str,
    sample_rate_hz: u32,
) -> Result<SensorFrame, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| csv_error_to_ingest(e, 1))?
        .clone();
    if headers.is_empty() || headers.get(0) != Some("t") {
        return Err(IngestError::MalformedCsv {
            line: 1,
            detail: "header must start with a 't' column".into(),
        });
    }
    let columns = headers.len();
    if columns < 2 {
        return Err(IngestError::MalformedCsv {
            line: 1,
            detail: "header lists no sensor columns".into(),
        });
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| csv_error_to_ingest(e, line))?;
        let mut row = Vec::with_capacity(columns - 1);
        for (column, field) in record.iter().enumerate() {
            let value: f64 = field.trim().parse().map_err(|_| IngestError::MalformedCsv {
                line,
                detail: format!("field {:?} in column {} is not a decimal number", field, column + 1),
            })?;
            if !value.is_finite() {
                return Err(IngestError::NonFinite {
                    line,
                    column: column + 1,
                });
            }
            if column > 0 {
                row.push(value);
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(IngestError::MalformedCsv {
            line: 1,
            detail: "file has a header but no data rows".into(),
        });
    }
    Ok(SensorFrame::from_rows(
        bridge_id,
        file_id,
        sample_rate_hz,
        &rows,
    )?)
}

fn csv_error_to_ingest(error: csv::Error, line: usize) -> IngestError {
    match error.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => IngestError::RaggedRows {
            line,
            expected: *expected_len as usize,
            got: *len as usize,
        },
        _ => IngestError::MalformedCsv {
            line,
            detail: error.to_string(),
        },
    }
}

/// Bounded FIFO frame buffer, sized in bytes.
#[derive(Debug, Clone)]
pub struct BufferState {
    capacity_bytes: usize,
    frames: VecDeque<SensorFrame>,
    resident_bytes: usize,
    evicted_total: u64,
}

impl BufferState {
    pub fn new(capacity_bytes: usize) -> Result<Self, IngestError> {
        if capacity_bytes == 0 {
            return Err(IngestError::BadDimensions(
                "buffer capacity must be positive".into(),
            ));
        }
        Ok(Self {
            capacity_bytes,
            frames: VecDeque::new(),
            resident_bytes: 0,
            evicted_total: 0,
        })
    }

    pub fn capacity_bytes(&self) -> usize {
        self.capacity_bytes
    }

    pub fn resident_bytes(&self) -> usize {
        self.resident_bytes
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Frames evicted since the buffer was created.
    pub fn evicted_total(&self) -> u64 {
        self.evicted_total
    }

    /// Queues a frame, evicting the oldest frames first if the buffer
    /// would overflow. Returns the evicted frames (usually none). A frame
    /// larger than the whole buffer is rejected.
    pub fn push(&mut self, frame: SensorFrame) -> Result<Vec<SensorFrame>, IngestError> {
        let bytes = frame.approx_bytes();
        if bytes > self.capacity_bytes {
            return Err(IngestError::FrameTooLarge {
                bytes,
                capacity: self.capacity_bytes,
            });
        }
        let mut evicted = Vec::new();
        while self.resident_bytes + bytes > self.capacity_bytes {
            let oldest = self
                .frames
                .pop_front()
                .expect("resident bytes imply resident frames");
            self.resident_bytes -= oldest.approx_bytes();
            self.evicted_total += 1;
            evicted.push(oldest);
        }
        self.resident_bytes += bytes;
        self.frames.push_back(frame);
        Ok(evicted)
    }

    /// Cuts an epoch: removes and returns the `m` oldest resident frames.
    pub fn epoch_batch(&mut self, m: usize) -> Result<Vec<SensorFrame>, IngestError> {
        if m == 0 {
            return Err(IngestError::BadDimensions(
                "epoch size must be positive".into(),
            ));
        }
        if self.frames.len() < m {
            return Err(IngestError::InsufficientFrames {
                have: self.frames.len(),
                need: m,
            });
        }
        let batch: Vec<SensorFrame> = self.frames.drain(..m).collect();
        self.resident_bytes -= batch.iter().map(SensorFrame::approx_bytes).sum::<usize>();
        Ok(batch)
    }
}

/// Builds the snapshot matrix of one sensor group across an epoch.
///
/// Each frame contributes one column: the samples of sensors
/// `[group_start, group_start + width)` stacked sensor-by-sensor, with the
/// column's mean removed. All frames must share one shape.
pub fn group_snapshot_matrix(
    frames: &[SensorFrame],
    group_start: usize,
    width: usize,
) -> Result<SnapshotMatrix, IngestError> {
    let first = frames.first().ok_or_else(|| {
        IngestError::BadDimensions("an epoch needs at least one frame".into())
    })?;
    let n_t = first.n_samples();
    let s = first.sensor_count();
    let groups = group_count(s, width)?;
    if group_start >= groups {
        return Err(IngestError::BadDimensions(format!(
            "group start {group_start} out of range for {groups} groups"
        )));
    }
    for frame in frames {
        if frame.n_samples() != n_t || frame.sensor_count() != s {
            return Err(IngestError::BadDimensions(format!(
                "frame {} is {}x{}, epoch expects {}x{}",
                frame.file_id(),
                frame.n_samples(),
                frame.sensor_count(),
                n_t,
                s
            )));
        }
    }

    let dim = n_t * width;
    let mut entries = DMatrix::<f64>::zeros(dim, frames.len());
    for (c, frame) in frames.iter().enumerate() {
        let values = frame.values();
        let mut column = entries.column_mut(c);
        for w in 0..width {
            for k in 0..n_t {
                column[w * n_t + k] = values[(k, group_start + w)];
            }
        }
        let mean = column.sum() / dim as f64;
        column.add_scalar_mut(-mean);
    }
    Ok(SnapshotMatrix::new(entries)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame_of(file_id: &str, rows: &[Vec<f64>]) -> SensorFrame {
        SensorFrame::from_rows("br1", file_id, 256, rows).unwrap()
    }

    fn small_frame(file_id: &str, scale: f64) -> SensorFrame {
        frame_of(
            file_id,
            &[
                vec![1.0 * scale, 4.0],
                vec![2.0 * scale, 5.0],
                vec![3.0 * scale, 6.0],
            ],
        )
    }

    #[test]
    fn parses_a_plain_csv_into_a_frame() {
        let csv = "t,s001,s002\n0.000000,1.0,0.0\n0.003906,2.0,0.0\n0.007812,3.0,0.0\n";
        let frame = parse_frame(csv.as_bytes(), "br1", "f0", 256).unwrap();
        assert_eq!(frame.n_samples(), 3);
        assert_eq!(frame.sensor_count(), 2);
        assert_eq!(frame.values()[(0, 0)], 1.0);
        assert_eq!(frame.values()[(2, 0)], 3.0);
        assert_eq!(frame.values()[(1, 1)], 0.0);
        assert_eq!(frame.bridge_id(), "br1");
        assert_eq!(frame.file_id(), "f0");
    }

    #[test]
    fn rejects_bad_headers_and_empty_files() {
        let err = parse_frame(b"time,s001\n0.0,1.0\n", "br1", "f0", 256).unwrap_err();
        assert!(matches!(err, IngestError::MalformedCsv { line: 1, .. }));
        let err = parse_frame(b"t\n0.0\n", "br1", "f0", 256).unwrap_err();
        assert!(matches!(err, IngestError::MalformedCsv { line: 1, .. }));
        let err = parse_frame(b"t,s001,s002\n", "br1", "f0", 256).unwrap_err();
        assert!(matches!(err, IngestError::MalformedCsv { line: 1, .. }));
    }

    #[test]
    fn rejects_ragged_rows_and_bad_tokens() {
        let err = parse_frame(
            b"t,s001,s002\n0.0,1.0,2.0\n0.1,1.0\n",
            "br1",
            "f0",
            256,
        )
        .unwrap_err();
        assert!(
            matches!(err, IngestError::RaggedRows { line: 3, expected: 3, got: 2 }),
            "got {err:?}"
        );
        let err = parse_frame(b"t,s001\n0.0,abc\n0.1,1.0\n", "br1", "f0", 256).unwrap_err();
        assert!(matches!(err, IngestError::MalformedCsv { line: 2, .. }));
    }

    #[test]
    fn rejects_non_finite_values() {
        let err = parse_frame(
            b"t,s001,s002\n0.0,1.0,NaN\n0.1,1.0,2.0\n",
            "br1",
            "f0",
            256,
        )
        .unwrap_err();
        assert!(matches!(err, IngestError::NonFinite { line: 2, column: 3 }));
        let err = parse_frame(
            b"t,s001,s002\n0.0,1.0,2.0\n0.1,inf,2.0\n",
            "br1",
            "f0",
            256,
        )
        .unwrap_err();
        assert!(matches!(err, IngestError::NonFinite { line: 3, column: 2 }));
    }

    #[test]
    fn buffer_evicts_oldest_frames_when_full() {
        let frame_bytes = small_frame("f", 1.0).approx_bytes();
        let mut buffer = BufferState::new(frame_bytes * 3).unwrap();
        for i in 0..3 {
            let evicted = buffer.push(small_frame(&format!("f{i}"), 1.0)).unwrap();
            assert!(evicted.is_empty());
        }
        assert_eq!(buffer.len(), 3);
        assert_eq!(buffer.resident_bytes(), frame_bytes * 3);
        let evicted = buffer.push(small_frame("f3", 1.0)).unwrap();
        assert_eq!(evicted.len(), 1);
        assert_eq!(evicted[0].file_id(), "f0");
        assert_eq!(buffer.evicted_total(), 1);
        assert_eq!(buffer.len(), 3);
    }

    #[test]
    fn buffer_rejects_oversized_frames_and_keeps_accounting() {
        let frame = small_frame("f0", 1.0);
        let mut buffer = BufferState::new(frame.approx_bytes() - 1).unwrap();
        assert!(matches!(
            buffer.push(frame),
            Err(IngestError::FrameTooLarge { .. })
        ));
        assert_eq!(buffer.len(), 0);
        assert_eq!(buffer.resident_bytes(), 0);
        assert!(BufferState::new(0).is_err());
    }

    #[test]
    fn epochs_come_out_in_fifo_order() {
        let mut buffer = BufferState::new(DEFAULT_BUFFER_BYTES).unwrap();
        for i in 0..5 {
            buffer.push(small_frame(&format!("f{i}"), 1.0)).unwrap();
        }
        assert!(matches!(
            buffer.epoch_batch(6),
            Err(IngestError::InsufficientFrames { have: 5, need: 6 })
        ));
        let batch = buffer.epoch_batch(3).unwrap();
        let ids: Vec<&str> = batch.iter().map(SensorFrame::file_id).collect();
        assert_eq!(ids, ["f0", "f1", "f2"]);
        assert_eq!(buffer.len(), 2);
        let batch = buffer.epoch_batch(2).unwrap();
        let ids: Vec<&str> = batch.iter().map(SensorFrame::file_id).collect();
        assert_eq!(ids, ["f3", "f4"]);
        assert_eq!(buffer.resident_bytes(), 0);
    }

    #[test]
    fn pushed_frames_are_either_resident_evicted_or_batched() {
        let frame_bytes = small_frame("f", 1.0).approx_bytes();
        let mut buffer = BufferState::new(frame_bytes * 4).unwrap();
        let mut evicted = 0usize;
        let mut batched = 0usize;
        for i in 0..40 {
            evicted += buffer.push(small_frame(&format!("f{i}"), 1.0)).unwrap().len();
            if i % 5 == 4 {
                batched += buffer.epoch_batch(2).unwrap().len();
            }
        }
        assert_eq!(evicted + batched + buffer.len(), 40);
        assert_eq!(buffer.evicted_total() as usize, evicted);
    }

    #[test]
    fn group_naming_and_counts_follow_the_window() {
        assert_eq!(sensor_group_name(0), "s001");
        assert_eq!(sensor_group_name(50), "s051");
        assert_eq!(group_count(51, 1).unwrap(), 51);
        assert_eq!(group_count(5, 2).unwrap(), 4);
        assert_eq!(group_count(5, 5).unwrap(), 1);
        assert!(group_count(5, 6).is_err());
        assert!(group_count(5, 0).is_err());
    }

    #[test]
    fn group_matrix_stacks_centered_per_file_columns() {
        let frames = [small_frame("f0", 1.0), small_frame("f1", 2.0)];
        // Group 0, width 1: columns are the first sensor's traces, centered.
        let snap = group_snapshot_matrix(&frames, 0, 1).unwrap();
        assert_eq!(snap.feature_dim(), 3);
        assert_eq!(snap.snapshot_count(), 2);
        assert_eq!(snap.entries()[(0, 0)], -1.0);
        assert_eq!(snap.entries()[(2, 0)], 1.0);
        assert_eq!(snap.entries()[(0, 1)], -2.0);
        assert_eq!(snap.entries()[(2, 1)], 2.0);
        // Width 2 stacks both sensors into one 6-row column.
        let snap = group_snapshot_matrix(&frames, 0, 2).unwrap();
        assert_eq!(snap.feature_dim(), 6);
        for c in 0..2 {
            let sum: f64 = snap.entries().column(c).sum();
            assert!(sum.abs() < 1e-12);
        }
        // Shape mismatches are rejected.
        let odd = frame_of("odd", &[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let err = group_snapshot_matrix(&[small_frame("f0", 1.0), odd], 0, 1).unwrap_err();
        assert!(matches!(err, IngestError::BadDimensions(_)));
    }
}
