//! Structural-health feature extraction and novelty scoring.
//!
//! The monitoring pipeline turns windows of strain samples into a single
//! scalar per sensor group and epoch:
//!
//! 1. [`build_snapshot_matrix`] mean-centers a sensor frame into a snapshot
//!    matrix (one column per time snapshot).
//! 2. [`compute_pom`] extracts the dominant proper orthogonal mode, the left
//!    singular vector paired with the largest singular value.
//! 3. [`healthy_baseline`] averages the modes of known-healthy epochs.
//! 4. [`raw_novelty`] measures the Euclidean distance between a mode and the
//!    baseline; [`normalize_novelty`] maps it into `[0, 1]` against a
//!    calibrated reference, and [`classify`] applies the threshold rule: a
//!    normalized index within `eps` of 1 flags the structure as unhealthy.
//!
//! All operations are pure and deterministic; ties inside the SVD are broken
//! towards the lowest index and the mode sign is pinned so that repeated runs
//! return bit-identical vectors.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default sampling rate of the strain sensors, in hertz.
pub const DEFAULT_SAMPLE_RATE_HZ: u32 = 256;

/// Default half-width of the unhealthy band around a normalized index of 1.
pub const DEFAULT_EPS: f64 = 0.15;

/// Tolerance on the unit norm of a returned mode vector.
pub const POM_UNIT_NORM_TOL: f64 = 1e-9;

/// Iteration cap handed to the SVD before reporting non-convergence.
const SVD_MAX_ITERATIONS: usize = 4096;

/// Errors produced by the feature-extraction layer.
#[derive(Debug, Error, PartialEq)]
pub enum ShmError {
    /// A sample was NaN or infinite.
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    /// The frame or matrix is below the minimum useful shape.
    #[error("input too small: {rows} rows x {cols} columns (need at least {min_rows}x{min_cols})")]
    TooSmall {
        rows: usize,
        cols: usize,
        min_rows: usize,
        min_cols: usize,
    },
    /// Every entry of the snapshot matrix is zero, so no mode exists.
    #[error("snapshot matrix is identically zero")]
    ZeroMatrix,
    /// The iterative SVD did not converge within the iteration cap.
    #[error("svd did not converge within {0} iterations")]
    SvdFailure(usize),
    /// A baseline was requested over an empty set of modes.
    #[error("empty baseline: need at least one feature vector")]
    EmptyBaseline,
    /// Two vectors that must share a dimension do not.
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    /// The calibration reference is unusable.
    #[error("bad calibration: n_ref must be finite and positive, got {0}")]
    BadCalibration(f64),
    /// The classification threshold is outside the open unit interval.
    #[error("bad threshold: eps must lie in (0, 1), got {0}")]
    BadThreshold(f64),
    /// Calibration inputs were all zero, leaving no scale to normalize by.
    #[error("calibration inputs are all zero")]
    AllZero,
    /// A novelty record failed its internal consistency checks.
    #[error("invalid novelty record: {0}")]
    InvalidRecord(String),
}

/// One window of strain samples for a whole sensor array.
///
/// Rows are time samples, columns are sensors. Values are validated to be
/// finite on construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    bridge_id: String,
    file_id: String,
    sample_rate_hz: u32,
    values: DMatrix<f64>,
}

impl SensorFrame {
    /// Minimum number of time samples in a frame.
    pub const MIN_SAMPLES: usize = 2;
    /// Minimum number of sensors in a frame.
    pub const MIN_SENSORS: usize = 2;

    /// Builds a frame from an `n_t x s` matrix of samples.
    pub fn new(
        bridge_id: impl Into<String>,
        file_id: impl Into<String>,
        sample_rate_hz: u32,
        values: DMatrix<f64>,
    ) -> Result<Self, ShmError> {
        if values.nrows() < Self::MIN_SAMPLES || values.ncols() < Self::MIN_SENSORS {
            return Err(ShmError::TooSmall {
                rows: values.nrows(),
                cols: values.ncols(),
                min_rows: Self::MIN_SAMPLES,
                min_cols: Self::MIN_SENSORS,
            });
        }
        check_finite(&values)?;
        Ok(Self {
            bridge_id: bridge_id.into(),
            file_id: file_id.into(),
            sample_rate_hz,
            values,
        })
    }

    /// Builds a frame from row slices (one row per time sample).
    pub fn from_rows(
        bridge_id: impl Into<String>,
        file_id: impl Into<String>,
        sample_rate_hz: u32,
        rows: &[Vec<f64>],
    ) -> Result<Self, ShmError> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if n_rows < Self::MIN_SAMPLES || n_cols < Self::MIN_SENSORS {
            return Err(ShmError::TooSmall {
                rows: n_rows,
                cols: n_cols,
                min_rows: Self::MIN_SAMPLES,
                min_cols: Self::MIN_SENSORS,
            });
        }
        debug_assert!(rows.iter().all(|r| r.len() == n_cols));
        let values = DMatrix::from_fn(n_rows, n_cols, |i, j| rows[i][j]);
        Self::new(bridge_id, file_id, sample_rate_hz, values)
    }

    /// Identifier of the monitored bridge.
    pub fn bridge_id(&self) -> &str {
        &self.bridge_id
    }

    /// Identifier of the source file or capture window.
    pub fn file_id(&self) -> &str {
        &self.file_id
    }

    /// Sampling rate in hertz.
    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    /// Number of time samples (rows).
    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    /// Number of sensors (columns).
    pub fn sensor_count(&self) -> usize {
        self.values.ncols()
    }

    /// The raw sample matrix, `n_t x s`.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// In-memory footprint estimate used for buffer accounting: each sample
    /// is one `f64`.
    pub fn approx_bytes(&self) -> usize {
        self.values.nrows() * self.values.ncols() * std::mem::size_of::<f64>()
    }
}

/// A mean-centered matrix whose columns are snapshots of a feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    entries: DMatrix<f64>,
}

impl SnapshotMatrix {
    /// Wraps an already-centered `feature_dim x n_snap` matrix, validating
    /// that every entry is finite and the shape is non-empty.
    pub fn new(entries: DMatrix<f64>) -> Result<Self, ShmError> {
        if entries.nrows() < 1 || entries.ncols() < 1 {
            return Err(ShmError::TooSmall {
                rows: entries.nrows(),
                cols: entries.ncols(),
                min_rows: 1,
                min_cols: 1,
            });
        }
        check_finite(&entries)?;
        Ok(Self { entries })
    }

    /// Dimension of one snapshot (number of rows).
    pub fn feature_dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Number of snapshots (columns).
    pub fn snapshot_count(&self) -> usize {
        self.entries.ncols()
    }

    /// The underlying matrix.
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }
}

/// What a feature vector represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// A dominant proper orthogonal mode (unit norm).
    Pom,
    /// The arithmetic mean of several modes (norm at most 1).
    BaselineMean,
}

/// A feature vector extracted from sensor data, tagged with its origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    kind: FeatureKind,
    components: DVector<f64>,
}

impl FeatureVector {
    /// Wraps raw components under the given kind. Modes must be unit norm
    /// within [`POM_UNIT_NORM_TOL`].
    pub fn new(kind: FeatureKind, components: DVector<f64>) -> Result<Self, ShmError> {
        if components.is_empty() {
            return Err(ShmError::TooSmall {
                rows: 0,
                cols: 1,
                min_rows: 1,
                min_cols: 1,
            });
        }
        check_finite_vec(&components)?;
        if kind == FeatureKind::Pom && (components.norm() - 1.0).abs() > POM_UNIT_NORM_TOL {
            return Err(ShmError::InvalidRecord(format!(
                "mode vector norm {} is not 1 within {}",
                components.norm(),
                POM_UNIT_NORM_TOL
            )));
        }
        Ok(Self { kind, components })
    }

    /// The vector's role in the pipeline.
    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    /// Vector length.
    pub fn len(&self) -> usize {
        self.components.len()
    }

    /// True when the vector has no components (never for validated vectors).
    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// The components themselves.
    pub fn components(&self) -> &DVector<f64> {
        &self.components
    }
}

/// Structural verdict for one sensor group in one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HealthState {
    Healthy,
    Unhealthy,
}

impl std::fmt::Display for HealthState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HealthState::Healthy => write!(f, "healthy"),
            HealthState::Unhealthy => write!(f, "unhealthy"),
        }
    }
}

/// Reference scale obtained from a calibration run.
///
/// `n_ref` is the largest raw novelty index observed while replaying known
/// worst-case exemplars; dividing by it maps raw indices into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    n_ref: f64,
    healthy_count: usize,
}

impl Calibration {
    /// Builds a calibration from an externally supplied reference.
    pub fn new(n_ref: f64, healthy_count: usize) -> Result<Self, ShmError> {
        if !n_ref.is_finite() || n_ref <= 0.0 {
            return Err(ShmError::BadCalibration(n_ref));
        }
        Ok(Self {
            n_ref,
            healthy_count,
        })
    }

    /// The normalization denominator.
    pub fn n_ref(&self) -> f64 {
        self.n_ref
    }

    /// How many healthy epochs informed the baseline this calibration
    /// accompanies.
    pub fn healthy_count(&self) -> usize {
        self.healthy_count
    }
}

/// One scored observation: the unit of on-chain storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoveltyRecord {
    pub bridge_id: String,
    pub sensor_group: String,
    pub epoch: u64,
    pub ni_raw: f64,
    pub ni_norm: f64,
    pub state: HealthState,
    pub eps: f64,
}

impl NoveltyRecord {
    /// Builds a record, enforcing that the stored state matches the
    /// threshold rule applied to `ni_norm` and `eps`.
    pub fn new(
        bridge_id: impl Into<String>,
        sensor_group: impl Into<String>,
        epoch: u64,
        ni_raw: f64,
        ni_norm: f64,
        eps: f64,
    ) -> Result<Self, ShmError> {
        if !ni_raw.is_finite() || ni_raw < 0.0 {
            return Err(ShmError::InvalidRecord(format!(
                "raw index must be finite and non-negative, got {ni_raw}"
            )));
        }
        if !(0.0..=1.0).contains(&ni_norm) {
            return Err(ShmError::InvalidRecord(format!(
                "normalized index must lie in [0, 1], got {ni_norm}"
            )));
        }
        let state = classify(ni_norm, eps)?;
        Ok(Self {
            bridge_id: bridge_id.into(),
            sensor_group: sensor_group.into(),
            epoch,
            ni_raw,
            ni_norm,
            state,
            eps,
        })
    }
}

/// Centers a frame into a snapshot matrix.
///
/// The frame's `n_t x s` sample block is transposed so that each column is
/// one instantaneous reading of the whole array, then each sensor row has
/// its temporal mean removed. A `3 x 2` frame with sensor one reading
/// `1, 2, 3` and sensor two flat at zero centers to
/// `[[-1, 0, 1], [0, 0, 0]]`.
pub fn build_snapshot_matrix(frame: &SensorFrame) -> Result<SnapshotMatrix, ShmError> {
    let mut centered = frame.values().transpose();
    for mut row in centered.row_iter_mut() {
        let mean = row.sum() / row.len() as f64;
        row.add_scalar_mut(-mean);
    }
    SnapshotMatrix::new(centered)
}

/// Extracts the dominant proper orthogonal mode of a snapshot matrix.
///
/// The mode is the left singular vector paired with the largest singular
/// value. When several singular values tie for the maximum, the candidate
/// with the lowest index in the decomposition wins. The sign is pinned by
/// requiring the component of largest magnitude (lowest index on magnitude
/// ties) to be non-negative, and the result is renormalized to unit length.
pub fn compute_pom(snapshots: &SnapshotMatrix) -> Result<FeatureVector, ShmError> {
    let m = snapshots.entries();
    if m.iter().all(|v| *v == 0.0) {
        return Err(ShmError::ZeroMatrix);
    }
    let svd = m
        .clone()
        .try_svd_unordered(true, false, f64::EPSILON, SVD_MAX_ITERATIONS)
        .ok_or(ShmError::SvdFailure(SVD_MAX_ITERATIONS))?;
    let sv = &svd.singular_values;
    let mut dominant = 0;
    for i in 1..sv.len() {
        if sv[i] > sv[dominant] {
            dominant = i;
        }
    }
    let u = svd
        .u
        .as_ref()
        .expect("left singular vectors were requested");
    let mut mode = u.column(dominant).clone_owned();
    let norm = mode.norm();
    if !norm.is_finite() || norm == 0.0 {
        return Err(ShmError::SvdFailure(SVD_MAX_ITERATIONS));
    }
    mode /= norm;
    let mut pivot = 0;
    for i in 1..mode.len() {
        if mode[i].abs() > mode[pivot].abs() {
            pivot = i;
        }
    }
    if mode[pivot] < 0.0 {
        mode.neg_mut();
    }
    FeatureVector::new(FeatureKind::Pom, mode)
}

/// Averages the modes of known-healthy epochs into a baseline vector.
///
/// A mode shape is only defined up to sign, so each input is first aligned
/// to the first one (flipped when their dot product is negative) and the
/// aligned vectors are averaged component-wise: the baseline of `(1, 0)`
/// and `(0, 1)` is `(0.5, 0.5)`. All inputs must share one dimension.
pub fn healthy_baseline(modes: &[FeatureVector]) -> Result<FeatureVector, ShmError> {
    let first = modes.first().ok_or(ShmError::EmptyBaseline)?;
    let dim = first.len();
    let mut sum = DVector::<f64>::zeros(dim);
    for mode in modes {
        if mode.len() != dim {
            return Err(ShmError::DimensionMismatch {
                left: dim,
                right: mode.len(),
            });
        }
        if mode.components().dot(first.components()) < 0.0 {
            sum -= mode.components();
        } else {
            sum += mode.components();
        }
    }
    sum /= modes.len() as f64;
    FeatureVector::new(FeatureKind::BaselineMean, sum)
}

/// Raw novelty index: the Euclidean distance between a mode and the healthy
/// baseline. A difference vector of `(3, 4)` scores 5.
///
/// A mode shape is only defined up to sign, so the mode is aligned to the
/// baseline before differencing; equivalently, the result is the smaller
/// of the distances from `χ` and `-χ` to the baseline.
pub fn raw_novelty(mode: &FeatureVector, baseline: &FeatureVector) -> Result<f64, ShmError> {
    if mode.len() != baseline.len() {
        return Err(ShmError::DimensionMismatch {
            left: mode.len(),
            right: baseline.len(),
        });
    }
    let direct = (mode.components() - baseline.components()).norm();
    let flipped = (mode.components() + baseline.components()).norm();
    Ok(direct.min(flipped))
}

/// Maps a raw novelty index into `[0, 1]` by dividing by the calibrated
/// reference. Raw values beyond the reference saturate at 1, since they are
/// at least as novel as the worst calibration exemplar.
pub fn normalize_novelty(raw: f64, calibration: &Calibration) -> Result<f64, ShmError> {
    if !raw.is_finite() || raw < 0.0 {
        return Err(ShmError::InvalidRecord(format!(
            "raw index must be finite and non-negative, got {raw}"
        )));
    }
    Ok((raw / calibration.n_ref()).min(1.0))
}

/// Threshold rule: the structure is unhealthy exactly when the normalized
/// index lies strictly within `eps` of 1.
///
/// With `eps = 0.15`, an index of 0.86 is unhealthy and 0.85 is healthy.
pub fn classify(ni_norm: f64, eps: f64) -> Result<HealthState, ShmError> {
    if !eps.is_finite() || eps <= 0.0 || eps >= 1.0 {
        return Err(ShmError::BadThreshold(eps));
    }
    if !ni_norm.is_finite() {
        return Err(ShmError::InvalidRecord(format!(
            "normalized index must be finite, got {ni_norm}"
        )));
    }
    if (ni_norm - 1.0).abs() < eps {
        Ok(HealthState::Unhealthy)
    } else {
        Ok(HealthState::Healthy)
    }
}

/// Derives the normalization reference from raw indices observed during a
/// calibration run that includes known worst-case exemplars: `n_ref` is the
/// maximum. Raw values `0.2, 0.8, 0.5` calibrate to 0.8.
pub fn calibrate(raw_indices: &[f64], healthy_count: usize) -> Result<Calibration, ShmError> {
    if raw_indices.is_empty() {
        return Err(ShmError::EmptyBaseline);
    }
    let mut n_ref = 0.0f64;
    for &raw in raw_indices {
        if !raw.is_finite() || raw < 0.0 {
            return Err(ShmError::InvalidRecord(format!(
                "raw index must be finite and non-negative, got {raw}"
            )));
        }
        if raw > n_ref {
            n_ref = raw;
        }
    }
    if n_ref == 0.0 {
        return Err(ShmError::AllZero);
    }
    Calibration::new(n_ref, healthy_count)
}

fn check_finite(values: &DMatrix<f64>) -> Result<(), ShmError> {
    for j in 0..values.ncols() {
        for i in 0..values.nrows() {
            if !values[(i, j)].is_finite() {
                return Err(ShmError::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

fn check_finite_vec(values: &DVector<f64>) -> Result<(), ShmError> {
    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(ShmError::NonFinite { row: i, col: 0 });
        }
    }
    Ok(())
}
