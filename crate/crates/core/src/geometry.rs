//! Point-cloud domain types and the pure geometric operations on them.
//!
//! Coordinates are `f64` metres. Region boxes are closed on every side.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for orthonormality and determinant checks on rotations.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("non-finite coordinate in frame {frame_index}")]
    NonFinite { frame_index: u64 },
    #[error("region of interest has min > max on axis {axis}")]
    InvalidRoi { axis: usize },
    #[error("rotation is not orthonormal with determinant +1 (deviation {deviation:e})")]
    NotARotation { deviation: f64 },
    #[error("non-finite translation")]
    NonFiniteTranslation,
    #[error("frames not strictly ordered by index at position {position}")]
    UnorderedFrames { position: usize },
    #[error("nominal rate must be positive and finite, got {0}")]
    InvalidRate(f64),
    #[error("unknown projection plane {0:?} (expected x-y, x-z or y-z)")]
    UnknownPlane(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Coordinate by axis number: 0 = x, 1 = y, 2 = z.
    pub fn axis(&self, k: usize) -> f64 {
        match k {
            0 => self.x,
            1 => self.y,
            2 => self.z,
            _ => panic!("axis index {k} out of range"),
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

/// A projected point: the two coordinates a [`ProjectionPlane`] retains, in order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub u: f64,
    pub v: f64,
}

impl Point2 {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

/// One timestamped set of points, from a single sensor or merged.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloudFrame {
    pub frame_index: u64,
    pub timestamp_micros: u64,
    pub points: Vec<Point3>,
}

impl PointCloudFrame {
    pub fn new(frame_index: u64, timestamp_micros: u64, points: Vec<Point3>) -> Result<Self, GeometryError> {
        let frame = Self { frame_index, timestamp_micros, points };
        frame.validate()?;
        Ok(frame)
    }

    pub fn empty(frame_index: u64, timestamp_micros: u64) -> Self {
        Self { frame_index, timestamp_micros, points: Vec::new() }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.points.iter().all(Point3::is_finite) {
            Ok(())
        } else {
            Err(GeometryError::NonFinite { frame_index: self.frame_index })
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Same frame with every coordinate rounded through `f32`, the precision
    /// used on the wire and in sequence files.
    pub fn narrowed_to_f32(&self) -> Self {
        let points = self
            .points
            .iter()
            .map(|p| Point3::new(p.x as f32 as f64, p.y as f32 as f64, p.z as f32 as f64))
            .collect();
        Self { frame_index: self.frame_index, timestamp_micros: self.timestamp_micros, points }
    }
}

/// An ordered sequence of frames captured at a nominal rate.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: Vec<PointCloudFrame>,
    nominal_rate_hz: f64,
}

impl FrameSequence {
    pub fn new(frames: Vec<PointCloudFrame>, nominal_rate_hz: f64) -> Result<Self, GeometryError> {
        if !(nominal_rate_hz.is_finite() && nominal_rate_hz > 0.0) {
            return Err(GeometryError::InvalidRate(nominal_rate_hz));
        }
        for (position, pair) in frames.windows(2).enumerate() {
            if pair[1].frame_index <= pair[0].frame_index {
                return Err(GeometryError::UnorderedFrames { position: position + 1 });
            }
        }
        for frame in &frames {
            frame.validate()?;
        }
        Ok(Self { frames, nominal_rate_hz })
    }

    pub fn frames(&self) -> &[PointCloudFrame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<PointCloudFrame> {
        self.frames
    }

    pub fn nominal_rate_hz(&self) -> f64 {
        self.nominal_rate_hz
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Period of one frame at the nominal rate, rounded to whole microseconds.
    pub fn frame_period_micros(&self) -> u64 {
        (1e6 / self.nominal_rate_hz).round() as u64
    }

    /// Time covered by the sequence: first to last timestamp plus one frame
    /// period, so 540 frames at 9 Hz cover 60 s.
    pub fn duration_micros(&self) -> u64 {
        match (self.frames.first(), self.frames.last()) {
            (Some(first), Some(last)) => {
                last.timestamp_micros.saturating_sub(first.timestamp_micros) + self.frame_period_micros()
            }
            _ => 0,
        }
    }
}

/// Axis-aligned closed box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionOfInterest {
    min: Point3,
    max: Point3,
}

impl RegionOfInterest {
    pub fn new(min: Point3, max: Point3) -> Result<Self, GeometryError> {
        for axis in 0..3 {
            let (lo, hi) = (min.axis(axis), max.axis(axis));
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(GeometryError::InvalidRoi { axis });
            }
        }
        Ok(Self { min, max })
    }

    /// Box given in millimetres.
    pub fn from_mm(min_mm: [f64; 3], max_mm: [f64; 3]) -> Result<Self, GeometryError> {
        let m = |a: [f64; 3]| Point3::new(a[0] / 1000.0, a[1] / 1000.0, a[2] / 1000.0);
        Self::new(m(min_mm), m(max_mm))
    }

    /// The 430 mm x 450 mm x 170 mm space above the keyboard, centred
    /// laterally on the keyboard origin and rising from the key plane (z = 0).
    pub fn keyboard_default() -> Self {
        Self {
            min: Point3::new(-0.215, -0.225, 0.0),
            max: Point3::new(0.215, 0.225, 0.170),
        }
    }

    pub fn min(&self) -> Point3 {
        self.min
    }

    pub fn max(&self) -> Point3 {
        self.max
    }

    pub fn center(&self) -> Point3 {
        Point3::new(
            0.5 * (self.min.x + self.max.x),
            0.5 * (self.min.y + self.max.y),
            0.5 * (self.min.z + self.max.z),
        )
    }

    #[inline]
    pub fn contains(&self, p: &Point3) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }

    /// Everything in R^3; useful for a sensor that forwards all points.
    pub fn everything() -> Self {
        Self {
            min: Point3::new(f64::MIN, f64::MIN, f64::MIN),
            max: Point3::new(f64::MAX, f64::MAX, f64::MAX),
        }
    }
}

impl Default for RegionOfInterest {
    fn default() -> Self {
        Self::keyboard_default()
    }
}

/// Rotation followed by translation, mapping sensor coordinates into the
/// shared world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl RigidTransform {
    pub fn new(rotation: [[f64; 3]; 3], translation: [f64; 3]) -> Result<Self, GeometryError> {
        if !translation.iter().all(|t| t.is_finite()) {
            return Err(GeometryError::NonFiniteTranslation);
        }
        let deviation = rotation_deviation(&rotation);
        if deviation.is_nan() || deviation > ROTATION_TOLERANCE {
            return Err(GeometryError::NotARotation { deviation });
        }
        Ok(Self { rotation, translation })
    }

    pub const fn identity() -> Self {
        Self {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    pub fn translation_only(translation: [f64; 3]) -> Result<Self, GeometryError> {
        Self::new(Self::identity().rotation, translation)
    }

    /// Intrinsic x-y-z (roll, pitch, yaw) rotation in degrees composed as
    /// `Rz(yaw) * Ry(pitch) * Rx(roll)`.
    pub fn from_euler_deg(roll: f64, pitch: f64, yaw: f64, translation: [f64; 3]) -> Result<Self, GeometryError> {
        let (sr, cr) = roll.to_radians().sin_cos();
        let (sp, cp) = pitch.to_radians().sin_cos();
        let (sy, cy) = yaw.to_radians().sin_cos();
        let rotation = [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ];
        Self::new(rotation, translation)
    }

    pub fn rotation(&self) -> &[[f64; 3]; 3] {
        &self.rotation
    }

    pub fn translation(&self) -> [f64; 3] {
        self.translation
    }

    #[inline]
    pub fn apply(&self, p: &Point3) -> Point3 {
        let r = &self.rotation;
        let t = &self.translation;
        Point3::new(
            r[0][0] * p.x + r[0][1] * p.y + r[0][2] * p.z + t[0],
            r[1][0] * p.x + r[1][1] * p.y + r[1][2] * p.z + t[1],
            r[2][0] * p.x + r[2][1] * p.y + r[2][2] * p.z + t[2],
        )
    }

    /// `R^T (p - t)`.
    pub fn inverse(&self) -> Self {
        let r = &self.rotation;
        let mut rt = [[0.0; 3]; 3];
        for (i, row) in rt.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = r[j][i];
            }
        }
        let t = &self.translation;
        let translation = [
            -(rt[0][0] * t[0] + rt[0][1] * t[1] + rt[0][2] * t[2]),
            -(rt[1][0] * t[0] + rt[1][1] * t[1] + rt[1][2] * t[2]),
            -(rt[2][0] * t[0] + rt[2][1] * t[1] + rt[2][2] * t[2]),
        ];
        Self { rotation: rt, translation }
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

/// Largest deviation of `R^T R` from identity, or of det(R) from +1.
fn rotation_deviation(r: &[[f64; 3]; 3]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
            let expected = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot - expected).abs());
        }
    }
    let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
        + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
    // NaN entries make every comparison false; surface them as a deviation.
    if det.is_nan() {
        return f64::INFINITY;
    }
    worst.max((det - 1.0).abs())
}

/// The coordinate pair kept after dropping one axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProjectionPlane {
    #[serde(rename = "x-y")]
    XY,
    #[serde(rename = "x-z")]
    XZ,
    #[serde(rename = "y-z")]
    YZ,
}

impl ProjectionPlane {
    pub const ALL: [ProjectionPlane; 3] = [ProjectionPlane::YZ, ProjectionPlane::XZ, ProjectionPlane::XY];

    pub fn as_str(&self) -> &'static str {
        match self {
            ProjectionPlane::XY => "x-y",
            ProjectionPlane::XZ => "x-z",
            ProjectionPlane::YZ => "y-z",
        }
    }

    /// Axis numbers of the retained (first, second) coordinates.
    pub fn axes(&self) -> (usize, usize) {
        match self {
            ProjectionPlane::XY => (0, 1),
            ProjectionPlane::XZ => (0, 2),
            ProjectionPlane::YZ => (1, 2),
        }
    }

    #[inline]
    pub fn project_point(&self, p: &Point3) -> Point2 {
        match self {
            ProjectionPlane::XY => Point2::new(p.x, p.y),
            ProjectionPlane::XZ => Point2::new(p.x, p.z),
            ProjectionPlane::YZ => Point2::new(p.y, p.z),
        }
    }
}

impl fmt::Display for ProjectionPlane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProjectionPlane {
    type Err = GeometryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "x-y" | "xy" => Ok(ProjectionPlane::XY),
            "x-z" | "xz" => Ok(ProjectionPlane::XZ),
            "y-z" | "yz" => Ok(ProjectionPlane::YZ),
            _ => Err(GeometryError::UnknownPlane(s.to_string())),
        }
    }
}

/// Keeps the points inside `roi` (boundary inclusive) in their original order.
pub fn filter_roi(frame: &PointCloudFrame, roi: &RegionOfInterest) -> PointCloudFrame {
    PointCloudFrame {
        frame_index: frame.frame_index,
        timestamp_micros: frame.timestamp_micros,
        points: frame.points.iter().copied().filter(|p| roi.contains(p)).collect(),
    }
}

pub fn apply_transform(frame: &PointCloudFrame, t: &RigidTransform) -> PointCloudFrame {
    PointCloudFrame {
        frame_index: frame.frame_index,
        timestamp_micros: frame.timestamp_micros,
        points: frame.points.iter().map(|p| t.apply(p)).collect(),
    }
}

pub fn project(frame: &PointCloudFrame, plane: ProjectionPlane) -> Vec<Point2> {
    frame.points.iter().map(|p| plane.project_point(p)).collect()
}
