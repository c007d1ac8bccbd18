//! Rasterization of projected points into fixed-size intensity images.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{filter_roi, project, FrameSequence, Point2, ProjectionPlane, RegionOfInterest};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RasterError {
    #[error("raster dimensions must be at least 1x1, got {width}x{height}")]
    ZeroSize { width: usize, height: usize },
    #[error("raster bounds are degenerate or non-finite: {0:?}")]
    DegenerateBounds(RasterBounds),
    #[error("image buffer holds {actual} values, expected {expected}")]
    BufferLength { expected: usize, actual: usize },
    #[error("image intensities must be finite and non-negative")]
    InvalidIntensity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntensityMode {
    /// Number of points landing in the cell.
    #[default]
    Count,
    /// 1 if any point lands in the cell.
    Binary,
}

impl IntensityMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            IntensityMode::Count => "count",
            IntensityMode::Binary => "binary",
        }
    }
}

impl fmt::Display for IntensityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Rectangle over the two retained coordinates, metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RasterBounds {
    pub u_min: f64,
    pub u_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl RasterBounds {
    /// The ROI box seen along the removed axis.
    pub fn from_roi(roi: &RegionOfInterest, plane: ProjectionPlane) -> Self {
        let (a, b) = plane.axes();
        let (min, max) = (roi.min(), roi.max());
        Self { u_min: min.axis(a), u_max: max.axis(a), v_min: min.axis(b), v_max: max.axis(b) }
    }

    fn is_valid(&self) -> bool {
        [self.u_min, self.u_max, self.v_min, self.v_max].iter().all(|v| v.is_finite())
            && self.u_max > self.u_min
            && self.v_max > self.v_min
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RasterConfig {
    plane: ProjectionPlane,
    bounds: RasterBounds,
    width: usize,
    height: usize,
    mode: IntensityMode,
}

pub const DEFAULT_GRID: usize = 64;

impl RasterConfig {
    pub fn new(
        plane: ProjectionPlane,
        bounds: RasterBounds,
        width: usize,
        height: usize,
        mode: IntensityMode,
    ) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::ZeroSize { width, height });
        }
        if !bounds.is_valid() {
            return Err(RasterError::DegenerateBounds(bounds));
        }
        Ok(Self { plane, bounds, width, height, mode })
    }

    /// Grid spanning the projected ROI.
    pub fn for_roi(
        roi: &RegionOfInterest,
        plane: ProjectionPlane,
        width: usize,
        height: usize,
        mode: IntensityMode,
    ) -> Result<Self, RasterError> {
        Self::new(plane, RasterBounds::from_roi(roi, plane), width, height, mode)
    }

    /// 64x64 count raster over the default keyboard ROI.
    pub fn default_for(plane: ProjectionPlane) -> Self {
        Self::for_roi(&RegionOfInterest::keyboard_default(), plane, DEFAULT_GRID, DEFAULT_GRID, IntensityMode::Count)
            .expect("default raster config is valid")
    }

    pub fn plane(&self) -> ProjectionPlane {
        self.plane
    }

    pub fn bounds(&self) -> RasterBounds {
        self.bounds
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn mode(&self) -> IntensityMode {
        self.mode
    }

    pub fn with_plane(self, plane: ProjectionPlane) -> Self {
        Self { plane, ..self }
    }

    pub fn with_mode(self, mode: IntensityMode) -> Self {
        Self { mode, ..self }
    }

    /// Short stable digest of every field, binding a trained model to the
    /// raster that produced its metrics. Floats are hashed by bit pattern.
    pub fn fingerprint(&self) -> String {
        let b = &self.bounds;
        let canonical = format!(
            "raster/v1;plane={};u=[{:016x},{:016x}];v=[{:016x},{:016x}];w={};h={};mode={}",
            self.plane,
            b.u_min.to_bits(),
            b.u_max.to_bits(),
            b.v_min.to_bits(),
            b.v_max.to_bits(),
            self.width,
            self.height,
            self.mode,
        );
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().take(8).map(|byte| format!("{byte:02x}")).collect()
    }

    /// Cell (column, row) of a projected point, or `None` when outside the
    /// bounds. Points on the max edge fall into the last cell.
    #[inline]
    pub fn cell_of(&self, p: &Point2) -> Option<(usize, usize)> {
        let b = &self.bounds;
        if !(p.u >= b.u_min && p.u <= b.u_max && p.v >= b.v_min && p.v <= b.v_max) {
            return None;
        }
        let cell_u = (b.u_max - b.u_min) / self.width as f64;
        let cell_v = (b.v_max - b.v_min) / self.height as f64;
        let col = (((p.u - b.u_min) / cell_u).floor() as usize).min(self.width - 1);
        let row = (((p.v - b.v_min) / cell_v).floor() as usize).min(self.height - 1);
        Some((col, row))
    }
}

/// Row-major `width x height` image; row index follows the second retained
/// coordinate, column index the first.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl PixelImage {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height] }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::ZeroSize { width, height });
        }
        if data.len() != width * height {
            return Err(RasterError::BufferLength { expected: width * height, actual: data.len() });
        }
        if !data.iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(RasterError::InvalidIntensity);
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

pub fn rasterize(points: &[Point2], cfg: &RasterConfig) -> PixelImage {
    let mut image = PixelImage::zeros(cfg.width, cfg.height);
    for p in points {
        if let Some((col, row)) = cfg.cell_of(p) {
            let cell = &mut image.data[row * cfg.width + col];
            match cfg.mode {
                IntensityMode::Count => *cell += 1.0,
                IntensityMode::Binary => *cell = 1.0,
            }
        }
    }
    image
}

/// Crop, project and rasterize every frame, keeping frame order.
pub fn sequence_to_video(seq: &FrameSequence, roi: &RegionOfInterest, cfg: &RasterConfig) -> Vec<PixelImage> {
    seq.frames()
        .par_iter()
        .map(|frame| rasterize(&project(&filter_roi(frame, roi), cfg.plane), cfg))
        .collect()
}
