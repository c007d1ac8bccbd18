//! The converter: crop, project, rasterize, correlate, summarise.

use crate::geometry::{FrameSequence, ProjectionPlane, RegionOfInterest};
use crate::metric::{motion_metric, zncc_series, MetricError, MotionMetric, ZnccSeries};
use crate::raster::{sequence_to_video, PixelImage, RasterConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricPipeline {
    pub roi: RegionOfInterest,
    pub raster: RasterConfig,
}

impl MetricPipeline {
    pub fn new(roi: RegionOfInterest, raster: RasterConfig) -> Self {
        Self { roi, raster }
    }

    /// Default ROI with a 64x64 count raster spanning it.
    pub fn default_for(plane: ProjectionPlane) -> Self {
        Self::new(RegionOfInterest::keyboard_default(), RasterConfig::default_for(plane))
    }

    pub fn plane(&self) -> ProjectionPlane {
        self.raster.plane()
    }

    pub fn video(&self, seq: &FrameSequence) -> Vec<PixelImage> {
        sequence_to_video(seq, &self.roi, &self.raster)
    }

    pub fn series(&self, seq: &FrameSequence) -> Result<ZnccSeries, MetricError> {
        zncc_series(&self.video(seq))
    }

    pub fn metric(&self, seq: &FrameSequence) -> Result<MotionMetric, MetricError> {
        motion_metric(&self.video(seq))
    }
}
