//! Zero-mean normalized cross-correlation between consecutive video frames
//! and the percentile statistic summarising it.

use rayon::prelude::*;
use thiserror::Error;

use crate::raster::PixelImage;

/// Percentile of the ZNCC distribution used as the motion metric.
pub const MOTION_PERCENTILE: f64 = 90.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("image dimensions differ: {a:?} vs {b:?}")]
    DimensionMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("need at least 2 frames, got {0}")]
    TooFewFrames(usize),
    #[error("percentile of an empty list")]
    EmptyInput,
    #[error("percentile rank {0} outside [0, 100]")]
    InvalidPercentile(f64),
    #[error("non-finite value in percentile input")]
    NonFinite,
    #[error("all {0} ZNCC values are undefined (empty or static scene)")]
    AllUndefined(usize),
}

/// ZNCC of one image pair. `Undefined` when either image has zero variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ZnccValue {
    Defined(f64),
    Undefined,
}

impl ZnccValue {
    pub fn value(&self) -> Option<f64> {
        match *self {
            ZnccValue::Defined(v) => Some(v),
            ZnccValue::Undefined => None,
        }
    }

    pub fn is_defined(&self) -> bool {
        matches!(self, ZnccValue::Defined(_))
    }
}

/// `sum (x - mean_x)(y - mean_y) / sqrt(sum (x - mean_x)^2 * sum (y - mean_y)^2)`
/// over all pixels, computed in two passes and clamped to [-1, 1].
pub fn zncc(a: &PixelImage, b: &PixelImage) -> Result<ZnccValue, MetricError> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(MetricError::DimensionMismatch { a: (a.width(), a.height()), b: (b.width(), b.height()) });
    }
    let (xs, ys) = (a.data(), b.data());
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;

    let (mut cross, mut var_x, mut var_y) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mean_x;
        let dy = y - mean_y;
        cross += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    let denom = (var_x * var_y).sqrt();
    if denom == 0.0 {
        return Ok(ZnccValue::Undefined);
    }
    Ok(ZnccValue::Defined((cross / denom).clamp(-1.0, 1.0)))
}

/// ZNCC of each consecutive frame pair; `len() == frames - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZnccSeries(Vec<ZnccValue>);

impl ZnccSeries {
    pub fn values(&self) -> &[ZnccValue] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn defined(&self) -> Vec<f64> {
        self.0.iter().filter_map(ZnccValue::value).collect()
    }
}

impl From<Vec<ZnccValue>> for ZnccSeries {
    fn from(values: Vec<ZnccValue>) -> Self {
        Self(values)
    }
}

pub fn zncc_series(video: &[PixelImage]) -> Result<ZnccSeries, MetricError> {
    if video.len() < 2 {
        return Err(MetricError::TooFewFrames(video.len()));
    }
    let values = video
        .par_windows(2)
        .map(|pair| zncc(&pair[0], &pair[1]))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ZnccSeries(values))
}

/// Linear interpolation between order statistics at rank `(p / 100) * (n - 1)`.
pub fn percentile(values: &[f64], p: f64) -> Result<f64, MetricError> {
    if values.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(MetricError::InvalidPercentile(p));
    }
    if !values.iter().all(|v| v.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);

    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionMetric {
    pub value: f64,
    pub defined_count: usize,
    pub total_count: usize,
}

impl MotionMetric {
    /// 90th percentile of the defined values; undefined pairs are excluded
    /// and only counted.
    pub fn from_series(series: &ZnccSeries) -> Result<Self, MetricError> {
        let defined = series.defined();
        if defined.is_empty() {
            return Err(MetricError::AllUndefined(series.len()));
        }
        Ok(Self {
            value: percentile(&defined, MOTION_PERCENTILE)?,
            defined_count: defined.len(),
            total_count: series.len(),
        })
    }
}

pub fn motion_metric(video: &[PixelImage]) -> Result<MotionMetric, MetricError> {
    MotionMetric::from_series(&zncc_series(video)?)
}
