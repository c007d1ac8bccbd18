//! Linear estimation model: typed characters as an affine function of the
//! motion metric, fitted by ordinary least squares.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::ProjectionPlane;
use crate::raster::RasterConfig;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("need at least 2 records, got {0}")]
    TooFewRecords(usize),
    #[error("all metrics are identical; slope is undetermined")]
    ZeroMetricVariance,
    #[error("all labels are identical; correlation is undefined")]
    ZeroLabelVariance,
    #[error("record {0:?} has a non-finite metric or a negative/non-finite label")]
    InvalidRecord(String),
    #[error("model was trained on raster {model} but metrics come from raster {metrics}")]
    FingerprintMismatch { model: String, metrics: String },
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error("model coefficients are not finite")]
    NonFinite,
}

/// One labeled session. `typed_chars` is a count; it is stored as a real so
/// that noiseless synthetic labels can be used unrounded.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivityRecord {
    pub sequence_id: String,
    pub metric: f64,
    pub typed_chars: f64,
}

impl ActivityRecord {
    pub fn new(sequence_id: impl Into<String>, metric: f64, typed_chars: f64) -> Self {
        Self { sequence_id: sequence_id.into(), metric, typed_chars }
    }

    fn is_valid(&self) -> bool {
        self.metric.is_finite() && self.typed_chars.is_finite() && self.typed_chars >= 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearEstimationModel {
    pub slope: f64,
    pub intercept: f64,
    pub plane: ProjectionPlane,
    pub raster_fingerprint: String,
    pub n: usize,
    pub pearson_r: f64,
    pub format_version: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub raw: f64,
    /// `max(0, raw)`.
    pub clamped: f64,
}

impl LinearEstimationModel {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(ModelError::UnsupportedVersion(self.format_version));
        }
        if !(self.slope.is_finite() && self.intercept.is_finite() && self.pearson_r.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        if self.n < 2 {
            return Err(ModelError::TooFewRecords(self.n));
        }
        Ok(())
    }

    pub fn ensure_compatible(&self, cfg: &RasterConfig) -> Result<(), ModelError> {
        let metrics = cfg.fingerprint();
        if metrics != self.raster_fingerprint {
            return Err(ModelError::FingerprintMismatch { model: self.raster_fingerprint.clone(), metrics });
        }
        Ok(())
    }

    pub fn estimate(&self, metric: f64) -> Estimate {
        estimate(self, metric)
    }
}

struct Moments {
    n: usize,
    mean_m: f64,
    mean_c: f64,
    sxx: f64,
    sxy: f64,
    syy: f64,
}

/// Two-pass centered sums over records taken in a canonical order, so the
/// result does not depend on how the caller ordered them.
fn moments(records: &[ActivityRecord]) -> Result<Moments, ModelError> {
    if records.len() < 2 {
        return Err(ModelError::TooFewRecords(records.len()));
    }
    if let Some(bad) = records.iter().find(|r| !r.is_valid()) {
        return Err(ModelError::InvalidRecord(bad.sequence_id.clone()));
    }
    let mut pairs: Vec<(f64, f64)> = records.iter().map(|r| (r.metric, r.typed_chars)).collect();
    pairs.sort_by(|a, b| match a.0.total_cmp(&b.0) {
        Ordering::Equal => a.1.total_cmp(&b.1),
        o => o,
    });

    let n = pairs.len() as f64;
    let mean_m = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_c = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(m, c) in &pairs {
        let dm = m - mean_m;
        let dc = c - mean_c;
        sxx += dm * dm;
        sxy += dm * dc;
        syy += dc * dc;
    }
    Ok(Moments { n: pairs.len(), mean_m, mean_c, sxx, sxy, syy })
}

/// Least-squares line through `(metric, typed_chars)`.
///
/// When every label is identical the line is flat and `pearson_r` is stored
/// as 0, since the correlation itself is undefined.
pub fn fit_linear(
    records: &[ActivityRecord],
    plane: ProjectionPlane,
    raster_fingerprint: impl Into<String>,
) -> Result<LinearEstimationModel, ModelError> {
    let m = moments(records)?;
    if m.sxx == 0.0 {
        return Err(ModelError::ZeroMetricVariance);
    }
    let slope = m.sxy / m.sxx;
    let intercept = m.mean_c - slope * m.mean_m;
    let pearson_r = if m.syy == 0.0 { 0.0 } else { (m.sxy / (m.sxx * m.syy).sqrt()).clamp(-1.0, 1.0) };
    if !(slope.is_finite() && intercept.is_finite()) {
        return Err(ModelError::NonFinite);
    }
    Ok(LinearEstimationModel {
        slope,
        intercept,
        plane,
        raster_fingerprint: raster_fingerprint.into(),
        n: m.n,
        pearson_r,
        format_version: MODEL_FORMAT_VERSION,
    })
}

pub fn estimate(model: &LinearEstimationModel, metric: f64) -> Estimate {
    let raw = model.slope * metric + model.intercept;
    Estimate { raw, clamped: raw.max(0.0) }
}

/// Sample Pearson correlation of metric against label.
pub fn pearson(records: &[ActivityRecord]) -> Result<f64, ModelError> {
    let m = moments(records)?;
    if m.sxx == 0.0 {
        return Err(ModelError::ZeroMetricVariance);
    }
    if m.syy == 0.0 {
        return Err(ModelError::ZeroLabelVariance);
    }
    Ok((m.sxy / (m.sxx * m.syy).sqrt()).clamp(-1.0, 1.0))
}
