//! Deterministic synthetic typing sequences.
//!
//! A "hand" is a fixed cloud of points drawn once per sequence inside a box of
//! half-extents `hand_half_extent_m` around the hand centre. Each frame moves
//! the centre vertically by `amplitude_m * sin(2 pi f t)`, adds Gaussian jitter
//! to every hand point, and appends static background clutter spread over the
//! default keyboard ROI.
//!
//! # Random stream
//!
//! All randomness comes from one xoshiro256** generator seeded with
//! `seed` through SplitMix64 (the reference `seed_from_u64`). Draws are:
//!
//! - uniform `u = (next_u64 >> 11) * 2^-53`, in `[0, 1)`;
//! - normal `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)` from two uniforms, one
//!   normal per pair, the sine branch discarded.
//!
//! Consumption order: hand offsets (x, y, z per point), background points
//! (x, y, z per point), then per frame the jitter (x, y, z per hand point).
//! Jitter is drawn even when `jitter_sigma_m` is zero so the stream layout does
//! not depend on it. Any implementation following this order reproduces the
//! same `f64` values bit for bit.

use std::f64::consts::TAU;

use rand_core::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};

use crate::geometry::{FrameSequence, Point3, PointCloudFrame, RegionOfInterest};
use crate::metric::{MetricError, MotionMetric};
use crate::model::ActivityRecord;
use crate::pipeline::MetricPipeline;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub frame_count: usize,
    pub rate_hz: f64,
    pub hand_points: usize,
    pub base_center: Point3,
    pub hand_half_extent_m: [f64; 3],
    pub amplitude_m: f64,
    pub strokes_per_second: f64,
    pub jitter_sigma_m: f64,
    pub background_points: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            frame_count: 540,
            rate_hz: 9.0,
            hand_points: 200,
            base_center: Point3::new(0.0, 0.0, 0.085),
            hand_half_extent_m: [0.04, 0.05, 0.004],
            amplitude_m: 0.02,
            strokes_per_second: 1.3,
            jitter_sigma_m: 0.001,
            background_points: 100,
        }
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("frame_count must be at least 2, got {0}")]
    TooFewFrames(usize),
    #[error("hand_points must be positive")]
    NoHandPoints,
    #[error("{0} must be finite and non-negative")]
    InvalidMagnitude(&'static str),
    #[error("rate_hz must be finite and positive")]
    InvalidRate,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.frame_count < 2 {
            return Err(SynthError::TooFewFrames(self.frame_count));
        }
        if self.hand_points == 0 {
            return Err(SynthError::NoHandPoints);
        }
        if !(self.rate_hz.is_finite() && self.rate_hz > 0.0) {
            return Err(SynthError::InvalidRate);
        }
        let non_negative = |v: f64| v.is_finite() && v >= 0.0;
        for (name, v) in [
            ("amplitude_m", self.amplitude_m),
            ("strokes_per_second", self.strokes_per_second),
            ("jitter_sigma_m", self.jitter_sigma_m),
        ] {
            if !non_negative(v) {
                return Err(SynthError::InvalidMagnitude(name));
            }
        }
        if !self.hand_half_extent_m.iter().all(|&v| non_negative(v)) {
            return Err(SynthError::InvalidMagnitude("hand_half_extent_m"));
        }
        if !self.base_center.is_finite() {
            return Err(SynthError::InvalidMagnitude("base_center"));
        }
        Ok(())
    }

    /// Hand centre at time `t` seconds.
    pub fn center_at(&self, t: f64) -> Point3 {
        let dz = self.amplitude_m * (TAU * self.strokes_per_second * t).sin();
        Point3::new(self.base_center.x, self.base_center.y, self.base_center.z + dz)
    }

    pub fn timestamp_micros(&self, frame_index: usize) -> u64 {
        (frame_index as f64 * 1e6 / self.rate_hz).round() as u64
    }
}

struct Stream(Xoshiro256StarStar);

impl Stream {
    fn new(seed: u64) -> Self {
        Self(Xoshiro256StarStar::seed_from_u64(seed))
    }

    fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (TAU * u2).cos()
    }
}

/// Hand-cluster positions before jitter, per frame. Exposed for retention checks.
pub fn hand_base_positions(cfg: &SynthConfig) -> Vec<Vec<Point3>> {
    let mut rng = Stream::new(cfg.seed);
    let offsets = hand_offsets(cfg, &mut rng);
    (0..cfg.frame_count)
        .map(|i| {
            let c = cfg.center_at(i as f64 / cfg.rate_hz);
            offsets.iter().map(|o| Point3::new(c.x + o[0], c.y + o[1], c.z + o[2])).collect()
        })
        .collect()
}

fn hand_offsets(cfg: &SynthConfig, rng: &mut Stream) -> Vec<[f64; 3]> {
    let h = cfg.hand_half_extent_m;
    (0..cfg.hand_points)
        .map(|_| {
            let mut o = [0.0; 3];
            for (k, v) in o.iter_mut().enumerate() {
                *v = (2.0 * rng.uniform() - 1.0) * h[k];
            }
            o
        })
        .collect()
}

pub fn generate_sequence(cfg: &SynthConfig) -> Result<FrameSequence, SynthError> {
    cfg.validate()?;
    let mut rng = Stream::new(cfg.seed);
    let offsets = hand_offsets(cfg, &mut rng);

    let roi = RegionOfInterest::keyboard_default();
    let (lo, hi) = (roi.min().to_array(), roi.max().to_array());
    let background: Vec<Point3> = (0..cfg.background_points)
        .map(|_| {
            let mut p = [0.0; 3];
            for k in 0..3 {
                p[k] = lo[k] + rng.uniform() * (hi[k] - lo[k]);
            }
            Point3::from(p)
        })
        .collect();

    let sigma = cfg.jitter_sigma_m;
    let mut frames = Vec::with_capacity(cfg.frame_count);
    for i in 0..cfg.frame_count {
        let c = cfg.center_at(i as f64 / cfg.rate_hz);
        let mut points = Vec::with_capacity(offsets.len() + background.len());
        for o in &offsets {
            let jx = sigma * rng.normal();
            let jy = sigma * rng.normal();
            let jz = sigma * rng.normal();
            points.push(Point3::new(c.x + o[0] + jx, c.y + o[1] + jy, c.z + o[2] + jz));
        }
        points.extend_from_slice(&background);
        frames.push(PointCloudFrame { frame_index: i as u64, timestamp_micros: cfg.timestamp_micros(i), points });
    }
    Ok(FrameSequence::new(frames, cfg.rate_hz).expect("generated frames are ordered and finite"))
}

/// `typed_chars = max(0, slope * metric + intercept + noise)` with
/// `noise ~ N(0, noise_sigma)` from its own seeded stream, rounded to the
/// nearest integer when `quantize` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelRule {
    pub slope: f64,
    pub intercept: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub quantize: bool,
}

impl LabelRule {
    pub fn new(slope: f64, intercept: f64, noise_sigma: f64, seed: u64) -> Self {
        Self { slope, intercept, noise_sigma, seed, quantize: true }
    }

    pub fn unquantized(self) -> Self {
        Self { quantize: false, ..self }
    }
}

#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub sequences: Vec<FrameSequence>,
    pub metrics: Vec<MotionMetric>,
    pub records: Vec<ActivityRecord>,
}

/// Sequence ids used for dataset record `index`.
pub fn dataset_sequence_id(index: usize) -> String {
    format!("synth-{index:03}")
}

pub fn generate_labeled_dataset(
    cfgs: &[SynthConfig],
    pipeline: &MetricPipeline,
    rule: &LabelRule,
) -> Result<LabeledDataset, DatasetError> {
    let mut noise = Stream::new(rule.seed);
    let mut out = LabeledDataset { sequences: Vec::new(), metrics: Vec::new(), records: Vec::new() };
    for (i, cfg) in cfgs.iter().enumerate() {
        let seq = generate_sequence(cfg)?;
        let metric = pipeline.metric(&seq).map_err(|source| DatasetError::Metric { index: i, source })?;
        let raw = (rule.slope * metric.value + rule.intercept + rule.noise_sigma * noise.normal()).max(0.0);
        let label = if rule.quantize { raw.round() } else { raw };
        out.records.push(ActivityRecord::new(dataset_sequence_id(i), metric.value, label));
        out.metrics.push(metric);
        out.sequences.push(seq);
    }
    Ok(out)
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("sequence {index}: {source}")]
    Metric { index: usize, source: MetricError },
}
