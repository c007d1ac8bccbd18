//! TOML configuration shared by every subcommand.
//!
//! ```toml
//! version = 1
//!
//! [roi]                     # millimetres
//! min_mm = [-215.0, -225.0, 0.0]
//! max_mm = [215.0, 225.0, 170.0]
//!
//! [raster]
//! width = 64
//! height = 64
//! mode = "count"            # or "binary"
//!
//! [[sequence]]              # one per simulated session
//! id = "A-01"
//! seed = 1
//! amplitude_mm = 20.0       # every other key is optional, see SequenceEntry
//!
//! [[sensor]]                # extrinsic calibration per sensor id
//! id = 2
//! rotation_deg = [0.0, 0.0, 180.0]   # roll, pitch, yaw
//! translation_mm = [0.0, 0.0, 0.0]
//! ```
//!
//! Lengths are millimetres in the file and metres everywhere else.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use pcmotion_core::raster::{IntensityMode, RasterConfig, DEFAULT_GRID};
use pcmotion_core::{Point3, ProjectionPlane, RegionOfInterest, RigidTransform, SynthConfig};
use serde::Deserialize;

use crate::error::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub version: u32,
    #[serde(default)]
    pub roi: RoiSection,
    #[serde(default)]
    pub raster: RasterSection,
    #[serde(default)]
    pub sequence: Vec<SequenceEntry>,
    #[serde(default)]
    pub sensor: Vec<SensorEntry>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoiSection {
    pub min_mm: [f64; 3],
    pub max_mm: [f64; 3],
}

impl Default for RoiSection {
    fn default() -> Self {
        Self { min_mm: [-215.0, -225.0, 0.0], max_mm: [215.0, 225.0, 170.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RasterSection {
    pub width: usize,
    pub height: usize,
    pub mode: IntensityMode,
}

impl Default for RasterSection {
    fn default() -> Self {
        Self { width: DEFAULT_GRID, height: DEFAULT_GRID, mode: IntensityMode::Count }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceEntry {
    pub id: String,
    pub seed: u64,
    pub frame_count: Option<usize>,
    pub rate_hz: Option<f64>,
    pub hand_points: Option<usize>,
    pub base_center_mm: Option<[f64; 3]>,
    pub hand_half_extent_mm: Option<[f64; 3]>,
    pub amplitude_mm: Option<f64>,
    pub strokes_per_second: Option<f64>,
    pub jitter_sigma_mm: Option<f64>,
    pub background_points: Option<usize>,
}

impl SequenceEntry {
    pub fn to_synth(&self) -> SynthConfig {
        let d = SynthConfig::default();
        let mm = |a: [f64; 3]| a.map(|v| v / 1000.0);
        SynthConfig {
            seed: self.seed,
            frame_count: self.frame_count.unwrap_or(d.frame_count),
            rate_hz: self.rate_hz.unwrap_or(d.rate_hz),
            hand_points: self.hand_points.unwrap_or(d.hand_points),
            base_center: self.base_center_mm.map(|a| Point3::from(mm(a))).unwrap_or(d.base_center),
            hand_half_extent_m: self.hand_half_extent_mm.map(mm).unwrap_or(d.hand_half_extent_m),
            amplitude_m: self.amplitude_mm.map(|v| v / 1000.0).unwrap_or(d.amplitude_m),
            strokes_per_second: self.strokes_per_second.unwrap_or(d.strokes_per_second),
            jitter_sigma_m: self.jitter_sigma_mm.map(|v| v / 1000.0).unwrap_or(d.jitter_sigma_m),
            background_points: self.background_points.unwrap_or(d.background_points),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorEntry {
    pub id: u32,
    #[serde(default)]
    pub rotation_deg: [f64; 3],
    #[serde(default)]
    pub translation_mm: [f64; 3],
}

impl SensorEntry {
    pub fn extrinsic(&self) -> Result<RigidTransform, CliError> {
        let [roll, pitch, yaw] = self.rotation_deg;
        RigidTransform::from_euler_deg(roll, pitch, yaw, self.translation_mm.map(|v| v / 1000.0))
            .map_err(|e| CliError::Config(format!("sensor {}: {e}", self.id)))
    }
}

impl Default for ConfigFile {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            roi: RoiSection::default(),
            raster: RasterSection::default(),
            sequence: Vec::new(),
            sensor: Vec::new(),
        }
    }
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ConfigFile = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// The file at `path`, or all defaults when no path is given.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.version != CONFIG_VERSION {
            return Err(CliError::Config(format!("unsupported config version {} (expected {CONFIG_VERSION})", self.version)));
        }
        self.roi()?;
        self.raster_for(ProjectionPlane::XY)?;
        let mut ids = HashSet::new();
        for entry in &self.sequence {
            if entry.id.is_empty() || entry.id.contains(['/', '\\', ',']) {
                return Err(CliError::Config(format!("invalid sequence id {:?}", entry.id)));
            }
            if !ids.insert(entry.id.as_str()) {
                return Err(CliError::Config(format!("duplicate sequence id {:?}", entry.id)));
            }
            entry.to_synth().validate().map_err(|e| CliError::Config(format!("sequence {}: {e}", entry.id)))?;
        }
        let mut sensors = HashSet::new();
        for s in &self.sensor {
            if !sensors.insert(s.id) {
                return Err(CliError::Config(format!("duplicate sensor id {}", s.id)));
            }
            s.extrinsic()?;
        }
        Ok(())
    }

    pub fn roi(&self) -> Result<RegionOfInterest, CliError> {
        RegionOfInterest::from_mm(self.roi.min_mm, self.roi.max_mm).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn raster_for(&self, plane: ProjectionPlane) -> Result<RasterConfig, CliError> {
        let r = &self.raster;
        RasterConfig::for_roi(&self.roi()?, plane, r.width, r.height, r.mode).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Extrinsic for `sensor_id`; identity when the file has no entry.
    pub fn extrinsic_for(&self, sensor_id: u32) -> Result<RigidTransform, CliError> {
        self.sensor
            .iter()
            .find(|s| s.id == sensor_id)
            .map_or(Ok(RigidTransform::identity()), SensorEntry::extrinsic)
    }
}
