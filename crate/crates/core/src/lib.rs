//! Estimating typing activity from time-series point clouds.
//!
//! Frames of 3D points are cropped to a region of interest, projected onto
//! one of the three coordinate planes and rasterized into small intensity
//! images ("video frames"). The zero-mean normalized cross-correlation between
//! consecutive frames forms a series whose 90th percentile is the motion
//! metric. A linear model maps that metric to a typed-character count.
//!
//! The crate also carries the transport half of the system: a bit-exact binary
//! frame message, a sensor-device loop that filters and transmits frames, and a
//! first-tier edge server that receives and merges frames from several sensors.
//!
//! # Modules
//! - [`geometry`]: points, frames, region-of-interest crop, rigid transforms, projection.
//! - [`raster`]: projected points to [`PixelImage`].
//! - [`metric`]: ZNCC, the ZNCC series, percentiles and [`MotionMetric`].
//! - [`model`]: least-squares fit of the estimation model, estimation, Pearson r.
//! - [`synth`]: deterministic synthetic typing sequences and labeled datasets.
//! - [`codec`], [`seqfile`]: wire message and frame-sequence container formats.
//! - [`net`]: sensor device, frame merge, and the edge server.
//! - [`pipeline`]: the converter chain (crop, project, rasterize, metric).

pub mod codec;
pub mod geometry;
pub mod metric;
pub mod model;
pub mod net;
pub mod pipeline;
pub mod raster;
pub mod seqfile;
pub mod synth;

pub use codec::{decode_message, encode_message, CodecError, MESSAGE_HEADER_LEN, MESSAGE_MAGIC};
pub use geometry::{
    apply_transform, filter_roi, project, FrameSequence, GeometryError, Point2, Point3,
    PointCloudFrame, ProjectionPlane, RegionOfInterest, RigidTransform,
};
pub use metric::{motion_metric, percentile, zncc, zncc_series, MetricError, MotionMetric, ZnccValue};
pub use model::{estimate, fit_linear, pearson, ActivityRecord, Estimate, LinearEstimationModel, ModelError};
pub use net::{merge, EdgeServer, MergePolicy, MergeReport, NetError, SensorConfig, SensorDevice};
pub use pipeline::MetricPipeline;
pub use raster::{rasterize, sequence_to_video, IntensityMode, PixelImage, RasterBounds, RasterConfig, RasterError};
pub use synth::{generate_labeled_dataset, generate_sequence, LabelRule, LabeledDataset, SynthConfig};
