//! One function per subcommand. Each is callable in-process; `main` only
//! parses flags and maps errors to exit codes.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use log::{info, warn};
use pcmotion_core::metric::MetricError;
use pcmotion_core::net::{Pacing, SensorStats};
use pcmotion_core::{
    fit_linear, generate_sequence, seqfile, EdgeServer, FrameSequence, LinearEstimationModel, MergePolicy, MergeReport,
    MetricPipeline, ProjectionPlane, SensorConfig, SensorDevice,
};

use crate::config::ConfigFile;
use crate::error::CliError;
use crate::files::{self, EstimateRow, MetricRow};

pub const SEQUENCE_EXTENSION: &str = "lpcseq";

/// Writes `<out_dir>/<id>.lpcseq` for every `[[sequence]]` entry.
pub fn cmd_simulate(cfg: &ConfigFile, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    if cfg.sequence.is_empty() {
        return Err(CliError::Config("no [[sequence]] entries to simulate".into()));
    }
    fs::create_dir_all(out_dir).map_err(CliError::io(out_dir))?;
    let mut written = Vec::with_capacity(cfg.sequence.len());
    for entry in &cfg.sequence {
        let seq = generate_sequence(&entry.to_synth()).map_err(|e| CliError::Config(format!("{}: {e}", entry.id)))?;
        let path = out_dir.join(format!("{}.{SEQUENCE_EXTENSION}", entry.id));
        write_sequence(&path, &seq)?;
        info!("wrote {} ({} frames)", path.display(), seq.len());
        written.push(path);
    }
    Ok(written)
}

pub fn read_sequence(path: &Path) -> Result<FrameSequence, CliError> {
    seqfile::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn write_sequence(path: &Path, seq: &FrameSequence) -> Result<(), CliError> {
    let bytes = seqfile::to_bytes(seq).map_err(CliError::data)?;
    fs::write(path, bytes).map_err(CliError::io(path))
}

/// Sequence id of a file: its stem.
pub fn sequence_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

#[derive(Debug)]
pub struct MetricOutcome {
    pub rows: Vec<MetricRow>,
    /// Sequence/plane pairs whose ZNCC series was entirely undefined.
    pub undefined: Vec<(String, ProjectionPlane)>,
}

/// Computes one metrics row per (sequence, plane), in input order, and writes
/// the file. Rows with an all-undefined series are written with an empty
/// metric; the caller turns a non-empty `undefined` list into a data error.
pub fn cmd_metric(cfg: &ConfigFile, planes: &[ProjectionPlane], inputs: &[PathBuf], out: &Path) -> Result<MetricOutcome, CliError> {
    if inputs.is_empty() {
        return Err(CliError::Usage("no sequence files given".into()));
    }
    let planes = if planes.is_empty() { &[ProjectionPlane::XY][..] } else { planes };
    let pipelines: Vec<MetricPipeline> =
        planes.iter().map(|&p| Ok(MetricPipeline::new(cfg.roi()?, cfg.raster_for(p)?))).collect::<Result<_, CliError>>()?;

    let mut outcome = MetricOutcome { rows: Vec::new(), undefined: Vec::new() };
    for path in inputs {
        let seq = read_sequence(path)?;
        let id = sequence_id(path);
        for pipeline in &pipelines {
            let plane = pipeline.plane();
            match pipeline.metric(&seq) {
                Ok(m) => outcome.rows.push(MetricRow {
                    sequence_id: id.clone(),
                    plane,
                    metric: Some(m.value),
                    defined_count: m.defined_count,
                    total_count: m.total_count,
                }),
                Err(MetricError::AllUndefined(total)) => {
                    warn!("{id} ({plane}): every ZNCC value is undefined");
                    outcome.rows.push(MetricRow { sequence_id: id.clone(), plane, metric: None, defined_count: 0, total_count: total });
                    outcome.undefined.push((id.clone(), plane));
                }
                Err(e) => return Err(CliError::Data(format!("{}: {e}", path.display()))),
            }
        }
    }
    files::write_metrics(out, &outcome.rows)?;
    Ok(outcome)
}

pub fn cmd_train(
    cfg: &ConfigFile,
    metrics: &Path,
    labels: &Path,
    plane: Option<ProjectionPlane>,
    out: &Path,
) -> Result<LinearEstimationModel, CliError> {
    let metric_rows = files::read_metrics(metrics)?;
    let label_rows = files::read_labels(labels)?;
    let plane = files::resolve_plane(&metric_rows, plane)?;
    let records = files::join(&metric_rows, &label_rows, plane);
    if records.len() < 2 {
        return Err(CliError::Data(format!(
            "joining metrics ({plane}) with labels on sequence_id gave {} usable record(s); need at least 2",
            records.len()
        )));
    }
    let fingerprint = cfg.raster_for(plane)?.fingerprint();
    let model = fit_linear(&records, plane, fingerprint).map_err(CliError::data)?;
    fs::write(out, model.to_json() + "\n").map_err(CliError::io(out))?;
    Ok(model)
}

pub fn load_model(path: &Path) -> Result<LinearEstimationModel, CliError> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    let model = LinearEstimationModel::from_json(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    model.validate().map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(model)
}

/// Applies the model to every metrics row of the model's plane. Refuses when
/// the configured raster does not match the one the model was trained on.
pub fn cmd_estimate(cfg: &ConfigFile, model_path: &Path, metrics: &Path, out: &Path) -> Result<Vec<EstimateRow>, CliError> {
    let model = load_model(model_path)?;
    model.ensure_compatible(&cfg.raster_for(model.plane)?).map_err(CliError::data)?;
    let rows: Vec<EstimateRow> = files::read_metrics(metrics)?
        .into_iter()
        .filter(|r| r.plane == model.plane)
        .map(|r| {
            let e = r.metric.map(|m| model.estimate(m));
            EstimateRow {
                sequence_id: r.sequence_id,
                metric: r.metric,
                estimate_raw: e.map(|e| e.raw),
                estimate_clamped: e.map(|e| e.clamped),
            }
        })
        .collect();
    if rows.is_empty() {
        return Err(CliError::Data(format!("no {} rows in {}", model.plane, metrics.display())));
    }
    files::write_estimates(out, &rows)?;
    Ok(rows)
}

/// Scatter CSV and SVG of typed characters against the metric.
pub fn cmd_export_plot(
    metrics: &Path,
    labels: &Path,
    plane: Option<ProjectionPlane>,
    out_csv: &Path,
    out_svg: Option<&Path>,
) -> Result<usize, CliError> {
    let metric_rows = files::read_metrics(metrics)?;
    let label_rows = files::read_labels(labels)?;
    let plane = files::resolve_plane(&metric_rows, plane)?;
    let records = files::join(&metric_rows, &label_rows, plane);
    if records.is_empty() {
        return Err(CliError::Data("metrics and labels share no sequence_id".into()));
    }
    let model = match fit_linear(&records, plane, "") {
        Ok(m) => Some(m),
        Err(e) => {
            warn!("no fitted line: {e}");
            None
        }
    };
    let rows = files::plot_rows(&records, model.as_ref());
    files::write_plot_csv(out_csv, &rows)?;
    if let Some(svg) = out_svg {
        fs::write(svg, files::render_svg(&rows, plane)).map_err(CliError::io(svg))?;
    }
    Ok(records.len())
}

#[derive(Debug, Clone)]
pub struct SensorArgs {
    pub sensor_id: u32,
    pub input: PathBuf,
    pub connect: String,
    pub realtime: bool,
}

pub fn cmd_run_sensor(cfg: &ConfigFile, args: &SensorArgs) -> Result<SensorStats, CliError> {
    let seq = read_sequence(&args.input)?;
    let sensor = SensorConfig {
        sensor_id: args.sensor_id,
        extrinsic: cfg.extrinsic_for(args.sensor_id)?,
        roi: cfg.roi()?,
        target: args.connect.clone(),
    };
    let pacing = if args.realtime { Pacing::RealTime } else { Pacing::AsFastAsPossible };
    Ok(SensorDevice::new(sensor, pacing).run(&seq)?)
}

#[derive(Debug, Clone)]
pub struct EdgeArgs {
    pub listen: String,
    pub sensors: Vec<u32>,
    pub timeout: Duration,
    pub expected_frames: Option<u64>,
    pub rate_hz: f64,
    pub out: PathBuf,
}

pub fn bind_edge(args: &EdgeArgs) -> Result<EdgeServer, CliError> {
    let mut policy = MergePolicy::new(args.sensors.iter().copied()).map_err(|e| CliError::Usage(e.to_string()))?;
    policy = policy.with_timeout(args.timeout);
    policy.expected_frames = args.expected_frames;
    Ok(EdgeServer::bind(args.listen.as_str(), policy)?)
}

/// Serves one session on an already bound server and writes the merged
/// frames as a sequence file.
pub fn serve_edge(server: EdgeServer, args: &EdgeArgs) -> Result<MergeReport, CliError> {
    if !(args.rate_hz.is_finite() && args.rate_hz > 0.0) {
        return Err(CliError::Usage(format!("invalid rate {}", args.rate_hz)));
    }
    let mut merged = Vec::new();
    let report = server.run(|frame| merged.push(frame))?;
    let seq = FrameSequence::new(merged, args.rate_hz).map_err(CliError::data)?;
    write_sequence(&args.out, &seq)?;
    info!(
        "merged {} frames ({} partial, {} duplicates, {} late) into {}",
        report.frames_emitted,
        report.partial_frames(),
        report.duplicates,
        report.late,
        args.out.display()
    );
    Ok(report)
}

pub fn cmd_run_edge(args: &EdgeArgs, on_bound: impl FnOnce(SocketAddr)) -> Result<MergeReport, CliError> {
    let server = bind_edge(args)?;
    on_bound(server.local_addr()?);
    serve_edge(server, args)
}
