use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use pcmotion_cli::{commands, CliError, ConfigFile};
use pcmotion_core::ProjectionPlane;

/// Typing-activity estimation from time-series point clouds.
#[derive(Parser)]
#[command(name = "pcmotion", version)]
struct Cli {
    /// TOML configuration (ROI, raster, sequences, sensor extrinsics).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one synthetic sequence file per [[sequence]] entry.
    Simulate {
        /// Directory for the <id>.lpcseq files.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Compute the motion metric of each sequence file.
    Metric {
        /// Projection plane (x-y, x-z, y-z); repeat for several.
        #[arg(long = "plane", value_parser = parse_plane)]
        planes: Vec<ProjectionPlane>,
        /// Metrics CSV to write.
        #[arg(long)]
        out: PathBuf,
        /// Sequence files (.lpcseq); the file stem is the sequence id.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Fit the estimation model on metrics joined with labels.
    Train {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, value_parser = parse_plane)]
        plane: Option<ProjectionPlane>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply a trained model to a metrics file.
    Estimate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Scatter CSV (and optional SVG) of typed characters vs metric.
    ExportPlot {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, value_parser = parse_plane)]
        plane: Option<ProjectionPlane>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Run the first-tier edge server for one session.
    RunEdge {
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
        /// Expected sensor ids, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        sensors: Vec<u32>,
        /// How long a frame waits for missing sensors.
        #[arg(long, default_value_t = 500)]
        timeout_ms: u64,
        /// Stop after this many merged frames.
        #[arg(long)]
        frames: Option<u64>,
        /// Nominal rate recorded in the merged file.
        #[arg(long, default_value_t = 9.0)]
        rate_hz: f64,
        /// Merged sequence file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Stream a sequence file to an edge server as one sensor device.
    RunSensor {
        #[arg(long)]
        sensor_id: u32,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7878")]
        connect: String,
        /// Pace frames at the sequence's nominal rate.
        #[arg(long)]
        realtime: bool,
    },
}

fn parse_plane(s: &str) -> Result<ProjectionPlane, String> {
    s.parse().map_err(|e: pcmotion_core::GeometryError| e.to_string())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = ConfigFile::load_or_default(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate { out_dir } => {
            let written = commands::cmd_simulate(&cfg, &out_dir)?;
            println!("wrote {} sequence files to {}", written.len(), out_dir.display());
        }
        Command::Metric { planes, out, inputs } => {
            let outcome = commands::cmd_metric(&cfg, &planes, &inputs, &out)?;
            println!("wrote {} rows to {}", outcome.rows.len(), out.display());
            if !outcome.undefined.is_empty() {
                let list: Vec<String> = outcome.undefined.iter().map(|(id, p)| format!("{id} ({p})")).collect();
                return Err(CliError::Data(format!("no defined ZNCC values for: {}", list.join(", "))));
            }
        }
        Command::Train { metrics, labels, plane, out } => {
            let m = commands::cmd_train(&cfg, &metrics, &labels, plane, &out)?;
            println!("n={} slope={} intercept={} pearson_r={} plane={}", m.n, m.slope, m.intercept, m.pearson_r, m.plane);
        }
        Command::Estimate { model, metrics, out } => {
            let rows = commands::cmd_estimate(&cfg, &model, &metrics, &out)?;
            println!("wrote {} estimates to {}", rows.len(), out.display());
        }
        Command::ExportPlot { metrics, labels, plane, out, svg } => {
            let n = commands::cmd_export_plot(&metrics, &labels, plane, &out, svg.as_deref())?;
            println!("exported {n} points to {}", out.display());
        }
        Command::RunEdge { listen, sensors, timeout_ms, frames, rate_hz, out } => {
            let args = commands::EdgeArgs {
                listen,
                sensors,
                timeout: Duration::from_millis(timeout_ms),
                expected_frames: frames,
                rate_hz,
                out,
            };
            let report = commands::cmd_run_edge(&args, |addr| eprintln!("listening on {addr}"))?;
            println!(
                "merged {} frames: {} complete, {} partial, {} duplicates, {} late, {} unexpected",
                report.frames_emitted,
                report.complete_frames,
                report.partial_frames(),
                report.duplicates,
                report.late,
                report.unexpected_sensor
            );
        }
        Command::RunSensor { sensor_id, input, connect, realtime } => {
            let stats = commands::cmd_run_sensor(&cfg, &commands::SensorArgs { sensor_id, input, connect, realtime })?;
            println!("sent {} messages ({} points, {} bytes)", stats.messages, stats.points, stats.bytes);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
