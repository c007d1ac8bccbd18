//! CSV files exchanged between subcommands, plus the scatter plot export.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use pcmotion_core::{ActivityRecord, LinearEstimationModel, ProjectionPlane};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const METRICS_HEADER: [&str; 5] = ["sequence_id", "plane", "metric", "defined_count", "total_count"];
pub const LABELS_HEADER: [&str; 2] = ["sequence_id", "typed_chars"];
pub const ESTIMATES_HEADER: [&str; 4] = ["sequence_id", "metric", "estimate_raw", "estimate_clamped"];
pub const PLOT_HEADER: [&str; 4] = ["kind", "sequence_id", "metric", "typed_chars"];

/// One metrics row. `metric` is empty when every ZNCC value was undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub sequence_id: String,
    pub plane: ProjectionPlane,
    pub metric: Option<f64>,
    pub defined_count: usize,
    pub total_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub sequence_id: String,
    pub typed_chars: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub sequence_id: String,
    pub metric: Option<f64>,
    pub estimate_raw: Option<f64>,
    pub estimate_clamped: Option<f64>,
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header).map_err(CliError::data)?;
    for row in rows {
        w.serialize(row).map_err(CliError::data)?;
    }
    let bytes = w.into_inner().map_err(CliError::data)?;
    fs::write(path, bytes).map_err(CliError::io(path))
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path, header: &[&str]) -> Result<Vec<T>, CliError> {
    let text = fs::read(path).map_err(CliError::io(path))?;
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_slice());
    let found = r.headers().map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(CliError::Data(format!(
            "{}: expected header {}, found {}",
            path.display(),
            header.join(","),
            found.iter().collect::<Vec<_>>().join(",")
        )));
    }
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| CliError::Data(format!("{} row {}: {e}", path.display(), i + 1))))
        .collect()
}

pub fn write_metrics(path: &Path, rows: &[MetricRow]) -> Result<(), CliError> {
    write_csv(path, rows, &METRICS_HEADER)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRow>, CliError> {
    let rows: Vec<MetricRow> = read_csv(path, &METRICS_HEADER)?;
    for row in &rows {
        if let Some(m) = row.metric {
            if !(-1.0..=1.0).contains(&m) {
                return Err(CliError::Data(format!("{}: metric {m} of {} outside [-1, 1]", path.display(), row.sequence_id)));
            }
        }
        if row.defined_count > row.total_count {
            return Err(CliError::Data(format!("{}: defined_count exceeds total_count for {}", path.display(), row.sequence_id)));
        }
    }
    Ok(rows)
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelRow>, CliError> {
    let rows: Vec<LabelRow> = read_csv(path, &LABELS_HEADER)?;
    let mut seen = HashMap::new();
    for row in &rows {
        if seen.insert(row.sequence_id.as_str(), ()).is_some() {
            return Err(CliError::Data(format!("{}: duplicate sequence_id {}", path.display(), row.sequence_id)));
        }
    }
    Ok(rows)
}

pub fn write_labels(path: &Path, rows: &[LabelRow]) -> Result<(), CliError> {
    write_csv(path, rows, &LABELS_HEADER)
}

pub fn write_estimates(path: &Path, rows: &[EstimateRow]) -> Result<(), CliError> {
    write_csv(path, rows, &ESTIMATES_HEADER)
}

pub fn read_estimates(path: &Path) -> Result<Vec<EstimateRow>, CliError> {
    read_csv(path, &ESTIMATES_HEADER)
}

/// Which plane to use: the requested one, or the only plane present.
pub fn resolve_plane(rows: &[MetricRow], requested: Option<ProjectionPlane>) -> Result<ProjectionPlane, CliError> {
    if let Some(p) = requested {
        return Ok(p);
    }
    let mut planes: Vec<ProjectionPlane> = rows.iter().map(|r| r.plane).collect();
    planes.sort();
    planes.dedup();
    match planes.as_slice() {
        [only] => Ok(*only),
        [] => Err(CliError::Data("metrics file has no rows".into())),
        many => Err(CliError::Usage(format!(
            "metrics file holds several planes ({}); pass --plane",
            many.iter().map(|p| p.as_str()).collect::<Vec<_>>().join(", ")
        ))),
    }
}

/// Inner join on sequence_id over the rows of `plane` that carry a metric,
/// in metrics-file order.
pub fn join(metrics: &[MetricRow], labels: &[LabelRow], plane: ProjectionPlane) -> Vec<ActivityRecord> {
    let by_id: HashMap<&str, u64> = labels.iter().map(|l| (l.sequence_id.as_str(), l.typed_chars)).collect();
    metrics
        .iter()
        .filter(|m| m.plane == plane)
        .filter_map(|m| {
            let metric = m.metric?;
            let chars = *by_id.get(m.sequence_id.as_str())?;
            Some(ActivityRecord::new(m.sequence_id.clone(), metric, chars as f64))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotRow {
    pub kind: &'static str,
    pub sequence_id: String,
    pub metric: f64,
    pub typed_chars: f64,
}

/// Scatter rows (`kind = point`) followed by the two fitted-line endpoints
/// (`kind = line`) at the smallest and largest metric.
pub fn plot_rows(records: &[ActivityRecord], model: Option<&LinearEstimationModel>) -> Vec<PlotRow> {
    let mut rows: Vec<PlotRow> = records
        .iter()
        .map(|r| PlotRow { kind: "point", sequence_id: r.sequence_id.clone(), metric: r.metric, typed_chars: r.typed_chars })
        .collect();
    if let Some(model) = model {
        let (lo, hi) = metric_range(records);
        for m in [lo, hi] {
            rows.push(PlotRow { kind: "line", sequence_id: String::new(), metric: m, typed_chars: model.slope * m + model.intercept });
        }
    }
    rows
}

pub fn write_plot_csv(path: &Path, rows: &[PlotRow]) -> Result<(), CliError> {
    write_csv(path, rows, &PLOT_HEADER)
}

fn metric_range(records: &[ActivityRecord]) -> (f64, f64) {
    records.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.metric), hi.max(r.metric)))
}

/// Minimal static scatter plot with the fitted line.
pub fn render_svg(rows: &[PlotRow], plane: ProjectionPlane) -> String {
    const W: f64 = 480.0;
    const H: f64 = 360.0;
    const PAD: f64 = 48.0;
    let xs = rows.iter().map(|r| r.metric);
    let ys = rows.iter().map(|r| r.typed_chars);
    let (x0, x1) = padded_range(xs);
    let (y0, y1) = padded_range(ys);
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<path d="M{PAD} {top} V{bottom} H{right}" fill="none" stroke="black"/>"#,
        top = PAD,
        bottom = H - PAD,
        right = W - PAD
    );
    let _ = writeln!(
        svg,
        r#"<text x="{x}" y="{y}" font-size="12" text-anchor="middle">90th percentile ZNCC ({plane})</text>"#,
        x = W / 2.0,
        y = H - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{y}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {y})">typed characters</text>"#,
        y = H / 2.0
    );
    for (x, y, anchor, label) in [
        (PAD, H - PAD + 16.0, "start", format!("{x0:.3}")),
        (W - PAD, H - PAD + 16.0, "end", format!("{x1:.3}")),
        (PAD - 4.0, H - PAD, "end", format!("{y0:.0}")),
        (PAD - 4.0, PAD + 4.0, "end", format!("{y1:.0}")),
    ] {
        let _ = writeln!(svg, r#"<text x="{x:.2}" y="{y:.2}" font-size="10" text-anchor="{anchor}">{label}</text>"#);
    }
    for r in rows.iter().filter(|r| r.kind == "point") {
        let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="steelblue"/>"#, sx(r.metric), sy(r.typed_chars));
    }
    let line: Vec<&PlotRow> = rows.iter().filter(|r| r.kind == "line").collect();
    if let [a, b] = line.as_slice() {
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="firebrick" stroke-width="1.5"/>"#,
            sx(a.metric),
            sy(a.typed_chars),
            sx(b.metric),
            sy(b.typed_chars)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let span = if hi > lo { hi - lo } else { lo.abs().max(1.0) };
    (lo - 0.05 * span, hi + 0.05 * span)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_round_trip_including_empty_metric() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let rows = vec![
            MetricRow { sequence_id: "a".into(), plane: ProjectionPlane::XY, metric: Some(0.875), defined_count: 539, total_count: 539 },
            MetricRow { sequence_id: "b".into(), plane: ProjectionPlane::YZ, metric: None, defined_count: 0, total_count: 539 },
        ];
        write_metrics(&path, &rows).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text, "sequence_id,plane,metric,defined_count,total_count\na,x-y,0.875,539,539\nb,y-z,,0,539\n");
        assert_eq!(read_metrics(&path).unwrap(), rows);
    }

    #[test]
    fn labels_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.csv");
        fs::write(&path, "sequence_id,typed_chars\na,10\nb,-3\n").unwrap();
        assert!(matches!(read_labels(&path), Err(CliError::Data(_))));
        fs::write(&path, "id,chars\na,10\n").unwrap();
        assert!(matches!(read_labels(&path), Err(CliError::Data(_))));
        fs::write(&path, "sequence_id,typed_chars\na,10\na,11\n").unwrap();
        assert!(matches!(read_labels(&path), Err(CliError::Data(_))));
        fs::write(&path, "sequence_id,typed_chars\na,10\nb,0\n").unwrap();
        assert_eq!(read_labels(&path).unwrap().len(), 2);
    }

    #[test]
    fn join_filters_plane_and_missing() {
        let m = |id: &str, plane, metric| MetricRow { sequence_id: id.into(), plane, metric, defined_count: 1, total_count: 1 };
        let metrics = vec![
            m("a", ProjectionPlane::XY, Some(0.5)),
            m("a", ProjectionPlane::XZ, Some(0.7)),
            m("b", ProjectionPlane::XY, None),
            m("c", ProjectionPlane::XY, Some(0.2)),
        ];
        let labels = vec![
            LabelRow { sequence_id: "a".into(), typed_chars: 10 },
            LabelRow { sequence_id: "b".into(), typed_chars: 20 },
        ];
        assert_eq!(join(&metrics, &labels, ProjectionPlane::XY), vec![ActivityRecord::new("a", 0.5, 10.0)]);
        assert!(matches!(resolve_plane(&metrics, None), Err(CliError::Usage(_))));
        assert_eq!(resolve_plane(&metrics[..1], None).unwrap(), ProjectionPlane::XY);
    }

    #[test]
    fn svg_has_one_circle_per_point() {
        let records: Vec<_> = (0..3).map(|i| ActivityRecord::new(format!("s{i}"), 0.1 * i as f64, 20.0 * i as f64)).collect();
        let rows = plot_rows(&records, None);
        let svg = render_svg(&rows, ProjectionPlane::XY);
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(!svg.contains("<line"));
    }
}
