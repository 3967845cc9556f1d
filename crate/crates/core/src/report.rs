//! Output side: danger levels, chart specifications, and analysis files.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Value};
use thiserror::Error;

use crate::cop::{CopPoint, CopSeries};
use crate::features::{BaselineFit, FeatureSet, Segment, StageSpan};
use crate::quality::{GameSummary, QualityReport};
use crate::scalar::Scalar;
use crate::sgf::Color;

pub const CSV_COLUMNS: [&str; 7] =
    ["index", "sideToMove", "scoreMeanBefore", "scoreMeanAfterPass", "cost", "winRate", "effect"];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot access {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("invalid JSON in {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("invalid CSV in {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

fn io_error(path: &Path) -> impl FnOnce(io::Error) -> ReportError + '_ {
    move |source| ReportError::Io { path: path.to_path_buf(), source }
}

/// How danger is judged.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DangerMode {
    /// Against the fitted baseline, in units of its MAD.
    #[default]
    Residual,
    /// On the raw cost alone, ignoring how far into the game it is.
    Absolute,
}

/// How urgent the position is for the player to move. Carries no board
/// location by design: the player is told that something is wrong, not where.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DangerLevel {
    pub level: u8,
    /// Residual over the baseline MAD; infinite when the MAD is zero and the
    /// cost sits above the line. Written as `null` in that case.
    #[serde(serialize_with = "finite_or_null", deserialize_with = "null_as_infinity")]
    pub residual_in_mads: f64,
    pub cost: f64,
}

fn finite_or_null<S: Serializer>(value: &f64, serializer: S) -> Result<S::Ok, S::Error> {
    if value.is_finite() {
        serializer.serialize_f64(*value)
    } else {
        serializer.serialize_none()
    }
}

fn null_as_infinity<'de, D: Deserializer<'de>>(deserializer: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(deserializer)?.unwrap_or(f64::INFINITY))
}

fn bucket(x: f64, bounds: [f64; 3]) -> u8 {
    bounds.iter().filter(|&&b| x > b).count() as u8
}

/// Buckets the residual at `index` as 0 (within 1 MAD), 1 (2 MAD), 2 (4 MAD)
/// or 3. Absolute mode buckets the cost itself at 7, 10 and 13 points.
pub fn danger_level<T: Scalar>(cost: T, fit: &BaselineFit<T>, index: usize, mode: DangerMode) -> DangerLevel {
    let residual = fit.residual(index, cost).as_f64();
    let scale = fit.residual_scale.as_f64();
    let residual_in_mads = if scale > 0.0 {
        residual / scale
    } else if residual > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    let level = match mode {
        DangerMode::Residual => bucket(residual_in_mads, [1.0, 2.0, 4.0]),
        DangerMode::Absolute => bucket(cost.as_f64(), [7.0, 10.0, 13.0]),
    };
    DangerLevel { level, residual_in_mads, cost: cost.as_f64() }
}

/// A Vega-Lite specification. Keys are sorted, so equal inputs serialize to
/// identical bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChartDocument(pub Value);

impl ChartDocument {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.0).expect("a JSON value always serializes")
    }

    fn layer(&self, name: &str) -> Option<&Value> {
        self.0["layer"].as_array()?.iter().find(|l| l["name"] == name)
    }

    /// Number of per-move cost bars.
    pub fn cost_marks(&self) -> usize {
        self.layer("cost").and_then(|l| l["data"]["values"].as_array()).map_or(0, Vec::len)
    }

    pub fn has_segment_layer(&self) -> bool {
        self.layer("segments").is_some()
    }
}

fn side_name(color: Color) -> &'static str {
    match color {
        Color::Black => "black",
        Color::White => "white",
    }
}

/// Bar per move colored by the side to move, the fitted descent line on top,
/// shaded stage bands behind, and segment bands when there are any.
pub fn render_chart<T: Scalar>(
    series: &CopSeries<T>,
    fit: &BaselineFit<T>,
    segments: &[Segment<T>],
    stages: &[StageSpan],
) -> ChartDocument {
    let x = json!({"field": "index", "type": "quantitative", "title": "move"});
    let costs: Vec<Value> = series
        .points
        .iter()
        .map(|p| json!({"index": p.index, "side": side_name(p.side_to_move), "cost": p.cost.as_f64()}))
        .collect();
    let baseline: Vec<Value> = match (series.points.first(), series.points.last()) {
        (Some(first), Some(last)) => [first.index, last.index]
            .iter()
            .map(|&i| json!({"index": i, "baseline": fit.value_at(i).as_f64()}))
            .collect(),
        _ => Vec::new(),
    };
    let stage_values: Vec<Value> = stages
        .iter()
        .map(|s| json!({"stage": format!("{:?}", s.stage), "start": s.start, "end": s.end}))
        .collect();

    let mut layers = vec![
        json!({
            "name": "stages",
            "data": {"values": stage_values},
            "mark": {"type": "rect", "opacity": 0.08},
            "encoding": {
                "x": {"field": "start", "type": "quantitative"},
                "x2": {"field": "end"},
                "color": {"field": "stage", "type": "nominal", "legend": {"title": "stage"}}
            }
        }),
        json!({
            "name": "cost",
            "data": {"values": costs},
            "mark": "bar",
            "encoding": {
                "x": x,
                "y": {"field": "cost", "type": "quantitative", "title": "cost of passing"},
                "color": {
                    "field": "side",
                    "type": "nominal",
                    "scale": {"domain": ["black", "white"], "range": ["#222222", "#bbbbbb"]},
                    "legend": {"title": "to move"}
                }
            }
        }),
        json!({
            "name": "baseline",
            "data": {"values": baseline},
            "mark": {"type": "line", "color": "#d62728"},
            "encoding": {"x": x, "y": {"field": "baseline", "type": "quantitative"}}
        }),
    ];
    if !segments.is_empty() {
        let values: Vec<Value> = segments
            .iter()
            .map(|s| {
                json!({
                    "start": s.start,
                    "end": s.end,
                    "kind": format!("{:?}", s.kind),
                    "defender": s.defender.map(side_name),
                })
            })
            .collect();
        layers.push(json!({
            "name": "segments",
            "data": {"values": values},
            "mark": {"type": "rect", "opacity": 0.2, "color": "#ff7f0e"},
            "encoding": {
                "x": {"field": "start", "type": "quantitative"},
                "x2": {"field": "end"},
                "tooltip": [{"field": "kind"}, {"field": "defender"}]
            }
        }));
    }

    ChartDocument(json!({
        "$schema": "https://vega.github.io/schema/vega-lite/v5.json",
        "description": "cost of passing per move",
        "width": 800,
        "height": 300,
        "layer": layers,
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportFormat {
    Json,
    Csv,
}

pub fn write_json<V: Serialize>(path: &Path, value: &V) -> Result<(), ReportError> {
    let text = serde_json::to_string_pretty(value).map_err(|source| ReportError::Json { path: path.into(), source })?;
    fs::write(path, text + "\n").map_err(io_error(path))
}

pub fn read_json<V: DeserializeOwned>(path: &Path) -> Result<V, ReportError> {
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    serde_json::from_str(&text).map_err(|source| ReportError::Json { path: path.into(), source })
}

fn csv_error(path: &Path) -> impl FnOnce(csv::Error) -> ReportError + '_ {
    move |source| {
        if !source.is_io_error() {
            return ReportError::Csv { path: path.into(), source };
        }
        match source.into_kind() {
            csv::ErrorKind::Io(source) => ReportError::Io { path: path.into(), source },
            _ => unreachable!("checked to be an I/O error"),
        }
    }
}

pub fn write_csv<T: Scalar>(path: &Path, series: &CopSeries<T>) -> Result<(), ReportError> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_error(path))?;
    writer.write_record(CSV_COLUMNS).map_err(csv_error(path))?;
    for p in &series.points {
        writer
            .write_record([
                p.index.to_string(),
                side_name(p.side_to_move).to_string(),
                p.score_mean_before.to_string(),
                p.score_mean_after_pass.to_string(),
                p.cost.to_string(),
                p.win_rate.to_string(),
                p.effect.map(|e| e.to_string()).unwrap_or_default(),
            ])
            .map_err(csv_error(path))?;
    }
    writer.flush().map_err(io_error(path))
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct CsvRow<T> {
    index: usize,
    side_to_move: Color,
    score_mean_before: T,
    score_mean_after_pass: T,
    cost: T,
    win_rate: T,
    effect: Option<T>,
}

/// Points read back from a CSV export. Pass flags are not part of the CSV
/// and come back false.
pub fn read_csv<T: Scalar + DeserializeOwned>(path: &Path) -> Result<Vec<CopPoint<T>>, ReportError> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_error(path))?;
    reader
        .deserialize::<CsvRow<T>>()
        .map(|row| {
            row.map(|r| CopPoint {
                index: r.index,
                side_to_move: r.side_to_move,
                score_mean_before: r.score_mean_before,
                score_mean_after_pass: r.score_mean_after_pass,
                cost: r.cost,
                win_rate: r.win_rate,
                effect: r.effect,
                played_pass: false,
            })
            .map_err(csv_error(path))
        })
        .collect()
}

/// Writes `analysis.json` or `analysis.csv` into `destination`, plus
/// `features.json` and `quality.json` when given. Returns the written paths.
pub fn export_analysis<T: Scalar + Serialize>(
    series: &CopSeries<T>,
    features: Option<&FeatureSet<T>>,
    quality: Option<&GameSummary<T>>,
    format: ExportFormat,
    destination: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(destination).map_err(io_error(destination))?;
    let mut written = Vec::new();
    let analysis = match format {
        ExportFormat::Json => {
            let path = destination.join("analysis.json");
            write_json(&path, series)?;
            path
        }
        ExportFormat::Csv => {
            let path = destination.join("analysis.csv");
            write_csv(&path, series)?;
            path
        }
    };
    written.push(analysis);
    if let Some(features) = features {
        let path = destination.join("features.json");
        write_json(&path, features)?;
        written.push(path);
    }
    if let Some(quality) = quality {
        let path = destination.join("quality.json");
        write_json::<QualityReport>(&path, &quality.report())?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{extract_features, FeatureParams, SegmentKind, Stage};
    use crate::quality::{game_summary, QualityOptions};

    fn fit(scale: f64) -> BaselineFit<f64> {
        BaselineFit { slope: -0.05, intercept: 12.0, residual_scale: scale, inlier_count: 0, inliers: vec![] }
    }

    fn on_line(i: usize, above: f64) -> f64 {
        12.0 - 0.05 * i as f64 + above
    }

    #[test]
    fn danger_buckets() {
        let f = fit(1.5);
        let level = |above: f64| danger_level(on_line(40, above), &f, 40, DangerMode::Residual).level;
        assert_eq!(level(0.0), 0);
        assert_eq!(level(-5.0), 0);
        assert_eq!(level(1.5), 0);
        assert_eq!(level(2.0), 1);
        assert_eq!(level(4.5), 2);
        assert_eq!(level(15.0), 3);
    }

    #[test]
    fn zero_mad_means_any_excess_is_maximal() {
        let d = danger_level(on_line(10, 0.1), &fit(0.0), 10, DangerMode::Residual);
        assert_eq!((d.level, d.residual_in_mads), (3, f64::INFINITY));
        let json = serde_json::to_string(&d).unwrap();
        assert!(json.contains("\"residualInMads\":null"), "{json}");
        assert_eq!(serde_json::from_str::<DangerLevel>(&json).unwrap(), d);
        assert_eq!(danger_level(on_line(10, 0.0), &fit(0.0), 10, DangerMode::Residual).level, 0);
    }

    #[test]
    fn same_cost_is_judged_by_position_in_game() {
        let f = fit(1.0);
        assert_eq!(danger_level(9.0, &f, 20, DangerMode::Residual).level, 0);
        assert_eq!(danger_level(9.0, &f, 180, DangerMode::Residual).level, 3);
        assert_eq!(danger_level(9.0, &f, 20, DangerMode::Absolute).level, 1);
        assert_eq!(danger_level(9.0, &f, 180, DangerMode::Absolute).level, 1);
    }

    fn sample() -> CopSeries<f64> {
        let mut costs: Vec<f64> = (0..216).map(|i| on_line(i, 0.0)).collect();
        for c in &mut costs[75..=88] {
            *c += 8.0;
        }
        let mut s = CopSeries::from_costs(&costs);
        for p in &mut s.points {
            p.effect = Some(-0.1);
        }
        s
    }

    #[test]
    fn chart_has_a_mark_per_move() {
        let s = sample();
        let features = extract_features(&s, &FeatureParams::default()).unwrap();
        let chart = render_chart(&s, &features.baseline, &features.segments, &features.stages);
        assert_eq!(chart.cost_marks(), 216);
        assert!(chart.has_segment_layer());
        assert_eq!(features.segments[0].kind, SegmentKind::TwoSidedFight);
        assert_eq!(chart.to_json(), render_chart(&s, &features.baseline, &features.segments, &features.stages).to_json());
        let bare = render_chart(&s, &features.baseline, &[], &[StageSpan { stage: Stage::Opening, start: 0, end: 215 }]);
        assert!(!bare.has_segment_layer());
        let parsed: Value = serde_json::from_str(&bare.to_json()).unwrap();
        assert_eq!(parsed["layer"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = sample();
        for p in &mut s.points {
            p.cost += 1.0 / 3.0;
            p.win_rate = 0.1 + 0.2;
        }
        s.points.last_mut().unwrap().effect = None;
        let features = extract_features(&s, &FeatureParams::default()).unwrap();
        let summary = game_summary(&s, QualityOptions::default()).unwrap();
        let written = export_analysis(&s, Some(&features), Some(&summary), ExportFormat::Json, dir.path()).unwrap();
        assert_eq!(written.len(), 3);
        assert_eq!(read_json::<CopSeries<f64>>(&written[0]).unwrap(), s);
        assert_eq!(read_json::<FeatureSet<f64>>(&written[1]).unwrap(), features);
        assert_eq!(read_json::<QualityReport>(&written[2]).unwrap(), summary.report());
    }

    #[test]
    fn csv_has_header_and_a_line_per_point() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = sample();
        s.points[3].cost = 1.0 / 7.0;
        s.points.last_mut().unwrap().effect = None;
        let written = export_analysis(&s, None, None, ExportFormat::Csv, dir.path()).unwrap();
        let text = fs::read_to_string(&written[0]).unwrap();
        assert_eq!(text.lines().count(), 217);
        assert_eq!(text.lines().next().unwrap(), CSV_COLUMNS.join(","));
        let back: Vec<CopPoint<f64>> = read_csv(&written[0]).unwrap();
        assert_eq!(back.len(), s.len());
        for (a, b) in back.iter().zip(&s.points) {
            assert_eq!((a.index, a.side_to_move, a.effect.is_some()), (b.index, b.side_to_move, b.effect.is_some()));
            assert!((a.cost - b.cost).abs() < 1e-6);
        }
    }

    #[test]
    fn unwritable_destination_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let err = export_analysis(&sample(), None, None, ExportFormat::Json, &blocker.join("sub")).unwrap_err();
        assert!(matches!(err, ReportError::Io { .. }), "{err}");
        let err = export_analysis(&sample(), None, None, ExportFormat::Csv, &blocker).unwrap_err();
        assert!(matches!(err, ReportError::Io { .. }), "{err}");
    }
}
