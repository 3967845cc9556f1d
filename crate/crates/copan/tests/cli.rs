use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use copan_core::{CopSeries, FeatureSet, QualityReport};

const BIN: &str = env!("CARGO_BIN_EXE_copan");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn copan(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn mock_cmd(extra: &str) -> String {
    format!("{BIN} mock-engine {extra}")
}

fn read<T: serde::de::DeserializeOwned>(path: &Path) -> T {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn full_pipeline_against_the_mock_engine() {
    let dir = tempfile::tempdir().unwrap();
    let out = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let game = fixture("antti-shuto.sgf");
    let engine = mock_cmd("");
    let run = copan(&["analyze", game.to_str().unwrap(), "--engine-cmd", &engine, "--visits", "4", "--out", &out("a.json")]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));

    let series: CopSeries = read(Path::new(&out("a.json")));
    assert_eq!(series.len(), 216);
    assert_eq!(series.visits, 4);
    for p in &series.points {
        assert!((p.cost - (12.0 - 0.05 * p.index as f64)).abs() < 1e-9, "{p:?}");
    }
    assert!(series.points[..215].iter().all(|p| p.effect.is_some_and(|e| e.abs() < 1e-9)));
    assert_eq!(series.points[215].effect, None);

    assert!(copan(&["features", &out("a.json"), "--out", &out("f.json")]).status.success());
    let features: FeatureSet = read(Path::new(&out("f.json")));
    assert!(features.segments.is_empty());
    assert_eq!(features.stages.len(), 3);

    assert!(copan(&["quality", &out("a.json"), "--out", &out("q.json")]).status.success());
    let quality: QualityReport = read(Path::new(&out("q.json")));
    assert_eq!(quality.move_count, 216);
    assert_eq!(quality.players.len(), 2);

    assert!(copan(&["chart", &out("a.json"), &out("f.json"), "--out", &out("c.json")]).status.success());
    let chart: serde_json::Value = read(Path::new(&out("c.json")));
    assert_eq!(chart["layer"][1]["data"]["values"].as_array().unwrap().len(), 216);
}

#[test]
fn spikes_and_reporting_perspective_flow_through_the_protocol() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.json");
    let game = fixture("antti-shuto.sgf");
    let engine = mock_cmd("--perspective black --spike 80:7.5 --shuffle-window 4 --seed 3");
    let run = copan(&[
        "analyze",
        game.to_str().unwrap(),
        "--engine-cmd",
        &engine,
        "--perspective",
        "black",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let series: CopSeries = read(&path);
    assert!((series.points[79].cost - (12.0 - 0.05 * 79.0 + 7.5)).abs() < 1e-9);
    assert!((series.points[80].cost - (12.0 - 0.05 * 80.0)).abs() < 1e-9);
}

#[test]
fn scripted_fixture_and_csv_output() {
    let dir = tempfile::tempdir().unwrap();
    let sgf = dir.path().join("g.sgf");
    std::fs::write(&sgf, "(;GM[1]FF[4]SZ[9]KM[7];B[ee];W[cc])").unwrap();
    let script = dir.path().join("script.json");
    std::fs::write(
        &script,
        r#"[
            {"moves": "", "pass": false, "scoreLead": 3.0},
            {"moves": "", "pass": true, "scoreLead": -7.0},
            {"moves": "E5", "pass": false, "scoreLead": 4.0},
            {"moves": "E5", "pass": true, "scoreLead": 12.0}
        ]"#,
    )
    .unwrap();
    let csv = dir.path().join("a.csv");
    let engine = mock_cmd(&format!("--fixture {}", script.display()));
    let run = copan(&["analyze", sgf.to_str().unwrap(), "--engine-cmd", &engine, "--format", "csv", "--out", csv.to_str().unwrap()]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], "index,sideToMove,scoreMeanBefore,scoreMeanAfterPass,cost,winRate,effect");
    // fixture scores are black's; black to move loses 10 by passing, white 8
    assert!(lines[1].starts_with("0,black,3,-7,10,") && lines[1].ends_with(",1"), "{}", lines[1]);
    assert!(lines[2].starts_with("1,white,4,12,8,") && lines[2].ends_with(','), "{}", lines[2]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.sgf");
    std::fs::write(&bad, "(;SZ[19];B[zz").unwrap();
    let engine = mock_cmd("");
    assert_eq!(copan(&["analyze", bad.to_str().unwrap(), "--engine-cmd", &engine]).status.code(), Some(1));
    assert_eq!(copan(&["features", "/nonexistent.json"]).status.code(), Some(1));

    let game = fixture("antti-shuto.sgf");
    let crashing = mock_cmd("--crash-at 12");
    let run = copan(&["analyze", game.to_str().unwrap(), "--engine-cmd", &crashing, "--max-in-flight", "1"]);
    assert_eq!(run.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&run.stderr);
    assert!(stderr.contains("index 12") && stderr.contains("crashed"), "{stderr}");

    let missing = copan(&["analyze", game.to_str().unwrap(), "--engine-cmd", "/nonexistent/engine"]);
    assert_eq!(missing.status.code(), Some(2));
}
