use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use skatecv_cli::commands::{cmd_crop_plan, cmd_evaluate, cmd_fuse, cmd_mock_predict, cmd_tta_plan, run_all};
use skatecv_cli::config::{PipelineConfig, PREDICTIONS_FILE};
use skatecv_cli::fixture::{write_fixture, FixtureSpec};
use skatecv_cli::CliError;
use skatecv_core::jsonl;
use skatecv_core::LogitsRecord;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_skatecv"))
}

fn small_fixture(dir: &Path, videos: usize) -> PathBuf {
    write_fixture(
        dir,
        &FixtureSpec {
            videos,
            classes: 5,
            seed: 9,
        },
    )
    .unwrap()
}

fn lines(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn crop_plan_one_line_per_video_and_rerun_is_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig::load(&small_fixture(tmp.path(), 12)).unwrap();
    let s = cmd_crop_plan(&cfg).unwrap();
    assert_eq!(s.videos, 12);
    assert_eq!(lines(&s.output), 12);
    let first = fs::read(&s.output).unwrap();
    cmd_crop_plan(&cfg).unwrap();
    assert_eq!(first, fs::read(&s.output).unwrap());
    for line in fs::read_to_string(&s.output).unwrap().lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let (w, h, x, y) = (&v["crop_w"], &v["crop_h"], &v["crop_x"], &v["crop_y"]);
        assert_eq!(v["filter"], format!("crop={w}:{h}:{x}:{y}"));
    }
}

#[test]
fn video_without_detections_fails_with_its_id() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_fixture(tmp.path(), 3);
    let manifest = tmp.path().join("manifest.jsonl");
    let mut m = fs::read_to_string(&manifest).unwrap();
    m.push_str("{\"video_id\":\"ghost\",\"width\":320,\"height\":240,\"num_frames\":40}\n");
    fs::write(&manifest, m).unwrap();

    let out = bin().args(["crop-plan", "--config"]).arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["kind"], "validation");
    assert_eq!(err["errors"][0]["video_id"], "ghost");
    assert!(!tmp.path().join("out/crop_plan.jsonl").exists());

    // The fallback flag turns it into a full-frame crop.
    let text = fs::read_to_string(&config)
        .unwrap()
        .replace("fallback_full_frame = false", "fallback_full_frame = true");
    fs::write(&config, text).unwrap();
    let out = bin().args(["crop-plan", "--config"]).arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let plan = fs::read_to_string(tmp.path().join("out/crop_plan.jsonl")).unwrap();
    assert!(plan.contains("{\"video_id\":\"ghost\",\"crop_x\":0,\"crop_y\":0,\"crop_w\":320,\"crop_h\":240,\"filter\":\"crop=320:240:0:0\"}"));
}

#[test]
fn missing_input_is_an_io_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_fixture(tmp.path(), 2);
    fs::remove_file(tmp.path().join("detections.jsonl")).unwrap();
    let out = bin().args(["crop-plan", "--config"]).arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["kind"], "io");
}

#[test]
fn strict_flag_rejects_inverted_boxes() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_fixture(tmp.path(), 2);
    let det = tmp.path().join("detections.jsonl");
    let mut d = fs::read_to_string(&det).unwrap();
    d.push_str("{\"video_id\":\"vid_00000\",\"frame\":0,\"x1\":50,\"y1\":10,\"x2\":10,\"y2\":60,\"score\":0.9}\n");
    fs::write(&det, d).unwrap();
    let lenient = bin().args(["crop-plan", "--config"]).arg(&config).output().unwrap();
    assert_eq!(lenient.status.code(), Some(0));
    let strict = bin()
        .args(["crop-plan", "--strict", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(strict.status.code(), Some(1));
}

#[test]
fn tta_plan_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_fixture(tmp.path(), 7);
    let plan = tmp.path().join("out/tta_plan.jsonl");
    assert!(bin()
        .args(["crop-plan", "--config"])
        .arg(&config)
        .status()
        .unwrap()
        .success());
    assert!(bin()
        .args(["tta-plan", "--config"])
        .arg(&config)
        .status()
        .unwrap()
        .success());
    assert_eq!(lines(&plan), 15 * 7);
    let first = fs::read(&plan).unwrap();
    assert!(bin()
        .args(["tta-plan", "--config"])
        .arg(&config)
        .status()
        .unwrap()
        .success());
    assert_eq!(first, fs::read(&plan).unwrap());
    assert!(bin()
        .args(["tta-plan", "--temporal-views", "1", "--config"])
        .arg(&config)
        .status()
        .unwrap()
        .success());
    assert_eq!(lines(&plan), 3 * 7);
    let out = bin()
        .args(["tta-plan", "--spatial-views", "5", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn perfect_mock_scores_one() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = PipelineConfig::load(&small_fixture(tmp.path(), 40)).unwrap();
    for s in cfg.mock.per_model_skill.values_mut() {
        *s = 1.0;
    }
    cfg.mock.noise_scale = 0.0;
    let report = run_all(&cfg).unwrap();
    assert_eq!(report.report.mean, 1.0);
    assert!(report.leaderboard.rows.iter().all(|r| r.score == "100.00"));
}

#[test]
fn mock_predict_is_seeded() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_fixture(tmp.path(), 6);
    let mut cfg = PipelineConfig::load(&config).unwrap();
    cmd_crop_plan(&cfg).unwrap();
    cmd_tta_plan(&cfg).unwrap();
    let path = cmd_mock_predict(&cfg).unwrap();
    let a = fs::read(&path).unwrap();
    assert_eq!(lines(&path), 6 * 3 * 15);
    cmd_mock_predict(&cfg).unwrap();
    assert_eq!(a, fs::read(&path).unwrap());
    cfg.mock.seed += 1;
    cmd_mock_predict(&cfg).unwrap();
    assert_ne!(a, fs::read(&path).unwrap());
}

#[test]
fn report_file_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_fixture(tmp.path(), 30);
    let out = bin().args(["run-all", "--config"]).arg(&config).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("Method"));
    assert!(stdout.contains("Model Weighted Summation"));

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["strategy"], "weighted");
    let mean = report["mean"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&mean));
    assert!(report["overall_top1"].as_f64().is_some());
    let per_class = report["per_class"].as_array().unwrap();
    assert_eq!(per_class.len(), 5);
    for (i, c) in per_class.iter().enumerate() {
        assert_eq!(c["class_index"], i);
        assert!(c["samples"].as_u64().unwrap() >= c["correct"].as_u64().unwrap());
    }
    assert!(report["warnings"]["extra_predictions"].is_u64());
    assert!(report["warnings"]["empty_classes"].is_array());
    let rows = report["leaderboard"]["rows"].as_array().unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r["method"].as_str().unwrap()).collect();
    assert_eq!(
        names,
        vec![
            "umt",
            "uniformerv2",
            "infogcn",
            "Model Voter",
            "Model Weighted Summation",
            "predictions (weighted)"
        ]
    );
}

#[test]
fn output_dir_env_override() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_fixture(tmp.path(), 2);
    let other = tmp.path().join("elsewhere");
    let status = bin()
        .args(["crop-plan", "--config"])
        .arg(&config)
        .env("SKATECV_OUTPUT_DIR", &other)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(other.join("crop_plan.jsonl").exists());
}

/// Hand-built workspace with external logits: 3 classes, 3 models, 1 view.
fn hand_workspace(
    dir: &Path,
    strategy: &str,
    models: &[&str],
    logits: &[LogitsRecord],
    labels: &str,
) -> PipelineConfig {
    fs::write(dir.join("classes.txt"), "axel\nloop\nflip\n").unwrap();
    fs::write(dir.join("labels.txt"), labels).unwrap();
    let mut buf = Vec::new();
    jsonl::write_all(&mut buf, logits).unwrap();
    fs::write(dir.join("logits.jsonl"), buf).unwrap();
    let order = models.iter().map(|m| format!("\"{m}\"")).collect::<Vec<_>>().join(", ");
    let weights = match models.len() {
        3 => "[94.5, 95.0, 92.0]",
        _ => "[1.0]",
    };
    let tiebreak = if models.len() == 3 { models[1] } else { models[0] };
    let text = format!(
        r#"[paths]
detections = "none.jsonl"
manifest = "none.jsonl"
class_map = "classes.txt"
labels = "labels.txt"
output_dir = "out"
logits = "logits.jsonl"

[tta]
temporal_views = 1

[fusion.ensemble]
strategy = "{strategy}"
model_order = [{order}]
tiebreak_model = "{tiebreak}"
raw_weights = {weights}
"#
    );
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    PipelineConfig::load(&path).unwrap()
}

fn log_probs(video: &str, model: &str, p: &[f64]) -> Vec<LogitsRecord> {
    (0..3)
        .map(|view| LogitsRecord {
            video_id: video.into(),
            model_id: model.into(),
            view_id: view,
            logits: p.iter().map(|x| x.ln()).collect(),
        })
        .collect()
}

fn predicted(cfg: &PipelineConfig) -> BTreeMap<String, usize> {
    jsonl::read_all::<serde_json::Value, _>(fs::read(cfg.output(PREDICTIONS_FILE)).unwrap().as_slice())
        .unwrap()
        .into_iter()
        .map(|(_, v)| {
            (
                v["video_id"].as_str().unwrap().to_string(),
                v["pred_class"].as_u64().unwrap() as usize,
            )
        })
        .collect()
}

#[test]
fn vote_and_weighted_disagree_where_expected() {
    // umt and infogcn lean weakly to class 0, uniformerv2 strongly to class 1.
    // Vote: 2 of 3 for class 0.
    // Weighted: class 0 = .366*.40 + .604*.05 + .030*.5 = .192,
    //           class 1 = .366*.35 + .604*.90 + .030*.4 = .683.
    let mut logits = log_probs("v", "umt", &[0.40, 0.35, 0.25]);
    logits.extend(log_probs("v", "uniformerv2", &[0.05, 0.90, 0.05]));
    logits.extend(log_probs("v", "infogcn", &[0.50, 0.40, 0.10]));
    let models = ["umt", "uniformerv2", "infogcn"];

    let tmp = tempfile::tempdir().unwrap();
    let cfg = hand_workspace(tmp.path(), "vote", &models, &logits, "v,0\n");
    cmd_fuse(&cfg).unwrap();
    assert_eq!(predicted(&cfg)["v"], 0);
    let first = fs::read(cfg.output(PREDICTIONS_FILE)).unwrap();
    cmd_fuse(&cfg).unwrap();
    assert_eq!(first, fs::read(cfg.output(PREDICTIONS_FILE)).unwrap());

    let cfg = hand_workspace(tmp.path(), "weighted", &models, &logits, "v,0\n");
    cmd_fuse(&cfg).unwrap();
    assert_eq!(predicted(&cfg)["v"], 1);
    let probs = fs::read_to_string(cfg.output(PREDICTIONS_FILE)).unwrap();
    let v: serde_json::Value = serde_json::from_str(probs.lines().next().unwrap()).unwrap();
    assert_eq!(v["pred_name"], "loop");
    let p1 = v["probs"][1].as_f64().unwrap();
    assert!((p1 - 0.683).abs() < 1e-3, "{p1}");

    let report = cmd_evaluate(&cfg).unwrap();
    assert_eq!(report.report.mean, 0.0);
    let vote_row = report
        .leaderboard
        .rows
        .iter()
        .find(|r| r.method == "Model Voter")
        .unwrap();
    assert_eq!(vote_row.score, "100.00");
}

#[test]
fn single_model_config_matches_that_model() {
    let mut logits = log_probs("a", "solo", &[0.2, 0.5, 0.3]);
    logits.extend(log_probs("b", "solo", &[0.6, 0.3, 0.1]));
    let tmp = tempfile::tempdir().unwrap();
    for strategy in ["vote", "weighted"] {
        let cfg = hand_workspace(tmp.path(), strategy, &["solo"], &logits, "a,1\nb,2\n");
        cmd_fuse(&cfg).unwrap();
        let p = predicted(&cfg);
        assert_eq!((p["a"], p["b"]), (1, 0));
        let r = cmd_evaluate(&cfg).unwrap();
        assert_eq!(r.report.mean, 0.5);
    }
}

#[test]
fn missing_views_are_listed() {
    let mut logits = log_probs("a", "solo", &[0.2, 0.5, 0.3]);
    logits.remove(1);
    let tmp = tempfile::tempdir().unwrap();
    let cfg = hand_workspace(tmp.path(), "vote", &["solo"], &logits, "a,1\n");
    match cmd_fuse(&cfg) {
        Err(CliError::Validation(items)) => {
            assert_eq!(items[0].video_id.as_deref(), Some("a"));
            assert!(items[0].message.contains("[1]"), "{}", items[0].message);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn evaluate_flags_missing_predictions() {
    let logits = log_probs("a", "solo", &[0.2, 0.5, 0.3]);
    let tmp = tempfile::tempdir().unwrap();
    let cfg = hand_workspace(tmp.path(), "vote", &["solo"], &logits, "a,1\nb,2\n");
    cmd_fuse(&cfg).unwrap();
    match cmd_evaluate(&cfg) {
        Err(CliError::Validation(items)) => assert!(items.iter().any(|i| i.video_id.as_deref() == Some("b"))),
        other => panic!("unexpected {other:?}"),
    }
}
