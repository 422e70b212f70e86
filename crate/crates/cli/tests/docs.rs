//! Checks the examples embedded in `docs/`.

use fisheye3d::data::{parse_calibration, parse_json, parse_manifest, parse_predictions, to_json};
use fisheye3d::evaluation::{EvalConfig, MetricsReport};
use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::Command;

fn docs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs")
}

/// `(info string, body)` of every fenced block.
fn fenced_blocks(markdown: &str) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut current: Option<(String, String)> = None;
    for line in markdown.lines() {
        match (&mut current, line.trim_start().strip_prefix("```")) {
            (None, Some(info)) => current = Some((info.trim().to_string(), String::new())),
            (Some(_), Some(_)) => out.push(current.take().unwrap()),
            (Some((_, body)), None) => {
                body.push_str(line);
                body.push('\n');
            }
            (None, None) => {}
        }
    }
    assert!(current.is_none(), "unterminated code fence");
    out
}

fn read_doc(name: &str) -> String {
    std::fs::read_to_string(docs_dir().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn canonical(kind: &str, text: &str) -> Result<String, String> {
    let e = |x: &dyn std::fmt::Display| x.to_string();
    Ok(match kind {
        "manifest" => to_json(&parse_manifest(text).map_err(|x| e(&x))?),
        "calibration" => to_json(&parse_calibration(text).map_err(|x| e(&x))?),
        "predictions" => to_json(&parse_predictions(text).map_err(|x| e(&x))?),
        "eval-config" => {
            let c: EvalConfig = parse_json(text).map_err(|x| e(&x))?;
            c.validate().map_err(|x| e(&x))?;
            to_json(&c)
        }
        "report" => {
            let r: MetricsReport = parse_json(text).map_err(|x| e(&x))?;
            r.validate().map_err(|x| e(&x))?;
            to_json(&r)
        }
        other => return Err(format!("unknown example kind '{other}'")),
    })
}

#[test]
fn schema_examples_validate_and_round_trip() {
    let blocks = fenced_blocks(&read_doc("schema.md"));
    let mut kinds = Vec::new();
    for (info, body) in &blocks {
        let Some(kind) = info.strip_prefix("json ") else { continue };
        let kind = kind.trim();
        let again = canonical(kind, body).unwrap_or_else(|e| panic!("{kind} example rejected: {e}"));
        let written: Value = serde_json::from_str(body).unwrap();
        let reread: Value = serde_json::from_str(&again).unwrap();
        assert_eq!(written, reread, "{kind} example does not survive a load/save round trip");
        kinds.push(kind.to_string());
    }
    for k in ["manifest", "calibration", "predictions", "eval-config", "report"] {
        assert!(kinds.iter().any(|x| x == k), "no {k} example in schema.md");
    }
}

#[test]
fn schema_examples_reject_unknown_fields() {
    let blocks = fenced_blocks(&read_doc("schema.md"));
    let (_, manifest) = blocks.iter().find(|(i, _)| i == "json manifest").unwrap();
    let tampered = manifest.replacen("\"schema_version\": 1,", "\"schema_version\": 1, \"extra\": true,", 1);
    assert!(parse_manifest(&tampered).is_err());
    let bad_box = manifest.replacen("\"yaw\": 0.1,", "\"yaw\": 0.1, \"velocity\": [0.0, 0.0],", 1);
    let err = parse_manifest(&bad_box).unwrap_err().to_string();
    assert!(err.contains("/scenes/0/frames/0/annotations/0"), "{err}");
}

#[test]
fn tutorial_runs_end_to_end() {
    let bin = PathBuf::from(env!("CARGO_BIN_EXE_fisheye3d"));
    let path = std::env::join_paths(
        std::iter::once(bin.parent().unwrap().to_path_buf()).chain(std::env::split_paths(&std::env::var_os("PATH").unwrap_or_default())),
    )
    .unwrap();
    let work = tempfile::tempdir().unwrap();
    let blocks = fenced_blocks(&read_doc("tutorial.md"));
    let scripts: Vec<&String> = blocks.iter().filter(|(i, _)| i == "sh").map(|(_, b)| b).collect();
    assert!(scripts.len() >= 6);
    let mut last_stdout = Vec::new();
    for script in scripts {
        let out = Command::new("sh").arg("-ec").arg(script).current_dir(work.path()).env("PATH", &path).output().unwrap();
        assert!(out.status.success(), "tutorial step failed:\n{script}\nstderr: {}", String::from_utf8_lossy(&out.stderr));
        last_stdout = out.stdout;
    }
    for f in [
        "data/manifest.json",
        "data/calibration.json",
        "rect/synth-7-0000.png",
        "front_persp.png",
        "bev/bev.csv",
        "bev/summary.json",
        "report.json",
        "classes.csv",
        "compression/curve.csv",
        "fds.json",
    ] {
        assert!(work.path().join(f).is_file(), "tutorial did not produce {f}");
    }

    // The worked example and the printed line agree with the tool.
    let v: Value = serde_json::from_slice(&last_stdout).unwrap();
    let fds = v["fds"].as_f64().unwrap();
    assert!((fds - 0.563).abs() < 5e-4, "{fds}");
    let shown = fenced_blocks(&read_doc("tutorial.md"))
        .into_iter()
        .filter(|(i, b)| i == "text" && b.contains("\"fds\""))
        .map(|(_, b)| b)
        .next()
        .unwrap();
    assert_eq!(shown.trim(), String::from_utf8_lossy(&last_stdout).trim());
}
