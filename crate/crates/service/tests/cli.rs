use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn holoquilt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_holoquilt"))
        .args(args)
        .env_remove("HOLOQUILT_PROFILE")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = holoquilt(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn sha(path: &Path) -> Vec<u8> {
    Sha256::digest(std::fs::read(path).unwrap()).to_vec()
}

fn avatar(dir: &Path) -> PathBuf {
    let path = dir.join("head.gsav");
    let p = path.to_str().unwrap();
    ok(&["synth-avatar", "--primitives", "400", "--seed", "5", "--out", p]);
    path
}

fn stream(dir: &Path, frames: &[u64]) -> PathBuf {
    let path = dir.join(format!("s{}.jsonl", frames.len()));
    let text: String = frames
        .iter()
        .map(|f| {
            format!(
                "{{\"frame\":{f},\"t\":{},\"psi\":[{},0.0,0.5,0.0],\"head_rotation\":[1,0,0,0],\"head_translation\":[0,0,0]}}\n",
                *f as f64 / 30.0,
                *f as f64 * 0.2
            )
        })
        .collect();
    std::fs::write(&path, text).unwrap();
    path
}

const SMALL: [&str; 2] = ["--view-size", "24x32"];

#[test]
fn render_quilt_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = avatar(dir.path());
    let run = |name: &str| {
        let out = dir.path().join(name);
        let printed = ok(&[
            &["render-quilt", "--avatar", a.to_str().unwrap(), "--psi", "0.5,0,1,-0.25"],
            &SMALL[..],
            &["--out", out.to_str().unwrap()],
        ]
        .concat());
        PathBuf::from(printed.trim())
    };
    let first = run("a.png");
    let second = run("b.png");
    assert_eq!(first.file_name().unwrap(), "a_qs8x6a0.75.png");
    assert!(first.with_extension("json").exists());
    assert_eq!(sha(&first), sha(&second));
    let image = image::open(&first).unwrap();
    assert_eq!((image.width(), image.height()), (8 * 24, 6 * 32));
}

#[test]
fn missing_avatar_exits_1_naming_the_path() {
    let out = holoquilt(&["render-quilt", "--avatar", "/no/such/avatar.gsav", "--out", "/tmp/x.png"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/avatar.gsav"));
}

#[test]
fn wrong_psi_length_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let a = avatar(dir.path());
    let o = dir.path().join("q.png");
    let out = holoquilt(&["render-quilt", "--avatar", a.to_str().unwrap(), "--psi", "1,2", "--out", o.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("blend shapes"));
}

#[test]
fn render_anim_writes_one_png_per_record() {
    let dir = tempfile::tempdir().unwrap();
    let a = avatar(dir.path());
    let s = stream(dir.path(), &[0, 1, 5]);
    let out = dir.path().join("anim");
    ok(&[
        &["render-anim", "--avatar", a.to_str().unwrap(), "--stream", s.to_str().unwrap()],
        &SMALL[..],
        &["--out", out.to_str().unwrap()],
    ]
    .concat());
    let mut names: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(
        names,
        ["frame_000000_qs8x6a0.75.png", "frame_000001_qs8x6a0.75.png", "frame_000005_qs8x6a0.75.png"]
    );

    // Same bytes as a one-shot render of that record.
    let single = dir.path().join("single.png");
    let printed = ok(&[
        &["render-quilt", "--avatar", a.to_str().unwrap(), "--stream", s.to_str().unwrap(), "--frame", "5"],
        &SMALL[..],
        &["--out", single.to_str().unwrap()],
    ]
    .concat());
    assert_eq!(sha(Path::new(printed.trim())), sha(&out.join(&names[2])));
}

#[test]
fn render_anim_empty_stream_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let a = avatar(dir.path());
    let s = stream(dir.path(), &[]);
    let out = dir.path().join("anim");
    ok(&["render-anim", "--avatar", a.to_str().unwrap(), "--stream", s.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(!out.exists() || std::fs::read_dir(&out).unwrap().next().is_none());
}

#[test]
fn render_anim_failure_leaves_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let a = avatar(dir.path());
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"frame\":0,\"t\":0,\"psi\":[0,0],\"head_rotation\":[1,0,0,0],\"head_translation\":[0,0,0]}\n").unwrap();
    let out = dir.path().join("anim");
    let o = holoquilt(&["render-anim", "--avatar", a.to_str().unwrap(), "--stream", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
}

fn dump(extra: &[&str]) -> Vec<serde_json::Value> {
    serde_json::from_str(&ok(&[&["calib", "dump"], extra].concat())).unwrap()
}

#[test]
fn calib_dump_default_profile_endpoints() {
    let recs = dump(&[]);
    assert_eq!(recs.len(), 48);
    assert_eq!(recs[0]["i"], 0);
    assert_eq!(recs[0]["alpha_off_deg"].as_f64(), Some(-20.0));
    assert_eq!(recs[47]["alpha_off_deg"].as_f64(), Some(20.0));
    assert_eq!(recs[0]["view"].as_array().unwrap().len(), 16);
    assert_eq!(recs[0]["proj"].as_array().unwrap().len(), 16);
}

#[test]
fn calib_dump_fourteen_degree_offset() {
    let recs = dump(&["--cam-size", "1", "--fov-deg", "14"]);
    let t = recs[0]["t_off"].as_f64().unwrap();
    assert!((t - 2.964_299_677_33).abs() < 1e-4, "{t}");
}

#[test]
fn calib_dump_49_views_center_is_unsheared() {
    let recs = dump(&["--views", "49", "--fov-deg", "14"]);
    assert_eq!(recs.len(), 49);
    let f = 1.0 / 7f64.to_radians().tan();
    let (n, far) = (0.1, 100.0);
    let expected = [
        f / 0.75, 0.0, 0.0, 0.0,
        0.0, f, 0.0, 0.0,
        0.0, 0.0, (far + n) / (n - far), -1.0,
        0.0, 0.0, 2.0 * far * n / (n - far), 0.0,
    ];
    let proj: Vec<f64> = recs[24]["proj"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    for (a, b) in proj.iter().zip(expected) {
        assert!((a - b).abs() <= 1e-9, "{proj:?}");
    }
}

#[test]
fn calib_dump_invalid_profile_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, "{\"display\": {}}").unwrap();
    let out = holoquilt(&["calib", "dump", "--profile", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.json"));
}

#[test]
fn profile_env_var_is_the_default() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("p.json");
    let mut profile = holoquilt_core::io::ProfileFile::default();
    profile.display.total_views = 12;
    profile.display.quilt_cols = 4;
    profile.display.quilt_rows = 3;
    std::fs::write(&p, profile.to_json()).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_holoquilt"))
        .args(["calib", "dump"])
        .env("HOLOQUILT_PROFILE", &p)
        .output()
        .unwrap();
    assert!(out.status.success());
    let recs: Vec<serde_json::Value> = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(recs.len(), 12);
}

#[test]
fn simulate_matches_quilt_cell() {
    let dir = tempfile::tempdir().unwrap();
    let a = avatar(dir.path());
    let q = dir.path().join("q.png");
    let quilt = PathBuf::from(
        ok(&[&["render-quilt", "--avatar", a.to_str().unwrap()], &SMALL[..], &["--out", q.to_str().unwrap()]].concat())
            .trim(),
    );
    let from_file = dir.path().join("obs1.png");
    let rendered = dir.path().join("obs2.png");
    ok(&["simulate", "--quilt", quilt.to_str().unwrap(), "--angle", "-20", "--out", from_file.to_str().unwrap()]);
    ok(&[
        &["simulate", "--avatar", a.to_str().unwrap(), "--angle", "-20"],
        &SMALL[..],
        &["--out", rendered.to_str().unwrap()],
    ]
    .concat());
    let q = image::open(&quilt).unwrap().into_rgba8();
    let v = image::open(&from_file).unwrap().into_rgba8();
    assert_eq!(sha(&from_file), sha(&rendered));
    // View 0 is the bottom-left cell.
    let cell = image::imageops::crop_imm(&q, 0, 5 * 32, 24, 32).to_image();
    assert_eq!(cell, v);
}

#[test]
fn bench_reports_every_stage() {
    let out = ok(&["bench", "--synthetic", "300", "--iterations", "2", "--view-size", "16x16", "--workers", "1"]);
    let rep: serde_json::Value = serde_json::from_str(&out).unwrap();
    let names: Vec<&str> = rep["stages"].as_array().unwrap().iter().map(|s| s["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["blend", "raster", "quilt", "shade"]);
    for s in rep["stages"].as_array().unwrap() {
        assert_eq!(s["samples_ms"].as_array().unwrap().len(), 2);
    }
    assert_eq!(rep["raster_per_view_ms"][0].as_array().unwrap().len(), 48);
    assert!(rep["frame_ms"].as_array().unwrap().iter().all(|t| t.as_f64().unwrap() > 0.0));

    let out = ok(&["bench", "--synthetic", "300", "--iterations", "0"]);
    let rep: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(rep["stages"].as_array().unwrap().iter().all(|s| s["samples_ms"].as_array().unwrap().is_empty()));
}

#[test]
fn bench_missing_avatar_exits_1() {
    let out = holoquilt(&["bench", "--avatar", "/nope.gsav"]);
    assert_eq!(out.status.code(), Some(1));
}
