use std::path::Path;
use std::process::{Command, Output};

use gmtrack::geometry::BBox;
use gmtrack::io::{
    format_records, parse_detections, parse_detections_str, read_feature_csv, read_feature_file, result_records,
    sidecar_path, write_results, DetectionRecord,
};
use gmtrack::track::{interpolate_tracks, Detection, Matcher, Tracker, TrackerConfig};
use nalgebra::DVector;
use proptest::prelude::*;

fn gmtrack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gmtrack")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6f64..1e6, -1.0f64..1.0, Just(0.1 + 0.2)]
}

proptest! {
    #[test]
    fn records_round_trip_exactly(
        rows in prop::collection::vec((1u32..500, -1i64..50, finite(), finite(), 1e-3f64..1e4, 1e-3f64..1e4, finite()), 0..40)
    ) {
        let mut recs: Vec<DetectionRecord> = rows
            .into_iter()
            .map(|(frame, id, x, y, w, h, confidence)| DetectionRecord { frame, id, x, y, w, h, confidence })
            .collect();
        recs.sort_by_key(|r| r.frame);
        prop_assert_eq!(parse_detections_str(&format_records(&recs)).unwrap(), recs);
    }
}

fn tracker_with(frames: &[(u32, f64)], interpolate: bool) -> Tracker {
    let cfg = TrackerConfig {
        interpolate,
        ..TrackerConfig::default()
    };
    let mut t = Tracker::new(cfg, Matcher::GraphMatching).unwrap();
    for &(f, x) in frames {
        let d = Detection {
            bbox: BBox::new(x, 100.0, 20.0, 40.0),
            confidence: 1.0,
            feature: DVector::from_column_slice(&[1.0, 0.0, 0.5]),
        };
        t.step(f, &[d]).unwrap();
    }
    t
}

#[test]
fn single_track_two_frames() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.txt");
    write_results(&tracker_with(&[(1, 50.0), (2, 51.0)], false).tracks(), &out).unwrap();
    let recs = parse_detections(&out).unwrap();
    assert_eq!(recs.len(), 2);
    assert_eq!(recs[0].id, recs[1].id);
    assert!(std::fs::read_to_string(&out)
        .unwrap()
        .lines()
        .all(|l| l.ends_with(",1,-1,-1,-1")));
}

#[test]
fn empty_track_set_writes_empty_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.txt");
    write_results(&[], &out).unwrap();
    assert_eq!(std::fs::read(&out).unwrap(), b"");
    assert!(!sidecar_path(&out).exists());
}

#[test]
fn interpolated_boxes_flagged_in_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.txt");
    let raw = tracker_with(&[(1, 50.0), (2, 52.0), (5, 58.0)], false).tracks();
    let filled = interpolate_tracks(&raw);
    write_results(&filled, &out).unwrap();
    let recs = parse_detections(&out).unwrap();
    assert_eq!(recs.iter().map(|r| r.frame).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);
    assert_eq!(recs, result_records(&filled));
    let side = std::fs::read_to_string(sidecar_path(&out)).unwrap();
    let id = recs[0].id;
    assert_eq!(side, format!("3,{id}\n4,{id}\n"));
    // same output when the tracker interpolates itself
    let out2 = dir.path().join("r2.txt");
    write_results(&tracker_with(&[(1, 50.0), (2, 52.0), (5, 58.0)], true).tracks(), &out2).unwrap();
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&out2).unwrap());
}

#[test]
fn track_single_object_constant_id() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let s = |p: &str| d.join(p).to_string_lossy().into_owned();
    assert!(gmtrack(&["synth", "--scenario", "single", "--out-dir", &s("sc")])
        .status
        .success());
    std::fs::write(
        d.join("c.cfg"),
        "# defaults with a static camera\ntracker.camera = static\n",
    )
    .unwrap();
    let o = gmtrack(&[
        "track",
        "--config",
        &s("c.cfg"),
        "--det",
        &s("sc/det.txt"),
        "--feat",
        &s("sc/feat.bin"),
        "--out",
        &s("r.txt"),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let recs = parse_detections(&d.join("r.txt")).unwrap();
    assert_eq!(recs.len(), 60);
    assert!(recs.iter().all(|r| r.id == recs[0].id));

    let o = gmtrack(&["eval", "--gt", &s("sc/gt.txt"), "--res", &s("r.txt")]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().next().unwrap(), "MOTA=1.000 IDF1=1.000");
    let o = gmtrack(&["eval", "--gt", &s("sc/gt.txt"), "--res", &s("r.txt"), "--kv"]);
    assert!(stdout(&o).lines().nth(1).unwrap().contains("idf1=1.000000"));
}

#[test]
fn csv_features_match_binary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let s = |p: &str| d.join(p).to_string_lossy().into_owned();
    assert!(gmtrack(&["synth", "--scenario", "linear_0", "--out-dir", &s("b")])
        .status
        .success());
    assert!(
        gmtrack(&["synth", "--scenario", "linear_0", "--out-dir", &s("c"), "--feat-csv"])
            .status
            .success()
    );
    let bin = read_feature_file(Path::new(&s("b/feat.bin"))).unwrap();
    let csv = read_feature_csv(Path::new(&s("c/feat.csv"))).unwrap();
    assert_eq!(bin, csv);
    for (dir, extra) in [("b", None), ("c", Some("--feat-csv"))] {
        let feat = if extra.is_some() {
            s("c/feat.csv")
        } else {
            s("b/feat.bin")
        };
        let det = s("b/det.txt");
        let out = s(&format!("{dir}.txt"));
        let mut args = vec!["track", "--det", &det];
        args.extend(["--feat", &feat, "--out", &out]);
        args.extend(extra);
        assert!(gmtrack(&args).status.success());
    }
    assert_eq!(std::fs::read(s("b.txt")).unwrap(), std::fs::read(s("c.txt")).unwrap());
}

fn error_line(o: &Output, code: i32, kind: &str) {
    assert_eq!(o.status.code(), Some(code), "{}", stderr(o));
    let err = stderr(o);
    let lines: Vec<&str> = err.lines().collect();
    assert_eq!(lines.len(), 1, "{err}");
    assert!(
        lines[0].starts_with(&format!("error code={code} kind={kind} msg=\"")),
        "{err}"
    );
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let s = |p: &str| d.join(p).to_string_lossy().into_owned();
    error_line(&gmtrack(&["frobnicate"]), 1, "usage");
    error_line(&gmtrack(&["eval", "--gt", "x"]), 1, "usage");
    assert!(gmtrack(&["synth", "--out-dir", &s("sc")]).status.success());
    let base = [
        "track",
        "--det",
        &s("sc/det.txt"),
        "--feat",
        &s("sc/feat.bin"),
        "--out",
        &s("r.txt"),
    ];
    let with = |extra: &[&str]| {
        let mut a: Vec<&str> = base.to_vec();
        a.extend_from_slice(extra);
        gmtrack(&a)
    };
    error_line(&with(&["--set", "tracker.nope=1"]), 1, "usage");
    error_line(&with(&["--set", "tracker.sigma=1.5"]), 1, "usage");
    std::fs::write(d.join("bad.txt"), "1,-1,0,0,5,5,1\n2,-1,0,0,5\n").unwrap();
    error_line(
        &gmtrack(&[
            "track",
            "--det",
            &s("bad.txt"),
            "--feat",
            &s("sc/feat.bin"),
            "--out",
            &s("r.txt"),
        ]),
        2,
        "data",
    );
    error_line(
        &gmtrack(&[
            "track",
            "--det",
            &s("missing.txt"),
            "--feat",
            &s("sc/feat.bin"),
            "--out",
            &s("r.txt"),
        ]),
        2,
        "data",
    );
    std::fs::write(d.join("trunc.bin"), b"GMTFEAT\0\x01\0\0\0").unwrap();
    error_line(
        &gmtrack(&[
            "track",
            "--det",
            &s("sc/det.txt"),
            "--feat",
            &s("trunc.bin"),
            "--out",
            &s("r.txt"),
        ]),
        2,
        "data",
    );
}

#[test]
fn gradcheck_passes_and_fails_on_threshold() {
    let o = gmtrack(&["gradcheck", "--seed", "7"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("suite=qp_backward") && out.contains("suite=end_to_end"));
    let o = gmtrack(&[
        "gradcheck",
        "--seed",
        "7",
        "--qp-instances",
        "3",
        "--e2e-instances",
        "1",
        "--tol",
        "1e-30",
    ]);
    error_line(&o, 3, "numerical");
}

#[test]
fn seeds_are_honored() {
    let dir = tempfile::tempdir().unwrap();
    let s = |p: &str| dir.path().join(p).to_string_lossy().into_owned();
    for (name, seed) in [("a", "1"), ("b", "1"), ("c", "2")] {
        assert!(
            gmtrack(&["synth", "--scenario", "linear_1", "--seed", seed, "--out-dir", &s(name)])
                .status
                .success()
        );
    }
    let det = |n: &str| std::fs::read(s(&format!("{n}/det.txt"))).unwrap();
    assert_eq!(det("a"), det("b"));
    assert_ne!(det("a"), det("c"));

    let bench = |seed: &str| stdout(&gmtrack(&["bench", "--suite", "long", "--seed", seed]));
    assert_eq!(bench("4"), bench("4"));
    assert!(bench("0").contains("hidden_20"));
}
