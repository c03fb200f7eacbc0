use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_colorcascade"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn colorcascade")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn dir_digest(dir: &Path) -> String {
    let mut files: Vec<PathBuf> = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.push(path);
            }
        }
    }
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        let rel = f.strip_prefix(dir).unwrap();
        // gen.json echoes --out, which differs between the two directories
        if rel == Path::new("gen.json") {
            continue;
        }
        h.update(rel.to_str().unwrap().as_bytes());
        h.update(std::fs::read(&f).unwrap());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// A trained RGB and grayscale model pair at side 32, shared by the tests.
struct Models {
    dir: TempDir,
}

impl Models {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn cascade(&self) -> PathBuf {
        self.path("cascade.txt")
    }
}

fn models() -> &'static Models {
    static MODELS: OnceLock<Models> = OnceLock::new();
    MODELS.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        ok(&["gen", "--per-class", "12", "--size", "32", "--seed", "3", "--out", p(&data)]);
        for (proj, name) in [("rgb", "c.cgw"), ("gray", "l.cgw")] {
            let out = dir.path().join(name);
            ok(&[
                "train", "--class-channels", proj, "--data-dir", p(&data), "--epochs", "2", "--seed", "7", "--size", "32",
                "--out", p(&out),
            ]);
        }
        std::fs::write(
            dir.path().join("cascade.txt"),
            "# color then gray\nprojection=identity_rgb weights=c.cgw threshold=0.9\nprojection=grayscale weights=l.cgw threshold=0.9\n",
        )
        .unwrap();
        Models { dir }
    })
}

#[test]
fn gen_timeline_example() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("video");
    ok(&[
        "gen",
        "--timeline",
        "plain:2,explosion:1,plain:2",
        "--fps",
        "10",
        "--size",
        "16",
        "--out",
        p(&out),
    ]);
    let frames = std::fs::read_dir(out.join("frames")).unwrap().count();
    assert_eq!(frames, 50);
    let truth = std::fs::read_to_string(out.join("truth.csv")).unwrap();
    let rows: Vec<&str> = truth.lines().collect();
    assert_eq!(rows[0], "start_s,end_s,label");
    assert_eq!(rows.len(), 2, "{truth}");
    let fields: Vec<&str> = rows[1].split(',').collect();
    assert_eq!(fields[0].parse::<f64>().unwrap(), 2.0);
    assert_eq!(fields[1].parse::<f64>().unwrap(), 3.0);
    let manifest = std::fs::read_to_string(out.join("frames.txt")).unwrap();
    assert!(manifest.starts_with("fps=10\n"), "{manifest}");
    let meta = read_json(&out.join("gen.json"));
    assert_eq!(meta["args"]["timeline"], "plain:2,explosion:1,plain:2");
    assert_eq!(meta["args"]["seed"], 1);
}

#[test]
fn gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        ok(&[
            "gen",
            "--per-class",
            "10",
            "--classes",
            "explosion,light,structure,plain",
            "--size",
            "16",
            "--seed",
            "9",
            "--out",
            p(&dir.path().join(name)),
        ]);
    }
    assert_eq!(dir_digest(&dir.path().join("a")), dir_digest(&dir.path().join("b")));
    assert_eq!(std::fs::read_dir(dir.path().join("a/neg")).unwrap().count(), 30);
}

#[test]
fn training_is_deterministic_and_writes_spec() {
    let m = models();
    let again = m.path("c2.cgw");
    ok(&[
        "train",
        "--class-channels",
        "rgb",
        "--data-dir",
        p(&m.path("data")),
        "--epochs",
        "2",
        "--seed",
        "7",
        "--size",
        "32",
        "--out",
        p(&again),
    ]);
    assert_eq!(std::fs::read(m.path("c.cgw")).unwrap(), std::fs::read(&again).unwrap());
    let spec = read_json(&m.path("c.cgw.spec.json"));
    assert_eq!(spec["input_dims"]["channels"], 3);
    assert_eq!(read_json(&m.path("l.cgw.spec.json"))["input_dims"]["channels"], 1);
}

#[test]
fn training_input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["gen", "--per-class", "10", "--size", "32", "--out", p(&data)]);
    let w = dir.path().join("w.cgw");

    let zero = run(&["train", "--data-dir", p(&data), "--epochs", "0", "--out", p(&w)]);
    assert_eq!(code(&zero), 2, "{}", stderr(&zero));

    for f in std::fs::read_dir(data.join("pos")).unwrap() {
        std::fs::remove_file(f.unwrap().path()).unwrap();
    }
    let empty = run(&[
        "train",
        "--data-dir",
        p(&data),
        "--epochs",
        "1",
        "--size",
        "32",
        "--out",
        p(&w),
    ]);
    assert_eq!(code(&empty), 2);
    assert!(stderr(&empty).contains(p(&data.join("pos"))), "{}", stderr(&empty));
    assert!(!w.exists());
}

fn video(dir: &Path, timeline: &str) -> PathBuf {
    let out = dir.join("video");
    ok(&[
        "gen",
        "--timeline",
        timeline,
        "--fps",
        "4",
        "--size",
        "32",
        "--seed",
        "5",
        "--out",
        p(&out),
    ]);
    out.join("frames.txt")
}

#[test]
fn classify_is_deterministic_and_emits_tracks() {
    let m = models();
    let dir = tempfile::tempdir().unwrap();
    let frames = video(dir.path(), "plain:1,explosion:2,light:1");
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for r in [&a, &b] {
        ok(&[
            "classify",
            "--cascade",
            p(&m.cascade()),
            "--frames",
            p(&frames),
            "--mode",
            "video",
            "--report",
            p(r),
        ]);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let report = read_json(&a);
    assert_eq!(report["frames"].as_array().unwrap().len(), 16);
    assert_eq!(report["video"]["window"], 3);
    assert!(report["events"].is_array());
    let csv = std::fs::read_to_string(dir.path().join("a.json.tracks.csv")).unwrap();
    assert!(csv.starts_with("frame_index,score_C,label_C,score_L,label_L,final_label\n"));
    assert_eq!(csv.lines().count(), 17);

    // the events file feeds straight into evaluate
    let truth = dir.path().join("video/truth.csv");
    let eval = ok(&["evaluate", "--events", p(&a), "--truth", p(&truth)]);
    let eval: Value = serde_json::from_str(&eval).unwrap();
    assert_eq!(eval["tolerance_s"], 1.0);
    assert_eq!(eval["videos"][0]["truth_intervals"], 1);
}

#[test]
fn single_frame_video_equals_image_mode() {
    let m = models();
    let dir = tempfile::tempdir().unwrap();
    let frames = video(dir.path(), "explosion:0.25");
    let (img, vid) = (dir.path().join("i.json"), dir.path().join("v.json"));
    ok(&[
        "classify",
        "--cascade",
        p(&m.cascade()),
        "--frames",
        p(&frames),
        "--mode",
        "image",
        "--report",
        p(&img),
    ]);
    ok(&[
        "classify",
        "--cascade",
        p(&m.cascade()),
        "--frames",
        p(&frames),
        "--mode",
        "video",
        "--report",
        p(&vid),
    ]);
    let (img, vid) = (read_json(&img), read_json(&vid));
    assert_eq!(img["frames"].as_array().unwrap().len(), 1);
    assert_eq!(img["frames"][0]["positive"], vid["frames"][0]["positive"]);
}

#[test]
fn classify_error_codes() {
    let m = models();
    let dir = tempfile::tempdir().unwrap();
    let frames = video(dir.path(), "plain:1");

    let no_fps = dir.path().join("nofps.txt");
    std::fs::write(&no_fps, "video/frames/00000.ppm\nvideo/frames/00001.ppm\n").unwrap();
    let out = run(&[
        "classify",
        "--cascade",
        p(&m.cascade()),
        "--frames",
        p(&no_fps),
        "--mode",
        "video",
        "--report",
        p(&dir.path().join("r.json")),
    ]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("fps"));

    let missing = dir.path().join("missing.txt");
    std::fs::write(&missing, "fps=4\nvideo/frames/00000.ppm\nvideo/frames/nope.ppm\n").unwrap();
    let out = run(&[
        "classify",
        "--cascade",
        p(&m.cascade()),
        "--frames",
        p(&missing),
        "--report",
        p(&dir.path().join("r.json")),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("nope.ppm"), "{}", stderr(&out));

    let swapped = m.path("swapped.txt");
    std::fs::write(&swapped, "projection=grayscale weights=c.cgw threshold=0.9\n").unwrap();
    let out = run(&[
        "classify",
        "--cascade",
        p(&swapped),
        "--frames",
        p(&frames),
        "--report",
        p(&dir.path().join("r.json")),
    ]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));

    // weights whose spec sidecar belongs to another model
    let crossed = m.path("crossed.txt");
    std::fs::write(
        &crossed,
        "projection=grayscale weights=c.cgw spec=l.cgw.spec.json threshold=0.9\n",
    )
    .unwrap();
    let out = run(&[
        "classify",
        "--cascade",
        p(&crossed),
        "--frames",
        p(&frames),
        "--report",
        p(&dir.path().join("r.json")),
    ]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
    assert!(stderr(&out).contains("layer 0"), "{}", stderr(&out));
}

#[test]
fn evaluate_worked_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let events = dir.path().join("events.json");
    std::fs::write(
        &events,
        r#"[{"start_s":2.2,"end_s":2.8},{"start_s":12.4,"end_s":12.6}]"#,
    )
    .unwrap();
    let truth = dir.path().join("truth.csv");
    std::fs::write(
        &truth,
        "start_s,end_s,label\n2.0,3.0,explosion\n10.0,12.0,explosion\n30.0,31.0,explosion\n",
    )
    .unwrap();
    let out = dir.path().join("report.json");
    let stdout = ok(&[
        "evaluate",
        "--events",
        p(&events),
        "--truth",
        p(&truth),
        "--out",
        p(&out),
    ]);
    let report: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(report, read_json(&out));
    assert_eq!(report["tolerance_s"], 1.0);
    let v = &report["videos"][0];
    assert_eq!(
        (v["tp"].as_u64(), v["fp"].as_u64(), v["fn"].as_u64()),
        (Some(2), Some(0), Some(1))
    );
    assert_eq!(v["precision"], 1.0);
    assert!((v["recall"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
    assert!((v["f1"].as_f64().unwrap() - 0.8).abs() < 1e-12);
}

#[test]
fn evaluate_degenerate_and_malformed() {
    let dir = tempfile::tempdir().unwrap();
    let events = dir.path().join("events.json");
    std::fs::write(&events, "[]").unwrap();
    let truth = dir.path().join("truth.csv");
    std::fs::write(&truth, "start_s,end_s,label\n").unwrap();
    let report: Value = serde_json::from_str(&ok(&[
        "evaluate",
        "--events",
        p(&events),
        "--truth",
        p(&truth),
        "--tolerance",
        "0.5",
    ]))
    .unwrap();
    assert_eq!(report["tolerance_s"], 0.5);
    assert_eq!(report["videos"][0]["degenerate"], true);
    assert_eq!(report["videos"][0]["f1"], 1.0);

    std::fs::write(&truth, "start_s,end_s,label\n1.0,2.0,explosion\n4.0,oops,explosion\n").unwrap();
    let out = run(&["evaluate", "--events", p(&events), "--truth", p(&truth)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
}

#[test]
fn bench_report_shape() {
    let m = models();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.json");
    let raw = dir.path().join("raw.csv");
    ok(&[
        "bench",
        "--cascade",
        p(&m.cascade()),
        "--count",
        "100",
        "--size",
        "32",
        "--positive-rate",
        "0.5",
        "--out",
        p(&out),
        "--raw-csv",
        p(&raw),
    ]);
    let r = read_json(&out);
    assert_eq!(r["args"]["positive_rate"], 0.5);
    let lat = &r["latency"];
    assert_eq!(lat["frames"], 100);
    assert_eq!(lat["repetitions"], 30);
    assert_eq!(lat["parallel"], false);
    assert_eq!(lat["stages"].as_array().unwrap().len(), 2);
    for key in ["mean_ms", "median_ms", "p95_ms"] {
        assert!(lat["end_to_end"][key].as_f64().unwrap() > 0.0);
    }
    assert_eq!(lat["invocations"]["per_stage"][0], 100);
    assert!(lat["banner"].as_str().unwrap().contains("no detector baseline"));
    assert_eq!(r["params"]["models"].as_array().unwrap().len(), 2);
    assert_eq!(std::fs::read_to_string(&raw).unwrap().lines().count(), 31);

    let short = run(&["bench", "--cascade", p(&m.cascade()), "--count", "50", "--size", "32"]);
    assert_eq!(code(&short), 2);
}

#[test]
fn params_of_the_full_models() {
    let r: Value = serde_json::from_str(&ok(&["params"])).unwrap();
    assert_eq!(r["models"][0]["params"], 1_211_649);
    assert_eq!(r["models"][1]["params"], 1_210_049);
    assert_eq!(r["ratio"], 10.55);
    assert_eq!(r["resnet50_reference"], 25_557_032);
}
