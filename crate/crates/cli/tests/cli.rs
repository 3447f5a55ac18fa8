use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn pbgc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pbgc"))
        .args(args)
        .env("PBGC_OUT_DIR", dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = pbgc(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn manifest(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn p(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn synthesize_is_deterministic_and_writes_a_manifest() {
    let t = tempfile::tempdir().unwrap();
    let a = p(t.path(), "a.chnl");
    let b = p(t.path(), "b.chnl");
    for out in [&a, &b] {
        ok(
            t.path(),
            &[
                "synthesize",
                "--preset",
                "bs10-like",
                "--n",
                "4",
                "--count",
                "1000",
                "--seed",
                "7",
                "--out",
                s(out),
            ],
        );
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let m = manifest(&p(t.path(), "a.manifest.json"));
    assert_eq!(m["command"], "synthesize");
    assert_eq!(m["seed"], 7);
    assert_eq!(m["config"]["args"]["count"], 1000);
    assert_eq!(m["config"]["scenario"]["name"], "bs10-like");
    assert!(m["duration_secs"].as_f64().unwrap() >= 0.0);
    assert_eq!(m["tool_version"], env!("CARGO_PKG_VERSION"));
    let ds = pbgc::load_dataset(&a).unwrap();
    assert_eq!(ds.len(), 1000);
    assert_eq!(ds.shape(), Some((4, 4)));
}

#[test]
fn default_output_goes_to_the_environment_directory() {
    let t = tempfile::tempdir().unwrap();
    ok(
        t.path(),
        &[
            "synthesize",
            "--preset",
            "single-path",
            "--n",
            "2",
            "--count",
            "5",
        ],
    );
    assert!(p(t.path(), "dataset.chnl").exists());
    assert!(p(t.path(), "dataset.manifest.json").exists());
}

#[test]
fn malformed_spec_exits_with_usage_code_and_position() {
    let t = tempfile::tempdir().unwrap();
    let spec = p(t.path(), "bad.toml");
    std::fs::write(
        &spec,
        "name = \"x\"\n[array]\nn_t = 4\nn_r = 4\nu = 3.0\n[[path]]\ngain = [0.1, 0.2]\naoa = [1.0, 0.0]\naod = [0.0, 0.1]\n",
    )
    .unwrap();
    let out = pbgc(
        t.path(),
        &["synthesize", "--spec", s(&spec), "--count", "3"],
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.toml") && err.contains("line 8"), "{err}");

    std::fs::write(&spec, "name = \n").unwrap();
    assert_eq!(
        pbgc(t.path(), &["synthesize", "--spec", s(&spec)])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn usage_and_runtime_exit_codes() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(pbgc(t.path(), &["synthesize"]).status.code(), Some(2));
    assert_eq!(pbgc(t.path(), &["no-such-command"]).status.code(), Some(2));
    assert_eq!(
        pbgc(
            t.path(),
            &["synthesize", "--preset", "single-path", "--spec", "x.toml"]
        )
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        pbgc(t.path(), &["synthesize", "--preset", "nope"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(pbgc(t.path(), &["--help"]).status.code(), Some(0));
    let missing = pbgc(
        t.path(),
        &[
            "evaluate",
            "--a",
            "/nonexistent.chnl",
            "--b",
            "/nonexistent.chnl",
        ],
    );
    assert_eq!(missing.status.code(), Some(1));
    let junk = p(t.path(), "junk.chnl");
    std::fs::write(&junk, b"not a channel file at all").unwrap();
    let corrupt = pbgc(t.path(), &["evaluate", "--a", s(&junk), "--b", s(&junk)]);
    assert_eq!(corrupt.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&corrupt.stderr).contains("magic"));
}

#[test]
fn train_defaults_mirror_the_reference_setup() {
    let t = tempfile::tempdir().unwrap();
    let data = p(t.path(), "d.chnl");
    ok(
        t.path(),
        &[
            "synthesize",
            "--preset",
            "single-path",
            "--n",
            "2",
            "--count",
            "16",
            "--out",
            s(&data),
        ],
    );
    let model = p(t.path(), "m.ckpt");
    ok(
        t.path(),
        &[
            "train",
            "--data",
            s(&data),
            "--epochs",
            "1",
            "--out",
            s(&model),
        ],
    );
    let m = manifest(&p(t.path(), "m.manifest.json"));
    let cfg = &m["config"]["model"];
    assert_eq!(cfg["mode"], "relaxed");
    assert_eq!(cfg["latent_dim"], 64);
    assert_eq!(cfg["batch_size"], 256);
    assert_eq!(cfg["learning_rate"], 1e-3);
    assert_eq!(m["config"]["resolution"], 64);
    assert_eq!(cfg["epochs"], 1);
    let help = ok(t.path(), &["train", "--help"]);
    assert!(help.contains("[default: 300]") && help.contains("[default: 64]"));
}

#[test]
fn train_generate_evaluate_extract_round_trip() {
    let t = tempfile::tempdir().unwrap();
    let data = p(t.path(), "d.chnl");
    ok(
        t.path(),
        &[
            "synthesize",
            "--preset",
            "three-boxes",
            "--n",
            "4",
            "--count",
            "64",
            "--seed",
            "3",
            "--out",
            s(&data),
        ],
    );
    let model = p(t.path(), "m.ckpt");
    let common = [
        "--resolution",
        "8",
        "--latent",
        "4",
        "--encoder-widths",
        "16",
        "--decoder-widths",
        "16",
        "--batch",
        "16",
        "--lr",
        "0.003",
    ];
    let mut args = vec![
        "train",
        "--data",
        s(&data),
        "--epochs",
        "3",
        "--out",
        s(&model),
    ];
    args.extend(common);
    ok(t.path(), &args);
    let csv = std::fs::read_to_string(p(t.path(), "m.metrics.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("epoch,total,mse,kl,l1,nmse"));
    assert_eq!(csv.lines().count(), 4);

    // resume appends epochs
    let resumed = p(t.path(), "r.ckpt");
    ok(
        t.path(),
        &[
            "train",
            "--data",
            s(&data),
            "--resume",
            s(&model),
            "--epochs",
            "2",
            "--out",
            s(&resumed),
        ],
    );
    assert_eq!(
        std::fs::read_to_string(p(t.path(), "r.metrics.csv"))
            .unwrap()
            .lines()
            .count(),
        6
    );
    let bad = pbgc(
        t.path(),
        &[
            "train",
            "--data",
            s(&data),
            "--resume",
            s(&model),
            "--latent",
            "3",
        ],
    );
    assert_eq!(bad.status.code(), Some(2));

    let gen = p(t.path(), "g.chnl");
    let gains = p(t.path(), "g.csv");
    ok(
        t.path(),
        &[
            "generate",
            "--model",
            s(&model),
            "--count",
            "64",
            "--seed",
            "5",
            "--out",
            s(&gen),
            "--gains-out",
            s(&gains),
        ],
    );
    let again = p(t.path(), "g2.chnl");
    ok(
        t.path(),
        &[
            "generate",
            "--model",
            s(&model),
            "--count",
            "64",
            "--seed",
            "5",
            "--out",
            s(&again),
        ],
    );
    assert_eq!(std::fs::read(&gen).unwrap(), std::fs::read(&again).unwrap());

    let line = ok(t.path(), &["evaluate", "--a", s(&data), "--b", s(&data)]);
    assert!(line.starts_with("w2=0.000000e0 mmd=0.000000e0"), "{line}");
    assert_eq!(line.lines().count(), 1);
    let line = ok(
        t.path(),
        &[
            "evaluate",
            "--a",
            s(&gen),
            "--b",
            s(&data),
            "--metrics",
            "w2",
            "--out",
            s(&p(t.path(), "e.json")),
        ],
    );
    assert!(line.starts_with("w2="));
    let report = manifest(&p(t.path(), "e.json"));
    assert_eq!(report["metrics"][0]["metric"], "w2");
    assert!(report["metrics"][0]["value"].as_f64().unwrap() > 0.0);
    assert_eq!(
        pbgc(
            t.path(),
            &[
                "evaluate",
                "--a",
                s(&gen),
                "--b",
                s(&data),
                "--metrics",
                "kl"
            ]
        )
        .status
        .code(),
        Some(2)
    );

    let from_csv = p(t.path(), "pc.csv");
    ok(
        t.path(),
        &[
            "extract-params",
            "--gains",
            s(&gains),
            "--threshold",
            "0.5",
            "--out",
            s(&from_csv),
        ],
    );
    let from_model = p(t.path(), "pm.csv");
    ok(
        t.path(),
        &[
            "extract-params",
            "--model",
            s(&model),
            "--count",
            "64",
            "--seed",
            "5",
            "--threshold",
            "0.5",
            "--out",
            s(&from_model),
        ],
    );
    let text = std::fs::read_to_string(&from_csv).unwrap();
    assert_eq!(text, std::fs::read_to_string(&from_model).unwrap());
    assert!(text.starts_with("sample,rank,gain,aoa,aod\n"));
    assert!(text.lines().count() > 64);
}

#[test]
fn resume_rejects_mismatched_shapes() {
    let t = tempfile::tempdir().unwrap();
    let small = p(t.path(), "s.chnl");
    let big = p(t.path(), "b.chnl");
    ok(
        t.path(),
        &[
            "synthesize",
            "--preset",
            "single-path",
            "--n",
            "2",
            "--count",
            "16",
            "--out",
            s(&small),
        ],
    );
    ok(
        t.path(),
        &[
            "synthesize",
            "--preset",
            "single-path",
            "--n",
            "3",
            "--count",
            "16",
            "--out",
            s(&big),
        ],
    );
    let model = p(t.path(), "m.ckpt");
    ok(
        t.path(),
        &[
            "train",
            "--data",
            s(&small),
            "--mode",
            "direct",
            "--latent",
            "2",
            "--encoder-widths",
            "4",
            "--decoder-widths",
            "4",
            "--epochs",
            "2",
            "--batch",
            "8",
            "--out",
            s(&model),
        ],
    );
    let out = pbgc(
        t.path(),
        &[
            "train",
            "--data",
            s(&big),
            "--resume",
            s(&model),
            "--epochs",
            "1",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("shape"));
}

#[test]
fn direct_mode_smoke_run() {
    let t = tempfile::tempdir().unwrap();
    let data = p(t.path(), "d.chnl");
    ok(
        t.path(),
        &[
            "synthesize",
            "--preset",
            "paths-6-to-8",
            "--n",
            "4",
            "--count",
            "32",
            "--out",
            s(&data),
        ],
    );
    let model = p(t.path(), "m.ckpt");
    ok(
        t.path(),
        &[
            "train",
            "--data",
            s(&data),
            "--mode",
            "direct",
            "--paths",
            "2",
            "--latent",
            "3",
            "--encoder-widths",
            "8",
            "--decoder-widths",
            "8",
            "--epochs",
            "2",
            "--batch",
            "8",
            "--out",
            s(&model),
        ],
    );
    let gen = p(t.path(), "g.chnl");
    ok(
        t.path(),
        &[
            "generate",
            "--model",
            s(&model),
            "--count",
            "10",
            "--out",
            s(&gen),
        ],
    );
    let ds = pbgc::load_dataset(&gen).unwrap();
    assert_eq!(ds.truth.as_ref().map(|t| t[0].len()), Some(2));
    assert_eq!(
        pbgc(
            t.path(),
            &["generate", "--model", s(&model), "--gains-out", "x.csv"]
        )
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        pbgc(t.path(), &["extract-params", "--model", s(&model)])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn surface_reports_the_library_summary() {
    let t = tempfile::tempdir().unwrap();
    let mut reported = Vec::new();
    for n in ["4", "16"] {
        let out = p(t.path(), &format!("s{n}.csv"));
        let line = ok(
            t.path(),
            &["surface", "--n", n, "--grid", "101", "--out", s(&out)],
        );
        assert!(line.starts_with(&format!("n={n} flatness_fraction=")));
        let csv = std::fs::read_to_string(&out).unwrap();
        assert_eq!(csv.lines().count(), 102);
        let summary = manifest(&p(t.path(), &format!("s{n}.summary.json")));
        assert_eq!(summary["min_value"], 0.0);
        assert_eq!(summary["argmin_theta_a"], 1.0);
        reported.push(summary["flatness_fraction"].as_f64().unwrap());
        assert!(p(t.path(), &format!("s{n}.manifest.json")).exists());
    }
    for (k, n) in [4, 16].into_iter().enumerate() {
        let lib = pbgc::analysis::loss_surface(
            &pbgc::PathParams::new(1.0, 1.0, 1.0),
            &pbgc::ArrayConfig::square(n),
            &pbgc::analysis::SurfaceOptions {
                grid_points: 101,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(reported[k], pbgc::analysis::flatness_fraction(&lib, 0.05));
    }
    assert_eq!(
        pbgc(t.path(), &["surface", "--grid", "4"]).status.code(),
        Some(2)
    );
    let neg = ok(
        t.path(),
        &[
            "surface",
            "--theta-a",
            "-0.5",
            "--theta-d",
            "-0.5",
            "--n",
            "4",
            "--grid",
            "21",
        ],
    );
    assert!(neg.contains("at (-0.5"));
}

#[test]
fn cross_eval_writes_a_labeled_matrix() {
    let t = tempfile::tempdir().unwrap();
    let a = p(t.path(), "a.chnl");
    let b = p(t.path(), "b.chnl");
    ok(
        t.path(),
        &[
            "synthesize",
            "--preset",
            "bs10-like",
            "--n",
            "2",
            "--count",
            "32",
            "--out",
            s(&a),
        ],
    );
    ok(
        t.path(),
        &[
            "synthesize",
            "--preset",
            "bs11-like",
            "--n",
            "2",
            "--count",
            "32",
            "--out",
            s(&b),
        ],
    );
    let train = format!("R10={},R11={}", s(&a), s(&b));
    let out = p(t.path(), "x.csv");
    let stdout = ok(
        t.path(),
        &[
            "cross-eval",
            "--train",
            &train,
            "--test",
            &train,
            "--bottleneck",
            "2",
            "--widths",
            "8",
            "--epochs",
            "2",
            "--batch",
            "8",
            "--jobs",
            "2",
            "--out",
            s(&out),
        ],
    );
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(stdout, csv);
    assert!(csv.starts_with("train\\test,R10,R11\nR10,"));
    assert_eq!(
        pbgc(
            t.path(),
            &["cross-eval", "--train", "oops", "--test", &train]
        )
        .status
        .code(),
        Some(2)
    );
    let c = p(t.path(), "c.chnl");
    ok(
        t.path(),
        &[
            "synthesize",
            "--preset",
            "bs11-like",
            "--n",
            "3",
            "--count",
            "8",
            "--out",
            s(&c),
        ],
    );
    let mixed = format!("R10={},C={}", s(&a), s(&c));
    assert_eq!(
        pbgc(
            t.path(),
            &[
                "cross-eval",
                "--train",
                &mixed,
                "--test",
                &mixed,
                "--epochs",
                "1",
                "--bottleneck",
                "2"
            ]
        )
        .status
        .code(),
        Some(2)
    );
}
