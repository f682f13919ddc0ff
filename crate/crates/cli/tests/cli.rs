use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(cmd: &str, config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mrbm"))
        .args([cmd, "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .env("MRBM_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const SMALL_DENSITY: &str = r#"{"times": [0.1], "gammas": [0.01, 0.001], "chains": 2000, "bins": 20, "tv_target": 0.5, "seed": 4}"#;

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let bad_json = write(dir.path(), "bad.json", "{ not json");
    assert_eq!(code(&run("density1d", &bad_json, &out)), 2);
    let unknown = write(
        dir.path(),
        "unknown.json",
        r#"{"times": [0.1], "gammas": [0.01], "chains": 10, "tv_target": 0.1, "colour": "red"}"#,
    );
    assert_eq!(code(&run("density1d", &unknown, &out)), 2);
    assert_eq!(code(&run("density1d", &dir.path().join("missing.json"), &out)), 2);
    let one_dim = write(dir.path(), "scaling.json", r#"{"dims": [3], "gamma": 0.01, "tv_threshold": 0.2}"#);
    let o = run("scaling", &one_dim, &out);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("3"), "error explains the dimension count");
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "d.json", SMALL_DENSITY);
    let o = Command::new(env!("CARGO_BIN_EXE_mrbm"))
        .args(["density1d", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .env("MRBM_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn density_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "d.json", SMALL_DENSITY);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&run("density1d", &cfg, &a)), 0);
    assert_eq!(code(&run("density1d", &cfg, &b)), 0);
    let read = |p: &Path| std::fs::read(p.join("density1d.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    let text = String::from_utf8(read(&a)).unwrap();
    assert!(text.starts_with("sampler,gamma,t,x,empirical,oracle,tv\n"));
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 20);
}

#[test]
fn missed_targets_exit_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "d.json",
        r#"{"times": [0.1], "gammas": [0.01], "chains": 500, "bins": 20, "tv_target": 1e-6}"#,
    );
    assert_eq!(code(&run("density1d", &cfg, &dir.path().join("out"))), 4);
}

#[test]
fn non_convergence_is_a_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "s.json",
        r#"{"dims": [1, 2, 3], "samplers": ["metropolis"], "gamma": 1e-6, "tv_threshold": 0.05, "x0": 0.9,
            "convergence": {"chains": 500, "checkpoint_every": 10, "bins": 5, "max_steps": 20}}"#,
    );
    assert_eq!(code(&run("scaling", &cfg, &dir.path().join("out"))), 3);
}

#[test]
fn scaling_writes_deterministic_step_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "s.json",
        r#"{"dims": [1, 2, 3], "gamma": 0.05, "tv_threshold": 0.2,
            "convergence": {"chains": 1000, "checkpoint_every": 5, "bins": 5}}"#,
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&run("scaling", &cfg, &a)), 0);
    assert_eq!(code(&run("scaling", &cfg, &b)), 0);
    let read = |p: &Path| std::fs::read(p.join("scaling.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    let summary = json(&a.join("scaling.json"));
    assert!(summary["exponents"].is_object() || summary["exponents"].is_array());
}

/// Sign test against each edge plane; valid for this convex polygon.
fn square_oracle(lon: f64, lat: f64) -> Option<bool> {
    let unit = |lon: f64, lat: f64| {
        let (l, b) = (lon.to_radians(), lat.to_radians());
        [b.cos() * l.cos(), b.cos() * l.sin(), b.sin()]
    };
    let v = [(-10.0, -10.0), (10.0, -10.0), (10.0, 10.0), (-10.0, 10.0)].map(|(a, b)| unit(a, b));
    let q = unit(lon, lat);
    let mut inside = true;
    for i in 0..4 {
        let (a, b) = (v[i], v[(i + 1) % 4]);
        let n = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
        let s = n[0] * q[0] + n[1] * q[1] + n[2] * q[2];
        if s.abs() < 1e-9 {
            return None;
        }
        inside &= s > 0.0;
    }
    Some(inside)
}

#[test]
fn polycheck_matches_the_square_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("lon_deg,lat_deg\n");
    let mut expected = vec![];
    for i in 0..40 {
        for j in 0..40 {
            let (lon, lat) = (-30.0 + 1.53 * i as f64, -30.0 + 1.53 * j as f64);
            text.push_str(&format!("{lon},{lat}\n"));
            expected.push(square_oracle(lon, lat));
        }
    }
    write(dir.path(), "points.csv", &text);
    let poly = std::fs::read_to_string(configs().join("square_polygon.csv")).unwrap();
    write(dir.path(), "square.csv", &poly);
    let cfg = write(dir.path(), "p.json", r#"{"polygon": "square.csv", "points": "points.csv"}"#);
    let out = dir.path().join("out");
    assert_eq!(code(&run("polycheck", &cfg, &out)), 0);
    let got = std::fs::read_to_string(out.join("membership.csv")).unwrap();
    let mut lines = got.lines();
    assert_eq!(lines.next(), Some("lon_deg,lat_deg,inside"));
    let mut inside = 0;
    for (line, want) in lines.zip(&expected) {
        let label = line.rsplit(',').next().unwrap();
        if let Some(w) = want {
            assert_eq!(label, if *w { "true" } else { "false" }, "{line}");
            inside += usize::from(*w);
        }
    }
    assert!(inside > 50);
}

#[test]
fn shipped_polycheck_config_runs() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("polycheck", &configs().join("polycheck.json"), dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let got = std::fs::read_to_string(dir.path().join("membership.csv")).unwrap();
    let labels: Vec<&str> = got.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(labels, ["true", "true", "true", "false", "false", "false", "false"]);
}

#[test]
fn mmd_of_a_copy_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("x0,x1\n");
    for i in 0..200 {
        let a = i as f64 / 200.0;
        text.push_str(&format!("{},{}\n", a, (7.0 * a).sin()));
    }
    write(dir.path(), "a.csv", &text);
    write(dir.path(), "b.csv", &text);
    let cfg = write(
        dir.path(),
        "m.json",
        r#"{"a": "a.csv", "b": "b.csv", "kernel": {"lengthscales": [0.2], "weights": [1.0]}, "bootstrap": 20}"#,
    );
    let out = dir.path().join("out");
    let o = run("mmd", &cfg, &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&out.join("mmd.json"));
    assert_eq!(r["mmd"].as_f64().unwrap(), 0.0);
    assert_eq!(r["bootstrap"].as_u64().unwrap(), 20);
}

#[test]
fn trained_model_beats_uniform_noise() {
    let dir = tempfile::tempdir().unwrap();
    let train = write(
        dir.path(),
        "train.json",
        r#"{
          "dataset": {"kind": "bimodal",
                      "manifold": {"kind": "euclidean", "params": {"dim": 2}},
                      "constraint": {"kind": "hypercube", "params": {"lo": [-1, -1], "hi": [1, 1]}},
                      "n": 2000, "seed": 0},
          "grid": {"beta1": 2.0, "steps": 100},
          "train": {"steps": 1500, "width": 32, "batch_size": 128, "lr": 0.002, "seed": 1}
        }"#,
    );
    let run_dir = dir.path().join("run");
    let o = run("train", &train, &run_dir);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["loss.csv", "run.json", "dataset.csv", "dataset.json"] {
        assert!(run_dir.join(f).exists(), "{f}");
    }

    let model = write(dir.path(), "model.json", r#"{"run": "run", "n": 1000, "seed": 3}"#);
    let uniform = write(dir.path(), "uniform.json", r#"{"run": "run", "n": 1000, "seed": 3, "uniform": true}"#);
    assert_eq!(code(&run("sample", &model, &dir.path().join("model"))), 0);
    assert_eq!(code(&run("sample", &uniform, &dir.path().join("uniform"))), 0);

    let mut score = vec![];
    for which in ["model", "uniform"] {
        let cfg = write(
            dir.path(),
            &format!("mmd_{which}.json"),
            &format!(r#"{{"a": "{which}/samples.csv", "b": "run/dataset.csv", "dataset": "run/dataset.json", "bootstrap": 0}}"#),
        );
        let out = dir.path().join(format!("mmd_{which}"));
        assert_eq!(code(&run("mmd", &cfg, &out)), 0);
        score.push(json(&out.join("mmd.json"))["mmd"].as_f64().unwrap());
    }
    assert!(score[0] < score[1], "model {} vs uniform {}", score[0], score[1]);
}
