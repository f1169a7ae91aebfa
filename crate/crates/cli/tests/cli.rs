use std::fs::{self, File};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use keydetect_core::classifiers::Classifier;
use keydetect_core::dataset::write_csv;
use keydetect_core::eval::read_table_csv;
use keydetect_core::model_io::read_classifier;
use keydetect_core::synthetic::{generate, SyntheticConfig};

fn keydetect(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_keydetect"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("run keydetect")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_dataset(dir: &Path, config: SyntheticConfig) -> PathBuf {
    let path = dir.join("data.csv");
    write_csv(&generate(&config), File::create(&path).unwrap()).unwrap();
    path
}

fn small(subjects: usize) -> SyntheticConfig {
    SyntheticConfig {
        subjects,
        sessions: 2,
        reps_per_session: 40,
        seed: 8,
        ..SyntheticConfig::default()
    }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn ingest_reports_full_shape_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), SyntheticConfig::default());
    let out = dir.path().join("norm.txt");
    let o = keydetect(&["ingest", p(&data), "--out", p(&out), "--seed", "9"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.starts_with("config: {"), "{text}");
    assert!(text.contains("\"seed\":9") && text.contains("\"outlier_z\":null"), "{text}");
    assert!(text.contains("subjects: 51\n") && text.contains("samples: 20400\n"), "{text}");

    // The normalized file loads back with the same shape, and filtering logs its count.
    let o = keydetect(&["ingest", p(&out), "--out", p(&dir.path().join("f.txt")), "--outlier-z", "4"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("outliers removed (z > 4): "), "{}", stdout(&o));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = keydetect(&["ingest", "/no/such/file.csv", "--out", p(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/no/such/file.csv"));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "subject,sessionIndex,rep\ns002,1,1\n").unwrap();
    assert_eq!(keydetect(&["report", p(&bad)]).status.code(), Some(2));

    let data = write_dataset(dir.path(), small(3));
    assert_eq!(keydetect(&["train", p(&data), "--model", "lstm"]).status.code(), Some(1));
    assert_eq!(keydetect(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(keydetect(&["eval-anomaly", p(&data), "--detectors", "cosine"]).status.code(), Some(1));
    assert_eq!(keydetect(&["--help"]).status.code(), Some(0));
}

#[test]
fn eval_anomaly_tables() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(
        dir.path(),
        SyntheticConfig {
            subjects: 6,
            seed: 3,
            ..SyntheticConfig::default()
        },
    );
    let out = dir.path().join("all");
    let o = keydetect(&["eval-anomaly", p(&data), "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = read_table_csv(File::open(out.join("table_eer.csv")).unwrap()).unwrap();
    assert_eq!(table.len(), 6);
    assert!(table.windows(2).all(|w| w[0].mean_eer >= w[1].mean_eer));
    let zfr = read_table_csv(File::open(out.join("table_zfr.csv")).unwrap()).unwrap();
    assert!(zfr.windows(2).all(|w| w[0].mean_zfr <= w[1].mean_zfr));
    assert!(out.join("roc/scaled_manhattan_s003.csv").exists());
    assert!(stdout(&o).contains("\"nu_grid\":[0.05,0.1,0.2,0.3,0.5]"));

    let one = dir.path().join("one");
    let started = Instant::now();
    let o = keydetect(&[
        "eval-anomaly",
        p(&data),
        "--out",
        p(&one),
        "--detectors",
        "manhattan",
        "--subjects",
        "s002",
    ]);
    assert!(o.status.success());
    assert!(started.elapsed() < Duration::from_secs(5));
    let table = read_table_csv(File::open(one.join("table_eer.csv")).unwrap()).unwrap();
    assert_eq!(table.len(), 1);
    assert_eq!(table[0].subjects, 1);

    let o = keydetect(&["eval-anomaly", p(&data), "--out", p(&one), "--subjects", "s999"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn train_saves_a_loadable_model() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), small(4));
    let model = dir.path().join("rf.txt");
    let confusion = dir.path().join("confusion.csv");
    let o = keydetect(&[
        "train",
        p(&data),
        "--model",
        "rf",
        "--trees",
        "15",
        "--out",
        p(&model),
        "--confusion",
        p(&confusion),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("\"n_trees\":15"), "{text}");
    let acc: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("accuracy: "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(acc > 0.9, "{acc}");
    let loaded = read_classifier::<f32, _>(File::open(&model).unwrap()).unwrap();
    assert_eq!(loaded.n_classes(), 4);
    assert!(fs::read_to_string(&confusion).unwrap().lines().count() >= 5);

    // Same seed, same model file.
    let again = dir.path().join("rf2.txt");
    keydetect(&["train", p(&data), "--model", "rf", "--trees", "15", "--out", p(&again)]);
    assert_eq!(fs::read(&model).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn train_negative_class_reports_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), small(6));
    let o = keydetect(&[
        "train",
        p(&data),
        "--model",
        "cnn1d-neg",
        "--known-subjects",
        "4",
        "--epochs",
        "3",
        "--out",
        p(&dir.path().join("neg.txt")),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    for key in ["accuracy: ", "negative recall: ", "negative precision: ", "negative f-score: "] {
        assert!(text.contains(key), "{key} missing in {text}");
    }
    assert!(text.contains("\"precision\":\"f32\""));
}

#[test]
fn report_writes_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), small(2));
    let out = dir.path().join("rep");
    let o = keydetect(&["report", p(&data), "--out", p(&out), "--bins", "8"]);
    assert!(o.status.success());
    assert_eq!(fs::read_to_string(out.join("feature_summary.csv")).unwrap().lines().count(), 1 + 2 * 31);
    assert!(out.join("feature_histograms.csv").exists());
}

fn spawn_server(store: &Path, port: &str) -> (std::process::Child, String, impl Iterator) {
    let mut child = Command::new(env!("CARGO_BIN_EXE_keydetect"))
        .args(["serve", "--store", p(store), "--port", port])
        .env("RUST_LOG", "warn")
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
    let url = loop {
        let line = lines.next().expect("server output").unwrap();
        if let Some(url) = line.strip_prefix("listening on ") {
            break url.to_string();
        }
    };
    (child, url, lines)
}

#[test]
fn serve_answers_then_stops_on_interrupt() {
    let dir = tempfile::tempdir().unwrap();
    let (mut child, url, _output) = spawn_server(&dir.path().join("store"), "0");
    let users: serde_json::Value = ureq::get(&format!("{url}/api/users")).call().unwrap().into_json().unwrap();
    assert_eq!(users, serde_json::json!([]));

    // A second server on the same port fails cleanly.
    let port = url.rsplit(':').next().unwrap();
    let o = keydetect(&["serve", "--store", p(&dir.path().join("other")), "--port", port]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot listen"));

    let killed = Command::new("kill").args(["-INT", &child.id().to_string()]).status().unwrap();
    assert!(killed.success());
    assert_eq!(child.wait().unwrap().code(), Some(0));
}
