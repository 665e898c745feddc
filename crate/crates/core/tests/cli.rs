use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cdm_lstm::checkpoint::Checkpoint;
use cdm_lstm::cli::RolloutFile;
use cdm_lstm::data::Dataset;
use cdm_lstm::inference::{rollout, summarize};
use cdm_lstm::synthetic::{countdown_corpus, kelvins_like_csv};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cdm-lstm"));
    c.env_remove("CDM_LSTM_DATA_DIR").env_remove("RUST_LOG");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> String {
    assert!(o.status.success(), "stderr: {}", stderr(&o));
    stdout(&o)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Writes the synthetic CSV, preprocesses it and trains a small model.
struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let csv = kelvins_like_csv(120, 4);
        std::fs::write(dir.path().join("train.csv"), &csv.text).unwrap();
        std::fs::write(
            dir.path().join("small.cfg"),
            "hidden = 8\nbatch_size = 16\nlr = 0.003\ntest_fraction = 0.3\n",
        )
        .unwrap();
        let f = Self { dir };
        ok(run(&[
            "preprocess",
            "--input",
            p(&f.path("train.csv")),
            "--out",
            p(&f.path("data.cdm")),
        ]));
        ok(run(&[
            "train",
            "--data",
            p(&f.path("data.cdm")),
            "--config",
            p(&f.path("small.cfg")),
            "--epochs",
            "2",
            "--out",
            p(&f.path("model.ckpt")),
        ]));
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

#[test]
fn preprocess_prints_stage_counts() {
    let dir = tempfile::tempdir().unwrap();
    let csv = kelvins_like_csv(80, 9);
    let input = dir.path().join("in.csv");
    std::fs::write(&input, &csv.text).unwrap();
    let out = ok(run(&["preprocess", "--input", p(&input), "--out", p(&dir.path().join("d"))]));
    assert!(out.contains(&format!("records_in = {}", csv.rows)), "{out}");
    assert!(out.contains(&format!("dropped_missing = {}", csv.dropped_missing)));
    assert!(out.contains(&format!("dropped_sigma = {}", csv.dropped_sigma)));
    assert!(out.contains(&format!("events_min_len = {}", csv.kept_events)));
    let d = Dataset::load(&dir.path().join("d")).unwrap();
    assert_eq!(d.events.len(), csv.kept_events);
    assert_eq!(d.num_cdms(), csv.kept_cdms);
}

#[test]
fn preprocess_header_only_gives_empty_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let csv = kelvins_like_csv(1, 0);
    let header = csv.text.lines().next().unwrap();
    let input = dir.path().join("in.csv");
    std::fs::write(&input, format!("{header}\n")).unwrap();
    let out = ok(run(&["preprocess", "--input", p(&input), "--out", p(&dir.path().join("d"))]));
    assert!(out.contains("records_in = 0"));
    assert!(Dataset::load(&dir.path().join("d")).unwrap().events.is_empty());
}

#[test]
fn preprocess_malformed_row_fails_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let csv = kelvins_like_csv(5, 2);
    let mut lines: Vec<String> = csv.text.lines().map(str::to_string).collect();
    lines[3].push_str(",extra");
    let input = dir.path().join("in.csv");
    std::fs::write(&input, lines.join("\n") + "\n").unwrap();
    let o = run(&["preprocess", "--input", p(&input), "--out", p(&dir.path().join("d"))]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));
    assert!(stdout(&o).is_empty());

    let out = ok(run(&[
        "preprocess",
        "--input",
        p(&input),
        "--out",
        p(&dir.path().join("d")),
        "--skip-bad-rows",
    ]));
    assert!(out.contains("skipped_rows = 1"));
}

#[test]
fn default_config_echo_and_param_count() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    std::fs::write(&input, kelvins_like_csv(12, 3).text).unwrap();
    ok(run(&["preprocess", "--input", p(&input), "--out", p(&dir.path().join("d"))]));
    let out = ok(run(&[
        "train",
        "--data",
        p(&dir.path().join("d")),
        "--epochs",
        "1",
        "--out",
        p(&dir.path().join("m")),
    ]));
    for line in ["lr = 0.0001", "batch_size = 128", "dropout_rate = 0.2", "hidden = 256", "layers = 2"] {
        assert!(out.contains(line), "{line} missing from\n{out}");
    }
    assert!(out.contains("epochs = 1"));
    assert!(out.contains("param_count = 857140"));
    let ck = Checkpoint::load(&dir.path().join("m")).unwrap();
    assert_eq!(ck.epoch, 1);
    assert_eq!(ck.model.params.param_count(), 857_140);
    let history = std::fs::read_to_string(dir.path().join("m.history.csv")).unwrap();
    assert!(history.starts_with("epoch,loss,heldout_loss,seconds\n"));
    assert_eq!(history.lines().count(), 2);
}

#[test]
fn train_rejects_unknown_config_key() {
    let f = tempfile::tempdir().unwrap();
    std::fs::write(f.path().join("c"), "epohcs = 3\n").unwrap();
    let o = run(&["train", "--data", "x", "--config", p(&f.path().join("c")), "--out", "m"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("epohcs"));
}

#[test]
fn evaluate_reports_and_determinism() {
    let f = Fixture::new();
    let eval = |dir: &str| {
        ok(run(&[
            "evaluate",
            "--checkpoint",
            p(&f.path("model.ckpt")),
            "--data",
            p(&f.path("data.cdm")),
            "--samples",
            "1,50",
            "--seed",
            "3",
            "--out",
            p(&f.path(dir)),
        ]))
    };
    let first = eval("a");
    eval("b");
    assert!(first.starts_with("label,mse,improvement_pct"));
    for name in [
        "baseline.txt",
        "baseline_features.csv",
        "model_n1.txt",
        "model_n1_features.csv",
        "model_n50.txt",
        "model_n50_features.csv",
        "comparison.csv",
    ] {
        let a = std::fs::read(f.path("a").join(name)).unwrap();
        let b = std::fs::read(f.path("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between runs");
    }
    let n1 = std::fs::read_to_string(f.path("a/model_n1.txt")).unwrap();
    let n50 = std::fs::read_to_string(f.path("a/model_n50.txt")).unwrap();
    let field = |s: &str, k: &str| -> String {
        s.lines().find(|l| l.starts_with(k)).unwrap().to_string()
    };
    assert_eq!(field(&n1, "cells"), field(&n50, "cells"));
    assert_eq!(field(&n1, "baseline_mse"), field(&n50, "baseline_mse"));
    let features = std::fs::read_to_string(f.path("a/model_n50_features.csv")).unwrap();
    assert_eq!(features.lines().count(), 53);
}

#[test]
fn evaluate_missing_checkpoint_fails() {
    let o = run(&["evaluate", "--checkpoint", "/nonexistent/model", "--data", "x"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("/nonexistent/model"), "{}", stderr(&o));
}

#[test]
fn data_dir_env_resolves_inputs() {
    let f = Fixture::new();
    let o = bin()
        .current_dir(f.dir.path().parent().unwrap())
        .env("CDM_LSTM_DATA_DIR", f.dir.path())
        .args(["evaluate", "--checkpoint", "model.ckpt", "--data", "data.cdm", "--samples", "1"])
        .arg("--out")
        .arg(f.path("env"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
}

fn event_csv(f: &Fixture) -> PathBuf {
    // First event of the synthetic CSV with every row intact.
    let d = Dataset::load(&f.path("data.cdm")).unwrap();
    let e = d.events.iter().find(|e| e.len() >= 3).unwrap();
    let mut text = String::from("event_id,");
    text.push_str(&d.schema.names().collect::<Vec<_>>().join(","));
    text.push('\n');
    for c in &e.cdms {
        let vals: Vec<String> = c.values.iter().map(|v| v.to_string()).collect();
        text.push_str(&format!("{},{}\n", e.event_id, vals.join(",")));
    }
    let path = f.path("event.csv");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn predict_and_rollout_commands() {
    let f = Fixture::new();
    let event = event_csv(&f);
    let table = ok(run(&[
        "predict",
        "--checkpoint",
        p(&f.path("model.ckpt")),
        "--event",
        p(&event),
        "--prefix-len",
        "2",
        "--samples",
        "20",
    ]));
    assert!(table.starts_with("feature,mean,std,p05,p50,p95\n"));
    assert_eq!(table.lines().count(), 53);

    let out = ok(run(&[
        "rollout",
        "--checkpoint",
        p(&f.path("model.ckpt")),
        "--event",
        p(&event),
        "--prefix-len",
        "1",
        "--samples",
        "4",
        "--max-steps",
        "3",
        "--out",
        p(&f.path("r.txt")),
    ]));
    assert!(out.contains("prefix_len = 1"));
    let file = RolloutFile::load(&f.path("r.txt")).unwrap();
    assert_eq!(file.prefix.len(), 1);
    assert_eq!(file.trajectories.len(), 4);
    assert!(file.trajectories.iter().all(|t| t.cdms.len() <= 3));

    let o = run(&[
        "predict",
        "--checkpoint",
        p(&f.path("model.ckpt")),
        "--event",
        p(&event),
        "--prefix-len",
        "0",
    ]);
    assert!(!o.status.success());
}

#[test]
fn gradcheck_command() {
    let out = ok(run(&["gradcheck", "--seed", "3"]));
    assert!(out.contains("PASS"), "{out}");
    assert_eq!(out, ok(run(&["gradcheck", "--seed", "3"])));

    let o = run(&["gradcheck", "--corrupt"]);
    assert!(!o.status.success());
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn threads_flag_does_not_change_results() {
    let a = ok(run(&["--threads", "1", "gradcheck", "--seed", "1"]));
    let b = ok(run(&["gradcheck", "--seed", "1", "--threads", "4"]));
    assert_eq!(a, b);
}

fn countdown_rollout(n: usize, dir: &Path) -> (cdm_lstm::Model, cdm_lstm::RolloutResult, PathBuf) {
    let data = countdown_corpus(6, 2).unwrap();
    let stats = cdm_lstm::preprocess::fit_normalizer(&data.events, &data.schema).unwrap();
    let params = cdm_lstm::net::init_params(cdm_lstm::NetConfig::new(3, 4, 1, 0.2), 1).unwrap();
    let model = cdm_lstm::Model::new(data.schema.clone(), stats, params).unwrap();
    let r = rollout(&model, &data.events[0].cdms[..1], n, 3, 9).unwrap();
    let path = dir.join("r.txt");
    RolloutFile::new(&model.schema, &model.stats, &r, 3, 9).save(&path).unwrap();
    (model, r, path)
}

#[test]
fn export_plot_matches_summarize() {
    let dir = tempfile::tempdir().unwrap();
    let (model, r, path) = countdown_rollout(5, dir.path());
    let out = dir.path().join("bands");
    ok(run(&["export-plot", "--rollout", p(&path), "--out", p(&out)]));
    for (j, name) in model.schema.names().enumerate() {
        let text = std::fs::read_to_string(out.join(format!("{name}.csv"))).unwrap();
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows[0], "step,n_alive,mean,std,p05,p50,p95");
        assert_eq!(rows.len() - 1, r.steps.len());
        for (line, step) in rows[1..].iter().zip(&r.steps) {
            let s = &summarize(&step.distribution, &model.schema)[j];
            let mut expected = format!("{},{},{},{}", step.step, step.n_alive, s.mean, s.std);
            for q in &s.quantiles {
                expected.push_str(&format!(",{q}"));
            }
            assert_eq!(*line, expected);
        }
    }
}

#[test]
fn export_plot_single_sample_has_flat_bands() {
    let dir = tempfile::tempdir().unwrap();
    let (_, _, path) = countdown_rollout(1, dir.path());
    let out = dir.path().join("bands");
    ok(run(&["export-plot", "--rollout", p(&path), "--out", p(&out)]));
    let text = std::fs::read_to_string(out.join("risk.csv")).unwrap();
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[4], cols[5]);
        assert_eq!(cols[5], cols[6]);
    }
}

#[test]
fn export_plot_shape_three_steps_two_features() {
    let dir = tempfile::tempdir().unwrap();
    let text = "# cdm-lstm rollout\n# n_samples = 2\n# prefix_len = 1\n# max_steps = 3\n# seed = 0\n\
# time_feature = time_to_tca\n# quantiles = 0.05,0.5,0.95\n# mean = 0,0\n# std = 1,1\n# applied = 1,1\n\
# terminations = max_steps,max_steps\nsample,step,time_to_tca,x\n-1,0,3,1\n\
0,1,2,1\n0,2,1,1\n0,3,0.5,1\n1,1,2.5,2\n1,2,1.5,2\n1,3,0.25,2\n";
    let path = dir.path().join("r.txt");
    std::fs::write(&path, text).unwrap();
    let out = dir.path().join("bands");
    ok(run(&["export-plot", "--rollout", p(&path), "--out", p(&out)]));
    let mut files: Vec<_> = std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    files.sort();
    assert_eq!(files, ["time_to_tca.csv", "x.csv"]);
    for f in files {
        let t = std::fs::read_to_string(out.join(f)).unwrap();
        assert_eq!(t.lines().count(), 1 + 3);
    }
    let x = std::fs::read_to_string(out.join("x.csv")).unwrap();
    assert_eq!(x.lines().nth(1).unwrap(), "1,2,1.5,0.5,1.05,1.5,1.95");
}
