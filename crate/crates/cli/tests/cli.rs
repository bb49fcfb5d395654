use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_liquidnet");

/// The smoke config with its output redirected by plain string edits.
fn smoke_config() -> String {
    fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.json")).unwrap()
}

struct Setup {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
}

fn setup_with(edit: impl Fn(String) -> String) -> Setup {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let text = edit(smoke_config()).replace("\"../runs/smoke\"", "\"run\"");
    let config = root.join("c.json");
    fs::write(&config, text).unwrap();
    Setup {
        _dir: dir,
        root,
        config,
    }
}

fn setup() -> Setup {
    setup_with(|s| s)
}

fn liquidnet(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn run_ok(s: &Setup, args: &[&str]) -> String {
    let mut full: Vec<&str> = args.to_vec();
    let cfg = s.config.to_str().unwrap();
    full.extend(["--config", cfg]);
    let out = liquidnet(&full);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn run_code(s: &Setup, args: &[&str]) -> (i32, String) {
    let mut full: Vec<&str> = args.to_vec();
    let cfg = s.config.to_str().unwrap();
    full.extend(["--config", cfg]);
    let out = liquidnet(&full);
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn gen_data_writes_sequences_and_regenerates_identically() {
    let s = setup();
    let stdout = run_ok(&s, &["gen-data"]);
    assert!(stdout.contains("wrote 6 sequences"), "{stdout}");
    let data = s.root.join("run/data");
    assert!(data.join("dataset.json").is_file());
    let dirs = fs::read_dir(&data).unwrap().filter(|e| e.as_ref().unwrap().path().is_dir()).count();
    assert_eq!(dirs, 6);
    let first = tree(&data);
    run_ok(&s, &["gen-data"]);
    assert_eq!(first, tree(&data));
}

#[test]
fn missing_out_parent_is_a_config_error() {
    let s = setup_with(|t| t.replace("\"../runs/smoke\"", "\"nowhere/deeper/run\""));
    let (code, err) = run_code(&s, &["gen-data"]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("nowhere"), "{err}");
}

#[test]
fn unknown_config_keys_are_rejected() {
    let s = setup_with(|t| t.replacen("\"seed\": 0,", "\"seed\": 0, \"sead\": 1,", 1));
    let (code, err) = run_code(&s, &["gen-data"]);
    assert_eq!(code, 2);
    assert!(err.contains("sead"), "{err}");
}

#[test]
fn bad_arguments_exit_with_usage_code() {
    let s = setup();
    assert_eq!(run_code(&s, &["train", "--net", "rnn", "--task", "detect"]).0, 2);
    assert_eq!(liquidnet(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(liquidnet(&["--help"]).status.code(), Some(0));
}

#[test]
fn lstm_training_requires_the_cnn_checkpoint() {
    let s = setup();
    run_ok(&s, &["gen-data"]);
    let (code, err) = run_code(&s, &["train", "--net", "lstm", "--task", "detect"]);
    assert_eq!(code, 3, "{err}");
    assert!(err.contains("--net cnn --task detect"), "{err}");
    assert!(!s.root.join("run/checkpoints/detect_lstm.ckpt").exists());
}

#[test]
fn training_without_data_is_a_runtime_error() {
    let s = setup();
    let (code, err) = run_code(&s, &["train", "--net", "cnn", "--task", "track"]);
    assert_eq!(code, 3);
    assert!(err.contains("gen-data"), "{err}");
}

#[test]
fn full_pipeline_is_reproducible() {
    let s = setup();
    run_ok(&s, &["gen-data"]);
    for net in ["cnn", "mf", "lstm"] {
        let out = run_ok(&s, &["train", "--net", net, "--task", "track"]);
        assert!(out.contains("checkpoint"), "{out}");
    }
    let ckpts = tree(&s.root.join("run/checkpoints"));
    assert_eq!(ckpts.len(), 3);
    let log = fs::read_to_string(s.root.join("run/logs/track_lstm.csv")).unwrap();
    assert!(log.starts_with("iteration,phase,loss,wall_ms\n"), "{log}");
    assert_eq!(log.lines().count(), 1 + 10);

    let out = run_ok(&s, &["eval", "--task", "track"]);
    assert!(out.contains("lstm AP slack 0"), "{out}");
    let eval = s.root.join("run/eval/track");
    let report = fs::read_to_string(eval.join("report.csv")).unwrap();
    assert!(report.starts_with("network,task,slack,threshold,tp,fp,fn,precision,recall\n"));
    assert_eq!(report.lines().count(), 1 + 3 * 4 * 101);
    let neg = fs::read_to_string(eval.join("negatives.csv")).unwrap();
    assert_eq!(neg.lines().count(), 1 + 3, "{neg}");

    // one heatmap per validation frame and network
    let split = fs::read_to_string(s.root.join("run/split.json")).unwrap();
    let val_seqs = split.split("\"validation\"").nth(1).unwrap().matches("seq_").count();
    for net in ["cnn", "mf", "lstm"] {
        let n = tree(&eval.join("heatmaps").join(net)).len();
        assert_eq!(n, val_seqs * 12, "{net}");
    }

    let out = run_ok(&s, &["plot"]);
    assert!(out.contains("pr_track.svg"), "{out}");
    let svg = fs::read(s.root.join("run/plots/pr_track.svg")).unwrap();

    // a second run from scratch reproduces every checkpoint and report byte
    let again = setup();
    run_ok(&again, &["gen-data"]);
    for net in ["cnn", "mf", "lstm"] {
        run_ok(&again, &["train", "--net", net, "--task", "track"]);
    }
    run_ok(&again, &["eval", "--task", "track"]);
    run_ok(&again, &["plot"]);
    assert_eq!(ckpts, tree(&again.root.join("run/checkpoints")));
    assert_eq!(tree(&s.root.join("run/data")), tree(&again.root.join("run/data")));
    for f in ["report.csv", "ap.csv", "negatives.csv"] {
        assert_eq!(fs::read(eval.join(f)).unwrap(), fs::read(again.root.join("run/eval/track").join(f)).unwrap(), "{f}");
    }
    assert_eq!(svg, fs::read(again.root.join("run/plots/pr_track.svg")).unwrap());
}

#[test]
fn seed_flag_changes_the_data() {
    let s = setup();
    run_ok(&s, &["gen-data"]);
    let a = tree(&s.root.join("run/data"));
    run_ok(&s, &["gen-data", "--seed", "5"]);
    assert_ne!(a, tree(&s.root.join("run/data")));
}

#[test]
fn out_flag_redirects_outputs() {
    let s = setup();
    let other = s.root.join("elsewhere");
    run_ok(&s, &["gen-data", "--out", other.to_str().unwrap()]);
    assert!(other.join("data/dataset.json").is_file());
    assert!(!s.root.join("run").exists());
}

#[test]
fn eval_refuses_an_empty_validation_split() {
    let s = setup_with(|t| t.replace("\"n_sequences\": 6", "\"n_sequences\": 1"));
    run_ok(&s, &["gen-data"]);
    run_ok(&s, &["train", "--net", "cnn", "--task", "detect"]);
    let (code, err) = run_code(&s, &["eval", "--task", "detect"]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("validation split is empty"), "{err}");
}

#[test]
fn eval_without_checkpoints_is_refused() {
    let s = setup();
    run_ok(&s, &["gen-data"]);
    let (code, err) = run_code(&s, &["eval", "--task", "detect"]);
    assert_eq!(code, 3);
    assert!(err.contains("run train first"), "{err}");
}

#[test]
fn plot_counts_polylines_and_refuses_empty_reports() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.csv");
    let mut text = String::from("network,task,slack,threshold,tp,fp,fn,precision,recall\n");
    for slack in [0, 1, 2, 4] {
        for t in ["0.0", "0.5", "1.0"] {
            text.push_str(&format!("cnn,detect,{slack},{t},5,1,2,0.8333333333333334,0.7142857142857143\n"));
        }
    }
    fs::write(&report, text).unwrap();
    let out_dir = dir.path().join("plots");
    let args = ["plot", "--report", report.to_str().unwrap(), "--out", out_dir.to_str().unwrap()];
    assert!(liquidnet(&args).status.success());
    let svg = fs::read_to_string(out_dir.join("pr_detect.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 4);
    assert!(liquidnet(&args).status.success());
    assert_eq!(svg, fs::read_to_string(out_dir.join("pr_detect.svg")).unwrap());

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "network,task,slack,threshold,tp,fp,fn,precision,recall\n").unwrap();
    let empty_out = dir.path().join("none");
    let out = liquidnet(&["plot", "--report", empty.to_str().unwrap(), "--out", empty_out.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nothing to plot"));
    assert!(!empty_out.exists());

    let malformed = dir.path().join("bad.csv");
    fs::write(&malformed, "network,task\ncnn\n").unwrap();
    let out = liquidnet(&["plot", "--report", malformed.to_str().unwrap(), "--out", empty_out.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}
