//! End-to-end tests driving the compiled binary.

use std::path::Path;
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

use periodnet::data::load_csv;
use periodnet::model::{Activation, GroupingKind, ModelConfig, PeriodNet};

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_periodnet"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary launches")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

/// Writes a near-constant univariate fixture: level 5 with a ±0.001 ripple
/// (an exactly constant column would be rejected as zero-variance).
fn write_near_constant_csv(path: &Path, n: usize) {
    let mut text = String::from("date,load\n");
    for i in 0..n {
        let v = if i % 2 == 0 { 5.001 } else { 4.999 };
        text.push_str(&format!("{i:06},{v}\n"));
    }
    std::fs::write(path, text).unwrap();
}

const TINY_TRAIN: &[&str] = &[
    "d=4", "heads=2", "periods=4,4", "r=2", "ffn_width=8", "max_epochs=2", "batch=8",
];

// ── synth ────────────────────────────────────────────────────────────

#[test]
fn synth_writes_a_parseable_csv() {
    let dir = TempDir::new().unwrap();
    let out = run_in(dir.path(), &["synth", "--out", "data.csv", "--seed", "3", "n=64", "components=8:1:0", "noise=0.05"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("effective config:"));
    let frame = load_csv(dir.path().join("data.csv")).unwrap();
    assert_eq!((frame.len(), frame.width()), (64, 1));
    assert_eq!(frame.names, ["value"]);
}

// ── train / eval ─────────────────────────────────────────────────────

fn synth_fixture(dir: &Path) {
    let out = run_in(dir, &["synth", "--out", "data.csv", "--seed", "3", "n=160", "components=8:1:0", "noise=0.05"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
}

fn train_fixture(dir: &Path, seed: &str) -> Output {
    let mut args = vec!["train", "--data", "data.csv", "--input-len", "16", "--horizon", "4", "--seed", seed];
    args.extend_from_slice(TINY_TRAIN);
    run_in(dir, &args)
}

#[test]
fn train_writes_artifacts_and_eval_reads_them_back() {
    let dir = TempDir::new().unwrap();
    synth_fixture(dir.path());
    let out = train_fixture(dir.path(), "7");
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("effective config:"));
    assert!(text.contains("summary: val mse="), "missing summary: {text}");
    assert!(dir.path().join("model.ckpt").exists());
    let history = std::fs::read_to_string(dir.path().join("history.csv")).unwrap();
    assert!(history.starts_with("epoch,train_loss,val_loss\n"));

    let out = run_in(dir.path(), &["eval", "--checkpoint", "model.ckpt", "--data", "data.csv"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("effective config:"));
    assert!(text.contains("eval test:") && text.contains("mse="), "{text}");
}

#[test]
fn missing_dataset_path_is_named_with_exit_2() {
    let dir = TempDir::new().unwrap();
    let out = run_in(dir.path(), &["train", "--data", "nope.csv"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("nope.csv"), "stderr: {}", stderr(&out));
}

#[test]
fn unknown_config_keys_are_rejected_with_exit_2() {
    let dir = TempDir::new().unwrap();
    let out = run_in(dir.path(), &["gradcheck", "bogus=1"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("unknown config key"), "stderr: {}", stderr(&out));
}

#[test]
fn same_seed_reruns_bit_identically() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    synth_fixture(a.path());
    synth_fixture(b.path());
    let (out_a, out_b) = (train_fixture(a.path(), "7"), train_fixture(b.path(), "7"));
    assert_eq!(code(&out_a), 0);
    assert_eq!(stdout(&out_a), stdout(&out_b));
    let bytes = |d: &Path| std::fs::read(d.join("model.ckpt")).unwrap();
    assert_eq!(bytes(a.path()), bytes(b.path()));
    // A different seed must actually change the outcome.
    let out_c = train_fixture(a.path(), "8");
    assert_ne!(stdout(&out_a), stdout(&out_c));
}

// ── config file merging ──────────────────────────────────────────────

#[test]
fn named_flags_beat_the_config_file() {
    let dir = TempDir::new().unwrap();
    synth_fixture(dir.path());
    std::fs::write(
        dir.path().join("run.cfg"),
        "# tiny run\nd=4\nheads=2\nperiods=4,4\nr=2\nffn_width=8\nmax_epochs=2\nbatch=8\ninput_len=32\nhorizon=4\n",
    )
    .unwrap();
    let out = run_in(
        dir.path(),
        &["train", "--data", "data.csv", "--config", "run.cfg", "--input-len", "16", "--seed", "7"],
    );
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("\n  input_len=16\n"), "flag did not win: {text}");
    assert!(text.contains("\n  d=4\n"), "file key lost: {text}");
}

// ── gradcheck ────────────────────────────────────────────────────────

/// The binary's built-in gradcheck config, rebuilt here to count parameters.
fn tiny_param_names() -> Vec<String> {
    let mut cfg = ModelConfig::new(2, 12, 6);
    cfg.d = 4;
    cfg.heads = 2;
    cfg.p_list = vec![3, 3];
    cfg.r = 2;
    cfg.grouping = GroupingKind::Groups(2);
    cfg.ffn_width = 8;
    cfg.activation = Activation::Gelu;
    let model: PeriodNet = PeriodNet::init(cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    model.named_parameters().into_iter().map(|(n, _)| n).collect()
}

fn listed_params(text: &str) -> Vec<String> {
    text.lines()
        .filter_map(|l| l.strip_prefix("  ")?.split_once('[').map(|(n, _)| n.to_string()))
        .collect()
}

#[test]
fn gradcheck_passes_listing_every_parameter_once() {
    let dir = TempDir::new().unwrap();
    let out = run_in(dir.path(), &["gradcheck", "--seed", "5"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("gradient check: PASS"));
    assert_eq!(listed_params(&text), tiny_param_names());
}

#[test]
fn corrupted_gradients_fail_with_exit_1_naming_the_parameter() {
    let dir = TempDir::new().unwrap();
    let out = run_in(dir.path(), &["gradcheck", "--seed", "5", "--corrupt"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("embed.w"), "stderr: {}", stderr(&out));
    // The report still covers every parameter exactly once.
    assert_eq!(listed_params(&stdout(&out)), tiny_param_names());
}

// ── ablate ───────────────────────────────────────────────────────────

#[test]
fn ablate_emits_a_csv_the_loader_parses_back() {
    let dir = TempDir::new().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "ablate", "--out", "ab.csv", "--seed", "9",
            "d=4", "heads=2", "periods=4,8", "r=2", "ffn_width=8",
            "max_epochs=1", "max_steps=8", "batch=8",
            "sweep_groups=0,2", "sweep_mixers=pam,spam", "sweep_predictors=pd,fcn",
        ],
    );
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let table = load_csv(dir.path().join("ab.csv")).unwrap();
    assert_eq!(table.names, ["mse", "mae", "wall_secs", "prep_hash"]);
    // (pam,pd,g0), (pam,pd,g2), (spam,pd,g2), (pam,fcn,g2) after dedup.
    assert_eq!(table.len(), 4);
    assert_eq!(table.timestamps[0], "00-pam-pd-g0");
    let hashes: Vec<f64> = (0..table.len()).map(|i| table.values.data()[i * 4 + 3]).collect();
    assert!(hashes.iter().all(|h| *h == hashes[0]), "prep hash differs: {hashes:?}");
    assert!(table.values.data().iter().all(|v| v.is_finite()));
}

// ── forecast ─────────────────────────────────────────────────────────

#[test]
fn forecast_family_happy_path_and_errors() {
    let dir = TempDir::new().unwrap();
    write_near_constant_csv(&dir.path().join("const.csv"), 64);
    let out = run_in(
        dir.path(),
        &[
            "train", "--data", "const.csv", "--input-len", "8", "--horizon", "4", "--seed", "3",
            "d=4", "heads=2", "periods=2,4", "r=2", "ffn_width=8", "max_epochs=2", "batch=8",
        ],
    );
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    // Constant-trained model on (near-)constant input forecasts the level.
    let out = run_in(dir.path(), &["forecast", "--checkpoint", "model.ckpt", "--data", "const.csv", "--out", "fc.csv"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let fc = std::fs::read_to_string(dir.path().join("fc.csv")).unwrap();
    assert!(fc.starts_with("date,load\n"), "header carries the training names: {fc}");
    let frame = load_csv(dir.path().join("fc.csv")).unwrap();
    assert_eq!((frame.len(), frame.width()), (4, 1));
    for v in frame.values.data() {
        assert!((v - 5.0).abs() < 0.1, "forecast {v} strays from the level");
    }

    // The horizon is baked into the prediction head.
    let out = run_in(dir.path(), &["forecast", "--checkpoint", "model.ckpt", "--data", "const.csv", "--horizon", "12"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("fixed"), "stderr: {}", stderr(&out));

    // Variable names must match the ones the stats were fit on.
    let renamed = std::fs::read_to_string(dir.path().join("const.csv"))
        .unwrap()
        .replacen("date,load", "date,draw", 1);
    std::fs::write(dir.path().join("renamed.csv"), renamed).unwrap();
    let out = run_in(dir.path(), &["forecast", "--checkpoint", "model.ckpt", "--data", "renamed.csv"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("names"), "stderr: {}", stderr(&out));

    // Inputs shorter than the model window are rejected.
    let mut short = String::from("date,load\n");
    for i in 0..6 {
        short.push_str(&format!("{i:06},5.0\n"));
    }
    std::fs::write(dir.path().join("short.csv"), short).unwrap();
    let out = run_in(dir.path(), &["forecast", "--checkpoint", "model.ckpt", "--data", "short.csv"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("8"), "stderr: {}", stderr(&out));
}
