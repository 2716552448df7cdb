mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use common::{gaussian_image, mnist_path, photo_path};
use ihdm::dataio::{load_checkpoint, load_png, save_png};
use ihdm::sampler::trace_len;

fn ihdm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ihdm"))
        .args(args)
        .env_remove(ihdm::cli::OUT_ENV)
        .output()
        .expect("run ihdm")
}

fn ok(args: &[&str]) -> String {
    let out = ihdm(args);
    assert!(
        out.status.success(),
        "ihdm {args:?} failed with {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Run config for a 6-step model small enough to train in seconds.
fn micro_config(dir: &Path) -> PathBuf {
    let text = format!(
        r#"
seed = 0

[train]
dataset = "{}"
max_examples = 40
k_steps = 6
sigma_b_max = 4.0
batch_size = 4
total_steps = 6
log_every = 1
checkpoint_every = 3

[train.optimizer]
lr = 1e-3
warmup_steps = 2

[train.model]
base_channels = 4
channel_mults = [1, 2]
blocks_per_level = 1
groups = 2
embed_dim = 8

[sample]
count = 4
columns = 4

[eval]
examples = 3
deltas = [0.009, 0.01, 0.011]
"#,
        mnist_path("train-images-idx3-ubyte").display()
    );
    let path = dir.join("micro.toml");
    std::fs::write(&path, text).unwrap();
    path
}

struct Fixture {
    dir: PathBuf,
    config: PathBuf,
    checkpoint: PathBuf,
}

/// A micro checkpoint trained once through the binary.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir_in(env!("CARGO_TARGET_TMPDIR")).unwrap().keep();
        let config = micro_config(&dir);
        let run = dir.join("train");
        ok(&["train", "--config", s(&config), "--out", s(&run)]);
        Fixture {
            checkpoint: run.join("step-0000006.ckpt"),
            dir,
            config,
        }
    })
}

fn fresh_dir(name: &str) -> PathBuf {
    let d = fixture().dir.join(name);
    let _ = std::fs::remove_dir_all(&d);
    d
}

#[test]
fn missing_dataset_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ihdm(&[
        "train",
        "--dataset",
        s(&dir.path().join("nope")),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not exist"));
    let out = ihdm(&["train", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[train]\nk_step = 20\n").unwrap();
    let out = ihdm(&[
        "train",
        "--config",
        s(&path),
        "--dataset",
        s(&mnist_path("train-images-idx3-ubyte")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_writes_config_metrics_and_checkpoints() {
    let f = fixture();
    let run = f.checkpoint.parent().unwrap();
    assert!(run.join("step-0000003.ckpt").exists());
    let ckpt = load_checkpoint(&f.checkpoint).unwrap();
    assert_eq!(ckpt.meta.step, 6);
    assert_eq!(ckpt.meta.schedule.len(), 6);
    let metrics = std::fs::read_to_string(run.join("metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 6);
    let cfg = ihdm::cli::RunConfig::load(&run.join("config.toml")).unwrap();
    assert_eq!(cfg.train, ckpt.meta.config);
}

#[test]
fn sigma_zero_run_is_tagged() {
    let f = fixture();
    let out = f.dir.join("zero");
    ok(&[
        "train",
        "--config",
        s(&f.config),
        "--sigma",
        "0",
        "--steps",
        "3",
        "--out",
        s(&out),
    ]);
    let tagged = f.dir.join("zero-ablation-sigma0");
    let ckpt = load_checkpoint(tagged.join("step-0000003-ablation-sigma0.ckpt")).unwrap();
    assert_eq!(ckpt.meta.config.sigma, 0.0);
    assert!(ckpt.meta.tags.iter().any(|t| t.contains("sigma0")));
}

#[test]
fn resume_extends_a_run() {
    let f = fixture();
    let out = fresh_dir("resumed");
    let first = f.checkpoint.parent().unwrap().join("step-0000003.ckpt");
    ok(&["train", "--resume", s(&first), "--out", s(&out)]);
    let resumed = std::fs::read(out.join("step-0000006.ckpt")).unwrap();
    assert_eq!(resumed, std::fs::read(&f.checkpoint).unwrap());
}

#[test]
fn zero_delta_sampling_is_byte_identical() {
    let f = fixture();
    let mut runs = Vec::new();
    for name in ["det-a", "det-b"] {
        let out = fresh_dir(name);
        ok(&[
            "sample",
            "--checkpoint",
            s(&f.checkpoint),
            "--delta",
            "0",
            "--seed",
            "7",
            "--out",
            s(&out),
        ]);
        runs.push(out);
    }
    for i in 0..4 {
        let name = format!("sample-{i:03}.png");
        assert_eq!(
            std::fs::read(runs[0].join(&name)).unwrap(),
            std::fs::read(runs[1].join(&name)).unwrap()
        );
    }
    let meta = std::fs::read_to_string(runs[0].join("samples.toml")).unwrap();
    let meta: toml::Value = toml::from_str(&meta).unwrap();
    assert_eq!(meta["seed"].as_integer(), Some(7));
    assert_eq!(meta["config"]["sample"]["delta"].as_float(), Some(0.0));
}

#[test]
fn trace_writes_every_stride_frame() {
    let f = fixture();
    let out = fresh_dir("trace");
    ok(&[
        "sample",
        "--checkpoint",
        s(&f.checkpoint),
        "--count",
        "2",
        "--trace",
        "--out",
        s(&out),
    ]);
    for i in 0..2 {
        let dir = out.join("trace").join(format!("sample-{i:03}"));
        let frames = std::fs::read_dir(&dir)
            .unwrap()
            .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("step-"));
        assert_eq!(frames.count(), trace_len(6));
        assert_eq!(
            load_png(dir.join("step-0000.png")).unwrap(),
            load_png(out.join(format!("sample-{i:03}.png"))).unwrap()
        );
    }
}

#[test]
fn fixed_noise_uses_one_track() {
    let f = fixture();
    let out = fresh_dir("fixed");
    ok(&[
        "sample",
        "--checkpoint",
        s(&f.checkpoint),
        "--fixed-noise",
        "--priors",
        "8",
        "--out",
        s(&out),
    ]);
    let meta: toml::Value = toml::from_str(&std::fs::read_to_string(out.join("samples.toml")).unwrap()).unwrap();
    let samples = meta["samples"].as_array().unwrap();
    assert_eq!(samples.len(), 8);
    assert!(samples.iter().all(|r| r["noise_track"].as_integer() == Some(0)));
    assert_eq!(meta["mode"].as_str(), Some("fixed-noise"));
    assert!(out.join("sample-007.png").exists());
}

#[test]
fn eval_nll_table_adds_up_and_repeats() {
    let f = fixture();
    let test = mnist_path("test-images-idx3-ubyte");
    let mut tables = Vec::new();
    for name in ["eval-a", "eval-b"] {
        let out = fresh_dir(name);
        let stdout = ok(&[
            "eval-nll",
            "--config",
            s(&f.config),
            "--checkpoint",
            s(&f.checkpoint),
            "--dataset",
            s(&test),
            "--out",
            s(&out),
        ]);
        assert_eq!(stdout.lines().count(), 4, "{stdout}");
        let summary = std::fs::read_to_string(out.join("summary.toml")).unwrap();
        assert!(summary.contains("[config.eval]"));
        tables.push(std::fs::read_to_string(out.join("eval.tsv")).unwrap());
    }
    assert_eq!(tables[0], tables[1]);
    let rows: Vec<Vec<f64>> = tables[0]
        .lines()
        .skip(1)
        .map(|l| l.split('\t').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3 * 3);
    for r in &rows {
        // example, delta, l0, lk_sum, l_K, total, bpd
        assert_eq!(r[5], r[2] + r[3] + r[4]);
        assert!(r[5].is_finite());
    }
}

#[test]
fn psd_of_a_photograph_and_of_white_noise() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["psd", s(&photo_path("coins")), "--out", s(dir.path())]);
    let alpha: f64 = out.trim().rsplit(' ').next().unwrap().parse().unwrap();
    assert!((1.0..=3.0).contains(&alpha), "{out}");
    assert!(dir.path().join("psd.tsv").exists() && dir.path().join("config.toml").exists());

    let noise = gaussian_image(128, 128, 1, 0.15, 4).map(|v| v + 0.5);
    let png = dir.path().join("noise.png");
    save_png(&png, &noise).unwrap();
    let out = ok(&["psd", s(&png), "--out", s(&dir.path().join("noise"))]);
    let alpha: f64 = out.trim().rsplit(' ').next().unwrap().parse().unwrap();
    assert!(alpha.abs() < 0.3, "{out}");
}

#[test]
fn interpolation_endpoints_are_the_samples() {
    let f = fixture();
    let samples = fresh_dir("interp-samples");
    ok(&["sample", "--checkpoint", s(&f.checkpoint), "--out", s(&samples)]);
    let out = fresh_dir("interp");
    ok(&[
        "interpolate",
        "--checkpoint",
        s(&f.checkpoint),
        "--seeds",
        "1,3",
        "--steps",
        "2",
        "--out",
        s(&out),
    ]);
    let frames: Vec<_> = std::fs::read_dir(&out)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("frame-"))
        .collect();
    assert_eq!(frames.len(), 2);
    for (frame, sample) in [("frame-000.png", "sample-001.png"), ("frame-001.png", "sample-003.png")] {
        assert_eq!(
            std::fs::read(out.join(frame)).unwrap(),
            std::fs::read(samples.join(sample)).unwrap()
        );
    }
    assert!(std::fs::read_to_string(out.join("config.toml"))
        .unwrap()
        .contains("[sample]"));
}

#[test]
fn output_root_comes_from_the_environment() {
    let f = fixture();
    let root = fresh_dir("env-root");
    let out = Command::new(env!("CARGO_BIN_EXE_ihdm"))
        .args(["sample", "--checkpoint", s(&f.checkpoint), "--count", "1"])
        .env(ihdm::cli::OUT_ENV, &root)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(root.join("sample").join("sample-000.png").exists());
}
