use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

const BIN: &str = env!("CARGO_BIN_EXE_isi-lab");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env("ISI_LAB_THREADS", "1")
        .output()
        .expect("spawn isi-lab")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "isi-lab {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

/// Data rows (after the comment and header lines) split into fields.
fn rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# isi-lab v"));
    lines.next().expect("header");
    lines.map(|l| l.split(',').map(str::to_string).collect()).collect()
}

const BCJR_SWEEP: &str = "\
seed = 11
channel.cir = proakis-c
channel.block_len = 64
channel.snr_db = 8,10,12
detector.kind = bcjr
sim.max_frames = 128
sim.min_frame_errors = 1000
";

#[test]
fn bcjr_sweep_writes_three_rows_with_preamble() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "s.cfg", BCJR_SWEEP);
    ok(dir.path(), &["simulate", "s.cfg", "--out", "s.csv"]);
    let text = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    let mut lines = text.lines();
    let comment = lines.next().unwrap();
    assert!(comment.contains("config=") && comment.contains("seed=11"), "{comment}");
    assert_eq!(lines.next().unwrap(), "snr_db,ber,bler,bmi,frames,detector,seed,diverged");
    let r = rows(&dir.path().join("s.csv"));
    assert_eq!(r.len(), 3);
    for (i, row) in r.iter().enumerate() {
        assert_eq!(row[5], "bcjr");
        assert_eq!(row[4], "128");
        assert_eq!(row[6], (11 + i).to_string());
    }
}

#[test]
fn bcjr_never_worse_than_lmmse_with_shared_noise() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "s.cfg", BCJR_SWEEP);
    ok(dir.path(), &["simulate", "s.cfg", "--out", "bcjr.csv"]);
    ok(dir.path(), &["simulate", "s.cfg", "--set", "detector.kind=lmmse", "--out", "lmmse.csv"]);
    let b = rows(&dir.path().join("bcjr.csv"));
    let l = rows(&dir.path().join("lmmse.csv"));
    for (rb, rl) in b.iter().zip(&l) {
        assert_eq!(rb[0], rl[0]);
        assert_eq!(rb[4], rl[4], "both detectors must see the same frames");
        let (bb, bl): (f64, f64) = (rb[1].parse().unwrap(), rl[1].parse().unwrap());
        assert!(bb <= bl, "BCJR {bb} > LMMSE {bl} at {} dB", rb[0]);
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "s.cfg", BCJR_SWEEP);
    write(
        d,
        "coded.cfg",
        "seed = 2\nchannel.cir = 0.8,0.6\ncode.name = ldpc-132-66\nchannel.ebn0_db = 2,3\n\
         detector.kind = bcjr\ndetector.turbo_iterations = 1\nsim.max_frames = 64\n\
         exit.samples = 1000\nexit.ia_grid = 0,0.5\nexit.turbo_iterations = 2\nexit.frames = 8\n\
         latency.methods = bcjr,spa:4\nlatency.snr_db = 4\n",
    );
    write(
        d,
        "t.cfg",
        "seed = 5\nchannel.cir = 1\nchannel.block_len = 16\ndetector.kind = gnn\n\
         detector.schedule = flooding:2\ndetector.feature_size = 4\ndetector.hidden_units = 8\n\
         train.epochs = 3\ntrain.batch_size = 8\ntrain.snr_db = 2,6\n",
    );
    for tag in ["a", "b"] {
        ok(d, &["simulate", "s.cfg", "--out", &format!("sim_{tag}.csv")]);
        ok(d, &["simulate", "coded.cfg", "--out", &format!("coded_{tag}.csv")]);
        ok(
            d,
            &[
                "exit",
                "coded.cfg",
                "--out",
                &format!("exit_{tag}.csv"),
                "--set",
                &format!("output.trajectory=traj_{tag}.csv"),
            ],
        );
        ok(d, &["latency", "coded.cfg", "--out", &format!("lat_{tag}.csv")]);
        ok(
            d,
            &[
                "train",
                "t.cfg",
                "--out",
                &format!("train_{tag}.csv"),
                "--set",
                &format!("output.checkpoint=ckpt_{tag}.bin"),
            ],
        );
    }
    for name in ["sim", "coded", "exit", "traj", "lat", "train"] {
        let a = std::fs::read(d.join(format!("{name}_a.csv"))).unwrap();
        let b = std::fs::read(d.join(format!("{name}_b.csv"))).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{name} differs between reruns");
    }
    assert_eq!(
        std::fs::read(d.join("ckpt_a.bin")).unwrap(),
        std::fs::read(d.join("ckpt_b.bin")).unwrap()
    );
}

const TRAIN: &str = "\
seed = 9
channel.cir = 1
channel.block_len = 32
detector.kind = gnn
detector.schedule = flooding:4
train.batch_size = 128
train.snr_db = 4,4
output.checkpoint = ckpt/model.bin
";

#[test]
fn train_smoke_hundred_steps_under_a_minute() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "t.cfg", TRAIN);
    let t0 = Instant::now();
    let out = Command::new(BIN)
        .args(["train", "t.cfg", "--set", "train.epochs=100", "--set", "train.batch_size=64", "--out", "log.csv"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(elapsed < 60.0, "100 steps took {elapsed:.1} s");
    let log = rows(&dir.path().join("log.csv"));
    assert_eq!(log.len(), 100);
    let loss = |r: &Vec<String>| r[1].parse::<f64>().unwrap();
    let head: f64 = log[..10].iter().map(loss).sum();
    let tail: f64 = log[90..].iter().map(loss).sum();
    assert!(tail < head, "loss did not decrease: {head} -> {tail}");
    assert!(dir.path().join("ckpt/model.bin").exists());
}

#[test]
fn resume_continues_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "t.cfg", &format!("{TRAIN}train.batch_size = 16\n").replace("train.batch_size = 128\n", ""));
    ok(d, &["train", "t.cfg", "--set", "train.epochs=6", "--out", "full.csv"]);
    ok(
        d,
        &[
            "train",
            "t.cfg",
            "--set",
            "train.epochs=3",
            "--set",
            "output.checkpoint=ckpt/half.bin",
            "--out",
            "half.csv",
        ],
    );
    ok(
        d,
        &[
            "train",
            "t.cfg",
            "--set",
            "train.epochs=6",
            "--resume",
            "ckpt/half.bin",
            "--set",
            "output.checkpoint=ckpt/resumed.bin",
            "--out",
            "resumed.csv",
        ],
    );
    let full = rows(&d.join("full.csv"));
    let resumed = rows(&d.join("resumed.csv"));
    assert_eq!(resumed.len(), 3);
    assert_eq!(&full[3..], &resumed[..]);
    assert_eq!(
        std::fs::read(d.join("ckpt/model.bin")).unwrap(),
        std::fs::read(d.join("ckpt/resumed.bin")).unwrap()
    );
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "s.cfg", BCJR_SWEEP);
    write(d, "t.cfg", TRAIN);
    assert_eq!(run(d, &["validate-config", "s.cfg"]).status.code(), Some(0));
    assert_eq!(run(d, &["validate-config", "s.cfg", "--set", "nope=1"]).status.code(), Some(2));
    assert_eq!(run(d, &["validate-config", "missing.cfg"]).status.code(), Some(2));
    assert_eq!(
        run(d, &["simulate", "s.cfg", "--set", "channel.snr_db=3:1:1"]).status.code(),
        Some(2)
    );
    assert_eq!(
        run(d, &["simulate", "s.cfg", "--set", "detector.kind=gnn"]).status.code(),
        Some(2),
        "neural detector without a checkpoint"
    );
    let diverged = run(
        d,
        &[
            "train",
            "t.cfg",
            "--set",
            "train.learning_rate=1e200",
            "--set",
            "train.epochs=5",
            "--set",
            "train.batch_size=8",
            "--out",
            "div.csv",
        ],
    );
    assert_eq!(diverged.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&diverged.stderr).contains("batch seed"));
}

#[test]
fn budget_flag_changes_the_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "t.cfg", TRAIN);
    let plain = run(dir.path(), &["validate-config", "t.cfg"]);
    let paper = run(dir.path(), &["validate-config", "t.cfg", "--paper-budget"]);
    assert!(plain.status.success() && paper.status.success());
    assert_ne!(plain.stdout, paper.stdout);
}
