use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rlvc_core::config::KEYS;
use rlvc_core::EvalReport;

const SMALL: &[&str] = &[
    "--set", "n_seen=6",
    "--set", "n_unseen=2",
    "--set", "d=8",
    "--set", "d_z=4",
    "--set", "samples_per_class=10",
    "--set", "semantic_cluster_size=4",
];

const SHORT: &[&str] = &[
    "--set", "epochs=3",
    "--set", "rl_start_epoch=1",
    "--set", "batch_size=16",
    "--set", "eval_interval=3",
    "--set", "synth_per_class=20",
];

fn rlvc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rlvc"))
        .args(args)
        .env("RLVC_THREADS", "2")
        .output()
        .expect("spawn rlvc")
}

fn ok(args: &[&str]) -> String {
    let out = rlvc(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn with(base: &[&str], extra: &[&str]) -> Vec<String> {
    base.iter().chain(extra).map(|a| a.to_string()).collect()
}

fn run(args: &[String]) -> String {
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

/// Dataset plus frozen reward model in `root/data` and `root/reward`.
fn prepare(root: &Path) {
    let data = root.join("data");
    run(&with(&["gen-synthetic", "--seed", "3", "--out", s(&data)], SMALL));
    let reward = root.join("reward");
    let out = ok(&["pretrain-reward", "--seed", "3", "--data", s(&data), "--out", s(&reward)]);
    assert!(out.starts_with("train_acc="), "{out}");
}

fn train(root: &Path, out: &str, extra: &[&str]) -> String {
    let data = root.join("data");
    let reward = root.join("reward/reward.ckpt");
    let out_dir = root.join(out);
    let mut args = with(
        &["train", "--seed", "3", "--data", s(&data), "--reward", s(&reward), "--out", s(&out_dir)],
        SHORT,
    );
    args.extend(extra.iter().map(|a| a.to_string()));
    run(&args)
}

#[test]
fn gen_synthetic_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&with(&["gen-synthetic", "--seed", "9", "--out", s(&a)], SMALL));
    run(&with(&["gen-synthetic", "--seed", "9", "--out", s(&b)], SMALL));
    for f in ["features.csv", "labels.csv", "prototypes.csv", "classes.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn occupied_output_needs_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    run(&with(&["gen-synthetic", "--out", s(&out)], SMALL));
    let second = rlvc(&["gen-synthetic", "--out", s(&out)]);
    assert_eq!(second.status.code(), Some(1));
    run(&with(&["gen-synthetic", "--overwrite", "--out", s(&out)], SMALL));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(rlvc(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(rlvc(&["gen-synthetic", "--set", "bogus=1"]).status.code(), Some(1));
    assert_eq!(rlvc(&["gen-synthetic", "--set", "epochs=many"]).status.code(), Some(1));
    let missing = dir.path().join("missing");
    assert_eq!(rlvc(&["pretrain-reward", "--data", s(&missing)]).status.code(), Some(2));

    let data = dir.path().join("data");
    run(&with(&["gen-synthetic", "--out", s(&data)], SMALL));
    let labels = data.join("labels.csv");
    let text = fs::read_to_string(&labels).unwrap().replace("test_unseen", "train");
    fs::write(&labels, text).unwrap();
    let out = rlvc(&["pretrain-reward", "--data", s(&data)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("labels.csv"));
}

#[test]
fn print_config_shows_overrides_and_preset() {
    let text = ok(&["train", "--reward", "x", "--preset", "cub", "--set", "lr_rl=0.001", "--print-config"]);
    assert!(text.contains("preset = cub"), "{text}");
    assert!(text.contains("lr_rl = 0.001"), "{text}");
    assert!(text.contains("lambda_pd = 20"), "{text}");
    let vanilla = ok(&["train", "--reward", "x", "--no-rl", "--no-cues", "--print-config"]);
    assert!(vanilla.contains("use_rl = false") && vanilla.contains("use_cues = false"), "{vanilla}");
}

#[test]
fn help_lists_every_key() {
    let help = ok(&["train", "--help"]);
    for k in KEYS {
        assert!(help.contains(k.key), "missing {}", k.key);
    }
}

#[test]
fn pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    prepare(root);
    let stdout = train(root, "full", &[]);
    let report_line = stdout.lines().last().unwrap();
    let trained = EvalReport::parse(report_line).unwrap();

    let full = root.join("full");
    for f in ["generator.ckpt", "critic_x0.ckpt", "critic_xt.ckpt", "metrics.csv", "config.txt", "visual_prototypes.txt"] {
        assert!(full.join(f).is_file(), "{f}");
    }
    let metrics = fs::read_to_string(full.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 3);
    assert_eq!(metrics.lines().next().unwrap().split(',').count(), 11);

    let gen = full.join("generator.ckpt");
    let data = root.join("data");
    let eval_out = root.join("eval");
    let mut args = with(
        &["eval", "--seed", "3", "--data", s(&data), "--generator", s(&gen), "--out", s(&eval_out)],
        SHORT,
    );
    let evaluated = EvalReport::parse(run(&args).trim()).unwrap();
    assert_eq!(evaluated, trained);
    let h = 2.0 * evaluated.s * evaluated.u / (evaluated.s + evaluated.u);
    assert!((evaluated.h - h).abs() < 1e-6 || evaluated.s + evaluated.u == 0.0);
    assert!(fs::read_to_string(eval_out.join("report.txt")).unwrap().starts_with("acc="));

    args[0] = "synthesize".into();
    run(&args);
    let synth = fs::read_to_string(eval_out.join("synthetic_unseen.csv")).unwrap();
    assert_eq!(synth.lines().count(), 1 + 2 * 20);
    assert!(synth.starts_with("label,f0,"));
}

#[test]
fn train_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    prepare(root);
    train(root, "a", &["--raw-reward"]);
    train(root, "b", &["--raw-reward"]);
    let a = fs::read(root.join("a/metrics.csv")).unwrap();
    let b = fs::read(root.join("b/metrics.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn cue_variants_and_ablations_run() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    prepare(root);
    for (name, extra) in [
        ("kl", vec!["--cue-loss", "kl"]),
        ("l1", vec!["--cue-loss", "l1"]),
        ("vanilla", vec!["--no-rl", "--no-cues"]),
    ] {
        let out = train(root, name, &extra);
        assert!(out.starts_with("epochs=3"), "{out}");
    }
    let bad = rlvc(&[
        "train",
        "--data",
        s(&root.join("data")),
        "--reward",
        s(&root.join("reward/reward.ckpt")),
        "--cue-loss",
        "cosine-squared",
    ]);
    assert_eq!(bad.status.code(), Some(1));
}
