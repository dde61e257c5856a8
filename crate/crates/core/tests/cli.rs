use std::path::Path;
use std::process::Command;

use fmvae::cli::{run, EXIT_INVALID, EXIT_OK, EXIT_RUNTIME};
use fmvae::data::load_sequences;
use fmvae::kv::KvMap;
use fmvae::seq::SequenceKind;

fn fmvae(args: &[&str]) -> i32 {
    run(std::iter::once("fmvae").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TINY: &[&str] = &[
    "--set",
    "enc_hidden=6",
    "--set",
    "enc_fc=6",
    "--set",
    "cond_hidden=6",
    "--set",
    "dec_hidden=6",
    "--set",
    "prior_hidden=4",
    "--set",
    "batch_size=8",
];

fn gen(out: &Path, n: &str) {
    assert_eq!(
        fmvae(&[
            "gen-data",
            "--kind",
            "drum",
            "--n",
            n,
            "--seed",
            "1",
            "--out",
            s(out)
        ]),
        EXIT_OK
    );
}

#[test]
fn gen_data_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    gen(&a, "50");
    gen(&b, "50");
    let read = |d: &Path| std::fs::read(d.join("data.jsonl")).unwrap();
    assert_eq!(read(&a), read(&b));
    let x = load_sequences(&a.join("data.jsonl"), SequenceKind::Drum).unwrap();
    assert_eq!((x.len(), x.n_steps()), (50, 32));
    let cfg = KvMap::load(&a.join("resolved.cfg")).unwrap();
    assert_eq!(cfg.raw("command"), Some("gen-data"));
    assert_eq!(cfg.raw("seed"), Some("1"));
}

#[test]
fn bad_invocations_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    assert_eq!(fmvae(&["train", "--bogus"]), EXIT_INVALID);
    assert_eq!(fmvae(&["frobnicate"]), EXIT_INVALID);
    assert_eq!(
        fmvae(&["train", "--data", "/no/such/file.jsonl", "--out", s(&out)]),
        EXIT_INVALID
    );
    assert_eq!(
        fmvae(&["gen-data", "--format", "xml", "--out", s(&out)]),
        EXIT_INVALID
    );
    gen(&out, "20");
    let data = out.join("data.jsonl");
    assert_eq!(
        fmvae(&["train", "--data", s(&data), "--kappa=-1", "--out", s(&out)]),
        EXIT_INVALID
    );
    assert_eq!(
        fmvae(&[
            "train",
            "--data",
            s(&data),
            "--preset",
            "nope",
            "--out",
            s(&out)
        ]),
        EXIT_INVALID
    );
    // piano model on drum data
    assert_eq!(
        fmvae(&[
            "train",
            "--data",
            s(&data),
            "--preset",
            "desk-piano",
            "--out",
            s(&out)
        ]),
        EXIT_INVALID
    );
    // the output directory cannot be created
    assert_eq!(
        fmvae(&["gen-data", "--n", "3", "--out", s(&data)]),
        EXIT_RUNTIME
    );
}

#[test]
fn train_snapshot_reproduces_model_and_downstream_commands_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(&d.join("data"), "40");
    let data = d.join("data/data.jsonl");
    let first = d.join("first");
    let mut args = vec![
        "train",
        "--data",
        s(&data),
        "--steps",
        "3",
        "--no-vhp",
        "--seed",
        "5",
        "--out",
        s(&first),
    ];
    args.extend_from_slice(TINY);
    assert_eq!(fmvae(&args), EXIT_OK);
    let snap = KvMap::load(&first.join("resolved.cfg")).unwrap();
    assert_eq!(snap.raw("use_vhp"), Some("false"));
    assert_eq!(snap.raw("steps"), Some("3"));
    assert_eq!(snap.raw("dec_hidden"), Some("6"));
    assert_eq!(
        std::fs::read_to_string(first.join("train_log.jsonl"))
            .unwrap()
            .lines()
            .count(),
        3
    );

    let second = d.join("second");
    let cfg = first.join("resolved.cfg");
    assert_eq!(
        fmvae(&["train", "--config", s(&cfg), "--out", s(&second)]),
        EXIT_OK
    );
    for f in [
        "model.fmv",
        "model.fmv.cfg",
        "train_log.jsonl",
        "resolved.cfg",
    ] {
        assert_eq!(
            std::fs::read(first.join(f)).unwrap(),
            std::fs::read(second.join(f)).unwrap(),
            "{f}"
        );
    }

    let model = first.join("model.fmv");
    let io = ["--model", s(&model), "--data", s(&data)];
    let interp = d.join("interp");
    let mut a = vec![
        "interpolate",
        "--from",
        "0",
        "--to",
        "3",
        "--steps",
        "7",
        "--out",
        s(&interp),
    ];
    a.extend_from_slice(&io);
    assert_eq!(fmvae(&a), EXIT_OK);
    let path = load_sequences(&interp.join("interpolation.jsonl"), SequenceKind::Drum).unwrap();
    assert_eq!(path.len(), 9);
    let mut bad = vec![
        "interpolate",
        "--from",
        "0",
        "--to",
        "400",
        "--out",
        s(&interp),
    ];
    bad.extend_from_slice(&io);
    assert_eq!(fmvae(&bad), EXIT_INVALID);

    let smooth = d.join("smooth");
    let mut a = vec![
        "eval-smoothness",
        "--pairs",
        "3",
        "--interior",
        "4",
        "--out",
        s(&smooth),
    ];
    a.extend_from_slice(&io);
    assert_eq!(fmvae(&a), EXIT_OK);
    let rep: serde_json::Value =
        serde_json::from_slice(&std::fs::read(smooth.join("smoothness.json")).unwrap()).unwrap();
    assert_eq!(rep["values"]["per_pair"].as_array().unwrap().len(), 3);

    let quality = d.join("quality");
    let mut a = vec![
        "eval-quality",
        "--band",
        "middle-50",
        "--attr",
        "density",
        "--out",
        s(&quality),
    ];
    a.extend_from_slice(&io);
    assert_eq!(fmvae(&a), EXIT_OK);
    assert!(quality.join("quality.json").exists());

    let contours = d.join("contours");
    let mut a = vec![
        "contours",
        "--directions",
        "8",
        "--radius",
        "0.2",
        "--segments",
        "4",
        "--out",
        s(&contours),
    ];
    a.extend_from_slice(&io);
    assert_eq!(fmvae(&a), EXIT_OK);
    assert!(contours.join("contours.json").exists());
}

#[test]
fn split_training_writes_the_split() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(&d.join("data"), "40");
    let data = d.join("data/data.jsonl");
    let out = d.join("t");
    let mut args = vec![
        "train",
        "--data",
        s(&data),
        "--steps",
        "1",
        "--split",
        "middle-10",
        "--out",
        s(&out),
    ];
    args.extend_from_slice(TINY);
    assert_eq!(fmvae(&args), EXIT_OK);
    let split: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("split.json")).unwrap()).unwrap();
    assert_eq!(split["test"].as_array().unwrap().len(), 4);
}

#[test]
fn binary_seed_fallback_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_fmvae");
    let run_with = |seed: Option<&str>, out: &Path| {
        let mut c = Command::new(bin);
        c.args(["gen-data", "--n", "5", "--out", s(out)]);
        c.env_remove("FMJ_SEED");
        if let Some(v) = seed {
            c.env("FMJ_SEED", v);
        }
        c.status().unwrap().code().unwrap()
    };
    assert_eq!(run_with(Some("42"), &dir.path().join("a")), 0);
    let cfg = KvMap::load(&dir.path().join("a/resolved.cfg")).unwrap();
    assert_eq!(cfg.raw("seed"), Some("42"));
    assert_eq!(run_with(None, &dir.path().join("b")), 0);
    assert_eq!(
        KvMap::load(&dir.path().join("b/resolved.cfg"))
            .unwrap()
            .raw("seed"),
        Some("0")
    );
    assert_eq!(run_with(Some("abc"), &dir.path().join("c")), 1);
    let bad = Command::new(bin).arg("--nope").status().unwrap();
    assert_eq!(bad.code(), Some(1));
}
