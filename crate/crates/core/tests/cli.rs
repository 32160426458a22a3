use std::fs;
use std::path::{Path, PathBuf};

use noisyqa::cli::{dispatch, manifest_path, RunManifest};
use noisyqa::util::file_digest;

fn run(args: &[&str]) -> i32 {
    dispatch(std::iter::once("noisyqa").chain(args.iter().copied()))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn manifest(output: &Path) -> RunManifest {
    let text = fs::read_to_string(manifest_path(output)).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn generate(dir: &Path) -> PathBuf {
    let out = dir.join("clean.jsonl");
    let code = run(&[
        "generate",
        "--answers",
        "12",
        "--questions",
        "120",
        "--seed",
        "3",
        "--out",
        p(&out),
    ]);
    assert_eq!(code, 0);
    out
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["--help"]), 0);
    assert_eq!(run(&["--version"]), 0);
    assert_eq!(run(&["frobnicate"]), 2);
    assert_eq!(run(&["index"]), 2);
    assert_eq!(run(&["query", "--in", "x.jsonl"]), 2);
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.jsonl");
    let out = dir.path().join("out.json");
    assert_eq!(run(&["index", "--in", p(&missing), "--out", p(&out)]), 1);
    assert!(!out.exists());
    let clean = generate(dir.path());
    assert_eq!(
        run(&[
            "corrupt",
            "--in",
            p(&clean),
            "--set",
            "substitution_rate=2",
            "--out",
            p(&out)
        ]),
        1
    );
    assert_eq!(
        run(&[
            "corrupt",
            "--in",
            p(&clean),
            "--set",
            "no_such_key=1",
            "--out",
            p(&out)
        ]),
        1
    );
}

#[test]
fn every_artifact_gets_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let clean = generate(d);
    let before = fs::read(&clean).unwrap();

    let noisy = d.join("noisy.jsonl");
    let cfg = d.join("channel.cfg");
    fs::write(&cfg, "substitution_rate = 0.3\nseed = 5\n").unwrap();
    assert_eq!(
        run(&[
            "corrupt",
            "--in",
            p(&clean),
            "--config",
            p(&cfg),
            "--set",
            "deletion_rate=0.1",
            "--out",
            p(&noisy)
        ]),
        0
    );
    let m = manifest(&noisy);
    assert_eq!(m.subcommand, "corrupt");
    assert_eq!(m.config["channel.substitution_rate"], "0.3");
    assert_eq!(m.config["channel.deletion_rate"], "0.1");
    assert_eq!(m.seeds["channel"], 5);
    assert_eq!(m.inputs.len(), 2);
    assert_eq!(m.outputs[0].sha256, file_digest(&noisy).unwrap());

    let stats = d.join("stats.json");
    let dist = d.join("dist.json");
    assert_eq!(
        run(&[
            "stats",
            "--clean",
            p(&clean),
            "--corrupted",
            p(&noisy),
            "--out",
            p(&stats),
            "--distributions",
            p(&dist)
        ]),
        0
    );
    assert_eq!(manifest(&stats).outputs.len(), 2);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&stats).unwrap()).unwrap();
    assert!(report["corpus_wer"].as_f64().unwrap() > 0.0);

    let index = d.join("index.json");
    assert_eq!(run(&["index", "--in", p(&noisy), "--out", p(&index)]), 0);
    assert_eq!(manifest(&index).config["k1"], "1.2");

    let ranks = d.join("ranks.json");
    assert_eq!(
        run(&[
            "query",
            "--index",
            p(&index),
            "--in",
            p(&noisy),
            "-k",
            "3",
            "--position",
            "start",
            "--out",
            p(&ranks)
        ]),
        0
    );
    let ranked: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&ranks).unwrap()).unwrap();
    assert_eq!(ranked.as_array().unwrap().len(), 120);
    assert_eq!(ranked[0]["ranked"].as_array().unwrap().len(), 3);

    let model = d.join("model.json");
    assert_eq!(
        run(&[
            "train",
            "--train",
            p(&clean),
            "--variant",
            "conf_learned",
            "--set",
            "embedding_dim=8",
            "--set",
            "hidden_dims=16",
            "--set",
            "max_epochs=2",
            "--seed",
            "4",
            "--out",
            p(&model)
        ]),
        0
    );
    let m = manifest(&model);
    assert_eq!(m.seeds["train"], 4);
    assert_eq!(m.config["variant"], "conf_learned");
    assert!(d.join("model.json.history.json").exists());
    assert_eq!(
        run(&[
            "query",
            "--model",
            p(&model),
            "--in",
            p(&clean),
            "--id",
            "toy-00000"
        ]),
        0
    );
    assert_eq!(
        run(&[
            "query",
            "--model",
            p(&model),
            "--in",
            p(&clean),
            "--id",
            "nope"
        ]),
        1
    );

    assert_eq!(fs::read(&clean).unwrap(), before);
}

#[test]
fn seed_flag_overrides_config_and_environment() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let clean = generate(d);
    let cfg = d.join("channel.cfg");
    fs::write(&cfg, "seed = 5\n").unwrap();
    let out = d.join("a.jsonl");

    std::env::set_var("NOISYQA_SEED", "9");
    assert_eq!(run(&["corrupt", "--in", p(&clean), "--out", p(&out)]), 0);
    assert_eq!(manifest(&out).seeds["channel"], 9);
    assert_eq!(
        run(&[
            "corrupt",
            "--in",
            p(&clean),
            "--config",
            p(&cfg),
            "--out",
            p(&out)
        ]),
        0
    );
    assert_eq!(manifest(&out).seeds["channel"], 5);
    assert_eq!(
        run(&[
            "corrupt",
            "--in",
            p(&clean),
            "--config",
            p(&cfg),
            "--set",
            "seed=6",
            "--out",
            p(&out)
        ]),
        0
    );
    assert_eq!(manifest(&out).seeds["channel"], 6);
    assert_eq!(
        run(&[
            "corrupt",
            "--in",
            p(&clean),
            "--config",
            p(&cfg),
            "--set",
            "seed=6",
            "--seed",
            "7",
            "--out",
            p(&out)
        ]),
        0
    );
    assert_eq!(manifest(&out).seeds["channel"], 7);
    std::env::set_var("NOISYQA_SEED", "seven");
    assert_eq!(run(&["corrupt", "--in", p(&clean), "--out", p(&out)]), 1);
    std::env::remove_var("NOISYQA_SEED");
}

#[test]
fn gradcheck_and_evaluate() {
    assert_eq!(run(&["gradcheck", "--variant", "conf_softmax"]), 0);
    assert_eq!(run(&["gradcheck", "--variant", "nope"]), 1);
    assert_eq!(run(&["gradcheck", "--tolerance", "0"]), 1);

    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let clean = generate(d);
    let results = d.join("results.json");
    let args = [
        "evaluate",
        "--in",
        p(&clean),
        "--methods",
        "ir,dan_plain",
        "--seeds",
        "1",
        "--set-train",
        "embedding_dim=8",
        "--set-train",
        "hidden_dims=16",
        "--set-train",
        "max_epochs=3",
        "--out",
        p(&results),
    ];
    let mut passing = args.to_vec();
    passing.extend(["--assert", "clean_gt_corrupted"]);
    assert_eq!(run(&passing), 0);
    let table = fs::read_to_string(d.join("results.txt")).unwrap();
    assert!(table.contains("dan_plain"));
    let m = manifest(&results);
    assert_eq!(m.outputs.len(), 2);
    assert_eq!(m.config["methods"], "ir,dan_plain");

    // Orderings over methods that were not run cannot hold.
    let mut failing = args.to_vec();
    failing.extend(["--assert", "fd_ge_unk"]);
    assert_eq!(run(&failing), 1);
}
