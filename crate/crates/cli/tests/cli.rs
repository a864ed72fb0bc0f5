use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use ccim_cli::run;

fn ccim(args: &[&str]) -> i32 {
    let mut argv = vec!["ccim"];
    argv.extend_from_slice(args);
    run(argv)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Every file under `root`, keyed by its relative path.
fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn small_sim(dir: &Path, beta: &str, seed: &str) -> PathBuf {
    let out = dir.join(format!("sim-{beta}-{seed}"));
    let code = ccim(&[
        "simulate", "--seed", seed, "--beta", beta, "--n", "1000", "--n-val", "100", "--n-test", "300", "--n-z", "8",
        "--n-x", "8", "--n-s", "8", "--n-c", "8", "--out", p(&out),
    ]);
    assert_eq!(code, 0);
    out.join("manifest.jsonl")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn pipeline_runs_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = small_sim(tmp.path(), "0.9", "3");
    let sim_audit = json(&manifest.with_file_name("audit.json"));
    assert_eq!(sim_audit["z"].as_object().unwrap().len(), 1400);
    assert_eq!(sim_audit["p_y_given_do_x"].as_array().unwrap().len(), 8);

    let dict_dir = tmp.path().join("dict");
    assert_eq!(
        ccim(&["build-dict", "--manifest", p(&manifest), "--n", "8", "--dim", "32", "--out", p(&dict_dir)]),
        0
    );
    let train_dir = tmp.path().join("train");
    assert_eq!(
        ccim(&[
            "train", "--manifest", p(&manifest), "--ccim", "--epochs", "2", "--feature-dim", "32", "--n-clusters", "8",
            "--dict", p(&dict_dir.join("dict.bin")), "--out", p(&train_dir),
        ]),
        0
    );
    let trace = std::fs::read_to_string(train_dir.join("loss_trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 3);
    let eval_dir = tmp.path().join("eval");
    assert_eq!(
        ccim(&["eval", "--model", p(&train_dir.join("model.bin")), "--manifest", p(&manifest), "--out", p(&eval_dir)]),
        0
    );
    let report = json(&eval_dir.join("report.json"));
    assert_eq!(report["samples"], 300);
    let acc = report["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    let ap_rows = std::fs::read_to_string(eval_dir.join("per_class_ap.csv")).unwrap();
    assert_eq!(ap_rows.lines().count(), 1 + 4);
}

#[test]
fn unbiased_simulation_audits_to_no_zero_entropy_contexts() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = small_sim(tmp.path(), "0", "1");
    let out = tmp.path().join("audit");
    assert_eq!(ccim(&["audit", "--manifest", p(&manifest), "--target", "0", "--out", p(&out)]), 0);
    let report = json(&out.join("audit.json"));
    assert!(report["zero_entropy_fraction"].as_f64().unwrap() < 0.05);
    let hist = std::fs::read_to_string(out.join("entropy_histogram.csv")).unwrap();
    assert_eq!(hist.lines().count(), 6);
}

#[test]
fn every_command_replays_byte_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = small_sim(tmp.path(), "0.9", "5");
    let runs: Vec<(&str, Vec<String>)> = vec![
        ("audit", vec!["audit".into(), "--manifest".into(), p(&manifest).into(), "--target".into(), "1".into()]),
        (
            "dict",
            ["build-dict", "--manifest", p(&manifest), "--n", "4", "--dim", "16", "--clusterer", "kmedoids"]
                .map(String::from)
                .to_vec(),
        ),
        (
            "train",
            ["train", "--manifest", p(&manifest), "--ccim", "--variant", "additive", "--epochs", "2", "--feature-dim", "16"]
                .map(String::from)
                .to_vec(),
        ),
        (
            "ablate",
            ["ablate", "--manifest", p(&manifest), "--grid", "n-sweep", "--n-sweep", "2,4", "--epochs", "1", "--feature-dim", "16"]
                .map(String::from)
                .to_vec(),
        ),
    ];
    let mut dirs = vec![manifest.parent().unwrap().to_path_buf()];
    for (name, mut args) in runs {
        let out = tmp.path().join(name);
        args.extend(["--out".to_string(), p(&out).to_string()]);
        let argv: Vec<&str> = args.iter().map(String::as_str).collect();
        assert_eq!(ccim(&argv), 0, "{name}");
        dirs.push(out);
    }
    let model = tmp.path().join("train/model.bin");
    let eval_dir = tmp.path().join("eval");
    assert_eq!(ccim(&["eval", "--model", p(&model), "--manifest", p(&manifest), "--out", p(&eval_dir)]), 0);
    dirs.push(eval_dir);

    for dir in dirs {
        let replay = tmp.path().join("replay").join(dir.file_name().unwrap());
        assert_eq!(ccim(&["replay", "--config", p(&dir.join("config.json")), "--out", p(&replay)]), 0);
        let (a, b) = (tree(&dir), tree(&replay));
        assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>(), "{}", dir.display());
        for (file, bytes) in &a {
            assert!(bytes == &b[file], "{} differs on replay", file.display());
        }
    }
}

#[test]
fn refuses_to_overwrite_without_force() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = small_sim(tmp.path(), "0.9", "2");
    let out = tmp.path().join("audit");
    let args = ["audit", "--manifest", p(&manifest), "--target", "0", "--out", p(&out)];
    assert_eq!(ccim(&args), 0);
    let before = tree(&out);
    assert_eq!(ccim(&args), 1);
    assert_eq!(tree(&out), before);
    let mut forced = args.to_vec();
    forced.push("--force");
    assert_eq!(ccim(&forced), 0);
}

#[test]
fn grid_of_one_matches_train_then_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = small_sim(tmp.path(), "0.9", "4");
    let flags = ["--ccim", "--epochs", "2", "--feature-dim", "16", "--seed", "9"];
    let train_dir = tmp.path().join("train");
    let mut args = vec!["train", "--manifest", p(&manifest), "--out", p(&train_dir)];
    args.extend(flags);
    assert_eq!(ccim(&args), 0);
    let eval_dir = tmp.path().join("eval");
    assert_eq!(
        ccim(&["eval", "--model", p(&train_dir.join("model.bin")), "--manifest", p(&manifest), "--out", p(&eval_dir)]),
        0
    );
    let ablate_dir = tmp.path().join("ablate");
    let mut args = vec!["ablate", "--manifest", p(&manifest), "--grid", "single", "--out", p(&ablate_dir)];
    args.extend(flags);
    assert_eq!(ccim(&args), 0);
    let cell = ablate_dir.join("cells/ccim-dot");
    for file in ["report.json", "per_class_ap.csv"] {
        assert_eq!(std::fs::read(cell.join(file)).unwrap(), std::fs::read(eval_dir.join(file)).unwrap());
    }
    assert_eq!(
        std::fs::read(cell.join("loss_trace.csv")).unwrap(),
        std::fs::read(train_dir.join("loss_trace.csv")).unwrap()
    );
}

#[test]
fn variants_grid_covers_every_flag_cell_and_shares_vanilla() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = small_sim(tmp.path(), "0.9", "6");
    let common = ["--epochs", "1", "--feature-dim", "8", "--n-clusters", "4"];
    let variants = tmp.path().join("variants");
    let mut args = vec!["ablate", "--manifest", p(&manifest), "--grid", "variants", "--out", p(&variants)];
    args.extend(common);
    assert_eq!(ccim(&args), 0);
    let mut cells: Vec<String> = std::fs::read_dir(variants.join("cells"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    cells.sort();
    let mut expected = vec!["vanilla".to_string()];
    for v in ["dot", "additive"] {
        for suffix in ["", "-nolambda", "-noprior", "-nolambda-noprior"] {
            expected.push(format!("ccim-{v}{suffix}"));
        }
    }
    expected.sort();
    assert_eq!(cells, expected);
    let table = std::fs::read_to_string(variants.join("comparison.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 9);

    let sweep = tmp.path().join("sweep");
    let mut args = vec!["ablate", "--manifest", p(&manifest), "--grid", "n-sweep", "--n-sweep", "2,4", "--out", p(&sweep)];
    args.extend(common);
    assert_eq!(ccim(&args), 0);
    assert_eq!(
        std::fs::read(variants.join("cells/vanilla/report.json")).unwrap(),
        std::fs::read(sweep.join("cells/vanilla/report.json")).unwrap()
    );
    let peak = json(&sweep.join("n_sweep_peak.json"));
    assert!([2, 4].contains(&peak["n_clusters"].as_u64().unwrap()));
}

#[test]
fn ablation_is_independent_of_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = small_sim(tmp.path(), "0.9", "8");
    let bin = env!("CARGO_BIN_EXE_ccim");
    let mut trees = Vec::new();
    for threads in ["1", "3"] {
        let out = tmp.path().join(format!("t{threads}"));
        let status = Command::new(bin)
            .env("CCIM_THREADS", threads)
            .args(["ablate", "--manifest", p(&manifest), "--grid", "variants", "--epochs", "1", "--feature-dim", "8"])
            .args(["--n-clusters", "4", "--out", p(&out)])
            .status()
            .unwrap();
        assert!(status.success());
        let mut t = tree(&out);
        t.remove(Path::new("config.json"));
        trees.push(t);
    }
    assert_eq!(trees[0], trees[1]);
}

fn stderr_of(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_ccim")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stderr).unwrap())
}

#[test]
fn exit_codes_follow_the_taxonomy() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, _) = stderr_of(&["simulate", "--no-such-flag"]);
    assert_eq!(code, 2);
    let (code, _) = stderr_of(&["frobnicate"]);
    assert_eq!(code, 2);
    let (code, _) = stderr_of(&["--help"]);
    assert_eq!(code, 0);

    let manifest = small_sim(tmp.path(), "0.9", "7");
    let out = tmp.path().join("dict");
    let (code, err) = stderr_of(&["build-dict", "--manifest", p(&manifest), "--n", "5000", "--dim", "8", "--out", p(&out)]);
    assert_eq!(code, 1);
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error[argument]: confounder:"), "{err}");

    let (code, err) = stderr_of(&[
        "train", "--manifest", p(&tmp.path().join("missing.jsonl")), "--out", p(&tmp.path().join("t")),
    ]);
    assert_eq!(code, 1);
    assert!(err.starts_with("error[io]: core:"), "{err}");

    let (code, err) = stderr_of(&["simulate", "--beta", "1.5", "--out", p(&tmp.path().join("s"))]);
    assert_eq!(code, 1);
    assert!(err.starts_with("error[argument]: scm:"), "{err}");
}

#[test]
fn audit_rejects_continuous_labels_and_missing_contexts() {
    let tmp = tempfile::tempdir().unwrap();
    let vad = tmp.path().join("vad.jsonl");
    std::fs::write(
        &vad,
        "{\"sample_id\":\"a\",\"split\":\"train\",\"context_id\":\"k\",\"labels\":{\"continuous\":[5,5,5]},\"synthetic\":{\"subject\":[1],\"context\":[1]}}\n",
    )
    .unwrap();
    let (code, err) = stderr_of(&["audit", "--manifest", p(&vad), "--target", "0", "--out", p(&tmp.path().join("a"))]);
    assert_eq!(code, 1);
    assert!(err.starts_with("error[config]: metrics:"), "{err}");

    let bare = tmp.path().join("bare.jsonl");
    std::fs::write(
        &bare,
        "{\"sample_id\":\"a\",\"split\":\"train\",\"labels\":{\"single_label\":0},\"synthetic\":{\"subject\":[1],\"context\":[1]}}\n",
    )
    .unwrap();
    let (code, err) = stderr_of(&["audit", "--manifest", p(&bare), "--target", "0", "--out", p(&tmp.path().join("b"))]);
    assert_eq!(code, 1);
    assert!(err.starts_with("error[validation]: metrics:"), "{err}");
}

#[test]
fn config_echo_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = small_sim(tmp.path(), "0.5", "9");
    let config = ccim_cli::RunConfig::load(&manifest.with_file_name("config.json")).unwrap();
    assert_eq!(config.name(), "simulate");
    let ccim_cli::RunConfig::Simulate(sim) = &config else { panic!("wrong command") };
    assert_eq!(sim.scm.beta, 0.5);
    assert_eq!(sim.sizes.train, 1000);
    assert_eq!(config.to_json(), std::fs::read_to_string(manifest.with_file_name("config.json")).unwrap());
}
