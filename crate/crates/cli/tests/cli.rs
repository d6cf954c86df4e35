use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kgcp_core::io::{load_model, read_header};
use kgcp_core::{FactorModel, TrainConfig, Trainer};
use serde_json::Value;

fn kgcp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kgcp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn field(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}: ")))
        .unwrap_or_else(|| panic!("no `{key}` in:\n{text}"))
        .to_owned()
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// Sixteen entities on a 4 × 4 grid with two symmetric relations: same row
/// and same column. Every fourth pair goes to test, every seventh to valid.
fn grid_dataset(dir: &Path) {
    let mut splits = [String::new(), String::new(), String::new()];
    let mut n = 0;
    for s in 0..16u32 {
        for o in 0..16u32 {
            if s == o {
                continue;
            }
            for (rel, same) in [("same_row", s / 4 == o / 4), ("same_col", s % 4 == o % 4)] {
                if !same {
                    continue;
                }
                let line = format!("node{s}\t{rel}\tnode{o}\n");
                let split = if n % 4 == 3 && s > 3 {
                    2
                } else if n % 7 == 5 && s > 3 {
                    1
                } else {
                    0
                };
                splits[split].push_str(&line);
                n += 1;
            }
        }
    }
    for (name, body) in ["train.txt", "valid.txt", "test.txt"].iter().zip(&splits) {
        std::fs::write(dir.join(name), body).unwrap();
    }
}

struct Fixture {
    _tmp: tempfile::TempDir,
    data: PathBuf,
    root: PathBuf,
}

fn fixture() -> Fixture {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    std::fs::create_dir(&data).unwrap();
    grid_dataset(&data);
    Fixture {
        root: tmp.path().to_owned(),
        data,
        _tmp: tmp,
    }
}

fn train_args<'a>(fx: &'a Fixture, out: &'a Path, extra: &[&'a str]) -> Vec<String> {
    let mut v: Vec<String> = vec![
        "train".into(),
        "--data".into(),
        fx.data.to_str().unwrap().into(),
        "--out".into(),
        out.to_str().unwrap().into(),
        "--rank".into(),
        "8".into(),
        "--batch-size".into(),
        "16".into(),
        "--learning-rate".into(),
        "0.02".into(),
        "--set".into(),
        "lr_decay_step=1000".into(),
    ];
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

fn run(args: &[String]) -> Output {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    kgcp(&refs)
}

fn manifest(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn shipped_configs_match_builtin_defaults() {
    let fb = std::fs::read_to_string(configs_dir().join("fb15k237.cfg")).unwrap();
    assert_eq!(TrainConfig::from_text(&fb).unwrap(), TrainConfig::default());
    let wn = std::fs::read_to_string(configs_dir().join("wn18rr.cfg")).unwrap();
    assert_eq!(TrainConfig::from_text(&wn).unwrap(), TrainConfig::wn18rr());
}

#[test]
fn train_with_config_file_writes_artifact_and_manifest() {
    let fx = fixture();
    let out = fx.root.join("run");
    let cfg = configs_dir().join("fb15k237.cfg");
    let o = kgcp(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--data",
        fx.data.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--rank",
        "4",
        "--epochs",
        "2",
        "--validate-every",
        "1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["model.kge", "model.entities.txt", "model.relations.txt", "last.kge", "best.kge", "manifest.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let m = manifest(&out);
    let c = &m["config"];
    assert_eq!(c["learning_rate"], 0.01);
    assert_eq!(c["batch_size"], 156);
    assert_eq!(c["l2_coeff"], 0.001);
    assert_eq!(c["n_negatives"], 6);
    assert_eq!(c["lr_decay_step"], 3);
    assert_eq!(c["lr_decay_gamma"], 0.8);
    assert_eq!(c["rank"], 4);
    assert_eq!(m["epochs_completed"], 2);
    assert_eq!(m["untrained"], false);
    assert!(m["peak_transient_bytes"].as_u64().unwrap() > 0);
    assert!(m["metrics"]["best_valid_mrr"].as_f64().is_some());
    assert_eq!(m["dataset"]["digests"].as_array().unwrap().len(), 3);
    assert_eq!(field(&stdout(&o), "sha256"), m["artifact"]["sha256"].as_str().unwrap());
    // Two telemetry lines and two validation lines on stderr.
    let err = stderr(&o);
    assert_eq!(err.lines().filter(|l| l.starts_with("epoch=")).count(), 2, "{err}");
    assert_eq!(err.lines().filter(|l| l.starts_with("valid ")).count(), 2, "{err}");
}

#[test]
fn zero_epochs_saves_the_initialization() {
    let fx = fixture();
    let out = fx.root.join("init");
    let o = run(&train_args(&fx, &out, &["--epochs", "0", "--seed", "5", "--precision", "f64"]));
    assert!(o.status.success(), "{}", stderr(&o));
    let m = manifest(&out);
    assert_eq!(m["untrained"], true);
    assert_eq!(m["epochs_completed"], 0);

    let loaded = load_model::<f64>(&out.join("model.kge"), false).unwrap();
    let config: TrainConfig = serde_json::from_value(m["config"].clone()).unwrap();
    let init: FactorModel<f64> = Trainer::<f64>::new(16, 2, config).unwrap().into_model();
    assert_eq!(loaded.model, init);
    assert_eq!(loaded.header.seed, 5);
}

#[test]
fn seeded_deterministic_runs_have_identical_digests() {
    let fx = fixture();
    let digests: Vec<String> = (0..2)
        .map(|i| {
            let out = fx.root.join(format!("det{i}"));
            let o = run(&train_args(&fx, &out, &["--epochs", "3", "--seed", "1", "--deterministic"]));
            assert!(o.status.success(), "{}", stderr(&o));
            field(&stdout(&o), "sha256")
        })
        .collect();
    assert_eq!(digests[0], digests[1]);
    let a = std::fs::read(fx.root.join("det0/model.kge")).unwrap();
    let b = std::fs::read(fx.root.join("det1/model.kge")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn manifest_reproduces_the_artifact() {
    let fx = fixture();
    let first = fx.root.join("first");
    let o = run(&train_args(&fx, &first, &["--epochs", "2", "--seed", "9"]));
    assert!(o.status.success(), "{}", stderr(&o));
    let again = fx.root.join("again");
    let manifest_path = first.join("manifest.json");
    let o = kgcp(&[
        "train",
        "--from-manifest",
        manifest_path.to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("artifact digest matches"));
    assert_eq!(manifest(&first)["artifact"]["sha256"], manifest(&again)["artifact"]["sha256"]);
}

#[test]
fn existing_output_requires_force() {
    let fx = fixture();
    let out = fx.root.join("busy");
    std::fs::create_dir(&out).unwrap();
    std::fs::write(out.join("keep.txt"), "x").unwrap();
    let o = run(&train_args(&fx, &out, &["--epochs", "0"]));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--force"));
    assert_eq!(std::fs::read_to_string(out.join("keep.txt")).unwrap(), "x");
    let o = run(&train_args(&fx, &out, &["--epochs", "0", "--force"]));
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn config_errors_are_listed_together() {
    let fx = fixture();
    let cfg = fx.root.join("bad.cfg");
    std::fs::write(&cfg, "rank = 0\nlr_decay_gamma = 2\nunknown_key = 1\nbatch_size = many\n").unwrap();
    let out = fx.root.join("never");
    let o = kgcp(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--data",
        fx.data.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    for needle in ["unknown_key", "batch_size", "rank must be >= 1", "lr_decay_gamma must lie in (0, 1]"] {
        assert!(err.contains(needle), "missing `{needle}`:\n{err}");
    }
    assert!(!out.exists());
}

#[test]
fn eval_memorizer_scores_perfectly_and_filtering_helps() {
    // A memorizer is scored on triples it was trained on: the test split is
    // a subset of the training split.
    let fx = fixture();
    let train = std::fs::read_to_string(fx.data.join("train.txt")).unwrap()
        + &std::fs::read_to_string(fx.data.join("valid.txt")).unwrap()
        + &std::fs::read_to_string(fx.data.join("test.txt")).unwrap();
    let test: String = train.lines().step_by(5).map(|l| format!("{l}\n")).collect();
    std::fs::write(fx.data.join("train.txt"), &train).unwrap();
    std::fs::write(fx.data.join("test.txt"), &test).unwrap();
    let out = fx.root.join("mem");
    let mut args = train_args(&fx, &out, &["--epochs", "300", "--filtered-negatives", "--set", "l2_coeff=0"]);
    let rank = args.iter().position(|a| a == "--rank").unwrap() + 1;
    args[rank] = "16".into();
    let o = run(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let model = out.join("model.kge");
    let o = kgcp(&["eval", "--model", model.to_str().unwrap(), "--data", fx.data.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(field(&text, "setting"), "filtered");
    assert_eq!(field(&text, "mrr"), "1.000000", "{text}");

    let json = |extra: &[&str]| -> Value {
        let mut args = vec!["eval", "--model", model.to_str().unwrap(), "--data", fx.data.to_str().unwrap(), "--json-lines"];
        args.extend_from_slice(extra);
        let o = kgcp(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        serde_json::from_str(stdout(&o).trim()).unwrap()
    };
    let filtered = json(&[]);
    let unfiltered = json(&["--unfiltered"]);
    for k in ["mrr", "hits1", "hits3", "hits10"] {
        assert!(filtered[k].as_f64().unwrap() >= unfiltered[k].as_f64().unwrap(), "{k}");
    }
    assert!(unfiltered["mrr"].as_f64().unwrap() < 1.0);
    let tail = json(&["--directions", "tail"]);
    assert_eq!(tail["n_queries"].as_u64().unwrap() * 2, filtered["n_queries"].as_u64().unwrap());
}

#[test]
fn eval_rejects_mismatched_vocabulary() {
    let fx = fixture();
    let out = fx.root.join("vocab");
    let o = run(&train_args(&fx, &out, &["--epochs", "0"]));
    assert!(o.status.success(), "{}", stderr(&o));
    let other = fx.root.join("other");
    std::fs::create_dir(&other).unwrap();
    for f in ["train.txt", "valid.txt", "test.txt"] {
        let body = std::fs::read_to_string(fx.data.join(f)).unwrap().replace("node1\t", "renamed\t");
        std::fs::write(other.join(f), body).unwrap();
    }
    let model = out.join("model.kge");
    let o = kgcp(&["eval", "--model", model.to_str().unwrap(), "--data", other.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("entity vocabulary mismatch"), "{err}");
    assert_eq!(err.matches(|c: char| c.is_ascii_hexdigit()).count() >= 128, true, "{err}");
}

#[test]
fn stats_reports_counts() {
    let fx = fixture();
    let o = kgcp(&["stats", "--data", fx.data.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(field(&text, "n_entities"), "16");
    assert_eq!(field(&text, "n_relations"), "2");
    let total: usize = ["train", "valid", "test"].iter().map(|k| field(&text, k).parse::<usize>().unwrap()).sum();
    assert_eq!(total, 16 * 3 * 2);

    let o = kgcp(&["stats", "--data", fx.data.to_str().unwrap(), "--json-lines"]);
    let v: Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["n_entities"], 16);

    let o = kgcp(&["stats", "--data", fx.root.join("missing").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn export_tsv_and_width_conversion() {
    let fx = fixture();
    let out = fx.root.join("exp");
    let o = run(&train_args(&fx, &out, &["--epochs", "1"]));
    assert!(o.status.success(), "{}", stderr(&o));
    let model = out.join("model.kge");

    let tsv_dir = fx.root.join("tsv");
    let o = kgcp(&["export", "--model", model.to_str().unwrap(), "--out", tsv_dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ents = std::fs::read_to_string(tsv_dir.join("entities.tsv")).unwrap();
    assert_eq!(ents.lines().count(), 16);
    let first: Vec<&str> = ents.lines().next().unwrap().split('\t').collect();
    assert_eq!(first[0], "node0");
    assert_eq!(first.len(), 1 + 8);
    let loaded = load_model::<f32>(&model, false).unwrap();
    assert_eq!(first[1].parse::<f32>().unwrap(), loaded.model.entities.get(0, 0));

    let wide = fx.root.join("wide.kge");
    let o = kgcp(&[
        "export",
        "--model",
        model.to_str().unwrap(),
        "--format",
        "kge",
        "--precision",
        "f64",
        "--out",
        wide.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let header = read_header(&wide).unwrap();
    assert_eq!(header.float_width, 8);
    assert_eq!(header.config_digest, read_header(&model).unwrap().config_digest);
    let back = load_model::<f64>(&wide, false).unwrap();
    assert_eq!(back.model, loaded.model.cast::<f64>());
    assert!(fx.root.join("wide.entities.txt").exists());

    let o = kgcp(&["export", "--model", model.to_str().unwrap(), "--out", tsv_dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn gradcheck_defaults_and_variants_pass() {
    for extra in [&[][..], &["--rank", "1"][..], &["--family", "gaussian"][..]] {
        let mut args = vec!["gradcheck"];
        args.extend_from_slice(extra);
        let o = kgcp(&args);
        assert!(o.status.success(), "{extra:?}: {}{}", stdout(&o), stderr(&o));
        let text = stdout(&o);
        assert_eq!(text.lines().last(), Some("PASS"));
        let rel: f64 = field(&text, "max_rel_err_fd").parse().unwrap();
        assert!(rel < 1e-4);
        if extra.contains(&"gaussian") {
            let cp: f64 = field(&text, "max_rel_err_cp_residual").parse().unwrap();
            assert!(cp < 1e-10);
        }
    }
    assert_eq!(field(&stdout(&kgcp(&["gradcheck"])), "dims"), "20x5x20");
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(kgcp(&["gradcheck", "--dims", "20x5x19"]).status.code(), Some(1));
    assert_eq!(kgcp(&["gradcheck", "--density", "0"]).status.code(), Some(1));
    assert_eq!(kgcp(&["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(kgcp(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(kgcp(&[]).status.code(), Some(1));
    assert_eq!(kgcp(&["--help"]).status.code(), Some(0));
    assert_eq!(kgcp(&["--version"]).status.code(), Some(0));
}
