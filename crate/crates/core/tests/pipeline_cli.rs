use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gendertag::dataset::TEST_SETS;
use gendertag::pipeline::{read_evaluation, run, sha256_file, PipelineConfig, PipelineError, Stage, StageManifest, StageStatus};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn toy_config(work_dir: &Path) -> PipelineConfig {
    let text = format!(
        r#"
version = 1
work_dir = "{}"

[data]
kind = "toy"
size = 600
seed = 4

[build]
gender_test_size = 40
first_person_size = 30
pronouns = ["i"]

[build.split]
test_size = 60
seed = 4

[bpe]
merges = 300

[model]
embed_dim = 12
hidden_dim = 16
epochs = 2
learning_rate = 1.0
clip_norm = 5.0

[eval]
trials = 1000
"#,
        work_dir.display()
    );
    PipelineConfig::from_toml_str(&text, std::iter::empty()).unwrap()
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn toy_pipeline_end_to_end_and_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path());
    let first = run(&cfg, &Stage::ALL).unwrap();
    assert!(first.stages.iter().all(|s| s.status == StageStatus::Ran));
    assert_eq!(first.stages.iter().map(|s| s.stage).collect::<Vec<_>>(), Stage::ALL);

    let w = dir.path();
    for f in ["corpus/corpus.jsonl", "analysis/stats.json", "analysis/age_gender.csv", "bpe/joint.codes", "models/base.ckpt", "models/tag.ckpt", "eval/report.json", "eval/report.txt"] {
        assert!(w.join(f).is_file(), "{f}");
    }
    for set in TEST_SETS {
        assert!(w.join(format!("eval/tag/{set}.hyp")).is_file());
    }
    let report = read_evaluation(w).unwrap();
    assert!(!report.suite.rows.is_empty());
    assert!(report.agreement.is_some());
    assert!(fs::read_to_string(w.join("eval/report.txt")).unwrap().contains("test"));

    // every stage records a hash for each output that is still on disk
    for stage in Stage::ALL {
        let m = StageManifest::read(&w.join(stage.dir_name())).unwrap();
        assert_eq!(m.stage, stage.name());
        assert!(!m.outputs.is_empty());
        for (rel, hash) in &m.outputs {
            assert_eq!(&sha256_file(&w.join(rel)).unwrap(), hash, "{rel}");
        }
        assert!(m.outputs_intact(w));
    }

    let before = snapshot(w);
    let second = run(&cfg, &Stage::ALL).unwrap();
    assert!(second.stages.iter().all(|s| s.status == StageStatus::Skipped));
    assert_eq!(snapshot(w), before);

    // touching an output forces that stage, and only downstream ones, to rerun
    fs::write(w.join("analysis/age_gender.csv"), "x").unwrap();
    let third = run(&cfg, &Stage::ALL).unwrap();
    let ran: Vec<Stage> = third.stages.iter().filter(|s| s.status == StageStatus::Ran).map(|s| s.stage).collect();
    assert_eq!(ran, vec![Stage::Analyze]);
    assert_eq!(snapshot(w), before);
}

#[test]
fn stage_without_upstream_output_names_the_missing_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path());
    let err = run(&cfg, &[Stage::Evaluate]).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    match &err {
        PipelineError::StageFailed { stage, reason } => {
            assert_eq!(*stage, Stage::Evaluate);
            assert!(reason.contains("`train`"), "{reason}");
        }
        other => panic!("{other}"),
    }
}

#[test]
fn invalid_config_is_rejected_before_any_stage() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = toy_config(dir.path());
    cfg.eval.trials = 10;
    let err = run(&cfg, &Stage::ALL).unwrap_err();
    assert!(matches!(err, PipelineError::ConfigInvalid(_)));
    assert_eq!(err.exit_code(), 2);
    assert!(!dir.path().join("corpus").exists());
}

#[test]
fn env_override_changes_a_nested_setting() {
    let dir = tempfile::tempdir().unwrap();
    let text = toy_config(dir.path()).to_toml();
    let env = [("GENDERTAG_MODEL__EPOCHS".to_string(), "7".to_string()), ("PATH".to_string(), "/bin".to_string())];
    let cfg = PipelineConfig::from_toml_str(&text, env).unwrap();
    assert_eq!(cfg.model.epochs, 7);
}

#[test]
fn europarl_fixture_ingest_and_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "version = 1\nwork_dir = \"{}\"\n[data]\nkind = \"europarl\"\neuroparl_dir = \"{}\"\nspeaker_table = \"{}\"\nfuzzy = true\n",
        dir.path().display(),
        fixtures().join("europarl").display(),
        fixtures().join("mep.tsv").display()
    );
    let cfg = PipelineConfig::from_toml_str(&text, std::iter::empty()).unwrap();
    run(&cfg, &[Stage::Ingest, Stage::Analyze]).unwrap();
    let stats: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("analysis/stats.json")).unwrap()).unwrap();
    assert_eq!(stats["stats"]["total_pairs"], 11);
    assert_eq!(stats["stats"]["male_count"], 5);
    let m = StageManifest::read(&dir.path().join("corpus")).unwrap();
    assert!(m.inputs.keys().any(|k| k.ends_with("mep.tsv")));
    assert_eq!(m.inputs.len(), 1 + 4 + 3);
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gendertag")).args(args).output().unwrap()
}

fn ok_json(args: &[&str]) -> serde_json::Value {
    let out = cli(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn cli_help_lists_subcommands() {
    let out = cli(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for sub in ["ingest", "analyze", "build", "bpe-learn", "bpe-apply", "train-toy", "translate-toy", "bleu", "sigtest", "report", "run"] {
        assert!(text.contains(sub), "{sub}");
    }
}

#[test]
fn cli_scoring_and_significance() {
    let dir = tempfile::tempdir().unwrap();
    let (hyp, r, bad) = (dir.path().join("h"), dir.path().join("r"), dir.path().join("b"));
    fs::write(&r, "the cat sat on the mat\na dog ran in the park today\n").unwrap();
    fs::write(&hyp, "the cat sat on the mat\na dog ran in the park today\n").unwrap();
    fs::write(&bad, "mat on\npark\n").unwrap();
    let bleu = ok_json(&["bleu", "--hyp", s(&hyp), "--ref", s(&r)]);
    assert_eq!(bleu["score"], 100.0);
    let sig = ok_json(&["sigtest", "--a", s(&hyp), "--b", s(&hyp), "--ref", s(&r), "--trials", "1000"]);
    assert!(sig["p_value"].as_f64().unwrap() >= 0.9);
    let sig = ok_json(&["sigtest", "--a", s(&hyp), "--b", s(&bad), "--ref", s(&r), "--trials", "1000", "--bootstrap"]);
    assert_eq!(sig["test"], "paired_bootstrap");
    let out = cli(&["bleu", "--hyp", s(&bad), "--ref", s(&dir.path().join("missing"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn cli_bpe_learn_apply_undo() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let text = "MALE lower lowest newer newest\nFEMALE wider widest lower\n";
    fs::write(d.join("train.txt"), text).unwrap();
    let codes = d.join("codes");
    cli_ok(&["bpe-learn", "--input", s(&d.join("train.txt")), "--merges", "12", "--out", s(&codes)]);
    assert!(fs::read_to_string(&codes).unwrap().starts_with("#version: 1"));
    assert!(d.join("codes.json").is_file());
    cli_ok(&["bpe-apply", "--codes", s(&codes), "--in", s(&d.join("train.txt")), "--out", s(&d.join("seg"))]);
    let seg = fs::read_to_string(d.join("seg")).unwrap();
    assert!(seg.starts_with("MALE "));
    cli_ok(&["bpe-apply", "--undo", "--in", s(&d.join("seg")), "--out", s(&d.join("back"))]);
    assert_eq!(fs::read_to_string(d.join("back")).unwrap(), text);
}

fn cli_ok(args: &[&str]) {
    let out = cli(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn cli_ingest_and_build_fixture_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    let f = fixtures();
    cli_ok(&["ingest", "--europarl-dir", s(&f.join("europarl")), "--speakers", s(&f.join("mep.tsv")), "--out", s(&corpus)]);
    assert_eq!(fs::read_to_string(&corpus).unwrap().lines().count(), 11);
    assert!(dir.path().join("corpus.stats.json").is_file());

    let report = ok_json(&["--json", "analyze", "--corpus", s(&corpus), "--probe", "i"]);
    assert_eq!(report["stats"]["total_pairs"], 11);

    let out = dir.path().join("data");
    cli_ok(&[
        "build", "--corpus", s(&corpus), "--out-dir", s(&out), "--tagged", "--test-size", "1", "--gender-test-size", "1", "--first-person-size", "1",
        "--pronouns", "I",
    ]);
    let train = fs::read_to_string(out.join("train.src")).unwrap();
    assert!(train.lines().all(|l| l.starts_with("MALE ") || l.starts_with("FEMALE ")));
    for set in TEST_SETS {
        assert!(out.join(format!("{set}.tgt")).is_file());
    }
}

#[test]
fn cli_run_with_bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "version = 99\n").unwrap();
    let out = cli(&["run", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    fs::write(&cfg, "version = 1\nunknown_key = 3\n").unwrap();
    assert_eq!(cli(&["run", "--config", s(&cfg)]).status.code(), Some(2));
}
