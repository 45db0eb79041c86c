//! End-to-end workflow: ingest → analyze → build → bpe → train → evaluate.
//!
//! Every stage owns one directory under the work directory and records a
//! `manifest.json` with content hashes of what it read and wrote. A stage
//! whose inputs, settings and outputs are unchanged is skipped.
//!
//! | stage    | directory   | reads                                   |
//! |----------|-------------|-----------------------------------------|
//! | ingest   | `corpus/`   | Europarl files and MEP table, or nothing for toy data |
//! | analyze  | `analysis/` | `corpus/corpus.jsonl`                   |
//! | build    | `data/`     | `corpus/corpus.jsonl`                   |
//! | bpe      | `bpe/`      | `data/{base,tag}/*`                     |
//! | train    | `models/`   | `bpe/{base,tag}/train.*`                |
//! | evaluate | `eval/`     | models, `bpe/*/test*.src`, `data/base/test*.tgt` |

pub mod commands;
mod config;
mod manifest;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

pub use config::{BpeOptions, DataSource, PipelineConfig, CONFIG_VERSION, ENV_PREFIX};
pub use manifest::{sha256_file, StageManifest, MANIFEST_FILE, TOOL_VERSION};

use crate::analysis::{Side, DEFAULT_BUCKET_WIDTH};
use crate::dataset::{plan_datasets, read_lines, write_datasets, write_lines, TEST_SETS};
use crate::eval::SuiteReport;
use crate::nmt::{agreement_accuracy, gen_toy_language, train, translate_lines, EpochStats};
use commands::*;
use manifest::{display_path, hash_all};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("stage `{stage}` failed: {reason}")]
    StageFailed { stage: Stage, reason: String },
}

impl PipelineError {
    /// 2 for configuration problems, 1 for stage failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::ConfigInvalid(_) => 2,
            PipelineError::StageFailed { .. } => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Analyze,
    Build,
    Bpe,
    Train,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 6] = [Stage::Ingest, Stage::Analyze, Stage::Build, Stage::Bpe, Stage::Train, Stage::Evaluate];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Analyze => "analyze",
            Stage::Build => "build",
            Stage::Bpe => "bpe",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
        }
    }

    /// Directory under the work directory holding this stage's artifacts.
    pub fn dir_name(self) -> &'static str {
        match self {
            Stage::Ingest => "corpus",
            Stage::Analyze => "analysis",
            Stage::Build => "data",
            Stage::Bpe => "bpe",
            Stage::Train => "models",
            Stage::Evaluate => "eval",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL.into_iter().find(|st| st.name() == s).ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ran,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub stage: Stage,
    pub status: StageStatus,
    pub outputs: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub work_dir: PathBuf,
    pub stages: Vec<StageOutcome>,
}

/// BLEU table plus, for toy data, agreement accuracy per set as
/// `(base, tag)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub suite: SuiteReport,
    pub agreement: Option<BTreeMap<String, (f64, f64)>>,
}

impl EvaluationReport {
    pub fn to_table(&self) -> String {
        let mut out = self.suite.to_table();
        if let Some(acc) = &self.agreement {
            out.push_str("\nAgreement accuracy\n");
            let width = acc.keys().map(String::len).max().unwrap_or(0).max("Test set".len());
            out.push_str(&format!("{:<width$}  {:>8}  {:>8}\n", "Test set", "BASE", "TAG"));
            for (set, (b, t)) in acc {
                out.push_str(&format!("{set:<width$}  {b:>8.3}  {t:>8.3}\n"));
            }
        }
        out
    }
}

const VARIANTS: [(&str, bool); 2] = [("base", false), ("tag", true)];
const CORPUS_FILE: &str = "corpus/corpus.jsonl";

fn set_names() -> impl Iterator<Item = &'static str> {
    std::iter::once("train").chain(TEST_SETS)
}

/// Runs the requested stages in workflow order.
pub fn run(cfg: &PipelineConfig, stages: &[Stage]) -> Result<RunReport, PipelineError> {
    cfg.validate()?;
    let selected: BTreeSet<Stage> = stages.iter().copied().collect();
    let mut outcomes = Vec::with_capacity(selected.len());
    for stage in selected {
        outcomes.push(run_stage(cfg, stage)?);
    }
    Ok(RunReport { work_dir: cfg.work_dir.clone(), stages: outcomes })
}

struct Plan {
    inputs: Vec<PathBuf>,
    params: serde_json::Value,
    seed: Option<u64>,
}

fn fail(stage: Stage, reason: impl fmt::Display) -> PipelineError {
    PipelineError::StageFailed { stage, reason: reason.to_string() }
}

fn plan(cfg: &PipelineConfig, stage: Stage) -> Result<Plan, PipelineError> {
    let w = &cfg.work_dir;
    let produced = |upstream: Stage, rel: String| (upstream, w.join(rel));
    let (needs, params, seed): (Vec<(Stage, PathBuf)>, serde_json::Value, Option<u64>) = match stage {
        Stage::Ingest => {
            return match &cfg.data {
                DataSource::Toy(spec) => Ok(Plan { inputs: vec![], params: json!({ "toy": spec }), seed: Some(spec.seed) }),
                DataSource::Europarl { europarl_dir, speaker_table, fuzzy } => {
                    let (s, t) = cfg.languages()?;
                    let mut inputs = vec![speaker_table.clone()];
                    for lang in [s, t] {
                        let dir = europarl_dir.join(lang);
                        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
                            .map_err(|e| fail(stage, format!("{}: {e}", dir.display())))?
                            .filter_map(|e| e.ok().map(|e| e.path()))
                            .filter(|p| p.is_file())
                            .collect();
                        files.sort();
                        inputs.extend(files);
                    }
                    Ok(Plan { inputs, params: json!({ "lang_pair": cfg.lang_pair, "fuzzy": fuzzy }), seed: None })
                }
            };
        }
        Stage::Analyze => (vec![produced(Stage::Ingest, CORPUS_FILE.into())], json!({ "bucket_width": DEFAULT_BUCKET_WIDTH }), None),
        Stage::Build => (
            vec![produced(Stage::Ingest, CORPUS_FILE.into())],
            json!({ "build": cfg.build, "tags": cfg.tags }),
            Some(cfg.build.split.seed),
        ),
        Stage::Bpe => {
            let needs = VARIANTS
                .iter()
                .flat_map(|(v, _)| set_names().flat_map(move |s| ["src", "tgt"].map(|e| format!("data/{v}/{s}.{e}"))))
                .map(|rel| produced(Stage::Build, rel))
                .collect();
            (needs, json!({ "bpe": cfg.bpe, "protected": cfg.tags.tokens() }), None)
        }
        Stage::Train => {
            let needs =
                VARIANTS.iter().flat_map(|(v, _)| ["src", "tgt"].map(|e| produced(Stage::Bpe, format!("bpe/{v}/train.{e}")))).collect();
            (needs, json!({ "model": cfg.model }), Some(cfg.model.seed))
        }
        Stage::Evaluate => {
            let mut needs: Vec<(Stage, PathBuf)> = VARIANTS.iter().map(|(v, _)| produced(Stage::Train, format!("models/{v}.ckpt"))).collect();
            for set in TEST_SETS {
                for (v, _) in VARIANTS {
                    needs.push(produced(Stage::Bpe, format!("bpe/{v}/{set}.src")));
                }
                needs.push(produced(Stage::Build, format!("data/base/{set}.tgt")));
            }
            let toy = matches!(cfg.data, DataSource::Toy(_));
            (needs, json!({ "eval": cfg.eval, "toy": toy }), Some(cfg.eval.seed))
        }
    };
    for (upstream, path) in &needs {
        if !path.is_file() {
            return Err(fail(
                stage,
                format!("missing {} from stage `{upstream}`; run `{upstream}` first", display_path(w, path)),
            ));
        }
    }
    Ok(Plan { inputs: needs.into_iter().map(|(_, p)| p).collect(), params, seed })
}

fn run_stage(cfg: &PipelineConfig, stage: Stage) -> Result<StageOutcome, PipelineError> {
    let w = &cfg.work_dir;
    let dir = w.join(stage.dir_name());
    let plan = plan(cfg, stage)?;
    let inputs = hash_all(w, &plan.inputs).map_err(|e| fail(stage, e))?;

    if let Some(prev) = StageManifest::read(&dir) {
        if prev.tool_version == TOOL_VERSION && prev.params == plan.params && prev.inputs == inputs && prev.outputs_intact(w) {
            log::info!("{stage}: up to date, skipped");
            return Ok(StageOutcome { stage, status: StageStatus::Skipped, outputs: prev.outputs.len() });
        }
    }

    log::info!("{stage}: running");
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(|e| fail(stage, e))?;
    }
    fs::create_dir_all(&dir).map_err(|e| fail(stage, e))?;
    let outputs = execute(cfg, stage, &dir).map_err(|e| fail(stage, e))?;
    let manifest = StageManifest {
        stage: stage.name().to_string(),
        tool_version: TOOL_VERSION.to_string(),
        seed: plan.seed,
        params: plan.params,
        inputs,
        outputs: hash_all(w, &outputs).map_err(|e| fail(stage, e))?,
    };
    manifest.write(&dir).map_err(|e| fail(stage, e))?;
    Ok(StageOutcome { stage, status: StageStatus::Ran, outputs: manifest.outputs.len() })
}

/// Runs one stage body and returns the files it wrote.
fn execute(cfg: &PipelineConfig, stage: Stage, dir: &Path) -> CmdResult<Vec<PathBuf>> {
    let w = &cfg.work_dir;
    match stage {
        Stage::Ingest => {
            let corpus = match &cfg.data {
                DataSource::Toy(spec) => gen_toy_language(spec)?,
                DataSource::Europarl { europarl_dir, speaker_table, fuzzy } => {
                    let (s, t) = cfg.languages()?;
                    ingest_dirs(&europarl_dir.join(s), &europarl_dir.join(t), speaker_table, &cfg.lang_pair, *fuzzy)?
                }
            };
            let path = w.join(CORPUS_FILE);
            let counts = write_corpus(&corpus, &path)?;
            log::info!("ingest: {} pairs, {} unresolved", counts.total_pairs, counts.unresolved_count);
            Ok(vec![path.clone(), stats_path(&path)])
        }
        Stage::Analyze => {
            let corpus = read_corpus(&w.join(CORPUS_FILE))?;
            let report = analyze(&corpus, Side::Tgt, 100, &[])?;
            let json_path = dir.join("stats.json");
            let csv_path = dir.join("age_gender.csv");
            fs::write(&json_path, serde_json::to_string_pretty(&report)? + "\n")?;
            fs::write(&csv_path, analysis_csv(&corpus, DEFAULT_BUCKET_WIDTH))?;
            Ok(vec![json_path, csv_path])
        }
        Stage::Build => {
            let corpus = read_corpus(&w.join(CORPUS_FILE))?;
            let plan = plan_datasets(&corpus, &cfg.build)?;
            let mut outputs = Vec::new();
            for (variant, tagged) in VARIANTS {
                let out = dir.join(variant);
                write_datasets(&corpus, &plan, &cfg.build, tagged, &cfg.tags, &out)?;
                outputs.extend(set_names().flat_map(|s| ["src", "tgt"].map(|e| out.join(format!("{s}.{e}")))));
                outputs.push(out.join("manifest.json"));
            }
            Ok(outputs)
        }
        Stage::Bpe => {
            let protected: BTreeSet<String> = cfg.tags.tokens().iter().map(|t| t.to_string()).collect();
            let train_side = |e: &str| w.join(format!("data/base/train.{e}"));
            let mut outputs = Vec::new();
            let models = if cfg.bpe.joint {
                let m = learn_bpe_files(&[train_side("src"), train_side("tgt")], cfg.bpe.merges, &protected)?;
                let codes = dir.join("joint.codes");
                save_bpe(&m, &codes)?;
                outputs.extend([sidecar_path(&codes), codes]);
                [m.clone(), m]
            } else {
                let mut pair = Vec::new();
                for side in ["src", "tgt"] {
                    let m = learn_bpe_files(&[train_side(side)], cfg.bpe.merges, &protected)?;
                    let codes = dir.join(format!("{side}.codes"));
                    save_bpe(&m, &codes)?;
                    outputs.extend([sidecar_path(&codes), codes]);
                    pair.push(m);
                }
                let tgt = pair.pop().expect("two models");
                [pair.pop().expect("two models"), tgt]
            };
            for (variant, _) in VARIANTS {
                fs::create_dir_all(dir.join(variant))?;
                for set in set_names() {
                    for (side, model) in ["src", "tgt"].iter().zip(&models) {
                        let rel = format!("{variant}/{set}.{side}");
                        apply_bpe_file(model, &w.join("data").join(&rel), &dir.join(&rel))?;
                        outputs.push(dir.join(rel));
                    }
                }
            }
            Ok(outputs)
        }
        Stage::Train => {
            let fit = |variant: &str| -> CmdResult<(crate::nmt::TrainOutcome, String)> {
                let src = read_lines(&w.join(format!("bpe/{variant}/train.src")))?;
                let tgt = read_lines(&w.join(format!("bpe/{variant}/train.tgt")))?;
                Ok((train(&src, &tgt, &cfg.model)?, variant.to_string()))
            };
            let (a, b) = rayon::join(|| fit("base"), || fit("tag"));
            let mut outputs = Vec::new();
            let mut histories: BTreeMap<String, (usize, Vec<EpochStats>)> = BTreeMap::new();
            for res in [a, b] {
                let (outcome, variant) = res?;
                let path = dir.join(format!("{variant}.ckpt"));
                save_model(&outcome.model, &path)?;
                outputs.push(path);
                histories.insert(variant, (outcome.best_epoch, outcome.history));
            }
            let hist_path = dir.join("history.json");
            let hist: BTreeMap<_, _> =
                histories.into_iter().map(|(v, (best, h))| (v, json!({ "best_epoch": best, "epochs": h }))).collect();
            fs::write(&hist_path, serde_json::to_string_pretty(&hist)? + "\n")?;
            outputs.push(hist_path);
            Ok(outputs)
        }
        Stage::Evaluate => {
            let mut outputs = Vec::new();
            let mut sets = Vec::new();
            for (variant, _) in VARIANTS {
                let model = load_model(&w.join(format!("models/{variant}.ckpt")))?;
                fs::create_dir_all(dir.join(variant))?;
                for set in TEST_SETS {
                    let src = read_lines(&w.join(format!("bpe/{variant}/{set}.src")))?;
                    let hyps: Vec<String> = translate_lines(&model, &src).iter().map(|h| undo_bpe_lenient(h)).collect();
                    let path = dir.join(format!("{variant}/{set}.hyp"));
                    write_lines(&path, &hyps)?;
                    outputs.push(path);
                }
            }
            let names: Vec<String> = TEST_SETS.iter().map(|s| s.to_string()).collect();
            let suite = report_from_dirs(&w.join("data/base"), &dir.join("base"), &dir.join("tag"), &names, &cfg.eval)?;
            for row in &suite.rows {
                sets.push(row.test_set.clone());
            }
            let agreement = match &cfg.data {
                DataSource::Toy(spec) => {
                    let mut acc = BTreeMap::new();
                    for set in &sets {
                        let refs = read_lines(&w.join(format!("data/base/{set}.tgt")))?;
                        let score = |v: &str| -> CmdResult<f64> {
                            Ok(agreement_accuracy(&read_lines(&dir.join(format!("{v}/{set}.hyp")))?, &refs, &spec.lexicon))
                        };
                        acc.insert(set.clone(), (score("base")?, score("tag")?));
                    }
                    Some(acc)
                }
                DataSource::Europarl { .. } => None,
            };
            let report = EvaluationReport { suite, agreement };
            let json_path = dir.join("report.json");
            let txt_path = dir.join("report.txt");
            fs::write(&json_path, serde_json::to_string_pretty(&report)? + "\n")?;
            fs::write(&txt_path, report.to_table())?;
            outputs.extend([json_path, txt_path]);
            Ok(outputs)
        }
    }
}

/// Reads the evaluation report written by a previous run.
pub fn read_evaluation(work_dir: &Path) -> CmdResult<EvaluationReport> {
    let p = work_dir.join("eval/report.json");
    Ok(serde_json::from_str(&fs::read_to_string(&p).map_err(|e| format!("{}: {e}", p.display()))?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
        }
        assert!("nope".parse::<Stage>().is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(PipelineError::ConfigInvalid("x".into()).exit_code(), 2);
        assert_eq!(fail(Stage::Train, "x").exit_code(), 1);
    }
}
