use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use gendertag::analysis::{Side, DEFAULT_BUCKET_WIDTH};
use gendertag::dataset::{default_pronouns, plan_datasets, read_lines, write_datasets, BuildSpec, GenderTagConfig, SplitSpec};
use gendertag::eval::{approx_randomization, corpus_bleu, paired_bootstrap, SuiteOptions, TestKind};
use gendertag::nmt::{train, Hyperparams};
use gendertag::pipeline::commands::*;
use gendertag::pipeline::{run, PipelineConfig, Stage};

#[derive(Parser)]
#[command(name = "gendertag", version, about = "Gender-tagged NMT data, toy models and evaluation")]
struct Cli {
    /// Machine-readable JSON output.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Annotate Europarl session files with speaker metadata.
    Ingest {
        /// Directory holding one subdirectory of session files per language.
        #[arg(long)]
        europarl_dir: PathBuf,
        /// MEP table (TSV).
        #[arg(long)]
        speakers: PathBuf,
        #[arg(long, default_value = "EN-FR")]
        lang_pair: String,
        /// Output JSONL; stats go next to it as `<stem>.stats.json`.
        #[arg(long)]
        out: PathBuf,
        /// Accept a unique speaker name within edit distance 2.
        #[arg(long)]
        fuzzy: bool,
    },
    /// Gender and age distribution plus per-gender word ranks.
    Analyze {
        #[arg(long)]
        corpus: PathBuf,
        /// Also write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Age histogram CSV (bucket,male_pct,female_pct).
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value = "tgt", value_parser = parse_side)]
        side: Side,
        #[arg(long, default_value_t = 50)]
        top: usize,
        /// Report the rank of these tokens for each gender.
        #[arg(long, value_delimiter = ',')]
        probe: Vec<String>,
        #[arg(long, default_value_t = DEFAULT_BUCKET_WIDTH)]
        bucket_width: u32,
    },
    /// Split a corpus into train and the general, M, F, M1 and F1 test sets.
    Build {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Prefix sources with the speaker's gender tag.
        #[arg(long)]
        tagged: bool,
        #[arg(long, default_value_t = 2000)]
        test_size: usize,
        #[arg(long, default_value_t = 2000)]
        gender_test_size: usize,
        #[arg(long, default_value_t = 2000)]
        first_person_size: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Whole-token, case-sensitive first-person markers.
        #[arg(long, value_delimiter = ',')]
        pronouns: Vec<String>,
        /// Keep pairs of unknown gender in the general split.
        #[arg(long)]
        keep_unknown: bool,
    },
    /// Learn BPE merges.
    BpeLearn {
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        merges: usize,
        /// Merge file; the sidecar is written to `<out>.json`.
        #[arg(long)]
        out: PathBuf,
        /// Learn one merge list over all inputs (source and target together).
        #[arg(long)]
        joint: bool,
        #[arg(long, value_delimiter = ',', default_value = "MALE,FEMALE")]
        protect: Vec<String>,
    },
    /// Segment a file with learned merges, or undo segmentation.
    BpeApply {
        #[arg(long, required_unless_present = "undo")]
        codes: Option<PathBuf>,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        undo: bool,
    },
    /// Train the toy encoder-decoder.
    TrainToy {
        /// Source and target files, comma separated.
        #[arg(long, value_delimiter = ',', num_args = 1, required = true)]
        train: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        hp: HpArgs,
    },
    /// Translate a file with a trained toy model.
    TranslateToy {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Corpus BLEU of a hypothesis file.
    Bleu {
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        lowercase: bool,
    },
    /// Significance of the BLEU difference between systems a and b.
    Sigtest {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        lowercase: bool,
        /// Paired bootstrap instead of approximate randomization.
        #[arg(long)]
        bootstrap: bool,
    },
    /// BASE vs TAG BLEU table.
    Report {
        /// Work directory of a pipeline run; prints its evaluation report.
        #[arg(long, conflicts_with_all = ["refs", "base", "tag"])]
        work_dir: Option<PathBuf>,
        /// Directory with `<set>.tgt` references.
        #[arg(long, requires_all = ["base", "tag"])]
        refs: Option<PathBuf>,
        /// Directory with BASE `<set>.hyp` files.
        #[arg(long)]
        base: Option<PathBuf>,
        /// Directory with TAG `<set>.hyp` files.
        #[arg(long)]
        tag: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "test,test.M,test.F,test.M1,test.F1")]
        sets: Vec<String>,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        bootstrap: bool,
    },
    /// Run pipeline stages from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Stages to run; all when omitted.
        #[arg(long, value_delimiter = ',')]
        stages: Vec<Stage>,
    },
}

#[derive(Args)]
struct HpArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    clip: Option<f64>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
}

impl HpArgs {
    fn hyperparams(&self) -> Hyperparams {
        let d = Hyperparams::default();
        Hyperparams {
            epochs: self.epochs.unwrap_or(d.epochs),
            seed: self.seed.unwrap_or(d.seed),
            learning_rate: self.lr.unwrap_or(d.learning_rate),
            clip_norm: self.clip.or(d.clip_norm),
            embed_dim: self.embed_dim.unwrap_or(d.embed_dim),
            hidden_dim: self.hidden_dim.unwrap_or(d.hidden_dim),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            ..d
        }
    }
}

fn parse_side(s: &str) -> Result<Side, String> {
    match s {
        "src" => Ok(Side::Src),
        "tgt" => Ok(Side::Tgt),
        _ => Err(format!("expected src or tgt, got {s:?}")),
    }
}

fn emit<T: Serialize>(value: &T, text: impl FnOnce() -> String, json_out: bool) -> CmdResult<()> {
    if json_out {
        println!("{}", serde_json::to_string_pretty(value)?);
    } else {
        print!("{}", text());
    }
    Ok(())
}

fn print_json<T: Serialize>(value: &T) -> CmdResult<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CmdResult<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn execute(cmd: Cmd, json_out: bool) -> CmdResult<()> {
    match cmd {
        Cmd::Ingest { europarl_dir, speakers, lang_pair, out, fuzzy } => {
            let (s, t) = lang_pair.split_once('-').ok_or("--lang-pair must look like EN-FR")?;
            let corpus =
                ingest_dirs(&europarl_dir.join(s.to_lowercase()), &europarl_dir.join(t.to_lowercase()), &speakers, &lang_pair, fuzzy)?;
            let counts = write_corpus(&corpus, &out)?;
            emit(&counts, || format!("{} pairs, {} unresolved speakers -> {}\n", counts.total_pairs, counts.unresolved_count, out.display()), json_out)
        }
        Cmd::Analyze { corpus, out, csv, side, top, probe, bucket_width } => {
            let corpus = read_corpus(&corpus)?;
            let report = analyze(&corpus, side, top, &probe)?;
            if let Some(p) = out {
                write_json(&p, &report)?;
            }
            if let Some(p) = csv {
                std::fs::write(p, analysis_csv(&corpus, bucket_width))?;
            }
            emit(
                &report,
                || {
                    let s = &report.stats;
                    let mut t = format!(
                        "pairs {}\nmale {:.2}%  female {:.2}% of known gender; unknown {:.2}% of all\n",
                        s.total_pairs,
                        100.0 * s.male_share,
                        100.0 * s.female_share,
                        100.0 * s.unknown_share
                    );
                    for (tok, ranks) in &report.probes {
                        t += &format!("rank of {tok:?}: {ranks:?}\n");
                    }
                    t
                },
                json_out,
            )
        }
        Cmd::Build { corpus, out_dir, tagged, test_size, gender_test_size, first_person_size, seed, pronouns, keep_unknown } => {
            let corpus = read_corpus(&corpus)?;
            let spec = BuildSpec {
                split: SplitSpec { test_size, seed, exclude_unknown: !keep_unknown },
                gender_test_size,
                first_person_size,
                pronouns: if pronouns.is_empty() { default_pronouns() } else { pronouns.into_iter().collect() },
            };
            let plan = plan_datasets(&corpus, &spec)?;
            let manifest = write_datasets(&corpus, &plan, &spec, tagged, &GenderTagConfig::default(), &out_dir)?;
            emit(&manifest, || manifest.counts.iter().map(|(k, v)| format!("{k:<8} {v}\n")).collect(), json_out)
        }
        Cmd::BpeLearn { inputs, merges, out, joint, protect } => {
            if inputs.len() > 1 && !joint {
                return Err("several inputs given; pass --joint to learn one merge list over all of them".into());
            }
            let protected: BTreeSet<String> = protect.into_iter().filter(|t| !t.is_empty()).collect();
            let model = learn_bpe_files(&inputs, merges, &protected)?;
            save_bpe(&model, &out)?;
            let sidecar = model.sidecar();
            emit(&sidecar, || format!("{} merges -> {}\n", sidecar.num_merges, out.display()), json_out)
        }
        Cmd::BpeApply { codes, input, out, undo } => {
            let n = match (undo, codes) {
                (true, _) => undo_bpe_file(&input, &out)?,
                (false, Some(c)) => apply_bpe_file(&load_bpe(&c)?, &input, &out)?,
                (false, None) => unreachable!("clap requires --codes"),
            };
            emit(&json!({ "lines": n }), || format!("{n} lines -> {}\n", out.display()), json_out)
        }
        Cmd::TrainToy { train: files, out, hp } => {
            let [src, tgt] = files.as_slice() else {
                return Err("--train takes exactly two files: SRC,TGT".into());
            };
            let outcome = train(&read_lines(src)?, &read_lines(tgt)?, &hp.hyperparams())?;
            save_model(&outcome.model, &out)?;
            let summary = json!({
                "best_epoch": outcome.best_epoch,
                "num_params": outcome.model.params.num_params(),
                "hyperparams": outcome.model.hp,
                "history": outcome.history,
            });
            emit(&summary, || format!("best epoch {} of {} -> {}\n", outcome.best_epoch, outcome.history.len(), out.display()), json_out)
        }
        Cmd::TranslateToy { model, input, out } => {
            let n = translate_file(&load_model(&model)?, &input, &out)?;
            emit(&json!({ "lines": n }), || format!("{n} lines -> {}\n", out.display()), json_out)
        }
        Cmd::Bleu { hyp, reference, lowercase } => print_json(&corpus_bleu(&read_lines(&hyp)?, &read_lines(&reference)?, lowercase)?),
        Cmd::Sigtest { a, b, reference, trials, seed, lowercase, bootstrap } => {
            let (a, b, r) = (read_lines(&a)?, read_lines(&b)?, read_lines(&reference)?);
            let report = if bootstrap {
                paired_bootstrap(&a, &b, &r, trials, seed, lowercase)?
            } else {
                approx_randomization(&a, &b, &r, trials, seed, lowercase)?
            };
            print_json(&report)
        }
        Cmd::Report { work_dir, refs, base, tag, sets, trials, seed, bootstrap } => {
            if let Some(w) = work_dir {
                let report = gendertag::pipeline::read_evaluation(&w)?;
                return emit(&report, || report.to_table(), json_out);
            }
            let (Some(refs), Some(base), Some(tag)) = (refs, base, tag) else {
                return Err("pass --work-dir, or --refs with --base and --tag".into());
            };
            let test = if bootstrap { TestKind::PairedBootstrap } else { TestKind::ApproximateRandomization };
            let opts = SuiteOptions { trials, seed, lowercase: false, test };
            let report = report_from_dirs(&refs, &base, &tag, &sets, &opts)?;
            emit(&report, || report.to_table(), json_out)
        }
        Cmd::Run { .. } => unreachable!("handled in main"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Cmd::Run { config, stages } = &cli.cmd {
        let stages = if stages.is_empty() { Stage::ALL.to_vec() } else { stages.clone() };
        let result = PipelineConfig::load(config).and_then(|cfg| run(&cfg, &stages));
        return match result {
            Ok(report) => {
                let text = || report.stages.iter().map(|s| format!("{:<9} {:?} ({} artifacts)\n", s.stage.name(), s.status, s.outputs)).collect();
                match emit(&report, text, cli.json) {
                    Ok(()) => ExitCode::SUCCESS,
                    Err(e) => {
                        eprintln!("error: {e}");
                        ExitCode::FAILURE
                    }
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        };
    }
    match execute(cli.cmd, cli.json) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

