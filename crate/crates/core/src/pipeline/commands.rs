//! File-level operations behind the CLI subcommands and the pipeline stages.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{age_gender_histogram, frequency_rank, gender_distribution, histogram_csv, CorpusStats, Side};
use crate::bpe::{learn_bpe, BpeModel, BpeSidecar};
use crate::dataset::{read_lines, write_lines};
use crate::eval::{evaluate_suite, SuiteOptions, SuiteReport, TestSetOutputs};
use crate::ingest::{annotate_corpus, AnnotateOptions, AnnotatedCorpus, CorpusCounts, Gender, SessionFile, SpeakerTable};
use crate::nmt::{read_checkpoint, translate_lines, write_checkpoint, Seq2SeqModel};

pub type BoxError = Box<dyn std::error::Error + Send + Sync>;
pub type CmdResult<T> = Result<T, BoxError>;

fn with_path<E: std::fmt::Display>(path: &Path) -> impl FnOnce(E) -> BoxError + '_ {
    move |e| format!("{}: {e}", path.display()).into()
}

/// Every regular file in `dir`, sorted by name. Bytes that are not UTF-8
/// are replaced rather than rejected.
pub fn read_session_dir(dir: &Path) -> CmdResult<Vec<SessionFile>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(with_path(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let bytes = fs::read(&p).map_err(with_path(&p))?;
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            Ok(SessionFile::new(name, String::from_utf8_lossy(&bytes).into_owned()))
        })
        .collect()
}

pub fn read_speaker_table(path: &Path) -> CmdResult<SpeakerTable> {
    let f = fs::File::open(path).map_err(with_path(path))?;
    SpeakerTable::from_tsv(BufReader::new(f)).map_err(with_path(path))
}

/// Annotates `<src_dir>` against `<tgt_dir>` session files.
pub fn ingest_dirs(src_dir: &Path, tgt_dir: &Path, speakers: &Path, lang_pair: &str, fuzzy: bool) -> CmdResult<AnnotatedCorpus> {
    let table = read_speaker_table(speakers)?;
    let src = read_session_dir(src_dir)?;
    let tgt = read_session_dir(tgt_dir)?;
    Ok(annotate_corpus(&src, &tgt, &table, lang_pair, AnnotateOptions { fuzzy }))
}

/// `corpus.jsonl` → `corpus.stats.json`
pub fn stats_path(corpus_path: &Path) -> PathBuf {
    corpus_path.with_extension("stats.json")
}

/// Writes the JSONL corpus and its stats sidecar.
pub fn write_corpus(corpus: &AnnotatedCorpus, path: &Path) -> CmdResult<CorpusCounts> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(fs::File::create(path).map_err(with_path(path))?);
    corpus.write_jsonl(&mut w)?;
    std::io::Write::flush(&mut w)?;
    let counts = corpus.stats();
    fs::write(stats_path(path), serde_json::to_string_pretty(&counts)? + "\n")?;
    Ok(counts)
}

pub fn read_corpus(path: &Path) -> CmdResult<AnnotatedCorpus> {
    let f = fs::File::open(path).map_err(with_path(path))?;
    AnnotatedCorpus::read_jsonl(BufReader::new(f)).map_err(with_path(path))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub stats: CorpusStats,
    pub side: Side,
    /// Most frequent tokens per gender, keyed `MALE` / `FEMALE`.
    pub top_tokens: BTreeMap<String, Vec<(String, usize)>>,
    /// 1-based frequency rank of each probe token per gender.
    pub probes: BTreeMap<String, BTreeMap<String, Option<usize>>>,
}

pub fn analyze(corpus: &AnnotatedCorpus, side: Side, top_k: usize, probes: &[String]) -> CmdResult<AnalysisReport> {
    let stats = gender_distribution(corpus)?;
    let mut top_tokens = BTreeMap::new();
    let mut probe_ranks: BTreeMap<String, BTreeMap<String, Option<usize>>> = BTreeMap::new();
    for g in [Gender::Male, Gender::Female] {
        let table = frequency_rank(corpus, side, g);
        for p in probes {
            probe_ranks.entry(p.clone()).or_default().insert(g.as_str().to_string(), table.rank_of(&p.to_lowercase()));
        }
        top_tokens.insert(g.as_str().to_string(), table.ranked.into_iter().take(top_k).collect());
    }
    Ok(AnalysisReport { stats, side, top_tokens, probes: probe_ranks })
}

/// Age histogram as CSV with `bucket,male_pct,female_pct` columns.
pub fn analysis_csv(corpus: &AnnotatedCorpus, bucket_width: u32) -> String {
    histogram_csv(&age_gender_histogram(corpus, bucket_width))
}

/// `codes` → `codes.json`
pub fn sidecar_path(codes: &Path) -> PathBuf {
    let mut s = codes.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn learn_bpe_files(inputs: &[PathBuf], merges: usize, protected: &BTreeSet<String>) -> CmdResult<BpeModel> {
    let mut lines = Vec::new();
    for p in inputs {
        lines.extend(read_lines(p).map_err(with_path(p))?);
    }
    Ok(learn_bpe(&lines, merges, protected)?)
}

/// Writes the merge file and its sidecar.
pub fn save_bpe(model: &BpeModel, codes: &Path) -> CmdResult<()> {
    let mut w = BufWriter::new(fs::File::create(codes).map_err(with_path(codes))?);
    model.write_merges(&mut w)?;
    std::io::Write::flush(&mut w)?;
    fs::write(sidecar_path(codes), serde_json::to_string_pretty(&model.sidecar())? + "\n")?;
    Ok(())
}

/// Reads a merge file, with the sidecar when one is present.
pub fn load_bpe(codes: &Path) -> CmdResult<BpeModel> {
    let sidecar: Option<BpeSidecar> = match fs::read_to_string(sidecar_path(codes)) {
        Ok(text) => Some(serde_json::from_str(&text)?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(e.into()),
    };
    let f = fs::File::open(codes).map_err(with_path(codes))?;
    BpeModel::read(BufReader::new(f), sidecar.as_ref()).map_err(with_path(codes))
}

pub fn apply_bpe_file(model: &BpeModel, input: &Path, output: &Path) -> CmdResult<usize> {
    let lines: Vec<String> = read_lines(input).map_err(with_path(input))?.iter().map(|l| model.apply(l)).collect();
    write_lines(output, &lines)?;
    Ok(lines.len())
}

/// Joins subwords in model output. A continuation marker left at the end
/// of a line, which only a truncated decode produces, is dropped.
pub fn undo_bpe_lenient(line: &str) -> String {
    let joined = line.replace("@@ ", "");
    joined.strip_suffix("@@").map(str::to_string).unwrap_or(joined)
}

pub fn undo_bpe_file(input: &Path, output: &Path) -> CmdResult<usize> {
    let lines: Vec<String> = read_lines(input).map_err(with_path(input))?.iter().map(|l| undo_bpe_lenient(l)).collect();
    write_lines(output, &lines)?;
    Ok(lines.len())
}

pub fn save_model(model: &Seq2SeqModel, path: &Path) -> CmdResult<()> {
    let mut w = BufWriter::new(fs::File::create(path).map_err(with_path(path))?);
    write_checkpoint(model, &mut w)?;
    std::io::Write::flush(&mut w)?;
    Ok(())
}

pub fn load_model(path: &Path) -> CmdResult<Seq2SeqModel> {
    let f = fs::File::open(path).map_err(with_path(path))?;
    read_checkpoint(BufReader::new(f)).map_err(with_path(path))
}

pub fn translate_file(model: &Seq2SeqModel, input: &Path, output: &Path) -> CmdResult<usize> {
    let lines = read_lines(input).map_err(with_path(input))?;
    let hyps = translate_lines(model, &lines);
    write_lines(output, &hyps)?;
    Ok(hyps.len())
}

/// Scores BASE and TAG hypotheses for each named set.
///
/// References are `<refs_dir>/<set>.tgt`, hypotheses `<dir>/<set>.hyp`.
/// Sets whose reference file is empty are skipped.
pub fn report_from_dirs(refs_dir: &Path, base_dir: &Path, tag_dir: &Path, sets: &[String], opts: &SuiteOptions) -> CmdResult<SuiteReport> {
    let mut outputs = Vec::new();
    for name in sets {
        let read = |dir: &Path, ext: &str| {
            let p = dir.join(format!("{name}.{ext}"));
            read_lines(&p).map_err(with_path(&p))
        };
        let refs = read(refs_dir, "tgt")?;
        if refs.is_empty() {
            continue;
        }
        outputs.push(TestSetOutputs { name: name.clone(), refs, base: read(base_dir, "hyp")?, tagged: read(tag_dir, "hyp")? });
    }
    Ok(evaluate_suite(&outputs, opts)?)
}
