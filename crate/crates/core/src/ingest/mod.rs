//! Speaker-annotated parallel corpora from Europarl session files.
//!
//! Source and target session files with the same name are parsed into
//! speaker blocks, paired block by block and sentence by sentence, and each
//! pair is annotated with the speaker resolved against an MEP table.

mod session;
mod speaker;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use session::{parse_session_date, parse_session_file, SpeakerBlock};
pub use speaker::{normalize_name, resolve_speaker, Gender, SpeakerRecord, SpeakerTable, TABLE_HEADER};

pub const MIN_AGE: u32 = 15;
pub const MAX_AGE: u32 = 110;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{file}:{line}: malformed markup: {reason}")]
    MalformedMarkup { file: String, line: usize, reason: String },
    #[error("cannot parse a session date from filename {0:?}")]
    UnparseableFilename(String),
    #[error("age {age} outside [{MIN_AGE}, {MAX_AGE}] (born {dob}, session {session})")]
    OutOfRange { age: i64, dob: NaiveDate, session: NaiveDate },
    #[error("duplicate speaker name key {key:?} (mep_id {first} and {second})")]
    DuplicateNameKey { key: String, first: String, second: String },
    #[error("speaker table header must be {TABLE_HEADER:?}, found {0:?}")]
    BadTableHeader(String),
    #[error("speaker table line {line}: {reason}")]
    BadTableRow { line: usize, reason: String },
    #[error("unrecognised gender code {0:?}")]
    BadGender(String),
    #[error("corpus line {line}: {source}")]
    BadRecord { line: usize, source: serde_json::Error },
    #[error("corpus mixes language pairs {0:?} and {1:?}")]
    MixedLangPair(String, String),
    #[error("sentence pair has an empty side")]
    EmptySentence,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Whole years completed between `dob` and `session_date`.
pub fn compute_age(dob: NaiveDate, session_date: NaiveDate) -> Result<u32, IngestError> {
    let mut age = i64::from(session_date.year() - dob.year());
    if (session_date.month(), session_date.day()) < (dob.month(), dob.day()) {
        age -= 1;
    }
    if age < i64::from(MIN_AGE) || age > i64::from(MAX_AGE) {
        return Err(IngestError::OutOfRange { age, dob, session: session_date });
    }
    Ok(age as u32)
}

/// One aligned sentence pair with its speaker annotation.
#[derive(Clone, Debug, PartialEq)]
pub struct SentencePair {
    pub src: String,
    pub tgt: String,
    pub lang_pair: String,
    pub session_date: Option<NaiveDate>,
    pub speaker_name_raw: String,
    pub speaker: Option<SpeakerRecord>,
    pub age_years: Option<u32>,
}

impl SentencePair {
    /// Builds a pair and derives the speaker age from the session date.
    ///
    /// A date of birth that yields an implausible age is treated as a
    /// metadata error: the speaker is dropped and the error returned
    /// alongside.
    pub fn annotated(
        src: impl Into<String>,
        tgt: impl Into<String>,
        lang_pair: impl Into<String>,
        session_date: Option<NaiveDate>,
        speaker_name_raw: impl Into<String>,
        speaker: Option<SpeakerRecord>,
    ) -> Result<(Self, Option<IngestError>), IngestError> {
        let src = src.into();
        let tgt = tgt.into();
        if src.trim().is_empty() || tgt.trim().is_empty() {
            return Err(IngestError::EmptySentence);
        }
        let mut pair = SentencePair {
            src,
            tgt,
            lang_pair: lang_pair.into(),
            session_date,
            speaker_name_raw: speaker_name_raw.into(),
            speaker,
            age_years: None,
        };
        let mut metadata_error = None;
        if let (Some(dob), Some(session)) = (pair.speaker.as_ref().and_then(|s| s.date_of_birth), session_date) {
            match compute_age(dob, session) {
                Ok(age) => pair.age_years = Some(age),
                Err(e) => {
                    pair.speaker = None;
                    metadata_error = Some(e);
                }
            }
        }
        Ok((pair, metadata_error))
    }

    /// Convenience constructor for synthetic data with a known speaker gender.
    pub fn with_gender(src: impl Into<String>, tgt: impl Into<String>, lang_pair: &str, gender: Gender) -> Self {
        SentencePair {
            src: src.into(),
            tgt: tgt.into(),
            lang_pair: lang_pair.to_string(),
            session_date: None,
            speaker_name_raw: String::new(),
            speaker: Some(SpeakerRecord::new("", "", gender, None, None)),
            age_years: None,
        }
    }

    /// Speaker gender, or `None` when the speaker is unresolved.
    pub fn gender(&self) -> Option<Gender> {
        self.speaker.as_ref().map(|s| s.gender)
    }

    pub fn has_known_gender(&self) -> bool {
        self.gender().is_some_and(Gender::is_known)
    }

    pub fn src_tokens(&self) -> impl Iterator<Item = &str> {
        self.src.split_whitespace()
    }

    pub fn tgt_tokens(&self) -> impl Iterator<Item = &str> {
        self.tgt.split_whitespace()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub file: String,
    pub message: String,
}

/// An ordered collection of annotated pairs sharing one language pair.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AnnotatedCorpus {
    pub pairs: Vec<SentencePair>,
    pub lang_pair: String,
    /// Pairs contributed per source filename.
    pub provenance: BTreeMap<String, usize>,
    pub unresolved_count: usize,
    pub diagnostics: Vec<Diagnostic>,
}

impl AnnotatedCorpus {
    pub fn from_pairs(lang_pair: impl Into<String>, pairs: Vec<SentencePair>) -> Self {
        let unresolved_count = pairs.iter().filter(|p| p.speaker.is_none()).count();
        AnnotatedCorpus {
            pairs,
            lang_pair: lang_pair.into(),
            provenance: BTreeMap::new(),
            unresolved_count,
            diagnostics: Vec::new(),
        }
    }

    /// Sub-corpus holding the pairs at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> AnnotatedCorpus {
        AnnotatedCorpus::from_pairs(self.lang_pair.clone(), indices.iter().map(|&i| self.pairs[i].clone()).collect())
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn stats(&self) -> CorpusCounts {
        let mut c = CorpusCounts {
            lang_pair: self.lang_pair.clone(),
            total_pairs: self.pairs.len(),
            unresolved_count: self.unresolved_count,
            provenance: self.provenance.clone(),
            diagnostics: self.diagnostics.len(),
            ..CorpusCounts::default()
        };
        for p in &self.pairs {
            match p.gender() {
                Some(Gender::Male) => c.male += 1,
                Some(Gender::Female) => c.female += 1,
                Some(Gender::Unknown) => c.unknown_gender += 1,
                None => {}
            }
            if p.age_years.is_some() {
                c.with_age += 1;
            }
        }
        c
    }

    /// Writes one JSON object per pair.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), IngestError> {
        for p in &self.pairs {
            serde_json::to_writer(&mut out, &PairRecord::from(p))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Reads a corpus written by [`AnnotatedCorpus::write_jsonl`].
    ///
    /// The JSONL form carries only `mep_id` and `gender` for a speaker, so
    /// reloaded speaker records have no name, date of birth or country.
    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self, IngestError> {
        let mut pairs = Vec::new();
        let mut lang_pair: Option<String> = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: PairRecord =
                serde_json::from_str(&line).map_err(|source| IngestError::BadRecord { line: i + 1, source })?;
            match &lang_pair {
                None => lang_pair = Some(rec.lang_pair.clone()),
                Some(lp) if *lp != rec.lang_pair => {
                    return Err(IngestError::MixedLangPair(lp.clone(), rec.lang_pair));
                }
                _ => {}
            }
            pairs.push(rec.into_pair()?);
        }
        Ok(AnnotatedCorpus::from_pairs(lang_pair.unwrap_or_default(), pairs))
    }
}

/// Summary counts written next to a JSONL corpus.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusCounts {
    pub lang_pair: String,
    pub total_pairs: usize,
    pub unresolved_count: usize,
    pub male: usize,
    pub female: usize,
    pub unknown_gender: usize,
    pub with_age: usize,
    pub diagnostics: usize,
    pub provenance: BTreeMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct PairRecord {
    src: String,
    tgt: String,
    lang_pair: String,
    session_date: Option<NaiveDate>,
    speaker_name_raw: String,
    mep_id: Option<String>,
    gender: Option<Gender>,
    age: Option<u32>,
}

impl From<&SentencePair> for PairRecord {
    fn from(p: &SentencePair) -> Self {
        PairRecord {
            src: p.src.clone(),
            tgt: p.tgt.clone(),
            lang_pair: p.lang_pair.clone(),
            session_date: p.session_date,
            speaker_name_raw: p.speaker_name_raw.clone(),
            mep_id: p.speaker.as_ref().map(|s| s.mep_id.clone()),
            gender: p.gender(),
            age: p.age_years,
        }
    }
}

impl PairRecord {
    fn into_pair(self) -> Result<SentencePair, IngestError> {
        if self.src.trim().is_empty() || self.tgt.trim().is_empty() {
            return Err(IngestError::EmptySentence);
        }
        let speaker = match (self.mep_id, self.gender) {
            (None, None) => None,
            (id, g) => Some(SpeakerRecord::new(id.unwrap_or_default(), "", g.unwrap_or(Gender::Unknown), None, None)),
        };
        Ok(SentencePair {
            src: self.src,
            tgt: self.tgt,
            lang_pair: self.lang_pair,
            session_date: self.session_date,
            speaker_name_raw: self.speaker_name_raw,
            speaker,
            age_years: self.age,
        })
    }
}

/// A named session file and its contents.
#[derive(Clone, Debug)]
pub struct SessionFile {
    pub name: String,
    pub text: String,
}

impl SessionFile {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Self {
        SessionFile { name: name.into(), text: text.into() }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct AnnotateOptions {
    /// Allow edit-distance matching of speaker names when no exact match exists.
    pub fuzzy: bool,
}

struct FileResult {
    name: String,
    pairs: Vec<SentencePair>,
    diagnostics: Vec<Diagnostic>,
}

fn annotate_file(
    src: &SessionFile,
    tgt: &SessionFile,
    table: &SpeakerTable,
    lang_pair: &str,
    opts: AnnotateOptions,
) -> FileResult {
    let mut diagnostics = Vec::new();
    let mut diag = |message: String| {
        log::warn!("{}: {}", src.name, message);
        diagnostics.push(Diagnostic { file: src.name.clone(), message });
    };
    let mut pairs = Vec::new();

    let parsed = parse_session_file(&src.text, &src.name).and_then(|s| Ok((s, parse_session_file(&tgt.text, &tgt.name)?)));
    let (src_blocks, tgt_blocks) = match parsed {
        Ok(b) => b,
        Err(e) => {
            diag(format!("skipped: {e}"));
            return FileResult { name: src.name.clone(), pairs, diagnostics };
        }
    };
    if src_blocks.len() != tgt_blocks.len() {
        diag(format!(
            "skipped: AlignmentMismatch, {} source blocks vs {} target blocks",
            src_blocks.len(),
            tgt_blocks.len()
        ));
        return FileResult { name: src.name.clone(), pairs, diagnostics };
    }
    let session_date = match parse_session_date(&src.name) {
        Ok(d) => Some(d),
        Err(e) => {
            diag(e.to_string());
            None
        }
    };

    for (bi, (sb, tb)) in src_blocks.iter().zip(&tgt_blocks).enumerate() {
        if sb.speaker_name_raw.is_empty() {
            continue;
        }
        let s: Vec<&str> = sb.sentences().collect();
        let t: Vec<&str> = tb.sentences().collect();
        if s.len() != t.len() {
            diag(format!("block {bi} dropped: AlignmentMismatch, {} vs {} sentences", s.len(), t.len()));
            continue;
        }
        let speaker = table.resolve(&sb.speaker_name_raw, opts.fuzzy).cloned();
        for (src_line, tgt_line) in s.into_iter().zip(t) {
            match SentencePair::annotated(src_line, tgt_line, lang_pair, session_date, &sb.speaker_name_raw, speaker.clone()) {
                Ok((pair, None)) => pairs.push(pair),
                Ok((pair, Some(e))) => {
                    diag(format!("metadata error for {:?}: {e}", sb.speaker_name_raw));
                    pairs.push(pair);
                }
                Err(e) => diag(format!("block {bi}: {e}")),
            }
        }
    }
    FileResult { name: src.name.clone(), pairs, diagnostics }
}

fn base_name(name: &str) -> &str {
    name.rsplit(['/', '\\']).next().unwrap_or(name)
}

/// Pairs source and target session files by base name and annotates every
/// aligned sentence.
///
/// Files are processed in parallel and merged in filename order. Unresolved
/// speakers and unknown genders stay in the corpus; malformed files and
/// misaligned blocks are skipped and reported in `diagnostics`.
pub fn annotate_corpus(
    src_files: &[SessionFile],
    tgt_files: &[SessionFile],
    table: &SpeakerTable,
    lang_pair: &str,
    opts: AnnotateOptions,
) -> AnnotatedCorpus {
    let tgt_by_name: BTreeMap<&str, &SessionFile> = tgt_files.iter().map(|f| (base_name(&f.name), f)).collect();
    let mut sources: Vec<&SessionFile> = src_files.iter().collect();
    sources.sort_by(|a, b| base_name(&a.name).cmp(base_name(&b.name)));

    let mut missing = Vec::new();
    let jobs: Vec<(&SessionFile, &SessionFile)> = sources
        .into_iter()
        .filter_map(|s| match tgt_by_name.get(base_name(&s.name)) {
            Some(t) => Some((s, *t)),
            None => {
                missing.push(Diagnostic { file: s.name.clone(), message: "no target-side file".into() });
                None
            }
        })
        .collect();

    let results: Vec<FileResult> = jobs.par_iter().map(|(s, t)| annotate_file(s, t, table, lang_pair, opts)).collect();

    let mut corpus = AnnotatedCorpus { lang_pair: lang_pair.to_string(), diagnostics: missing, ..Default::default() };
    for r in results {
        if !r.pairs.is_empty() {
            corpus.provenance.insert(base_name(&r.name).to_string(), r.pairs.len());
        }
        corpus.diagnostics.extend(r.diagnostics);
        corpus.pairs.extend(r.pairs);
    }
    corpus.unresolved_count = corpus.pairs.iter().filter(|p| p.speaker.is_none()).count();
    corpus
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    #[test]
    fn age_examples() {
        assert_eq!(compute_age(d(1950, 6, 1), d(2000, 5, 31)).unwrap(), 49);
        assert_eq!(compute_age(d(1950, 6, 1), d(2000, 6, 1)).unwrap(), 50);
        assert!(matches!(compute_age(d(1990, 1, 1), d(1996, 1, 1)), Err(IngestError::OutOfRange { age: 6, .. })));
        assert!(compute_age(d(1880, 1, 1), d(1996, 1, 1)).is_err());
        assert_eq!(compute_age(d(1952, 2, 29), d(2001, 2, 28)).unwrap(), 48);
        assert_eq!(compute_age(d(1952, 2, 29), d(2001, 3, 1)).unwrap(), 49);
    }

    #[test]
    fn implausible_age_drops_speaker() {
        let rec = SpeakerRecord::new("9", "Kid, A.", Gender::Female, Some(d(1995, 1, 1)), None);
        let (pair, err) = SentencePair::annotated("a", "b", "EN-FR", Some(d(2000, 1, 1)), "Kid, A.", Some(rec)).unwrap();
        assert!(err.is_some());
        assert!(pair.speaker.is_none());
        assert!(pair.age_years.is_none());
    }

    #[test]
    fn empty_side_rejected() {
        assert!(matches!(SentencePair::annotated(" ", "b", "EN-FR", None, "", None), Err(IngestError::EmptySentence)));
    }

    #[test]
    fn jsonl_round_trip_keeps_fields() {
        let rec = SpeakerRecord::new("42", "Evans, R.", Gender::Male, Some(d(1950, 1, 1)), None);
        let (p1, _) = SentencePair::annotated("Hello .", "Bonjour .", "EN-FR", Some(d(2000, 1, 17)), "Evans, R.", Some(rec)).unwrap();
        let (p2, _) = SentencePair::annotated("x", "y", "EN-FR", None, "President", None).unwrap();
        let corpus = AnnotatedCorpus::from_pairs("EN-FR", vec![p1, p2]);
        let mut buf = Vec::new();
        corpus.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["session_date"], "2000-01-17");
        assert_eq!(first["gender"], "MALE");
        assert_eq!(first["age"], 50);
        assert_eq!(first["mep_id"], "42");
        let second: serde_json::Value = serde_json::from_str(text.lines().nth(1).unwrap()).unwrap();
        assert!(second["mep_id"].is_null() && second["gender"].is_null() && second["age"].is_null());

        let back = AnnotatedCorpus::read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back.unresolved_count, 1);
        assert_eq!(back.pairs[0].age_years, Some(50));
        assert_eq!(back.pairs[0].gender(), Some(Gender::Male));
        let mut again = Vec::new();
        back.write_jsonl(&mut again).unwrap();
        assert_eq!(again, buf);
    }
}
