//! Byte-pair-encoding subword segmentation.
//!
//! Learning splits every word into characters, marks the last one with
//! [`END_OF_WORD`] and repeatedly merges the most frequent adjacent pair.
//! Application replays the merges by rank; every subword except the last of
//! a word carries the continuation marker (`"@@"`), so [`undo_bpe`] only has
//! to delete `"@@ "`.
//!
//! Tokens listed as protected (the gender tags) are left out of learning and
//! copied verbatim on application.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const END_OF_WORD: &str = "</w>";
pub const CONTINUATION_MARKER: &str = "@@";
pub const FORMAT_VERSION: u32 = 1;
/// Merge operations used for the full-size Europarl systems.
pub const FULL_SCALE_MERGES: usize = 89_500;

#[derive(Debug, Error)]
pub enum BpeError {
    #[error("cannot learn BPE from an empty corpus")]
    EmptyCorpus,
    #[error("line ends with a dangling continuation marker")]
    DanglingMarker,
    #[error("merge file line {line}: {reason}")]
    BadMergeFile { line: usize, reason: String },
    #[error("duplicate merge {0:?} {1:?}")]
    DuplicateMerge(String, String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Learned merge rules plus the tokens that must never be segmented.
#[derive(Clone, Debug)]
pub struct BpeModel {
    merges: Vec<(String, String)>,
    protected: BTreeSet<String>,
    ranks: HashMap<String, HashMap<String, usize>>,
}

impl PartialEq for BpeModel {
    fn eq(&self, other: &Self) -> bool {
        self.merges == other.merges && self.protected == other.protected
    }
}

/// Sidecar JSON stored next to a merge file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BpeSidecar {
    pub version: u32,
    pub continuation_marker: String,
    pub num_merges: usize,
    pub protected_tokens: BTreeSet<String>,
}

impl BpeModel {
    pub fn new(merges: Vec<(String, String)>, protected: BTreeSet<String>) -> Result<Self, BpeError> {
        let mut ranks: HashMap<String, HashMap<String, usize>> = HashMap::new();
        for (i, (l, r)) in merges.iter().enumerate() {
            if ranks.entry(l.clone()).or_default().insert(r.clone(), i).is_some() {
                return Err(BpeError::DuplicateMerge(l.clone(), r.clone()));
            }
        }
        Ok(BpeModel { merges, protected, ranks })
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn num_merges(&self) -> usize {
        self.merges.len()
    }

    pub fn protected_tokens(&self) -> &BTreeSet<String> {
        &self.protected
    }

    pub fn continuation_marker(&self) -> &'static str {
        CONTINUATION_MARKER
    }

    pub fn version(&self) -> u32 {
        FORMAT_VERSION
    }

    fn rank(&self, l: &str, r: &str) -> Option<usize> {
        self.ranks.get(l)?.get(r).copied()
    }

    /// Subword units of a single word, with [`END_OF_WORD`] still attached to the last one.
    pub fn segment_word(&self, word: &str) -> Vec<String> {
        let mut syms = word_symbols(word);
        loop {
            let best = syms
                .windows(2)
                .enumerate()
                .filter_map(|(i, w)| self.rank(&w[0], &w[1]).map(|r| (r, i)))
                .min();
            let Some((_, at)) = best else { break };
            let (l, r) = (syms[at].clone(), syms[at + 1].clone());
            syms = merge_pair(&syms, &l, &r);
        }
        syms
    }

    /// Segments every whitespace token of `line`, joining with single spaces.
    pub fn apply(&self, line: &str) -> String {
        let mut out: Vec<String> = Vec::new();
        for tok in line.split_whitespace() {
            if self.protected.contains(tok) {
                out.push(tok.to_string());
                continue;
            }
            let segs = self.segment_word(tok);
            let last = segs.len() - 1;
            for (i, s) in segs.into_iter().enumerate() {
                if i == last {
                    out.push(s.strip_suffix(END_OF_WORD).map(str::to_string).unwrap_or(s));
                } else {
                    out.push(s + CONTINUATION_MARKER);
                }
            }
        }
        out.join(" ")
    }

    /// Writes the merge file: a `#version: 1` header, then `left right` per line.
    pub fn write_merges<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "#version: {FORMAT_VERSION}")?;
        for (l, r) in &self.merges {
            writeln!(out, "{l} {r}")?;
        }
        Ok(())
    }

    pub fn sidecar(&self) -> BpeSidecar {
        BpeSidecar {
            version: FORMAT_VERSION,
            continuation_marker: CONTINUATION_MARKER.to_string(),
            num_merges: self.merges.len(),
            protected_tokens: self.protected.clone(),
        }
    }

    /// Reads a merge file and the protected-token set from its sidecar.
    pub fn read<R: BufRead>(merges: R, sidecar: Option<&BpeSidecar>) -> Result<Self, BpeError> {
        let mut lines = merges.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header != format!("#version: {FORMAT_VERSION}") {
            return Err(BpeError::BadMergeFile { line: 1, reason: format!("expected version header, found {header:?}") });
        }
        let mut list = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(l), Some(r), None) if !l.is_empty() && !r.is_empty() => list.push((l.to_string(), r.to_string())),
                _ => return Err(BpeError::BadMergeFile { line: i + 2, reason: format!("expected `left right`, found {line:?}") }),
            }
        }
        let protected = sidecar.map(|s| s.protected_tokens.clone()).unwrap_or_default();
        BpeModel::new(list, protected)
    }
}

fn word_symbols(word: &str) -> Vec<String> {
    let mut syms: Vec<String> = word.chars().map(String::from).collect();
    if let Some(last) = syms.last_mut() {
        last.push_str(END_OF_WORD);
    }
    syms
}

fn merge_pair(syms: &[String], l: &str, r: &str) -> Vec<String> {
    let mut out = Vec::with_capacity(syms.len());
    let mut i = 0;
    while i < syms.len() {
        if i + 1 < syms.len() && syms[i] == l && syms[i + 1] == r {
            out.push(format!("{l}{r}"));
            i += 2;
        } else {
            out.push(syms[i].clone());
            i += 1;
        }
    }
    out
}

/// Interned symbol state for learning.
struct Learner {
    symbols: Vec<String>,
    ids: HashMap<String, u32>,
    words: Vec<(Vec<u32>, i64)>,
    pair_counts: HashMap<(u32, u32), i64>,
    where_: HashMap<(u32, u32), HashSet<usize>>,
}

impl Learner {
    fn intern(&mut self, s: &str) -> u32 {
        if let Some(&id) = self.ids.get(s) {
            return id;
        }
        let id = self.symbols.len() as u32;
        self.symbols.push(s.to_string());
        self.ids.insert(s.to_string(), id);
        id
    }

    fn add_word_pairs(&mut self, w: usize, sign: i64, touched: &mut HashSet<(u32, u32)>) {
        let (syms, freq) = &self.words[w];
        for p in syms.windows(2) {
            let key = (p[0], p[1]);
            *self.pair_counts.entry(key).or_default() += sign * freq;
            if sign > 0 {
                self.where_.entry(key).or_default().insert(w);
            }
            touched.insert(key);
        }
    }

    fn heap_entry(&self, key: (u32, u32)) -> (i64, Reverse<(String, String)>, (u32, u32)) {
        let count = self.pair_counts.get(&key).copied().unwrap_or(0);
        (count, Reverse((self.symbols[key.0 as usize].clone(), self.symbols[key.1 as usize].clone())), key)
    }
}

/// Learns up to `num_merges` merges from whitespace-tokenized lines.
///
/// The most frequent pair wins, ties going to the lexicographically smallest
/// `(left, right)`. Learning stops early once no pair occurs twice.
pub fn learn_bpe<S: AsRef<str>>(corpus_lines: &[S], num_merges: usize, protected: &BTreeSet<String>) -> Result<BpeModel, BpeError> {
    if corpus_lines.iter().all(|l| l.as_ref().trim().is_empty()) {
        return Err(BpeError::EmptyCorpus);
    }
    let mut census: HashMap<&str, i64> = HashMap::new();
    for line in corpus_lines {
        for tok in line.as_ref().split_whitespace() {
            if !protected.contains(tok) {
                *census.entry(tok).or_default() += 1;
            }
        }
    }
    let mut vocab: Vec<(&str, i64)> = census.into_iter().collect();
    vocab.sort_unstable();

    let mut learner = Learner { symbols: Vec::new(), ids: HashMap::new(), words: Vec::new(), pair_counts: HashMap::new(), where_: HashMap::new() };
    for (word, freq) in vocab {
        let syms: Vec<u32> = word_symbols(word).iter().map(|s| learner.intern(s)).collect();
        learner.words.push((syms, freq));
    }
    let mut touched = HashSet::new();
    for w in 0..learner.words.len() {
        learner.add_word_pairs(w, 1, &mut touched);
    }
    let mut heap: BinaryHeap<_> = learner.pair_counts.keys().map(|&k| learner.heap_entry(k)).collect();

    let mut merges = Vec::new();
    while merges.len() < num_merges {
        let Some((count, Reverse((l, r)), key)) = heap.pop() else { break };
        if learner.pair_counts.get(&key).copied().unwrap_or(0) != count {
            continue;
        }
        if count < 2 {
            break;
        }
        let merged = learner.intern(&format!("{l}{r}"));
        let mut affected: Vec<usize> = learner.where_.remove(&key).unwrap_or_default().into_iter().collect();
        affected.sort_unstable();
        let mut touched = HashSet::new();
        for w in affected {
            let syms = &learner.words[w].0;
            if !syms.windows(2).any(|p| (p[0], p[1]) == key) {
                continue;
            }
            learner.add_word_pairs(w, -1, &mut touched);
            let old = std::mem::take(&mut learner.words[w].0);
            let mut new = Vec::with_capacity(old.len());
            let mut i = 0;
            while i < old.len() {
                if i + 1 < old.len() && (old[i], old[i + 1]) == key {
                    new.push(merged);
                    i += 2;
                } else {
                    new.push(old[i]);
                    i += 1;
                }
            }
            learner.words[w].0 = new;
            learner.add_word_pairs(w, 1, &mut touched);
        }
        learner.pair_counts.remove(&key);
        touched.remove(&key);
        let mut touched: Vec<_> = touched.into_iter().collect();
        touched.sort_unstable();
        for k in touched {
            if learner.pair_counts.get(&k).copied().unwrap_or(0) > 0 {
                heap.push(learner.heap_entry(k));
            }
        }
        merges.push((l, r));
    }
    BpeModel::new(merges, protected.clone())
}

/// Free-function form of [`BpeModel::apply`].
pub fn apply_bpe(model: &BpeModel, line: &str) -> String {
    model.apply(line)
}

/// Removes continuation markers, rejoining subwords.
pub fn undo_bpe(line: &str) -> Result<String, BpeError> {
    if line.trim_end().ends_with(CONTINUATION_MARKER) {
        return Err(BpeError::DanglingMarker);
    }
    Ok(line.replace("@@ ", ""))
}
