use std::collections::HashMap;
use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use super::EvalError;

pub const MAX_ORDER: usize = 4;

/// Sufficient statistics of one hypothesis/reference pair.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: [u64; MAX_ORDER],
    pub totals: [u64; MAX_ORDER],
    pub hyp_len: u64,
    pub ref_len: u64,
}

impl AddAssign for BleuStats {
    fn add_assign(&mut self, o: Self) {
        for n in 0..MAX_ORDER {
            self.matches[n] += o.matches[n];
            self.totals[n] += o.totals[n];
        }
        self.hyp_len += o.hyp_len;
        self.ref_len += o.ref_len;
    }
}

fn ngram_counts<'a>(toks: &'a [&'a str], n: usize) -> HashMap<&'a [&'a str], u64> {
    let mut m = HashMap::new();
    if toks.len() >= n {
        for w in toks.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

impl BleuStats {
    /// Clipped n-gram matches of `hyp` against a single reference.
    pub fn from_tokens(hyp: &[&str], reference: &[&str]) -> Self {
        let mut s = BleuStats { hyp_len: hyp.len() as u64, ref_len: reference.len() as u64, ..Default::default() };
        for n in 1..=MAX_ORDER {
            let h = ngram_counts(hyp, n);
            let r = ngram_counts(reference, n);
            s.totals[n - 1] = hyp.len().saturating_sub(n - 1) as u64;
            s.matches[n - 1] = h.iter().map(|(g, c)| (*c).min(r.get(g).copied().unwrap_or(0))).sum();
        }
        s
    }

    pub fn from_lines(hyp: &str, reference: &str, lowercase: bool) -> Self {
        if lowercase {
            let (h, r) = (hyp.to_lowercase(), reference.to_lowercase());
            Self::from_tokens(&h.split_whitespace().collect::<Vec<_>>(), &r.split_whitespace().collect::<Vec<_>>())
        } else {
            Self::from_tokens(&hyp.split_whitespace().collect::<Vec<_>>(), &reference.split_whitespace().collect::<Vec<_>>())
        }
    }

    pub fn report(&self) -> BleuReport {
        let mut precisions = [0.0; MAX_ORDER];
        for n in 0..MAX_ORDER {
            precisions[n] = if self.totals[n] == 0 { 0.0 } else { self.matches[n] as f64 / self.totals[n] as f64 };
        }
        let brevity_penalty = if self.hyp_len > self.ref_len {
            1.0
        } else if self.hyp_len == 0 {
            0.0
        } else {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        };
        let score = if precisions.iter().any(|&p| p == 0.0) {
            0.0
        } else {
            let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_ORDER as f64;
            100.0 * brevity_penalty * log_mean.exp()
        };
        BleuReport { precisions, brevity_penalty, hyp_len: self.hyp_len, ref_len: self.ref_len, score }
    }

    /// Score only, skipping the report allocation.
    pub fn score(&self) -> f64 {
        self.report().score
    }
}

/// Unsmoothed single-reference corpus BLEU.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BleuReport {
    pub precisions: [f64; MAX_ORDER],
    /// 0 only when the hypothesis side is empty.
    pub brevity_penalty: f64,
    pub hyp_len: u64,
    pub ref_len: u64,
    pub score: f64,
}

pub(crate) fn sentence_stats<H: AsRef<str>, R: AsRef<str>>(hyps: &[H], refs: &[R], lowercase: bool) -> Result<Vec<BleuStats>, EvalError> {
    if hyps.len() != refs.len() {
        return Err(EvalError::LengthMismatch { hyp: hyps.len(), reference: refs.len() });
    }
    if hyps.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(hyps.iter().zip(refs).map(|(h, r)| BleuStats::from_lines(h.as_ref(), r.as_ref(), lowercase)).collect())
}

/// Corpus BLEU over line-aligned hypothesis and reference sentences.
pub fn corpus_bleu<H: AsRef<str>, R: AsRef<str>>(hyps: &[H], refs: &[R], lowercase: bool) -> Result<BleuReport, EvalError> {
    let mut total = BleuStats::default();
    for s in sentence_stats(hyps, refs, lowercase)? {
        total += s;
    }
    Ok(total.report())
}
