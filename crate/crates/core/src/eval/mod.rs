//! Corpus BLEU and significance testing, plus the BASE-vs-TAG report table.

mod bleu;
mod significance;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bleu::{corpus_bleu, BleuReport, BleuStats, MAX_ORDER};
pub use significance::{
    approx_randomization, approx_randomization_stats, paired_bootstrap, paired_bootstrap_stats, SignificanceReport, TestKind,
    MIN_TRIALS,
};

/// Differences below this p-value are starred in reports.
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{hyp} hypothesis lines but {reference} reference lines")]
    LengthMismatch { hyp: usize, reference: usize },
    #[error("nothing to score")]
    Empty,
    #[error("{trials} trials requested, at least {min} required")]
    TooFewTrials { trials: usize, min: usize },
    #[error("test set {0:?}: {1}")]
    InSet(String, Box<EvalError>),
}

/// System outputs for one named test set.
#[derive(Clone, Debug)]
pub struct TestSetOutputs {
    pub name: String,
    pub refs: Vec<String>,
    pub base: Vec<String>,
    pub tagged: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteOptions {
    pub trials: usize,
    pub seed: u64,
    pub lowercase: bool,
    pub test: TestKind,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions { trials: 10_000, seed: 1, lowercase: false, test: TestKind::ApproximateRandomization }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub test_set: String,
    pub base: BleuReport,
    pub tagged: BleuReport,
    /// System a is TAG, system b is BASE.
    pub significance: SignificanceReport,
    pub significant: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub rows: Vec<SuiteRow>,
}

/// BLEU for BASE and TAG on every test set plus a pairwise significance test.
pub fn evaluate_suite(sets: &[TestSetOutputs], opts: &SuiteOptions) -> Result<SuiteReport, EvalError> {
    let mut rows = Vec::with_capacity(sets.len());
    for set in sets {
        let wrap = |e| EvalError::InSet(set.name.clone(), Box::new(e));
        let base = corpus_bleu(&set.base, &set.refs, opts.lowercase).map_err(wrap)?;
        let tagged = corpus_bleu(&set.tagged, &set.refs, opts.lowercase).map_err(wrap)?;
        let significance = match opts.test {
            TestKind::ApproximateRandomization => approx_randomization(&set.tagged, &set.base, &set.refs, opts.trials, opts.seed, opts.lowercase),
            TestKind::PairedBootstrap => paired_bootstrap(&set.tagged, &set.base, &set.refs, opts.trials, opts.seed, opts.lowercase),
        }
        .map_err(wrap)?;
        let significant = significance.p_value < SIGNIFICANCE_LEVEL;
        rows.push(SuiteRow { test_set: set.name.clone(), base, tagged, significance, significant });
    }
    Ok(SuiteReport { rows })
}

impl SuiteReport {
    /// Plain-text table: one row per test set, BASE and TAG BLEU, a `*` on
    /// TAG when the difference is significant.
    pub fn to_table(&self) -> String {
        let width = self.rows.iter().map(|r| r.test_set.len()).max().unwrap_or(0).max("Test set".len());
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>8}  {:>8}  {:>7}", "Test set", "BASE", "TAG", "p");
        for r in &self.rows {
            let tag = format!("{:.2}{}", r.tagged.score, if r.significant { "*" } else { " " });
            let _ = writeln!(out, "{:<width$}  {:>8.2}  {:>8}  {:>7.4}", r.test_set, r.base.score, tag, r.significance.p_value);
        }
        let _ = writeln!(out, "* p < {SIGNIFICANCE_LEVEL}");
        out
    }
}
