//! Descriptive corpus statistics: gender shares, age-by-gender histograms and
//! per-gender word frequency ranks.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{AnnotatedCorpus, Gender};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("corpus is empty")]
    EmptyCorpus,
}

/// Counts for one age bucket `[lo, lo + width)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketCounts {
    pub male: usize,
    pub female: usize,
}

impl BucketCounts {
    pub fn total(&self) -> usize {
        self.male + self.female
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total_pairs: usize,
    pub male_count: usize,
    pub female_count: usize,
    pub unknown_count: usize,
    /// Share of the known-gender pairs spoken by men; 0 when no gender is known.
    pub male_share: f64,
    pub female_share: f64,
    /// Unresolved speakers plus resolved speakers of unknown gender.
    pub unknown_share: f64,
    /// Keyed by labels such as `"50-60"`, ordered by bucket start.
    pub age_hist: BTreeMap<AgeBucket, BucketCounts>,
    /// Bucket total over all pairs in the corpus.
    pub bucket_shares: BTreeMap<AgeBucket, f64>,
}

/// A half-open age range, serialized as `"lo-hi"`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgeBucket {
    pub lo: u32,
    pub width: u32,
}

impl AgeBucket {
    pub fn of(age: u32, width: u32) -> Self {
        AgeBucket { lo: age / width * width, width }
    }

    pub fn contains(&self, age: u32) -> bool {
        age >= self.lo && age < self.lo + self.width
    }

    pub fn label(&self) -> String {
        format!("{}-{}", self.lo, self.lo + self.width)
    }
}

impl Serialize for AgeBucket {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.label())
    }
}

impl<'de> Deserialize<'de> for AgeBucket {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let (lo, hi) = s.split_once('-').ok_or_else(|| serde::de::Error::custom("bucket label must be lo-hi"))?;
        let lo: u32 = lo.parse().map_err(serde::de::Error::custom)?;
        let hi: u32 = hi.parse().map_err(serde::de::Error::custom)?;
        if hi <= lo {
            return Err(serde::de::Error::custom("empty bucket"));
        }
        Ok(AgeBucket { lo, width: hi - lo })
    }
}

pub const DEFAULT_BUCKET_WIDTH: u32 = 10;

fn share(n: usize, of: usize) -> f64 {
    if of == 0 {
        0.0
    } else {
        n as f64 / of as f64
    }
}

/// Male, female and unknown shares plus the decade histogram.
pub fn gender_distribution(corpus: &AnnotatedCorpus) -> Result<CorpusStats, AnalysisError> {
    if corpus.is_empty() {
        return Err(AnalysisError::EmptyCorpus);
    }
    let total = corpus.len();
    let (mut male, mut female) = (0usize, 0usize);
    for p in &corpus.pairs {
        match p.gender() {
            Some(Gender::Male) => male += 1,
            Some(Gender::Female) => female += 1,
            _ => {}
        }
    }
    let unknown = total - male - female;
    let age_hist = age_gender_histogram(corpus, DEFAULT_BUCKET_WIDTH);
    let bucket_shares = age_hist.iter().map(|(b, c)| (*b, c.total() as f64 / total as f64)).collect();
    let known = male + female;
    Ok(CorpusStats {
        total_pairs: total,
        male_count: male,
        female_count: female,
        unknown_count: unknown,
        male_share: share(male, known),
        female_share: share(female, known),
        unknown_share: share(unknown, total),
        age_hist,
        bucket_shares,
    })
}

/// Counts pairs with a known gender and an age into half-open buckets of
/// `bucket_width` years.
pub fn age_gender_histogram(corpus: &AnnotatedCorpus, bucket_width: u32) -> BTreeMap<AgeBucket, BucketCounts> {
    assert!(bucket_width > 0, "bucket width must be positive");
    let mut hist: BTreeMap<AgeBucket, BucketCounts> = BTreeMap::new();
    for p in &corpus.pairs {
        let (Some(age), Some(g)) = (p.age_years, p.gender()) else { continue };
        let entry = hist.entry(AgeBucket::of(age, bucket_width)).or_default();
        match g {
            Gender::Male => entry.male += 1,
            Gender::Female => entry.female += 1,
            Gender::Unknown => {}
        }
    }
    hist.retain(|_, c| c.total() > 0);
    hist
}

/// Figure-style CSV: one row per bucket with the male and female percentage
/// within that bucket.
pub fn histogram_csv(hist: &BTreeMap<AgeBucket, BucketCounts>) -> String {
    let mut out = String::from("bucket,male_pct,female_pct\n");
    for (b, c) in hist {
        let t = c.total() as f64;
        let _ = writeln!(out, "{},{:.2},{:.2}", b.label(), 100.0 * c.male as f64 / t, 100.0 * c.female as f64 / t);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Src,
    Tgt,
}

/// Token frequencies for one gender, most frequent first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub gender: Gender,
    pub ranked: Vec<(String, usize)>,
    #[serde(skip)]
    rank_of: HashMap<String, usize>,
}

impl RankTable {
    pub fn from_counts(gender: Gender, counts: HashMap<String, usize>) -> Self {
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let rank_of = ranked.iter().enumerate().map(|(i, (t, _))| (t.clone(), i + 1)).collect();
        RankTable { gender, ranked, rank_of }
    }

    /// 1-based rank of `token` (already casefolded), if it occurs.
    pub fn rank_of(&self, token: &str) -> Option<usize> {
        self.rank_of.get(token).copied()
    }

    pub fn total_tokens(&self) -> usize {
        self.ranked.iter().map(|(_, c)| c).sum()
    }
}

/// Whitespace-tokenized, lowercased frequency ranking over the pairs of one
/// gender. Ties are ordered lexicographically.
pub fn frequency_rank(corpus: &AnnotatedCorpus, side: Side, gender: Gender) -> RankTable {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for p in corpus.pairs.iter().filter(|p| p.gender() == Some(gender)) {
        let text = match side {
            Side::Src => &p.src,
            Side::Tgt => &p.tgt,
        };
        for tok in text.split_whitespace() {
            *counts.entry(tok.to_lowercase()).or_default() += 1;
        }
    }
    RankTable::from_counts(gender, counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{SentencePair, SpeakerRecord};

    fn pair(src: &str, g: Option<Gender>, age: Option<u32>) -> SentencePair {
        let mut p = SentencePair::with_gender(src, src, "EN-FR", Gender::Unknown);
        p.speaker = g.map(|g| SpeakerRecord::new("", "", g, None, None));
        p.age_years = age;
        p
    }

    #[test]
    fn shares() {
        let c = AnnotatedCorpus::from_pairs(
            "EN-FR",
            vec![pair("a", Some(Gender::Male), None), pair("b", Some(Gender::Male), None), pair("c", Some(Gender::Female), None)],
        );
        let s = gender_distribution(&c).unwrap();
        assert!((s.male_share - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.unknown_share, 0.0);
    }

    #[test]
    fn unknown_and_unresolved_are_counted_in_totals() {
        let c = AnnotatedCorpus::from_pairs(
            "EN-FR",
            vec![pair("a", Some(Gender::Male), None), pair("b", Some(Gender::Unknown), None), pair("c", None, None), pair("d", Some(Gender::Female), None)],
        );
        let s = gender_distribution(&c).unwrap();
        assert_eq!(s.total_pairs, 4);
        assert_eq!(s.unknown_count, 2);
        assert_eq!((s.male_share, s.female_share, s.unknown_share), (0.5, 0.5, 0.5));
    }

    #[test]
    fn empty_corpus_errors() {
        assert_eq!(gender_distribution(&AnnotatedCorpus::default()).unwrap_err(), AnalysisError::EmptyCorpus);
    }

    #[test]
    fn histogram_buckets() {
        let c = AnnotatedCorpus::from_pairs(
            "EN-FR",
            vec![
                pair("a", Some(Gender::Female), Some(25)),
                pair("b", Some(Gender::Male), Some(55)),
                pair("c", Some(Gender::Female), Some(55)),
                pair("d", Some(Gender::Male), None),
                pair("e", None, None),
            ],
        );
        let h = age_gender_histogram(&c, 10);
        let labeled: Vec<(String, BucketCounts)> = h.iter().map(|(b, c)| (b.label(), *c)).collect();
        assert_eq!(
            labeled,
            vec![("20-30".to_string(), BucketCounts { male: 0, female: 1 }), ("50-60".to_string(), BucketCounts { male: 1, female: 1 })]
        );
        assert!(AgeBucket::of(60, 10).contains(60) && !AgeBucket::of(59, 10).contains(60));
        let csv = histogram_csv(&h);
        assert_eq!(csv, "bucket,male_pct,female_pct\n20-30,0.00,100.00\n50-60,50.00,50.00\n");
        let s = gender_distribution(&c).unwrap();
        assert_eq!(s.bucket_shares[&AgeBucket::of(55, 10)], 2.0 / 5.0);
        let json = serde_json::to_string(&s.age_hist).unwrap();
        assert_eq!(json, r#"{"20-30":{"male":0,"female":1},"50-60":{"male":1,"female":1}}"#);
    }

    #[test]
    fn rank_table() {
        let c = AnnotatedCorpus::from_pairs("EN-FR", vec![pair("a a b", Some(Gender::Male), None), pair("z z z", Some(Gender::Female), None)]);
        let t = frequency_rank(&c, Side::Src, Gender::Male);
        assert_eq!(t.ranked, vec![("a".to_string(), 2), ("b".to_string(), 1)]);
        assert_eq!(t.rank_of("b"), Some(2));
        assert_eq!(t.rank_of("z"), None);
        assert_eq!(t.total_tokens(), 3);
    }

    #[test]
    fn rank_ties_are_lexicographic_and_casefolded() {
        let c = AnnotatedCorpus::from_pairs("EN-FR", vec![pair("Pense crois pense CROIS b", Some(Gender::Male), None)]);
        let t = frequency_rank(&c, Side::Tgt, Gender::Male);
        assert_eq!(t.ranked, vec![("crois".to_string(), 2), ("pense".to_string(), 2), ("b".to_string(), 1)]);
    }
}
