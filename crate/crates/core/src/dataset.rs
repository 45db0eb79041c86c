//! Gender-tagged training data and the general / M / F / M1 / F1 test sets.
//!
//! All sampling draws from a ChaCha stream keyed by the split seed, with one
//! stream per stage, so every set is reproducible from `(seed, corpus)`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{AnnotatedCorpus, Gender, SentencePair};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("pair has no known speaker gender")]
    UnknownGender,
    #[error("need more than {needed} pairs, corpus has {available}")]
    CorpusTooSmall { needed: usize, available: usize },
    #[error("not enough {gender} pairs: short by {shortfall}")]
    InsufficientGenderData { gender: Gender, shortfall: usize },
    #[error("invalid tag configuration: {0}")]
    BadTagConfig(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TagPlacement {
    #[default]
    SourcePrefix,
}

/// Tokens used to mark speaker gender on the source side.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenderTagConfig {
    pub male_token: String,
    pub female_token: String,
    pub placement: TagPlacement,
}

impl Default for GenderTagConfig {
    fn default() -> Self {
        GenderTagConfig { male_token: "MALE".into(), female_token: "FEMALE".into(), placement: TagPlacement::SourcePrefix }
    }
}

impl GenderTagConfig {
    pub const SEPARATOR: char = ' ';

    pub fn validate(&self) -> Result<(), DatasetError> {
        for t in [&self.male_token, &self.female_token] {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(DatasetError::BadTagConfig(format!("tag {t:?} must be a non-empty single token")));
            }
        }
        if self.male_token == self.female_token {
            return Err(DatasetError::BadTagConfig("male and female tags must differ".into()));
        }
        Ok(())
    }

    pub fn token_for(&self, gender: Gender) -> Option<&str> {
        match gender {
            Gender::Male => Some(&self.male_token),
            Gender::Female => Some(&self.female_token),
            Gender::Unknown => None,
        }
    }

    pub fn tokens(&self) -> [&str; 2] {
        [&self.male_token, &self.female_token]
    }
}

/// Prefixes the source sentence with the speaker's gender tag.
pub fn apply_gender_tag(pair: &SentencePair, cfg: &GenderTagConfig) -> Result<SentencePair, DatasetError> {
    let tag = pair.gender().and_then(|g| cfg.token_for(g)).ok_or(DatasetError::UnknownGender)?;
    let mut tagged = pair.clone();
    tagged.src = format!("{tag}{}{}", GenderTagConfig::SEPARATOR, pair.src);
    Ok(tagged)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub test_size: usize,
    pub seed: u64,
    pub exclude_unknown: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { test_size: 2000, seed: 1, exclude_unknown: true }
    }
}

fn stage_rng(seed: u64, stage: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage);
    rng
}

/// Uniform sample of `k` positions from `pool`, returned in pool order.
fn sample_from(pool: &[usize], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut picked: Vec<usize> = index::sample(rng, pool.len(), k).into_iter().map(|i| pool[i]).collect();
    picked.sort_unstable();
    picked
}

fn without(pool: &[usize], remove: &[usize]) -> Vec<usize> {
    let remove: BTreeSet<usize> = remove.iter().copied().collect();
    pool.iter().copied().filter(|i| !remove.contains(i)).collect()
}

fn eligible(corpus: &AnnotatedCorpus, exclude_unknown: bool) -> Vec<usize> {
    (0..corpus.len()).filter(|&i| !exclude_unknown || corpus.pairs[i].has_known_gender()).collect()
}

/// Train/test index split over the eligible pairs of `corpus`.
pub fn split_indices(corpus: &AnnotatedCorpus, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>), DatasetError> {
    let pool = eligible(corpus, spec.exclude_unknown);
    if spec.test_size >= pool.len() {
        return Err(DatasetError::CorpusTooSmall { needed: spec.test_size, available: pool.len() });
    }
    let test = sample_from(&pool, spec.test_size, &mut stage_rng(spec.seed, 0));
    let train = without(&pool, &test);
    Ok((train, test))
}

/// Random general test set of `spec.test_size` pairs and the remaining
/// training corpus.
pub fn split_corpus(corpus: &AnnotatedCorpus, spec: &SplitSpec) -> Result<(AnnotatedCorpus, AnnotatedCorpus), DatasetError> {
    let (train, test) = split_indices(corpus, spec)?;
    Ok((corpus.select(&train), corpus.select(&test)))
}

fn gender_pool(corpus: &AnnotatedCorpus, pool: &[usize], gender: Gender) -> Vec<usize> {
    pool.iter().copied().filter(|&i| corpus.pairs[i].gender() == Some(gender)).collect()
}

fn gender_indices(
    corpus: &AnnotatedCorpus,
    pool: &[usize],
    size: usize,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), DatasetError> {
    let mut picks = Vec::with_capacity(2);
    for (stage, gender) in [(1, Gender::Male), (2, Gender::Female)] {
        let candidates = gender_pool(corpus, pool, gender);
        if candidates.len() < size {
            return Err(DatasetError::InsufficientGenderData { gender, shortfall: size - candidates.len() });
        }
        picks.push(sample_from(&candidates, size, &mut stage_rng(seed, stage)));
    }
    let f = picks.pop().unwrap();
    let m = picks.pop().unwrap();
    Ok((m, f))
}

/// Male-only and female-only samples of `size` pairs drawn from a held-out pool.
pub fn build_gender_testsets(
    held_out: &AnnotatedCorpus,
    size: usize,
    seed: u64,
) -> Result<(AnnotatedCorpus, AnnotatedCorpus), DatasetError> {
    let all: Vec<usize> = (0..held_out.len()).collect();
    let (m, f) = gender_indices(held_out, &all, size, seed)?;
    Ok((held_out.select(&m), held_out.select(&f)))
}

pub fn default_pronouns() -> BTreeSet<String> {
    BTreeSet::from(["I".to_string()])
}

fn is_first_person(pair: &SentencePair, pronouns: &BTreeSet<String>) -> bool {
    pair.src_tokens().any(|t| pronouns.contains(t))
}

/// Pairs whose source contains one of `pronouns` as a whole token
/// (case-sensitive), in their original order.
pub fn filter_first_person(pairs: &[SentencePair], pronouns: &BTreeSet<String>) -> Vec<SentencePair> {
    pairs.iter().filter(|p| is_first_person(p, pronouns)).cloned().collect()
}

/// Source and target lines for a corpus, tagging sources when asked.
pub fn bitext_lines(corpus: &AnnotatedCorpus, tagged: bool, cfg: &GenderTagConfig) -> Result<(Vec<String>, Vec<String>), DatasetError> {
    let mut src = Vec::with_capacity(corpus.len());
    let mut tgt = Vec::with_capacity(corpus.len());
    for p in &corpus.pairs {
        if tagged {
            src.push(apply_gender_tag(p, cfg)?.src);
        } else {
            src.push(p.src.clone());
        }
        tgt.push(p.tgt.clone());
    }
    Ok((src, tgt))
}

pub fn write_lines(path: &Path, lines: &[String]) -> std::io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for l in lines {
        w.write_all(l.as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_lines(path: &Path) -> std::io::Result<Vec<String>> {
    Ok(fs::read_to_string(path)?.lines().map(str::to_string).collect())
}

/// Writes line-aligned source and target files for `corpus`.
pub fn emit_bitext(
    corpus: &AnnotatedCorpus,
    tagged: bool,
    cfg: &GenderTagConfig,
    src_path: &Path,
    tgt_path: &Path,
) -> Result<(), DatasetError> {
    if corpus.is_empty() {
        return Err(DatasetError::EmptyCorpus);
    }
    let (src, tgt) = bitext_lines(corpus, tagged, cfg)?;
    write_lines(src_path, &src)?;
    write_lines(tgt_path, &tgt)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildSpec {
    pub split: SplitSpec,
    /// Size of each of the M and F test sets.
    pub gender_test_size: usize,
    /// Target size of each of the M1 and F1 test sets.
    pub first_person_size: usize,
    pub pronouns: BTreeSet<String>,
}

impl Default for BuildSpec {
    fn default() -> Self {
        BuildSpec { split: SplitSpec::default(), gender_test_size: 2000, first_person_size: 2000, pronouns: default_pronouns() }
    }
}

/// Named test sets in emission order.
pub const TEST_SETS: [&str; 5] = ["test", "test.M", "test.F", "test.M1", "test.F1"];

/// Index sets into the source corpus for every split.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetPlan {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub male: Vec<usize>,
    pub female: Vec<usize>,
    pub male_first_person: Vec<usize>,
    pub female_first_person: Vec<usize>,
}

impl DatasetPlan {
    /// `(name, indices)` for the training set followed by [`TEST_SETS`].
    pub fn sets(&self) -> [(&'static str, &[usize]); 6] {
        [
            ("train", &self.train),
            ("test", &self.test),
            ("test.M", &self.male),
            ("test.F", &self.female),
            ("test.M1", &self.male_first_person),
            ("test.F1", &self.female_first_person),
        ]
    }
}

fn first_person_set(
    corpus: &AnnotatedCorpus,
    gendered: &[usize],
    pool: &[usize],
    gender: Gender,
    spec: &BuildSpec,
    stage: u64,
) -> Vec<usize> {
    let want = spec.first_person_size;
    let fp = |i: &usize| is_first_person(&corpus.pairs[*i], &spec.pronouns);
    let inside: Vec<usize> = gendered.iter().copied().filter(fp).collect();
    let mut rng = stage_rng(spec.split.seed, stage);
    if inside.len() >= want {
        return sample_from(&inside, want, &mut rng);
    }
    let outside: Vec<usize> = gender_pool(corpus, pool, gender).into_iter().filter(|i| fp(i)).collect();
    let extra = (want - inside.len()).min(outside.len());
    let mut set = inside;
    set.extend(sample_from(&outside, extra, &mut rng));
    set.sort_unstable();
    set
}

/// Plans every split: the general test set, M/F sets from what remains,
/// first-person subsets of M/F topped up from the remaining pool, and the
/// training set as the complement.
///
/// M1 and F1 may come out smaller than requested when the corpus lacks
/// first-person pairs; compare against `spec.first_person_size`.
pub fn plan_datasets(corpus: &AnnotatedCorpus, spec: &BuildSpec) -> Result<DatasetPlan, DatasetError> {
    let (pool, test) = split_indices(corpus, &spec.split)?;
    let (male, female) = gender_indices(corpus, &pool, spec.gender_test_size, spec.split.seed)?;
    let pool = without(&without(&pool, &male), &female);
    let male_first_person = first_person_set(corpus, &male, &pool, Gender::Male, spec, 3);
    let pool = without(&pool, &male_first_person);
    let female_first_person = first_person_set(corpus, &female, &pool, Gender::Female, spec, 4);
    let train = without(&pool, &female_first_person);
    Ok(DatasetPlan { train, test, male, female, male_first_person, female_first_person })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildManifest {
    pub seed: u64,
    pub tagged: bool,
    pub spec: BuildSpec,
    pub tags: GenderTagConfig,
    pub counts: BTreeMap<String, usize>,
}

/// Writes `<name>.src` / `<name>.tgt` for every planned set plus `manifest.json`.
pub fn write_datasets(
    corpus: &AnnotatedCorpus,
    plan: &DatasetPlan,
    spec: &BuildSpec,
    tagged: bool,
    cfg: &GenderTagConfig,
    out_dir: &Path,
) -> Result<BuildManifest, DatasetError> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let mut counts = BTreeMap::new();
    for (name, idx) in plan.sets() {
        let sub = corpus.select(idx);
        let (src, tgt) = bitext_lines(&sub, tagged, cfg)?;
        write_lines(&out_dir.join(format!("{name}.src")), &src)?;
        write_lines(&out_dir.join(format!("{name}.tgt")), &tgt)?;
        counts.insert(name.to_string(), idx.len());
    }
    let manifest = BuildManifest { seed: spec.split.seed, tagged, spec: spec.clone(), tags: cfg.clone(), counts };
    fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(genders: &[Gender], first_person_every: usize) -> AnnotatedCorpus {
        let pairs = genders
            .iter()
            .enumerate()
            .map(|(i, &g)| {
                let src = if first_person_every > 0 && i % first_person_every == 0 { format!("I said {i}") } else { format!("we said {i}") };
                SentencePair::with_gender(src, format!("t{i}"), "EN-FR", g)
            })
            .collect();
        AnnotatedCorpus::from_pairs("EN-FR", pairs)
    }

    #[test]
    fn tag_examples() {
        let cfg = GenderTagConfig::default();
        let p = SentencePair::with_gender("Madam President, as a...", "x", "EN-FR", Gender::Female);
        assert_eq!(apply_gender_tag(&p, &cfg).unwrap().src, "FEMALE Madam President, as a...");
        assert_eq!(apply_gender_tag(&p, &cfg).unwrap().tgt, "x");
        let p = SentencePair::with_gender("hello", "x", "EN-FR", Gender::Male);
        assert_eq!(apply_gender_tag(&p, &cfg).unwrap().src, "MALE hello");
        let p = SentencePair::with_gender("hello", "x", "EN-FR", Gender::Unknown);
        assert!(matches!(apply_gender_tag(&p, &cfg), Err(DatasetError::UnknownGender)));
    }

    #[test]
    fn tag_config_validation() {
        assert!(GenderTagConfig::default().validate().is_ok());
        let bad = GenderTagConfig { male_token: "A B".into(), ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = GenderTagConfig { male_token: "X".into(), female_token: "X".into(), ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let c = corpus(&[Gender::Male; 10], 0);
        let spec = SplitSpec { test_size: 2, seed: 7, exclude_unknown: true };
        let a = split_indices(&c, &spec).unwrap();
        let b = split_indices(&c, &spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.1.len(), 2);
        assert!(a.1.iter().all(|i| !a.0.contains(i)));
        let spec = SplitSpec { test_size: 10, ..spec };
        assert!(matches!(split_corpus(&c, &spec), Err(DatasetError::CorpusTooSmall { needed: 10, available: 10 })));
    }

    #[test]
    fn unknown_gender_excluded_from_split_by_default() {
        let c = corpus(&[Gender::Male, Gender::Unknown, Gender::Female, Gender::Unknown], 0);
        let (train, test) = split_indices(&c, &SplitSpec { test_size: 1, seed: 1, exclude_unknown: true }).unwrap();
        assert_eq!(train.len() + test.len(), 2);
        let (train, test) = split_indices(&c, &SplitSpec { test_size: 1, seed: 1, exclude_unknown: false }).unwrap();
        assert_eq!(train.len() + test.len(), 4);
    }

    #[test]
    fn gender_sets() {
        let c = corpus(&[Gender::Male, Gender::Female, Gender::Male, Gender::Female, Gender::Male, Gender::Female], 0);
        let (m, f) = build_gender_testsets(&c, 2, 3).unwrap();
        assert_eq!(m.len(), 2);
        assert!(m.pairs.iter().all(|p| p.gender() == Some(Gender::Male)));
        assert!(f.pairs.iter().all(|p| p.gender() == Some(Gender::Female)));
        match build_gender_testsets(&c, 4, 3) {
            Err(DatasetError::InsufficientGenderData { gender: Gender::Male, shortfall: 1 }) => {}
            other => panic!("{other:?}"),
        }
        let c = corpus(&[Gender::Male, Gender::Male, Gender::Male, Gender::Male, Gender::Female, Gender::Female, Gender::Female], 0);
        match build_gender_testsets(&c, 4, 3) {
            Err(DatasetError::InsufficientGenderData { gender: Gender::Female, shortfall: 1 }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn first_person_filter_respects_token_boundaries() {
        let ps: Vec<SentencePair> = ["I am happy", "It is I think fine", "Illinois is large", "i am lower"]
            .iter()
            .map(|s| SentencePair::with_gender(*s, "x", "EN-FR", Gender::Male))
            .collect();
        let kept: Vec<String> = filter_first_person(&ps, &default_pronouns()).into_iter().map(|p| p.src).collect();
        assert_eq!(kept, vec!["I am happy", "It is I think fine"]);
        let more: BTreeSet<String> = ["I", "me"].iter().map(|s| s.to_string()).collect();
        let ps = vec![SentencePair::with_gender("tell me", "x", "EN-FR", Gender::Male)];
        assert_eq!(filter_first_person(&ps, &more).len(), 1);
    }

    #[test]
    fn plan_sets_are_disjoint_except_allowed_containment() {
        let genders: Vec<Gender> = (0..400).map(|i| if i % 3 == 0 { Gender::Female } else if i % 17 == 0 { Gender::Unknown } else { Gender::Male }).collect();
        let c = corpus(&genders, 4);
        let spec = BuildSpec {
            split: SplitSpec { test_size: 40, seed: 11, exclude_unknown: true },
            gender_test_size: 30,
            first_person_size: 15,
            pronouns: default_pronouns(),
        };
        let plan = plan_datasets(&c, &spec).unwrap();
        assert_eq!(plan, plan_datasets(&c, &spec).unwrap());
        assert_eq!(plan.male_first_person.len(), 15);
        assert_eq!(plan.female_first_person.len(), 15);
        let sets = plan.sets();
        for (i, (na, a)) in sets.iter().enumerate() {
            for (nb, b) in &sets[i + 1..] {
                let allowed = matches!((*na, *nb), ("test.M", "test.M1") | ("test.F", "test.F1"));
                if allowed {
                    continue;
                }
                assert!(a.iter().all(|x| !b.contains(x)), "{na} overlaps {nb}");
            }
        }
        for &i in &plan.male_first_person {
            assert_eq!(c.pairs[i].gender(), Some(Gender::Male));
            assert!(c.pairs[i].src.starts_with("I "));
        }
        assert!(plan.train.iter().all(|&i| c.pairs[i].has_known_gender()));
    }

    #[test]
    fn emit_tagged_and_plain() {
        let dir = tempfile::tempdir().unwrap();
        let c = AnnotatedCorpus::from_pairs(
            "EN-FR",
            vec![
                SentencePair::with_gender("Madam President, as a...", "Madame la Présidente, en tant que...", "EN-FR", Gender::Female),
                SentencePair::with_gender("b", "bb", "EN-FR", Gender::Male),
                SentencePair::with_gender("c", "cc", "EN-FR", Gender::Male),
            ],
        );
        let cfg = GenderTagConfig::default();
        let (s, t) = (dir.path().join("a.src"), dir.path().join("a.tgt"));
        emit_bitext(&c, true, &cfg, &s, &t).unwrap();
        let src = read_lines(&s).unwrap();
        assert_eq!(src.len(), 3);
        assert_eq!(read_lines(&t).unwrap().len(), 3);
        assert!(src[0].starts_with("FEMALE "));
        emit_bitext(&c, false, &cfg, &s, &t).unwrap();
        let plain = read_lines(&s).unwrap();
        for (tagged, plain) in src.iter().zip(&plain) {
            assert_eq!(tagged.split_once(' ').unwrap().1, plain);
        }
        let mut unknown = c.clone();
        unknown.pairs[1].speaker = None;
        assert!(matches!(emit_bitext(&unknown, true, &cfg, &s, &t), Err(DatasetError::UnknownGender)));
        assert!(matches!(emit_bitext(&AnnotatedCorpus::default(), false, &cfg, &s, &t), Err(DatasetError::EmptyCorpus)));
    }
}
