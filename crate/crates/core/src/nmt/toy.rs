//! Synthetic English→French data where a first-person adjective must agree
//! with the speaker's gender, which the English source never reveals.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::{AnnotatedCorpus, Gender, SentencePair};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adjective {
    pub src: String,
    pub masc: String,
    pub fem: String,
}

/// Source and target patterns; `{adj}` marks the adjective slot.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub src: String,
    pub tgt: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyLanguageSpec {
    pub lexicon: Vec<Adjective>,
    pub templates: Vec<Template>,
    /// Probability that a sentence is spoken by a man.
    pub male_fraction: f64,
    pub size: usize,
    pub seed: u64,
}

const ADJECTIVES: [(&str, &str, &str); 24] = [
    ("happy", "heureux", "heureuse"),
    ("glad", "content", "contente"),
    ("tired", "fatigué", "fatiguée"),
    ("ready", "prêt", "prête"),
    ("sure", "sûr", "sûre"),
    ("sorry", "désolé", "désolée"),
    ("delighted", "ravi", "ravie"),
    ("surprised", "surpris", "surprise"),
    ("disappointed", "déçu", "déçue"),
    ("worried", "inquiet", "inquiète"),
    ("proud", "fier", "fière"),
    ("certain", "certain", "certaine"),
    ("convinced", "convaincu", "convaincue"),
    ("satisfied", "satisfait", "satisfaite"),
    ("grateful", "reconnaissant", "reconnaissante"),
    ("astonished", "étonné", "étonnée"),
    ("shocked", "choqué", "choquée"),
    ("concerned", "préoccupé", "préoccupée"),
    ("persuaded", "persuadé", "persuadée"),
    ("honoured", "honoré", "honorée"),
    ("impressed", "impressionné", "impressionnée"),
    ("embarrassed", "embarrassé", "embarrassée"),
    ("uneasy", "gêné", "gênée"),
    ("aware", "conscient", "consciente"),
];

const TEMPLATES: [(&str, &str); 8] = [
    ("i am {adj}", "je suis {adj}"),
    ("i am very {adj}", "je suis très {adj}"),
    ("today i am {adj}", "aujourd'hui je suis {adj}"),
    ("i was {adj}", "j' étais {adj}"),
    ("i am really {adj} madam president", "je suis vraiment {adj} madame la présidente"),
    ("i am not {adj}", "je ne suis pas {adj}"),
    ("as a member i am {adj}", "en tant que membre je suis {adj}"),
    ("i feel {adj}", "je me sens {adj}"),
];

impl Default for ToyLanguageSpec {
    fn default() -> Self {
        ToyLanguageSpec {
            lexicon: ADJECTIVES.iter().map(|(s, m, f)| Adjective { src: s.to_string(), masc: m.to_string(), fem: f.to_string() }).collect(),
            templates: TEMPLATES.iter().map(|(s, t)| Template { src: s.to_string(), tgt: t.to_string() }).collect(),
            male_fraction: 0.5,
            size: 1000,
            seed: 1,
        }
    }
}

impl ToyLanguageSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.lexicon.is_empty() || self.templates.is_empty() {
            return Err("lexicon and templates must be non-empty".into());
        }
        if !(0.0..=1.0).contains(&self.male_fraction) {
            return Err("male_fraction must lie in [0, 1]".into());
        }
        let mut forms = HashSet::new();
        for a in &self.lexicon {
            if a.masc == a.fem {
                return Err(format!("{:?}: masculine and feminine forms must differ", a.src));
            }
            for f in [&a.masc, &a.fem] {
                if f.split_whitespace().count() != 1 || !forms.insert(f.as_str()) {
                    return Err(format!("target form {f:?} must be a single token unique across the lexicon"));
                }
            }
        }
        for t in &self.templates {
            if t.src.matches("{adj}").count() != 1 || t.tgt.matches("{adj}").count() != 1 {
                return Err(format!("template {:?} needs exactly one {{adj}} slot per side", t.src));
            }
        }
        Ok(())
    }
}

/// Draws `spec.size` sentence pairs with speaker metadata attached.
pub fn gen_toy_language(spec: &ToyLanguageSpec) -> Result<AnnotatedCorpus, String> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let pairs = (0..spec.size)
        .map(|_| {
            let adj = &spec.lexicon[rng.gen_range(0..spec.lexicon.len())];
            let tpl = &spec.templates[rng.gen_range(0..spec.templates.len())];
            let gender = if rng.gen_bool(spec.male_fraction) { Gender::Male } else { Gender::Female };
            let form = if gender == Gender::Male { &adj.masc } else { &adj.fem };
            SentencePair::with_gender(tpl.src.replace("{adj}", &adj.src), tpl.tgt.replace("{adj}", form), "EN-FR", gender)
        })
        .collect();
    Ok(AnnotatedCorpus::from_pairs("EN-FR", pairs))
}

/// Fraction of references whose gender-marked adjective is reproduced.
///
/// A hypothesis counts as correct when it contains the reference's form and
/// not the opposite-gender form. References without a lexicon form are skipped.
pub fn agreement_accuracy<H: AsRef<str>, R: AsRef<str>>(hyps: &[H], refs: &[R], lexicon: &[Adjective]) -> f64 {
    let mut seen = 0usize;
    let mut correct = 0usize;
    for (h, r) in hyps.iter().zip(refs) {
        let ref_toks: Vec<&str> = r.as_ref().split_whitespace().collect();
        let Some((right, wrong)) = lexicon.iter().find_map(|a| {
            if ref_toks.contains(&a.masc.as_str()) {
                Some((&a.masc, &a.fem))
            } else if ref_toks.contains(&a.fem.as_str()) {
                Some((&a.fem, &a.masc))
            } else {
                None
            }
        }) else {
            continue;
        };
        seen += 1;
        let hyp: Vec<&str> = h.as_ref().split_whitespace().collect();
        if hyp.contains(&right.as_str()) && !hyp.contains(&wrong.as_str()) {
            correct += 1;
        }
    }
    if seen == 0 {
        0.0
    } else {
        correct as f64 / seen as f64
    }
}
