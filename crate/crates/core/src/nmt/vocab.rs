use std::collections::HashMap;

pub const BOS: usize = 0;
pub const EOS: usize = 1;
pub const UNK: usize = 2;
pub const PAD: usize = 3;
pub const RESERVED: [&str; 4] = ["<s>", "</s>", "<unk>", "<pad>"];

/// Token ↔ id bijection with the four reserved ids first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocab {
    /// Vocabulary over whitespace tokens, most frequent first, ties lexicographic.
    pub fn build<S: AsRef<str>>(lines: &[S]) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for l in lines {
            for t in l.as_ref().split_whitespace() {
                *counts.entry(t).or_default() += 1;
            }
        }
        let mut by_freq: Vec<(&str, usize)> = counts.into_iter().filter(|(t, _)| !RESERVED.contains(t)).collect();
        by_freq.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Self::from_tokens(RESERVED.iter().copied().chain(by_freq.into_iter().map(|(t, _)| t)).map(str::to_string).collect())
            .expect("reserved tokens are unique")
    }

    /// Rebuilds a vocabulary from its id-ordered token list.
    pub fn from_tokens(tokens: Vec<String>) -> Option<Self> {
        if tokens.len() < RESERVED.len() || tokens.iter().zip(RESERVED).any(|(a, b)| a != b) {
            return None;
        }
        let ids: HashMap<String, usize> = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        (ids.len() == tokens.len()).then_some(Vocab { tokens, ids })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, line: &str) -> Vec<usize> {
        line.split_whitespace().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.tokens[i].clone()).collect()
    }
}
