use std::collections::HashMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
pub const SEP_Q: usize = 4;
pub const SEP_A: usize = 5;
pub const HIST_EMPTY: usize = 6;

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const BOS_TOKEN: &str = "<s>";
pub const EOS_TOKEN: &str = "</s>";
pub const SEP_Q_TOKEN: &str = "<q>";
pub const SEP_A_TOKEN: &str = "<a>";
pub const HIST_EMPTY_TOKEN: &str = "<nohist>";

pub const RESERVED: [&str; 7] = [
    PAD_TOKEN,
    UNK_TOKEN,
    BOS_TOKEN,
    EOS_TOKEN,
    SEP_Q_TOKEN,
    SEP_A_TOKEN,
    HIST_EMPTY_TOKEN,
];

/// Token ↔ id bijection. Reserved tokens always occupy ids `0..7`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

/// Source tokens mapped for the copy mechanism: out-of-vocabulary tokens get
/// per-example slots numbered from `vocab.len()` upward.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceIds {
    /// Ids for embedding lookup (OOV → UNK).
    pub ids: Vec<usize>,
    /// Ids in the extended space (OOV → `vocab.len() + slot`).
    pub ext_ids: Vec<usize>,
    /// Surface form of each extended slot.
    pub oov: Vec<String>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from_tokens(Vec::<String>::new())
    }
}

impl Vocabulary {
    /// Builds a vocabulary from token occurrences. Tokens seen at least
    /// `min_freq` times get ids, most frequent first, ties alphabetical.
    pub fn build<'a, I>(corpus: I, min_freq: usize) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for tok in corpus {
            *counts.entry(tok).or_default() += 1;
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(t, c)| c >= min_freq.max(1) && !RESERVED.contains(&t))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        Self::from_tokens(kept.into_iter().map(|(t, _)| t.to_string()))
    }

    /// Reserved tokens followed by `tokens` (duplicates and reserved names
    /// are skipped).
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocabulary {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for t in RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(tokens.into_iter().map(Into::into))
        {
            if !v.index.contains_key(&t) {
                v.index.insert(t.clone(), v.tokens.len());
                v.tokens.push(t);
            }
        }
        v
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn encode_source<S: AsRef<str>>(&self, tokens: &[S]) -> SourceIds {
        let mut oov: Vec<String> = Vec::new();
        let mut ids = Vec::with_capacity(tokens.len());
        let mut ext_ids = Vec::with_capacity(tokens.len());
        for t in tokens {
            let t = t.as_ref();
            match self.get(t) {
                Some(id) => {
                    ids.push(id);
                    ext_ids.push(id);
                }
                None => {
                    let slot = match oov.iter().position(|o| o == t) {
                        Some(p) => p,
                        None => {
                            oov.push(t.to_string());
                            oov.len() - 1
                        }
                    };
                    ids.push(UNK);
                    ext_ids.push(self.len() + slot);
                }
            }
        }
        SourceIds { ids, ext_ids, oov }
    }

    /// Target ids in the extended space of `source`, without EOS.
    pub fn encode_target<S: AsRef<str>>(&self, tokens: &[S], source: &SourceIds) -> Vec<usize> {
        tokens
            .iter()
            .map(|t| {
                let t = t.as_ref();
                self.get(t).unwrap_or_else(|| {
                    source
                        .oov
                        .iter()
                        .position(|o| o == t)
                        .map(|p| self.len() + p)
                        .unwrap_or(UNK)
                })
            })
            .collect()
    }

    /// Surface token of an extended id.
    pub fn decode_ext(&self, id: usize, oov: &[String]) -> String {
        if id < self.len() {
            self.tokens[id].clone()
        } else {
            oov.get(id - self.len())
                .cloned()
                .unwrap_or_else(|| UNK_TOKEN.to_string())
        }
    }
}

impl Serialize for Vocabulary {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.tokens.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let tokens = Vec::<String>::deserialize(d)?;
        if tokens.len() < RESERVED.len() || tokens.iter().zip(RESERVED.iter()).any(|(a, b)| a != b) {
            return Err(serde::de::Error::custom("vocabulary lacks reserved prefix"));
        }
        let v = Vocabulary::from_tokens(tokens.into_iter().skip(RESERVED.len()));
        Ok(v)
    }
}
