use std::ops::Range;

use crate::data::tokenize::{tokenize, tokenize_with_offsets, Token};
use crate::error::{Error, Result};

const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "etc", "inc", "ltd", "co", "mt", "ft", "gen", "gov",
    "sen", "rep", "jan", "feb", "mar", "apr", "aug", "sep", "sept", "oct", "nov", "dec",
];

/// A passage with its tokens and sentence segmentation.
#[derive(Clone, Debug, PartialEq)]
pub struct Passage {
    pub id: String,
    pub text: String,
    tokens: Vec<Token>,
    /// Token-index ranges, one per sentence, in order.
    sentences: Vec<Range<usize>>,
}

/// The rationale chosen for one turn.
#[derive(Clone, Debug, PartialEq)]
pub struct Rationale {
    /// 1-based sentence number, `None` when a dataset span was used.
    pub sentence: Option<usize>,
    /// Character span (in chars, not bytes) of the rationale in the passage.
    pub char_span: (usize, usize),
    pub tokens: Vec<String>,
}

impl Passage {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let tokens = tokenize_with_offsets(&text);
        let sentences = split_sentences(&text, &tokens);
        Passage {
            id: id.into(),
            text,
            tokens,
            sentences,
        }
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.text.as_str())
    }

    pub fn token_strings(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.text.clone()).collect()
    }

    pub fn sentence_count(&self) -> usize {
        self.sentences.len()
    }

    pub fn sentence_ranges(&self) -> &[Range<usize>] {
        &self.sentences
    }

    /// Tokens of the 1-based sentence `k`.
    pub fn sentence_tokens(&self, k: usize) -> Vec<String> {
        self.tokens[self.sentences[k - 1].clone()]
            .iter()
            .map(|t| t.text.clone())
            .collect()
    }

    /// Character span (start, end) of the 1-based sentence `k`.
    pub fn sentence_char_span(&self, k: usize) -> (usize, usize) {
        let r = &self.sentences[k - 1];
        let start = self.tokens[r.start].start;
        let end = self.tokens[r.end - 1].end;
        (self.text[..start].chars().count(), self.text[..end].chars().count())
    }

    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    /// Substring between two character offsets.
    pub fn char_slice(&self, start: usize, end: usize) -> Result<&str> {
        let len = self.char_len();
        if start > end || end > len {
            return Err(Error::Passage {
                passage: self.id.clone(),
                message: format!("span {start}..{end} outside passage of {len} chars"),
            });
        }
        let byte = |c: usize| {
            self.text
                .char_indices()
                .nth(c)
                .map(|(b, _)| b)
                .unwrap_or(self.text.len())
        };
        Ok(&self.text[byte(start)..byte(end)])
    }
}

fn split_sentences(text: &str, tokens: &[Token]) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < tokens.len() {
        let t = &tokens[i];
        let is_end = matches!(t.text.as_str(), "." | "?" | "!");
        if is_end && !is_abbreviation(tokens, i) {
            // absorb closing quotes/brackets glued to the terminator
            let mut j = i;
            while j + 1 < tokens.len()
                && tokens[j + 1].start == tokens[j].end
                && matches!(tokens[j + 1].text.as_str(), "\"" | "'" | ")" | "]" | "”" | "’")
            {
                j += 1;
            }
            let after = &text[tokens[j].end..];
            if after.is_empty() || after.starts_with(char::is_whitespace) {
                out.push(start..j + 1);
                start = j + 1;
                i = j + 1;
                continue;
            }
        }
        i += 1;
    }
    if start < tokens.len() {
        out.push(start..tokens.len());
    }
    out
}

fn is_abbreviation(tokens: &[Token], i: usize) -> bool {
    if tokens[i].text != "." || i == 0 {
        return false;
    }
    let prev = &tokens[i - 1];
    prev.end == tokens[i].start && ABBREVIATIONS.contains(&prev.text.as_str())
}

/// Picks the rationale for turn `k` (1-based): the dataset span when one is
/// given, otherwise sentence `min(k, sentence_count)`.
pub fn select_rationale(passage: &Passage, k: usize, dataset_span: Option<(usize, usize)>) -> Result<Rationale> {
    if k == 0 {
        return Err(Error::Passage {
            passage: passage.id.clone(),
            message: "turn index must be at least 1".into(),
        });
    }
    if passage.sentence_count() == 0 {
        return Err(Error::Passage {
            passage: passage.id.clone(),
            message: "empty passage".into(),
        });
    }
    if let Some((start, end)) = dataset_span {
        let tokens = tokenize(passage.char_slice(start, end)?);
        if !tokens.is_empty() {
            return Ok(Rationale {
                sentence: None,
                char_span: (start, end),
                tokens,
            });
        }
    }
    let s = k.min(passage.sentence_count());
    Ok(Rationale {
        sentence: Some(s),
        char_span: passage.sentence_char_span(s),
        tokens: passage.sentence_tokens(s),
    })
}
