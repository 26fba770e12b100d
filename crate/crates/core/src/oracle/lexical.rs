use std::collections::HashSet;

use crate::data::tokenize::is_punct;
use crate::error::Result;
use crate::oracle::{split_token_sentences, OracleAnswer, OracleRequest, QaOracle};

const STOPWORDS: &[&str] = &[
    "a", "about", "after", "all", "also", "an", "and", "any", "are", "as", "at", "be", "been", "before", "being",
    "but", "by", "can", "could", "did", "do", "does", "doing", "for", "from", "had", "has", "have", "having", "he",
    "her", "hers", "him", "his", "how", "i", "if", "in", "into", "is", "it", "its", "just", "may", "me", "might", "my",
    "no", "not", "of", "on", "or", "our", "own", "s", "she", "should", "so", "some", "t", "than", "that", "the",
    "their", "them", "then", "there", "these", "they", "this", "those", "to", "too", "up", "us", "very", "was", "we",
    "were", "what", "when", "where", "which", "while", "who", "whom", "whose", "why", "will", "with", "would", "yes",
    "you", "your",
];

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.binary_search(&token).is_ok()
}

/// Tokens that are neither stopwords nor punctuation.
pub fn content_tokens<S: AsRef<str>>(tokens: &[S]) -> impl Iterator<Item = &str> {
    tokens
        .iter()
        .map(AsRef::as_ref)
        .filter(|t| !is_stopword(t) && !is_punct(t))
}

/// Sentence-overlap answerer: picks the sentence sharing the most distinct
/// content unigrams with the question (earliest on ties) and answers with up
/// to `max_answer_tokens` of its content tokens absent from the question.
#[derive(Clone, Debug)]
pub struct LexicalOracle {
    pub max_answer_tokens: usize,
}

impl Default for LexicalOracle {
    fn default() -> Self {
        LexicalOracle { max_answer_tokens: 5 }
    }
}

impl QaOracle for LexicalOracle {
    fn name(&self) -> &str {
        "lexical"
    }

    fn answer(&self, request: &OracleRequest<'_>) -> Result<OracleAnswer> {
        let question: HashSet<&str> = content_tokens(request.question).collect();
        if question.is_empty() {
            return Ok(OracleAnswer::unknown());
        }
        let owned;
        let sentences = if request.sentences.is_empty() {
            owned = split_token_sentences(request.passage);
            &owned[..]
        } else {
            request.sentences
        };
        let mut best: Option<(usize, usize)> = None;
        for (i, r) in sentences.iter().enumerate() {
            let shared: HashSet<&str> = content_tokens(&request.passage[r.clone()])
                .filter(|t| question.contains(t))
                .collect();
            if shared.len() > best.map_or(0, |b| b.1) {
                best = Some((i, shared.len()));
            }
        }
        let Some((idx, score)) = best else {
            return Ok(OracleAnswer::unknown());
        };
        let tokens: Vec<String> = content_tokens(&request.passage[sentences[idx].clone()])
            .filter(|t| !question.contains(t))
            .take(self.max_answer_tokens)
            .map(str::to_string)
            .collect();
        if tokens.is_empty() {
            return Ok(OracleAnswer::unknown());
        }
        Ok(OracleAnswer {
            tokens,
            confidence: score as f64 / question.len() as f64,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tokenize::tokenize;
    use crate::oracle::UNKNOWN;

    fn ask(passage: &str, question: &str) -> OracleAnswer {
        let p = tokenize(passage);
        let q = tokenize(question);
        LexicalOracle::default()
            .answer(&OracleRequest {
                passage: &p,
                sentences: &[],
                history: &[],
                question: &q,
                reference: None,
            })
            .unwrap()
    }

    #[test]
    fn stopwords_sorted() {
        assert!(STOPWORDS.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn cotton_example() {
        let a = ask("Cotton lived in a barn. She was orange.", "who lived in a barn ?");
        assert_eq!(a.tokens, vec!["cotton"]);
        assert_eq!(a.confidence, 1.0);
    }

    #[test]
    fn no_overlap_is_unknown() {
        let a = ask("Cotton lived in a barn. She was orange.", "why did the rocket fly ?");
        assert_eq!(a.tokens, vec![UNKNOWN]);
        assert_eq!(a.confidence, 0.0);
    }

    #[test]
    fn unique_sentence_match() {
        let a = ask(
            "The dog ran. A cat slept. Bright moons shine over quiet lakes tonight forever.",
            "moons shine ?",
        );
        assert_eq!(a.tokens, vec!["bright", "over", "quiet", "lakes", "tonight"]);
    }
}
