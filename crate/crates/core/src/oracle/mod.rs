//! Question answerers used as the reward source and as the answering side of
//! conversation rollout.

mod f1;
mod lexical;
mod pipe;

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use f1::{f1_score, normalize_answer};
pub use lexical::{content_tokens, is_stopword, LexicalOracle};
pub use pipe::PipeOracle;

pub const UNKNOWN: &str = "unknown";

#[derive(Clone, Copy, Debug, Serialize)]
pub struct OracleRequest<'a> {
    pub passage: &'a [String],
    /// Token ranges of the passage sentences; empty means "split on
    /// terminal punctuation".
    pub sentences: &'a [Range<usize>],
    pub history: &'a [String],
    pub question: &'a [String],
    /// Gold answer, visible only to replay-style oracles.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<&'a [String]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleAnswer {
    pub tokens: Vec<String>,
    pub confidence: f64,
}

impl OracleAnswer {
    pub fn unknown() -> Self {
        OracleAnswer {
            tokens: vec![UNKNOWN.to_string()],
            confidence: 0.0,
        }
    }
}

pub trait QaOracle: Send + Sync {
    fn name(&self) -> &str;
    fn answer(&self, request: &OracleRequest<'_>) -> Result<OracleAnswer>;
}

/// Calls `oracle`, mapping any failure (or an empty question) to the
/// `unknown` answer with confidence 0.
pub fn oracle_answer(oracle: &dyn QaOracle, request: &OracleRequest<'_>) -> OracleAnswer {
    if request.question.is_empty() {
        log::warn!("oracle `{}`: empty question", oracle.name());
        return OracleAnswer::unknown();
    }
    match oracle.answer(request) {
        Ok(a) if a.confidence.is_finite() => OracleAnswer {
            confidence: a.confidence.clamp(0.0, 1.0),
            tokens: a.tokens,
        },
        Ok(_) => {
            log::warn!("oracle `{}`: non-finite confidence", oracle.name());
            OracleAnswer::unknown()
        }
        Err(e) => {
            log::warn!("oracle `{}` failed: {e}", oracle.name());
            OracleAnswer::unknown()
        }
    }
}

/// Sentence ranges of a token sequence, split after `.`, `?` and `!`.
pub fn split_token_sentences<S: AsRef<str>>(tokens: &[S]) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, t) in tokens.iter().enumerate() {
        if matches!(t.as_ref(), "." | "?" | "!") {
            out.push(start..i + 1);
            start = i + 1;
        }
    }
    if start < tokens.len() {
        out.push(start..tokens.len());
    }
    out
}

/// Replays the reference answer carried by the request.
#[derive(Clone, Copy, Debug, Default)]
pub struct GoldReplayOracle;

impl QaOracle for GoldReplayOracle {
    fn name(&self) -> &str {
        "gold"
    }

    fn answer(&self, request: &OracleRequest<'_>) -> Result<OracleAnswer> {
        let reference = request
            .reference
            .ok_or_else(|| Error::Oracle("gold replay needs a reference answer".into()))?;
        Ok(OracleAnswer {
            tokens: reference.to_vec(),
            confidence: 1.0,
        })
    }
}

/// Always answers with nothing.
#[derive(Clone, Copy, Debug, Default)]
pub struct NullOracle;

impl QaOracle for NullOracle {
    fn name(&self) -> &str {
        "null"
    }

    fn answer(&self, _request: &OracleRequest<'_>) -> Result<OracleAnswer> {
        Ok(OracleAnswer {
            tokens: Vec::new(),
            confidence: 0.0,
        })
    }
}

/// Answers `yes` exactly when the question contains the marker token.
#[derive(Clone, Debug)]
pub struct MarkerOracle {
    pub marker: String,
}

impl MarkerOracle {
    pub fn new(marker: impl Into<String>) -> Self {
        MarkerOracle { marker: marker.into() }
    }
}

impl QaOracle for MarkerOracle {
    fn name(&self) -> &str {
        "marker"
    }

    fn answer(&self, request: &OracleRequest<'_>) -> Result<OracleAnswer> {
        if request.question.contains(&self.marker) {
            Ok(OracleAnswer {
                tokens: vec!["yes".into()],
                confidence: 1.0,
            })
        } else {
            Ok(OracleAnswer::unknown())
        }
    }
}
