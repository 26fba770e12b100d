use serde::{Deserialize, Serialize};

use crate::data::vocab::{HIST_EMPTY_TOKEN, SEP_A_TOKEN, SEP_Q_TOKEN};

/// Window applied when the flattened history gets long.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryLimits {
    /// Histories longer than this many tokens are truncated...
    pub max_tokens: usize,
    /// ...to this many most recent turns.
    pub keep_turns: usize,
}

impl Default for HistoryLimits {
    fn default() -> Self {
        HistoryLimits {
            max_tokens: 200,
            keep_turns: 3,
        }
    }
}

impl HistoryLimits {
    pub fn unbounded() -> Self {
        HistoryLimits {
            max_tokens: usize::MAX,
            keep_turns: usize::MAX,
        }
    }
}

/// Flattens previous turns into `<q> q₁ <a> a₁ … <q> q_{k−1} <a> a_{k−1}`.
/// With no previous turns the history is the single `<nohist>` token.
pub fn build_history<S: AsRef<str>>(turns: &[(Vec<S>, Vec<S>)], limits: HistoryLimits) -> Vec<String> {
    if turns.is_empty() {
        return vec![HIST_EMPTY_TOKEN.to_string()];
    }
    let full: usize = turns.iter().map(|(q, a)| 2 + q.len() + a.len()).sum();
    let skip = if full > limits.max_tokens {
        turns.len().saturating_sub(limits.keep_turns)
    } else {
        0
    };
    let mut out = Vec::new();
    for (q, a) in &turns[skip..] {
        out.push(SEP_Q_TOKEN.to_string());
        out.extend(q.iter().map(|t| t.as_ref().to_string()));
        out.push(SEP_A_TOKEN.to_string());
        out.extend(a.iter().map(|t| t.as_ref().to_string()));
    }
    out
}
