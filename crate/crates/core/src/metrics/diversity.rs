use std::collections::HashMap;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NgramTally {
    pub total: usize,
    pub unique: usize,
}

/// Pooled n-gram frequencies over all questions.
pub fn ngram_counts<S: AsRef<str>>(questions: &[Vec<S>], n: usize) -> (NgramTally, HashMap<Vec<&str>, usize>) {
    let mut freq: HashMap<Vec<&str>, usize> = HashMap::new();
    let mut total = 0;
    if n > 0 {
        for q in questions {
            let toks: Vec<&str> = q.iter().map(AsRef::as_ref).collect();
            for g in toks.windows(n) {
                *freq.entry(g.to_vec()).or_default() += 1;
                total += 1;
            }
        }
    }
    (
        NgramTally {
            total,
            unique: freq.len(),
        },
        freq,
    )
}

/// Unique over total n-grams, pooled; 0 (with a warning) when there are none.
pub fn dist_n<S: AsRef<str>>(questions: &[Vec<S>], n: usize) -> f64 {
    let (tally, _) = ngram_counts(questions, n);
    if tally.total == 0 {
        log::warn!("dist-{n}: no {n}-grams");
        return 0.0;
    }
    tally.unique as f64 / tally.total as f64
}

/// Natural-log entropy of the pooled n-gram distribution.
pub fn ent_n<S: AsRef<str>>(questions: &[Vec<S>], n: usize) -> f64 {
    let (tally, freq) = ngram_counts(questions, n);
    if tally.total == 0 {
        return 0.0;
    }
    let total = tally.total as f64;
    let mut counts: Vec<usize> = freq.into_values().collect();
    counts.sort_unstable();
    -counts
        .into_iter()
        .map(|c| {
            let p = c as f64 / total;
            p * p.ln()
        })
        .sum::<f64>()
}
