//! Relevance (BLEU, ROUGE-L) and diversity (Dist-n, Ent-n) metrics and a
//! rule-based linguistic profiler for generated questions.

mod bleu;
mod diversity;
mod profile;
mod rouge;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bleu::{corpus_bleu, BleuStats, SMOOTHING_K};
pub use diversity::{dist_n, ent_n, ngram_counts, NgramTally};
pub use profile::{linguistic_profile, question_type, LinguisticProfile, QuestionType};
pub use rouge::{lcs_len, rouge_l, rouge_l_corpus};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bleu: f64,
    pub rouge_l: f64,
    pub dist1: f64,
    pub dist2: f64,
    pub ent4: f64,
    pub counts: MetricCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricCounts {
    pub pairs: usize,
    pub hypothesis_tokens: usize,
    pub reference_tokens: usize,
    pub unigrams: NgramTally,
    pub bigrams: NgramTally,
    pub fourgrams: NgramTally,
}

/// Corpus metrics of paired hypotheses and references; diversity is
/// measured on the hypotheses.
pub fn evaluate<H: AsRef<str>, R: AsRef<str>>(hypotheses: &[Vec<H>], references: &[Vec<R>]) -> Result<MetricReport> {
    if hypotheses.len() != references.len() {
        return Err(Error::shape("evaluate", &[hypotheses.len()], &[references.len()]));
    }
    Ok(MetricReport {
        bleu: corpus_bleu(hypotheses, references)?,
        rouge_l: rouge_l_corpus(hypotheses, references)?,
        dist1: dist_n(hypotheses, 1),
        dist2: dist_n(hypotheses, 2),
        ent4: ent_n(hypotheses, 4),
        counts: MetricCounts {
            pairs: hypotheses.len(),
            hypothesis_tokens: hypotheses.iter().map(Vec::len).sum(),
            reference_tokens: references.iter().map(Vec::len).sum(),
            unigrams: ngram_counts(hypotheses, 1).0,
            bigrams: ngram_counts(hypotheses, 2).0,
            fourgrams: ngram_counts(hypotheses, 4).0,
        },
    })
}
