use std::collections::HashMap;

use crate::error::{Error, Result};

/// Constant of the geometric smoothing applied to empty precisions.
pub const SMOOTHING_K: f64 = 5.0;

/// Clipped n-gram matches and candidate n-gram counts for n = 1..4, summed
/// over a corpus.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BleuStats {
    pub matches: [usize; 4],
    pub candidates: [usize; 4],
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    pub fn add_pair<H: AsRef<str>, R: AsRef<str>>(&mut self, hyp: &[H], reference: &[R]) {
        let hyp: Vec<&str> = hyp.iter().map(AsRef::as_ref).collect();
        let reference: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
        self.hyp_len += hyp.len();
        self.ref_len += reference.len();
        for n in 1..=4 {
            if hyp.len() < n {
                continue;
            }
            let mut ref_counts: HashMap<&[&str], usize> = HashMap::new();
            for g in reference.windows(n) {
                *ref_counts.entry(g).or_default() += 1;
            }
            let mut hyp_counts: HashMap<&[&str], usize> = HashMap::new();
            for g in hyp.windows(n) {
                *hyp_counts.entry(g).or_default() += 1;
            }
            self.candidates[n - 1] += hyp.len() + 1 - n;
            self.matches[n - 1] += hyp_counts
                .iter()
                .map(|(g, &c)| c.min(ref_counts.get(g).copied().unwrap_or(0)))
                .sum::<usize>();
        }
    }

    /// Modified precisions, with every zero-match order replaced by
    /// `1 / (invcnt · candidates)` where `invcnt` is multiplied by
    /// `K / ln(hyp_len)` at each such order.
    #[allow(clippy::needless_range_loop)]
    pub fn precisions(&self) -> [f64; 4] {
        let mut invcnt = 1.0;
        let log_len = (self.hyp_len.max(2) as f64).ln();
        let mut out = [0.0; 4];
        for n in 0..4 {
            let cand = self.candidates[n].max(1) as f64;
            out[n] = if self.matches[n] == 0 {
                invcnt *= SMOOTHING_K / log_len;
                1.0 / (invcnt * cand)
            } else {
                self.matches[n] as f64 / cand
            };
        }
        out
    }

    pub fn brevity_penalty(&self) -> f64 {
        if self.hyp_len == 0 {
            0.0
        } else if self.hyp_len > self.ref_len {
            1.0
        } else {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        }
    }

    pub fn bleu(&self) -> f64 {
        if self.hyp_len == 0 {
            return 0.0;
        }
        let log_p: f64 = self.precisions().iter().map(|p| 0.25 * p.ln()).sum();
        self.brevity_penalty() * log_p.exp()
    }
}

/// Corpus BLEU-4 over one reference per hypothesis.
pub fn corpus_bleu<H: AsRef<str>, R: AsRef<str>>(hypotheses: &[Vec<H>], references: &[Vec<R>]) -> Result<f64> {
    if hypotheses.len() != references.len() {
        return Err(Error::shape("bleu", &[hypotheses.len()], &[references.len()]));
    }
    let mut stats = BleuStats::default();
    for (h, r) in hypotheses.iter().zip(references) {
        stats.add_pair(h, r);
    }
    Ok(stats.bleu())
}
