use crate::error::{Error, Result};

pub fn lcs_len<A: AsRef<str>, B: AsRef<str>>(a: &[A], b: &[B]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x.as_ref() == y.as_ref() {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS F-measure with β = 1. An empty hypothesis or reference scores 0.
pub fn rouge_l<A: AsRef<str>, B: AsRef<str>>(hyp: &[A], reference: &[B]) -> f64 {
    if hyp.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let l = lcs_len(hyp, reference) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let p = l / hyp.len() as f64;
    let r = l / reference.len() as f64;
    2.0 * p * r / (p + r)
}

/// Mean sentence-level ROUGE-L.
pub fn rouge_l_corpus<A: AsRef<str>, B: AsRef<str>>(hypotheses: &[Vec<A>], references: &[Vec<B>]) -> Result<f64> {
    if hypotheses.len() != references.len() {
        return Err(Error::shape("rouge_l", &[hypotheses.len()], &[references.len()]));
    }
    if hypotheses.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = hypotheses.iter().zip(references).map(|(h, r)| rouge_l(h, r)).sum();
    Ok(total / hypotheses.len() as f64)
}
