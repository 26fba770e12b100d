use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Anything that can score the next token given a decoding state.
pub trait StepModel {
    type State: Clone;

    fn initial(&self) -> Result<Self::State>;

    /// Log-probabilities over the output space and the state that has
    /// consumed the current input.
    fn step(&self, state: &Self::State) -> Result<(Vec<f64>, Self::State)>;

    /// State whose next input is `token`.
    fn feed(&self, state: Self::State, token: usize) -> Self::State;
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Emitted ids; finished hypotheses end with the end token.
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub finished: bool,
}

impl Hypothesis {
    /// Length-normalized log-probability.
    pub fn score(&self) -> f64 {
        if self.tokens.is_empty() {
            0.0
        } else {
            self.log_prob / self.tokens.len() as f64
        }
    }
}

/// Index of the largest value; ties resolve to the smallest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn check(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::EmptyInput { op: "search" });
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite { op: "search" });
    }
    Ok(())
}

pub fn greedy_decode<M: StepModel>(model: &M, eos: usize, max_len: usize) -> Result<Hypothesis> {
    if max_len == 0 {
        return Err(Error::Config("max_len must be at least 1".into()));
    }
    let mut state = model.initial()?;
    let mut hyp = Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        finished: false,
    };
    for _ in 0..max_len {
        let (lp, next) = model.step(&state)?;
        check(&lp)?;
        let tok = argmax(&lp);
        hyp.tokens.push(tok);
        hyp.log_prob += lp[tok];
        if tok == eos {
            hyp.finished = true;
            break;
        }
        state = model.feed(next, tok);
    }
    Ok(hyp)
}

struct Live<S> {
    hyp: Hypothesis,
    state: S,
}

struct Candidate {
    parent: usize,
    token: usize,
    log_prob: f64,
    step: f64,
    score: f64,
}

/// Beam search ranking partial hypotheses by length-normalized
/// log-probability. Returns at most `beam` hypotheses, best first.
pub fn beam_search<M: StepModel>(model: &M, beam: usize, eos: usize, max_len: usize) -> Result<Vec<Hypothesis>> {
    if beam == 0 {
        return Err(Error::Config("beam must be at least 1".into()));
    }
    if max_len == 0 {
        return Err(Error::Config("max_len must be at least 1".into()));
    }
    let mut live = vec![Live {
        hyp: Hypothesis {
            tokens: Vec::new(),
            log_prob: 0.0,
            finished: false,
        },
        state: model.initial()?,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    for _ in 0..max_len {
        if live.is_empty() || finished.len() >= beam {
            break;
        }
        let mut candidates = Vec::new();
        let mut next_states = Vec::with_capacity(live.len());
        for (parent, l) in live.iter().enumerate() {
            let (lp, next) = model.step(&l.state)?;
            check(&lp)?;
            let mut order: Vec<usize> = (0..lp.len()).collect();
            order.sort_by(|&a, &b| lp[b].partial_cmp(&lp[a]).unwrap_or(Ordering::Equal));
            let len = (l.hyp.tokens.len() + 1) as f64;
            for &tok in order.iter().take(beam) {
                let log_prob = l.hyp.log_prob + lp[tok];
                candidates.push(Candidate {
                    parent,
                    token: tok,
                    log_prob,
                    step: lp[tok],
                    score: log_prob / len,
                });
            }
            next_states.push(next);
        }
        candidates.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(Ordering::Equal)
                .then(b.log_prob.partial_cmp(&a.log_prob).unwrap_or(Ordering::Equal))
                .then(b.step.partial_cmp(&a.step).unwrap_or(Ordering::Equal))
        });
        let room = beam - finished.len();
        let mut next_live = Vec::new();
        for c in candidates.into_iter().take(room) {
            let mut tokens = live[c.parent].hyp.tokens.clone();
            tokens.push(c.token);
            let hyp = Hypothesis {
                tokens,
                log_prob: c.log_prob,
                finished: c.token == eos,
            };
            if hyp.finished {
                finished.push(hyp);
            } else {
                let state = next_states[c.parent].clone();
                next_live.push(Live {
                    hyp,
                    state: model.feed(state, c.token),
                });
            }
        }
        live = next_live;
    }
    finished.extend(live.into_iter().map(|l| l.hyp));
    finished.sort_by(|a, b| b.score().partial_cmp(&a.score()).unwrap_or(Ordering::Equal));
    finished.truncate(beam);
    Ok(finished)
}
