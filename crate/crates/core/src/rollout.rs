//! Turn-by-turn conversation generation: the model asks about successive
//! rationale sentences and an oracle answers, feeding the history forward.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::data::history::build_history;
use crate::data::passage::{select_rationale, Passage};
use crate::data::tokenize::detokenize;
use crate::data::EncodedExample;
use crate::error::{Error, Result};
use crate::model::Redr;
use crate::oracle::{oracle_answer, OracleRequest, QaOracle};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedTurn {
    /// 1-based.
    pub turn: usize,
    /// 1-based sentence used as the rationale.
    pub rationale_sentence: usize,
    /// Character span of the rationale in the passage text.
    pub rationale_span: (usize, usize),
    /// History tokens the model saw for this turn.
    pub history: Vec<String>,
    pub question: Vec<String>,
    /// Length-normalized log-probability of the chosen question.
    pub score: f64,
    pub answer: Vec<String>,
    pub confidence: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedConversation {
    pub passage_id: String,
    pub story: String,
    pub turns: Vec<GeneratedTurn>,
}

/// Input of one generation step, target left empty.
pub fn encode_input(model: &Redr, rationale: &[String], history: &[String]) -> EncodedExample {
    EncodedExample {
        rationale: model.vocab.encode_source(rationale),
        history: model.vocab.encode(history),
        target: Vec::new(),
    }
}

/// Generates `turns` question/answer pairs over `passage`. Turn `k` asks
/// about sentence `min(k, sentences)` with the best beam question given the
/// history of all earlier generated turns; the oracle's answer is appended
/// to the history.
pub fn generate_conversation(
    passage: &Passage,
    model: &Redr,
    oracle: &dyn QaOracle,
    turns: usize,
) -> Result<GeneratedConversation> {
    if turns == 0 {
        return Err(Error::Config("turns must be at least 1".into()));
    }
    if passage.sentence_count() == 0 {
        return Err(Error::Passage {
            passage: passage.id.clone(),
            message: "passage has no sentences".into(),
        });
    }
    let tokens = passage.token_strings();
    let limits = model.config.history_limits();
    let mut previous: Vec<(Vec<String>, Vec<String>)> = Vec::new();
    let mut out = Vec::with_capacity(turns);
    for k in 1..=turns {
        let rationale = select_rationale(passage, k, None)?;
        let history = build_history(&previous, limits);
        let input = encode_input(model, &rationale.tokens, &history);
        let best = model
            .beam(&input, model.config.beam_size, model.config.max_decode_len)?
            .into_iter()
            .next()
            .ok_or_else(|| Error::Data("beam search returned no hypothesis".into()))?;
        let question = model.surface(&input, &best.tokens);
        let answer = oracle_answer(
            oracle,
            &OracleRequest {
                passage: &tokens,
                sentences: passage.sentence_ranges(),
                history: &history,
                question: &question,
                reference: None,
            },
        );
        previous.push((question.clone(), answer.tokens.clone()));
        out.push(GeneratedTurn {
            turn: k,
            rationale_sentence: rationale.sentence.expect("sentence rationale"),
            rationale_span: rationale.char_span,
            history,
            question,
            score: best.score(),
            answer: answer.tokens,
            confidence: answer.confidence,
        });
    }
    Ok(GeneratedConversation {
        passage_id: passage.id.clone(),
        story: passage.text.clone(),
        turns: out,
    })
}

/// CoQA-schema document for generated conversations; the rationale
/// sentence is recorded as the answer span.
pub fn to_coqa_json(conversations: &[GeneratedConversation]) -> Value {
    let data: Vec<Value> = conversations
        .iter()
        .map(|c| {
            let chars: Vec<char> = c.story.chars().collect();
            let questions: Vec<Value> = c
                .turns
                .iter()
                .map(|t| json!({ "input_text": detokenize(&t.question), "turn_id": t.turn }))
                .collect();
            let answers: Vec<Value> = c
                .turns
                .iter()
                .map(|t| {
                    let (s, e) = t.rationale_span;
                    json!({
                        "input_text": detokenize(&t.answer),
                        "span_start": s,
                        "span_end": e,
                        "span_text": chars[s..e].iter().collect::<String>(),
                        "turn_id": t.turn,
                    })
                })
                .collect();
            json!({
                "id": c.passage_id,
                "source": "generated",
                "story": c.story,
                "questions": questions,
                "answers": answers,
            })
        })
        .collect();
    json!({ "version": "1.0", "data": data })
}

/// One line of generation output for analysis tooling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub example_id: String,
    pub question_tokens: Vec<String>,
    pub score: f64,
    pub lambda_trace: Vec<f64>,
    pub alpha_trace: Vec<Vec<f64>>,
}

/// Best beam question for `input` with its per-step λ and α.
pub fn generation_record(model: &Redr, example_id: &str, input: &EncodedExample) -> Result<GenerationRecord> {
    let best = model
        .beam(input, model.config.beam_size, model.config.max_decode_len)?
        .into_iter()
        .next()
        .ok_or_else(|| Error::Data("beam search returned no hypothesis".into()))?;
    let trace = model.trace(input, &best.tokens)?;
    Ok(GenerationRecord {
        example_id: example_id.to_string(),
        question_tokens: model.surface(input, &best.tokens),
        score: best.score(),
        lambda_trace: trace.iter().map(|s| s.lambda).collect(),
        alpha_trace: trace.into_iter().map(|s| s.alpha).collect(),
    })
}
