use std::path::Path;

use serde_json::Value;

use crate::data::passage::Passage;
use crate::data::tokenize::tokenize;
use crate::error::{Error, Result};

/// One question/answer exchange of a CoQA story.
#[derive(Clone, Debug, PartialEq)]
pub struct QaTurn {
    pub turn_id: usize,
    pub question_tokens: Vec<String>,
    pub answer_tokens: Vec<String>,
    /// Character span of the rationale in the passage text.
    pub rationale_span: Option<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Story {
    pub passage: Passage,
    pub turns: Vec<QaTurn>,
}

pub fn parse_coqa_file(path: impl AsRef<Path>) -> Result<Vec<Story>> {
    let text = std::fs::read_to_string(path.as_ref())?;
    parse_coqa(&text)
}

pub fn parse_coqa(json: &str) -> Result<Vec<Story>> {
    let root: Value = serde_json::from_str(json).map_err(|e| {
        Error::Data(format!(
            "malformed CoQA JSON at line {} column {}: {e}",
            e.line(),
            e.column()
        ))
    })?;
    let data = root
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Data("missing field `data`".into()))?;
    data.iter()
        .enumerate()
        .map(|(i, entry)| parse_story(i, entry))
        .collect()
}

fn parse_story(index: usize, entry: &Value) -> Result<Story> {
    let id = entry
        .get("id")
        .and_then(Value::as_str)
        .map(str::to_string)
        .unwrap_or_else(|| format!("#{index}"));
    let missing = |field: &str| Error::Passage {
        passage: id.clone(),
        message: format!("missing field `{field}`"),
    };
    let story = entry
        .get("story")
        .and_then(Value::as_str)
        .ok_or_else(|| missing("story"))?;
    let questions = entry
        .get("questions")
        .and_then(Value::as_array)
        .ok_or_else(|| missing("questions"))?;
    let answers = entry
        .get("answers")
        .and_then(Value::as_array)
        .ok_or_else(|| missing("answers"))?;
    if questions.len() != answers.len() {
        return Err(Error::Passage {
            passage: id,
            message: format!("{} questions but {} answers", questions.len(), answers.len()),
        });
    }
    let passage = Passage::new(id.clone(), story);
    let char_len = passage.char_len();

    let mut turns = Vec::with_capacity(questions.len());
    for (i, (q, a)) in questions.iter().zip(answers).enumerate() {
        let field_err = |field: &str| Error::Passage {
            passage: id.clone(),
            message: format!("turn {}: missing field `{field}`", i + 1),
        };
        let q_text = q
            .get("input_text")
            .and_then(Value::as_str)
            .ok_or_else(|| field_err("questions[].input_text"))?;
        let a_text = a
            .get("input_text")
            .and_then(Value::as_str)
            .ok_or_else(|| field_err("answers[].input_text"))?;
        let turn_id = q
            .get("turn_id")
            .and_then(Value::as_u64)
            .map(|t| t as usize)
            .unwrap_or(i + 1);
        let start = a.get("span_start").and_then(Value::as_i64);
        let end = a.get("span_end").and_then(Value::as_i64);
        let rationale_span = match (start, end) {
            (Some(s), Some(e)) if s >= 0 && e >= 0 => {
                if e < s {
                    return Err(Error::Passage {
                        passage: id.clone(),
                        message: format!("turn {turn_id}: span_end {e} < span_start {s}"),
                    });
                }
                let (s, e) = (s as usize, e as usize);
                if e > char_len {
                    return Err(Error::Passage {
                        passage: id.clone(),
                        message: format!("turn {turn_id}: span {s}..{e} outside passage of {char_len} chars"),
                    });
                }
                Some((s, e))
            }
            _ => None,
        };
        turns.push(QaTurn {
            turn_id,
            question_tokens: tokenize(q_text),
            answer_tokens: tokenize(a_text),
            rationale_span,
        });
    }
    turns.sort_by_key(|t| t.turn_id);
    Ok(Story { passage, turns })
}
