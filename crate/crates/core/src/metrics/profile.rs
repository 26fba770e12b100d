use serde::{Deserialize, Serialize};

use crate::oracle::content_tokens;

const AUXILIARIES: &[&str] = &[
    "are", "can", "could", "did", "do", "does", "had", "has", "have", "is", "was", "were", "will", "would",
];
const PRONOUNS: &[&str] = &["he", "her", "him", "his", "it", "its", "she", "their", "them", "they"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionType {
    What,
    Which,
    When,
    Where,
    Who,
    Why,
    YesNo,
    Other,
}

/// Classification by the leading token.
pub fn question_type<S: AsRef<str>>(question: &[S]) -> QuestionType {
    let Some(first) = question.first().map(|t| t.as_ref().to_lowercase()) else {
        return QuestionType::Other;
    };
    match first.as_str() {
        "what" => QuestionType::What,
        "which" => QuestionType::Which,
        "when" => QuestionType::When,
        "where" => QuestionType::Where,
        "who" => QuestionType::Who,
        "why" => QuestionType::Why,
        w if AUXILIARIES.contains(&w) => QuestionType::YesNo,
        _ => QuestionType::Other,
    }
}

fn has_pronoun<S: AsRef<str>>(question: &[S]) -> bool {
    question
        .iter()
        .any(|t| PRONOUNS.contains(&t.as_ref().to_lowercase().as_str()))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinguisticProfile {
    pub questions: usize,
    pub what: f64,
    pub which: f64,
    pub when: f64,
    #[serde(rename = "where")]
    pub where_: f64,
    pub who: f64,
    pub why: f64,
    pub yes_no: f64,
    pub other: f64,
    pub mean_length: f64,
    pub explicit_coref: f64,
    pub implicit_coref: f64,
}

/// Type fractions, mean token length and coreference fractions. A question
/// is explicitly coreferent when it contains a personal pronoun and
/// implicitly coreferent when it has neither a pronoun nor any content
/// token (stopwords and punctuation only, e.g. "where ?").
pub fn linguistic_profile<S: AsRef<str>>(questions: &[Vec<S>]) -> LinguisticProfile {
    let n = questions.len();
    if n == 0 {
        return LinguisticProfile::default();
    }
    let mut p = LinguisticProfile {
        questions: n,
        ..Default::default()
    };
    let mut tokens = 0usize;
    for q in questions {
        tokens += q.len();
        let slot = match question_type(q) {
            QuestionType::What => &mut p.what,
            QuestionType::Which => &mut p.which,
            QuestionType::When => &mut p.when,
            QuestionType::Where => &mut p.where_,
            QuestionType::Who => &mut p.who,
            QuestionType::Why => &mut p.why,
            QuestionType::YesNo => &mut p.yes_no,
            QuestionType::Other => &mut p.other,
        };
        *slot += 1.0;
        let lower: Vec<String> = q.iter().map(|t| t.as_ref().to_lowercase()).collect();
        if has_pronoun(&lower) {
            p.explicit_coref += 1.0;
        } else if content_tokens(&lower).next().is_none() {
            p.implicit_coref += 1.0;
        }
    }
    let nf = n as f64;
    for f in [
        &mut p.what,
        &mut p.which,
        &mut p.when,
        &mut p.where_,
        &mut p.who,
        &mut p.why,
        &mut p.yes_no,
        &mut p.other,
        &mut p.explicit_coref,
        &mut p.implicit_coref,
    ] {
        *f /= nf;
    }
    p.mean_length = tokens as f64 / nf;
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn rule_examples() {
        let p = linguistic_profile(&[q("who gave it to her ?")]);
        assert_eq!((p.who, p.explicit_coref, p.implicit_coref), (1.0, 1.0, 0.0));
        let p = linguistic_profile(&[q("where ?")]);
        assert_eq!((p.where_, p.implicit_coref), (1.0, 1.0));
        let p = linguistic_profile(&[q("why ?"), q("why ?")]);
        assert_eq!((p.why, p.mean_length), (1.0, 2.0));
        assert_eq!(question_type(&q("did she go ?")), QuestionType::YesNo);
        assert_eq!(question_type(&q("how many ?")), QuestionType::Other);
    }
}
