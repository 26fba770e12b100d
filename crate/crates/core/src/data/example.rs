use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::coqa::Story;
use crate::data::history::{build_history, HistoryLimits};
use crate::data::passage::{select_rationale, Passage};
use crate::data::vocab::{SourceIds, Vocabulary};
use crate::error::{Error, Result};
use crate::oracle::{oracle_answer, OracleRequest, QaOracle};

/// One training unit: generate `question` from `rationale` and `history`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConversationExample {
    pub id: String,
    pub passage_id: String,
    /// 1-based turn index.
    pub turn: usize,
    /// 1-based sentence number when the rationale is a whole sentence.
    pub rationale_sentence: Option<usize>,
    pub rationale: Vec<String>,
    pub history: Vec<String>,
    pub question: Vec<String>,
    /// Gold answer to `question`.
    pub answer: Vec<String>,
}

/// Token-id view of an example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodedExample {
    pub rationale: SourceIds,
    pub history: Vec<usize>,
    /// Extended-space target ids, EOS excluded.
    pub target: Vec<usize>,
}

impl EncodedExample {
    pub fn new(vocab: &Vocabulary, ex: &ConversationExample) -> Self {
        let rationale = vocab.encode_source(&ex.rationale);
        let target = vocab.encode_target(&ex.question, &rationale);
        EncodedExample {
            history: vocab.encode(&ex.history),
            rationale,
            target,
        }
    }
}

/// Tokenized passage with sentence ranges, kept for answering oracles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassageText {
    pub id: String,
    pub tokens: Vec<String>,
    pub sentences: Vec<Range<usize>>,
}

impl From<&Passage> for PassageText {
    fn from(p: &Passage) -> Self {
        PassageText {
            id: p.id.clone(),
            tokens: p.token_strings(),
            sentences: p.sentence_ranges().to_vec(),
        }
    }
}

/// Which answers fill the history of later turns.
#[derive(Clone, Copy)]
pub enum HistoryAnswers<'a> {
    Gold,
    Predicted(&'a dyn QaOracle),
}

/// Builds one example per turn of every story.
pub fn assemble_examples(
    stories: &[Story],
    limits: HistoryLimits,
    answers: HistoryAnswers<'_>,
) -> Result<Vec<ConversationExample>> {
    let mut out = Vec::new();
    for story in stories {
        let passage = &story.passage;
        let text = PassageText::from(passage);
        let mut previous: Vec<(Vec<String>, Vec<String>)> = Vec::new();
        for (i, turn) in story.turns.iter().enumerate() {
            let k = i + 1;
            if turn.question_tokens.is_empty() {
                return Err(Error::Passage {
                    passage: passage.id.clone(),
                    message: format!("turn {k}: empty question"),
                });
            }
            let rationale = select_rationale(passage, k, turn.rationale_span)?;
            let history = build_history(&previous, limits);
            let used_answer = match answers {
                HistoryAnswers::Gold => turn.answer_tokens.clone(),
                HistoryAnswers::Predicted(oracle) => {
                    oracle_answer(
                        oracle,
                        &OracleRequest {
                            passage: &text.tokens,
                            sentences: &text.sentences,
                            history: &history,
                            question: &turn.question_tokens,
                            reference: Some(&turn.answer_tokens),
                        },
                    )
                    .tokens
                }
            };
            out.push(ConversationExample {
                id: format!("{}#{k}", passage.id),
                passage_id: passage.id.clone(),
                turn: k,
                rationale_sentence: rationale.sentence,
                rationale: rationale.tokens,
                history,
                question: turn.question_tokens.clone(),
                answer: turn.answer_tokens.clone(),
            });
            previous.push((turn.question_tokens.clone(), used_answer));
        }
    }
    Ok(out)
}

/// Vocabulary over rationale, history and question tokens.
pub fn build_vocab(examples: &[ConversationExample], min_freq: usize) -> Vocabulary {
    Vocabulary::build(
        examples.iter().flat_map(|e| {
            e.rationale
                .iter()
                .chain(&e.history)
                .chain(&e.question)
                .map(String::as_str)
        }),
        min_freq,
    )
}

/// Cached, encoded corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub vocab: Vocabulary,
    pub passages: Vec<PassageText>,
    pub examples: Vec<ConversationExample>,
    pub encoded: Vec<EncodedExample>,
}

impl Dataset {
    pub fn new(vocab: Vocabulary, passages: Vec<PassageText>, examples: Vec<ConversationExample>) -> Self {
        let encoded = examples.iter().map(|e| EncodedExample::new(&vocab, e)).collect();
        Dataset {
            vocab,
            passages,
            examples,
            encoded,
        }
    }

    pub fn from_stories(
        stories: &[Story],
        limits: HistoryLimits,
        answers: HistoryAnswers<'_>,
        min_freq: usize,
    ) -> Result<Self> {
        let examples = assemble_examples(stories, limits, answers)?;
        let vocab = build_vocab(&examples, min_freq);
        let passages = stories.iter().map(|s| PassageText::from(&s.passage)).collect();
        Ok(Dataset::new(vocab, passages, examples))
    }

    pub fn passage(&self, id: &str) -> Option<&PassageText> {
        self.passages.iter().find(|p| p.id == id)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        Ok(serde_json::from_reader(file)?)
    }
}
