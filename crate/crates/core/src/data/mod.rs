//! Corpus ingestion: tokenization, sentence segmentation, CoQA and SQuAD
//! readers, vocabularies and example assembly.

pub mod coqa;
pub mod embeddings;
pub mod example;
pub mod history;
pub mod passage;
pub mod squad;
pub mod tokenize;
pub mod vocab;

pub use coqa::{parse_coqa, parse_coqa_file, QaTurn, Story};
pub use embeddings::load_embeddings;
pub use example::{
    assemble_examples, build_vocab, ConversationExample, Dataset, EncodedExample, HistoryAnswers, PassageText,
};
pub use history::{build_history, HistoryLimits};
pub use passage::{select_rationale, Passage, Rationale};
pub use squad::{parse_squad, parse_squad_file};
pub use tokenize::{detokenize, tokenize};
pub use vocab::{SourceIds, Vocabulary};
