#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use redr_core::data::{EncodedExample, SourceIds, Vocabulary};
use redr_core::model::{Redr, TrainConfig};

/// Vocabulary of exactly `size` entries (reserved tokens included).
pub fn toy_vocab(size: usize) -> Vocabulary {
    let n = size - redr_core::data::vocab::RESERVED.len();
    Vocabulary::from_tokens((0..n).map(|i| format!("w{i}")))
}

pub fn toy_config(d: usize, layers: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        hidden_size: d,
        emb_dim: 6,
        lstm_layers: 2,
        reasoning_layers: layers,
        dropout: 0.0,
        param_init: 0.3,
        seed,
        ..TrainConfig::default()
    }
}

pub fn toy_model(d: usize, vocab: usize, layers: usize, seed: u64) -> Redr {
    Redr::new(toy_config(d, layers, seed), toy_vocab(vocab)).unwrap()
}

/// Random example with `n` rationale tokens (the last one out of
/// vocabulary), `m` history tokens and a `target_len` question that copies
/// the OOV token.
pub fn toy_example(vocab: &Vocabulary, n: usize, m: usize, target_len: usize, seed: u64) -> EncodedExample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let first = redr_core::data::vocab::RESERVED.len();
    let mut pick = || rng.gen_range(first..vocab.len());
    let mut rationale: Vec<String> = (0..n - 1).map(|_| vocab.token(pick()).unwrap().to_string()).collect();
    rationale.push("zz_oov".to_string());
    let history: Vec<usize> = (0..m).map(|_| pick()).collect();
    let source: SourceIds = vocab.encode_source(&rationale);
    let mut target: Vec<usize> = (0..target_len - 1).map(|_| pick()).collect();
    target.push(vocab.len());
    EncodedExample {
        rationale: source,
        history,
        target,
    }
}

const NAMES: &[&str] = &[
    "anna", "ben", "cara", "dev", "emil", "fay", "gus", "hana", "ivan", "june", "kai", "lena", "milo", "nora", "omar",
];
const NOUNS: &[&str] = &[
    "apple", "ball", "boat", "book", "box", "cake", "car", "cat", "chair", "coat", "cup", "dog", "door", "drum", "egg",
    "fish", "flag", "frog", "hat", "kite", "lamp", "letter", "map", "pen", "ring", "rope", "shoe", "sock", "toy",
    "vase",
];
const VERBS: &[(&str, &str)] = &[
    ("found", "find"),
    ("lost", "lose"),
    ("took", "take"),
    ("sold", "sell"),
    ("bought", "buy"),
    ("painted", "paint"),
    ("fixed", "fix"),
    ("hid", "hide"),
    ("dropped", "drop"),
    ("washed", "wash"),
    ("carried", "carry"),
    ("opened", "open"),
    ("kept", "keep"),
    ("made", "make"),
    ("threw", "throw"),
];
const PLACES: &[&str] = &[
    "barn", "city", "farm", "forest", "garden", "house", "lake", "park", "school", "shop",
];
const COLORS: &[&str] = &["black", "blue", "brown", "green", "orange", "red", "white", "yellow"];

pub const MARKER: &str = "please";

/// Options of the synthetic conversation corpus.
pub struct Synth {
    pub stories: usize,
    pub turns: usize,
    /// Probability that a question starts with [`MARKER`].
    pub marker_rate: f64,
    /// Answer every question with "yes" instead of the template answer.
    pub yes_answers: bool,
    pub seed: u64,
}

/// CoQA-schema JSON of template stories: each sentence states one fact and
/// the matching turn asks about it.
pub fn synth_coqa(opts: &Synth) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut data = Vec::new();
    for s in 0..opts.stories {
        let mut story = Vec::new();
        let mut questions = Vec::new();
        let mut answers = Vec::new();
        for t in 0..opts.turns {
            let name = NAMES[rng.gen_range(0..NAMES.len())];
            let (sentence, question, answer) = match rng.gen_range(0..4) {
                0 => {
                    let (past, base) = VERBS[rng.gen_range(0..VERBS.len())];
                    let noun = NOUNS[rng.gen_range(0..NOUNS.len())];
                    (
                        format!("{name} {past} the {noun}."),
                        format!("what did {name} {base}?"),
                        format!("the {noun}"),
                    )
                }
                1 => {
                    let noun = NOUNS[rng.gen_range(0..NOUNS.len())];
                    let color = COLORS[rng.gen_range(0..COLORS.len())];
                    (
                        format!("The {noun} was {color}."),
                        format!("what color was the {noun}?"),
                        color.to_string(),
                    )
                }
                2 => {
                    let place = PLACES[rng.gen_range(0..PLACES.len())];
                    (
                        format!("{name} lived in the {place}."),
                        format!("where did {name} live?"),
                        format!("the {place}"),
                    )
                }
                _ => {
                    let other = NAMES[rng.gen_range(0..NAMES.len())];
                    let place = PLACES[rng.gen_range(0..PLACES.len())];
                    (
                        format!("{name} met {other} at the {place}."),
                        format!("who did {name} meet?"),
                        other.to_string(),
                    )
                }
            };
            let question = if rng.gen::<f64>() < opts.marker_rate {
                format!("{MARKER} {question}")
            } else {
                question
            };
            let answer = if opts.yes_answers { "yes".to_string() } else { answer };
            story.push(sentence);
            questions.push(serde_json::json!({"input_text": question, "turn_id": t + 1}));
            answers.push(serde_json::json!({"input_text": answer, "span_start": -1, "span_end": -1, "turn_id": t + 1}));
        }
        data.push(serde_json::json!({
            "id": format!("syn{s}"),
            "story": story.join(" "),
            "questions": questions,
            "answers": answers,
        }));
    }
    serde_json::json!({"version": "1.0", "data": data}).to_string()
}

pub fn synth_stories(opts: &Synth) -> Vec<redr_core::data::Story> {
    redr_core::data::parse_coqa(&synth_coqa(opts)).unwrap()
}
