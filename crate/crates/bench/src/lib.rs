//! Fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use redr_core::data::vocab::RESERVED;
use redr_core::data::{EncodedExample, Vocabulary};
use redr_core::model::{Redr, TrainConfig};

pub fn model(hidden: usize, vocab: usize, reasoning_layers: usize) -> Redr {
    let vocab = Vocabulary::from_tokens((0..vocab - RESERVED.len()).map(|i| format!("w{i}")));
    let config = TrainConfig {
        hidden_size: hidden,
        emb_dim: hidden,
        reasoning_layers,
        dropout: 0.0,
        seed: 1,
        ..TrainConfig::default()
    };
    Redr::new(config, vocab).expect("valid bench config")
}

/// Random in-vocabulary example.
pub fn example(vocab: &Vocabulary, rationale: usize, history: usize, target: usize, seed: u64) -> EncodedExample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut word = || {
        vocab
            .token(rng.gen_range(RESERVED.len()..vocab.len()))
            .unwrap_or_default()
            .to_string()
    };
    let r: Vec<String> = (0..rationale).map(|_| word()).collect();
    let h: Vec<String> = (0..history).map(|_| word()).collect();
    let q: Vec<String> = (0..target).map(|_| word()).collect();
    let source = vocab.encode_source(&r);
    EncodedExample {
        history: vocab.encode(&h),
        target: vocab.encode_target(&q, &source),
        rationale: source,
    }
}

/// `count` random questions of `len` tokens over a `vocab`-word alphabet.
pub fn questions(count: usize, len: usize, vocab: usize, seed: u64) -> Vec<Vec<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..len).map(|_| format!("t{}", rng.gen_range(0..vocab))).collect())
        .collect()
}
