use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use redr_core::autodiff::{grad_check, Dropout, Tape};
use redr_core::data::vocab::RESERVED;
use redr_core::data::{EncodedExample, Vocabulary};
use redr_core::model::{Redr, TrainConfig};
use serde_json::{json, Value};

const HIDDEN: usize = 8;
const VOCAB: usize = 20;
const RATIONALE: usize = 4;
const HISTORY: usize = 6;
const TARGET: usize = 3;
const REASONING_LAYERS: usize = 3;

fn toy_model(seed: u64) -> redr_core::Result<Redr> {
    let vocab = Vocabulary::from_tokens((0..VOCAB - RESERVED.len()).map(|i| format!("w{i}")));
    let config = TrainConfig {
        hidden_size: HIDDEN,
        emb_dim: 6,
        lstm_layers: 2,
        reasoning_layers: REASONING_LAYERS,
        dropout: 0.0,
        param_init: 0.3,
        seed,
        ..TrainConfig::default()
    };
    Redr::new(config, vocab)
}

/// Random example whose last rationale token is out of vocabulary and is
/// copied as the last target token.
fn toy_example(vocab: &Vocabulary, seed: u64) -> EncodedExample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut pick = || rng.gen_range(RESERVED.len()..vocab.len());
    let mut rationale: Vec<String> = (0..RATIONALE - 1)
        .map(|_| vocab.token(pick()).unwrap_or_default().to_string())
        .collect();
    rationale.push("zz_oov".to_string());
    let history = (0..HISTORY).map(|_| pick()).collect();
    let mut target: Vec<usize> = (0..TARGET - 1).map(|_| pick()).collect();
    target.push(vocab.len());
    EncodedExample {
        rationale: vocab.encode_source(&rationale),
        history,
        target,
    }
}

pub struct Summary {
    pub max_relative_error: f64,
    pub json: Value,
}

/// Checks every trainable entry of the full sequence loss for `seeds` seeds.
pub fn run(seeds: u64, epsilon: f64, tolerance: f64) -> redr_core::Result<Summary> {
    let mut per_seed = Vec::new();
    let mut max_rel = 0.0f64;
    let (mut entries, mut failing) = (0usize, 0usize);
    let mut max_abs_failing = 0.0f64;
    for seed in 0..seeds {
        let model = toy_model(seed)?;
        let ex = toy_example(&model.vocab, seed);
        let report = grad_check(
            &model.store,
            |tape: &mut Tape<'_>| Ok(model.nll(tape, &ex, &mut Dropout::disabled())?.0),
            epsilon,
        )?;
        let fails: Vec<(f64, f64)> = report.failing(tolerance).collect();
        for &(a, n) in &fails {
            max_abs_failing = max_abs_failing.max((a - n).abs());
        }
        log::info!(
            "seed {seed}: max relative error {:.3e} over {} entries",
            report.max_relative_error,
            report.entries_checked
        );
        max_rel = max_rel.max(report.max_relative_error);
        entries += report.entries_checked;
        failing += fails.len();
        per_seed.push(json!({
            "seed": seed,
            "max_relative_error": report.max_relative_error,
            "worst": report.worst.map(|(name, i)| json!({"param": name, "index": i})),
            "entries": report.entries_checked,
            "failing": fails.len(),
        }));
    }
    let json = json!({
        "max_relative_error": max_rel,
        "tolerance": tolerance,
        "epsilon": epsilon,
        "passed": max_rel < tolerance,
        "entries": entries,
        "failing_entries": failing,
        "max_abs_diff_of_failing": max_abs_failing,
        "dims": {"hidden": HIDDEN, "vocab": VOCAB, "rationale": RATIONALE, "history": HISTORY,
                 "target": TARGET, "reasoning_layers": REASONING_LAYERS},
        "seeds": per_seed,
    });
    Ok(Summary {
        max_relative_error: max_rel,
        json,
    })
}
