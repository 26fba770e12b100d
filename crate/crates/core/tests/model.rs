mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use redr_core::autodiff::{Dropout, ParamStore, Tape};
use redr_core::data::vocab::EOS;
use redr_core::data::{EncodedExample, SourceIds};
use redr_core::model::checkpoint::{load, read_checkpoint, save, write_checkpoint};
use redr_core::model::decoder::{attend, init_state, DecoderContext, DecoderParams};
use redr_core::model::encoder::BiLstmParams;
use redr_core::model::reasoning::{reason_layer, GateParams};
use redr_core::model::{Redr, StepModel};
use redr_core::Tensor;

fn zeroed(mut model: Redr) -> Redr {
    let ids: Vec<_> = model.store.ids().collect();
    for id in ids {
        model.store.value_mut(id).data_mut().fill(0.0);
    }
    model
}

fn first_step_probs(model: &Redr, ex: &EncodedExample) -> Vec<f64> {
    let dec = model.decoder(ex).unwrap();
    let s = dec.initial().unwrap();
    dec.step(&s).unwrap().0.into_iter().map(f64::exp).collect()
}

#[test]
fn attend_single_column() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = ParamStore::new();
    let params = DecoderParams::register(&mut store, 1, 4, 4, 3, 10, 0.5, &mut rng).unwrap();
    let mut tape = Tape::with_params(&store);
    let mem = tape.constant(Tensor::matrix(4, 1, vec![0.1, -0.2, 0.3, 0.9]).unwrap());
    let o = tape.constant(Tensor::column(vec![0.5, 0.5, -0.5, 0.1]).unwrap());
    let ctx = DecoderContext::new(&mut tape, &params, mem, vec![7], 10).unwrap();
    let (alpha, read) = attend(&mut tape, o, &ctx, params.attention).unwrap();
    assert_eq!(tape.value(alpha).data(), &[1.0]);
    assert_eq!(tape.value(read).data(), tape.value(mem).data());
}

#[test]
fn attend_identical_columns_is_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut store = ParamStore::new();
    let params = DecoderParams::register(&mut store, 1, 4, 4, 3, 10, 0.5, &mut rng).unwrap();
    let mut tape = Tape::with_params(&store);
    let col = [0.3, -0.1, 0.7, 0.2];
    let mem = tape.constant(Tensor::matrix(4, 3, col.iter().flat_map(|&v| [v; 3]).collect()).unwrap());
    let o = tape.constant(Tensor::column(vec![0.2, -0.4, 0.1, 0.3]).unwrap());
    let ctx = DecoderContext::new(&mut tape, &params, mem, vec![4, 5, 6], 10).unwrap();
    let (alpha, _) = attend(&mut tape, o, &ctx, params.attention).unwrap();
    for &a in tape.value(alpha).data() {
        assert!((a - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn attend_read_lies_in_convex_hull() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let params = DecoderParams::register(&mut store, 1, 6, 6, 3, 10, 1.0, &mut rng).unwrap();
        let mut tape = Tape::with_params(&store);
        let n = rng.gen_range(1..8);
        let m = Tensor::matrix(6, n, (0..6 * n).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
        let mem = tape.constant(m.clone());
        let o = tape.constant(Tensor::column((0..6).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap());
        let ctx = DecoderContext::new(&mut tape, &params, mem, vec![4; n], 10).unwrap();
        let (alpha, read) = attend(&mut tape, o, &ctx, params.attention).unwrap();
        let sum: f64 = tape.value(alpha).data().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        for r in 0..6 {
            let row: Vec<f64> = (0..n).map(|c| m.get(r, c)).collect();
            let lo = row.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let v = tape.value(read).data()[r];
            assert!(v >= lo - 1e-12 && v <= hi + 1e-12, "row {r}: {v} not in [{lo}, {hi}]");
        }
    }
}

#[test]
fn first_read_is_column_mean() {
    let model = toy_model(8, 20, 3, 2);
    let ex = toy_example(&model.vocab, 5, 4, 3, 2);
    let mut tape = Tape::with_params(&model.store);
    let enc = model.encode(&mut tape, &ex, &mut Dropout::disabled()).unwrap();
    let state = init_state(&mut tape, &model.params.decoder, &enc.context).unwrap();
    let mem = tape.value(enc.context.memory).clone();
    for r in 0..8 {
        let mean = (0..5).map(|c| mem.get(r, c)).sum::<f64>() / 5.0;
        assert!((tape.value(state.read).data()[r] - mean).abs() < 1e-15);
    }
}

#[test]
fn zero_parameters_give_uniform_generation_and_half_gate() {
    let model = zeroed(toy_model(8, 20, 3, 1));
    let ex = toy_example(&model.vocab, 4, 5, 3, 1);
    let trace = model.trace(&ex, &[EOS]).unwrap();
    assert_eq!(trace[0].lambda, 0.5);
    assert!(trace[0].alpha.iter().all(|&a| (a - 0.25).abs() < 1e-15));
    let probs = first_step_probs(&model, &ex);
    assert_eq!(probs.len(), 21);
    let mut counts = [0usize; 21];
    for &s in &ex.rationale.ext_ids {
        counts[s] += 1;
    }
    for (y, p) in probs.iter().enumerate() {
        let gen = if y < 20 { 0.5 / 20.0 } else { 0.0 };
        let want = gen + 0.5 * counts[y] as f64 / 4.0;
        assert!((p - want).abs() < 1e-15, "id {y}: {p} vs {want}");
    }
}

#[test]
fn zero_parameter_loss_closed_form() {
    let model = zeroed(toy_model(8, 20, 3, 5));
    let ex = toy_example(&model.vocab, 4, 5, 3, 5);
    let mut tape = Tape::with_params(&model.store);
    let (loss, _) = model.nll(&mut tape, &ex, &mut Dropout::disabled()).unwrap();
    let want: f64 = ex
        .target
        .iter()
        .chain([&EOS])
        .map(|&y| {
            let count = ex.rationale.ext_ids.iter().filter(|&&s| s == y).count() as f64;
            let gen = if y < 20 { 0.5 / 20.0 } else { 0.0 };
            -(gen + 0.5 * count / 4.0).ln()
        })
        .sum();
    assert!((tape.scalar(loss) - want).abs() < 1e-12);
}

/// A rationale holding every id once makes the zero-parameter mixture
/// exactly uniform, so the loss is `(L + 1)·ln V`.
#[test]
fn uniform_model_loss_is_length_times_log_vocab() {
    let model = zeroed(toy_model(8, 20, 3, 6));
    let ids: Vec<usize> = (0..20).collect();
    let ex = EncodedExample {
        rationale: SourceIds {
            ids: ids.clone(),
            ext_ids: ids,
            oov: Vec::new(),
        },
        history: vec![9, 10, 11],
        target: vec![7, 8, 12, 19],
    };
    let probs = first_step_probs(&model, &ex);
    assert!(probs.iter().all(|&p| (p - 0.05).abs() < 1e-15));
    let mut tape = Tape::with_params(&model.store);
    let (loss, _) = model.nll(&mut tape, &ex, &mut Dropout::disabled()).unwrap();
    assert!((tape.scalar(loss) - 5.0 * 20f64.ln()).abs() < 1e-12);
}

#[test]
fn oov_copy_slot_gets_copy_mass_only() {
    let model = toy_model(8, 20, 3, 8);
    let ex = toy_example(&model.vocab, 4, 5, 3, 8);
    let probs = first_step_probs(&model, &ex);
    let trace = model.trace(&ex, &[EOS]).unwrap();
    let slot = 20;
    let want = (1.0 - trace[0].lambda) * trace[0].alpha[3];
    assert!((probs[slot] - want).abs() < 1e-15);
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn all_pad_target_is_an_error() {
    let model = toy_model(8, 20, 2, 1);
    let mut ex = toy_example(&model.vocab, 4, 5, 3, 1);
    ex.target = vec![0, 0];
    let mut tape = Tape::with_params(&model.store);
    assert!(model.nll(&mut tape, &ex, &mut Dropout::disabled()).is_err());
}

#[test]
fn loss_is_non_negative() {
    for seed in 0..10 {
        let model = toy_model(8, 20, 3, seed);
        let ex = toy_example(&model.vocab, 5, 6, 4, seed);
        let mut tape = Tape::with_params(&model.store);
        let (loss, _) = model.nll(&mut tape, &ex, &mut Dropout::disabled()).unwrap();
        assert!(tape.scalar(loss) >= 0.0);
    }
}

#[test]
fn greedy_log_prob_matches_teacher_forcing() {
    for seed in 0..5 {
        let model = toy_model(8, 20, 3, seed);
        let ex = toy_example(&model.vocab, 5, 4, 3, seed);
        let g = model.greedy(&ex, 8).unwrap();
        let body: Vec<usize> = g.tokens.iter().copied().filter(|&t| t != EOS).collect();
        let mut tape = Tape::with_params(&model.store);
        let score = model
            .score_sequence(&mut tape, &ex, &body, &mut Dropout::disabled())
            .unwrap();
        if g.finished {
            assert!((tape.scalar(score.log_prob) - g.log_prob).abs() < 1e-10);
        } else {
            assert!(tape.scalar(score.log_prob) < g.log_prob);
        }
    }
}

#[test]
fn every_parameter_receives_gradient() {
    for seed in 0..5 {
        let model = toy_model(8, 20, 3, seed);
        let batch: Vec<EncodedExample> = (0..4)
            .map(|i| toy_example(&model.vocab, 5, 6, 4, seed * 10 + i))
            .collect();
        let mut grads = redr_core::autodiff::Gradients::new(&model.store);
        for ex in &batch {
            let mut tape = Tape::with_params(&model.store);
            let (loss, _) = model.nll(&mut tape, ex, &mut Dropout::disabled()).unwrap();
            tape.accumulate_gradients(loss, 1.0, &mut grads).unwrap();
        }
        for (id, p) in model.store.iter() {
            let g = grads.raw(id).unwrap_or_else(|| panic!("no gradient for {}", p.name));
            assert!(g.iter().any(|&v| v != 0.0), "zero gradient for {}", p.name);
        }
    }
}

/// Regression fixture: one reasoning layer over an all-zero history.
#[test]
fn zero_history_reason_layer_fixture() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut store = ParamStore::new();
    let d = 4;
    let p = BiLstmParams::register(&mut store, "int", 3 * d, d, 0.5, &mut rng).unwrap();
    let _ = GateParams::register(&mut store, "gate", d, 0.5, &mut rng).unwrap();
    let u = Tensor::matrix(d, 3, (0..12).map(|i| ((i as f64) * 0.37).sin()).collect()).unwrap();
    let mut tape = Tape::with_params(&store);
    let u = tape.constant(u);
    let c = tape.constant(Tensor::zeros(&[d, 2]));
    let (out, co) = reason_layer(&mut tape, u, c, p).unwrap();
    assert!(tape.value(co.s).data().iter().all(|&v| v == 0.0));
    // G = [0; column mean of U] in every column
    let uv = tape.value(u).clone();
    let g = tape.value(co.g);
    for r in 0..d {
        let mean = (0..3).map(|c| uv.get(r, c)).sum::<f64>() / 3.0;
        for col in 0..3 {
            assert_eq!(g.get(r, col), 0.0);
            assert!((g.get(d + r, col) - mean).abs() < 1e-15);
        }
    }
    let got = tape.value(out).data().to_vec();
    let golden = GOLDEN_ZERO_HISTORY;
    assert_eq!(got.len(), golden.len());
    for (g, w) in got.iter().zip(golden) {
        assert!((g - w).abs() < 1e-12, "{got:?}");
    }
}

const GOLDEN_ZERO_HISTORY: [f64; 12] = [
    -0.006760871894534397,
    -0.010551591096434054,
    -0.010808169485445959,
    -0.01838450408376346,
    0.011678316778591068,
    0.08041279880438318,
    0.14476573738713627,
    0.08316389132670596,
    0.012304559534541865,
    0.0014566801661431471,
    0.0018661439693031133,
    0.00561343753591684,
];

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let model = toy_model(8, 20, 3, 9);
    let ex = toy_example(&model.vocab, 5, 4, 3, 9);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save(&path, &model).unwrap();
    let back = load(&path).unwrap();
    assert_eq!(back.config, model.config);
    assert_eq!(back.vocab, model.vocab);
    for (id, p) in model.store.iter() {
        let q = back.store.get(id);
        assert_eq!(p.name, q.name);
        assert_eq!(p.trainable, q.trainable);
        let a: Vec<u64> = p.value.data().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = q.value.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b, "{}", p.name);
    }
    let loss = |m: &Redr| {
        let mut tape = Tape::with_params(&m.store);
        let (l, _) = m.nll(&mut tape, &ex, &mut Dropout::disabled()).unwrap();
        tape.scalar(l).to_bits()
    };
    assert_eq!(loss(&model), loss(&back));
    assert_eq!(model.beam(&ex, 3, 6).unwrap(), back.beam(&ex, 3, 6).unwrap());
}

#[test]
fn checkpoint_rejects_damage() {
    let model = toy_model(8, 20, 1, 1);
    let mut bytes = Vec::new();
    write_checkpoint(&mut bytes, &model).unwrap();
    assert!(read_checkpoint(&mut &bytes[..bytes.len() - 3]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(read_checkpoint(&mut &bad[..]).is_err());
    assert!(read_checkpoint(&mut &bytes[..]).is_ok());
}

#[test]
fn frozen_embeddings_are_not_updated() {
    let mut config = toy_config(8, 2, 3);
    config.finetune_embeddings = false;
    let mut model = Redr::new(config, toy_vocab(20)).unwrap();
    let before = model.store.value(model.params.embedding).clone();
    let ex = toy_example(&model.vocab, 4, 4, 3, 3);
    let mut tape = Tape::with_params(&model.store);
    let (loss, _) = model.nll(&mut tape, &ex, &mut Dropout::disabled()).unwrap();
    let grads = tape.gradients(loss).unwrap();
    drop(tape);
    redr_core::autodiff::sgd_step(&mut model.store, &grads, 0.5).unwrap();
    assert_eq!(model.store.value(model.params.embedding), &before);
}
