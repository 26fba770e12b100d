mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use redr_core::autodiff::{Dropout, ParamStore, Tape};
use redr_core::data::vocab::EOS;
use redr_core::data::{build_history, detokenize, select_rationale, tokenize, HistoryLimits, Passage};
use redr_core::metrics::{corpus_bleu, dist_n, ent_n, ngram_counts, rouge_l};
use redr_core::model::checkpoint::{read_checkpoint, write_checkpoint};
use redr_core::model::reasoning::{gate_combine, GateParams};
use redr_core::model::{beam_search, greedy_decode, Redr};
use redr_core::oracle::f1_score;
use redr_core::Tensor;

const CASES: u32 = 1000;
const MODEL_CASES: u32 = 64;

fn matrix(rows: usize, cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(lo..hi, rows * cols).prop_map(move |v| Tensor::matrix(rows, cols, v).unwrap())
}

fn shaped(lo: f64, hi: f64) -> impl Strategy<Value = Tensor> {
    (1usize..7, 1usize..7).prop_flat_map(move |(r, c)| matrix(r, c, lo, hi))
}

fn words() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "the", "it", "?"]), 0..9)
        .prop_map(|v| v.into_iter().map(str::to_string).collect())
}

fn question_sets() -> impl Strategy<Value = Vec<Vec<String>>> {
    prop::collection::vec(words(), 1..6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    #[test]
    fn softmax_columns_sum_to_one(x in shaped(-60.0, 60.0)) {
        let mut tape = Tape::new();
        let v = tape.constant(x);
        let s = tape.softmax_columns(v).unwrap();
        let out = tape.value(s);
        for c in 0..out.cols() {
            let col = out.column_values(c);
            prop_assert!((col.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            prop_assert!(col.iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
    }

    #[test]
    fn copy_mixture_is_a_distribution_with_exact_support(
        logits in prop::collection::vec(-10.0f64..10.0, 2..12),
        scores in prop::collection::vec(-10.0f64..10.0, 1..8),
        z in -30.0f64..30.0,
        seed in any::<u64>(),
    ) {
        let v = logits.len();
        let n = scores.len();
        let ext = v + 3;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let src: Vec<usize> = (0..n).map(|_| rng.gen_range(0..ext)).collect();
        let mut tape = Tape::new();
        let lg = tape.constant(Tensor::column(logits).unwrap());
        let sc = tape.constant(Tensor::column(scores).unwrap());
        let zz = tape.constant(Tensor::scalar(z));
        let p_gen = tape.softmax_columns(lg).unwrap();
        let alpha = tape.softmax_columns(sc).unwrap();
        let lam = tape.sigmoid(zz).unwrap();
        let mix = tape.copy_mix(p_gen, alpha, lam, &src, ext).unwrap();
        let (pg, al, l) = (tape.value(p_gen).data().to_vec(), tape.value(alpha).data().to_vec(), tape.scalar(lam));
        let probs = tape.value(mix).data();
        prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        for (w, &p) in probs.iter().enumerate() {
            let gen = if w < v { l * pg[w] } else { 0.0 };
            if src.contains(&w) {
                let copy: f64 = src.iter().zip(&al).filter(|(&s, _)| s == w).map(|(_, &a)| a).sum();
                prop_assert!((p - gen - (1.0 - l) * copy).abs() <= 1e-12);
            } else {
                prop_assert_eq!(p, gen);
            }
        }
    }

    #[test]
    fn f1_is_symmetric_and_reflexive(a in words(), b in words()) {
        prop_assert_eq!(f1_score(&a, &b), f1_score(&b, &a));
        prop_assert_eq!(f1_score(&a, &a), 1.0);
        let f = f1_score(&a, &b);
        prop_assert!((0.0..=1.0).contains(&f));
    }

    #[test]
    fn rouge_is_one_exactly_for_equal_sequences(a in words(), b in words()) {
        prop_assume!(!a.is_empty() && !b.is_empty());
        prop_assert_eq!(rouge_l(&a, &b) == 1.0, a == b);
        prop_assert_eq!(rouge_l(&a, &a), 1.0);
    }

    #[test]
    fn diversity_is_permutation_invariant(qs in question_sets(), seed in any::<u64>()) {
        let mut shuffled = qs.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.gen_range(0..=i));
        }
        for n in 1..=4 {
            prop_assert_eq!(dist_n(&qs, n), dist_n(&shuffled, n));
            prop_assert_eq!(ent_n(&qs, n).to_bits(), ent_n(&shuffled, n).to_bits());
        }
    }

    #[test]
    fn entropy_is_bounded_by_distinct_count(qs in question_sets(), n in 1usize..5) {
        let (tally, _) = ngram_counts(&qs, n);
        let h = ent_n(&qs, n);
        prop_assert!(h >= 0.0);
        if tally.unique > 0 {
            prop_assert!(h <= (tally.unique as f64).ln() + 1e-12);
        }
        let d = dist_n(&qs, n);
        prop_assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn bleu_is_pair_order_invariant_and_bounded(pairs in prop::collection::vec((words(), words()), 1..5)) {
        let (h, r): (Vec<_>, Vec<_>) = pairs.iter().cloned().unzip();
        let (hr, rr): (Vec<_>, Vec<_>) = pairs.iter().rev().cloned().unzip();
        let a = corpus_bleu(&h, &r).unwrap();
        prop_assert_eq!(a, corpus_bleu(&hr, &rr).unwrap());
        prop_assert!((0.0..=1.0 + 1e-12).contains(&a));
    }

    #[test]
    fn tokenize_keeps_text_up_to_whitespace_and_case(text in "[a-zA-Z0-9 .,?!'-]{0,40}") {
        let tokens = tokenize(&text);
        let squeezed: String = text.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_lowercase();
        prop_assert_eq!(tokens.concat(), squeezed);
        prop_assert!(tokens.iter().all(|t| !t.is_empty() && !t.contains(char::is_whitespace)));
        prop_assert_eq!(tokenize(&detokenize(&tokens)), tokens);
    }

    #[test]
    fn rationale_selection_is_total(sentences in 1usize..8, k in 1usize..100) {
        let text: Vec<String> = (0..sentences).map(|i| format!("Sentence number {i} is here.")).collect();
        let passage = Passage::new("p", text.join(" "));
        prop_assert_eq!(passage.sentence_count(), sentences);
        let r = select_rationale(&passage, k, None).unwrap();
        prop_assert_eq!(r.sentence, Some(k.min(sentences)));
        prop_assert_eq!(r.tokens, passage.sentence_tokens(k.min(sentences)));
    }

    #[test]
    fn history_grows_with_turns(turns in prop::collection::vec((words(), words()), 0..6)) {
        let mut last = 0;
        for k in 0..=turns.len() {
            let h = build_history(&turns[..k], HistoryLimits::unbounded());
            let expected = if k == 0 { 1 } else { turns[..k].iter().map(|(q, a)| 2 + q.len() + a.len()).sum() };
            prop_assert_eq!(h.len(), expected);
            prop_assert!(k == 0 || h.len() > last);
            last = h.len();
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    #[test]
    fn gate_output_lies_between_its_inputs(
        d in 1usize..6,
        n in 1usize..6,
        seed in any::<u64>(),
        scale in 0.1f64..3.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let gate = GateParams::register(&mut store, "gate", d, scale, &mut rng).unwrap();
        let mut rand = |r: usize, c: usize| {
            Tensor::matrix(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
        };
        let (u, ut, g, r) = (rand(d, n), rand(d, n), rand(2 * d, n), rand(d, n));
        let mut tape = Tape::with_params(&store);
        let (u, ut, g, r) = (tape.constant(u), tape.constant(ut), tape.constant(g), tape.constant(r));
        let (next, p) = gate_combine(&mut tape, u, ut, g, r, gate).unwrap();
        prop_assert!(tape.value(p).data().iter().all(|&x| x > 0.0 && x < 1.0));
        let (a, b, x) = (tape.value(u).data(), tape.value(ut).data(), tape.value(next).data());
        for i in 0..x.len() {
            prop_assert!(x[i] >= a[i].min(b[i]) && x[i] <= a[i].max(b[i]));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(MODEL_CASES))]

    #[test]
    fn beam_scores_are_ordered_and_width_one_is_greedy(seed in any::<u64>(), beam in 1usize..6) {
        let model = common::toy_model(6, 14, 2, seed);
        let ex = common::toy_example(&model.vocab, 4, 3, 2, seed);
        let dec = model.decoder(&ex).unwrap();
        let hyps = beam_search(&dec, beam, EOS, 8).unwrap();
        prop_assert!(!hyps.is_empty() && hyps.len() <= beam);
        for w in hyps.windows(2) {
            prop_assert!(w[0].score() >= w[1].score());
        }
        for h in &hyps {
            prop_assert!(h.finished == (h.tokens.last() == Some(&EOS)));
            prop_assert!(h.finished || h.tokens.len() == 8);
        }
        let greedy = greedy_decode(&dec, EOS, 8).unwrap();
        prop_assert_eq!(&beam_search(&dec, 1, EOS, 8).unwrap()[0], &greedy);
    }

    #[test]
    fn checkpoint_round_trip_preserves_forward_bits(seed in any::<u64>(), layers in 1usize..4) {
        let model = common::toy_model(4, 12, layers, seed);
        let ex = common::toy_example(&model.vocab, 3, 2, 2, seed);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &model).unwrap();
        let loaded: Redr = read_checkpoint(&mut buf.as_slice()).unwrap();
        let loss = |m: &Redr| {
            let mut tape = Tape::with_params(&m.store);
            let (l, _) = m.nll(&mut tape, &ex, &mut Dropout::disabled()).unwrap();
            tape.scalar(l).to_bits()
        };
        prop_assert_eq!(loss(&model), loss(&loaded));
        prop_assert_eq!(loaded.config, model.config);
    }
}
