mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use redr_core::autodiff::{grad_check, Dropout, ParamStore, Tape, Var};
use redr_core::model::decoder::{attend, DecoderContext, DecoderParams};
use redr_core::model::encoder::{bilstm_layer, BiLstmParams};
use redr_core::model::reasoning::{coattend, gate_combine, integrate, GateParams};
use redr_core::{ParamId, Result, Tensor};

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;
const SEEDS: u64 = 20;

fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// `Σ W ⊙ x` with a fixed random `W`, so every output entry matters.
fn project(tape: &mut Tape<'_>, x: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    let shape = tape.value(x).shape().to_vec();
    let w = tape.constant(random(&mut rng, &shape, -1.0, 1.0));
    let p = tape.mul(x, w)?;
    tape.sum(p)
}

fn check<F>(name: &str, store: &ParamStore, f: F)
where
    F: Fn(&mut Tape<'_>) -> Result<Var>,
{
    let report = grad_check(store, f, EPS).unwrap();
    assert!(
        report.max_relative_error < TOL,
        "{name}: {:.3e} at {:?} {:?}",
        report.max_relative_error,
        report.worst,
        report.worst_values
    );
}

struct Leaves {
    store: ParamStore,
    rng: ChaCha8Rng,
}

impl Leaves {
    fn new(seed: u64) -> Self {
        Leaves {
            store: ParamStore::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn add(&mut self, name: &str, shape: &[usize]) -> ParamId {
        let t = random(&mut self.rng, shape, -1.0, 1.0);
        self.store.add(name, t).unwrap()
    }

    fn add_positive(&mut self, name: &str, shape: &[usize]) -> ParamId {
        let t = random(&mut self.rng, shape, 0.5, 2.0);
        self.store.add(name, t).unwrap()
    }
}

#[test]
fn elementwise_and_linear_primitives() {
    for seed in 0..SEEDS {
        let mut l = Leaves::new(seed);
        let a = l.add("a", &[3, 4]);
        let b = l.add("b", &[4, 2]);
        let c = l.add("c", &[3, 4]);
        let pos = l.add_positive("pos", &[3, 4]);
        let v = l.add("v", &[3, 1]);
        let row = l.add("row", &[1, 4]);
        let s = l.store;
        check("matmul", &s, |t| {
            let (a, b) = (t.param(a)?, t.param(b)?);
            let y = t.matmul(a, b)?;
            project(t, y, seed)
        });
        check("transpose", &s, |t| {
            let a = t.param(a)?;
            let y = t.transpose(a)?;
            project(t, y, seed)
        });
        check("add/sub/mul", &s, |t| {
            let (a, c) = (t.param(a)?, t.param(c)?);
            let x = t.add(a, c)?;
            let y = t.sub(x, c)?;
            let z = t.mul(y, c)?;
            project(t, z, seed)
        });
        check("affine", &s, |t| {
            let a = t.param(a)?;
            let y = t.affine(a, -2.5, 0.75)?;
            project(t, y, seed)
        });
        check("sigmoid/tanh/exp", &s, |t| {
            let a = t.param(a)?;
            let x = t.sigmoid(a)?;
            let y = t.tanh(x)?;
            let z = t.exp(y)?;
            project(t, z, seed)
        });
        check("log", &s, |t| {
            let p = t.param(pos)?;
            let y = t.log(p)?;
            project(t, y, seed)
        });
        check("softmax_columns", &s, |t| {
            let a = t.param(a)?;
            let y = t.softmax_columns(a)?;
            project(t, y, seed)
        });
        check("vcat/hcat/slice/col", &s, |t| {
            let (a, c, v) = (t.param(a)?, t.param(c)?, t.param(v)?);
            let x = t.vcat(&[a, c])?;
            let x = t.slice_rows(x, 2, 3)?;
            let y = t.hcat(&[x, v])?;
            let z = t.col(y, 4)?;
            let w = t.col(y, 1)?;
            let zw = t.mul(z, w)?;
            let s1 = project(t, y, seed)?;
            let s2 = t.sum(zw)?;
            t.add(s1, s2)
        });
        check("gather_rows", &s, |t| {
            let (a, c) = (t.param(a)?, t.param(c)?);
            let a0 = t.col(a, 0)?;
            let c2 = t.col(c, 2)?;
            let y = t.gather_rows(&[a0, c2, a0], 1, 2)?;
            project(t, y, seed)
        });
        check("sum/mean/mean_columns", &s, |t| {
            let a = t.param(a)?;
            let m = t.mean_columns(a)?;
            let mm = t.mean(a)?;
            let p = project(t, m, seed)?;
            let q = t.affine(mm, 3.0, 0.0)?;
            t.add(p, q)
        });
        check("scale_columns", &s, |t| {
            let (a, r) = (t.param(a)?, t.param(row)?);
            let y = t.scale_columns(a, r)?;
            project(t, y, seed)
        });
        check("add_column_broadcast", &s, |t| {
            let (a, v) = (t.param(a)?, t.param(v)?);
            let y = t.add_column_broadcast(a, v)?;
            let y = t.tanh(y)?;
            project(t, y, seed)
        });
        check("pick", &s, |t| {
            let a = t.param(a)?;
            let y = t.exp(a)?;
            t.pick(y, 7)
        });
    }
}

#[test]
fn embedding_lstm_and_copy_primitives() {
    for seed in 0..SEEDS {
        let mut l = Leaves::new(seed);
        let table = l.add("table", &[6, 3]);
        let x = l.add("x", &[3, 1]);
        let state = l.add("state", &[4, 1]);
        let w = l.add("w", &[8, 5]);
        let b = l.add("b", &[8, 1]);
        let logits = l.add("logits", &[5, 1]);
        let scores = l.add("scores", &[4, 1]);
        let z = l.add("z", &[1, 1]);
        let s = l.store;
        check("embed", &s, |t| {
            let tab = t.param(table)?;
            let y = t.embed(tab, &[2, 0, 2, 5])?;
            project(t, y, seed)
        });
        check("lstm_cell", &s, |t| {
            let (x, st, w, b) = (t.param(x)?, t.param(state)?, t.param(w)?, t.param(b)?);
            let y = t.lstm_cell(x, st, w, b)?;
            project(t, y, seed)
        });
        check("copy_mix nll", &s, |t| {
            let lg = t.param(logits)?;
            let sc = t.param(scores)?;
            let zz = t.param(z)?;
            let p_gen = t.softmax_columns(lg)?;
            let alpha = t.softmax_columns(sc)?;
            let lam = t.sigmoid(zz)?;
            let mix = t.copy_mix(p_gen, alpha, lam, &[1, 6, 1, 3], 7)?;
            let p1 = t.pick(mix, 1)?;
            let p6 = t.pick(mix, 6)?;
            let l1 = t.log(p1)?;
            let l6 = t.log(p6)?;
            let tot = t.add(l1, l6)?;
            t.affine(tot, -1.0, 0.0)
        });
    }
}

#[test]
fn encoder_modules() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = 8;
        let lstm = BiLstmParams::register(&mut store, "lstm", 5, d, 0.5, &mut rng).unwrap();
        let x = store.add("x", random(&mut rng, &[5, 4], -1.0, 1.0)).unwrap();
        check("bilstm layer", &store, |t| {
            let x = t.param(x)?;
            let y = bilstm_layer(t, x, lstm)?;
            project(t, y, seed)
        });

        let mut store = ParamStore::new();
        let integ = BiLstmParams::register(&mut store, "int", 3 * d, d, 0.5, &mut rng).unwrap();
        let gate = GateParams::register(&mut store, "gate", d, 0.5, &mut rng).unwrap();
        let r = store.add("r", random(&mut rng, &[d, 4], -1.0, 1.0)).unwrap();
        let c = store.add("c", random(&mut rng, &[d, 6], -1.0, 1.0)).unwrap();
        let u = store.add("u", random(&mut rng, &[d, 4], -1.0, 1.0)).unwrap();
        check("coattend", &store, |t| {
            let (r, c) = (t.param(r)?, t.param(c)?);
            let co = coattend(t, r, c)?;
            let a = project(t, co.h, seed)?;
            let b = project(t, co.g, seed + 1)?;
            t.add(a, b)
        });
        check("integrate", &store, |t| {
            let (r, c) = (t.param(r)?, t.param(c)?);
            let co = coattend(t, r, c)?;
            let y = integrate(t, co.g, r, integ)?;
            project(t, y, seed)
        });
        check("gate_combine", &store, |t| {
            let (r, c, u) = (t.param(r)?, t.param(c)?, t.param(u)?);
            let co = coattend(t, u, c)?;
            let ut = t.tanh(co.g)?;
            let ut = t.slice_rows(ut, 0, d)?;
            let (next, _) = gate_combine(t, u, ut, co.g, r, gate)?;
            project(t, next, seed)
        });
    }
}

#[test]
fn attention_module() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = 8;
        let params = DecoderParams::register(&mut store, 1, d, d, 4, 10, 0.5, &mut rng).unwrap();
        let mem = store.add("mem", random(&mut rng, &[d, 4], -1.0, 1.0)).unwrap();
        let o = store.add("o", random(&mut rng, &[d, 1], -1.0, 1.0)).unwrap();
        let ids: Vec<ParamId> = vec![
            params.attention.w_o,
            params.attention.w_u,
            params.attention.b,
            params.attention.v,
            mem,
            o,
        ];
        let report = redr_core::autodiff::grad_check_subset(
            &store,
            &ids,
            |t| {
                let m = t.param(mem)?;
                let o = t.param(o)?;
                let ctx = DecoderContext::new(t, &params, m, vec![0, 1, 2, 3], 10)?;
                let (alpha, read) = attend(t, o, &ctx, params.attention)?;
                let a = project(t, alpha, seed)?;
                let b = project(t, read, seed + 1)?;
                t.add(a, b)
            },
            EPS,
        )
        .unwrap();
        assert!(report.max_relative_error < TOL, "attend: {report:?}");
    }
}

/// Gradients of `a·L₁ + b·L₂` equal `a·∇L₁ + b·∇L₂`.
#[test]
fn backward_is_linear() {
    for seed in 0..5 {
        let model = common::toy_model(8, 20, 3, seed);
        let ex1 = common::toy_example(&model.vocab, 4, 6, 3, seed);
        let ex2 = common::toy_example(&model.vocab, 5, 3, 2, seed + 100);
        let (a, b) = (0.7, -1.3);
        let grads = |f: &dyn Fn(&mut Tape<'_>) -> Result<Var>| {
            let mut tape = Tape::with_params(&model.store);
            let loss = f(&mut tape).unwrap();
            tape.gradients(loss).unwrap()
        };
        let g1 = grads(&|t| Ok(model.nll(t, &ex1, &mut Dropout::disabled())?.0));
        let g2 = grads(&|t| Ok(model.nll(t, &ex2, &mut Dropout::disabled())?.0));
        let gc = grads(&|t| {
            let l1 = model.nll(t, &ex1, &mut Dropout::disabled())?.0;
            let l2 = model.nll(t, &ex2, &mut Dropout::disabled())?.0;
            let l1 = t.affine(l1, a, 0.0)?;
            let l2 = t.affine(l2, b, 0.0)?;
            t.add(l1, l2)
        });
        let mut combined = g1.clone();
        combined.scale(a);
        combined.add_scaled(&g2, b);
        for id in model.store.ids() {
            let want = combined.get(&model.store, id);
            let got = gc.get(&model.store, id);
            assert!(want.max_abs_diff(&got) < 1e-9, "{}", model.store.get(id).name);
        }
    }
}
