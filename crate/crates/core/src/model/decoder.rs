use rand::Rng;

use crate::autodiff::{Dropout, ParamId, ParamStore, Tape, Var};
use crate::data::vocab::{BOS, UNK};
use crate::error::{Error, Result};
use crate::model::encoder::LstmParams;
use crate::tensor::Tensor;

/// MLP attention `score_i = v · tanh(W_u u_i + W_o o + b)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionParams {
    pub w_o: ParamId,
    pub w_u: ParamId,
    pub b: ParamId,
    pub v: ParamId,
}

/// `P_gen = softmax(W₂ tanh(W₁ [o; v] + b₁) + b₂)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReadoutParams {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

/// `λ = σ(w_v·v + w_o·o + w_y·Emb(y_prev) + b)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CopyGateParams {
    pub w_v: ParamId,
    pub w_o: ParamId,
    pub w_y: ParamId,
    pub b: ParamId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecoderParams {
    /// Per-layer `(W, b)` mapping the encoder summary to the initial hidden state.
    pub bridge: Vec<(ParamId, ParamId)>,
    pub lstm: Vec<LstmParams>,
    pub attention: AttentionParams,
    pub readout: ReadoutParams,
    pub copy: CopyGateParams,
}

impl DecoderParams {
    /// `d` is the encoder width, `dd` the decoder width, `emb` the embedding
    /// width and `vocab` the fixed vocabulary size.
    #[allow(clippy::too_many_arguments)]
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        layers: usize,
        d: usize,
        dd: usize,
        emb: usize,
        vocab: usize,
        init: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut bridge = Vec::with_capacity(layers);
        let mut lstm = Vec::with_capacity(layers);
        for l in 0..layers {
            bridge.push((
                store.add_uniform(format!("dec.bridge.l{l}.w"), &[dd, d], init, rng)?,
                store.add_uniform(format!("dec.bridge.l{l}.b"), &[dd, 1], init, rng)?,
            ));
            let input = if l == 0 { emb + d } else { dd };
            lstm.push(LstmParams::register(
                store,
                &format!("dec.lstm.l{l}"),
                input,
                dd,
                init,
                rng,
            )?);
        }
        let a = d;
        let attention = AttentionParams {
            w_o: store.add_uniform("dec.attn.w_o", &[a, dd], init, rng)?,
            w_u: store.add_uniform("dec.attn.w_u", &[a, d], init, rng)?,
            b: store.add_uniform("dec.attn.b", &[a, 1], init, rng)?,
            v: store.add_uniform("dec.attn.v", &[1, a], init, rng)?,
        };
        let readout = ReadoutParams {
            w1: store.add_uniform("dec.out.w1", &[dd, dd + d], init, rng)?,
            b1: store.add_uniform("dec.out.b1", &[dd, 1], init, rng)?,
            w2: store.add_uniform("dec.out.w2", &[vocab, dd], init, rng)?,
            b2: store.add_uniform("dec.out.b2", &[vocab, 1], init, rng)?,
        };
        let copy = CopyGateParams {
            w_v: store.add_uniform("dec.copy.w_v", &[1, d], init, rng)?,
            w_o: store.add_uniform("dec.copy.w_o", &[1, dd], init, rng)?,
            w_y: store.add_uniform("dec.copy.w_y", &[1, emb], init, rng)?,
            b: store.add_uniform("dec.copy.b", &[1, 1], init, rng)?,
        };
        Ok(DecoderParams {
            bridge,
            lstm,
            attention,
            readout,
            copy,
        })
    }
}

/// Per-example quantities fixed for the whole decode.
#[derive(Clone, Debug)]
pub struct DecoderContext {
    /// Final reasoning encoding `Uᴺ`, `d × n`.
    pub memory: Var,
    /// `W_u Uᴺ`, precomputed once.
    pub projected: Var,
    /// Extended ids of the rationale tokens.
    pub source: Vec<usize>,
    /// Size of the extended vocabulary.
    pub ext_size: usize,
}

impl DecoderContext {
    pub fn new(
        tape: &mut Tape<'_>,
        params: &DecoderParams,
        memory: Var,
        source: Vec<usize>,
        ext_size: usize,
    ) -> Result<Self> {
        if tape.value(memory).cols() != source.len() {
            return Err(Error::shape(
                "decoder context",
                tape.value(memory).shape(),
                &[source.len()],
            ));
        }
        let w_u = tape.param(params.attention.w_u)?;
        let projected = tape.matmul(w_u, memory)?;
        Ok(DecoderContext {
            memory,
            projected,
            source,
            ext_size,
        })
    }
}

#[derive(Clone, Debug)]
pub struct DecoderState {
    /// Stacked `[h; c]` of each layer.
    pub layers: Vec<Var>,
    /// Attentive read from the previous step.
    pub read: Var,
    /// Previously emitted extended id.
    pub prev: usize,
}

/// Initial state: each layer's hidden state is `tanh(W s + b)` where `s`
/// joins the forward half of the last encoder column with the backward half
/// of the first; cells start at zero and the first read is the column mean.
pub fn init_state(tape: &mut Tape<'_>, params: &DecoderParams, ctx: &DecoderContext) -> Result<DecoderState> {
    let (d, n) = {
        let m = tape.value(ctx.memory);
        (m.rows(), m.cols())
    };
    let last = tape.col(ctx.memory, n - 1)?;
    let first = tape.col(ctx.memory, 0)?;
    let fwd = tape.slice_rows(last, 0, d / 2)?;
    let bwd = tape.slice_rows(first, d / 2, d - d / 2)?;
    let summary = tape.vcat(&[fwd, bwd])?;
    let mut layers = Vec::with_capacity(params.bridge.len());
    for &(w, b) in &params.bridge {
        let w = tape.param(w)?;
        let b = tape.param(b)?;
        let z = tape.matmul(w, summary)?;
        let z = tape.add(z, b)?;
        let h = tape.tanh(z)?;
        let dd = tape.value(h).rows();
        let c = tape.constant(Tensor::zeros(&[dd, 1]));
        layers.push(tape.vcat(&[h, c])?);
    }
    let read = tape.mean_columns(ctx.memory)?;
    Ok(DecoderState {
        layers,
        read,
        prev: BOS,
    })
}

/// Attention weights over the `n` encoder columns (`n × 1`) and the read
/// `Uᴺ α` (`d × 1`).
pub fn attend(tape: &mut Tape<'_>, o: Var, ctx: &DecoderContext, p: AttentionParams) -> Result<(Var, Var)> {
    let w_o = tape.param(p.w_o)?;
    let b = tape.param(p.b)?;
    let v = tape.param(p.v)?;
    let q = tape.matmul(w_o, o)?;
    let q = tape.add(q, b)?;
    let e = tape.add_column_broadcast(ctx.projected, q)?;
    let e = tape.tanh(e)?;
    let scores = tape.matmul(v, e)?;
    let scores = tape.transpose(scores)?;
    let alpha = tape.softmax_columns(scores)?;
    let read = tape.matmul(ctx.memory, alpha)?;
    Ok((alpha, read))
}

#[derive(Clone, Debug)]
pub struct StepOutput {
    /// Mixture over the extended vocabulary.
    pub probs: Var,
    pub p_gen: Var,
    pub alpha: Var,
    pub lambda: Var,
    pub state: DecoderState,
}

/// Consumes `state.prev` and produces the next-token distribution.
pub fn decode_step(
    tape: &mut Tape<'_>,
    params: &DecoderParams,
    embedding: Var,
    ctx: &DecoderContext,
    state: &DecoderState,
    dropout: &mut Dropout,
) -> Result<StepOutput> {
    if state.layers.len() != params.lstm.len() {
        return Err(Error::Config(format!(
            "decoder state has {} layers, model has {}",
            state.layers.len(),
            params.lstm.len()
        )));
    }
    let vocab = tape.value(embedding).rows();
    let input_id = if state.prev < vocab { state.prev } else { UNK };
    let y = tape.embed(embedding, &[input_id])?;
    let mut x = tape.vcat(&[y, state.read])?;
    let mut layers = Vec::with_capacity(state.layers.len());
    for (&s, p) in state.layers.iter().zip(&params.lstm) {
        let input = dropout.apply(tape, x)?;
        let w = tape.param(p.w)?;
        let b = tape.param(p.b)?;
        let next = tape.lstm_cell(input, s, w, b)?;
        let h = tape.value(next).rows() / 2;
        layers.push(next);
        x = tape.slice_rows(next, 0, h)?;
    }
    let o = x;
    let (alpha, read) = attend(tape, o, ctx, params.attention)?;

    let r = params.readout;
    let (w1, b1, w2, b2) = (
        tape.param(r.w1)?,
        tape.param(r.b1)?,
        tape.param(r.w2)?,
        tape.param(r.b2)?,
    );
    let ov = tape.vcat(&[o, read])?;
    let hid = tape.matmul(w1, ov)?;
    let hid = tape.add(hid, b1)?;
    let hid = tape.tanh(hid)?;
    let logits = tape.matmul(w2, hid)?;
    let logits = tape.add(logits, b2)?;
    let p_gen = tape.softmax_columns(logits)?;

    let c = params.copy;
    let (w_v, w_o, w_y, bc) = (
        tape.param(c.w_v)?,
        tape.param(c.w_o)?,
        tape.param(c.w_y)?,
        tape.param(c.b)?,
    );
    let a = tape.matmul(w_v, read)?;
    let bo = tape.matmul(w_o, o)?;
    let cy = tape.matmul(w_y, y)?;
    let z = tape.add(a, bo)?;
    let z = tape.add(z, cy)?;
    let z = tape.add(z, bc)?;
    let lambda = tape.sigmoid(z)?;

    let probs = tape.copy_mix(p_gen, alpha, lambda, &ctx.source, ctx.ext_size)?;
    Ok(StepOutput {
        probs,
        p_gen,
        alpha,
        lambda,
        state: DecoderState {
            layers,
            read,
            prev: state.prev,
        },
    })
}
