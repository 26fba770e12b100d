use rand::Rng;

use crate::autodiff::{Dropout, ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Weights of one unidirectional LSTM: `w` is `4h × (in + h)`, `b` is `4h × 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmParams {
    pub w: ParamId,
    pub b: ParamId,
}

impl LstmParams {
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        in_dim: usize,
        hidden: usize,
        init: f64,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(LstmParams {
            w: store.add_uniform(format!("{prefix}.w"), &[4 * hidden, in_dim + hidden], init, rng)?,
            b: store.add_uniform(format!("{prefix}.b"), &[4 * hidden, 1], init, rng)?,
        })
    }

    pub fn hidden(&self, store: &ParamStore) -> usize {
        store.value(self.b).rows() / 4
    }
}

/// One bidirectional layer whose directions each have `d / 2` units.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BiLstmParams {
    pub fwd: LstmParams,
    pub bwd: LstmParams,
}

impl BiLstmParams {
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        in_dim: usize,
        d: usize,
        init: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if d == 0 || !d.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "bidirectional width must be even and positive, got {d}"
            )));
        }
        Ok(BiLstmParams {
            fwd: LstmParams::register(store, &format!("{prefix}.fwd"), in_dim, d / 2, init, rng)?,
            bwd: LstmParams::register(store, &format!("{prefix}.bwd"), in_dim, d / 2, init, rng)?,
        })
    }

    /// Registers `layers` stacked layers; the first reads `in_dim` features,
    /// the rest read `d`.
    pub fn register_stack<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        layers: usize,
        in_dim: usize,
        d: usize,
        init: f64,
        rng: &mut R,
    ) -> Result<Vec<Self>> {
        (0..layers)
            .map(|l| {
                let input = if l == 0 { in_dim } else { d };
                Self::register(store, &format!("{prefix}.l{l}"), input, d, init, rng)
            })
            .collect()
    }
}

pub(crate) fn zero_state(tape: &mut Tape<'_>, hidden: usize) -> Var {
    tape.constant(Tensor::zeros(&[2 * hidden, 1]))
}

/// Runs one direction over `inputs`; returns the stacked `[h; c]` state at
/// every position, in input order.
pub fn run_lstm(tape: &mut Tape<'_>, inputs: &[Var], p: LstmParams, reverse: bool) -> Result<Vec<Var>> {
    let w = tape.param(p.w)?;
    let b = tape.param(p.b)?;
    let hidden = tape.value(b).rows() / 4;
    let mut state = zero_state(tape, hidden);
    let mut out = vec![state; inputs.len()];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..inputs.len()).rev())
    } else {
        Box::new(0..inputs.len())
    };
    for i in order {
        state = tape.lstm_cell(inputs[i], state, w, b)?;
        out[i] = state;
    }
    Ok(out)
}

/// One bidirectional layer over the columns of `x` (`in × len`), giving
/// `d × len` with the forward half on top.
pub fn bilstm_layer(tape: &mut Tape<'_>, x: Var, p: BiLstmParams) -> Result<Var> {
    let len = tape.value(x).cols();
    let cols = (0..len).map(|i| tape.col(x, i)).collect::<Result<Vec<_>>>()?;
    let fwd = run_lstm(tape, &cols, p.fwd, false)?;
    let bwd = run_lstm(tape, &cols, p.bwd, true)?;
    let bf = tape.param(p.fwd.b)?;
    let h_f = tape.value(bf).rows() / 4;
    let bb = tape.param(p.bwd.b)?;
    let h_b = tape.value(bb).rows() / 4;
    let top = tape.gather_rows(&fwd, 0, h_f)?;
    let bottom = tape.gather_rows(&bwd, 0, h_b)?;
    tape.vcat(&[top, bottom])
}

/// Stacked bidirectional encoder with dropout on every layer's input.
pub fn bilstm(tape: &mut Tape<'_>, x: Var, layers: &[BiLstmParams], dropout: &mut Dropout) -> Result<Var> {
    let mut h = x;
    for &layer in layers {
        let input = dropout.apply(tape, h)?;
        h = bilstm_layer(tape, input, layer)?;
    }
    Ok(h)
}

/// Embeds `ids` with `table` (`vocab × emb`) and encodes them: `d × len`.
pub fn encode_bilstm(
    tape: &mut Tape<'_>,
    ids: &[usize],
    table: Var,
    layers: &[BiLstmParams],
    dropout: &mut Dropout,
) -> Result<Var> {
    if ids.is_empty() {
        return Err(Error::EmptyInput { op: "encode_bilstm" });
    }
    let x = tape.embed(table, ids)?;
    bilstm(tape, x, layers, dropout)
}
