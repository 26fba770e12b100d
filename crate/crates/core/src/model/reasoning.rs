use rand::Rng;

use crate::autodiff::{ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::model::encoder::{bilstm_layer, BiLstmParams};

/// Fusion of a rationale encoding `R` (`d × n`) with a history encoding `C`
/// (`d × m`).
#[derive(Clone, Copy, Debug)]
pub struct Coattention {
    /// `Rᵀ C`, `n × m`.
    pub s: Var,
    /// Column-normalized `S`.
    pub s_cols: Var,
    /// Column-normalized `Sᵀ`.
    pub st_cols: Var,
    /// `R · softmax(S)`, `d × m`.
    pub h: Var,
    /// `[C; H] · softmax(Sᵀ)`, `2d × n`.
    pub g: Var,
}

pub fn coattend(tape: &mut Tape<'_>, r: Var, c: Var) -> Result<Coattention> {
    let (dr, dc) = (tape.value(r).rows(), tape.value(c).rows());
    if dr != dc {
        return Err(Error::shape("coattend", tape.value(r).shape(), tape.value(c).shape()));
    }
    let rt = tape.transpose(r)?;
    let s = tape.matmul(rt, c)?;
    let s_cols = tape.softmax_columns(s)?;
    let h = tape.matmul(r, s_cols)?;
    let st = tape.transpose(s)?;
    let st_cols = tape.softmax_columns(st)?;
    let ch = tape.vcat(&[c, h])?;
    let g = tape.matmul(ch, st_cols)?;
    Ok(Coattention {
        s,
        s_cols,
        st_cols,
        h,
        g,
    })
}

/// Bidirectional pass over the columns of `[G; R]`: `d × n`.
pub fn integrate(tape: &mut Tape<'_>, g: Var, r: Var, p: BiLstmParams) -> Result<Var> {
    let (gr, gc) = (tape.value(g).rows(), tape.value(g).cols());
    let (rr, rc) = (tape.value(r).rows(), tape.value(r).cols());
    if gr != 2 * rr || gc != rc {
        return Err(Error::shape("integrate", &[gr, gc], &[rr, rc]));
    }
    let x = tape.vcat(&[g, r])?;
    bilstm_layer(tape, x, p)
}

/// One reasoning step: coattend `U_prev` with `C`, then integrate.
/// Returns the candidate encoding and the layer's `G`.
pub fn reason_layer(tape: &mut Tape<'_>, u_prev: Var, c: Var, p: BiLstmParams) -> Result<(Var, Coattention)> {
    let co = coattend(tape, u_prev, c)?;
    let u = integrate(tape, co.g, u_prev, p)?;
    Ok((u, co))
}

/// Decision-maker weights: `w_u`, `w_r` are `1 × d`, `w_g` is `1 × 2d`,
/// `b` is `1 × 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GateParams {
    pub w_u: ParamId,
    pub w_g: ParamId,
    pub w_r: ParamId,
    pub b: ParamId,
}

impl GateParams {
    pub fn register<R: Rng>(store: &mut ParamStore, prefix: &str, d: usize, init: f64, rng: &mut R) -> Result<Self> {
        Ok(GateParams {
            w_u: store.add_uniform(format!("{prefix}.w_u"), &[1, d], init, rng)?,
            w_g: store.add_uniform(format!("{prefix}.w_g"), &[1, 2 * d], init, rng)?,
            w_r: store.add_uniform(format!("{prefix}.w_r"), &[1, d], init, rng)?,
            b: store.add_uniform(format!("{prefix}.b"), &[1, 1], init, rng)?,
        })
    }
}

/// `p = σ(w_uᵀU_prev + w_gᵀG + w_rᵀR + b)` per position and
/// `U_next = p ⊙ U_prev + (1 − p) ⊙ Ũ`, computed as `Ũ + p ⊙ (U_prev − Ũ)`
/// so that equal operands give an identical result.
pub fn gate_combine(
    tape: &mut Tape<'_>,
    u_prev: Var,
    u_tilde: Var,
    g: Var,
    r: Var,
    p: GateParams,
) -> Result<(Var, Var)> {
    let w_u = tape.param(p.w_u)?;
    let w_g = tape.param(p.w_g)?;
    let w_r = tape.param(p.w_r)?;
    let b = tape.param(p.b)?;
    let a = tape.matmul(w_u, u_prev)?;
    let bg = tape.matmul(w_g, g)?;
    let c = tape.matmul(w_r, r)?;
    let z = tape.add(a, bg)?;
    let z = tape.add(z, c)?;
    let z = tape.add_column_broadcast(z, b)?;
    let gate = tape.sigmoid(z)?;
    let diff = tape.sub(u_prev, u_tilde)?;
    let scaled = tape.scale_columns(diff, gate)?;
    let next = tape.add(u_tilde, scaled)?;
    Ok((next, gate))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReasoningParams {
    /// Integration layer of each reasoning step; entry 0 builds `U⁰`.
    pub integrate: Vec<BiLstmParams>,
    /// Gate of each transition `Uʲ → Uʲ⁺¹`.
    pub gates: Vec<GateParams>,
}

impl ReasoningParams {
    pub fn register<R: Rng>(store: &mut ParamStore, layers: usize, d: usize, init: f64, rng: &mut R) -> Result<Self> {
        if layers == 0 {
            return Err(Error::Config("reasoning_layers must be at least 1".into()));
        }
        let mut integrate = Vec::with_capacity(layers);
        let mut gates = Vec::with_capacity(layers - 1);
        for j in 0..layers {
            integrate.push(BiLstmParams::register(
                store,
                &format!("reason.{j}.integrate"),
                3 * d,
                d,
                init,
                rng,
            )?);
            if j > 0 {
                gates.push(GateParams::register(store, &format!("reason.{j}.gate"), d, init, rng)?);
            }
        }
        Ok(ReasoningParams { integrate, gates })
    }

    pub fn layers(&self) -> usize {
        self.integrate.len()
    }
}

#[derive(Clone, Debug)]
pub struct ReasoningState {
    /// `U⁰ … Uᴺ⁻¹` in the order produced; the last feeds the decoder.
    pub layers: Vec<Var>,
    /// Candidate encodings `Ũʲ` for `j ≥ 1`.
    pub candidates: Vec<Var>,
    /// Gate row vectors (`1 × n`) of each transition.
    pub gates: Vec<Var>,
    pub coattention: Vec<Coattention>,
}

impl ReasoningState {
    pub fn output(&self) -> Var {
        *self.layers.last().expect("at least one layer")
    }
}

/// Builds `U⁰` from `(R, C)` and applies the remaining reasoning layers.
/// Without the decision maker each layer's candidate is taken as is.
pub fn dynamic_reason(
    tape: &mut Tape<'_>,
    r: Var,
    c: Var,
    params: &ReasoningParams,
    decision_maker: bool,
) -> Result<ReasoningState> {
    if params.layers() == 0 {
        return Err(Error::Config("reasoning_layers must be at least 1".into()));
    }
    let (u0, co0) = reason_layer(tape, r, c, params.integrate[0])?;
    let mut state = ReasoningState {
        layers: vec![u0],
        candidates: Vec::new(),
        gates: Vec::new(),
        coattention: vec![co0],
    };
    for (j, gate) in params.gates.iter().enumerate() {
        let u_prev = state.output();
        let (u_tilde, co) = reason_layer(tape, u_prev, c, params.integrate[j + 1])?;
        let next = if decision_maker {
            let (next, p) = gate_combine(tape, u_prev, u_tilde, co.g, r, *gate)?;
            state.gates.push(p);
            next
        } else {
            u_tilde
        };
        state.candidates.push(u_tilde);
        state.coattention.push(co);
        state.layers.push(next);
    }
    Ok(state)
}
