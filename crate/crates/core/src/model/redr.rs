use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Dropout, ParamId, ParamStore, Tape, Var};
use crate::data::vocab::{Vocabulary, EOS};
use crate::data::EncodedExample;
use crate::error::{Error, Result};
use crate::model::config::TrainConfig;
use crate::model::decoder::{decode_step, init_state, DecoderContext, DecoderParams, DecoderState};
use crate::model::encoder::{encode_bilstm, BiLstmParams};
use crate::model::reasoning::{dynamic_reason, ReasoningParams, ReasoningState};
use crate::model::search::{beam_search, greedy_decode, Hypothesis, StepModel};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RedrParams {
    pub embedding: ParamId,
    pub rationale_encoder: Vec<BiLstmParams>,
    pub history_encoder: Vec<BiLstmParams>,
    pub reasoning: ReasoningParams,
    pub decoder: DecoderParams,
}

/// Rationale/history encoder, dynamic reasoning and copy decoder.
#[derive(Clone, Debug)]
pub struct Redr {
    pub config: TrainConfig,
    pub vocab: Vocabulary,
    pub store: ParamStore,
    pub params: RedrParams,
}

/// Encoder-side graph of one example.
#[derive(Clone, Debug)]
pub struct Encoded {
    pub rationale: Var,
    pub history: Var,
    pub reasoning: ReasoningState,
    pub context: DecoderContext,
}

/// Teacher-forced scoring of one target sequence.
#[derive(Clone, Debug)]
pub struct SequenceScore {
    /// Summed log-probability of the target tokens and the end token.
    pub log_prob: Var,
    /// Number of scored positions (target length + 1).
    pub tokens: usize,
    /// Positions whose argmax equals the target.
    pub correct: usize,
}

/// Per-step gate values along a decoded sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct StepTrace {
    pub lambda: f64,
    pub alpha: Vec<f64>,
}

impl Redr {
    pub fn new(config: TrainConfig, vocab: Vocabulary) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let (d, e, v, init) = (config.hidden_size, config.emb_dim, vocab.len(), config.param_init);
        let embedding = store.add_uniform("embedding", &[v, e], init, &mut rng)?;
        store.set_trainable(embedding, config.finetune_embeddings);
        let rationale_encoder =
            BiLstmParams::register_stack(&mut store, "enc.rat", config.lstm_layers, e, d, init, &mut rng)?;
        let history_encoder =
            BiLstmParams::register_stack(&mut store, "enc.hist", config.lstm_layers, e, d, init, &mut rng)?;
        let reasoning = ReasoningParams::register(&mut store, config.reasoning_layers, d, init, &mut rng)?;
        let decoder = DecoderParams::register(&mut store, config.lstm_layers, d, d, e, v, init, &mut rng)?;
        Ok(Redr {
            config,
            vocab,
            store,
            params: RedrParams {
                embedding,
                rationale_encoder,
                history_encoder,
                reasoning,
                decoder,
            },
        })
    }

    /// Rebuilds a model around parameters loaded from elsewhere, checking
    /// that every expected tensor is present with the right shape.
    pub fn with_store(config: TrainConfig, vocab: Vocabulary, store: ParamStore) -> Result<Self> {
        let mut model = Redr::new(config, vocab)?;
        if store.len() != model.store.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                model.store.len(),
                store.len()
            )));
        }
        let ids: Vec<ParamId> = model.store.ids().collect();
        for id in ids {
            let name = model.store.get(id).name.clone();
            let src = store
                .id(&name)
                .map_err(|_| Error::Checkpoint(format!("missing tensor `{name}`")))?;
            let value = store.value(src);
            if value.shape() != model.store.value(id).shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has shape {:?}, expected {:?}",
                    value.shape(),
                    model.store.value(id).shape()
                )));
            }
            *model.store.value_mut(id) = value.clone();
            model.store.set_trainable(id, store.get(src).trainable);
        }
        Ok(model)
    }

    pub fn set_embeddings(&mut self, table: Tensor) -> Result<()> {
        let id = self.params.embedding;
        if table.shape() != self.store.value(id).shape() {
            return Err(Error::shape(
                "set_embeddings",
                self.store.value(id).shape(),
                table.shape(),
            ));
        }
        *self.store.value_mut(id) = table;
        Ok(())
    }

    pub fn ext_size(&self, ex: &EncodedExample) -> usize {
        self.vocab.len() + ex.rationale.oov.len()
    }

    pub fn encode(&self, tape: &mut Tape<'_>, ex: &EncodedExample, dropout: &mut Dropout) -> Result<Encoded> {
        let table = tape.param(self.params.embedding)?;
        let rationale = encode_bilstm(tape, &ex.rationale.ids, table, &self.params.rationale_encoder, dropout)?;
        let history = encode_bilstm(tape, &ex.history, table, &self.params.history_encoder, dropout)?;
        let reasoning = dynamic_reason(
            tape,
            rationale,
            history,
            &self.params.reasoning,
            self.config.decision_maker,
        )?;
        let context = DecoderContext::new(
            tape,
            &self.params.decoder,
            reasoning.output(),
            ex.rationale.ext_ids.clone(),
            self.ext_size(ex),
        )?;
        Ok(Encoded {
            rationale,
            history,
            reasoning,
            context,
        })
    }

    /// Log-probability of `target` followed by the end token under teacher
    /// forcing.
    pub fn score_sequence(
        &self,
        tape: &mut Tape<'_>,
        ex: &EncodedExample,
        target: &[usize],
        dropout: &mut Dropout,
    ) -> Result<SequenceScore> {
        let enc = self.encode(tape, ex, dropout)?;
        self.score_encoded(tape, &enc, target, dropout)
    }

    pub fn score_encoded(
        &self,
        tape: &mut Tape<'_>,
        enc: &Encoded,
        target: &[usize],
        dropout: &mut Dropout,
    ) -> Result<SequenceScore> {
        let table = tape.param(self.params.embedding)?;
        let mut state = init_state(tape, &self.params.decoder, &enc.context)?;
        let mut total: Option<Var> = None;
        let mut correct = 0;
        for &y in target.iter().chain(std::iter::once(&EOS)) {
            let out = decode_step(tape, &self.params.decoder, table, &enc.context, &state, dropout)?;
            if crate::model::search::argmax(tape.value(out.probs).data()) == y {
                correct += 1;
            }
            let p = tape.pick(out.probs, y)?;
            let lp = tape.log(p)?;
            total = Some(match total {
                Some(t) => tape.add(t, lp)?,
                None => lp,
            });
            state = DecoderState { prev: y, ..out.state };
        }
        Ok(SequenceScore {
            log_prob: total.expect("at least the end token"),
            tokens: target.len() + 1,
            correct,
        })
    }

    /// Summed negative log-likelihood of the example's target question.
    pub fn nll(&self, tape: &mut Tape<'_>, ex: &EncodedExample, dropout: &mut Dropout) -> Result<(Var, SequenceScore)> {
        if ex.target.iter().all(|&t| t == crate::data::vocab::PAD) {
            return Err(Error::Training("target question has no tokens".into()));
        }
        let score = self.score_sequence(tape, ex, &ex.target, dropout)?;
        let loss = tape.affine(score.log_prob, -1.0, 0.0)?;
        Ok((loss, score))
    }

    pub fn decoder(&self, ex: &EncodedExample) -> Result<InferenceDecoder<'_>> {
        InferenceDecoder::new(self, ex)
    }

    pub fn greedy(&self, ex: &EncodedExample, max_len: usize) -> Result<Hypothesis> {
        greedy_decode(&self.decoder(ex)?, EOS, max_len)
    }

    pub fn beam(&self, ex: &EncodedExample, beam: usize, max_len: usize) -> Result<Vec<Hypothesis>> {
        beam_search(&self.decoder(ex)?, beam, EOS, max_len)
    }

    /// λ and α at every step of decoding `tokens` (which may end with EOS).
    pub fn trace(&self, ex: &EncodedExample, tokens: &[usize]) -> Result<Vec<StepTrace>> {
        let mut tape = Tape::with_params(&self.store);
        let mut off = Dropout::disabled();
        let enc = self.encode(&mut tape, ex, &mut off)?;
        let table = tape.param(self.params.embedding)?;
        let mut state = init_state(&mut tape, &self.params.decoder, &enc.context)?;
        let mut out = Vec::with_capacity(tokens.len());
        for &y in tokens {
            let step = decode_step(&mut tape, &self.params.decoder, table, &enc.context, &state, &mut off)?;
            out.push(StepTrace {
                lambda: tape.scalar(step.lambda),
                alpha: tape.value(step.alpha).data().to_vec(),
            });
            state = DecoderState { prev: y, ..step.state };
        }
        Ok(out)
    }

    /// Surface tokens of a hypothesis, end token dropped.
    pub fn surface(&self, ex: &EncodedExample, tokens: &[usize]) -> Vec<String> {
        tokens
            .iter()
            .filter(|&&t| t != EOS)
            .map(|&t| self.vocab.decode_ext(t, &ex.rationale.oov))
            .collect()
    }
}

/// Decoder state held as plain tensors between steps.
#[derive(Clone, Debug)]
pub struct FrozenState {
    layers: Vec<Tensor>,
    read: Tensor,
    prev: usize,
}

/// Step-by-step decoding that rebuilds a small graph per step.
pub struct InferenceDecoder<'m> {
    model: &'m Redr,
    memory: Tensor,
    projected: Tensor,
    source: Vec<usize>,
    ext_size: usize,
    initial: FrozenState,
}

impl<'m> InferenceDecoder<'m> {
    fn new(model: &'m Redr, ex: &EncodedExample) -> Result<Self> {
        let mut tape = Tape::with_params(&model.store);
        let enc = model.encode(&mut tape, ex, &mut Dropout::disabled())?;
        let state = init_state(&mut tape, &model.params.decoder, &enc.context)?;
        Ok(InferenceDecoder {
            model,
            memory: tape.value(enc.context.memory).clone(),
            projected: tape.value(enc.context.projected).clone(),
            source: enc.context.source.clone(),
            ext_size: enc.context.ext_size,
            initial: FrozenState {
                layers: state.layers.iter().map(|&v| tape.value(v).clone()).collect(),
                read: tape.value(state.read).clone(),
                prev: state.prev,
            },
        })
    }

    /// Probability distribution over the extended vocabulary.
    pub fn distribution(&self, state: &FrozenState) -> Result<(Vec<f64>, FrozenState)> {
        let mut tape = Tape::with_params(&self.model.store);
        let ctx = DecoderContext {
            memory: tape.constant(self.memory.clone()),
            projected: tape.constant(self.projected.clone()),
            source: self.source.clone(),
            ext_size: self.ext_size,
        };
        let st = DecoderState {
            layers: state.layers.iter().map(|t| tape.constant(t.clone())).collect(),
            read: tape.constant(state.read.clone()),
            prev: state.prev,
        };
        let table = tape.param(self.model.params.embedding)?;
        let out = decode_step(
            &mut tape,
            &self.model.params.decoder,
            table,
            &ctx,
            &st,
            &mut Dropout::disabled(),
        )?;
        let next = FrozenState {
            layers: out.state.layers.iter().map(|&v| tape.value(v).clone()).collect(),
            read: tape.value(out.state.read).clone(),
            prev: state.prev,
        };
        Ok((tape.value(out.probs).data().to_vec(), next))
    }
}

impl StepModel for InferenceDecoder<'_> {
    type State = FrozenState;

    fn initial(&self) -> Result<FrozenState> {
        Ok(self.initial.clone())
    }

    fn step(&self, state: &FrozenState) -> Result<(Vec<f64>, FrozenState)> {
        let (p, next) = self.distribution(state)?;
        Ok((p.into_iter().map(f64::ln).collect(), next))
    }

    fn feed(&self, mut state: FrozenState, token: usize) -> FrozenState {
        state.prev = token;
        state
    }
}
