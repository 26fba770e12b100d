use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{clip_global_norm, sgd_step, Dropout, Gradients, ParamStore, Tape, Var};
use crate::data::vocab::EOS;
use crate::data::{ConversationExample, Dataset, EncodedExample, PassageText};
use crate::error::{Error, Result};
use crate::model::Redr;
use crate::oracle::{f1_score, OracleRequest, QaOracle};
use crate::train::log::{LogRecord, TrainLog};
use crate::train::stream_seed;

/// Everything needed to generate and reward questions for one turn.
#[derive(Clone, Copy, Debug)]
pub struct RlInstance<'a> {
    pub encoded: &'a EncodedExample,
    pub example: &'a ConversationExample,
    pub passage: &'a PassageText,
}

/// Pairs every example of `dataset` with its passage.
pub fn rl_instances(dataset: &Dataset) -> Result<Vec<RlInstance<'_>>> {
    dataset
        .examples
        .iter()
        .zip(&dataset.encoded)
        .map(|(example, encoded)| {
            let passage = dataset.passage(&example.passage_id).ok_or_else(|| Error::Passage {
                passage: example.passage_id.clone(),
                message: "passage text missing from dataset".into(),
            })?;
            Ok(RlInstance {
                encoded,
                example,
                passage,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleSource {
    Gold,
    Beam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardSample {
    /// Extended ids, end token excluded.
    pub tokens: Vec<usize>,
    pub question: Vec<String>,
    pub source: SampleSource,
    pub answer: Vec<String>,
    /// Oracle-answer F1 against the gold answer, in `[0, 1]`.
    pub reward: f64,
    /// `log π(q | r, c)` including the end token.
    pub log_prob: f64,
}

fn reward_for(oracle: &dyn QaOracle, inst: &RlInstance<'_>, question: &[String]) -> (Vec<String>, f64) {
    if question.is_empty() {
        log::warn!("empty generated question scored 0");
        return (Vec::new(), 0.0);
    }
    let request = OracleRequest {
        passage: &inst.passage.tokens,
        sentences: &inst.passage.sentences,
        history: &inst.example.history,
        question,
        reference: Some(&inst.example.answer),
    };
    match oracle.answer(&request) {
        Ok(a) => {
            let r = f1_score(&a.tokens, &inst.example.answer);
            (a.tokens, r)
        }
        Err(e) => {
            log::warn!("oracle `{}` failed, reward 0: {e}", oracle.name());
            (Vec::new(), 0.0)
        }
    }
}

/// Gold question plus the distinct top-`beam` beam questions, rewarded but
/// not yet scored under the policy.
fn collect_pool(model: &Redr, inst: &RlInstance<'_>, oracle: &dyn QaOracle, beam: usize) -> Result<Vec<RewardSample>> {
    let gold = inst.encoded.target.clone();
    let mut seqs = vec![(gold, SampleSource::Gold)];
    if beam > 0 {
        for hyp in model.beam(inst.encoded, beam, model.config.max_decode_len)? {
            let tokens: Vec<usize> = hyp.tokens.into_iter().filter(|&t| t != EOS).collect();
            if !seqs.iter().any(|(s, _)| *s == tokens) {
                seqs.push((tokens, SampleSource::Beam));
            }
        }
    }
    Ok(seqs
        .into_iter()
        .map(|(tokens, source)| {
            let question = model.surface(inst.encoded, &tokens);
            let (answer, reward) = reward_for(oracle, inst, &question);
            RewardSample {
                tokens,
                question,
                source,
                answer,
                reward,
                log_prob: f64::NAN,
            }
        })
        .collect())
}

fn score_pool(model: &Redr, tape: &mut Tape<'_>, inst: &RlInstance<'_>, pool: &[RewardSample]) -> Result<Vec<Var>> {
    let mut off = Dropout::disabled();
    let enc = model.encode(tape, inst.encoded, &mut off)?;
    pool.iter()
        .map(|s| Ok(model.score_encoded(tape, &enc, &s.tokens, &mut off)?.log_prob))
        .collect()
}

/// Sampling pool for one instance: the gold question and up to `beam`
/// further beam questions, each rewarded by oracle F1 and scored under the
/// current policy.
pub fn build_sample_pool(
    model: &Redr,
    inst: &RlInstance<'_>,
    oracle: &dyn QaOracle,
    beam: usize,
) -> Result<Vec<RewardSample>> {
    let mut pool = collect_pool(model, inst, oracle, beam)?;
    let mut tape = Tape::with_params(&model.store);
    let lps = score_pool(model, &mut tape, inst, &pool)?;
    for (s, v) in pool.iter_mut().zip(lps) {
        s.log_prob = tape.scalar(v);
    }
    Ok(pool)
}

/// `−Σ (R − b) log π / |pool|`, with `b` the pool-mean reward when
/// `use_baseline`. `None` when every advantage is zero.
pub fn reinforce_loss(
    tape: &mut Tape<'_>,
    log_probs: &[Var],
    rewards: &[f64],
    use_baseline: bool,
) -> Result<Option<Var>> {
    if log_probs.is_empty() || log_probs.len() != rewards.len() {
        return Err(Error::shape("reinforce_loss", &[log_probs.len()], &[rewards.len()]));
    }
    let n = rewards.len() as f64;
    let baseline = if use_baseline {
        rewards.iter().sum::<f64>() / n
    } else {
        0.0
    };
    let mut total: Option<Var> = None;
    for (&lp, &r) in log_probs.iter().zip(rewards) {
        let adv = r - baseline;
        if adv == 0.0 {
            continue;
        }
        let term = tape.affine(lp, -adv / n, 0.0)?;
        total = Some(match total {
            Some(t) => tape.add(t, term)?,
            None => term,
        });
    }
    Ok(total)
}

/// Policy-gradient estimate for one pool of sequences with given rewards;
/// also returns each sequence's log-probability.
pub fn reinforce_gradients(
    model: &Redr,
    inst: &RlInstance<'_>,
    pool: &[RewardSample],
    use_baseline: bool,
) -> Result<(Option<Gradients>, Vec<f64>)> {
    let mut tape = Tape::with_params(&model.store);
    let lps = score_pool(model, &mut tape, inst, pool)?;
    let values = lps.iter().map(|&v| tape.scalar(v)).collect();
    let rewards: Vec<f64> = pool.iter().map(|s| s.reward).collect();
    let grads = match reinforce_loss(&mut tape, &lps, &rewards, use_baseline)? {
        Some(loss) => Some(tape.gradients(loss)?),
        None => None,
    };
    Ok((grads, values))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RlStep {
    pub updated: bool,
    pub mean_reward: f64,
    /// Value of the surrogate loss (0 when skipped).
    pub loss: f64,
}

/// One REINFORCE update on `pool`; refreshes the pool's log-probabilities
/// to the pre-update policy. Skips the update when all advantages vanish.
pub fn reinforce_step(model: &mut Redr, inst: &RlInstance<'_>, pool: &mut [RewardSample]) -> Result<RlStep> {
    if pool.is_empty() {
        return Err(Error::EmptyInput { op: "reinforce_step" });
    }
    let mean_reward = pool.iter().map(|s| s.reward).sum::<f64>() / pool.len() as f64;
    let (grads, lps) = reinforce_gradients(model, inst, pool, model.config.rl_use_baseline)?;
    let baseline = if model.config.rl_use_baseline { mean_reward } else { 0.0 };
    let loss = -pool
        .iter()
        .zip(&lps)
        .map(|(s, lp)| (s.reward - baseline) * lp)
        .sum::<f64>()
        / pool.len() as f64;
    for (s, lp) in pool.iter_mut().zip(lps) {
        s.log_prob = lp;
    }
    let Some(mut grads) = grads else {
        return Ok(RlStep {
            updated: false,
            mean_reward,
            loss: 0.0,
        });
    };
    clip_global_norm(&mut grads, model.config.max_grad_norm);
    sgd_step(&mut model.store, &grads, model.config.rl_learning_rate)?;
    Ok(RlStep {
        updated: true,
        mean_reward,
        loss,
    })
}

/// Mean oracle F1 of the best beam question over `dev`.
pub fn dev_reward(model: &Redr, dev: &[RlInstance<'_>], oracle: &dyn QaOracle) -> Result<f64> {
    if dev.is_empty() {
        return Err(Error::EmptyInput { op: "dev_reward" });
    }
    let mut total = 0.0;
    for inst in dev {
        let beams = model.beam(inst.encoded, model.config.beam_size, model.config.max_decode_len)?;
        let question = beams
            .first()
            .map(|h| model.surface(inst.encoded, &h.tokens))
            .unwrap_or_default();
        total += reward_for(oracle, inst, &question).1;
    }
    Ok(total / dev.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RlStop {
    MaxUpdates,
    Plateau,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RlReport {
    /// Pool steps taken, skipped updates included.
    pub updates: usize,
    pub skipped: usize,
    /// `(updates, dev reward)` at every evaluation, starting before training.
    pub evaluations: Vec<(usize, f64)>,
    pub best_dev_reward: Option<f64>,
    /// Mean pool reward per started epoch.
    pub epoch_rewards: Vec<f64>,
    pub stop: RlStop,
}

/// REINFORCE fine-tuning over `train`, evaluating dev reward every
/// `rl_eval_every` steps and stopping after `rl_patience` evaluations
/// without improvement. With a dev set the best-evaluated parameters are
/// kept. A full epoch in which every pool reward is zero aborts with
/// [`Error::RewardCollapse`].
pub fn finetune_rl(
    model: &mut Redr,
    train: &[RlInstance<'_>],
    dev: &[RlInstance<'_>],
    oracle: &dyn QaOracle,
    log: &mut dyn TrainLog,
) -> Result<RlReport> {
    if train.is_empty() {
        return Err(Error::EmptyInput { op: "finetune_rl" });
    }
    model.config.validate()?;
    let config = model.config.clone();
    let mut report = RlReport {
        updates: 0,
        skipped: 0,
        evaluations: Vec::new(),
        best_dev_reward: None,
        epoch_rewards: Vec::new(),
        stop: RlStop::MaxUpdates,
    };
    let mut best: Option<ParamStore> = None;
    let mut stale = 0;
    if !dev.is_empty() {
        let r = dev_reward(model, dev, oracle)?;
        log::info!("rl: initial dev reward {r:.4}");
        report.evaluations.push((0, r));
        report.best_dev_reward = Some(r);
        best = Some(model.store.clone());
    }

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch = 0;
    'epochs: while report.updates < config.rl_max_updates {
        epoch += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(config.seed ^ 0x5EED_0F4C, epoch as u64));
        order.shuffle(&mut rng);
        let (mut reward_sum, mut samples) = (0.0, 0usize);
        for &i in &order {
            if report.updates >= config.rl_max_updates {
                report.epoch_rewards.push(reward_sum / samples.max(1) as f64);
                break 'epochs;
            }
            let inst = &train[i];
            let mut pool = collect_pool(model, inst, oracle, config.rl_pool_beam)?;
            let step = reinforce_step(model, inst, &mut pool)?;
            report.updates += 1;
            if !step.updated {
                report.skipped += 1;
            }
            reward_sum += pool.iter().map(|s| s.reward).sum::<f64>();
            samples += pool.len();
            log.record(&LogRecord {
                step: report.updates as u64,
                lr: config.rl_learning_rate,
                loss: step.loss,
                mean_reward: Some(step.mean_reward),
            })?;
            if !dev.is_empty() && report.updates.is_multiple_of(config.rl_eval_every) {
                let r = dev_reward(model, dev, oracle)?;
                log::info!("rl: step {} dev reward {r:.4}", report.updates);
                report.evaluations.push((report.updates, r));
                if report.best_dev_reward.is_none_or(|b| r > b) {
                    report.best_dev_reward = Some(r);
                    best = Some(model.store.clone());
                    stale = 0;
                } else {
                    stale += 1;
                    if stale >= config.rl_patience {
                        report.epoch_rewards.push(reward_sum / samples.max(1) as f64);
                        report.stop = RlStop::Plateau;
                        break 'epochs;
                    }
                }
            }
        }
        report.epoch_rewards.push(reward_sum / samples.max(1) as f64);
        if samples > 0 && reward_sum == 0.0 {
            return Err(Error::RewardCollapse {
                epoch,
                samples,
                updates: report.updates,
            });
        }
    }
    if let Some(store) = best {
        model.store = store;
    }
    Ok(report)
}
