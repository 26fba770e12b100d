use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{clip_global_norm, sgd_step, Dropout, Gradients, ParamStore, Tape};
use crate::data::EncodedExample;
use crate::error::{Error, Result};
use crate::model::Redr;
use crate::train::log::{LogRecord, TrainLog};
use crate::train::stream_seed;

/// Token-level tallies over a set of examples.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BatchStats {
    pub examples: usize,
    /// Summed negative log-likelihood.
    pub nll: f64,
    pub tokens: usize,
    pub correct: usize,
}

impl BatchStats {
    pub fn merge(&mut self, other: &BatchStats) {
        self.examples += other.examples;
        self.nll += other.nll;
        self.tokens += other.tokens;
        self.correct += other.correct;
    }

    /// Mean per-example summed NLL.
    pub fn mean_loss(&self) -> f64 {
        self.nll / self.examples.max(1) as f64
    }

    pub fn perplexity(&self) -> f64 {
        (self.nll / self.tokens.max(1) as f64).exp()
    }

    pub fn token_accuracy(&self) -> f64 {
        self.correct as f64 / self.tokens.max(1) as f64
    }
}

/// Teacher-forced statistics without dropout.
pub fn evaluate_mle(model: &Redr, examples: &[EncodedExample]) -> Result<BatchStats> {
    let mut stats = BatchStats::default();
    for ex in examples {
        let mut tape = Tape::with_params(&model.store);
        let (loss, score) = model.nll(&mut tape, ex, &mut Dropout::disabled())?;
        stats.merge(&BatchStats {
            examples: 1,
            nll: tape.scalar(loss),
            tokens: score.tokens,
            correct: score.correct,
        });
    }
    Ok(stats)
}

/// Mean over `batch` of the per-example summed NLL, without dropout.
pub fn mle_loss(model: &Redr, batch: &[EncodedExample]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyInput { op: "mle_loss" });
    }
    Ok(evaluate_mle(model, batch)?.mean_loss())
}

/// Gradient of the batch-mean loss. Each example gets its own tape and a
/// dropout stream derived from `dropout_seed`.
pub fn mle_gradients(model: &Redr, batch: &[&EncodedExample], dropout_seed: u64) -> Result<(BatchStats, Gradients)> {
    if batch.is_empty() {
        return Err(Error::EmptyInput { op: "mle_gradients" });
    }
    let scale = 1.0 / batch.len() as f64;
    let mut grads = Gradients::new(&model.store);
    let mut stats = BatchStats::default();
    for (i, ex) in batch.iter().enumerate() {
        let mut dropout = Dropout::train(model.config.dropout, stream_seed(dropout_seed, i as u64));
        let mut tape = Tape::with_params(&model.store);
        let (loss, score) = model.nll(&mut tape, ex, &mut dropout)?;
        tape.accumulate_gradients(loss, scale, &mut grads)?;
        stats.merge(&BatchStats {
            examples: 1,
            nll: tape.scalar(loss),
            tokens: score.tokens,
            correct: score.correct,
        });
    }
    Ok((stats, grads))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MleEpoch {
    pub epoch: usize,
    pub train: BatchStats,
    pub dev: Option<BatchStats>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MleReport {
    pub epochs: Vec<MleEpoch>,
    pub steps: u64,
    pub best_dev_loss: Option<f64>,
    /// 1-based epoch whose parameters were kept, when a dev set was given.
    pub best_epoch: Option<usize>,
    /// Set when training stopped on a non-finite loss or gradient.
    pub diverged: Option<String>,
}

/// SGD with the configured schedule, gradient clipping and per-epoch dev
/// evaluation. With a dev set the parameters of the best dev epoch are
/// kept; on divergence training stops with the last finite parameters (or
/// the best dev ones, if any epoch finished).
pub fn train_mle(
    model: &mut Redr,
    train: &[EncodedExample],
    dev: &[EncodedExample],
    log: &mut dyn TrainLog,
) -> Result<MleReport> {
    if train.is_empty() {
        return Err(Error::EmptyInput { op: "train_mle" });
    }
    model.config.validate()?;
    let config = model.config.clone();
    let schedule = config.schedule();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut report = MleReport {
        epochs: Vec::new(),
        steps: 0,
        best_dev_loss: None,
        best_epoch: None,
        diverged: None,
    };
    let mut best: Option<ParamStore> = None;

    'epochs: for epoch in 1..=config.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(config.seed, epoch as u64));
        order.shuffle(&mut rng);
        let mut totals = BatchStats::default();
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&EncodedExample> = chunk.iter().map(|&i| &train[i]).collect();
            let lr = schedule.at(report.steps);
            let outcome = mle_gradients(model, &batch, stream_seed(config.seed ^ 0xD80F, report.steps)).and_then(
                |(stats, mut grads)| {
                    if !stats.nll.is_finite() {
                        return Err(Error::NonFinite { op: "mle loss" });
                    }
                    clip_global_norm(&mut grads, config.max_grad_norm);
                    sgd_step(&mut model.store, &grads, lr)?;
                    Ok(stats)
                },
            );
            let stats = match outcome {
                Ok(s) => s,
                Err(e @ (Error::NonFinite { .. } | Error::Training(_))) => {
                    log::error!("training diverged at step {}: {e}", report.steps);
                    report.diverged = Some(format!("step {}: {e}", report.steps));
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            report.steps += 1;
            log.record(&LogRecord {
                step: report.steps,
                lr,
                loss: stats.mean_loss(),
                mean_reward: None,
            })?;
            totals.merge(&stats);
        }
        let dev_stats = if dev.is_empty() {
            None
        } else {
            Some(evaluate_mle(model, dev)?)
        };
        if let Some(d) = dev_stats {
            let loss = d.mean_loss();
            if report.best_dev_loss.is_none_or(|b| loss < b) {
                report.best_dev_loss = Some(loss);
                report.best_epoch = Some(epoch);
                best = Some(model.store.clone());
            }
        }
        log::info!(
            "epoch {epoch}: loss {:.4} ppl {:.4} acc {:.4}{}",
            totals.mean_loss(),
            totals.perplexity(),
            totals.token_accuracy(),
            dev_stats.map_or(String::new(), |d| format!(" dev loss {:.4}", d.mean_loss()))
        );
        report.epochs.push(MleEpoch {
            epoch,
            train: totals,
            dev: dev_stats,
        });
    }
    if let Some(store) = best {
        model.store = store;
    }
    Ok(report)
}
