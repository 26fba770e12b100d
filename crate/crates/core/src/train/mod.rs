//! Maximum-likelihood training and REINFORCE fine-tuning.

pub mod log;
pub mod mle;
pub mod rl;

pub use log::{JsonlLog, LogRecord, MemoryLog, NullLog, TrainLog};
pub use mle::{evaluate_mle, mle_gradients, mle_loss, train_mle, BatchStats, MleEpoch, MleReport};
pub use rl::{
    build_sample_pool, dev_reward, finetune_rl, reinforce_gradients, reinforce_loss, reinforce_step, rl_instances,
    RewardSample, RlInstance, RlReport, RlStep, RlStop, SampleSource,
};

/// Mixes a run seed with a counter into an independent stream seed.
pub(crate) fn stream_seed(seed: u64, counter: u64) -> u64 {
    let mut z = seed ^ counter.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
