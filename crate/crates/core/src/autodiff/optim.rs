use serde::{Deserialize, Serialize};

use crate::autodiff::params::{Gradients, ParamStore};
use crate::error::{Error, Result};

/// Step-wise exponential decay: constant until `start_step`, then multiplied
/// by `decay_rate` once at `start_step` and again every `decay_every` steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub initial: f64,
    pub decay_rate: f64,
    pub decay_every: u64,
    pub start_step: u64,
}

impl LrSchedule {
    pub fn constant(lr: f64) -> Self {
        LrSchedule {
            initial: lr,
            decay_rate: 1.0,
            decay_every: 1,
            start_step: u64::MAX,
        }
    }

    pub fn at(&self, step: u64) -> f64 {
        if step < self.start_step {
            return self.initial;
        }
        let decays = (step - self.start_step) / self.decay_every.max(1) + 1;
        self.initial * self.decay_rate.powi(decays as i32)
    }
}

/// `param ← param − lr · grad` for every trainable parameter.
///
/// Fails without touching any parameter if a gradient is not finite.
pub fn sgd_step(params: &mut ParamStore, grads: &Gradients, lr: f64) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
    }
    for (id, p) in params.iter() {
        if let Some(g) = grads.raw(id) {
            if g.len() != p.value.len() {
                return Err(Error::shape("sgd_step", p.value.shape(), &[g.len()]));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Training(format!("non-finite gradient for `{}`", p.name)));
            }
        }
    }
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        if !params.get(id).trainable {
            continue;
        }
        if let Some(g) = grads.raw(id) {
            for (v, gv) in params.value_mut(id).data_mut().iter_mut().zip(g) {
                *v -= lr * gv;
            }
        }
    }
    Ok(())
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if max_norm > 0.0 && norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}
