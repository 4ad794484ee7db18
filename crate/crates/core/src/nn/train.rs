//! Shared mini-batch training loop: AdamW, unit-norm clipping, periodic
//! validation with early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::Gradients;
use super::params::{clip_grad_norm, AdamW, AdamWConfig, ParamStore};
use crate::error::{Error, Result};

/// Optimization settings common to every trainable model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    pub eval_every: usize,
    pub early_stop_patience: usize,
    pub grad_clip_norm: f64,
    /// Stop as soon as the validation loss drops to this value.
    #[serde(default)]
    pub stop_below: Option<f64>,
}

impl TrainSettings {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_steps == 0 || self.eval_every == 0 {
            return Err(Error::Config(
                "batch_size, max_steps and eval_every must be positive".into(),
            ));
        }
        if self.early_stop_patience == 0 {
            return Err(Error::Config("early_stop_patience must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.grad_clip_norm > 0.0) {
            return Err(Error::Config(
                "learning_rate and grad_clip_norm must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub clipped_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: usize,
    pub validation_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub steps: Vec<StepRecord>,
    pub evals: Vec<EvalRecord>,
    pub best_step: usize,
    pub best_validation_loss: f64,
    pub stopped_early: bool,
}

/// Runs training and leaves the best-validation parameters in `store`.
///
/// `step_loss` computes the mean loss and gradients over the given example
/// indices; `validate` returns the validation loss for the current weights.
pub fn fit(
    store: &mut ParamStore,
    n_train: usize,
    settings: &TrainSettings,
    seed: u64,
    mut step_loss: impl FnMut(&ParamStore, &[usize]) -> Result<(f64, Gradients)>,
    mut validate: impl FnMut(&ParamStore) -> Result<f64>,
) -> Result<TrainingLog> {
    settings.validate()?;
    if n_train == 0 {
        return Err(Error::validation("training corpus is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut opt = AdamW::new(AdamWConfig::default());
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut cursor = n_train;
    let mut log = TrainingLog {
        best_validation_loss: f64::INFINITY,
        ..Default::default()
    };
    let mut best = store.clone();
    let mut since_best = 0;

    for step in 1..=settings.max_steps {
        let batch: Vec<usize> = if settings.batch_size >= n_train {
            (0..n_train).collect()
        } else {
            if cursor + settings.batch_size > n_train {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let b = order[cursor..cursor + settings.batch_size].to_vec();
            cursor += settings.batch_size;
            b
        };
        let (loss, mut grads) = step_loss(store, &batch)?;
        if !loss.is_finite() {
            return Err(Error::validation(format!("loss diverged at step {step}")));
        }
        let (grad_norm, clipped_norm) = clip_grad_norm(&mut grads, settings.grad_clip_norm);
        opt.step(store, &grads, settings.learning_rate);
        log.steps.push(StepRecord {
            step,
            loss,
            grad_norm,
            clipped_norm,
        });

        if step % settings.eval_every == 0 || step == settings.max_steps {
            let val = validate(store)?;
            log.evals.push(EvalRecord {
                step,
                validation_loss: val,
            });
            if val < log.best_validation_loss {
                log.best_validation_loss = val;
                log.best_step = step;
                best = store.clone();
                since_best = 0;
            } else {
                since_best += 1;
            }
            if settings.stop_below.is_some_and(|t| val <= t) {
                break;
            }
            if since_best >= settings.early_stop_patience {
                log.stopped_early = true;
                break;
            }
        }
    }
    *store = best;
    Ok(log)
}
