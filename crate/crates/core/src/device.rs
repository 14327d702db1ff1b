//! Local training on a device.

use serde::{Deserialize, Serialize};

use crate::data::{BatchSampler, Shard};
use crate::error::{Error, Result};
use crate::model::{gradient, ModelSpec, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LocalObjective {
    Plain,
    /// Adds `mu/2 * ||w - w_t||^2` to the local loss, anchored at the
    /// round's received model.
    Prox { mu: f64 },
}

/// What a device sends back at the end of a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalUpdate {
    pub device_id: usize,
    /// `w_final - w_t`
    pub delta: ParamVector,
    /// `E - E_i + 1`; 1 for a device that completed all steps.
    pub tau: usize,
    pub epochs_run: usize,
    pub sample_count: usize,
}

impl LocalUpdate {
    pub fn is_full(&self) -> bool {
        self.tau == 1
    }
}

/// Per-round local training settings shared by every device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalSchedule {
    /// Requested number of local steps `E`.
    pub full_steps: usize,
    pub eta_l: f64,
    pub batch_size: usize,
    pub objective: LocalObjective,
}

/// Runs `steps` SGD steps from `w_t`, drawing batches from `sampler`, and
/// packages the displacement as the update sent to the aggregator.
pub fn local_train(
    spec: &ModelSpec,
    w_t: &ParamVector,
    shard: &Shard,
    steps: usize,
    schedule: &LocalSchedule,
    sampler: &mut BatchSampler,
) -> Result<LocalUpdate> {
    if steps == 0 || steps > schedule.full_steps {
        return Err(Error::StepsOutOfRange {
            steps,
            max: schedule.full_steps,
        });
    }
    let w = sgd_steps(spec, w_t, shard, steps, schedule, sampler)?;
    Ok(LocalUpdate {
        device_id: shard.device_id,
        delta: w.sub(w_t)?,
        tau: schedule.full_steps - steps + 1,
        epochs_run: steps,
        sample_count: shard.len(),
    })
}

/// The local iterate after `steps` steps of
/// `w <- w - eta_l * (grad F(w, B) + mu * (w - w_t))`; the proximal part only
/// for [`LocalObjective::Prox`].
pub fn sgd_steps(
    spec: &ModelSpec,
    w_t: &ParamVector,
    shard: &Shard,
    steps: usize,
    schedule: &LocalSchedule,
    sampler: &mut BatchSampler,
) -> Result<ParamVector> {
    if !(schedule.eta_l > 0.0) {
        return Err(Error::InvalidLearningRate(schedule.eta_l));
    }
    if shard.is_empty() {
        return Err(Error::EmptyShard(shard.device_id));
    }
    let mut w = w_t.clone();
    for _ in 0..steps {
        let batch = sampler.next_batch(shard, schedule.batch_size)?;
        let mut g = gradient(spec, &w, &batch)?;
        if let LocalObjective::Prox { mu } = schedule.objective {
            g.axpy(mu, &w.sub(w_t)?)?;
        }
        w.axpy(-schedule.eta_l, &g)?;
    }
    Ok(w)
}

/// Continues the plain SGD recursion for `extra_steps` more steps.
pub fn continue_train(
    spec: &ModelSpec,
    w_partial: &ParamVector,
    shard: &Shard,
    extra_steps: usize,
    eta_l: f64,
    batch_size: usize,
    sampler: &mut BatchSampler,
) -> Result<ParamVector> {
    let mut w = w_partial.clone();
    for _ in 0..extra_steps {
        let batch = sampler.next_batch(shard, batch_size)?;
        w.axpy(-eta_l, &gradient(spec, &w, &batch)?)?;
    }
    Ok(w)
}
