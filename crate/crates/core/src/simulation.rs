//! Synchronous round loop: sample, plan, train locally, correct, aggregate,
//! evaluate.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::idx::load_idx;
use crate::data::{partition_noniid, synth_dataset, BatchSampler, Dataset, PartitionSpec, Shard, SynthSpec};
use crate::device::{local_train, LocalSchedule, LocalUpdate};
use crate::error::{Error, Result};
use crate::model::{accuracy, forward_loss, init_params, ModelKind, ModelSpec, ParamVector};
use crate::rng::{Purpose, RngStream};
use crate::server::{
    aggregate, correct_stragglers, plan_round, sample_devices, ApproxDiagnostics, SlotUpdate, Strategy,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic {
        num_classes: usize,
        input_dim: usize,
        train_per_class: usize,
        test_per_class: usize,
        class_sep: f64,
        noise_sigma: f64,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n_devices: usize,
    pub k_selected: usize,
    /// Requested local steps per round (`E`).
    pub local_epochs: usize,
    pub batch_size: usize,
    pub eta_l0: f64,
    pub gamma: f64,
    pub rho: f64,
    pub tau_max: usize,
    pub rounds: usize,
    pub strategy: Strategy,
    pub model: ModelKind,
    pub data: DataSource,
    pub classes_per_device: usize,
    /// Seeds dataset generation and the partition.
    pub data_seed: u64,
    /// Seeds model initialization and every per-round draw.
    pub master_seed: u64,
    pub target_accuracy: Option<f64>,
    pub early_stop: bool,
    pub eval_every: usize,
    pub parallel: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_devices: 50,
            k_selected: 10,
            local_epochs: 5,
            batch_size: 10,
            eta_l0: 0.05,
            gamma: 0.0,
            rho: 0.5,
            tau_max: 4,
            rounds: 300,
            strategy: Strategy::FedLga { eta_g: 1.0 },
            model: ModelKind::Logistic,
            data: DataSource::Synthetic {
                num_classes: 10,
                input_dim: 20,
                train_per_class: 600,
                test_per_class: 200,
                class_sep: 3.0,
                noise_sigma: 1.0,
            },
            classes_per_device: 2,
            data_seed: 0,
            master_seed: 0,
            target_accuracy: Some(0.8),
            early_stop: false,
            eval_every: 1,
            parallel: true,
        }
    }
}

impl ExperimentConfig {
    pub fn schedule(&self, eta_l: f64) -> LocalSchedule {
        LocalSchedule {
            full_steps: self.local_epochs,
            eta_l,
            batch_size: self.batch_size,
            objective: self.strategy.local_objective(),
        }
    }
}

/// `eta_l0 * (1 - gamma)^t`, accumulated one factor per round.
pub fn lr_schedule(eta_l0: f64, gamma: f64, t: usize) -> f64 {
    let mut eta = eta_l0;
    for _ in 0..t {
        eta *= 1.0 - gamma;
    }
    eta
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: usize,
    pub strategy: String,
    pub train_loss: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
    pub rho_effective: f64,
    pub eta_l: f64,
    pub wall_ms: f64,
}

impl RoundRecord {
    /// Equality on everything except the strategy tag and wall time.
    pub fn same_metrics(&self, other: &Self) -> bool {
        self.t == other.t
            && self.train_loss.to_bits() == other.train_loss.to_bits()
            && self.test_loss.to_bits() == other.test_loss.to_bits()
            && self.test_accuracy.to_bits() == other.test_accuracy.to_bits()
            && self.rho_effective.to_bits() == other.rho_effective.to_bits()
            && self.eta_l.to_bits() == other.eta_l.to_bits()
    }
}

/// First round whose test accuracy reaches `target`.
pub fn rounds_to_target(records: &[RoundRecord], target: f64) -> Option<usize> {
    records
        .iter()
        .find(|r| r.test_accuracy >= target)
        .map(|r| r.t)
}

#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub w_next: ParamVector,
    pub record: Option<RoundRecord>,
    pub diagnostics: Vec<ApproxDiagnostics>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub final_params: ParamVector,
    pub records: Vec<RoundRecord>,
    pub stopped_early: bool,
}

/// Materialized experiment: model, device shards and held-out test set.
#[derive(Debug, Clone)]
pub struct Federation {
    pub config: ExperimentConfig,
    pub spec: ModelSpec,
    pub shards: Vec<Shard>,
    pub test: Dataset,
}

/// Validated data for a config: `(train, test)`.
pub fn load_data(config: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    match &config.data {
        DataSource::Synthetic {
            num_classes,
            input_dim,
            train_per_class,
            test_per_class,
            class_sep,
            noise_sigma,
        } => {
            let all = synth_dataset(
                &SynthSpec {
                    num_classes: *num_classes,
                    input_dim: *input_dim,
                    samples_per_class: train_per_class + test_per_class,
                    class_sep: *class_sep,
                    noise_sigma: *noise_sigma,
                },
                config.data_seed,
            )?;
            all.split_holdout(*test_per_class)
        }
        DataSource::Idx {
            images,
            labels,
            test_images,
            test_labels,
        } => {
            let train = load_idx(images, labels)?;
            let test = load_idx(test_images, test_labels)?;
            if test.input_dim() != train.input_dim() {
                return Err(Error::DimMismatch {
                    expected: train.input_dim(),
                    got: test.input_dim(),
                });
            }
            Ok((train, test))
        }
    }
}

impl Federation {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        let (train, test) = load_data(&config)?;
        Self::from_datasets(config, &train, test)
    }

    pub fn from_datasets(config: ExperimentConfig, train: &Dataset, test: Dataset) -> Result<Self> {
        let spec = ModelSpec {
            kind: config.model,
            input_dim: train.input_dim(),
            num_classes: train.num_classes().max(test.num_classes()),
        };
        let shards = partition_noniid(
            train,
            &PartitionSpec {
                num_devices: config.n_devices,
                classes_per_device: config.classes_per_device,
                seed: config.data_seed,
            },
        )?;
        Ok(Self {
            config,
            spec,
            shards,
            test,
        })
    }

    pub fn initial_params(&self) -> ParamVector {
        init_params(&self.spec, self.config.master_seed)
    }

    fn stream(&self, t: usize, slot: usize, purpose: Purpose) -> RngStream {
        RngStream::new(self.config.master_seed, t as u64, slot as u64, purpose)
    }

    /// One synchronous round starting from `w_t`.
    pub fn run_round(&self, w_t: &ParamVector, t: usize) -> Result<RoundOutcome> {
        let started = Instant::now();
        let cfg = &self.config;
        let eta_l = lr_schedule(cfg.eta_l0, cfg.gamma, t);
        let schedule = cfg.schedule(eta_l);

        let selected = sample_devices(
            cfg.n_devices,
            cfg.k_selected,
            &mut self.stream(t, 0, Purpose::Sampling).rng(),
        )?;
        let plan = plan_round(
            selected,
            cfg.rho,
            cfg.tau_max,
            &mut self.stream(t, 0, Purpose::Plan).rng(),
        )?;

        let train_slot = |slot: usize| -> Result<LocalUpdate> {
            let shard = &self.shards[plan.selected[slot]];
            let mut sampler = BatchSampler::new(self.stream(t, slot, Purpose::LocalBatches).rng());
            let steps = plan.steps_for(slot, cfg.local_epochs);
            local_train(&self.spec, w_t, shard, steps, &schedule, &mut sampler)
        };
        let updates: Vec<LocalUpdate> = if cfg.parallel {
            (0..plan.slots()).into_par_iter().map(train_slot).collect::<Result<_>>()?
        } else {
            (0..plan.slots()).map(train_slot).collect::<Result<_>>()?
        };

        let (slots, diagnostics) = if cfg.strategy.corrects_stragglers() {
            correct_stragglers(w_t, updates, eta_l)?
        } else {
            (updates.into_iter().map(SlotUpdate::raw).collect(), Vec::new())
        };
        let w_next = aggregate(&cfg.strategy, w_t, &slots)?;
        if !w_next.is_finite() {
            return Err(Error::NonFinite {
                round: t,
                strategy: cfg.strategy.tag().to_string(),
            });
        }

        let evaluate = (t + 1).is_multiple_of(cfg.eval_every.max(1)) || t + 1 == cfg.rounds;
        let record = if evaluate {
            let participants: BTreeSet<usize> = plan.selected.iter().copied().collect();
            let (train_loss, test_loss, test_accuracy) = self.evaluate(&w_next, &participants)?;
            Some(RoundRecord {
                t,
                strategy: cfg.strategy.tag().to_string(),
                train_loss,
                test_loss,
                test_accuracy,
                rho_effective: plan.rho_effective(),
                eta_l,
                wall_ms: started.elapsed().as_secs_f64() * 1e3,
            })
        } else {
            None
        };
        Ok(RoundOutcome {
            w_next,
            record,
            diagnostics,
        })
    }

    /// Train loss over the union of the given shards, test loss and accuracy.
    pub fn evaluate(&self, w: &ParamVector, devices: &BTreeSet<usize>) -> Result<(f64, f64, f64)> {
        let mut weighted = 0.0;
        let mut count = 0usize;
        for &d in devices {
            let shard = &self.shards[d];
            weighted += forward_loss(&self.spec, w, &shard.samples)? * shard.len() as f64;
            count += shard.len();
        }
        let train_loss = if count == 0 { 0.0 } else { weighted / count as f64 };
        let test_loss = forward_loss(&self.spec, w, self.test.samples())?;
        let test_accuracy = accuracy(&self.spec, w, self.test.samples())?;
        Ok((train_loss, test_loss, test_accuracy))
    }

    /// Runs `config.rounds` rounds, calling `observe(t, w_{t+1})` after each.
    pub fn run_with(&self, mut observe: impl FnMut(usize, &ParamVector)) -> Result<ExperimentResult> {
        let mut w = self.initial_params();
        let mut records = Vec::new();
        let mut stopped_early = false;
        for t in 0..self.config.rounds {
            let outcome = self.run_round(&w, t)?;
            w = outcome.w_next;
            observe(t, &w);
            if let Some(record) = outcome.record {
                let reached = self
                    .config
                    .target_accuracy
                    .is_some_and(|target| record.test_accuracy >= target);
                records.push(record);
                if reached && self.config.early_stop {
                    stopped_early = true;
                    break;
                }
            }
        }
        Ok(ExperimentResult {
            final_params: w,
            records,
            stopped_early,
        })
    }

    pub fn run(&self) -> Result<ExperimentResult> {
        self.run_with(|_, _| {})
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    Federation::new(config.clone())?.run()
}
