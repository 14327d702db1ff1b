//! Oracle-based studies of the simulator's checkable properties.
//!
//! Every study is deterministic given its seed and reduces per-trial results
//! in trial order, so running trials on a thread pool does not change a
//! report.

use std::collections::BTreeSet;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{partition_noniid, synth_dataset, BatchSampler, PartitionSpec, SynthSpec};
use crate::device::{continue_train, local_train, sgd_steps, LocalUpdate};
use crate::error::Result;
use crate::model::{finite_diff_gradient, gradient, init_params, Batch, ModelSpec, ParamVector};
use crate::rng::{Purpose, Rng, RngStream};
use crate::server::{
    approximate_update, estimate_full_model, hessian_vector_apply, sample_devices, straggler_count,
    Strategy,
};
use crate::simulation::{ExperimentConfig, Federation};

/// Grid and trial count for [`approximation_error_study`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub eta_grid: Vec<f64>,
    pub tau_grid: Vec<usize>,
    pub trials_per_cell: usize,
    pub seed: u64,
}

impl StudyConfig {
    /// `eta_l` in {1e-3, ..., 1e-1} (half-decades), `tau` in `{2, ..., E-1}`.
    pub fn default_for(config: &ExperimentConfig) -> Self {
        Self {
            eta_grid: vec![1e-3, 3e-3, 1e-2, 3e-2, 1e-1],
            tau_grid: (2..config.local_epochs).collect(),
            trials_per_cell: 20,
            seed: 0,
        }
    }

    pub fn trials(&self) -> usize {
        self.eta_grid.len() * self.tau_grid.len() * self.trials_per_cell
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxTrial {
    pub eta_l: f64,
    pub tau: usize,
    /// `||Delta_E - corrected||`
    pub corrected_error: f64,
    /// `||Delta_E - Delta_{E_i}||`
    pub raw_error: f64,
    /// `||grad F_i(w_t)||^2` over the device's full shard.
    pub grad_norm_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxErrorReport {
    pub trials: Vec<ApproxTrial>,
    pub failed_trials: usize,
    pub win_rate: f64,
    /// Median corrected error per `eta_l`, in grid order.
    pub eta_medians: Vec<(f64, f64)>,
    /// Median corrected error per `tau`, in grid order.
    pub tau_medians: Vec<(usize, f64)>,
    /// Least-squares slope of log median error against log `eta_l`.
    pub eta_exponent: f64,
    /// Least-squares slope of log median error against log `tau`.
    pub tau_exponent: f64,
    /// Largest `corrected_error / (eta_l^2 tau^2 ||grad||^2)`.
    pub empirical_m: f64,
}

impl ApproxErrorReport {
    pub fn tau_medians_nondecreasing(&self) -> bool {
        self.tau_medians.windows(2).all(|w| w[1].1 >= w[0].1)
    }
}

/// Compares one straggler's raw and corrected update against the update it
/// would have produced with all `E` steps.
///
/// The straggler's batch stream is shared between the truncated run and its
/// continuation, so the reference `Delta_E` is the exact trajectory the device
/// would have followed. `w_hat` comes from `K - round(rho K)` devices that
/// really ran `E` steps.
pub fn approximation_trial(
    fed: &Federation,
    w_t: &ParamVector,
    eta_l: f64,
    tau: usize,
    key: RngStream,
) -> Result<ApproxTrial> {
    let cfg = &fed.config;
    let e = cfg.local_epochs;
    let schedule = crate::device::LocalSchedule {
        objective: crate::device::LocalObjective::Plain,
        ..cfg.schedule(eta_l)
    };
    let sub = |slot: u64| RngStream { slot: key.slot * 1024 + slot, ..key };

    let selected = sample_devices(cfg.n_devices, cfg.k_selected, &mut sub(0).rng())?;
    let full_count = (cfg.k_selected - straggler_count(cfg.rho, cfg.k_selected)).max(1);
    let full: Vec<LocalUpdate> = selected
        .iter()
        .skip(1)
        .take(full_count)
        .enumerate()
        .map(|(i, &device)| {
            let mut sampler = BatchSampler::new(sub(i as u64 + 1).rng());
            local_train(&fed.spec, w_t, &fed.shards[device], e, &schedule, &mut sampler)
        })
        .collect::<Result<_>>()?;
    let full_refs: Vec<&LocalUpdate> = full.iter().collect();
    let (w_hat, _) = estimate_full_model(w_t, &full_refs)?;

    let shard = &fed.shards[selected[0]];
    let steps = e + 1 - tau;
    let mut sampler = BatchSampler::new(sub(1000).rng());
    let w_partial = sgd_steps(&fed.spec, w_t, shard, steps, &schedule, &mut sampler)?;
    let w_full = continue_train(
        &fed.spec,
        &w_partial,
        shard,
        tau - 1,
        eta_l,
        cfg.batch_size,
        &mut sampler,
    )?;
    let delta_partial = w_partial.sub(w_t)?;
    let delta_full = w_full.sub(w_t)?;

    let corrected = if tau > 1 {
        let update = LocalUpdate {
            device_id: shard.device_id,
            delta: delta_partial.clone(),
            tau,
            epochs_run: steps,
            sample_count: shard.len(),
        };
        approximate_update(&update, w_t, &w_hat, eta_l)?.0
    } else {
        delta_partial.clone()
    };
    let grad_norm_sq = gradient(&fed.spec, w_t, &shard.samples)?.norm().powi(2);
    Ok(ApproxTrial {
        eta_l,
        tau,
        corrected_error: delta_full.sub(&corrected)?.norm(),
        raw_error: delta_full.sub(&delta_partial)?.norm(),
        grad_norm_sq,
    })
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ols_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Runs [`approximation_trial`] over the `eta_l x tau` grid.
///
/// Each trial starts from a freshly initialized model (its own seed) so the
/// study covers the region where local gradients are largest.
pub fn approximation_error_study(config: &ExperimentConfig, study: &StudyConfig) -> Result<ApproxErrorReport> {
    let fed = Federation::new(config.clone())?;
    let mut jobs = Vec::with_capacity(study.trials());
    for (ei, &eta) in study.eta_grid.iter().enumerate() {
        for (ti, &tau) in study.tau_grid.iter().enumerate() {
            for j in 0..study.trials_per_cell {
                // the same starting points are reused across the grid
                jobs.push((eta, tau, j, ei * study.tau_grid.len() + ti));
            }
        }
    }
    let outcomes: Vec<Result<ApproxTrial>> = jobs
        .par_iter()
        .map(|&(eta, tau, j, cell)| {
            let w_t = init_params(&fed.spec, RngStream::new(study.seed, j as u64, 0, Purpose::Init).seed());
            let key = RngStream::new(study.seed, cell as u64, j as u64, Purpose::Study);
            approximation_trial(&fed, &w_t, eta, tau, key)
        })
        .collect();

    let mut trials = Vec::new();
    let mut failed_trials = 0;
    for outcome in outcomes {
        match outcome {
            Ok(t) if t.corrected_error.is_finite() && t.raw_error.is_finite() => trials.push(t),
            _ => failed_trials += 1,
        }
    }

    let wins = trials.iter().filter(|t| t.corrected_error < t.raw_error).count();
    let win_rate = if trials.is_empty() {
        0.0
    } else {
        wins as f64 / trials.len() as f64
    };
    let eta_medians: Vec<(f64, f64)> = study
        .eta_grid
        .iter()
        .map(|&eta| {
            let errs = trials.iter().filter(|t| t.eta_l == eta).map(|t| t.corrected_error);
            (eta, median(errs.collect()))
        })
        .collect();
    let tau_medians: Vec<(usize, f64)> = study
        .tau_grid
        .iter()
        .map(|&tau| {
            let errs = trials.iter().filter(|t| t.tau == tau).map(|t| t.corrected_error);
            (tau, median(errs.collect()))
        })
        .collect();
    let log_points = |pts: Vec<(f64, f64)>| -> Vec<(f64, f64)> {
        pts.into_iter()
            .filter(|(_, e)| *e > 0.0 && e.is_finite())
            .map(|(x, e)| (x.ln(), e.ln()))
            .collect()
    };
    let eta_exponent = ols_slope(&log_points(eta_medians.clone()));
    let tau_exponent = ols_slope(&log_points(
        tau_medians.iter().map(|&(t, e)| (t as f64, e)).collect(),
    ));
    let empirical_m = trials
        .iter()
        .filter(|t| t.grad_norm_sq > 0.0)
        .map(|t| t.corrected_error / (t.eta_l.powi(2) * (t.tau as f64).powi(2) * t.grad_norm_sq))
        .fold(0.0, f64::max);

    Ok(ApproxErrorReport {
        trials,
        failed_trials,
        win_rate,
        eta_medians,
        tau_medians,
        eta_exponent,
        tau_exponent,
        empirical_m,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingReport {
    pub n_devices: usize,
    pub k_selected: usize,
    pub trials: usize,
    /// Mean number of slots per round won by each device (expectation `K/N`).
    pub frequencies: Vec<f64>,
    pub max_abs_deviation: f64,
    /// Exact standard deviation of a device's mean slot count:
    /// `sqrt(K (1/N) (1 - 1/N) / trials)`.
    pub binomial_sd: f64,
    pub threshold: f64,
}

impl SamplingReport {
    pub fn within_threshold(&self) -> bool {
        self.max_abs_deviation <= self.threshold
    }
}

/// Empirical per-device selection frequency of [`sample_devices`].
pub fn sampling_study(n: usize, k: usize, trials: usize, seed: u64) -> Result<SamplingReport> {
    let mut counts = vec![0u64; n];
    let mut rng = RngStream::new(seed, 0, 0, Purpose::Sampling).rng();
    for _ in 0..trials {
        for d in sample_devices(n, k, &mut rng)? {
            counts[d] += 1;
        }
    }
    let expected = k as f64 / n as f64;
    let frequencies: Vec<f64> = counts.iter().map(|&c| c as f64 / trials as f64).collect();
    let max_abs_deviation = frequencies
        .iter()
        .map(|f| (f - expected).abs())
        .fold(0.0, f64::max);
    let p = 1.0 / n as f64;
    let binomial_sd = (k as f64 * p * (1.0 - p) / trials as f64).sqrt();
    Ok(SamplingReport {
        n_devices: n,
        k_selected: k,
        trials,
        frequencies,
        max_abs_deviation,
        binomial_sd,
        threshold: 3.0 * binomial_sd,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub round: usize,
    pub coordinate: usize,
    pub fedlga: f64,
    pub fedavg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyReport {
    pub rounds: usize,
    pub identical: bool,
    pub records_identical: bool,
    pub first_divergence: Option<Divergence>,
}

/// Runs FedLGA (the config's `eta_g`, or 1) and FedAvg from the same seed and
/// compares the parameter trajectories bit for bit.
pub fn degeneracy_check(config: &ExperimentConfig) -> Result<DegeneracyReport> {
    let eta_g = match config.strategy {
        Strategy::FedLga { eta_g } => eta_g,
        _ => 1.0,
    };
    let trajectory = |strategy: Strategy| -> Result<(Vec<ParamVector>, Vec<_>)> {
        let fed = Federation::new(ExperimentConfig {
            strategy,
            early_stop: false,
            ..config.clone()
        })?;
        let mut path = Vec::with_capacity(config.rounds);
        let res = fed.run_with(|_, w| path.push(w.clone()))?;
        Ok((path, res.records))
    };
    let (lga, lga_records) = trajectory(Strategy::FedLga { eta_g })?;
    let (avg, avg_records) = trajectory(Strategy::FedAvg)?;

    let first_divergence = lga.iter().zip(&avg).enumerate().find_map(|(round, (a, b))| {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .position(|(x, y)| x.to_bits() != y.to_bits())
            .map(|coordinate| Divergence {
                round,
                coordinate,
                fedlga: a.as_slice()[coordinate],
                fedavg: b.as_slice()[coordinate],
            })
    });
    let records_identical = lga_records.len() == avg_records.len()
        && lga_records.iter().zip(&avg_records).all(|(a, b)| a.same_metrics(b));
    Ok(DegeneracyReport {
        rounds: lga.len(),
        identical: first_divergence.is_none() && lga.len() == avg.len(),
        records_identical,
        first_divergence,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub instances: usize,
    pub max_param_count: usize,
    pub max_rel_error: f64,
}

/// A random classifier instance with at most `max_params` parameters.
pub fn random_instance(rng: &mut Rng, max_params: usize) -> (ModelSpec, ParamVector, Batch) {
    let spec = loop {
        let d = rng.random_range(1..=8);
        let c = rng.random_range(2..=6);
        let spec = if rng.random_bool(0.5) {
            ModelSpec::logistic(d, c)
        } else {
            ModelSpec::mlp(d, rng.random_range(1..=6), c)
        };
        if spec.param_count() <= max_params {
            break spec;
        }
    };
    let params: Vec<f64> = (0..spec.param_count())
        .map(|_| 0.7 * Distribution::<f64>::sample(&StandardNormal, rng))
        .collect();
    let n = rng.random_range(1..=12);
    let features: Vec<f64> = (0..n * spec.input_dim).map(|_| StandardNormal.sample(rng)).collect();
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..spec.num_classes)).collect();
    let batch = Batch::new(features, labels, spec.input_dim).expect("consistent shapes");
    (spec, ParamVector::from_vec(params), batch)
}

/// Analytic gradient against central differences with step `h`.
pub fn gradient_study(instances: usize, h: f64, seed: u64) -> Result<GradientReport> {
    let mut rng = RngStream::new(seed, 0, 0, Purpose::Study).rng();
    let mut max_rel_error = 0.0f64;
    let mut max_param_count = 0;
    for _ in 0..instances {
        let (spec, params, batch) = random_instance(&mut rng, 100);
        let g = gradient(&spec, &params, &batch)?;
        let fd = finite_diff_gradient(&spec, &params, &batch, h)?;
        let rel = g.sub(&fd)?.norm() / g.norm().max(fd.norm()).max(1e-300);
        max_rel_error = max_rel_error.max(rel);
        max_param_count = max_param_count.max(spec.param_count());
    }
    Ok(GradientReport {
        instances,
        max_param_count,
        max_rel_error,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessianReport {
    pub cases: usize,
    pub max_abs_error: f64,
}

/// Dense `(g g^T) v` with the matrix built explicitly.
pub fn dense_outer_product_apply(g: &[f64], v: &[f64]) -> Vec<f64> {
    let n = g.len();
    let matrix: Vec<f64> = (0..n * n).map(|idx| g[idx / n] * g[idx % n]).collect();
    (0..n)
        .map(|r| (0..n).map(|c| matrix[r * n + c] * v[c]).sum())
        .collect()
}

/// [`hessian_vector_apply`] against [`dense_outer_product_apply`].
pub fn hessian_study(cases: usize, max_dim: usize, seed: u64) -> Result<HessianReport> {
    let mut rng = RngStream::new(seed, 0, 0, Purpose::Study).rng();
    let mut max_abs_error = 0.0f64;
    for _ in 0..cases {
        let dim = rng.random_range(1..=max_dim);
        let g: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let fast = hessian_vector_apply(&g.clone().into(), &v.clone().into())?;
        let dense = dense_outer_product_apply(&g, &v);
        for (a, b) in fast.as_slice().iter().zip(&dense) {
            max_abs_error = max_abs_error.max((a - b).abs());
        }
    }
    Ok(HessianReport { cases, max_abs_error })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionCase {
    pub classes: usize,
    pub devices: usize,
    pub per_device: usize,
    pub disjoint: bool,
    pub covers: bool,
    pub exact_classes: bool,
}

impl PartitionCase {
    pub fn ok(&self) -> bool {
        self.disjoint && self.covers && self.exact_classes
    }
}

/// Partition invariants over every `(C, N, P)` in the given ranges with
/// `C | N P` and `P <= C`.
pub fn partition_study(
    classes: impl IntoIterator<Item = usize>,
    devices: impl IntoIterator<Item = usize> + Clone,
    seed: u64,
) -> Result<Vec<PartitionCase>> {
    let mut cases = Vec::new();
    for c in classes {
        for n in devices.clone() {
            for p in 1..=c {
                if (n * p) % c != 0 {
                    continue;
                }
                let chunks = n * p / c;
                // uneven class sizes exercise the remainder rule
                let ds = synth_dataset(
                    &SynthSpec {
                        num_classes: c,
                        input_dim: 2,
                        samples_per_class: chunks * 3 + (c % 3),
                        class_sep: 1.0,
                        noise_sigma: 1.0,
                    },
                    seed,
                )?;
                let shards = partition_noniid(
                    &ds,
                    &PartitionSpec {
                        num_devices: n,
                        classes_per_device: p,
                        seed,
                    },
                )?;
                let mut seen = BTreeSet::new();
                let mut total = 0;
                let mut disjoint = true;
                for s in &shards {
                    total += s.source_rows.len();
                    for &r in &s.source_rows {
                        disjoint &= seen.insert(r);
                    }
                }
                let exact_classes = shards.iter().all(|s| {
                    let labels: BTreeSet<usize> = s.samples.labels().iter().copied().collect();
                    s.class_set.len() == p && labels == s.class_set
                });
                cases.push(PartitionCase {
                    classes: c,
                    devices: n,
                    per_device: p,
                    disjoint,
                    covers: total == ds.len() && seen.len() == ds.len(),
                    exact_classes,
                });
            }
        }
    }
    Ok(cases)
}
