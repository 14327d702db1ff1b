//! Aggregator side: device sampling, straggler planning, the FedLGA
//! correction and the aggregation rules.

use std::fmt;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::device::{LocalObjective, LocalUpdate};
use crate::error::{Error, Result};
use crate::model::ParamVector;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum Strategy {
    /// Corrects straggler updates before averaging; global step `eta_g`.
    FedLga { eta_g: f64 },
    FedAvg,
    /// Plain averaging of updates trained with a proximal local objective.
    FedProx { mu: f64 },
    /// Averages per-step normalized updates, rescaled by the mean step count.
    FedNova { eta_g: f64 },
}

impl Strategy {
    pub fn tag(&self) -> &'static str {
        match self {
            Strategy::FedLga { .. } => "fedlga",
            Strategy::FedAvg => "fedavg",
            Strategy::FedProx { .. } => "fedprox",
            Strategy::FedNova { .. } => "fednova",
        }
    }

    pub fn local_objective(&self) -> LocalObjective {
        match *self {
            Strategy::FedProx { mu } => LocalObjective::Prox { mu },
            _ => LocalObjective::Plain,
        }
    }

    pub fn corrects_stragglers(&self) -> bool {
        matches!(self, Strategy::FedLga { .. })
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Uniform sampling of `k` slots from `n` devices, with replacement.
pub fn sample_devices(n: usize, k: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    if n == 0 || k == 0 {
        return Err(Error::InvalidPlan(format!(
            "need at least one device and one slot (N = {n}, K = {k})"
        )));
    }
    Ok((0..k).map(|_| rng.random_range(0..n)).collect())
}

/// Number of straggler slots for a heterogeneity ratio `rho` over `k` slots.
pub fn straggler_count(rho: f64, k: usize) -> usize {
    (rho * k as f64).round() as usize
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundPlan {
    pub selected: Vec<usize>,
    /// Slot indices designated as stragglers, ascending.
    pub straggler_slots: Vec<usize>,
    /// Staleness per slot.
    pub taus: Vec<usize>,
}

impl RoundPlan {
    pub fn slots(&self) -> usize {
        self.selected.len()
    }

    /// Local steps the device in `slot` completes out of `full_steps`.
    pub fn steps_for(&self, slot: usize, full_steps: usize) -> usize {
        full_steps + 1 - self.taus[slot]
    }

    pub fn rho_effective(&self) -> f64 {
        self.straggler_slots.len() as f64 / self.slots() as f64
    }
}

/// Marks `round(rho * K)` uniformly chosen slots as stragglers with staleness
/// uniform over `{2, ..., tau_max}`; every other slot gets staleness 1.
pub fn plan_round(selected: Vec<usize>, rho: f64, tau_max: usize, rng: &mut Rng) -> Result<RoundPlan> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidPlan(format!("rho = {rho} outside [0, 1]")));
    }
    if rho > 0.0 && tau_max < 2 {
        return Err(Error::InvalidPlan(format!(
            "rho = {rho} needs tau_max >= 2, got {tau_max}"
        )));
    }
    let k = selected.len();
    let mut straggler_slots = index::sample(rng, k, straggler_count(rho, k)).into_vec();
    straggler_slots.sort_unstable();
    let mut taus = vec![1; k];
    for &slot in &straggler_slots {
        taus[slot] = rng.random_range(2..=tau_max);
    }
    Ok(RoundPlan {
        selected,
        straggler_slots,
        taus,
    })
}

/// `w_t` plus the mean update of the full workers. Returns `w_t` itself and
/// `true` (fallback) when there are none.
pub fn estimate_full_model(
    w_t: &ParamVector,
    full_updates: &[&LocalUpdate],
) -> Result<(ParamVector, bool)> {
    if full_updates.is_empty() {
        return Ok((w_t.clone(), true));
    }
    let mut sum = ParamVector::zeros(w_t.dim());
    for u in full_updates {
        sum.axpy(1.0, &u.delta)?;
    }
    let mean = sum.scale(1.0 / full_updates.len() as f64);
    Ok((w_t.add(&mean)?, false))
}

/// `(g g^T) v`, computed as `g * <g, v>` without forming the matrix.
pub fn hessian_vector_apply(g: &ParamVector, v: &ParamVector) -> Result<ParamVector> {
    Ok(g.scale(g.dot(v)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxDiagnostics {
    pub device_id: usize,
    pub delta_norm: f64,
    pub correction_norm: f64,
    pub used_fallback: bool,
}

/// Straggler correction `delta + G (w_hat - w_i)` with `w_i = w_t + delta`.
///
/// The aggregator never sees the device gradient at `w_i`, so `G` is the
/// outer product of the averaged realized gradient `-delta / (eta_l * E_i)`.
pub fn approximate_update(
    update: &LocalUpdate,
    w_t: &ParamVector,
    w_hat: &ParamVector,
    eta_l: f64,
) -> Result<(ParamVector, ApproxDiagnostics)> {
    if !(eta_l > 0.0) {
        return Err(Error::InvalidLearningRate(eta_l));
    }
    if update.tau <= 1 {
        return Err(Error::CorrectionOnFullWorker);
    }
    let w_local = w_t.add(&update.delta)?;
    let g = update
        .delta
        .scale(-1.0 / (eta_l * update.epochs_run as f64));
    let correction = hessian_vector_apply(&g, &w_hat.sub(&w_local)?)?;
    let corrected = update.delta.add(&correction)?;
    let diag = ApproxDiagnostics {
        device_id: update.device_id,
        delta_norm: update.delta.norm(),
        correction_norm: correction.norm(),
        used_fallback: false,
    };
    Ok((corrected, diag))
}

/// One slot's contribution to the aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotUpdate {
    pub update: LocalUpdate,
    /// Corrected update for stragglers under FedLGA.
    pub corrected: Option<ParamVector>,
}

impl SlotUpdate {
    pub fn raw(update: LocalUpdate) -> Self {
        Self {
            update,
            corrected: None,
        }
    }

    pub fn effective(&self) -> &ParamVector {
        self.corrected.as_ref().unwrap_or(&self.update.delta)
    }
}

/// Runs the server-side approximation over one round's updates: estimates
/// the full-run model from the full workers, then corrects every straggler.
pub fn correct_stragglers(
    w_t: &ParamVector,
    updates: Vec<LocalUpdate>,
    eta_l: f64,
) -> Result<(Vec<SlotUpdate>, Vec<ApproxDiagnostics>)> {
    let full: Vec<&LocalUpdate> = updates.iter().filter(|u| u.is_full()).collect();
    let (w_hat, fallback) = estimate_full_model(w_t, &full)?;
    let mut diagnostics = Vec::new();
    let mut slots = Vec::with_capacity(updates.len());
    for update in updates {
        if update.is_full() {
            slots.push(SlotUpdate::raw(update));
            continue;
        }
        let (corrected, mut diag) = approximate_update(&update, w_t, &w_hat, eta_l)?;
        diag.used_fallback = fallback;
        diagnostics.push(diag);
        slots.push(SlotUpdate {
            update,
            corrected: Some(corrected),
        });
    }
    Ok((slots, diagnostics))
}

/// Next joint model from one round's slot updates, summed in slot order.
pub fn aggregate(strategy: &Strategy, w_t: &ParamVector, slots: &[SlotUpdate]) -> Result<ParamVector> {
    if slots.is_empty() {
        return Err(Error::NoUpdates);
    }
    let k = slots.len() as f64;
    let mut sum = ParamVector::zeros(w_t.dim());
    match *strategy {
        Strategy::FedLga { eta_g } => {
            for s in slots {
                sum.axpy(1.0, s.effective())?;
            }
            step(w_t, &sum, k, eta_g)
        }
        Strategy::FedAvg | Strategy::FedProx { .. } => {
            for s in slots {
                sum.axpy(1.0, &s.update.delta)?;
            }
            step(w_t, &sum, k, 1.0)
        }
        Strategy::FedNova { eta_g } => {
            let mut steps = 0.0;
            for s in slots {
                let e_i = s.update.epochs_run as f64;
                sum.axpy(1.0 / e_i, &s.update.delta)?;
                steps += e_i;
            }
            step(w_t, &sum, k, eta_g * (steps / k))
        }
    }
}

/// `w + scale * (sum / k)`
fn step(w: &ParamVector, sum: &ParamVector, k: f64, scale: f64) -> Result<ParamVector> {
    let mean = ParamVector::from_vec(sum.as_slice().iter().map(|v| v / k).collect());
    let mut next = w.clone();
    next.axpy(scale, &mean)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn upd(delta: Vec<f64>, tau: usize, e: usize) -> LocalUpdate {
        LocalUpdate {
            device_id: 0,
            delta: delta.into(),
            tau,
            epochs_run: e + 1 - tau,
            sample_count: 1,
        }
    }

    #[test]
    fn single_device_always_zero() {
        let mut rng = Rng::seed_from_u64(0);
        for _ in 0..10 {
            assert_eq!(sample_devices(1, 1, &mut rng).unwrap(), vec![0]);
        }
    }

    #[test]
    fn sampling_is_seeded() {
        let a = sample_devices(50, 10, &mut Rng::seed_from_u64(3)).unwrap();
        let b = sample_devices(50, 10, &mut Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&d| d < 50));
    }

    #[test]
    fn plan_without_heterogeneity() {
        let plan = plan_round(vec![0; 10], 0.0, 4, &mut Rng::seed_from_u64(1)).unwrap();
        assert!(plan.straggler_slots.is_empty());
        assert!(plan.taus.iter().all(|&t| t == 1));
    }

    #[test]
    fn plan_half_stragglers() {
        let plan = plan_round((0..10).collect(), 0.5, 4, &mut Rng::seed_from_u64(1)).unwrap();
        assert_eq!(plan.straggler_slots.len(), 5);
        assert_eq!(plan.rho_effective(), 0.5);
        for slot in 0..10 {
            let t = plan.taus[slot];
            if plan.straggler_slots.contains(&slot) {
                assert!((2..=4).contains(&t));
            } else {
                assert_eq!(t, 1);
            }
        }
    }

    #[test]
    fn plan_all_stragglers_step_range() {
        let mut rng = Rng::seed_from_u64(2);
        for _ in 0..50 {
            let plan = plan_round(vec![0; 8], 1.0, 4, &mut rng).unwrap();
            assert!((0..8).all(|s| (2..=4).contains(&plan.steps_for(s, 5))));
        }
    }

    #[test]
    fn plan_exact_count_over_grid() {
        let mut rng = Rng::seed_from_u64(5);
        for k in 1..=20 {
            for r in 0..=20 {
                let rho = r as f64 / 20.0;
                let plan = plan_round(vec![0; k], rho, 3, &mut rng).unwrap();
                assert_eq!(plan.straggler_slots.len(), (rho * k as f64).round() as usize);
            }
        }
    }

    #[test]
    fn plan_rejects_small_tau_max() {
        let err = plan_round(vec![0; 4], 0.5, 1, &mut Rng::seed_from_u64(0));
        assert!(matches!(err, Err(Error::InvalidPlan(_))));
    }

    #[test]
    fn full_model_estimate() {
        let w = ParamVector::from_vec(vec![0.0]);
        let (a, b) = (upd(vec![1.0], 1, 5), upd(vec![3.0], 1, 5));
        assert_eq!(estimate_full_model(&w, &[&a, &b]).unwrap(), (vec![2.0].into(), false));
        assert_eq!(estimate_full_model(&w, &[&a]).unwrap(), (vec![1.0].into(), false));
        assert_eq!(estimate_full_model(&w, &[]).unwrap(), (w.clone(), true));
    }

    #[test]
    fn hvp_arithmetic() {
        let g = ParamVector::from_vec(vec![1.0, 2.0]);
        let v = ParamVector::from_vec(vec![3.0, 4.0]);
        assert_eq!(hessian_vector_apply(&g, &v).unwrap().as_slice(), &[11.0, 22.0]);
        let zero = ParamVector::zeros(2);
        assert_eq!(hessian_vector_apply(&zero, &v).unwrap(), zero);
        assert!(hessian_vector_apply(&g, &ParamVector::zeros(3)).is_err());
    }

    #[test]
    fn correction_vanishes_without_displacement() {
        let w_t = ParamVector::from_vec(vec![0.5, -1.0, 2.0]);
        let u = upd(vec![0.1, 0.2, -0.3], 3, 5);
        let w_hat = w_t.add(&u.delta).unwrap();
        let (corrected, diag) = approximate_update(&u, &w_t, &w_hat, 0.1).unwrap();
        assert_eq!(corrected, u.delta);
        assert_eq!(diag.correction_norm, 0.0);
    }

    #[test]
    fn zero_delta_gives_zero() {
        let w_t = ParamVector::from_vec(vec![0.5, -1.0]);
        let u = upd(vec![0.0, 0.0], 2, 5);
        let w_hat = ParamVector::from_vec(vec![3.0, 4.0]);
        let (corrected, _) = approximate_update(&u, &w_t, &w_hat, 0.1).unwrap();
        assert_eq!(corrected, ParamVector::zeros(2));
    }

    #[test]
    fn correction_formula() {
        // delta = [-0.2, 0], E_i = 2, eta = 0.1 -> g = [1, 0]
        // w_i = [0.8, 0], w_hat - w_i = [-0.3, 0.5] -> <g, .> = -0.3
        let w_t = ParamVector::from_vec(vec![1.0, 0.0]);
        let u = upd(vec![-0.2, 0.0], 4, 5);
        let w_hat = ParamVector::from_vec(vec![0.5, 0.5]);
        let (corrected, _) = approximate_update(&u, &w_t, &w_hat, 0.1).unwrap();
        assert!((corrected.as_slice()[0] - (-0.5)).abs() < 1e-15);
        assert_eq!(corrected.as_slice()[1], 0.0);
    }

    #[test]
    fn correction_rejects_bad_inputs() {
        let w = ParamVector::zeros(1);
        assert!(matches!(
            approximate_update(&upd(vec![1.0], 1, 5), &w, &w, 0.1),
            Err(Error::CorrectionOnFullWorker)
        ));
        assert!(matches!(
            approximate_update(&upd(vec![1.0], 2, 5), &w, &w, 0.0),
            Err(Error::InvalidLearningRate(_))
        ));
    }

    #[test]
    fn single_slot_aggregate() {
        let w = ParamVector::from_vec(vec![1.0]);
        let slots = [SlotUpdate::raw(upd(vec![-0.5], 1, 5))];
        assert_eq!(
            aggregate(&Strategy::FedLga { eta_g: 1.0 }, &w, &slots).unwrap().as_slice(),
            &[0.5]
        );
        assert!(matches!(aggregate(&Strategy::FedAvg, &w, &[]), Err(Error::NoUpdates)));
    }

    #[test]
    fn fedlga_without_stragglers_is_fedavg() {
        let w = ParamVector::from_vec(vec![0.3, -0.7, 1.1]);
        let updates: Vec<LocalUpdate> = (0..7)
            .map(|i| upd(vec![0.013 * i as f64, -0.1 / (i + 1) as f64, 0.37], 1, 5))
            .collect();
        let (slots, diags) = correct_stragglers(&w, updates.clone(), 0.05).unwrap();
        assert!(diags.is_empty());
        let a = aggregate(&Strategy::FedLga { eta_g: 1.0 }, &w, &slots).unwrap();
        let raw: Vec<SlotUpdate> = updates.into_iter().map(SlotUpdate::raw).collect();
        let b = aggregate(&Strategy::FedAvg, &w, &raw).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fallback_is_flagged_when_everyone_straggles() {
        let w = ParamVector::from_vec(vec![0.0, 0.0]);
        let updates = vec![upd(vec![0.1, 0.0], 2, 5), upd(vec![0.0, 0.1], 3, 5)];
        let (_, diags) = correct_stragglers(&w, updates, 0.1).unwrap();
        assert_eq!(diags.len(), 2);
        assert!(diags.iter().all(|d| d.used_fallback));
    }

    #[test]
    fn fednova_equal_steps_matches_scaled_fedavg() {
        let w = ParamVector::from_vec(vec![0.3, -0.7]);
        let slots: Vec<SlotUpdate> = (0..4)
            .map(|i| SlotUpdate::raw(upd(vec![0.1 * i as f64, -0.05], 1, 5)))
            .collect();
        let nova = aggregate(&Strategy::FedNova { eta_g: 2.0 }, &w, &slots).unwrap();
        let avg = aggregate(&Strategy::FedAvg, &w, &slots).unwrap();
        let expect = w.add(&avg.sub(&w).unwrap().scale(2.0)).unwrap();
        for (a, b) in nova.as_slice().iter().zip(expect.as_slice()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn fednova_normalizes_unequal_steps() {
        // steps 5 and 1 -> tau_eff = 3; mean(delta_i / E_i) = ([1]/5 + [1]/1)/2 = 0.6
        let w = ParamVector::from_vec(vec![0.0]);
        let slots = [
            SlotUpdate::raw(upd(vec![1.0], 1, 5)),
            SlotUpdate::raw(upd(vec![1.0], 5, 5)),
        ];
        let nova = aggregate(&Strategy::FedNova { eta_g: 1.0 }, &w, &slots).unwrap();
        assert!((nova.as_slice()[0] - 1.8).abs() < 1e-15);
    }
}
