use crate::processes::RunningAverages;
use crate::scenario::{PolicyKind, SlotObservation};

use super::{DualState, Policy, PolicyError, PricingModel, SlotDecision, SlotInput};

/// Threshold rule for the first cloudlet: offload interval `j` of device `n`
/// iff it received objects and its priced cost is strictly below its gain.
pub fn onalgo_decide(
    avg: &RunningAverages,
    dual: &DualState,
    obs: &SlotObservation,
    model: &PricingModel,
) -> Vec<Vec<bool>> {
    obs.arrivals
        .iter()
        .enumerate()
        .map(|(n, lam)| {
            let price = model.price(avg, dual, n, 0);
            lam.iter()
                .zip(&model.gains)
                .map(|(&l, &w)| l > 0 && price < model.gain_scale[0] * w)
                .collect()
        })
        .collect()
}

/// Bang-bang rule over `K` cloudlets: each interval goes to the cloudlet with
/// the lowest negative score, ties to the lower index. Cloudlets whose
/// running-average capacity is zero are not candidates.
pub fn onalgo_k_decide(
    avg: &RunningAverages,
    dual: &DualState,
    obs: &SlotObservation,
    model: &PricingModel,
) -> Vec<Vec<Option<usize>>> {
    obs.arrivals
        .iter()
        .enumerate()
        .map(|(n, lam)| {
            let prices: Vec<f64> = (0..model.k())
                .map(|k| model.price(avg, dual, n, k))
                .collect();
            lam.iter()
                .zip(&model.gains)
                .map(|(&l, &w)| {
                    if l == 0 {
                        return None;
                    }
                    let mut best: Option<(usize, f64)> = None;
                    for (k, price) in prices.iter().enumerate() {
                        if avg.capacity[k] <= 0.0 {
                            continue;
                        }
                        let score = price - model.gain_scale[k] * w;
                        if best.is_none_or(|(_, s)| score < s) {
                            best = Some((k, score));
                        }
                    }
                    best.filter(|(_, s)| *s < 0.0).map(|(k, _)| k)
                })
                .collect()
        })
        .collect()
}

/// Projected dual step driven by the running averages.
///
/// `y[k][n][j]` is the share of interval `(n, j)` sent to cloudlet `k`.
pub fn onalgo_dual_update(
    dual: &DualState,
    avg: &RunningAverages,
    y: &[Vec<Vec<f64>>],
    alpha: f64,
    model: &PricingModel,
) -> DualState {
    let n = dual.mu.len();
    // expected offloaded volume per device and cloudlet
    let volume: Vec<Vec<f64>> = y
        .iter()
        .map(|yk| {
            (0..n)
                .map(|d| yk[d].iter().zip(&avg.arrivals[d]).map(|(y, l)| y * l).sum())
                .collect()
        })
        .collect();
    let total: Vec<f64> = (0..n).map(|d| volume.iter().map(|v| v[d]).sum()).collect();
    let mu = (0..n)
        .map(|d| (dual.mu[d] + alpha * (avg.power_cost[d] * total[d] - avg.budget[d])).max(0.0))
        .collect();
    let xi = dual
        .xi
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let load: f64 = (0..n).map(|d| avg.compute_cost[d] * volume[k][d]).sum();
            (x + alpha * (model.cost_scale[k] * load - avg.capacity[k])).max(0.0)
        })
        .collect();
    let zeta = match (dual.zeta, &model.ell, avg.bandwidth) {
        (Some(z), Some(ell), Some(w_bar)) => {
            let used: f64 = (0..n).map(|d| ell[d] * total[d]).sum();
            Some((z + alpha * (used - w_bar)).max(0.0))
        }
        (z, _, _) => z,
    };
    DualState { mu, xi, zeta }
}

/// Slot Lagrangian (up to terms that do not depend on `y`), weighted by this
/// slot's arrival counts.
pub fn slot_lagrangian(
    avg: &RunningAverages,
    dual: &DualState,
    obs: &SlotObservation,
    model: &PricingModel,
    y: &[Vec<bool>],
) -> f64 {
    let mut value = 0.0;
    for (n, lam) in obs.arrivals.iter().enumerate() {
        let price = model.price(avg, dual, n, 0);
        for (j, &l) in lam.iter().enumerate() {
            if y[n][j] {
                value += l as f64 * (price - model.gain_scale[0] * model.gains[j]);
            }
        }
    }
    value
}

/// Single-cloudlet OnAlgo.
#[derive(Debug, Clone)]
pub struct OnAlgo {
    model: PricingModel,
    alpha: f64,
    dual: DualState,
}

impl OnAlgo {
    pub fn new(model: PricingModel, n: usize, alpha: f64) -> Self {
        let dual = DualState::zeros(n, model.k(), model.ell.is_some());
        Self { model, alpha, dual }
    }
}

impl Policy for OnAlgo {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Onalgo
    }

    fn decide(&mut self, slot: &SlotInput<'_>) -> Result<SlotDecision, PolicyError> {
        let y = onalgo_decide(slot.avg, &self.dual, slot.obs, &self.model);
        let choice: Vec<Vec<Option<usize>>> = y
            .iter()
            .map(|row| row.iter().map(|&b| b.then_some(0)).collect())
            .collect();
        Ok(SlotDecision::from_intervals(
            slot.obs,
            slot.gains,
            &choice,
            &self.model.cost_scale,
        ))
    }

    fn settle(&mut self, slot: &SlotInput<'_>, decision: &SlotDecision) {
        self.dual = onalgo_dual_update(&self.dual, slot.avg, &decision.y, self.alpha, &self.model);
    }

    fn duals(&self) -> Option<&DualState> {
        Some(&self.dual)
    }
}

/// OnAlgo over every cloudlet of the scenario.
#[derive(Debug, Clone)]
pub struct OnAlgoK {
    model: PricingModel,
    alpha: f64,
    dual: DualState,
}

impl OnAlgoK {
    pub fn new(model: PricingModel, n: usize, alpha: f64) -> Self {
        let dual = DualState::zeros(n, model.k(), model.ell.is_some());
        Self { model, alpha, dual }
    }
}

impl Policy for OnAlgoK {
    fn kind(&self) -> PolicyKind {
        PolicyKind::OnalgoK
    }

    fn decide(&mut self, slot: &SlotInput<'_>) -> Result<SlotDecision, PolicyError> {
        let choice = onalgo_k_decide(slot.avg, &self.dual, slot.obs, &self.model);
        Ok(SlotDecision::from_intervals(
            slot.obs,
            slot.gains,
            &choice,
            &self.model.cost_scale,
        ))
    }

    fn settle(&mut self, slot: &SlotInput<'_>, decision: &SlotDecision) {
        self.dual = onalgo_dual_update(&self.dual, slot.avg, &decision.y, self.alpha, &self.model);
    }

    fn duals(&self) -> Option<&DualState> {
        Some(&self.dual)
    }
}
