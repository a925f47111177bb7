//! Offloading policies and the slotted simulation loop.

mod benchmarks;
mod gate;
mod onalgo;
mod run;

pub use benchmarks::{ato_decide, rco_decide, Ato, EnergyTracker, NoOffload, Rco};
pub use gate::{cloudlet_gate, ComputeTracker};
pub use onalgo::{
    onalgo_decide, onalgo_dual_update, onalgo_k_decide, slot_lagrangian, OnAlgo, OnAlgoK,
};
pub use run::{
    build_instance, load_trace, make_policy, run_policy, run_with_source, RunError, SlotSource,
};

use thiserror::Error;

use crate::gain_model::SlotGains;
use crate::processes::RunningAverages;
use crate::scenario::{PolicyKind, Scenario, SlotObservation};

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("object {index} of slot {t} has no local confidence; ato needs it")]
    MissingConfidence { t: u64, index: usize },
}

/// Nonnegative multipliers: one per device, one per cloudlet, optional bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub mu: Vec<f64>,
    pub xi: Vec<f64>,
    pub zeta: Option<f64>,
}

impl DualState {
    pub fn zeros(n: usize, k: usize, bandwidth: bool) -> Self {
        Self {
            mu: vec![0.0; n],
            xi: vec![0.0; k],
            zeta: bandwidth.then_some(0.0),
        }
    }

    pub fn norm(&self) -> f64 {
        self.mu
            .iter()
            .chain(&self.xi)
            .chain(&self.zeta)
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.mu
            .iter()
            .chain(&self.xi)
            .chain(&self.zeta)
            .all(|v| *v >= 0.0)
    }
}

/// Per-interval gains and per-cloudlet scaling the dual policies price against.
#[derive(Debug, Clone, PartialEq)]
pub struct PricingModel {
    /// Gain of each interval (the grid centers).
    pub gains: Vec<f64>,
    pub gain_scale: Vec<f64>,
    pub cost_scale: Vec<f64>,
    /// Object size per device when the bandwidth row is enabled.
    pub ell: Option<Vec<f64>>,
}

impl PricingModel {
    pub fn from_scenario(scenario: &Scenario) -> Self {
        Self {
            gains: scenario.grid.centers().to_vec(),
            gain_scale: scenario.cloudlets.iter().map(|c| c.gain_scale).collect(),
            cost_scale: scenario.cloudlets.iter().map(|c| c.cost_scale).collect(),
            ell: scenario.bandwidth.as_ref().map(|b| b.ell.clone()),
        }
    }

    /// Model with one unscaled cloudlet and no bandwidth row.
    pub fn single(gains: Vec<f64>) -> Self {
        Self {
            gains,
            gain_scale: vec![1.0],
            cost_scale: vec![1.0],
            ell: None,
        }
    }

    pub fn k(&self) -> usize {
        self.gain_scale.len()
    }

    /// Resource price of device `n` at cloudlet `k`, before the gain.
    pub(crate) fn price(&self, avg: &RunningAverages, dual: &DualState, n: usize, k: usize) -> f64 {
        let mut p =
            dual.mu[n] * avg.power_cost[n] + dual.xi[k] * self.cost_scale[k] * avg.compute_cost[n];
        if let (Some(ell), Some(z)) = (&self.ell, dual.zeta) {
            p += z * ell[n];
        }
        p
    }
}

/// Inputs of one slot after the running averages have absorbed it.
#[derive(Debug, Clone, Copy)]
pub struct SlotInput<'a> {
    pub avg: &'a RunningAverages,
    pub obs: &'a SlotObservation,
    pub gains: &'a SlotGains,
}

/// What a policy did in one slot, before and after the cloudlet gate.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotDecision {
    /// Cloudlet chosen for each object of the slot, `None` for local.
    pub routes: Vec<Option<usize>>,
    /// `y[k][n][j]`: share of this slot's `(n, j)` objects sent to cloudlet `k`.
    pub y: Vec<Vec<Vec<f64>>>,
    pub offloaded: Vec<u32>,
    /// Transmission energy per device, charged whether or not the task is served.
    pub energy: Vec<f64>,
    /// Compute load per cloudlet.
    pub load: Vec<f64>,
    pub sent: Vec<u32>,
    pub denied: Vec<bool>,
}

impl SlotDecision {
    pub fn local(obs: &SlotObservation, gains: &SlotGains, k: usize) -> Self {
        Self::from_routes(obs, gains, vec![None; gains.objects.len()], &vec![1.0; k])
    }

    /// Builds the accounting for explicit per-object routes.
    pub fn from_routes(
        obs: &SlotObservation,
        gains: &SlotGains,
        routes: Vec<Option<usize>>,
        cost_scale: &[f64],
    ) -> Self {
        let n = obs.arrivals.len();
        let m = obs.arrivals.first().map_or(0, Vec::len);
        let k = cost_scale.len();
        let mut counts = vec![vec![vec![0u32; m]; n]; k];
        let mut offloaded = vec![0u32; n];
        let mut sent = vec![0u32; k];
        let mut load = vec![0.0; k];
        for (obj, route) in gains.objects.iter().zip(&routes) {
            if let Some(c) = *route {
                counts[c][obj.device][obj.interval] += 1;
                offloaded[obj.device] += 1;
                sent[c] += 1;
                load[c] += cost_scale[c] * obs.compute_cost[obj.device];
            }
        }
        let y = counts
            .iter()
            .map(|ck| {
                ck.iter()
                    .zip(&obs.arrivals)
                    .map(|(row, lam)| {
                        row.iter()
                            .zip(lam)
                            .map(|(&c, &l)| if l == 0 { 0.0 } else { c as f64 / l as f64 })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let energy = offloaded
            .iter()
            .zip(&obs.power_cost)
            .map(|(&c, o)| c as f64 * o)
            .collect();
        Self {
            routes,
            y,
            offloaded,
            energy,
            load,
            sent,
            denied: vec![false; k],
        }
    }

    /// Every object of an interval follows the interval's choice.
    pub fn from_intervals(
        obs: &SlotObservation,
        gains: &SlotGains,
        choice: &[Vec<Option<usize>>],
        cost_scale: &[f64],
    ) -> Self {
        let routes = gains
            .objects
            .iter()
            .map(|o| choice[o.device][o.interval])
            .collect();
        Self::from_routes(obs, gains, routes, cost_scale)
    }

    pub fn is_served(&self, index: usize) -> bool {
        self.routes[index].is_some_and(|c| !self.denied[c])
    }

    pub fn denied_objects(&self) -> u32 {
        self.sent
            .iter()
            .zip(&self.denied)
            .filter(|(_, d)| **d)
            .map(|(s, _)| s)
            .sum()
    }

    pub fn total_offloaded(&self) -> u32 {
        self.offloaded.iter().sum()
    }
}

/// A per-slot offloading rule.
pub trait Policy: Send {
    fn kind(&self) -> PolicyKind;

    fn decide(&mut self, slot: &SlotInput<'_>) -> Result<SlotDecision, PolicyError>;

    /// Absorbs the gated outcome of the slot (dual step, energy tracking).
    fn settle(&mut self, _slot: &SlotInput<'_>, _decision: &SlotDecision) {}

    fn duals(&self) -> Option<&DualState> {
        None
    }
}
