use crate::gain_model::SlotGains;
use crate::processes::RunningAverages;
use crate::scenario::{PolicyKind, SlotObservation};

use super::{Policy, PolicyError, SlotDecision, SlotInput};

/// Offloads every object whose local confidence is below `threshold`.
pub fn ato_decide(
    t: u64,
    gains: &SlotGains,
    threshold: f64,
) -> Result<Vec<Option<usize>>, PolicyError> {
    gains
        .objects
        .iter()
        .enumerate()
        .map(|(index, o)| match o.local_confidence {
            Some(d) => Ok((d < threshold).then_some(0)),
            None => Err(PolicyError::MissingConfidence { t, index }),
        })
        .collect()
}

/// Cumulative transmission energy per device.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyTracker {
    pub spent: Vec<f64>,
}

impl EnergyTracker {
    pub fn new(n: usize) -> Self {
        Self {
            spent: vec![0.0; n],
        }
    }

    pub fn charge(&mut self, energy: &[f64]) {
        for (s, e) in self.spent.iter_mut().zip(energy) {
            *s += e;
        }
    }
}

/// Offloads objects in arrival order while the device's average consumption,
/// including this slot, stays within its running-average budget.
pub fn rco_decide(
    obs: &SlotObservation,
    gains: &SlotGains,
    tracker: &EnergyTracker,
    avg: &RunningAverages,
) -> Vec<Option<usize>> {
    let t = obs.t as f64;
    let mut slot_spend = vec![0.0; tracker.spent.len()];
    let mut stopped = vec![false; tracker.spent.len()];
    gains
        .objects
        .iter()
        .map(|o| {
            let n = o.device;
            if stopped[n] {
                return None;
            }
            let cost = obs.power_cost[n];
            if (tracker.spent[n] + slot_spend[n] + cost) / t <= avg.budget[n] {
                slot_spend[n] += cost;
                Some(0)
            } else {
                stopped[n] = true;
                None
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Ato {
    threshold: f64,
    k: usize,
}

impl Ato {
    pub fn new(threshold: f64, k: usize) -> Self {
        Self { threshold, k }
    }
}

impl Policy for Ato {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Ato
    }

    fn decide(&mut self, slot: &SlotInput<'_>) -> Result<SlotDecision, PolicyError> {
        let routes = ato_decide(slot.obs.t, slot.gains, self.threshold)?;
        Ok(SlotDecision::from_routes(
            slot.obs,
            slot.gains,
            routes,
            &vec![1.0; self.k],
        ))
    }
}

#[derive(Debug, Clone)]
pub struct Rco {
    tracker: EnergyTracker,
    k: usize,
}

impl Rco {
    pub fn new(n: usize, k: usize) -> Self {
        Self {
            tracker: EnergyTracker::new(n),
            k,
        }
    }
}

impl Policy for Rco {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Rco
    }

    fn decide(&mut self, slot: &SlotInput<'_>) -> Result<SlotDecision, PolicyError> {
        let routes = rco_decide(slot.obs, slot.gains, &self.tracker, slot.avg);
        Ok(SlotDecision::from_routes(
            slot.obs,
            slot.gains,
            routes,
            &vec![1.0; self.k],
        ))
    }

    fn settle(&mut self, _slot: &SlotInput<'_>, decision: &SlotDecision) {
        self.tracker.charge(&decision.energy);
    }
}

#[derive(Debug, Clone)]
pub struct NoOffload {
    k: usize,
}

impl NoOffload {
    pub fn new(k: usize) -> Self {
        Self { k }
    }
}

impl Policy for NoOffload {
    fn kind(&self) -> PolicyKind {
        PolicyKind::No
    }

    fn decide(&mut self, slot: &SlotInput<'_>) -> Result<SlotDecision, PolicyError> {
        Ok(SlotDecision::local(slot.obs, slot.gains, self.k))
    }
}
