use std::fs::File;
use std::io::BufReader;

use thiserror::Error;

use crate::gain_model::{
    read_trace, GainError, GainStream, GainTraceRow, SlotGains, SyntheticGains, TraceGains,
};
use crate::metrics::{
    static_problem, true_arrival_means, Instance, MetricsError, MetricsTracker, Trajectory,
};
use crate::oracle::OracleError;
use crate::processes::{ProcessError, ProcessSampler, RunningAverages, StreamId, StreamRole};
use crate::scenario::{GainSource, PolicyKind, Scenario, ScenarioError, SlotObservation};

use super::{
    cloudlet_gate, Ato, ComputeTracker, DualState, NoOffload, OnAlgo, OnAlgoK, Policy, PolicyError,
    PricingModel, Rco, SlotDecision, SlotInput,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Gain(#[from] GainError),
    #[error(transparent)]
    Process(#[from] ProcessError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("cannot open gain trace {path}: {source}")]
    Trace {
        path: String,
        source: std::io::Error,
    },
}

/// Produces each slot's observation and objects for a scenario.
pub struct SlotSource {
    n: usize,
    m: usize,
    power: Vec<ProcessSampler>,
    compute: Vec<ProcessSampler>,
    budget: Vec<ProcessSampler>,
    capacity: Vec<ProcessSampler>,
    bandwidth: Option<ProcessSampler>,
    gains: Box<dyn GainStream + Send>,
}

impl SlotSource {
    /// `trace` must hold the rows of the scenario's CSV source, if it has one.
    pub fn new(scenario: &Scenario, trace: Option<Vec<GainTraceRow>>) -> Result<Self, RunError> {
        let seed = scenario.seed;
        let samplers = |specs: &[crate::processes::ProcessSpec], role| {
            specs
                .iter()
                .enumerate()
                .map(|(i, s)| s.sampler(seed, StreamId::new(role, i)))
                .collect::<Vec<_>>()
        };
        let capacity_specs: Vec<_> = scenario
            .cloudlets
            .iter()
            .map(|c| c.capacity.clone())
            .collect();
        let gains: Box<dyn GainStream + Send> = match &scenario.gain_source {
            GainSource::Synthetic { confidence, noise } => Box::new(SyntheticGains::new(
                scenario,
                confidence.clone(),
                noise.clone(),
            )),
            GainSource::Csv { .. } => {
                let rows = match trace {
                    Some(rows) => rows,
                    None => load_trace(scenario)?.unwrap_or_default(),
                };
                Box::new(TraceGains::new(
                    rows,
                    scenario.n_devices,
                    scenario.grid.clone(),
                ))
            }
        };
        Ok(Self {
            n: scenario.n_devices,
            m: scenario.grid_len(),
            power: samplers(&scenario.power_cost, StreamRole::PowerCost),
            compute: samplers(&scenario.compute_cost, StreamRole::ComputeCost),
            budget: samplers(&scenario.budget, StreamRole::Budget),
            capacity: samplers(&capacity_specs, StreamRole::Capacity),
            bandwidth: scenario.bandwidth.as_ref().map(|b| {
                b.capacity
                    .sampler(seed, StreamId::new(StreamRole::Bandwidth, 0))
            }),
            gains,
        })
    }

    pub fn next_slot(&mut self, t: u64) -> (SlotObservation, SlotGains) {
        let gains = self.gains.next_slot(t);
        debug_assert_eq!(gains.arrivals.len(), self.n);
        debug_assert!(gains.arrivals.iter().all(|r| r.len() == self.m));
        let sample = |v: &mut Vec<ProcessSampler>| v.iter_mut().map(|s| s.sample(t)).collect();
        let obs = SlotObservation {
            t,
            arrivals: gains.arrivals.clone(),
            power_cost: sample(&mut self.power),
            compute_cost: sample(&mut self.compute),
            budget: sample(&mut self.budget),
            capacity: sample(&mut self.capacity),
            bandwidth: self.bandwidth.as_mut().map(|s| s.sample(t)),
        };
        (obs, gains)
    }
}

/// Reads the scenario's gain trace when its gain source is a CSV file.
pub fn load_trace(scenario: &Scenario) -> Result<Option<Vec<GainTraceRow>>, RunError> {
    let GainSource::Csv { path } = &scenario.gain_source else {
        return Ok(None);
    };
    let file = File::open(path).map_err(|source| RunError::Trace {
        path: path.display().to_string(),
        source,
    })?;
    let rows = read_trace(BufReader::new(file), scenario.n_devices, &scenario.rho)?;
    Ok(Some(rows))
}

pub fn make_policy(scenario: &Scenario, kind: PolicyKind) -> Box<dyn Policy> {
    let n = scenario.n_devices;
    let k = scenario.cloudlets.len();
    let model = PricingModel::from_scenario(scenario);
    match kind {
        PolicyKind::Onalgo => Box::new(OnAlgo::new(model, n, scenario.alpha)),
        PolicyKind::OnalgoK => Box::new(OnAlgoK::new(model, n, scenario.alpha)),
        PolicyKind::Ato => Box::new(Ato::new(scenario.params.ato_threshold, k)),
        PolicyKind::Rco => Box::new(Rco::new(n, k)),
        PolicyKind::No => Box::new(NoOffload::new(k)),
    }
}

/// Builds the instance (static program, optimum, allowance) of a scenario.
pub fn build_instance(
    scenario: &Scenario,
    trace: Option<&[GainTraceRow]>,
) -> Result<Instance, RunError> {
    let lambda = true_arrival_means(scenario, trace);
    Ok(Instance::new(
        static_problem(scenario, lambda),
        scenario.alpha,
    )?)
}

/// Runs `kind` on the scenario for its full horizon.
pub fn run_policy(scenario: &Scenario, kind: PolicyKind) -> Result<Trajectory, RunError> {
    let trace = load_trace(scenario)?;
    let instance = build_instance(scenario, trace.as_deref())?;
    let source = SlotSource::new(scenario, trace)?;
    run_with_source(scenario, kind, source, instance, |_, _, _| {})
}

/// Runs with an explicit source and instance; `observe` sees every slot's
/// inputs, gated decision and the duals used to make it.
pub fn run_with_source<F>(
    scenario: &Scenario,
    kind: PolicyKind,
    mut source: SlotSource,
    instance: Instance,
    mut observe: F,
) -> Result<Trajectory, RunError>
where
    F: FnMut(&SlotInput<'_>, &SlotDecision, Option<&DualState>),
{
    let n = scenario.n_devices;
    let m = scenario.grid_len();
    let k = scenario.cloudlets.len();
    let mut policy = make_policy(scenario, kind);
    let mut avg = RunningAverages::new(n, m, k, scenario.bandwidth.is_some());
    let mut compute = ComputeTracker::new(k);
    let f_star = instance.f_star;
    let bound = instance.bound;
    let sigma_g = instance.sigma_g;
    let mut metrics = MetricsTracker::new(instance, scenario.grid.centers().to_vec());
    let mut records = Vec::with_capacity(scenario.horizon);
    let mut clamped = 0u64;

    for t in 1..=scenario.horizon as u64 {
        let (obs, gains) = source.next_slot(t);
        clamped += gains.clamped as u64;
        avg.observe(&obs)?;
        let input = SlotInput {
            avg: &avg,
            obs: &obs,
            gains: &gains,
        };
        let mut decision = policy.decide(&input)?;
        cloudlet_gate(&mut decision, &mut compute, t, &avg.capacity);
        let duals_before = policy.duals().cloned();
        observe(&input, &decision, duals_before.as_ref());
        policy.settle(&input, &decision);
        records.push(metrics.record(t, &gains, &decision, policy.duals())?);
    }

    Ok(Trajectory {
        policy: kind,
        instance_digest: scenario.instance_digest(),
        f_star,
        bound,
        sigma_g,
        alpha: scenario.alpha,
        records,
        y_bar: metrics.y_bar().y_bar.clone(),
        energy_per_device: metrics.energy_per_device().to_vec(),
        objects: metrics.objects(),
        offloaded: metrics.offloaded(),
        clamped,
        out_of_assumption: scenario.correlated,
    })
}
