//! Primal averages, per-slot records and policy comparisons.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::gain_model::{interval_probabilities, GainTraceRow, SlotGains, TraceGains};
use crate::oracle::{
    brute_force_multi, solve_p1, BandwidthRow, CloudletTerms, MultiCloudletProblem, OracleError,
    StaticProblem,
};
use crate::policies::{DualState, SlotDecision};
use crate::scenario::{GainSource, PolicyKind, Scenario};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("decision shape does not match the primal average")]
    Shape,
    #[error("trajectories come from different scenarios ({0} vs {1})")]
    ScenarioMismatch(String, String),
    #[error("no trajectories to compare")]
    Empty,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Running mean `(1/t) sum_i y_i` of the decision shares, indexed `[k][n][j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalAverage {
    pub t: u64,
    pub y_bar: Vec<Vec<Vec<f64>>>,
}

impl PrimalAverage {
    pub fn new(k: usize, n: usize, m: usize) -> Self {
        Self {
            t: 0,
            y_bar: vec![vec![vec![0.0; m]; n]; k],
        }
    }

    pub fn update(&mut self, y: &[Vec<Vec<f64>>]) -> Result<(), MetricsError> {
        let same = y.len() == self.y_bar.len()
            && y.iter().zip(&self.y_bar).all(|(a, b)| {
                a.len() == b.len() && a.iter().zip(b).all(|(r, s)| r.len() == s.len())
            });
        if !same {
            return Err(MetricsError::Shape);
        }
        let count = (self.t + 1) as f64;
        for (bar_k, y_k) in self.y_bar.iter_mut().zip(y) {
            for (bar_n, y_n) in bar_k.iter_mut().zip(y_k) {
                for (b, v) in bar_n.iter_mut().zip(y_n) {
                    *b += (v - *b) / count;
                }
            }
        }
        self.t += 1;
        Ok(())
    }
}

/// Functional form of [`PrimalAverage::update`].
pub fn update_primal_average(
    avg: &PrimalAverage,
    y: &[Vec<Vec<f64>>],
) -> Result<PrimalAverage, MetricsError> {
    let mut next = avg.clone();
    next.update(y)?;
    Ok(next)
}

pub fn optimality_gap(f_of_ybar: f64, f_star: f64) -> f64 {
    f_of_ybar - f_star
}

/// Euclidean norm of the positive parts of `g`.
pub fn positive_norm(g: &[f64]) -> f64 {
    g.iter().map(|v| v.max(0.0).powi(2)).sum::<f64>().sqrt()
}

pub fn feasibility_norm(problem: &StaticProblem, y_bar: &[Vec<f64>]) -> f64 {
    positive_norm(&problem.constraints(y_bar))
}

/// Mean objects per slot in each (device, interval).
pub fn true_arrival_means(scenario: &Scenario, trace: Option<&[GainTraceRow]>) -> Vec<Vec<f64>> {
    match (&scenario.gain_source, trace) {
        (GainSource::Synthetic { confidence, noise }, _) => (0..scenario.n_devices)
            .map(|n| {
                let rate = scenario.arrivals[n].mean();
                interval_probabilities(&confidence[n], noise[n], scenario.rho[n], &scenario.grid)
                    .into_iter()
                    .map(|p| rate * p)
                    .collect()
            })
            .collect(),
        (GainSource::Csv { .. }, Some(rows)) => {
            TraceGains::new(rows.to_vec(), scenario.n_devices, scenario.grid.clone())
                .mean_arrivals(scenario.horizon)
        }
        (GainSource::Csv { .. }, None) => {
            vec![vec![0.0; scenario.grid_len()]; scenario.n_devices]
        }
    }
}

/// The static program of a scenario, with true means in place of every process.
pub fn static_problem(scenario: &Scenario, lambda: Vec<Vec<f64>>) -> MultiCloudletProblem {
    let n = scenario.n_devices;
    let base = StaticProblem {
        w: vec![scenario.grid.centers().to_vec(); n],
        lambda,
        o: scenario.power_cost.iter().map(|p| p.mean()).collect(),
        h: scenario.compute_cost.iter().map(|p| p.mean()).collect(),
        b: scenario.budget.iter().map(|p| p.mean()).collect(),
        capacity: scenario.cloudlets[0].capacity.mean(),
        bandwidth: scenario.bandwidth.as_ref().map(|bw| BandwidthRow {
            ell: bw.ell.clone(),
            capacity: bw.capacity.mean(),
        }),
    };
    MultiCloudletProblem {
        base,
        cloudlets: scenario
            .cloudlets
            .iter()
            .map(|c| CloudletTerms {
                gain_scale: c.gain_scale,
                cost_scale: c.cost_scale,
                capacity: c.capacity.mean(),
            })
            .collect(),
    }
}

/// A scenario's static program together with its optimum and gap allowance.
#[derive(Debug, Clone)]
pub struct Instance {
    pub problem: MultiCloudletProblem,
    /// `NaN` when no exact solver covers the instance.
    pub f_star: f64,
    pub sigma_g: f64,
    pub bound: f64,
}

impl Instance {
    pub fn new(problem: MultiCloudletProblem, alpha: f64) -> Result<Self, OracleError> {
        let f_star = match problem.as_single() {
            Some(p) => solve_p1(&p)?.f_star,
            None if problem.base.n() * problem.base.m() * problem.k() <= 6 => {
                brute_force_multi(&problem, 0.05)?
            }
            None => f64::NAN,
        };
        let sigma_g = problem.sigma_g();
        Ok(Self {
            problem,
            f_star,
            sigma_g,
            bound: alpha * sigma_g * sigma_g / 2.0,
        })
    }
}

/// Everything reported for one slot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotRecord {
    pub t: u64,
    pub f_ybar: f64,
    pub gap: f64,
    pub feas_norm: f64,
    pub xi: Vec<f64>,
    pub mu: Vec<f64>,
    pub zeta: Option<f64>,
    pub offload_ratio: f64,
    /// Model gain of the objects the cloudlets served this slot.
    pub realized_gain: f64,
    pub energy_total: f64,
    pub denials: u64,
    pub eff_accuracy: f64,
}

/// Accumulates the per-slot records of one run.
#[derive(Debug, Clone)]
pub struct MetricsTracker {
    instance: Instance,
    gains: Vec<f64>,
    y_bar: PrimalAverage,
    objects: u64,
    offloaded: u64,
    denials: u64,
    energy: Vec<f64>,
    accuracy_sum: f64,
}

impl MetricsTracker {
    pub fn new(instance: Instance, gains: Vec<f64>) -> Self {
        let p = &instance.problem;
        let y_bar = PrimalAverage::new(p.k(), p.base.n(), p.base.m());
        let energy = vec![0.0; p.base.n()];
        Self {
            instance,
            gains,
            y_bar,
            objects: 0,
            offloaded: 0,
            denials: 0,
            energy,
            accuracy_sum: 0.0,
        }
    }

    pub fn record(
        &mut self,
        t: u64,
        slot: &SlotGains,
        decision: &SlotDecision,
        duals: Option<&DualState>,
    ) -> Result<SlotRecord, MetricsError> {
        let p = &self.instance.problem;
        self.y_bar.update(&decision.y)?;
        let f_ybar = p.objective(&self.y_bar.y_bar);
        let feas_norm = positive_norm(&p.constraints(&self.y_bar.y_bar));

        let mut realized = 0.0;
        for (i, obj) in slot.objects.iter().enumerate() {
            let served = decision.is_served(i);
            if served {
                let k = decision.routes[i].unwrap_or(0);
                realized += p.cloudlets[k].gain_scale * self.gains[obj.interval];
            }
            let d = obj.local_confidence.unwrap_or(0.0);
            self.accuracy_sum += d + if served { obj.true_gain } else { 0.0 };
        }
        self.objects += slot.objects.len() as u64;
        self.offloaded += u64::from(decision.total_offloaded());
        self.denials += u64::from(decision.denied_objects());
        for (e, s) in self.energy.iter_mut().zip(&decision.energy) {
            *e += s;
        }
        let ratio = |num: f64| {
            if self.objects == 0 {
                0.0
            } else {
                num / self.objects as f64
            }
        };
        let (mu, xi, zeta) = match duals {
            Some(d) => (d.mu.clone(), d.xi.clone(), d.zeta),
            None => (
                vec![0.0; p.base.n()],
                vec![0.0; p.k()],
                p.base.bandwidth.as_ref().map(|_| 0.0),
            ),
        };
        Ok(SlotRecord {
            t,
            f_ybar,
            gap: optimality_gap(f_ybar, self.instance.f_star),
            feas_norm,
            xi,
            mu,
            zeta,
            offload_ratio: ratio(self.offloaded as f64),
            realized_gain: realized,
            energy_total: self.energy.iter().sum(),
            denials: self.denials,
            eff_accuracy: ratio(self.accuracy_sum),
        })
    }

    pub fn y_bar(&self) -> &PrimalAverage {
        &self.y_bar
    }

    pub fn energy_per_device(&self) -> &[f64] {
        &self.energy
    }

    pub fn offloaded(&self) -> u64 {
        self.offloaded
    }

    pub fn objects(&self) -> u64 {
        self.objects
    }

    pub fn instance(&self) -> &Instance {
        &self.instance
    }
}

/// Output of one run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub policy: PolicyKind,
    /// Digest of the instance (scenario without the policy choice).
    pub instance_digest: String,
    pub f_star: f64,
    pub bound: f64,
    pub sigma_g: f64,
    pub alpha: f64,
    pub records: Vec<SlotRecord>,
    pub y_bar: Vec<Vec<Vec<f64>>>,
    pub energy_per_device: Vec<f64>,
    pub objects: u64,
    pub offloaded: u64,
    /// Objects whose weighted gain was clamped onto the grid.
    pub clamped: u64,
    /// The scenario declares processes that violate the independence assumption.
    pub out_of_assumption: bool,
}

impl Trajectory {
    pub fn last(&self) -> Option<&SlotRecord> {
        self.records.last()
    }

    pub fn at(&self, t: u64) -> Option<&SlotRecord> {
        t.checked_sub(1)
            .and_then(|i| self.records.get(i as usize))
            .filter(|r| r.t == t)
    }

    /// Mean realized gain per slot.
    pub fn mean_realized_gain(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.realized_gain).sum::<f64>() / self.records.len() as f64
    }

    pub fn csv_header(&self) -> Vec<String> {
        let n = self.energy_per_device.len();
        let k = self.y_bar.len();
        let mut h: Vec<String> = ["t", "f_ybar", "f_star", "gap", "bound", "feas_norm", "xi"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        h.extend((0..n).map(|i| format!("mu_{i}")));
        h.extend(
            [
                "offload_ratio",
                "realized_gain",
                "energy_total",
                "denials",
                "eff_accuracy",
            ]
            .iter()
            .map(|s| s.to_string()),
        );
        h.extend((1..k).map(|i| format!("xi_{i}")));
        if self.records.first().is_some_and(|r| r.zeta.is_some()) {
            h.push("zeta".into());
        }
        h
    }

    /// Rows at every `emit_every`-th slot plus the final slot.
    pub fn emitted(&self, emit_every: usize) -> impl Iterator<Item = &SlotRecord> {
        let every = emit_every.max(1) as u64;
        let last = self.records.last().map(|r| r.t);
        self.records
            .iter()
            .filter(move |r| r.t % every == 0 || Some(r.t) == last)
    }

    pub fn write_csv<W: Write>(&self, writer: W, emit_every: usize) -> Result<(), MetricsError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.csv_header())?;
        for r in self.emitted(emit_every) {
            let mut row = vec![
                r.t.to_string(),
                r.f_ybar.to_string(),
                self.f_star.to_string(),
                r.gap.to_string(),
                self.bound.to_string(),
                r.feas_norm.to_string(),
                r.xi[0].to_string(),
            ];
            row.extend(r.mu.iter().map(f64::to_string));
            row.extend([
                r.offload_ratio.to_string(),
                r.realized_gain.to_string(),
                r.energy_total.to_string(),
                r.denials.to_string(),
                r.eff_accuracy.to_string(),
            ]);
            row.extend(r.xi.iter().skip(1).map(f64::to_string));
            row.extend(r.zeta.map(|z| z.to_string()));
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Terminal summary of one policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub policy: String,
    pub eff_accuracy: f64,
    pub energy_total: f64,
    pub offload_ratio: f64,
    /// Denied objects over offloaded objects.
    pub denial_ratio: f64,
}

pub fn compare_policies(trajectories: &[Trajectory]) -> Result<Vec<ComparisonRow>, MetricsError> {
    let first = trajectories.first().ok_or(MetricsError::Empty)?;
    for t in trajectories {
        if t.instance_digest != first.instance_digest {
            return Err(MetricsError::ScenarioMismatch(
                first.instance_digest.clone(),
                t.instance_digest.clone(),
            ));
        }
    }
    Ok(trajectories
        .iter()
        .map(|t| {
            let last = t.last();
            let denials = last.map_or(0, |r| r.denials);
            ComparisonRow {
                policy: t.policy.name().to_string(),
                eff_accuracy: last.map_or(0.0, |r| r.eff_accuracy),
                energy_total: last.map_or(0.0, |r| r.energy_total),
                offload_ratio: last.map_or(0.0, |r| r.offload_ratio),
                denial_ratio: if t.offloaded == 0 {
                    0.0
                } else {
                    denials as f64 / t.offloaded as f64
                },
            }
        })
        .collect())
}

pub fn write_comparison_csv<W: Write>(
    writer: W,
    rows: &[ComparisonRow],
) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn wrap(y: Vec<Vec<f64>>) -> Vec<Vec<Vec<f64>>> {
        vec![y]
    }

    #[test]
    fn constant_ones_average_to_one() {
        let mut a = PrimalAverage::new(1, 2, 2);
        for _ in 0..7 {
            a.update(&wrap(vec![vec![1.0; 2]; 2])).unwrap();
        }
        assert!(a.y_bar[0].iter().flatten().all(|&v| v == 1.0));
    }

    #[test]
    fn alternating_averages_to_half() {
        let mut a = PrimalAverage::new(1, 1, 1);
        for i in 0..100 {
            a.update(&wrap(vec![vec![f64::from(i % 2)]])).unwrap();
        }
        assert!((a.y_bar[0][0][0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = PrimalAverage::new(1, 2, 2);
        assert!(matches!(
            update_primal_average(&a, &wrap(vec![vec![1.0; 3]; 2])),
            Err(MetricsError::Shape)
        ));
    }

    #[test]
    fn incremental_matches_batch() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut a = PrimalAverage::new(1, 2, 3);
        let mut sum = vec![vec![0.0; 3]; 2];
        for _ in 0..1000 {
            let y: Vec<Vec<f64>> = (0..2)
                .map(|_| {
                    (0..3)
                        .map(|_| f64::from(u8::from(rng.random::<bool>())))
                        .collect()
                })
                .collect();
            for (s, r) in sum.iter_mut().zip(&y) {
                for (a, b) in s.iter_mut().zip(r) {
                    *a += b;
                }
            }
            a.update(&wrap(y)).unwrap();
        }
        for (row, srow) in a.y_bar[0].iter().zip(&sum) {
            for (v, s) in row.iter().zip(srow) {
                assert!((v - s / 1000.0).abs() < 1e-9);
            }
        }
    }

    fn problem() -> StaticProblem {
        StaticProblem {
            w: vec![vec![0.5, -0.1]],
            lambda: vec![vec![1.0, 1.0]],
            o: vec![1.0],
            h: vec![1.0],
            b: vec![0.4],
            capacity: 10.0,
            bandwidth: None,
        }
    }

    #[test]
    fn gap_examples() {
        let p = problem();
        let sol = solve_p1(&p).unwrap();
        assert_eq!(optimality_gap(p.objective(&sol.y_star), sol.f_star), 0.0);
        let zero = vec![vec![0.0, 0.0]];
        assert_eq!(optimality_gap(p.objective(&zero), sol.f_star), -sol.f_star);
    }

    #[test]
    fn feasibility_examples() {
        let p = problem();
        assert_eq!(feasibility_norm(&p, &[vec![0.0, 0.0]]), 0.0);
        // device row at 0.7 - 0.4 = 0.3, cloudlet slack
        assert!((feasibility_norm(&p, &[vec![0.7, 0.0]]) - 0.3).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn primal_average_stays_in_unit_box(ys in prop::collection::vec(prop::collection::vec(0.0f64..=1.0, 4), 1..50)) {
            let mut a = PrimalAverage::new(1, 2, 2);
            for y in ys {
                a.update(&wrap(vec![y[..2].to_vec(), y[2..].to_vec()])).unwrap();
                prop_assert!(a.y_bar[0].iter().flatten().all(|v| (0.0..=1.0).contains(v)));
            }
        }

        #[test]
        fn objective_of_average_is_average_objective(ys in prop::collection::vec(prop::collection::vec(0u8..=1, 2), 1..60)) {
            let p = problem();
            let mut a = PrimalAverage::new(1, 1, 2);
            let mut acc = 0.0;
            for y in &ys {
                let row = vec![y.iter().map(|&v| f64::from(v)).collect::<Vec<_>>()];
                acc += p.objective(&row);
                a.update(&wrap(row)).unwrap();
            }
            prop_assert!((p.objective(&a.y_bar[0]) - acc / ys.len() as f64).abs() < 1e-9);
        }

        #[test]
        fn more_resources_never_increase_violation(
            y in prop::collection::vec(0.0f64..=1.0, 2),
            extra_b in 0.0f64..2.0,
            extra_h in 0.0f64..2.0,
        ) {
            let mut p = problem();
            p.capacity = 0.5;
            let before = feasibility_norm(&p, &[y.clone()]);
            p.b[0] += extra_b;
            p.capacity += extra_h;
            prop_assert!(feasibility_norm(&p, &[y]) <= before + 1e-15);
        }
    }
}
