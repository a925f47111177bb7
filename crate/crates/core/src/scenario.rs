//! Static description of a simulation instance.
//!
//! A [`Scenario`] is parsed from a JSON document (see [`ScenarioConfig`]) and
//! validated once. After construction it is immutable and can be shared across
//! concurrent runs.
//!
//! Per-device settings accept either a single value shared by every device or
//! an array with one entry per device. Serializing a [`Scenario`] always emits
//! the explicit per-device form, and the result loads back to an equal value.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gain_model::ConfidenceModel;
use crate::processes::{ProcessError, ProcessSpec};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("failed to parse scenario: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("gain {w} lies outside [-{w0}, {w0}]")]
    OutOfRange { w: f64, w0: f64 },
}

impl ScenarioError {
    fn invalid(msg: impl Into<String>) -> Self {
        ScenarioError::Invalid(msg.into())
    }
}

impl From<ProcessError> for ScenarioError {
    fn from(e: ProcessError) -> Self {
        ScenarioError::Invalid(e.to_string())
    }
}

/// Uniform partition of `[-w0, w0]` into `m` half-open intervals.
///
/// Indices are zero-based: interval `j` is
/// `[-w0 + j*2w0/m, -w0 + (j+1)*2w0/m)`, except that the last interval also
/// contains `w0` itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "GridConfig", try_from = "GridConfig")]
pub struct GainGrid {
    w0: f64,
    m: usize,
    centers: Vec<f64>,
}

impl GainGrid {
    pub fn new(w0: f64, m: usize) -> Result<Self, ScenarioError> {
        if !(w0 > 0.0 && w0 <= 1.0) {
            return Err(ScenarioError::invalid("w0 must lie in (0, 1]"));
        }
        if m == 0 {
            return Err(ScenarioError::invalid("M must be at least 1"));
        }
        let half = w0 / m as f64;
        let centers = (0..m).map(|j| -w0 + (2 * j + 1) as f64 * half).collect();
        Ok(Self { w0, m, centers })
    }

    pub fn w0(&self) -> f64 {
        self.w0
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn center(&self, j: usize) -> f64 {
        self.centers[j]
    }

    pub fn width(&self) -> f64 {
        2.0 * self.w0 / self.m as f64
    }

    /// Lower edge of interval `j`; `lower_edge(m)` is `w0`.
    pub fn lower_edge(&self, j: usize) -> f64 {
        if j >= self.m {
            self.w0
        } else {
            -self.w0 + j as f64 * self.width()
        }
    }

    /// Zero-based index of the interval containing `w`.
    pub fn interval_of(&self, w: f64) -> Result<usize, ScenarioError> {
        if !(w.abs() <= self.w0) {
            return Err(ScenarioError::OutOfRange { w, w0: self.w0 });
        }
        let raw = ((w + self.w0) / self.width()).floor();
        let mut j = (raw.max(0.0) as usize).min(self.m - 1);
        // floor() can land one bin off when w sits within an ulp of an edge
        if j + 1 < self.m && w >= self.lower_edge(j + 1) {
            j += 1;
        } else if j > 0 && w < self.lower_edge(j) {
            j -= 1;
        }
        Ok(j)
    }

    pub fn clamp(&self, w: f64) -> f64 {
        w.clamp(-self.w0, self.w0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub w0: f64,
    #[serde(rename = "M")]
    pub m: usize,
}

impl From<GainGrid> for GridConfig {
    fn from(g: GainGrid) -> Self {
        GridConfig { w0: g.w0, m: g.m }
    }
}

impl TryFrom<GridConfig> for GainGrid {
    type Error = ScenarioError;
    fn try_from(c: GridConfig) -> Result<Self, Self::Error> {
        GainGrid::new(c.w0, c.m)
    }
}

/// A value given once for all devices or once per device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerDevice<T> {
    Each(Vec<T>),
    Shared(T),
}

impl<T: Clone> PerDevice<T> {
    pub fn resolve(&self, n: usize, what: &str) -> Result<Vec<T>, ScenarioError> {
        match self {
            PerDevice::Shared(v) => Ok(vec![v.clone(); n]),
            PerDevice::Each(vs) if vs.len() == n => Ok(vs.clone()),
            PerDevice::Each(vs) => Err(ScenarioError::invalid(format!(
                "{what} has {} entries but N = {n}",
                vs.len()
            ))),
        }
    }
}

impl<T: Default> Default for PerDevice<T> {
    fn default() -> Self {
        PerDevice::Shared(T::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Onalgo,
    Ato,
    Rco,
    No,
    OnalgoK,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::Onalgo,
        PolicyKind::Ato,
        PolicyKind::Rco,
        PolicyKind::No,
        PolicyKind::OnalgoK,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Onalgo => "onalgo",
            PolicyKind::Ato => "ato",
            PolicyKind::Rco => "rco",
            PolicyKind::No => "no",
            PolicyKind::OnalgoK => "onalgo_k",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = ScenarioError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| ScenarioError::invalid(format!("unknown policy `{s}`")))
    }
}

fn default_ato_threshold() -> f64 {
    0.7
}

fn default_emit_every() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyParams {
    /// Local-confidence threshold below which ATO offloads an object.
    #[serde(default = "default_ato_threshold")]
    pub ato_threshold: f64,
    /// Trajectory CSV decimation.
    #[serde(default = "default_emit_every")]
    pub emit_every: usize,
}

impl Default for PolicyParams {
    fn default() -> Self {
        Self {
            ato_threshold: default_ato_threshold(),
            emit_every: default_emit_every(),
        }
    }
}

fn default_policy() -> PolicyKind {
    PolicyKind::Onalgo
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub alpha: f64,
    pub horizon: usize,
    pub seed: u64,
    #[serde(default = "default_policy")]
    pub policy: PolicyKind,
    #[serde(default)]
    pub params: PolicyParams,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DevicesConfig {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(default)]
    pub rho: PerDevice<f64>,
    #[serde(rename = "B_process")]
    pub budget: PerDevice<ProcessSpec>,
    pub o_process: PerDevice<ProcessSpec>,
    pub h_process: PerDevice<ProcessSpec>,
    /// Objects generated per device per slot.
    pub arrival_process: PerDevice<ProcessSpec>,
    /// Marks a deliberately correlated experiment; only recorded in outputs.
    #[serde(default, skip_serializing_if = "is_false")]
    pub correlated: bool,
}

fn one() -> f64 {
    1.0
}

/// Compute capacity process and per-cloudlet scalings for one cloudlet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloudletSpec {
    #[serde(rename = "H_process")]
    pub capacity: ProcessSpec,
    /// Multiplies the weighted gain of objects served here.
    #[serde(default = "one")]
    pub gain_scale: f64,
    /// Multiplies the per-object compute cost at this cloudlet.
    #[serde(default = "one")]
    pub cost_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CloudletsConfig {
    Many(Vec<CloudletSpec>),
    One(CloudletSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandwidthConfig {
    pub ell: PerDevice<f64>,
    #[serde(rename = "W_process")]
    pub capacity: ProcessSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GainSourceConfig {
    Synthetic {
        #[serde(default)]
        confidence: PerDevice<ConfidenceModel>,
        /// Predictor noise amplitude; also reported as the predictor's sigma.
        #[serde(default)]
        noise: PerDevice<f64>,
    },
    Csv {
        path: PathBuf,
    },
}

impl Default for GainSourceConfig {
    fn default() -> Self {
        GainSourceConfig::Synthetic {
            confidence: PerDevice::default(),
            noise: PerDevice::default(),
        }
    }
}

/// The on-disk JSON schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub devices: DevicesConfig,
    pub cloudlet: CloudletsConfig,
    pub grid: GridConfig,
    pub algorithm: AlgorithmConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<BandwidthConfig>,
    #[serde(default)]
    pub gain_source: GainSourceConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bandwidth {
    /// Object size per device.
    pub ell: Vec<f64>,
    pub capacity: ProcessSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GainSource {
    Synthetic {
        confidence: Vec<ConfidenceModel>,
        noise: Vec<f64>,
    },
    Csv {
        path: PathBuf,
    },
}

/// Validated simulation instance with every per-device value resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ScenarioConfig", try_from = "ScenarioConfig")]
pub struct Scenario {
    pub n_devices: usize,
    pub grid: GainGrid,
    pub rho: Vec<f64>,
    pub alpha: f64,
    pub horizon: usize,
    pub seed: u64,
    pub policy: PolicyKind,
    pub params: PolicyParams,
    pub budget: Vec<ProcessSpec>,
    pub power_cost: Vec<ProcessSpec>,
    pub compute_cost: Vec<ProcessSpec>,
    pub arrivals: Vec<ProcessSpec>,
    /// At least one; policies other than `onalgo_k` only use the first.
    pub cloudlets: Vec<CloudletSpec>,
    pub bandwidth: Option<Bandwidth>,
    pub gain_source: GainSource,
    pub correlated: bool,
}

/// Parses and validates a JSON scenario document.
pub fn load_scenario(config_text: &str) -> Result<Scenario, ScenarioError> {
    let config: ScenarioConfig =
        serde_json::from_str(config_text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    Scenario::try_from(config)
}

fn check(cond: bool, msg: &str) -> Result<(), ScenarioError> {
    if cond {
        Ok(())
    } else {
        Err(ScenarioError::invalid(msg))
    }
}

impl TryFrom<ScenarioConfig> for Scenario {
    type Error = ScenarioError;

    fn try_from(c: ScenarioConfig) -> Result<Self, Self::Error> {
        let n = c.devices.n;
        check(n >= 1, "N must be at least 1")?;
        let grid = GainGrid::try_from(c.grid)?;
        let alg = c.algorithm;
        check(
            alg.alpha.is_finite() && alg.alpha > 0.0,
            "alpha must be positive",
        )?;
        check(alg.horizon >= 1, "horizon must be at least 1")?;
        check(
            (0.0..=1.0).contains(&alg.params.ato_threshold),
            "ato_threshold must lie in [0, 1]",
        )?;
        check(alg.params.emit_every >= 1, "emit_every must be at least 1")?;

        let rho = c.devices.rho.resolve(n, "rho")?;
        check(
            rho.iter().all(|r| r.is_finite() && *r >= 0.0),
            "rho must be nonnegative",
        )?;

        let budget = c.devices.budget.resolve(n, "B_process")?;
        let power_cost = c.devices.o_process.resolve(n, "o_process")?;
        let compute_cost = c.devices.h_process.resolve(n, "h_process")?;
        let arrivals = c.devices.arrival_process.resolve(n, "arrival_process")?;
        for (name, specs) in [
            ("B_process", &budget),
            ("o_process", &power_cost),
            ("h_process", &compute_cost),
            ("arrival_process", &arrivals),
        ] {
            for (i, s) in specs.iter().enumerate() {
                s.validate()
                    .map_err(|e| ScenarioError::invalid(format!("{name}[{i}]: {e}")))?;
            }
        }

        let cloudlets = match c.cloudlet {
            CloudletsConfig::One(s) => vec![s],
            CloudletsConfig::Many(v) => v,
        };
        check(!cloudlets.is_empty(), "at least one cloudlet is required")?;
        for (k, cl) in cloudlets.iter().enumerate() {
            cl.capacity
                .validate()
                .map_err(|e| ScenarioError::invalid(format!("cloudlet[{k}].H_process: {e}")))?;
            check(
                cl.gain_scale.is_finite() && cl.gain_scale >= 0.0,
                "cloudlet gain_scale must be nonnegative",
            )?;
            check(
                cl.cost_scale.is_finite() && cl.cost_scale >= 0.0,
                "cloudlet cost_scale must be nonnegative",
            )?;
        }

        let bandwidth = match c.bandwidth {
            None => None,
            Some(b) => {
                let ell = b.ell.resolve(n, "bandwidth.ell")?;
                check(
                    ell.iter().all(|l| l.is_finite() && *l >= 0.0),
                    "bandwidth.ell must be nonnegative",
                )?;
                b.capacity
                    .validate()
                    .map_err(|e| ScenarioError::invalid(format!("W_process: {e}")))?;
                Some(Bandwidth {
                    ell,
                    capacity: b.capacity,
                })
            }
        };

        let gain_source = match c.gain_source {
            GainSourceConfig::Synthetic { confidence, noise } => {
                let confidence = confidence.resolve(n, "confidence")?;
                for m in &confidence {
                    m.validate()?;
                }
                let noise = noise.resolve(n, "noise")?;
                check(
                    noise.iter().all(|e| (0.0..=1.0).contains(e)),
                    "noise must lie in [0, 1]",
                )?;
                GainSource::Synthetic { confidence, noise }
            }
            GainSourceConfig::Csv { path } => GainSource::Csv { path },
        };

        Ok(Scenario {
            n_devices: n,
            grid,
            rho,
            alpha: alg.alpha,
            horizon: alg.horizon,
            seed: alg.seed,
            policy: alg.policy,
            params: alg.params,
            budget,
            power_cost,
            compute_cost,
            arrivals,
            cloudlets,
            bandwidth,
            gain_source,
            correlated: c.devices.correlated,
        })
    }
}

impl From<Scenario> for ScenarioConfig {
    fn from(s: Scenario) -> Self {
        ScenarioConfig {
            devices: DevicesConfig {
                n: s.n_devices,
                rho: PerDevice::Each(s.rho),
                budget: PerDevice::Each(s.budget),
                o_process: PerDevice::Each(s.power_cost),
                h_process: PerDevice::Each(s.compute_cost),
                arrival_process: PerDevice::Each(s.arrivals),
                correlated: s.correlated,
            },
            cloudlet: CloudletsConfig::Many(s.cloudlets),
            grid: s.grid.into(),
            algorithm: AlgorithmConfig {
                alpha: s.alpha,
                horizon: s.horizon,
                seed: s.seed,
                policy: s.policy,
                params: s.params,
            },
            bandwidth: s.bandwidth.map(|b| BandwidthConfig {
                ell: PerDevice::Each(b.ell),
                capacity: b.capacity,
            }),
            gain_source: match s.gain_source {
                GainSource::Synthetic { confidence, noise } => GainSourceConfig::Synthetic {
                    confidence: PerDevice::Each(confidence),
                    noise: PerDevice::Each(noise),
                },
                GainSource::Csv { path } => GainSourceConfig::Csv { path },
            },
        }
    }
}

fn max_bound(specs: &[ProcessSpec]) -> f64 {
    specs.iter().map(ProcessSpec::bound).fold(0.0, f64::max)
}

impl Scenario {
    pub fn grid_len(&self) -> usize {
        self.grid.len()
    }

    pub fn o_max(&self) -> f64 {
        max_bound(&self.power_cost)
    }

    pub fn h_max(&self) -> f64 {
        max_bound(&self.compute_cost)
    }

    pub fn b_max(&self) -> f64 {
        max_bound(&self.budget)
    }

    pub fn capacity_max(&self) -> f64 {
        self.cloudlets
            .iter()
            .map(|c| c.capacity.bound())
            .fold(0.0, f64::max)
    }

    pub fn lambda_max(&self) -> f64 {
        max_bound(&self.arrivals)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialization is infallible")
    }

    /// SHA-256 of the canonical serialization.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scenario serialization is infallible");
        hex(&Sha256::digest(&bytes))
    }

    /// Digest ignoring the selected policy, so runs of different policies on
    /// the same instance can be matched.
    pub fn instance_digest(&self) -> String {
        let mut s = self.clone();
        s.policy = PolicyKind::Onalgo;
        s.digest()
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// One slot's realized random values.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotObservation {
    /// One-based slot index.
    pub t: u64,
    /// Objects per device and gain interval.
    pub arrivals: Vec<Vec<u32>>,
    pub power_cost: Vec<f64>,
    pub compute_cost: Vec<f64>,
    pub budget: Vec<f64>,
    /// One entry per cloudlet.
    pub capacity: Vec<f64>,
    pub bandwidth: Option<f64>,
}

impl SlotObservation {
    pub fn zeros(t: u64, n: usize, m: usize, k: usize, bandwidth: bool) -> Self {
        Self {
            t,
            arrivals: vec![vec![0; m]; n],
            power_cost: vec![0.0; n],
            compute_cost: vec![0.0; n],
            budget: vec![0.0; n],
            capacity: vec![0.0; k],
            bandwidth: bandwidth.then_some(0.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample_config(n: usize, m: usize, alpha: f64, horizon: usize) -> String {
        format!(
            r#"{{
  "devices": {{
    "N": {n},
    "rho": 1.0,
    "B_process": {{"kind":"constant","value":10.0,"bound":10.0}},
    "o_process": {{"kind":"iid_uniform","low":0.4,"high":0.6,"bound":1.0}},
    "h_process": {{"kind":"constant","value":0.1,"bound":0.1}},
    "arrival_process": {{"kind":"iid_uniform","low":20.0,"high":40.0,"bound":40.0}}
  }},
  "cloudlet": {{"H_process": {{"kind":"constant","value":10.0,"bound":10.0}}}},
  "grid": {{"w0": 0.4, "M": {m}}},
  "algorithm": {{"alpha": {alpha}, "horizon": {horizon}, "seed": 7}}
}}"#
        )
    }

    #[test]
    fn loads_fig6_sized_config() {
        let s = load_scenario(&sample_config(5, 6, 0.01, 10000)).unwrap();
        assert_eq!(s.n_devices, 5);
        assert_eq!(s.grid.len(), 6);
        assert_eq!(s.alpha, 0.01);
        assert_eq!(s.horizon, 10000);
        assert_eq!(s.policy, PolicyKind::Onalgo);
        assert_eq!(s.params.ato_threshold, 0.7);
        assert_eq!(s.rho, vec![1.0; 5]);
    }

    #[test]
    fn zero_alpha_is_rejected() {
        let err = load_scenario(&sample_config(5, 6, 0.0, 10)).unwrap_err();
        assert!(err.to_string().contains("alpha must be positive"), "{err}");
    }

    #[test]
    fn malformed_text_is_a_parse_error() {
        let err = load_scenario("{ not json").unwrap_err();
        assert!(matches!(err, ScenarioError::Parse(_)));
    }

    #[test]
    fn wrong_per_device_length_is_rejected() {
        let text = sample_config(3, 4, 0.1, 10).replace("\"rho\": 1.0", "\"rho\": [1.0, 0.5]");
        let err = load_scenario(&text).unwrap_err();
        assert!(err.to_string().contains("rho has 2 entries"), "{err}");
    }

    #[test]
    fn process_outside_bound_is_rejected() {
        let text = sample_config(2, 4, 0.1, 10).replace(
            r#"{"kind":"constant","value":10.0,"bound":10.0}}"#,
            r#"{"kind":"constant","value":12.0,"bound":10.0}}"#,
        );
        let err = load_scenario(&text).unwrap_err();
        assert!(err.to_string().contains("cloudlet[0]"), "{err}");
    }

    #[test]
    fn four_interval_centers() {
        let g = GainGrid::new(1.0, 4).unwrap();
        assert_eq!(g.centers(), &[-0.75, -0.25, 0.25, 0.75]);
    }

    #[test]
    fn interval_lookup_examples() {
        let g = GainGrid::new(1.0, 4).unwrap();
        assert_eq!(g.interval_of(0.3).unwrap(), 2);
        assert_eq!(g.interval_of(-1.0).unwrap(), 0);
        assert_eq!(g.interval_of(1.0).unwrap(), 3);
        assert_eq!(g.interval_of(0.0).unwrap(), 2);
        assert_eq!(g.interval_of(-0.5).unwrap(), 1);
        assert!(matches!(
            g.interval_of(1.0001),
            Err(ScenarioError::OutOfRange { .. })
        ));
        assert!(g.interval_of(f64::NAN).is_err());
    }

    #[test]
    fn policy_names_round_trip() {
        for p in PolicyKind::ALL {
            assert_eq!(p.name().parse::<PolicyKind>().unwrap(), p);
        }
        assert!("greedy".parse::<PolicyKind>().is_err());
    }

    #[test]
    fn digest_tracks_content() {
        let a = load_scenario(&sample_config(2, 4, 0.1, 10)).unwrap();
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.seed += 1;
        assert_ne!(a.digest(), b.digest());
        let mut c = a.clone();
        c.policy = PolicyKind::Ato;
        assert_ne!(a.digest(), c.digest());
        assert_eq!(a.instance_digest(), c.instance_digest());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn lookup_stays_within_half_width(w0 in 0.01f64..=1.0, m in 1usize..40, u in 0.0f64..=1.0) {
                let g = GainGrid::new(w0, m).unwrap();
                let w = -w0 + 2.0 * w0 * u;
                let j = g.interval_of(w).unwrap();
                prop_assert!((w - g.center(j)).abs() <= w0 / m as f64 + 1e-12);
            }

            #[test]
            fn centers_map_to_themselves(w0 in 0.01f64..=1.0, m in 1usize..60) {
                let g = GainGrid::new(w0, m).unwrap();
                for j in 0..m {
                    prop_assert_eq!(g.interval_of(g.center(j)).unwrap(), j);
                }
                prop_assert!(g.centers().windows(2).all(|p| p[0] < p[1]));
            }

            #[test]
            fn scenario_round_trips(n in 1usize..5, m in 1usize..8, alpha in 1e-4f64..1.0, seed in any::<u64>()) {
                let mut s = load_scenario(&sample_config(n, m, alpha, 100)).unwrap();
                s.seed = seed;
                let back = load_scenario(&s.to_json()).unwrap();
                prop_assert_eq!(back, s);
            }
        }
    }
}
