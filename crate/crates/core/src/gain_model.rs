//! Per-object weighted improvement gains.
//!
//! Gains come either from a synthetic classifier/predictor model or from an
//! ingested CSV trace. Both paths bin gains into the scenario's [`GainGrid`]
//! to form the per-interval arrival counts the policies act on.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::processes::{ProcessSampler, StreamId, StreamRole};
use crate::scenario::{GainGrid, Scenario, ScenarioError};

#[derive(Debug, Error)]
pub enum GainError {
    #[error("trace row {row}: {msg}")]
    MalformedRow { row: usize, msg: String },
    #[error("trace row {row}: device {device} out of range (N = {n})")]
    DeviceOutOfRange { row: usize, device: usize, n: usize },
    #[error("trace header must contain t, device and either w or phi_hat,sigma")]
    Header,
    #[error("trace rows must be sorted by slot (row {row})")]
    Unsorted { row: usize },
    #[error("trace I/O: {0}")]
    Io(String),
}

impl From<csv::Error> for GainError {
    fn from(e: csv::Error) -> Self {
        GainError::Io(e.to_string())
    }
}

/// Distribution of local and cloudlet classifier confidences for one device.
///
/// The local confidence `d_n` is uniform on `[local_low, local_high]`; the
/// cloudlet confidence is `min(1, d_n + U[0, boost_max])`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfidenceModel {
    pub local_low: f64,
    pub local_high: f64,
    pub boost_max: f64,
}

impl Default for ConfidenceModel {
    fn default() -> Self {
        Self {
            local_low: 0.5,
            local_high: 0.9,
            boost_max: 0.3,
        }
    }
}

impl ConfidenceModel {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let ok = (0.0..=1.0).contains(&self.local_low)
            && (0.0..=1.0).contains(&self.local_high)
            && self.local_low <= self.local_high
            && (0.0..=1.0).contains(&self.boost_max);
        if ok {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(
                "confidence needs 0 <= local_low <= local_high <= 1 and boost_max in [0, 1]".into(),
            ))
        }
    }
}

/// Classifier and predictor outputs for one object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectGain {
    pub device: usize,
    /// `d_n`
    pub local_confidence: f64,
    /// `d_0`
    pub cloudlet_confidence: f64,
    pub predicted_gain: f64,
    pub predictor_confidence: f64,
}

impl ObjectGain {
    pub fn true_gain(&self) -> f64 {
        self.cloudlet_confidence - self.local_confidence
    }
}

/// `predicted_gain - rho * predictor_confidence`, before clamping.
pub fn raw_weighted_gain(obj: &ObjectGain, rho: f64) -> f64 {
    obj.predicted_gain - rho * obj.predictor_confidence
}

/// Weighted improvement gain clamped into the grid's range.
pub fn weighted_gain(obj: &ObjectGain, rho: f64, grid: &GainGrid) -> f64 {
    grid.clamp(raw_weighted_gain(obj, rho))
}

/// What the simulation needs to know about one arrived object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotObject {
    pub device: usize,
    pub interval: usize,
    pub weighted_gain: f64,
    pub local_confidence: Option<f64>,
    pub true_gain: f64,
}

/// All objects of one slot plus their per-interval counts.
#[derive(Debug, Clone, Default)]
pub struct SlotGains {
    pub objects: Vec<SlotObject>,
    pub arrivals: Vec<Vec<u32>>,
    /// Objects whose weighted gain had to be clamped into `[-w0, w0]`.
    pub clamped: usize,
}

impl SlotGains {
    fn empty(n: usize, m: usize) -> Self {
        Self {
            objects: Vec::new(),
            arrivals: vec![vec![0; m]; n],
            clamped: 0,
        }
    }

    fn push(&mut self, obj: SlotObject, clamped: bool) {
        self.arrivals[obj.device][obj.interval] += 1;
        self.objects.push(obj);
        if clamped {
            self.clamped += 1;
        }
    }
}

/// Source of per-slot objects.
pub trait GainStream {
    fn next_slot(&mut self, t: u64) -> SlotGains;
}

/// Synthetic classifier/predictor stand-in.
#[derive(Debug, Clone)]
pub struct SyntheticGains {
    grid: GainGrid,
    rho: Vec<f64>,
    confidence: Vec<ConfidenceModel>,
    noise: Vec<f64>,
    arrivals: Vec<ProcessSampler>,
    rngs: Vec<ChaCha8Rng>,
}

impl SyntheticGains {
    pub fn new(scenario: &Scenario, confidence: Vec<ConfidenceModel>, noise: Vec<f64>) -> Self {
        let n = scenario.n_devices;
        let arrivals = (0..n)
            .map(|i| {
                scenario.arrivals[i].sampler(scenario.seed, StreamId::new(StreamRole::Arrivals, i))
            })
            .collect();
        let rngs = (0..n)
            .map(|i| {
                let mut r = ChaCha8Rng::seed_from_u64(scenario.seed);
                r.set_stream(StreamId::new(StreamRole::Gains, i).0);
                r
            })
            .collect();
        Self {
            grid: scenario.grid.clone(),
            rho: scenario.rho.clone(),
            confidence,
            noise,
            arrivals,
            rngs,
        }
    }

    /// Draws one object's classifier and predictor outputs for `device`.
    pub fn draw_object(&mut self, device: usize) -> ObjectGain {
        let model = self.confidence[device];
        let eta = self.noise[device];
        let rng = &mut self.rngs[device];
        let d_local = rng.random_range(model.local_low..=model.local_high);
        let boost = rng.random::<f64>() * model.boost_max;
        let d_cloud = (d_local + boost).min(1.0);
        let phi = d_cloud - d_local;
        let eps = if eta > 0.0 {
            rng.random_range(-eta..=eta)
        } else {
            0.0
        };
        ObjectGain {
            device,
            local_confidence: d_local,
            cloudlet_confidence: d_cloud,
            predicted_gain: (phi + eps).clamp(0.0, 1.0),
            predictor_confidence: eta,
        }
    }

    /// Generates slot `t`'s objects together with their raw classifier outputs.
    pub fn synthesize_slot_gains(&mut self, t: u64) -> (Vec<ObjectGain>, SlotGains) {
        let n = self.rho.len();
        let mut out = SlotGains::empty(n, self.grid.len());
        let mut raw = Vec::new();
        for device in 0..n {
            let count = self.arrivals[device].sample_count(t);
            for _ in 0..count {
                let obj = self.draw_object(device);
                let w_raw = raw_weighted_gain(&obj, self.rho[device]);
                let w = self.grid.clamp(w_raw);
                let interval = self
                    .grid
                    .interval_of(w)
                    .expect("clamped gain is on the grid");
                out.push(
                    SlotObject {
                        device,
                        interval,
                        weighted_gain: w,
                        local_confidence: Some(obj.local_confidence),
                        true_gain: obj.true_gain(),
                    },
                    w != w_raw,
                );
                raw.push(obj);
            }
        }
        (raw, out)
    }
}

impl GainStream for SyntheticGains {
    fn next_slot(&mut self, t: u64) -> SlotGains {
        self.synthesize_slot_gains(t).1
    }
}

/// Probability that an object of the synthetic model lands in each interval.
///
/// The inner expectations over the boost and predictor noise are taken in
/// closed form; the outer expectation over the local confidence uses
/// composite Simpson quadrature.
pub fn interval_probabilities(
    model: &ConfidenceModel,
    noise: f64,
    rho: f64,
    grid: &GainGrid,
) -> Vec<f64> {
    let m = grid.len();
    // cdf[j] = P(w < lower_edge(j)), with the clamp sending the tails to the end bins
    let mut cdf: Vec<f64> = (0..=m)
        .map(|j| weighted_gain_cdf(model, noise, rho, grid.lower_edge(j)))
        .collect();
    cdf[0] = 0.0;
    cdf[m] = 1.0;
    cdf.windows(2).map(|p| (p[1] - p[0]).max(0.0)).collect()
}

/// `P(phi_hat - rho * noise < x)` under the synthetic model.
pub fn weighted_gain_cdf(model: &ConfidenceModel, noise: f64, rho: f64, x: f64) -> f64 {
    let z = x + rho * noise;
    if z <= 0.0 {
        return 0.0;
    }
    if z > 1.0 {
        return 1.0;
    }
    let inner = |d: f64| predicted_below_given_local(model.boost_max, noise, z, d);
    let (lo, hi) = (model.local_low, model.local_high);
    if hi - lo <= 0.0 {
        return inner(lo);
    }
    const PANELS: usize = 8192;
    let h = (hi - lo) / PANELS as f64;
    let mut acc = inner(lo) + inner(hi);
    for i in 1..PANELS {
        let wgt = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += wgt * inner(lo + i as f64 * h);
    }
    (acc * h / 3.0 / (hi - lo)).clamp(0.0, 1.0)
}

/// `P(phi + eps < z | d_local = d)` for `0 < z <= 1`.
fn predicted_below_given_local(boost_max: f64, eta: f64, z: f64, d: f64) -> f64 {
    let headroom = 1.0 - d;
    let below = |phi: f64| -> f64 {
        if eta > 0.0 {
            ((z - phi + eta) / (2.0 * eta)).clamp(0.0, 1.0)
        } else if phi < z {
            1.0
        } else {
            0.0
        }
    };
    if boost_max <= 0.0 {
        return below(0.0);
    }
    // phi = min(u * boost_max, headroom): uniform part on [0, a] plus an atom at headroom
    let a = boost_max.min(headroom);
    let continuous = if eta > 0.0 {
        let (p, q) = (z - eta, z + eta);
        let ramp = |x: f64| -> f64 {
            if x <= p {
                0.0
            } else if x < q {
                (x - p) * (x - p) / (2.0 * (q - p))
            } else {
                (q - p) / 2.0 + (x - q)
            }
        };
        a - (ramp(a) - ramp(0.0))
    } else {
        z.clamp(0.0, a)
    };
    let atom = 1.0 - a / boost_max;
    continuous / boost_max + atom * below(headroom)
}

/// One row of a gain trace.
#[derive(Debug, Clone, PartialEq)]
pub struct GainTraceRow {
    pub t: u64,
    pub device: usize,
    /// Weighted gain, clamped into `[-w0, w0]` at ingest.
    pub w: f64,
    pub d_local: Option<f64>,
    pub phi: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
struct TraceColumns {
    t: usize,
    device: usize,
    w: Option<usize>,
    phi_hat: Option<usize>,
    sigma: Option<usize>,
    d_local: Option<usize>,
    phi: Option<usize>,
}

/// Parses a trace CSV. `rho[n]` is applied when rows carry `phi_hat,sigma`.
pub fn read_trace<R: Read>(
    reader: R,
    n: usize,
    rho: &[f64],
) -> Result<Vec<GainTraceRow>, GainError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let cols = TraceColumns {
        t: find("t").ok_or(GainError::Header)?,
        device: find("device").ok_or(GainError::Header)?,
        w: find("w"),
        phi_hat: find("phi_hat"),
        sigma: find("sigma"),
        d_local: find("d_local"),
        phi: find("phi"),
    };
    if cols.w.is_none() && (cols.phi_hat.is_none() || cols.sigma.is_none()) {
        return Err(GainError::Header);
    }
    let mut rows = Vec::new();
    let mut last_t = 0;
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| GainError::MalformedRow {
            row,
            msg: e.to_string(),
        })?;
        let field = |idx: usize| -> Result<&str, GainError> {
            rec.get(idx).ok_or_else(|| GainError::MalformedRow {
                row,
                msg: "missing field".into(),
            })
        };
        let num = |idx: usize| -> Result<f64, GainError> {
            let s = field(idx)?;
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| GainError::MalformedRow {
                    row,
                    msg: format!("`{s}` is not a finite number"),
                })
        };
        let opt_num = |idx: Option<usize>| -> Result<Option<f64>, GainError> {
            match idx {
                Some(i) if !field(i)?.is_empty() => num(i).map(Some),
                _ => Ok(None),
            }
        };
        let t: u64 = field(cols.t)?
            .parse()
            .map_err(|_| GainError::MalformedRow {
                row,
                msg: "slot must be a positive integer".into(),
            })?;
        if t == 0 {
            return Err(GainError::MalformedRow {
                row,
                msg: "slots are one-based".into(),
            });
        }
        let device: usize = field(cols.device)?
            .parse()
            .map_err(|_| GainError::MalformedRow {
                row,
                msg: "device must be a nonnegative integer".into(),
            })?;
        if device >= n {
            return Err(GainError::DeviceOutOfRange { row, device, n });
        }
        if t < last_t {
            return Err(GainError::Unsorted { row });
        }
        last_t = t;
        let w = match cols.w {
            Some(c) => num(c)?,
            None => {
                let phi_hat = num(cols.phi_hat.unwrap())?;
                let sigma = num(cols.sigma.unwrap())?;
                phi_hat - rho[device] * sigma
            }
        };
        rows.push(GainTraceRow {
            t,
            device,
            w,
            d_local: opt_num(cols.d_local)?,
            phi: opt_num(cols.phi)?,
        });
    }
    Ok(rows)
}

/// Writes rows as `t,device,w,d_local,phi`.
pub fn write_trace<W: Write>(writer: W, rows: &[GainTraceRow]) -> Result<(), GainError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["t", "device", "w", "d_local", "phi"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        wtr.write_record([
            r.t.to_string(),
            r.device.to_string(),
            r.w.to_string(),
            opt(r.d_local),
            opt(r.phi),
        ])?;
    }
    wtr.flush().map_err(|e| GainError::Io(e.to_string()))?;
    Ok(())
}

/// Per-slot arrival matrices (index `t - 1`) for slots `1..=horizon`.
pub fn ingest_trace(
    rows: &[GainTraceRow],
    n: usize,
    grid: &GainGrid,
    horizon: usize,
) -> Result<Vec<Vec<Vec<u32>>>, GainError> {
    let mut out = vec![vec![vec![0u32; grid.len()]; n]; horizon];
    for (i, r) in rows.iter().enumerate() {
        if r.device >= n {
            return Err(GainError::DeviceOutOfRange {
                row: i + 1,
                device: r.device,
                n,
            });
        }
        if r.t as usize > horizon {
            continue;
        }
        let j = grid
            .interval_of(grid.clamp(r.w))
            .expect("clamped gain is on the grid");
        out[r.t as usize - 1][r.device][j] += 1;
    }
    Ok(out)
}

/// Replays trace rows slot by slot.
#[derive(Debug, Clone)]
pub struct TraceGains {
    grid: GainGrid,
    n: usize,
    rows: Vec<GainTraceRow>,
    cursor: usize,
}

impl TraceGains {
    pub fn new(rows: Vec<GainTraceRow>, n: usize, grid: GainGrid) -> Self {
        Self {
            grid,
            n,
            rows,
            cursor: 0,
        }
    }

    /// Empirical mean objects per slot in each (device, interval) over `horizon` slots.
    pub fn mean_arrivals(&self, horizon: usize) -> Vec<Vec<f64>> {
        let mut sums = vec![vec![0.0; self.grid.len()]; self.n];
        for r in self.rows.iter().filter(|r| r.t as usize <= horizon) {
            let j = self.grid.interval_of(self.grid.clamp(r.w)).unwrap();
            sums[r.device][j] += 1.0;
        }
        let h = horizon.max(1) as f64;
        for row in &mut sums {
            for v in row.iter_mut() {
                *v /= h;
            }
        }
        sums
    }
}

impl GainStream for TraceGains {
    fn next_slot(&mut self, t: u64) -> SlotGains {
        let mut out = SlotGains::empty(self.n, self.grid.len());
        while self.cursor < self.rows.len() && self.rows[self.cursor].t < t {
            self.cursor += 1;
        }
        while self.cursor < self.rows.len() && self.rows[self.cursor].t == t {
            let r = &self.rows[self.cursor];
            let w = self.grid.clamp(r.w);
            let interval = self.grid.interval_of(w).unwrap();
            out.push(
                SlotObject {
                    device: r.device,
                    interval,
                    weighted_gain: w,
                    local_confidence: r.d_local,
                    true_gain: r.phi.unwrap_or(w.max(0.0)),
                },
                w != r.w,
            );
            self.cursor += 1;
        }
        out
    }
}

/// Runs the synthetic model for `horizon` slots and returns its trace rows.
pub fn export_synthetic_trace(
    scenario: &Scenario,
    confidence: Vec<ConfidenceModel>,
    noise: Vec<f64>,
    horizon: usize,
) -> Vec<GainTraceRow> {
    let mut synth = SyntheticGains::new(scenario, confidence, noise);
    let mut rows = Vec::new();
    for t in 1..=horizon as u64 {
        let slot = synth.next_slot(t);
        rows.extend(slot.objects.iter().map(|o| GainTraceRow {
            t,
            device: o.device,
            w: o.weighted_gain,
            d_local: o.local_confidence,
            phi: Some(o.true_gain),
        }));
    }
    rows
}
