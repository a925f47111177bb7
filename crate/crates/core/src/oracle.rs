//! Exact solution of the static offloading program with known means.
//!
//! The program maximizes `sum_nj w_nj lambda_nj y_nj` over `y in [0,1]^(NM)`
//! subject to one power row per device, one cloudlet compute row and an
//! optional shared bandwidth row. All costs of a device scale with the same
//! per-device volume `sum_j lambda_nj y_nj`, so for fixed coupling prices each
//! device solves a fractional knapsack that fills intervals in descending gain
//! order. The cloudlet price is found by bisection on the (non-increasing)
//! cloudlet load; a bandwidth price, when present, by an outer bisection.

use thiserror::Error;

use crate::par;
use crate::processes::RunningAverages;

/// Absolute tolerance used when comparing reduced costs against zero.
const TIE_TOL: f64 = 1e-12;
const FEAS_TOL: f64 = 1e-12;
const PRICE_TOL: f64 = 1e-10;
const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("invalid static problem: {0}")]
    Invalid(String),
    #[error("brute force supports at most 6 variables, got {0}")]
    TooLarge(usize),
    #[error("grid step must lie in (0, 0.5], got {0}")]
    BadStep(f64),
    #[error("Slater slack is {0}; the zero decision is not strictly feasible")]
    DegenerateSlater(f64),
    #[error("could not resolve {0} tied devices at the optimal prices")]
    Degenerate(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthRow {
    /// Object size per device.
    pub ell: Vec<f64>,
    pub capacity: f64,
}

/// The static program with true means.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticProblem {
    /// Gain per (device, interval).
    pub w: Vec<Vec<f64>>,
    /// Mean objects per slot per (device, interval).
    pub lambda: Vec<Vec<f64>>,
    pub o: Vec<f64>,
    pub h: Vec<f64>,
    pub b: Vec<f64>,
    pub capacity: f64,
    pub bandwidth: Option<BandwidthRow>,
}

impl StaticProblem {
    pub fn n(&self) -> usize {
        self.w.len()
    }

    pub fn m(&self) -> usize {
        self.w.first().map_or(0, Vec::len)
    }

    pub fn rows(&self) -> usize {
        self.n() + 1 + usize::from(self.bandwidth.is_some())
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        let n = self.n();
        let m = self.m();
        let bad = |msg: &str| Err(OracleError::Invalid(msg.to_string()));
        if n == 0 || m == 0 {
            return bad("empty problem");
        }
        if self.lambda.len() != n
            || self.o.len() != n
            || self.h.len() != n
            || self.b.len() != n
            || self.w.iter().chain(&self.lambda).any(|r| r.len() != m)
        {
            return bad("inconsistent dimensions");
        }
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !self.w.iter().flatten().all(|v| v.is_finite()) {
            return bad("gains must be finite");
        }
        if !self.lambda.iter().flatten().all(|&v| nonneg(v))
            || !self
                .o
                .iter()
                .chain(&self.h)
                .chain(&self.b)
                .all(|&v| nonneg(v))
            || !nonneg(self.capacity)
        {
            return bad("rates, costs and capacities must be nonnegative");
        }
        if let Some(bw) = &self.bandwidth {
            if bw.ell.len() != n || !bw.ell.iter().all(|&v| nonneg(v)) || !nonneg(bw.capacity) {
                return bad("bandwidth row must be nonnegative with one size per device");
            }
        }
        Ok(())
    }

    /// Expected objects sent per slot by device `n` under decision row `y`.
    pub fn volume(&self, n: usize, y: &[f64]) -> f64 {
        self.lambda[n].iter().zip(y).map(|(l, y)| l * y).sum()
    }

    pub fn objective(&self, y: &[Vec<f64>]) -> f64 {
        self.w
            .iter()
            .zip(&self.lambda)
            .zip(y)
            .map(|((w, l), y)| {
                w.iter()
                    .zip(l)
                    .zip(y)
                    .map(|((w, l), y)| w * l * y)
                    .sum::<f64>()
            })
            .sum()
    }

    /// Constraint values `g(y)`: device rows, then cloudlet, then bandwidth.
    pub fn constraints(&self, y: &[Vec<f64>]) -> Vec<f64> {
        let volumes: Vec<f64> = (0..self.n()).map(|n| self.volume(n, &y[n])).collect();
        self.constraints_from_volumes(&volumes)
    }

    fn constraints_from_volumes(&self, volumes: &[f64]) -> Vec<f64> {
        let mut g: Vec<f64> = volumes
            .iter()
            .enumerate()
            .map(|(n, v)| self.o[n] * v - self.b[n])
            .collect();
        g.push(dot(&self.h, volumes) - self.capacity);
        if let Some(bw) = &self.bandwidth {
            g.push(dot(&bw.ell, volumes) - bw.capacity);
        }
        g
    }

    /// `sum of w * lambda` over positive gains: the objective without constraints.
    pub fn f_max(&self) -> f64 {
        self.w
            .iter()
            .flatten()
            .zip(self.lambda.iter().flatten())
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, l)| w * l)
            .sum()
    }

    /// Smallest constraint slack at the zero decision.
    pub fn slater_slack(&self) -> f64 {
        let mut v = self.b.iter().copied().fold(self.capacity, f64::min);
        if let Some(bw) = &self.bandwidth {
            v = v.min(bw.capacity);
        }
        v
    }

    fn power_cap(&self, n: usize) -> f64 {
        if self.o[n] > 0.0 {
            self.b[n] / self.o[n]
        } else {
            f64::INFINITY
        }
    }

    fn coupling_price(&self, n: usize, xi: f64, zeta: f64) -> f64 {
        let bw = self.bandwidth.as_ref().map_or(0.0, |b| zeta * b.ell[n]);
        xi * self.h[n] + bw
    }

    /// Smallest and largest optimal volume of device `n` at coupling price `price`.
    fn volume_range(&self, n: usize, price: f64, tol: f64) -> (f64, f64) {
        let mut strict = 0.0;
        let mut tied = 0.0;
        for (w, l) in self.w[n].iter().zip(&self.lambda[n]) {
            let r = w - price;
            if r > tol {
                strict += l;
            } else if r >= -tol {
                tied += l;
            }
        }
        let cap = self.power_cap(n);
        (strict.min(cap), (strict + tied).min(cap))
    }

    fn ranges(&self, xi: f64, zeta: f64, tol: f64) -> Vec<(f64, f64)> {
        (0..self.n())
            .map(|n| self.volume_range(n, self.coupling_price(n, xi, zeta), tol))
            .collect()
    }

    /// Fills device `n`'s intervals in descending gain order up to `volume`.
    fn fill(&self, n: usize, price: f64, volume: f64, tol: f64) -> Vec<f64> {
        let m = self.m();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| self.w[n][b].total_cmp(&self.w[n][a]).then(a.cmp(&b)));
        let mut y = vec![0.0; m];
        let mut left = volume;
        for j in order {
            if self.w[n][j] - price < -tol || left <= 0.0 {
                break;
            }
            let l = self.lambda[n][j];
            if l <= 0.0 {
                continue;
            }
            if l <= left {
                y[j] = 1.0;
                left -= l;
            } else {
                y[j] = left / l;
                left = 0.0;
            }
        }
        y
    }

    fn load_min(&self, xi: f64, zeta: f64) -> f64 {
        let r = self.ranges(xi, zeta, TIE_TOL);
        (0..self.n()).map(|n| self.h[n] * r[n].0).sum()
    }

    /// Cloudlet price for a fixed bandwidth price: smallest `xi >= 0` whose
    /// minimal load fits, snapped onto the breakpoint the bisection isolates.
    fn cloudlet_price(&self, zeta: f64) -> f64 {
        let cap = self.capacity;
        if self.load_min(0.0, zeta) <= cap + FEAS_TOL {
            return 0.0;
        }
        let mut hi: f64 = 1.0;
        for n in 0..self.n() {
            if self.h[n] > 0.0 {
                for w in &self.w[n] {
                    hi = hi.max((w - self.coupling_price(n, 0.0, zeta)) / self.h[n] + 1.0);
                }
            }
        }
        let mut lo = 0.0;
        for _ in 0..MAX_BISECTIONS {
            if hi - lo <= PRICE_TOL {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.load_min(mid, zeta) > cap + FEAS_TOL {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // the jump sits at some w / h breakpoint inside [lo, hi]
        let mut best = hi;
        let mut best_dist = f64::INFINITY;
        for n in 0..self.n() {
            if self.h[n] <= 0.0 {
                continue;
            }
            let base = self.coupling_price(n, 0.0, zeta);
            for (w, l) in self.w[n].iter().zip(&self.lambda[n]) {
                if *l <= 0.0 {
                    continue;
                }
                let b = (w - base) / self.h[n];
                if b >= lo - 1e-9 && b <= hi + 1e-9 && self.load_min(b, zeta) <= cap + FEAS_TOL {
                    let d = (b - hi).abs();
                    if d < best_dist {
                        best = b;
                        best_dist = d;
                    }
                }
            }
        }
        best
    }

    /// Bandwidth used by the cloudlet-feasible optimum at bandwidth price
    /// `zeta`. Unique except at the finitely many kinks of the dual.
    fn bandwidth_usage(&self, zeta: f64) -> f64 {
        let bw = self.bandwidth.as_ref().expect("bandwidth row");
        let xi = self.cloudlet_price(zeta);
        let r = self.ranges(xi, zeta, TIE_TOL);
        let lows: Vec<f64> = r.iter().map(|x| x.0).collect();
        let v = if xi > 0.0 {
            let highs: Vec<f64> = r.iter().map(|x| x.1).collect();
            let (lo_load, hi_load) = (dot(&self.h, &lows), dot(&self.h, &highs));
            let theta = if hi_load > lo_load {
                ((self.capacity - lo_load) / (hi_load - lo_load)).clamp(0.0, 1.0)
            } else {
                0.0
            };
            r.iter().map(|(lo, hi)| lo + theta * (hi - lo)).collect()
        } else {
            lows
        };
        dot(&bw.ell, &v)
    }

    fn bandwidth_price(&self) -> f64 {
        let bw = self.bandwidth.as_ref().expect("bandwidth row");
        if self.bandwidth_usage(0.0) <= bw.capacity + FEAS_TOL {
            return 0.0;
        }
        let mut hi: f64 = 1.0;
        for n in 0..self.n() {
            if bw.ell[n] > 0.0 {
                for w in &self.w[n] {
                    hi = hi.max(w / bw.ell[n] + 1.0);
                }
            }
        }
        let mut lo = 0.0;
        for _ in 0..MAX_BISECTIONS {
            if hi - lo <= 1e-13 * hi.max(1.0) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.bandwidth_usage(mid) > bw.capacity + FEAS_TOL {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Optimal primal and dual solution of the static program.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub y_star: Vec<Vec<f64>>,
    pub f_star: f64,
    pub mu_star: Vec<f64>,
    pub xi_star: f64,
    pub zeta_star: Option<f64>,
    /// `-g(y*)` per row.
    pub slack: Vec<f64>,
}

impl OracleSolution {
    /// Multipliers in row order: devices, cloudlet, bandwidth.
    pub fn multipliers(&self) -> Vec<f64> {
        let mut v = self.mu_star.clone();
        v.push(self.xi_star);
        v.extend(self.zeta_star);
        v
    }
}

/// Solves the static program exactly.
pub fn solve_p1(problem: &StaticProblem) -> Result<OracleSolution, OracleError> {
    problem.validate()?;
    let n = problem.n();
    let (xi, zeta, tol) = match &problem.bandwidth {
        None => (problem.cloudlet_price(0.0), 0.0, TIE_TOL),
        Some(_) => {
            let zeta = problem.bandwidth_price();
            (problem.cloudlet_price(zeta), zeta, 1e-9)
        }
    };
    let ranges = problem.ranges(xi, zeta, tol);
    let volumes = resolve_volumes(problem, &ranges, xi, zeta)?;

    let mut y_star = Vec::with_capacity(n);
    let mut mu_star = Vec::with_capacity(n);
    for (dev, &volume) in volumes.iter().enumerate() {
        let price = problem.coupling_price(dev, xi, zeta);
        let y = problem.fill(dev, price, volume, tol);
        let cap = problem.power_cap(dev);
        let binding = cap.is_finite() && volume >= cap - 1e-12 * cap.max(1.0);
        let mu = if binding {
            y.iter()
                .zip(&problem.w[dev])
                .zip(&problem.lambda[dev])
                .filter(|((y, _), l)| **y < 1.0 && **l > 0.0)
                .map(|((_, w), _)| (w - price) / problem.o[dev])
                .fold(0.0, f64::max)
        } else {
            0.0
        };
        y_star.push(y);
        mu_star.push(mu);
    }
    let f_star = problem.objective(&y_star);
    let slack = problem
        .constraints(&y_star)
        .into_iter()
        .map(|g| 0.0 - g)
        .collect();
    Ok(OracleSolution {
        y_star,
        f_star,
        mu_star,
        xi_star: xi,
        zeta_star: problem.bandwidth.as_ref().map(|_| zeta),
        slack,
    })
}

/// Picks device volumes inside their optimal ranges so that every row with a
/// positive price holds with equality and the others are not violated.
fn resolve_volumes(
    problem: &StaticProblem,
    ranges: &[(f64, f64)],
    xi: f64,
    zeta: f64,
) -> Result<Vec<f64>, OracleError> {
    let n = problem.n();
    let lows: Vec<f64> = ranges.iter().map(|r| r.0).collect();
    let free: Vec<usize> = (0..n).filter(|&i| ranges[i].1 > ranges[i].0).collect();
    if free.is_empty() {
        return Ok(lows);
    }
    // coupling rows as (coefficients, capacity, active)
    let mut rows: Vec<(&[f64], f64, bool)> = vec![(&problem.h, problem.capacity, xi > 0.0)];
    if let Some(bw) = &problem.bandwidth {
        rows.push((&bw.ell, bw.capacity, zeta > 0.0));
    }
    let fits = |v: &[f64]| {
        rows.iter().all(|(a, cap, active)| {
            let load = dot(a, v);
            let scale = cap.max(1.0);
            if *active {
                (load - cap).abs() <= 1e-9 * scale
            } else {
                load <= cap + 1e-9 * scale
            }
        })
    };
    if rows.iter().all(|r| !r.2) {
        return Ok(lows);
    }
    // common proportional step along the single active row
    if let Some((a, cap, _)) = rows.iter().find(|r| r.2) {
        let lo_load = dot(a, &lows);
        let highs: Vec<f64> = ranges.iter().map(|r| r.1).collect();
        let hi_load = dot(a, &highs);
        let theta = if hi_load > lo_load {
            ((cap - lo_load) / (hi_load - lo_load)).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let v: Vec<f64> = ranges
            .iter()
            .map(|(lo, hi)| lo + theta * (hi - lo))
            .collect();
        if fits(&v) {
            return Ok(v);
        }
    }
    // vertex enumeration over the free devices
    let active: Vec<usize> = (0..rows.len()).filter(|&r| rows[r].2).collect();
    let k = free.len();
    if k > 20 {
        return Err(OracleError::Degenerate(k));
    }
    let basis_size = active.len().min(k);
    for basis in combinations(k, basis_size) {
        let others: Vec<usize> = (0..k).filter(|i| !basis.contains(i)).collect();
        for mask in 0u64..(1u64 << others.len()) {
            let mut v = lows.clone();
            for (bit, &oi) in others.iter().enumerate() {
                let dev = free[oi];
                v[dev] = if mask >> bit & 1 == 1 {
                    ranges[dev].1
                } else {
                    ranges[dev].0
                };
            }
            if let Some(sol) = solve_basis(&rows, &active, &basis, &free, &v) {
                let mut cand = v.clone();
                let mut ok = true;
                for (bi, &x) in basis.iter().zip(&sol) {
                    let dev = free[*bi];
                    let (lo, hi) = ranges[dev];
                    let slack = 1e-12 * hi.max(1.0);
                    if x < lo - slack || x > hi + slack {
                        ok = false;
                    }
                    cand[dev] = x.clamp(lo, hi);
                }
                if ok && fits(&cand) {
                    return Ok(cand);
                }
            }
        }
    }
    Err(OracleError::Degenerate(k))
}

fn combinations(k: usize, r: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, k: usize, r: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for i in start..k {
            cur.push(i);
            rec(i + 1, k, r, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, k, r, &mut Vec::new(), &mut out);
    out
}

/// Solves the active rows for the basis devices with everything else fixed.
fn solve_basis(
    rows: &[(&[f64], f64, bool)],
    active: &[usize],
    basis: &[usize],
    free: &[usize],
    fixed: &[f64],
) -> Option<Vec<f64>> {
    let mut rhs: Vec<f64> = active
        .iter()
        .map(|&r| {
            let (a, cap, _) = rows[r];
            let fixed_load: f64 = (0..fixed.len())
                .filter(|d| !basis.iter().any(|&b| free[b] == *d))
                .map(|d| a[d] * fixed[d])
                .sum();
            cap - fixed_load
        })
        .collect();
    let coef = |ri: usize, bi: usize| rows[active[ri]].0[free[basis[bi]]];
    match basis.len() {
        0 => rhs.iter().all(|r| r.abs() <= 1e-9).then(Vec::new),
        1 => {
            let a = coef(0, 0);
            if a == 0.0 {
                return None;
            }
            let x = rhs[0] / a;
            if active.len() == 2 {
                let other = coef(1, 0) * x;
                if (other - rhs[1]).abs() > 1e-9 * rhs[1].abs().max(1.0) {
                    return None;
                }
            }
            Some(vec![x])
        }
        _ => {
            let (a, b, c, d) = (coef(0, 0), coef(0, 1), coef(1, 0), coef(1, 1));
            let det = a * d - b * c;
            if det.abs() < 1e-14 {
                return None;
            }
            let (r0, r1) = (rhs.remove(0), rhs.remove(0));
            Some(vec![(r0 * d - b * r1) / det, (a * r1 - c * r0) / det])
        }
    }
}

fn grid_values(step: f64) -> Vec<f64> {
    let count = (1.0 / step + 1e-9).floor() as usize;
    let mut v: Vec<f64> = (0..=count).map(|k| (k as f64 * step).min(1.0)).collect();
    if *v.last().unwrap() < 1.0 {
        v.push(1.0);
    }
    v
}

/// Every grid point of one device's decision row that fits its power budget.
fn device_points(problem: &StaticProblem, n: usize, values: &[f64]) -> Vec<(f64, f64)> {
    let m = problem.m();
    let mut out = Vec::new();
    let mut idx = vec![0usize; m];
    loop {
        let mut volume = 0.0;
        let mut value = 0.0;
        for j in 0..m {
            let y = values[idx[j]];
            volume += problem.lambda[n][j] * y;
            value += problem.w[n][j] * problem.lambda[n][j] * y;
        }
        if problem.o[n] * volume <= problem.b[n] + FEAS_TOL * problem.b[n].max(1.0) {
            out.push((volume, value));
        }
        let mut j = 0;
        loop {
            if j == m {
                return out;
            }
            idx[j] += 1;
            if idx[j] < values.len() {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

/// Best objective over the grid `{0, step, 2 step, ..., 1}^(NM)`.
///
/// Enumerates every grid point; the last device is handled through its
/// value-by-volume frontier, which returns the same maximum as scanning it.
pub fn brute_force_p1(problem: &StaticProblem, step: f64) -> Result<f64, OracleError> {
    problem.validate()?;
    let vars = problem.n() * problem.m();
    if vars > 6 {
        return Err(OracleError::TooLarge(vars));
    }
    if !(step > 0.0 && step <= 0.5) {
        return Err(OracleError::BadStep(step));
    }
    let values = grid_values(step);
    let n = problem.n();
    let points: Vec<Vec<(f64, f64)>> = (0..n).map(|d| device_points(problem, d, &values)).collect();
    let last = n - 1;
    let mut frontier = points[last].clone();
    frontier.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best_prefix = Vec::with_capacity(frontier.len());
    let mut acc = f64::NEG_INFINITY;
    for p in &frontier {
        acc = acc.max(p.1);
        best_prefix.push(acc);
    }
    let search = Frontier {
        volumes: frontier.iter().map(|p| p.0).collect(),
        best: best_prefix,
    };
    let cap = problem.capacity;
    let bw = problem.bandwidth.as_ref();

    let explore = |first: &(f64, f64)| -> f64 {
        if n == 1 {
            return search.best_with(last_cap(problem, last, 0.0, 0.0));
        }
        let mut best = f64::NEG_INFINITY;
        let h0 = problem.h[0] * first.0;
        let l0 = bw.map_or(0.0, |b| b.ell[0] * first.0);
        descend(
            problem, &points, &search, 1, h0, l0, first.1, cap, &mut best,
        );
        best
    };
    let best = par::map(&points[0], explore)
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(best.max(0.0))
}

struct Frontier {
    volumes: Vec<f64>,
    best: Vec<f64>,
}

impl Frontier {
    fn best_with(&self, max_volume: f64) -> f64 {
        if max_volume < 0.0 {
            return f64::NEG_INFINITY;
        }
        let idx = self.volumes.partition_point(|v| *v <= max_volume);
        if idx == 0 {
            f64::NEG_INFINITY
        } else {
            self.best[idx - 1]
        }
    }
}

fn last_cap(problem: &StaticProblem, last: usize, load_h: f64, load_w: f64) -> f64 {
    let slack_h = problem.capacity - load_h + FEAS_TOL * problem.capacity.max(1.0);
    let mut cap = if problem.h[last] > 0.0 {
        slack_h / problem.h[last]
    } else if slack_h >= 0.0 {
        f64::INFINITY
    } else {
        -1.0
    };
    if let Some(bw) = &problem.bandwidth {
        let slack_w = bw.capacity - load_w + FEAS_TOL * bw.capacity.max(1.0);
        let c = if bw.ell[last] > 0.0 {
            slack_w / bw.ell[last]
        } else if slack_w >= 0.0 {
            f64::INFINITY
        } else {
            -1.0
        };
        cap = cap.min(c);
    }
    cap
}

#[allow(clippy::too_many_arguments)]
fn descend(
    problem: &StaticProblem,
    points: &[Vec<(f64, f64)>],
    last: &Frontier,
    dev: usize,
    load_h: f64,
    load_w: f64,
    value: f64,
    cap: f64,
    best: &mut f64,
) {
    let n = points.len();
    if dev == n - 1 {
        let v = last.best_with(last_cap(problem, dev, load_h, load_w));
        if v > f64::NEG_INFINITY {
            *best = best.max(value + v);
        }
        return;
    }
    for p in &points[dev] {
        let lh = load_h + problem.h[dev] * p.0;
        let lw = load_w + problem.bandwidth.as_ref().map_or(0.0, |b| b.ell[dev] * p.0);
        if lh > cap + FEAS_TOL * cap.max(1.0) {
            continue;
        }
        descend(
            problem,
            points,
            last,
            dev + 1,
            lh,
            lw,
            value + p.1,
            cap,
            best,
        );
    }
}

/// Radius of the box image of `g`: `sqrt(sum_r max(lo_r^2, hi_r^2))`.
///
/// Each row is linear with nonnegative coefficients, so its extremes over
/// `[0,1]^(NM)` are the all-zeros and all-ones corners.
pub fn sigma_g(problem: &StaticProblem) -> f64 {
    let n = problem.n();
    let totals: Vec<f64> = problem.lambda.iter().map(|r| r.iter().sum()).collect();
    let mut acc = 0.0;
    for d in 0..n {
        let lo = -problem.b[d];
        let hi = problem.o[d] * totals[d] - problem.b[d];
        acc += lo.powi(2).max(hi.powi(2));
    }
    let lo = -problem.capacity;
    let hi = dot(&problem.h, &totals) - problem.capacity;
    acc += lo.powi(2).max(hi.powi(2));
    if let Some(bw) = &problem.bandwidth {
        let lo = -bw.capacity;
        let hi = dot(&bw.ell, &totals) - bw.capacity;
        acc += lo.powi(2).max(hi.powi(2));
    }
    acc.sqrt()
}

/// Asymptotic optimality-gap allowance `alpha * sigma_g^2 / 2`.
pub fn theorem_bound(problem: &StaticProblem, alpha: f64) -> f64 {
    bound_from_sigma(sigma_g(problem), alpha)
}

pub fn bound_from_sigma(sigma_g: f64, alpha: f64) -> f64 {
    alpha * sigma_g * sigma_g / 2.0
}

/// Over-approximation of the ceiling on the dual-vector norm.
///
/// Uses the zero decision as the Slater point with slack `v`, bounds the
/// objective there by `f_max`, and drops the (nonnegative) perturbed dual
/// value, so the result is loose by construction.
pub fn dual_bound_ceiling(
    problem: &StaticProblem,
    alpha: f64,
    sigma_delta_max: f64,
) -> Result<f64, OracleError> {
    let v = problem.slater_slack();
    if v <= 0.0 {
        return Err(OracleError::DegenerateSlater(v));
    }
    Ok(ceiling_from_parts(
        problem.f_max(),
        v,
        alpha,
        sigma_g(problem),
        sigma_delta_max,
    ))
}

pub fn ceiling_from_parts(
    f_max: f64,
    slack: f64,
    alpha: f64,
    sigma_g: f64,
    sigma_delta: f64,
) -> f64 {
    let s = sigma_g + sigma_delta;
    f_max / slack + alpha * s * s / (2.0 * slack) + alpha * s
}

/// Bound on `||delta_t(y)||` over the box for the current running averages.
pub fn sigma_delta(problem: &StaticProblem, avg: &RunningAverages) -> f64 {
    let n = problem.n();
    let row = |constant: f64, coefs: &mut dyn Iterator<Item = f64>| -> f64 {
        let (mut pos, mut neg) = (0.0, 0.0);
        for c in coefs {
            if c > 0.0 {
                pos += c;
            } else {
                neg += c;
            }
        }
        (constant + pos).abs().max((constant + neg).abs())
    };
    let mut acc = 0.0;
    for d in 0..n {
        let mut coefs = (0..problem.m())
            .map(|j| avg.power_cost[d] * avg.arrivals[d][j] - problem.o[d] * problem.lambda[d][j]);
        let r = row(problem.b[d] - avg.budget[d], &mut coefs);
        acc += r * r;
    }
    let mut coefs = (0..n).flat_map(|d| {
        (0..problem.m()).map(move |j| {
            avg.compute_cost[d] * avg.arrivals[d][j] - problem.h[d] * problem.lambda[d][j]
        })
    });
    let r = row(problem.capacity - avg.capacity[0], &mut coefs);
    acc += r * r;
    if let (Some(bw), Some(w_bar)) = (&problem.bandwidth, avg.bandwidth) {
        let mut coefs = (0..n).flat_map(|d| {
            (0..problem.m()).map(move |j| bw.ell[d] * (avg.arrivals[d][j] - problem.lambda[d][j]))
        });
        let r = row(bw.capacity - w_bar, &mut coefs);
        acc += r * r;
    }
    acc.sqrt()
}

/// One cloudlet's terms in the multi-cloudlet program.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudletTerms {
    pub gain_scale: f64,
    pub cost_scale: f64,
    pub capacity: f64,
}

/// Static program with `K` cloudlets; each (device, interval) may be split
/// across cloudlets with total share at most one.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiCloudletProblem {
    pub base: StaticProblem,
    pub cloudlets: Vec<CloudletTerms>,
}

impl MultiCloudletProblem {
    /// The single-cloudlet program viewed as `K = 1`.
    pub fn single(base: StaticProblem) -> Self {
        let capacity = base.capacity;
        Self {
            base,
            cloudlets: vec![CloudletTerms {
                gain_scale: 1.0,
                cost_scale: 1.0,
                capacity,
            }],
        }
    }

    pub fn k(&self) -> usize {
        self.cloudlets.len()
    }

    /// `y[k][n][j]`.
    pub fn objective(&self, y: &[Vec<Vec<f64>>]) -> f64 {
        self.cloudlets
            .iter()
            .zip(y)
            .map(|(c, yk)| c.gain_scale * self.base.objective(yk))
            .sum()
    }

    /// Device rows, one row per cloudlet, then bandwidth.
    pub fn constraints(&self, y: &[Vec<Vec<f64>>]) -> Vec<f64> {
        let p = &self.base;
        let n = p.n();
        let vol: Vec<Vec<f64>> = y
            .iter()
            .map(|yk| (0..n).map(|d| p.volume(d, &yk[d])).collect())
            .collect();
        let total: Vec<f64> = (0..n).map(|d| vol.iter().map(|v| v[d]).sum()).collect();
        let mut g: Vec<f64> = (0..n).map(|d| p.o[d] * total[d] - p.b[d]).collect();
        for (c, v) in self.cloudlets.iter().zip(&vol) {
            g.push(c.cost_scale * dot(&p.h, v) - c.capacity);
        }
        if let Some(bw) = &p.bandwidth {
            g.push(dot(&bw.ell, &total) - bw.capacity);
        }
        g
    }
}

impl MultiCloudletProblem {
    /// The equivalent single-cloudlet program when `K = 1`.
    pub fn as_single(&self) -> Option<StaticProblem> {
        let [c] = self.cloudlets.as_slice() else {
            return None;
        };
        let mut p = self.base.clone();
        for row in &mut p.w {
            for w in row.iter_mut() {
                *w *= c.gain_scale;
            }
        }
        for h in &mut p.h {
            *h *= c.cost_scale;
        }
        p.capacity = c.capacity;
        Some(p)
    }

    pub fn f_max(&self) -> f64 {
        let scale = self
            .cloudlets
            .iter()
            .map(|c| c.gain_scale)
            .fold(0.0, f64::max);
        scale * self.base.f_max()
    }

    /// Box radius of `g` over all rows, as [`sigma_g`] for one cloudlet.
    pub fn sigma_g(&self) -> f64 {
        let p = &self.base;
        let totals: Vec<f64> = p.lambda.iter().map(|r| r.iter().sum()).collect();
        let sq = |lo: f64, hi: f64| lo.powi(2).max(hi.powi(2));
        let mut acc: f64 = (0..p.n())
            .map(|d| sq(-p.b[d], p.o[d] * totals[d] - p.b[d]))
            .sum();
        for c in &self.cloudlets {
            acc += sq(-c.capacity, c.cost_scale * dot(&p.h, &totals) - c.capacity);
        }
        if let Some(bw) = &p.bandwidth {
            acc += sq(-bw.capacity, dot(&bw.ell, &totals) - bw.capacity);
        }
        acc.sqrt()
    }
}

/// Grid search for the multi-cloudlet program (at most 6 variables).
pub fn brute_force_multi(problem: &MultiCloudletProblem, step: f64) -> Result<f64, OracleError> {
    problem.base.validate()?;
    let (n, m, k) = (problem.base.n(), problem.base.m(), problem.k());
    let vars = n * m * k;
    if vars > 6 {
        return Err(OracleError::TooLarge(vars));
    }
    if !(step > 0.0 && step <= 0.5) {
        return Err(OracleError::BadStep(step));
    }
    let values = grid_values(step);
    let count = values.len().pow(vars as u32);
    let idx: Vec<usize> = (0..values.len()).collect();
    let per_first = count / values.len();
    let best = par::map(&idx, |&first| {
        let mut best = f64::NEG_INFINITY;
        let mut y = vec![vec![vec![0.0; m]; n]; k];
        for rest in 0..per_first {
            let mut code = rest * values.len() + first;
            let mut share_ok = true;
            for kk in 0..k {
                for d in 0..n {
                    for j in 0..m {
                        y[kk][d][j] = values[code % values.len()];
                        code /= values.len();
                    }
                }
            }
            for d in 0..n {
                for j in 0..m {
                    if (0..k).map(|kk| y[kk][d][j]).sum::<f64>() > 1.0 + 1e-12 {
                        share_ok = false;
                    }
                }
            }
            if !share_ok {
                continue;
            }
            if problem.constraints(&y).iter().all(|g| *g <= FEAS_TOL) {
                best = best.max(problem.objective(&y));
            }
        }
        best
    })
    .into_iter()
    .fold(f64::NEG_INFINITY, f64::max);
    Ok(best.max(0.0))
}
