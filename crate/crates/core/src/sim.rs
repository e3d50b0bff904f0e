//! Monte Carlo estimation of expected lifetime spent in drawdown.
//!
//! Wealth follows `dW = [−(κ − r)W + (μ − r)π] dt + σπ dB`, discretized by
//! Euler–Maruyama and absorbed at zero. The running maximum and the drawdown
//! clock are updated after every step; the drawdown indicator and the
//! strategy are evaluated at the start of the step.
//!
//! Two estimators of `E[X_τ]` with an independent `Exp(λ)` lifetime `τ`:
//!
//! * [`Estimator::KilledLifetime`] samples `τ` and integrates the indicator up to it.
//! * [`Estimator::DiscountedOccupancy`] integrates `e^{−λs} 1{W_s ≤ αM_s}` up to a
//!   horizon, using `P(τ > s) = e^{−λs}` in place of sampling `τ`.
//!
//! Both weight each step's (left-endpoint) indicator by the exact survival
//! mass of the step, so they estimate the same discretized quantity.

use std::io::{self, Write};

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::MarketParams;
use crate::policy::{FeedbackRule, PortfolioState, StrategyKind};
use crate::rng::{path_rng, PathRng};
use crate::scalar::Scalar;
use crate::solver::{DualFunction, SolverError};

/// Paths per reduction chunk. Fixed so that sums do not depend on thread count.
const CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("ConfigError: {0}")]
    Config(String),
    #[error("PolicyError: {0}")]
    Policy(#[from] SolverError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Estimator {
    KilledLifetime,
    DiscountedOccupancy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig<T> {
    /// Euler step, years.
    pub dt: T,
    pub n_paths: usize,
    pub seed: u64,
    pub estimator: Estimator,
    /// Truncation time of the discounted estimator, years.
    pub horizon: T,
    pub initial: PortfolioState<T>,
}

impl<T: Scalar> SimConfig<T> {
    /// Default desk-scale run: `dt = 1e-3`, 200k paths, horizon `max(20/λ, 50)` years.
    pub fn desk(p: &MarketParams<T>, initial: PortfolioState<T>) -> Self {
        Self {
            dt: T::lit(1e-3),
            n_paths: 200_000,
            seed: 20_160_229,
            estimator: Estimator::DiscountedOccupancy,
            horizon: default_horizon(p.lam()),
            initial,
        }
    }

    pub fn validate(&self, p: &MarketParams<T>) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::Config(msg));
        if !(self.dt > T::zero() && self.dt.is_finite()) {
            return bad(format!("dt must be positive and finite, got {}", self.dt));
        }
        if self.n_paths == 0 {
            return bad("n_paths must be at least 1".into());
        }
        if self.estimator == Estimator::DiscountedOccupancy {
            if !self.horizon.is_finite() {
                return bad(format!("horizon must be finite, got {}", self.horizon));
            }
            if self.horizon * p.lam() < T::lit(20.0) {
                return bad(format!(
                    "horizon * lam = {} must be at least 20",
                    self.horizon * p.lam()
                ));
            }
        }
        self.initial
            .check()
            .map_err(|e| SimError::Config(format!("initial state: {e}")))
    }
}

pub fn default_horizon<T: Scalar>(lam: T) -> T {
    (T::lit(20.0) / lam).max(T::lit(50.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEstimate {
    /// Estimated expected lifetime spent in drawdown, years (includes `x₀`).
    pub mean: f64,
    pub std_err: f64,
    pub n_paths: usize,
    pub frac_absorbed: f64,
    /// Paths whose running maximum ended above `m₀(1 + 10σ√dt)`.
    pub frac_max_increased: f64,
}

/// One Euler–Maruyama step of `(w, m, x)` under investment `pi` and Brownian increment `dw`.
///
/// Wealth that would become nonpositive is set to zero and stays there.
#[inline]
pub fn step<T: Scalar>(
    p: &MarketParams<T>,
    state: PortfolioState<T>,
    pi: T,
    dw: T,
    dt: T,
) -> PortfolioState<T> {
    let PortfolioState { w, m, x } = state;
    let in_drawdown = w <= p.alpha() * m;
    let x = if in_drawdown { x + dt } else { x };
    if w == T::zero() {
        return PortfolioState { w, m, x };
    }
    let w_new = Dynamics::new(p).wealth_step(w, pi, dw, dt);
    PortfolioState {
        w: w_new,
        m: m.max(w_new),
        x,
    }
}

/// Wealth-equation coefficients, hoisted out of the step loop.
#[derive(Debug, Clone, Copy)]
struct Dynamics<T> {
    wealth_drift: T,
    excess_return: T,
    sigma: T,
}

impl<T: Scalar> Dynamics<T> {
    fn new(p: &MarketParams<T>) -> Self {
        Self {
            wealth_drift: -(p.kappa() - p.r()),
            excess_return: p.mu() - p.r(),
            sigma: p.sigma(),
        }
    }

    /// Wealth after one step from `w > 0`, floored at zero.
    #[inline(always)]
    fn wealth_step(&self, w: T, pi: T, dw: T, dt: T) -> T {
        let drift = self.wealth_drift * w + self.excess_return * pi;
        let w_new = w + drift * dt + self.sigma * pi * dw;
        assert!(w_new.is_finite(), "non-finite wealth after step (w = {w}, pi = {pi})");
        w_new.max(T::zero())
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct PathOutcome {
    value: f64,
    absorbed: bool,
    max_increased: bool,
}

/// Constants of one run, converted once.
struct PathKernel<T> {
    params: MarketParams<T>,
    rule: FeedbackRule<T>,
    dt: T,
    sqrt_dt: T,
    estimator: Estimator,
    n_steps: u64,
    step_survival: f64,
    step_mass: f64,
    max_tol: T,
    initial: PortfolioState<T>,
}

impl<T: Scalar> PathKernel<T> {
    fn new(cfg: &SimConfig<T>, kind: StrategyKind<T>, d: &DualFunction<T>) -> Result<Self, SimError> {
        cfg.validate(&d.params)?;
        let rule = FeedbackRule::new(kind, *d)?;
        let lam = d.params.lam().as_f64();
        let dt = cfg.dt.as_f64();
        let n_steps = match cfg.estimator {
            Estimator::DiscountedOccupancy => (cfg.horizon.as_f64() / dt).ceil() as u64,
            Estimator::KilledLifetime => u64::MAX,
        };
        let step_survival = (-lam * dt).exp();
        Ok(Self {
            params: d.params,
            rule,
            dt: cfg.dt,
            sqrt_dt: cfg.dt.sqrt(),
            estimator: cfg.estimator,
            n_steps,
            step_survival,
            // ∫_0^dt e^{−λs} ds
            step_mass: -(-lam * dt).exp_m1() / lam,
            max_tol: cfg.initial.m * (T::one() + T::lit(10.0) * d.params.sigma() * cfg.dt.sqrt()),
            initial: cfg.initial,
        })
    }

    /// Discounted estimator over a block of paths advanced in lockstep.
    ///
    /// Every path shares the step count and the survival weight, so the
    /// paths of a block run side by side and their independent dependency
    /// chains overlap. Each path keeps its own generator, so outcomes equal
    /// those of running the paths one at a time.
    fn discounted_block(&self, seed: u64, paths: std::ops::Range<usize>) -> Result<Vec<PathOutcome>, SimError> {
        let lam = self.params.lam().as_f64();
        let alpha = self.params.alpha();
        let dynamics = Dynamics::new(&self.params);
        let mut out = Vec::with_capacity(paths.len());
        let mut first = paths.start;
        while first < paths.end {
            let n = (first + LANES).min(paths.end) - first;
            let mut rngs: [PathRng; LANES] = std::array::from_fn(|l| path_rng(seed, (first + l) as u64));
            let mut w = [self.initial.w; LANES];
            let mut m = [self.initial.m; LANES];
            let mut occupancy = [0.0_f64; LANES];
            let mut absorbed = [false; LANES];
            let mut normals = [0.0_f64; LANES];
            let mut survival = 1.0_f64;
            for _ in 0..self.n_steps {
                // all draws first, so the update loop below runs without calls
                for (z, rng) in normals.iter_mut().zip(rngs.iter_mut()).take(n) {
                    *z = rng.sample(StandardNormal);
                }
                let next_survival = survival * self.step_survival;
                for l in 0..n {
                    if absorbed[l] {
                        continue;
                    }
                    if w[l] <= alpha * m[l] {
                        occupancy[l] += survival * self.step_mass;
                    }
                    let pi = self.rule.amount(w[l], m[l])?;
                    w[l] = dynamics.wealth_step(w[l], pi, T::lit(normals[l]) * self.sqrt_dt, self.dt);
                    m[l] = m[l].max(w[l]);
                    if w[l] == T::zero() {
                        // in drawdown for the rest of life
                        absorbed[l] = true;
                        occupancy[l] += next_survival / lam;
                    }
                }
                survival = next_survival;
            }
            for l in 0..n {
                out.push(PathOutcome {
                    value: self.initial.x.as_f64() + occupancy[l],
                    absorbed: absorbed[l],
                    max_increased: m[l] > self.max_tol,
                });
            }
            first += n;
        }
        Ok(out)
    }

    fn start(&self, slot: usize, seed: u64, path: u64) -> Lane<T> {
        let mut rng = path_rng(seed, path);
        let dt = self.dt.as_f64();
        let lifetime: f64 = rng.sample::<f64, _>(Exp1) / self.params.lam().as_f64();
        let budget = (lifetime / dt).floor() as u64;
        Lane {
            slot,
            rng,
            state: self.initial,
            n: 0,
            budget,
            lifetime,
            remainder: lifetime - budget as f64 * dt,
            occupancy: 0.0,
        }
    }

    /// Advances `lane` by one step; returns the outcome once the path is finished.
    #[inline(always)]
    fn tick(&self, lane: &mut Lane<T>) -> Result<Option<PathOutcome>, SimError> {
        let state = lane.state;
        let in_drawdown = state.w <= self.params.alpha() * state.m;
        if lane.n == lane.budget || state.w == T::zero() {
            return Ok(Some(self.finish(lane)));
        }
        if in_drawdown {
            lane.occupancy += self.dt.as_f64();
        }
        let pi = self.rule.amount(state.w, state.m)?;
        let z: f64 = lane.rng.sample(StandardNormal);
        lane.state = step(&self.params, state, pi, T::lit(z) * self.sqrt_dt, self.dt);
        lane.n += 1;
        Ok(None)
    }

    fn finish(&self, lane: &Lane<T>) -> PathOutcome {
        let state = lane.state;
        let mut occupancy = lane.occupancy;
        let mut absorbed = false;
        if lane.n < lane.budget {
            // absorbed before the lifetime ran out: in drawdown for the rest of it
            absorbed = true;
            occupancy += lane.lifetime - lane.n as f64 * self.dt.as_f64();
        } else if state.w <= self.params.alpha() * state.m {
            absorbed = state.w == T::zero();
            occupancy += lane.remainder;
        }
        PathOutcome {
            value: self.initial.x.as_f64() + occupancy,
            absorbed,
            max_increased: state.m > self.max_tol,
        }
    }

    /// Simulates paths `paths` and returns their outcomes in path order.
    fn run_paths(&self, seed: u64, paths: std::ops::Range<usize>) -> Result<Vec<PathOutcome>, SimError> {
        match self.estimator {
            Estimator::DiscountedOccupancy => self.discounted_block(seed, paths),
            Estimator::KilledLifetime => self.killed_lanes(seed, paths),
        }
    }

    /// Killed estimator. Lifetimes differ across paths, so a finished path's
    /// lane is refilled with the next path; as in the discounted case the
    /// interleaving does not change any path's outcome.
    fn killed_lanes(&self, seed: u64, paths: std::ops::Range<usize>) -> Result<Vec<PathOutcome>, SimError> {
        let first = paths.start;
        let mut out = vec![PathOutcome::default(); paths.len()];
        let mut next = paths.start;
        let mut lanes: Vec<Lane<T>> = Vec::with_capacity(LANES);
        while lanes.len() < LANES && next < paths.end {
            lanes.push(self.start(next - first, seed, next as u64));
            next += 1;
        }
        while !lanes.is_empty() {
            let mut i = 0;
            while i < lanes.len() {
                match self.tick(&mut lanes[i])? {
                    None => i += 1,
                    Some(outcome) => {
                        out[lanes[i].slot] = outcome;
                        if next < paths.end {
                            lanes[i] = self.start(next - first, seed, next as u64);
                            next += 1;
                        } else {
                            lanes.swap_remove(i);
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Paths advanced together by one thread.
const LANES: usize = 8;

struct Lane<T> {
    slot: usize,
    rng: PathRng,
    state: PortfolioState<T>,
    n: u64,
    budget: u64,
    lifetime: f64,
    remainder: f64,
    occupancy: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: usize,
    sum: f64,
    sum_sq: f64,
    absorbed: usize,
    max_increased: usize,
}

impl Moments {
    fn push(&mut self, o: &PathOutcome) {
        self.n += 1;
        self.sum += o.value;
        self.sum_sq += o.value * o.value;
        self.absorbed += o.absorbed as usize;
        self.max_increased += o.max_increased as usize;
    }

    fn merge(mut self, other: &Moments) -> Self {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self.absorbed += other.absorbed;
        self.max_increased += other.max_increased;
        self
    }

    fn mean_and_se(&self) -> (f64, f64) {
        let n = self.n as f64;
        let mean = self.sum / n;
        if self.n < 2 {
            return (mean, 0.0);
        }
        let var = ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        (mean, (var / n).sqrt())
    }

    fn estimate(&self) -> SimEstimate {
        let (mean, std_err) = self.mean_and_se();
        let n = self.n as f64;
        SimEstimate {
            mean,
            std_err,
            n_paths: self.n,
            frac_absorbed: self.absorbed as f64 / n,
            frac_max_increased: self.max_increased as f64 / n,
        }
    }
}

/// Runs `f` over path-index chunks in parallel and returns per-chunk results in order.
fn chunked<R, F>(n_paths: usize, f: F) -> Result<Vec<R>, SimError>
where
    R: Send,
    F: Fn(std::ops::Range<usize>) -> Result<R, SimError> + Sync,
{
    let n_chunks = n_paths.div_ceil(CHUNK);
    (0..n_chunks)
        .into_par_iter()
        .map(|c| f(c * CHUNK..((c + 1) * CHUNK).min(n_paths)))
        .collect()
}

/// Estimates expected lifetime spent in drawdown under one strategy.
pub fn run<T: Scalar>(
    cfg: &SimConfig<T>,
    kind: StrategyKind<T>,
    d: &DualFunction<T>,
) -> Result<SimEstimate, SimError> {
    let kernel = PathKernel::new(cfg, kind, d)?;
    let chunks = chunked(cfg.n_paths, |paths| {
        let mut acc = Moments::default();
        for outcome in kernel.run_paths(cfg.seed, paths)? {
            acc.push(&outcome);
        }
        Ok(acc)
    })?;
    let total = chunks.iter().fold(Moments::default(), |a, c| a.merge(c));
    Ok(total.estimate())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyEstimate {
    pub strategy: String,
    pub estimate: SimEstimate,
}

/// Mean and standard error of `mean(first) − mean(second)` over paired paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedDifference {
    pub first: String,
    pub second: String,
    pub mean: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub estimates: Vec<StrategyEstimate>,
    /// One entry per unordered pair `(i, j)`, `i < j`, in strategy order.
    pub differences: Vec<PairedDifference>,
}

impl Comparison {
    pub fn difference(&self, first: usize, second: usize) -> Option<&PairedDifference> {
        let k = self.estimates.len();
        if first >= second || second >= k {
            return None;
        }
        // row-major index into the strict upper triangle
        let idx = first * (2 * k - first - 1) / 2 + (second - first - 1);
        self.differences.get(idx)
    }
}

/// Simulates several strategies on common random numbers.
///
/// Every strategy re-creates the same `(seed, path)` generator, so all of
/// them see identical lifetimes and Brownian increments path by path.
pub fn compare<T: Scalar>(
    cfg: &SimConfig<T>,
    kinds: &[StrategyKind<T>],
    d: &DualFunction<T>,
) -> Result<Comparison, SimError> {
    if kinds.len() < 2 {
        return Err(SimError::Config("compare needs at least two strategies".into()));
    }
    let kernels = kinds
        .iter()
        .map(|k| PathKernel::new(cfg, *k, d))
        .collect::<Result<Vec<_>, _>>()?;
    let k = kinds.len();
    let n_pairs = k * (k - 1) / 2;

    #[derive(Clone)]
    struct Acc {
        each: Vec<Moments>,
        diffs: Vec<Moments>,
    }
    let chunks = chunked(cfg.n_paths, |paths| {
        let mut acc = Acc {
            each: vec![Moments::default(); k],
            diffs: vec![Moments::default(); n_pairs],
        };
        let runs = kernels
            .iter()
            .map(|kernel| kernel.run_paths(cfg.seed, paths.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        for p in 0..paths.len() {
            let values: Vec<PathOutcome> = runs.iter().map(|r| r[p]).collect();
            for (m, v) in acc.each.iter_mut().zip(&values) {
                m.push(v);
            }
            let mut idx = 0;
            for i in 0..k {
                for j in (i + 1)..k {
                    acc.diffs[idx].push(&PathOutcome {
                        value: values[i].value - values[j].value,
                        ..Default::default()
                    });
                    idx += 1;
                }
            }
        }
        Ok(acc)
    })?;
    let mut each = vec![Moments::default(); k];
    let mut diffs = vec![Moments::default(); n_pairs];
    for c in &chunks {
        for (a, b) in each.iter_mut().zip(&c.each) {
            *a = a.merge(b);
        }
        for (a, b) in diffs.iter_mut().zip(&c.diffs) {
            *a = a.merge(b);
        }
    }
    let labels: Vec<String> = kinds.iter().map(|k| k.label()).collect();
    let estimates = labels
        .iter()
        .zip(&each)
        .map(|(l, m)| StrategyEstimate {
            strategy: l.clone(),
            estimate: m.estimate(),
        })
        .collect();
    let mut differences = Vec::with_capacity(n_pairs);
    let mut idx = 0;
    for i in 0..k {
        for j in (i + 1)..k {
            let (mean, std_err) = diffs[idx].mean_and_se();
            differences.push(PairedDifference {
                first: labels[i].clone(),
                second: labels[j].clone(),
                mean,
                std_err,
            });
            idx += 1;
        }
    }
    Ok(Comparison {
        estimates,
        differences,
    })
}

pub const CSV_HEADER: &str = "strategy,mean,std_err,n_paths,frac_absorbed,frac_max_increased";

/// Writes estimates as CSV with a fixed header and `.` decimal separator.
pub fn write_csv<W: Write>(rows: &[StrategyEstimate], mut out: W) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for row in rows {
        let e = &row.estimate;
        writeln!(
            out,
            "{},{:e},{:e},{},{:e},{:e}",
            row.strategy, e.mean, e.std_err, e.n_paths, e.frac_absorbed, e.frac_max_increased
        )?;
    }
    Ok(())
}
