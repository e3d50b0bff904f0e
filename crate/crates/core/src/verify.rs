//! Numerical certification of the analytic solution.
//!
//! Every check evaluates a defining identity of the solution on a grid and
//! reports one number per entry: either a residual that must stay at or below
//! its tolerance, or a margin that must stay above its threshold. A check that
//! cannot be evaluated (a solver error on some grid point) reports `NaN` and fails.

use serde::{Deserialize, Serialize};

use crate::params::MarketParams;
use crate::policy::{
    policy_drawdown_prob, policy_occupation, policy_optimal, policy_optimal_left_limit, policy_optimal_right_limit,
    policy_ruin, StrategyKind,
};
use crate::scalar::Scalar;
use crate::sim::{self, SimConfig, SimError};
use crate::solver::{DualFunction, SolverError};

/// How an entry's value is compared with its tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    /// Residual: passes when `value ≤ tolerance`.
    AtMost,
    /// Margin: passes when `value > tolerance`.
    Above,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckEntry {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub bound: Bound,
    pub pass: bool,
}

impl CheckEntry {
    pub fn residual(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_owned(),
            value,
            tolerance,
            bound: Bound::AtMost,
            pass: value <= tolerance,
        }
    }

    pub fn margin(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.to_owned(),
            value,
            tolerance: threshold,
            bound: Bound::Above,
            pass: value > threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    /// True exactly when every entry passes.
    pub pass: bool,
    pub entries: Vec<CheckEntry>,
}

impl VerificationReport {
    pub fn new(entries: Vec<CheckEntry>) -> Self {
        Self {
            pass: entries.iter().all(|e| e.pass),
            entries,
        }
    }

    pub fn entry(&self, name: &str) -> Option<&CheckEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckEntry> {
        self.entries.iter().filter(|e| !e.pass)
    }
}

/// Grid sizes used by [`full_report`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grids {
    /// Points of the `z` grid for the reduced equation.
    pub bvp_z: usize,
    /// Points of the log `y` grid for the dual equation.
    pub fbp_y: usize,
    pub legendre_z: usize,
    pub legendre_y: usize,
    pub hjb_z: usize,
    /// Perturbed amounts per `z`, spread evenly over `±50%` of the optimum.
    pub hjb_perturbations: usize,
    pub ordering_w: usize,
    pub ordering_m: Vec<f64>,
}

impl Default for Grids {
    fn default() -> Self {
        Self {
            bvp_z: 500,
            fbp_y: 500,
            legendre_z: 100,
            legendre_y: 10_000,
            hjb_z: 100,
            hjb_perturbations: 21,
            ordering_w: 200,
            ordering_m: vec![0.25, 0.5, 1.0, 2.0, 10.0],
        }
    }
}

/// Relative half-width of the windows excluded around `z = α`, `z = 1` and `y = y_α`.
pub const EXCLUSION: f64 = 1e-4;

const IDENTITY_TOL: f64 = 1e-8;
const ROOT_TOL: f64 = 1e-12;
const BOUNDARY_TOL: f64 = 1e-10;
const FBP_TOL: f64 = 1e-9;
const LEGENDRE_TOL: f64 = 1e-5;
const ORDER_TOL: f64 = 1e-12;
const MC_SIGMAS: f64 = 3.0;

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid<T: Scalar>(lo: T, hi: T, n: usize) -> Vec<T> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    let last = T::lit((n - 1) as f64);
    (0..n)
        .map(|i| {
            // exp(ln x) need not round-trip, and the endpoints are often boundaries
            if i == 0 {
                lo
            } else if i == n - 1 {
                hi
            } else {
                (a + (b - a) * T::lit(i as f64) / last).exp()
            }
        })
        .collect()
}

/// `z = i/(n+1)`, `i = 1..=n`, without the exclusion windows around `α` and `1`.
pub fn interior_z_grid<T: Scalar>(n: usize, alpha: T) -> Vec<T> {
    let window = T::lit(EXCLUSION);
    let step = T::one() / T::lit((n + 1) as f64);
    (1..=n)
        .map(|i| T::lit(i as f64) * step)
        .filter(|&z| (z - alpha).abs() > window * alpha && T::one() - z > window)
        .collect()
}

/// Largest value, or `NaN` if any point failed to evaluate.
fn worst<I>(values: I) -> f64
where
    I: IntoIterator<Item = Result<f64, SolverError>>,
{
    let mut acc = f64::NEG_INFINITY;
    for v in values {
        match v {
            Ok(v) if !v.is_nan() => acc = acc.max(v),
            _ => return f64::NAN,
        }
    }
    acc
}

/// Smallest value, or `NaN` if any point failed to evaluate.
fn least<I>(values: I) -> f64
where
    I: IntoIterator<Item = Result<f64, SolverError>>,
{
    -worst(values.into_iter().map(|v| v.map(|x| -x)))
}

pub fn check_roots<T: Scalar>(d: &DualFunction<T>) -> Vec<CheckEntry> {
    let (product, sum) = d.roots.vieta_residuals(&d.params);
    let (g1, g2) = (d.roots.gamma1.as_f64(), d.roots.gamma2.as_f64());
    vec![
        CheckEntry::residual("roots.vieta_product", product.as_f64(), ROOT_TOL),
        CheckEntry::residual("roots.vieta_sum", sum.as_f64(), ROOT_TOL),
        CheckEntry::margin("roots.gamma1_in_unit_interval", g1.min(1.0 - g1), 0.0),
        CheckEntry::margin("roots.gamma2_negative", -g2, 0.0),
    ]
}

pub fn check_boundaries<T: Scalar>(d: &DualFunction<T>) -> Vec<CheckEntry> {
    let g = d.diagnostics();
    vec![
        CheckEntry::residual("boundary.ratio_equation", g.y1alpha_residual, ROOT_TOL),
        CheckEntry::residual("boundary.continuity", g.continuity_rel, BOUNDARY_TOL),
        CheckEntry::residual("boundary.slope_continuity", g.slope_continuity, BOUNDARY_TOL),
        CheckEntry::residual("boundary.smooth_fit_slope", g.smooth_fit_slope_y1, BOUNDARY_TOL),
        CheckEntry::residual("boundary.smooth_fit_curvature", g.smooth_fit_curvature_y1, BOUNDARY_TOL),
        CheckEntry::residual("boundary.slope_at_yalpha", g.slope_at_yalpha, BOUNDARY_TOL),
    ]
}

/// Dual equation residual on `n` log-spaced points in `[y₁(1 + 1e−6), 50 y_α]`, skipping the `y_α` window.
pub fn check_fbp<T: Scalar>(d: &DualFunction<T>, n: usize) -> CheckEntry {
    let ya = d.yalpha();
    let window = T::lit(EXCLUSION);
    let grid = log_grid(d.y1() * T::lit(1.0 + 1e-6), ya * T::lit(50.0), n);
    let max = worst(
        grid.into_iter()
            .filter(|&y| (y / ya - T::one()).abs() > window)
            .map(|y| d.ode_residual(y).map(|r| r.abs().as_f64())),
    );
    CheckEntry::residual("fbp.residual", max, FBP_TOL)
}

/// Residual of the reduced equation `λζ + (κ−r)zζ_z + δζ_z²/ζ_zz − 1{z ≤ α}` at `z`.
pub fn bvp_residual<T: Scalar>(d: &DualFunction<T>, z: T) -> Result<T, SolverError> {
    let p = &d.params;
    let pt = d.primal(z)?;
    let indicator = if z <= d.alpha() { T::one() } else { T::zero() };
    Ok(p.lam() * pt.zeta + (p.kappa() - p.r()) * z * pt.zeta_z + d.roots.delta * pt.zeta_z * pt.zeta_z / pt.zeta_zz
        - indicator)
}

/// Reduced equation on `grid`; grid points inside the exclusion windows are skipped.
pub fn check_bvp<T: Scalar>(d: &DualFunction<T>, grid: &[T]) -> CheckEntry {
    let alpha = d.alpha();
    let window = T::lit(EXCLUSION);
    let max = worst(
        grid.iter()
            .filter(|&&z| (z - alpha).abs() > window * alpha && T::one() - z > window)
            .map(|&z| bvp_residual(d, z).map(|r| r.abs().as_f64())),
    );
    CheckEntry::residual("bvp.residual", max, IDENTITY_TOL)
}

/// The two boundary behaviours of the reduced equation: `ζ(0⁺) = 1/λ` and `ζ_zz → ∞` as `z → 1⁻`.
///
/// `ζ(z) − 1/λ` vanishes like `z^{γ₂/(γ₂−1)}`, so the limit is taken at
/// `z = 1e−16`; `ζ_zz` grows like `(1 − z)^{−1/2}` and is compared with its
/// value at `z = 1/2` at `1 − z = 1e−10`.
pub fn check_bvp_limits<T: Scalar>(d: &DualFunction<T>) -> Vec<CheckEntry> {
    let inv_lam = T::one() / d.params.lam();
    let at_zero = d
        .primal(T::lit(1e-16))
        .map(|p| (p.zeta - inv_lam).abs().as_f64())
        .unwrap_or(f64::NAN);
    let growth = match (d.primal(T::one() - T::lit(1e-10)), d.primal(T::lit(0.5))) {
        (Ok(near), Ok(mid)) => (near.zeta_zz / mid.zeta_zz).as_f64(),
        _ => f64::NAN,
    };
    vec![
        CheckEntry::residual("bvp.zeta_at_zero", at_zero, BOUNDARY_TOL),
        CheckEntry::margin("bvp.curvature_divergence", growth, 1e4),
    ]
}

/// Grid maximization of `ζ̂(y) − yz` against the inverted transform.
///
/// Also checks that the maximizer sits at the first grid point for `z = 1`
/// and within one cell of `y_α` for `z = α`.
pub fn check_legendre<T: Scalar>(d: &DualFunction<T>, zs: &[T], ys: &[T]) -> Vec<CheckEntry> {
    let hat: Result<Vec<T>, SolverError> = ys.iter().map(|&y| d.zeta_hat(y)).collect();
    let Ok(hat) = hat else {
        return vec![
            CheckEntry::residual("legendre.max_gap", f64::NAN, LEGENDRE_TOL),
            CheckEntry::residual("legendre.argmax_at_one", f64::NAN, 0.0),
            CheckEntry::residual("legendre.argmax_at_alpha", f64::NAN, 1.0),
        ];
    };
    let argmax = |z: T| -> (usize, T) {
        let mut best = (0, T::neg_infinity());
        for (i, (&y, &h)) in ys.iter().zip(&hat).enumerate() {
            let v = h - y * z;
            if v > best.1 {
                best = (i, v);
            }
        }
        best
    };
    let gap = worst(zs.iter().map(|&z| {
        let (_, grid_max) = argmax(z);
        d.primal(z).map(|p| (p.zeta - grid_max).abs().as_f64())
    }));
    let (at_one, _) = argmax(T::one());
    let (at_alpha, _) = argmax(d.alpha());
    // grid cell containing y_α
    let cell = ys.partition_point(|&y| y < d.yalpha());
    let cells_off = (at_alpha as f64 - cell as f64).abs().min((at_alpha as f64 - cell as f64 + 1.0).abs());
    vec![
        CheckEntry::residual("legendre.max_gap", gap, LEGENDRE_TOL),
        CheckEntry::residual("legendre.argmax_at_one", at_one as f64, 0.0),
        CheckEntry::residual("legendre.argmax_at_alpha", cells_off, 1.0),
    ]
}

/// `L^π ζ` at `(z, 1)`: `(−(κ−r)z + (μ−r)π)ζ_z + ½σ²π²ζ_zz − λζ + 1{z ≤ α}`.
pub fn hamiltonian<T: Scalar>(d: &DualFunction<T>, z: T, pi: T) -> Result<T, SolverError> {
    let p = &d.params;
    let pt = d.primal(z)?;
    let indicator = if z <= d.alpha() { T::one() } else { T::zero() };
    let drift = -(p.kappa() - p.r()) * z + (p.mu() - p.r()) * pi;
    Ok(drift * pt.zeta_z + T::lit(0.5) * p.sigma() * p.sigma() * pi * pi * pt.zeta_zz - p.lam() * pt.zeta + indicator)
}

/// Minimization of the Hamiltonian by the feedback amount, at `m = 1`.
pub fn check_hjb_minimizer<T: Scalar>(d: &DualFunction<T>, grid: &[T], perturbations: usize) -> Vec<CheckEntry> {
    let alpha = d.alpha();
    let window = T::lit(EXCLUSION);
    let zs: Vec<T> = grid
        .iter()
        .copied()
        .filter(|&z| (z - alpha).abs() > window * alpha && T::one() - z > window)
        .collect();
    let half = perturbations / 2;
    let factor = |j: usize| {
        if perturbations < 2 {
            T::one()
        } else {
            T::lit(0.5 + j as f64 / (perturbations - 1) as f64)
        }
    };
    let mut at_optimum = Vec::new();
    let mut lowest = Vec::new();
    let mut argmin_offset = Vec::new();
    let mut at_zero = Vec::new();
    let mut quadratic = Vec::new();
    for &z in &zs {
        let eval = || -> Result<(T, T, usize, T, T), SolverError> {
            let pi = policy_optimal(d, z, T::one())?;
            let h_opt = hamiltonian(d, z, pi)?;
            let mut min = (0, T::infinity());
            for j in 0..perturbations {
                let h = hamiltonian(d, z, pi * factor(j))?;
                if h < min.1 {
                    min = (j, h);
                }
            }
            let h_zero = hamiltonian(d, z, T::zero())?;
            // L^{2π*} − L^{π*} = ½σ²π*²ζ_zz = δζ_z²/ζ_zz
            let pt = d.primal(z)?;
            let predicted = d.roots.delta * pt.zeta_z * pt.zeta_z / pt.zeta_zz;
            let doubled = hamiltonian(d, z, pi + pi)? - h_opt;
            Ok((h_opt, min.1, min.0, h_zero, (doubled - predicted).abs()))
        };
        let r = eval();
        at_optimum.push(r.as_ref().map(|v| v.0.abs().as_f64()).map_err(Clone::clone));
        lowest.push(r.as_ref().map(|v| v.1.as_f64()).map_err(Clone::clone));
        argmin_offset.push(r.as_ref().map(|v| v.2.abs_diff(half) as f64).map_err(Clone::clone));
        at_zero.push(r.as_ref().map(|v| v.3.as_f64()).map_err(Clone::clone));
        quadratic.push(r.map(|v| v.4.as_f64()));
    }
    vec![
        CheckEntry::residual("hjb.at_optimum", worst(at_optimum), IDENTITY_TOL),
        CheckEntry::margin("hjb.min_over_perturbations", least(lowest), -IDENTITY_TOL),
        CheckEntry::residual("hjb.argmin_offset", worst(argmin_offset), 0.0),
        CheckEntry::margin("hjb.zero_investment", least(at_zero), -IDENTITY_TOL),
        CheckEntry::residual("hjb.doubled_investment_margin", worst(quadratic), IDENTITY_TOL),
    ]
}

/// Orderings of the four strategies and the jump of `π*` at the drawdown boundary.
///
/// Below `αm`: `π* = π^o > π^r`. Above: `π* = π^d < π^o = π^r`. All
/// comparisons are relative to `π^r`.
pub fn check_orderings<T: Scalar>(d: &DualFunction<T>, n_w: usize, ms: &[T]) -> Vec<CheckEntry> {
    let alpha = d.alpha();
    let gap = T::lit(1e-9);
    let mut below_equal = Vec::new();
    let mut below_strict = Vec::new();
    let mut above_equal = Vec::new();
    let mut above_strict = Vec::new();
    let mut jump = Vec::new();
    for &m in ms {
        for i in 1..=n_w {
            let w = m * T::lit(i as f64) / T::lit(n_w as f64);
            let rel = |a: T, b: T, scale: T| ((a - b) / scale).as_f64();
            if w < alpha * m * (T::one() - gap) {
                let r = (|| {
                    let star = policy_optimal(d, w, m)?;
                    let occ = policy_occupation(&d.params, &d.roots, w, m)?;
                    let ruin = policy_ruin(&d.params, &d.roots, w)?;
                    Ok((rel(star, occ, ruin).abs(), rel(occ, ruin, ruin)))
                })();
                below_equal.push(r.map(|v: (f64, f64)| v.0));
                below_strict.push(r.map(|v| v.1));
            } else if w > alpha * m * (T::one() + gap) {
                let r = (|| {
                    let star = policy_optimal(d, w, m)?;
                    let dd = policy_drawdown_prob(d, w, m)?;
                    let occ = policy_occupation(&d.params, &d.roots, w, m)?;
                    let ruin = policy_ruin(&d.params, &d.roots, w)?;
                    let equal = rel(star, dd, ruin).abs().max(rel(occ, ruin, ruin).abs());
                    Ok((equal, rel(ruin, star, ruin)))
                })();
                above_equal.push(r.map(|v: (f64, f64)| v.0));
                above_strict.push(r.map(|v| v.1));
            }
        }
        let w = alpha * m;
        jump.push((|| {
            let left = policy_optimal_left_limit(d, w, m)?;
            let right = policy_optimal_right_limit(d, w, m)?;
            Ok(((left - right) / left).as_f64())
        })());
    }
    vec![
        CheckEntry::residual("ordering.below_optimal_equals_occupation", worst(below_equal), ORDER_TOL),
        CheckEntry::margin("ordering.below_occupation_exceeds_ruin", least(below_strict), ORDER_TOL),
        CheckEntry::residual("ordering.above_equalities", worst(above_equal), ORDER_TOL),
        CheckEntry::margin("ordering.above_ruin_exceeds_optimal", least(above_strict), ORDER_TOL),
        CheckEntry::margin("ordering.jump_at_boundary", least(jump), ORDER_TOL),
    ]
}

/// Monte Carlo estimate under `π*` against the analytic value, in standard errors.
pub fn check_simulation<T: Scalar>(d: &DualFunction<T>, cfg: &SimConfig<T>) -> Result<CheckEntry, SimError> {
    let est = sim::run(cfg, StrategyKind::OptimalDrawdownTime, d)?;
    let exact = crate::policy::value(d, &cfg.initial)?.as_f64();
    let score = if est.std_err > 0.0 {
        (est.mean - exact).abs() / est.std_err
    } else if est.mean == exact {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(CheckEntry::residual("mc.standard_errors_from_value", score, MC_SIGMAS))
}

/// Every check on `d`, plus the simulation cross-check when `sim` is given.
///
/// Entries appear in a fixed order; a simulation that cannot run is an error,
/// not a failed entry.
pub fn report_for<T: Scalar>(
    d: &DualFunction<T>,
    grids: &Grids,
    sim: Option<&SimConfig<T>>,
) -> Result<VerificationReport, SimError> {
    let ms: Vec<T> = grids.ordering_m.iter().map(|&m| T::lit(m)).collect();
    let legendre_z: Vec<T> = (1..=grids.legendre_z)
        .map(|i| T::lit(i as f64) / T::lit(grids.legendre_z as f64))
        .collect();
    let legendre_y = log_grid(d.y1(), d.yalpha() * T::lit(1e3), grids.legendre_y);

    let mut entries = check_roots(d);
    entries.extend(check_boundaries(d));
    entries.push(check_fbp(d, grids.fbp_y));
    entries.push(check_bvp(d, &interior_z_grid(grids.bvp_z, d.alpha())));
    entries.extend(check_bvp_limits(d));
    entries.extend(check_legendre(d, &legendre_z, &legendre_y));
    entries.extend(check_hjb_minimizer(
        d,
        &interior_z_grid(grids.hjb_z, d.alpha()),
        grids.hjb_perturbations,
    ));
    entries.extend(check_orderings(d, grids.ordering_w, &ms));
    if let Some(cfg) = sim {
        entries.push(check_simulation(d, cfg)?);
    }
    Ok(VerificationReport::new(entries))
}

/// Solves for `params` and runs [`report_for`].
pub fn full_report<T: Scalar>(
    params: MarketParams<T>,
    grids: &Grids,
    sim: Option<&SimConfig<T>>,
) -> Result<VerificationReport, SimError> {
    let d = DualFunction::new(params)?;
    report_for(&d, grids, sim)
}
