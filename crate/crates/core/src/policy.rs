//! Value function and the four feedback investment strategies.
//!
//! Every strategy is a dollar amount in the risky asset as a function of
//! current wealth `w` (and, for the drawdown-aware ones, maximum wealth `m`).
//! All of them share the Merton ratio `(mu - r)/sigma^2` as a factor.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::params::MarketParams;
use crate::scalar::{pow_pos, Scalar};
use crate::solver::{domain, DualFunction, GammaRoots, SolverError};

/// Current wealth, running maximum and drawdown time accumulated so far.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortfolioState<T> {
    pub w: T,
    pub m: T,
    pub x: T,
}

impl<T: Scalar> PortfolioState<T> {
    pub fn new(w: T, m: T, x: T) -> Result<Self, SolverError> {
        let s = Self { w, m, x };
        s.check()?;
        Ok(s)
    }

    pub fn check(&self) -> Result<(), SolverError> {
        if !(self.m > T::zero() && self.m.is_finite()) {
            return Err(domain("m", self.m));
        }
        if !(self.w >= T::zero() && self.w <= self.m) {
            return Err(domain("w", self.w));
        }
        if !(self.x >= T::zero() && self.x.is_finite()) {
            return Err(domain("x", self.x));
        }
        Ok(())
    }

    pub fn ratio(&self) -> T {
        self.w / self.m
    }
}

/// Investment rule to follow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StrategyKind<T> {
    /// Minimizes expected lifetime spent in drawdown.
    OptimalDrawdownTime,
    /// Minimizes the probability of lifetime ruin.
    RuinMin,
    /// Minimizes the probability of lifetime drawdown (defined only above `αm`).
    DrawdownProbMin,
    /// Minimizes occupation time of `[0, α·fixed_m]` for a ceiling that does not follow wealth.
    OccupationMin { fixed_m: T },
    /// Invests `theta · w`.
    ConstantFraction { theta: T },
}

impl<T: Scalar> StrategyKind<T> {
    /// Short label used in CSV output; round-trips through [`FromStr`] for `f64`.
    pub fn label(&self) -> String {
        match self {
            StrategyKind::OptimalDrawdownTime => "optimal".into(),
            StrategyKind::RuinMin => "ruin".into(),
            StrategyKind::DrawdownProbMin => "ddprob".into(),
            StrategyKind::OccupationMin { fixed_m } => format!("occupation:{fixed_m}"),
            StrategyKind::ConstantFraction { theta } => format!("const:{theta}"),
        }
    }
}

impl<T: Scalar> fmt::Display for StrategyKind<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown strategy `{0}` (expected optimal, ruin, ddprob, occupation[:m] or const:<theta>)")]
pub struct ParseStrategyError(String);

/// Parses `optimal`, `ruin`, `ddprob`, `occupation:<m>` and `const:<theta>`.
///
/// A bare `occupation` parses with `fixed_m = NaN`; callers substitute the
/// initial maximum via [`StrategyKind::with_default_ceiling`].
impl FromStr for StrategyKind<f64> {
    type Err = ParseStrategyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ParseStrategyError(s.to_string());
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let num = |a: Option<&str>| -> Result<f64, ParseStrategyError> {
            let v: f64 = a.ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(bad())
            }
        };
        match head.trim() {
            "optimal" if arg.is_none() => Ok(StrategyKind::OptimalDrawdownTime),
            "ruin" if arg.is_none() => Ok(StrategyKind::RuinMin),
            "ddprob" if arg.is_none() => Ok(StrategyKind::DrawdownProbMin),
            "occupation" => match arg {
                None => Ok(StrategyKind::OccupationMin { fixed_m: f64::NAN }),
                Some(_) => Ok(StrategyKind::OccupationMin { fixed_m: num(arg)? }),
            },
            "const" => Ok(StrategyKind::ConstantFraction { theta: num(arg)? }),
            _ => Err(bad()),
        }
    }
}

impl<T: Scalar> StrategyKind<T> {
    /// Fills an unset occupation ceiling with `m`.
    pub fn with_default_ceiling(self, m: T) -> Self {
        match self {
            StrategyKind::OccupationMin { fixed_m } if fixed_m.is_nan() => {
                StrategyKind::OccupationMin { fixed_m: m }
            }
            other => other,
        }
    }
}

fn check_pair<T: Scalar>(w: T, m: T) -> Result<(), SolverError> {
    if !(m > T::zero() && m.is_finite()) {
        return Err(domain("m", m));
    }
    if !(w > T::zero() && w <= m) {
        return Err(domain("w", w));
    }
    Ok(())
}

/// Minimum expected lifetime spent in drawdown, `ψ(w, m, x) = x + ζ(w/m)`.
///
/// On `w ≤ αm` the Legendre transform is explicit; above it the dual point is
/// found from the slope equation and plugged into the upper-branch expression.
pub fn value<T: Scalar>(d: &DualFunction<T>, s: &PortfolioState<T>) -> Result<T, SolverError> {
    s.check()?;
    let z = s.ratio();
    Ok(s.x + zeta(d, z)?)
}

/// `ζ(z)` from the explicit value formulas, `z ∈ [0, 1]`.
pub fn zeta<T: Scalar>(d: &DualFunction<T>, z: T) -> Result<T, SolverError> {
    if !(z >= T::zero() && z <= T::one()) {
        return Err(domain("z", z));
    }
    let GammaRoots { gamma1: g1, gamma2: g2, .. } = d.roots;
    let one = T::one();
    let alpha = d.alpha();
    let inv_lam = one / d.params.lam();
    if z <= alpha {
        if z == T::zero() {
            return Ok(inv_lam);
        }
        let exponent = -g2 / (one - g2);
        return Ok(inv_lam + (one - g2) / g2 * alpha * d.yalpha() * pow_pos(z / alpha, exponent));
    }
    let s = d.upper_log_ratio(z)?;
    let u1 = (g1 * s).exp();
    let u2 = (g2 * s).exp();
    Ok(d.y1() * d.roots.curvature_weight() * (u1 / g1 - u2 / g2))
}

/// Upper-branch optimal amount per unit of `m` at log dual ratio `s = ln(y/y₁)`.
#[inline]
fn upper_amount_per_m<T: Scalar>(d: &DualFunction<T>, s: T) -> T {
    let one = T::one();
    let e1 = ((d.roots.gamma1 - one) * s).exp();
    let e2 = ((d.roots.gamma2 - one) * s).exp();
    d.params.merton_ratio() * d.roots.curvature_weight() * (e1 - e2)
}

fn below_slope<T: Scalar>(p: &MarketParams<T>, roots: &GammaRoots<T>) -> T {
    p.merton_ratio() * (T::one() - roots.gamma2)
}

fn above_slope<T: Scalar>(p: &MarketParams<T>, roots: &GammaRoots<T>) -> T {
    p.merton_ratio() * (T::one() - roots.gamma1)
}

/// Limit of the optimal amount as `w ↑ αm` (linear drawdown formula).
pub fn policy_optimal_left_limit<T: Scalar>(d: &DualFunction<T>, w: T, m: T) -> Result<T, SolverError> {
    check_pair(w, m)?;
    Ok(below_slope(&d.params, &d.roots) * w)
}

/// Limit of the optimal amount as `w ↓ αm` (upper-branch formula evaluated at `w`).
pub fn policy_optimal_right_limit<T: Scalar>(d: &DualFunction<T>, w: T, m: T) -> Result<T, SolverError> {
    check_pair(w, m)?;
    let s = d.upper_log_ratio(w / m)?;
    Ok(m * upper_amount_per_m(d, s))
}

/// True when `w` sits exactly on the drawdown threshold `αm`, where `π*` jumps.
pub fn at_drawdown_boundary<T: Scalar>(d: &DualFunction<T>, w: T, m: T) -> bool {
    w == d.alpha() * m
}

/// Optimal dollar amount in the risky asset for `0 < w ≤ m`.
///
/// At exactly `w = αm` the right limit is returned (see [`at_drawdown_boundary`]).
pub fn policy_optimal<T: Scalar>(d: &DualFunction<T>, w: T, m: T) -> Result<T, SolverError> {
    check_pair(w, m)?;
    if w < d.alpha() * m {
        policy_optimal_left_limit(d, w, m)
    } else {
        policy_optimal_right_limit(d, w, m)
    }
}

/// Ruin-minimizing amount, proportional to wealth and independent of the ruin level.
pub fn policy_ruin<T: Scalar>(p: &MarketParams<T>, roots: &GammaRoots<T>, w: T) -> Result<T, SolverError> {
    if !(w > T::zero() && w.is_finite()) {
        return Err(domain("w", w));
    }
    Ok(above_slope(p, roots) * w)
}

/// Drawdown-probability-minimizing amount, defined for `αm < w ≤ m`.
pub fn policy_drawdown_prob<T: Scalar>(d: &DualFunction<T>, w: T, m: T) -> Result<T, SolverError> {
    check_pair(w, m)?;
    if w <= d.alpha() * m {
        return Err(domain("w", w));
    }
    policy_optimal_right_limit(d, w, m)
}

/// Occupation-time-minimizing amount for the fixed interval `[0, α·fixed_m]`.
///
/// The rule is undefined exactly at the ceiling; the upper slope is used there.
pub fn policy_occupation<T: Scalar>(
    p: &MarketParams<T>,
    roots: &GammaRoots<T>,
    w: T,
    fixed_m: T,
) -> Result<T, SolverError> {
    if !(w > T::zero() && w.is_finite()) {
        return Err(domain("w", w));
    }
    if !(fixed_m > T::zero() && fixed_m.is_finite()) {
        return Err(domain("fixed_m", fixed_m));
    }
    if w < p.alpha() * fixed_m {
        Ok(below_slope(p, roots) * w)
    } else {
        Ok(above_slope(p, roots) * w)
    }
}

pub fn policy_dispatch<T: Scalar>(
    kind: &StrategyKind<T>,
    d: &DualFunction<T>,
    w: T,
    m: T,
) -> Result<T, SolverError> {
    match *kind {
        StrategyKind::OptimalDrawdownTime => policy_optimal(d, w, m),
        StrategyKind::RuinMin => policy_ruin(&d.params, &d.roots, w),
        StrategyKind::DrawdownProbMin => policy_drawdown_prob(d, w, m),
        StrategyKind::OccupationMin { fixed_m } => policy_occupation(&d.params, &d.roots, w, fixed_m),
        StrategyKind::ConstantFraction { theta } => {
            if !theta.is_finite() {
                return Err(domain("theta", theta));
            }
            if !(w > T::zero() && w.is_finite()) {
                return Err(domain("w", w));
            }
            Ok(theta * w)
        }
    }
}

/// Optimal amount per unit of maximum wealth on `αm ≤ w ≤ m`, tabulated in `t = √(1 − w/m)`.
///
/// `π*/m` is an analytic function of `t` (not of `w/m`, whose inverse slope map
/// has a square-root singularity at `w = m`), so piecewise cubic Hermite
/// interpolation on a uniform `t` grid reproduces the root-finding route to
/// about machine precision while avoiding a root solve per call.
#[derive(Debug, Clone)]
struct UpperTable<T> {
    inv_h: T,
    last: usize,
    /// Per interval, the cubic in the local coordinate `θ ∈ [0, 1]`, lowest order first.
    coeffs: Vec<[T; 4]>,
}

const TABLE_START: usize = 256;
const TABLE_MAX: usize = 1 << 16;

/// `(π*/m, d(π*/m)/dt)` at `t = √(1 − z)`.
fn upper_node<T: Scalar>(d: &DualFunction<T>, t: T, at_end: bool) -> Result<(T, T), SolverError> {
    let one = T::one();
    let (a, b) = d.roots.slope_weights();
    let (c1, c2) = (d.roots.gamma1 - one, d.roots.gamma2 - one);
    let scale = d.params.merton_ratio() * d.roots.curvature_weight();
    let s = if at_end { d.log_ratio_span() } else { d.log_ratio_for_gap(t)? };
    let value = scale * ((c1 * s).exp_m1() - (c2 * s).exp_m1());
    let da_ds = scale * (c1 * (c1 * s).exp() - c2 * (c2 * s).exp());
    let ds_dt = if t == T::zero() {
        // 1 − ζ̂_y ≈ (1−γ₁)(1−γ₂) s²/2 near s = 0
        (T::lit(2.0) / ((one - d.roots.gamma1) * (one - d.roots.gamma2))).sqrt()
    } else {
        // d(1 − ζ̂_y)/ds with the cancelling linear terms removed
        let dd_ds = b * c2 * (c2 * s).exp_m1() - a * c1 * (c1 * s).exp_m1();
        T::lit(2.0) * t / dd_ds
    };
    Ok((value, da_ds * ds_dt))
}

impl<T: Scalar> UpperTable<T> {
    /// Doubles the grid until every interval midpoint matches the root-finding
    /// route to `1e−12` relative; `None` if that needs more than `TABLE_MAX` intervals.
    fn fit(d: &DualFunction<T>) -> Result<Option<Self>, SolverError> {
        let t_max = (T::one() - d.alpha()).sqrt();
        let mut n = TABLE_START;
        let mut nodes = (0..=n)
            .map(|i| upper_node(d, t_max * T::lit(i as f64 / n as f64), i == n))
            .collect::<Result<Vec<_>, _>>()?;
        loop {
            let table = Self::from_nodes(&nodes, t_max);
            let mids = (0..n)
                .map(|i| upper_node(d, t_max * T::lit((i as f64 + 0.5) / n as f64), false))
                .collect::<Result<Vec<_>, _>>()?;
            let peak = nodes.iter().fold(T::zero(), |acc, v| acc.max(v.0.abs()));
            let accurate = table.coeffs.iter().zip(&mids).all(|(c, &(exact, _))| {
                let mid = c[0] + T::lit(0.5) * (c[1] + T::lit(0.5) * (c[2] + T::lit(0.5) * c[3]));
                (mid - exact).abs() <= T::lit(1e-12) * exact.abs() + T::lit(1e-15) * peak
            });
            if accurate {
                return Ok(Some(table));
            }
            if n >= TABLE_MAX {
                return Ok(None);
            }
            let mut refined = Vec::with_capacity(2 * n + 1);
            for (node, mid) in nodes.iter().zip(&mids) {
                refined.push(*node);
                refined.push(*mid);
            }
            refined.push(nodes[n]);
            nodes = refined;
            n *= 2;
        }
    }

    fn from_nodes(nodes: &[(T, T)], t_max: T) -> Self {
        let n = nodes.len() - 1;
        let h = t_max / T::lit(n as f64);
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        let coeffs = nodes
            .windows(2)
            .map(|w| {
                let ((v0, d0), (v1, d1)) = (w[0], w[1]);
                let (d0, d1) = (h * d0, h * d1);
                let dv = v1 - v0;
                [v0, d0, three * dv - two * d0 - d1, d0 + d1 - two * dv]
            })
            .collect();
        Self {
            inv_h: T::one() / h,
            last: n - 1,
            coeffs,
        }
    }

    /// Interpolated `π*/m` at `z ∈ [α, 1]`.
    #[inline]
    fn amount_per_m(&self, z: T) -> T {
        let t = (T::one() - z).max(T::zero()).sqrt();
        let u = t * self.inv_h;
        let i = u.to_usize().unwrap_or(0).min(self.last);
        let th = u - T::lit(i as f64);
        let [c0, c1, c2, c3] = self.coeffs[i];
        c0 + th * (c1 + th * (c2 + th * c3))
    }
}

/// How a rule evaluates the upper branch of `π*`.
#[derive(Debug, Clone)]
enum UpperBranch<T> {
    Table(UpperTable<T>),
    /// Root finding per call, for solutions the table cannot resolve.
    Exact(DualFunction<T>),
}

/// A strategy specialized for repeated evaluation along simulated paths.
///
/// Agrees with [`policy_dispatch`] to `1e−12` relative; the upper branch of
/// `π*` is normally read from a precomputed table.
#[derive(Debug, Clone)]
pub struct FeedbackRule<T> {
    kind: StrategyKind<T>,
    alpha: T,
    below: T,
    above: T,
    upper: Option<UpperBranch<T>>,
}

impl<T: Scalar> FeedbackRule<T> {
    pub fn new(kind: StrategyKind<T>, dual: DualFunction<T>) -> Result<Self, SolverError> {
        match kind {
            StrategyKind::OccupationMin { fixed_m } if !(fixed_m > T::zero() && fixed_m.is_finite()) => {
                return Err(domain("fixed_m", fixed_m));
            }
            StrategyKind::ConstantFraction { theta } if !theta.is_finite() => {
                return Err(domain("theta", theta));
            }
            _ => {}
        }
        let upper = match kind {
            StrategyKind::OptimalDrawdownTime | StrategyKind::DrawdownProbMin => Some(match UpperTable::fit(&dual)? {
                Some(table) => UpperBranch::Table(table),
                None => UpperBranch::Exact(dual),
            }),
            _ => None,
        };
        Ok(Self {
            kind,
            alpha: dual.alpha(),
            below: below_slope(&dual.params, &dual.roots),
            above: above_slope(&dual.params, &dual.roots),
            upper,
        })
    }

    pub fn kind(&self) -> &StrategyKind<T> {
        &self.kind
    }

    /// Amount invested at `(w, m)` with `0 < w ≤ m`.
    #[inline]
    pub fn amount(&self, w: T, m: T) -> Result<T, SolverError> {
        match self.kind {
            StrategyKind::OptimalDrawdownTime => {
                if w < self.alpha * m {
                    Ok(self.below * w)
                } else {
                    Ok(m * self.upper(w / m)?)
                }
            }
            StrategyKind::DrawdownProbMin => {
                if w <= self.alpha * m {
                    Err(domain("w", w))
                } else {
                    Ok(m * self.upper(w / m)?)
                }
            }
            StrategyKind::RuinMin => Ok(self.above * w),
            StrategyKind::OccupationMin { fixed_m } => {
                if w < self.alpha * fixed_m {
                    Ok(self.below * w)
                } else {
                    Ok(self.above * w)
                }
            }
            StrategyKind::ConstantFraction { theta } => Ok(theta * w),
        }
    }

    #[inline]
    fn upper(&self, z: T) -> Result<T, SolverError> {
        match &self.upper {
            Some(UpperBranch::Table(table)) => Ok(table.amount_per_m(z)),
            Some(UpperBranch::Exact(d)) => Ok(upper_amount_per_m(d, d.upper_log_ratio(z)?)),
            None => unreachable!("upper branch exists for drawdown-aware strategies"),
        }
    }
}
