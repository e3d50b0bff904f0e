//! Closed-form solution of the dual free-boundary problem and its Legendre inversion.
//!
//! The dual function `ζ̂` lives on `[y₁, ∞)` and solves
//!
//! ```text
//! λ ζ̂ + (r − κ − λ) y ζ̂_y − δ y² ζ̂_yy = 1{y ≥ y_α}
//! ζ̂_y(y₁) = 1,  ζ̂_yy(y₁) = 0,  ζ̂_y(y_α) = α,  ζ̂(∞) = 1/λ
//! ```
//!
//! It is a two-term power function on `[y₁, y_α)` and a single power plus the
//! constant `1/λ` on `[y_α, ∞)`. The primal value `ζ(z) = max_{y ≥ y₁} ζ̂(y) − yz`
//! is recovered through the inverse of `ζ̂_y`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::MarketParams;
use crate::rootfind::{bracketed_root, RootError, Tolerance};
use crate::scalar::{pow_pos, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum SolverError {
    #[error("DomainError: {what} = {value} is outside the domain")]
    Domain { what: &'static str, value: f64 },
    #[error(transparent)]
    NoBracket(#[from] RootError),
    #[error("InvalidBoundary: free boundary {what} = {value} is not finite and positive")]
    InvalidBoundary { what: &'static str, value: f64 },
    #[error("BoundaryOutOfRange: ln(y1/y_alpha) lies below {log_ratio}, outside the floating-point range")]
    BoundaryOutOfRange { log_ratio: f64 },
}

pub(crate) fn domain<T: Scalar>(what: &'static str, value: T) -> SolverError {
    SolverError::Domain {
        what,
        value: value.to_f64().unwrap_or(f64::NAN),
    }
}

/// `δ` and the two roots of `δγ² − (r − κ − λ + δ)γ − λ = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaRoots<T> {
    pub delta: T,
    /// Positive root, always in `(0, 1)` because `κ > r`.
    pub gamma1: T,
    /// Negative root.
    pub gamma2: T,
}

impl<T: Scalar> GammaRoots<T> {
    pub fn compute(p: &MarketParams<T>) -> Self {
        let delta = p.delta();
        let b = p.r() - p.kappa() - p.lam() + delta;
        let disc = (b * b + T::lit(4.0) * p.lam() * delta).sqrt();
        let two_delta = T::lit(2.0) * delta;
        // The root that avoids cancellation comes from the quadratic formula,
        // the other from the product γ₁γ₂ = −λ/δ.
        let (gamma1, gamma2) = if b >= T::zero() {
            let g1 = (b + disc) / two_delta;
            (g1, -p.lam() / (delta * g1))
        } else {
            let g2 = (b - disc) / two_delta;
            (-p.lam() / (delta * g2), g2)
        };
        Self {
            delta,
            gamma1,
            gamma2,
        }
    }

    /// Relative residuals of the product and sum identities of the two roots.
    pub fn vieta_residuals(&self, p: &MarketParams<T>) -> (T, T) {
        let prod_target = -p.lam() / self.delta;
        let sum_target = (p.r() - p.kappa() - p.lam() + self.delta) / self.delta;
        let prod = self.gamma1 * self.gamma2;
        let sum = self.gamma1 + self.gamma2;
        let rel = |got: T, want: T| (got - want).abs() / want.abs().max(T::min_positive_value());
        // The sum can be tiny relative to the roots; scale by the larger root there.
        let sum_scale = sum_target.abs().max(self.gamma1.abs().max(self.gamma2.abs()));
        (rel(prod, prod_target), (sum - sum_target).abs() / sum_scale)
    }

    /// `(1 − γ₂)/(γ₁ − γ₂)` and `(1 − γ₁)/(γ₁ − γ₂)`, the weights of the slope on `[y₁, y_α)`.
    pub(crate) fn slope_weights(&self) -> (T, T) {
        let spread = self.gamma1 - self.gamma2;
        (
            (T::one() - self.gamma2) / spread,
            (T::one() - self.gamma1) / spread,
        )
    }

    /// `(1 − γ₁)(1 − γ₂)/(γ₁ − γ₂)`.
    pub(crate) fn curvature_weight(&self) -> T {
        (T::one() - self.gamma1) * (T::one() - self.gamma2) / (self.gamma1 - self.gamma2)
    }
}

/// Left side of the free-boundary ratio equation minus `alpha`, in `s = ln(y₁/y_α)`.
fn ratio_equation<T: Scalar>(roots: &GammaRoots<T>, alpha: T, s: T) -> T {
    let (a, b) = roots.slope_weights();
    a * ((T::one() - roots.gamma1) * s).exp() - b * ((T::one() - roots.gamma2) * s).exp() - alpha
}

/// Solves for the ratio `y₁ / y_α ∈ (0, 1)` of the two free boundaries.
///
/// The left side is increasing in the ratio, runs from 0 to 1 and is
/// solved in log coordinates so that ratios near zero stay resolvable.
pub fn solve_y1alpha<T: Scalar>(roots: &GammaRoots<T>, alpha: T) -> Result<T, SolverError> {
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(domain("alpha", alpha));
    }
    let f = |s: T| ratio_equation(roots, alpha, s);
    // keep y₁ = y_α · ratio and powers of the ratio comfortably inside the normal range
    let floor = T::lit(0.5) * T::min_positive_value().ln();
    let mut lo = -T::one();
    while f(lo) >= T::zero() {
        if lo <= floor {
            return Err(SolverError::BoundaryOutOfRange { log_ratio: lo.as_f64() });
        }
        lo = (lo * T::lit(2.0)).max(floor);
    }
    let s = bracketed_root(f, lo, T::zero(), Tolerance::converged())?;
    Ok(s.exp())
}

/// `e^x − 1 − x` without cancellation near zero.
pub(crate) fn expm1_minus_x<T: Scalar>(x: T) -> T {
    if x.abs() < T::lit(0.5) {
        // Taylor series through x^17; the remainder is below 1e-20 relative
        let mut term = T::one() / T::lit(factorial(17));
        for k in (2..=16).rev() {
            term = T::one() / T::lit(factorial(k)) + x * term;
        }
        x * x * term
    } else {
        x.exp_m1() - x
    }
}

const fn factorial(k: u32) -> f64 {
    let mut f = 1.0;
    let mut i = 2;
    while i <= k {
        f *= i as f64;
        i += 1;
    }
    f
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeBoundaries<T> {
    /// `y₁ / y_α`.
    pub y1alpha: T,
    pub yalpha: T,
    pub y1: T,
}

/// Locates `y_α` (and `y₁ = y_α · ratio`) from continuity of `ζ̂` at `y_α`.
///
/// Equating the two branches of `ζ̂` at `y_α` gives
/// `y_α = 1 / (λ [ (1−γ₂)/(γ₁(γ₁−γ₂)) ρ^{1−γ₁} − (1−γ₁)/(γ₂(γ₁−γ₂)) ρ^{1−γ₂} − α/γ₂ ])`
/// with `ρ = y₁/y_α`; all three bracketed terms are positive since `γ₂ < 0`.
pub fn compute_boundaries<T: Scalar>(
    roots: &GammaRoots<T>,
    y1alpha: T,
    p: &MarketParams<T>,
) -> Result<FreeBoundaries<T>, SolverError> {
    if !(y1alpha > T::zero() && y1alpha < T::one()) {
        return Err(domain("y1alpha", y1alpha));
    }
    let (g1, g2) = (roots.gamma1, roots.gamma2);
    let (a, b) = roots.slope_weights();
    let bracket = a / g1 * pow_pos(y1alpha, T::one() - g1) - b / g2 * pow_pos(y1alpha, T::one() - g2)
        - p.alpha() / g2;
    let yalpha = T::one() / (p.lam() * bracket);
    if !(yalpha.is_finite() && yalpha > T::zero()) {
        return Err(SolverError::InvalidBoundary {
            what: "yalpha",
            value: yalpha.as_f64(),
        });
    }
    let y1 = yalpha * y1alpha;
    if !(y1 > T::zero() && y1 < yalpha) {
        return Err(SolverError::InvalidBoundary {
            what: "y1",
            value: y1.as_f64(),
        });
    }
    Ok(FreeBoundaries {
        y1alpha,
        yalpha,
        y1,
    })
}

/// Which closed-form piece of `ζ̂` to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `y₁ ≤ y < y_α`: outside drawdown in primal terms.
    Upper,
    /// `y ≥ y_α`: the drawdown region.
    Drawdown,
}

/// Value, first and second derivative at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Jet<T> {
    pub value: T,
    pub d1: T,
    pub d2: T,
}

/// Primal quantities at a wealth-to-maximum ratio `z`, obtained by Legendre duality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrimalPoint<T> {
    pub z: T,
    /// Dual point `y = I(z)` with `ζ̂_y(y) = z`.
    pub y: T,
    pub zeta: T,
    /// `ζ_z = −y`.
    pub zeta_z: T,
    /// `ζ_zz = −1/ζ̂_yy(y)`.
    pub zeta_zz: T,
}

/// Fully determined dual solution for one parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Scalar + Serialize"))]
pub struct DualFunction<T> {
    pub params: MarketParams<T>,
    pub roots: GammaRoots<T>,
    pub boundaries: FreeBoundaries<T>,
}

impl<T: Scalar> DualFunction<T> {
    pub fn new(params: MarketParams<T>) -> Result<Self, SolverError> {
        let roots = GammaRoots::compute(&params);
        let y1alpha = solve_y1alpha(&roots, params.alpha())?;
        let boundaries = compute_boundaries(&roots, y1alpha, &params)?;
        Ok(Self {
            params,
            roots,
            boundaries,
        })
    }

    /// Assembles a dual function from arbitrary parts without checking them.
    ///
    /// Used to feed deliberately perturbed boundaries to the verification checks.
    pub fn from_parts_unchecked(
        params: MarketParams<T>,
        roots: GammaRoots<T>,
        boundaries: FreeBoundaries<T>,
    ) -> Self {
        Self {
            params,
            roots,
            boundaries,
        }
    }

    /// Same solution with `y₁` and `y_α` multiplied by `factor`.
    pub fn with_scaled_boundaries(&self, factor: T) -> Self {
        let b = self.boundaries;
        Self {
            boundaries: FreeBoundaries {
                y1alpha: b.y1alpha,
                yalpha: b.yalpha * factor,
                y1: b.y1 * factor,
            },
            ..*self
        }
    }

    pub fn y1(&self) -> T {
        self.boundaries.y1
    }

    pub fn yalpha(&self) -> T {
        self.boundaries.yalpha
    }

    pub fn alpha(&self) -> T {
        self.params.alpha()
    }

    /// Branch selected at `y`; `y_α` itself belongs to the drawdown branch.
    pub fn branch_at(&self, y: T) -> Branch {
        if y >= self.boundaries.yalpha {
            Branch::Drawdown
        } else {
            Branch::Upper
        }
    }

    /// Evaluates one branch formula at any `y > 0`, ignoring the branch's nominal range.
    pub fn branch_jet(&self, branch: Branch, y: T) -> Jet<T> {
        let GammaRoots { gamma1: g1, gamma2: g2, .. } = self.roots;
        let one = T::one();
        match branch {
            Branch::Upper => {
                let y1 = self.boundaries.y1;
                let u = y / y1;
                let ln_u = u.ln();
                let p1 = (g1 * ln_u).exp();
                let p2 = (g2 * ln_u).exp();
                let spread = g1 - g2;
                let (a, b) = self.roots.slope_weights();
                let value = y1 / spread * ((one - g2) / g1 * p1 - (one - g1) / g2 * p2);
                let d1 = (a * p1 - b * p2) / u;
                let d2 = -self.roots.curvature_weight() * (p1 - p2) / (u * u * y1);
                Jet { value, d1, d2 }
            }
            Branch::Drawdown => {
                let ya = self.boundaries.yalpha;
                let alpha = self.params.alpha();
                let v = y / ya;
                let pv = pow_pos(v, g2);
                let value = one / self.params.lam() + alpha * ya / g2 * pv;
                let d1 = alpha * pv / v;
                let d2 = -alpha * (one - g2) / ya * pv / (v * v);
                Jet { value, d1, d2 }
            }
        }
    }

    /// `ζ̂`, `ζ̂_y` and `ζ̂_yy` at `y ≥ y₁`.
    pub fn jet(&self, y: T) -> Result<Jet<T>, SolverError> {
        if !(y >= self.boundaries.y1) || !y.is_finite() {
            return Err(domain("y", y));
        }
        Ok(self.branch_jet(self.branch_at(y), y))
    }

    pub fn zeta_hat(&self, y: T) -> Result<T, SolverError> {
        self.jet(y).map(|j| j.value)
    }

    pub fn zeta_hat_y(&self, y: T) -> Result<T, SolverError> {
        self.jet(y).map(|j| j.d1)
    }

    pub fn zeta_hat_yy(&self, y: T) -> Result<T, SolverError> {
        self.jet(y).map(|j| j.d2)
    }

    /// Upper bound of `ln(y/y₁)` on the upper branch.
    pub(crate) fn log_ratio_span(&self) -> T {
        -self.boundaries.y1alpha.ln()
    }

    /// Solves `ζ̂_y(y₁ e^s) = z` for `s ∈ [0, ln(y_α/y₁)]`, valid for `z ∈ [α, 1]`.
    ///
    /// Smooth fit makes `ζ̂_y` flat at `y₁`, so `1 − ζ̂_y` grows like `s²`. The
    /// equation is solved as `√(1 − ζ̂_y) = √(1 − z)`, which stays well
    /// conditioned as `z → 1`.
    pub(crate) fn upper_log_ratio(&self, z: T) -> Result<T, SolverError> {
        if z >= T::one() {
            return Ok(T::zero());
        }
        if z <= self.params.alpha() {
            return Ok(self.log_ratio_span());
        }
        self.log_ratio_for_gap((T::one() - z).sqrt())
    }

    /// Same as [`Self::upper_log_ratio`] with the input given as `√(1 − z)`.
    pub(crate) fn log_ratio_for_gap(&self, root_gap: T) -> Result<T, SolverError> {
        if root_gap <= T::zero() {
            return Ok(T::zero());
        }
        let f = |s: T| self.slope_deficit(s).sqrt() - root_gap;
        let span = self.log_ratio_span();
        // Rounding can push the endpoint value across zero when z sits on α.
        if f(span) <= T::zero() {
            return Ok(span);
        }
        Ok(bracketed_root(f, T::zero(), span, Tolerance::converged())?)
    }

    /// `1 − ζ̂_y(y₁ e^s)` on the upper branch, free of cancellation for small `s`.
    pub(crate) fn slope_deficit(&self, s: T) -> T {
        let (a, b) = self.roots.slope_weights();
        let one = T::one();
        // a − b = 1 and a(γ₁−1) = b(γ₂−1), so the constant and linear terms cancel exactly
        let d = b * expm1_minus_x((self.roots.gamma2 - one) * s) - a * expm1_minus_x((self.roots.gamma1 - one) * s);
        d.max(T::zero())
    }

    /// Inverse of `ζ̂_y`: the dual point `y ≥ y₁` with slope `z ∈ [0, 1]`.
    ///
    /// `z = 0` maps to `+∞`. On `(0, α]` the drawdown branch inverts in closed
    /// form; on `(α, 1]` the upper branch is inverted numerically.
    pub fn invert_dual(&self, z: T) -> Result<T, SolverError> {
        if !(z >= T::zero() && z <= T::one()) {
            return Err(domain("z", z));
        }
        let alpha = self.params.alpha();
        if z == T::zero() {
            return Ok(T::infinity());
        }
        if z == alpha {
            return Ok(self.boundaries.yalpha);
        }
        if z < alpha {
            let exponent = T::one() / (self.roots.gamma2 - T::one());
            return Ok(self.boundaries.yalpha * pow_pos(z / alpha, exponent));
        }
        let s = self.upper_log_ratio(z)?;
        Ok(self.boundaries.y1 * s.exp())
    }

    /// Legendre transform `ζ(z)` with its derivatives via `ζ_z = −y`, `ζ_zz = −1/ζ̂_yy(y)`.
    pub fn primal(&self, z: T) -> Result<PrimalPoint<T>, SolverError> {
        let y = self.invert_dual(z)?;
        if y.is_infinite() {
            return Ok(PrimalPoint {
                z,
                y,
                zeta: T::one() / self.params.lam(),
                zeta_z: -T::infinity(),
                zeta_zz: T::infinity(),
            });
        }
        let j = self.jet(y)?;
        Ok(PrimalPoint {
            z,
            y,
            zeta: j.value - y * z,
            zeta_z: -y,
            zeta_zz: -T::one() / j.d2,
        })
    }

    /// Residual of the dual differential equation at `y`, using the branch's own indicator.
    pub fn ode_residual(&self, y: T) -> Result<T, SolverError> {
        let j = self.jet(y)?;
        let p = &self.params;
        let indicator = match self.branch_at(y) {
            Branch::Drawdown => T::one(),
            Branch::Upper => T::zero(),
        };
        Ok(p.lam() * j.value + (p.r() - p.kappa() - p.lam()) * y * j.d1
            - self.roots.delta * y * y * j.d2
            - indicator)
    }

    pub fn diagnostics(&self) -> SolverDiagnostics {
        let p = &self.params;
        let (vieta_product, vieta_sum) = self.roots.vieta_residuals(p);
        let s = self.boundaries.y1alpha.ln();
        let ratio_residual = ratio_equation(&self.roots, p.alpha(), s).abs();
        let ya = self.boundaries.yalpha;
        let left = self.branch_jet(Branch::Upper, ya);
        let right = self.branch_jet(Branch::Drawdown, ya);
        let at_y1 = self.branch_jet(Branch::Upper, self.boundaries.y1);
        let f = |x: T| x.as_f64();
        SolverDiagnostics {
            delta: f(self.roots.delta),
            gamma1: f(self.roots.gamma1),
            gamma2: f(self.roots.gamma2),
            y1alpha: f(self.boundaries.y1alpha),
            yalpha: f(ya),
            y1: f(self.boundaries.y1),
            vieta_product_rel: f(vieta_product),
            vieta_sum_rel: f(vieta_sum),
            y1alpha_residual: f(ratio_residual),
            continuity_rel: f((left.value - right.value).abs() / right.value.abs()),
            slope_continuity: f((left.d1 - right.d1).abs()),
            smooth_fit_slope_y1: f((at_y1.d1 - T::one()).abs()),
            smooth_fit_curvature_y1: f(at_y1.d2.abs()),
            slope_at_yalpha: f((right.d1 - p.alpha()).abs()),
        }
    }
}

/// Solver outputs and the residuals of every defining condition, for JSON dumps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub delta: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub y1alpha: f64,
    pub yalpha: f64,
    pub y1: f64,
    pub vieta_product_rel: f64,
    pub vieta_sum_rel: f64,
    pub y1alpha_residual: f64,
    pub continuity_rel: f64,
    pub slope_continuity: f64,
    pub smooth_fit_slope_y1: f64,
    pub smooth_fit_curvature_y1: f64,
    pub slope_at_yalpha: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    // Frozen from an independent 40-digit mpmath computation (closed-form roots,
    // 200-step bisection for the ratio and for the inverse slope).
    const GAMMA1: f64 = 0.732_050_807_568_877_3;
    const GAMMA2: f64 = -2.732_050_807_568_877_3;
    const Y1ALPHA: f64 = 0.331_209_643_715_011_32;
    const YALPHA: f64 = 18.014_013_235_734_126;
    const Y1: f64 = 5.966_414_905_684_998;
    const Y_AT_09: f64 = 11.339_933_684_204_404;

    fn dual() -> DualFunction<f64> {
        DualFunction::new(MarketParams::example()).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn gammas_match_reference() {
        let g = GammaRoots::compute(&MarketParams::<f64>::example());
        assert!((g.delta - 0.02).abs() < 1e-16);
        assert!(rel(g.gamma1, GAMMA1) < 1e-14, "{}", g.gamma1);
        assert!(rel(g.gamma2, GAMMA2) < 1e-14, "{}", g.gamma2);
        let (prod, sum) = g.vieta_residuals(&MarketParams::example());
        assert!(prod < 1e-12 && sum < 1e-12);
    }

    #[test]
    fn ratio_matches_reference() {
        let d = dual();
        assert!(rel(d.boundaries.y1alpha, Y1ALPHA) < 1e-12);
        assert!(rel(d.yalpha(), YALPHA) < 1e-12);
        assert!(rel(d.y1(), Y1) < 1e-12);
        assert!(d.diagnostics().y1alpha_residual < 1e-12);
    }

    #[test]
    fn ratio_tracks_alpha_limits() {
        let g = GammaRoots::compute(&MarketParams::<f64>::example());
        let near_one = solve_y1alpha(&g, 1.0 - 1e-9).unwrap();
        let near_zero = solve_y1alpha(&g, 1e-9).unwrap();
        assert!(near_one > 0.999 && near_one < 1.0, "{near_one}");
        assert!(near_zero < 1e-6, "{near_zero}");
        assert!(solve_y1alpha(&g, 1.0).is_err());
    }

    #[test]
    fn continuity_and_smooth_fit() {
        let d = dual();
        let diag = d.diagnostics();
        assert!(diag.continuity_rel < 1e-10, "{diag:?}");
        assert!(diag.slope_continuity < 1e-10);
        assert!(diag.smooth_fit_slope_y1 < 1e-10);
        assert!(diag.smooth_fit_curvature_y1 < 1e-10);
        assert!(diag.slope_at_yalpha < 1e-10);
        let left = d.branch_jet(Branch::Upper, d.yalpha());
        assert!((left.d1 - 0.8).abs() < 1e-10);
    }

    #[test]
    fn curvature_jumps_at_yalpha() {
        let d = dual();
        let left = d.branch_jet(Branch::Upper, d.yalpha());
        let right = d.branch_jet(Branch::Drawdown, d.yalpha());
        assert!(left.d2 < 0.0 && right.d2 < 0.0);
        assert!((left.d2 - right.d2).abs() > 1e-6);
    }

    #[test]
    fn far_value_uses_drawdown_branch() {
        let d = dual();
        let y = 10.0 * d.yalpha();
        let want = 1.0 / 0.04 + 0.8 * d.yalpha() / d.roots.gamma2 * 10f64.powf(d.roots.gamma2);
        assert!(rel(d.zeta_hat(y).unwrap(), want) < 1e-14);
        assert!((d.zeta_hat(1e12).unwrap() - 25.0).abs() < 1e-10);
    }

    #[test]
    fn exact_yalpha_uses_drawdown_branch() {
        let d = dual();
        assert_eq!(d.branch_at(d.yalpha()), Branch::Drawdown);
        assert_eq!(d.branch_at(d.yalpha() * (1.0 - 1e-15)), Branch::Upper);
    }

    #[test]
    fn below_y1_is_rejected() {
        let d = dual();
        assert!(matches!(d.zeta_hat(0.5 * d.y1()), Err(SolverError::Domain { .. })));
        assert!(d.zeta_hat(f64::NAN).is_err());
    }

    #[test]
    fn inversion_landmarks() {
        let d = dual();
        assert_eq!(d.invert_dual(1.0).unwrap(), d.y1());
        assert_eq!(d.invert_dual(0.8).unwrap(), d.yalpha());
        assert!(rel(d.invert_dual(0.9).unwrap(), Y_AT_09) < 1e-12);
        assert!(d.invert_dual(0.0).unwrap().is_infinite());
        assert!(d.invert_dual(1.5).is_err());
        assert!(d.invert_dual(-0.1).is_err());
    }

    #[test]
    fn primal_matches_reference() {
        let d = dual();
        // ζ(0.9), ζ(0.5), ζ(0.3) from the same 40-digit computation
        for (z, want) in [
            (0.9, 3.873_918_388_578_700_7),
            (0.5, 11.044_897_128_403_19),
            (0.3, 15.398_734_350_992_133),
        ] {
            let pt = d.primal(z).unwrap();
            assert!(rel(pt.zeta, want) < 1e-12, "z={z}: {}", pt.zeta);
            assert!(pt.zeta_z < 0.0 && pt.zeta_zz > 0.0);
        }
        assert_eq!(d.primal(0.0).unwrap().zeta, 25.0);
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let d = dual();
        // beyond ~10·y_α the value is 1/λ plus a tiny power term and the
        // difference quotient of ζ̂ is dominated by rounding
        let mut y = d.y1() * 1.01;
        while y < 10.0 * d.yalpha() {
            if (y / d.yalpha() - 1.0).abs() > 1e-3 {
                let h = 1e-6 * y;
                let j = d.jet(y).unwrap();
                let f = |t: f64| d.zeta_hat(t).unwrap();
                let fd1 = (f(y + h) - f(y - h)) / (2.0 * h);
                let g = |t: f64| d.zeta_hat_y(t).unwrap();
                let fd2 = (g(y + h) - g(y - h)) / (2.0 * h);
                assert!(rel(fd1, j.d1) < 1e-6, "y={y}");
                assert!(rel(fd2, j.d2) < 1e-6, "y={y}");
            }
            y *= 1.07;
        }
    }

    #[test]
    fn expm1_minus_x_is_accurate_on_both_sides_of_the_switch() {
        for x in [-1.5f64, -0.5000001, -0.4999999, -1e-3, -1e-9, 0.0, 1e-9, 1e-3, 0.4999999, 0.5000001, 1.5] {
            // 1/2 + x/6 + ... computed independently by a long series
            let mut series = 0.0;
            let mut term = x * x / 2.0;
            for k in 3..60 {
                series += term;
                term *= x / k as f64;
            }
            let got = expm1_minus_x(x);
            assert!((got - series).abs() <= 1e-15 * series.abs() + 1e-300, "x={x}: {got} vs {series}");
        }
    }

    #[test]
    fn inversion_is_well_conditioned_near_one() {
        let d = dual();
        for gap in [1e-4, 1e-7, 1e-10] {
            let z = 1.0 - gap;
            let y = d.invert_dual(z).unwrap();
            let deficit = d.slope_deficit((y / d.y1()).ln());
            assert!((deficit - gap).abs() < 1e-6 * gap, "gap={gap}: {deficit}");
        }
    }

    #[test]
    fn single_precision_solution_is_close() {
        let d32 = DualFunction::<f32>::new(MarketParams::example()).unwrap();
        assert!((d32.yalpha() as f64 - YALPHA).abs() / YALPHA < 1e-4);
        assert!((d32.invert_dual(0.9).unwrap() as f64 - Y_AT_09).abs() / Y_AT_09 < 1e-4);
    }
}
