//! Bracketed scalar root finding: bisection with safeguarded secant steps.

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum RootError {
    #[error("NoBracket: f(a) = {fa} and f(b) = {fb} do not straddle zero")]
    NoBracket { fa: f64, fb: f64 },
    #[error("NonFinite: objective returned a non-finite value at x = {x}")]
    NonFinite { x: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance<T> {
    /// Stop once `|f(x)|` falls below this.
    pub f_abs: T,
    /// Stop once the bracket is narrower than `x_rel * max(|a|, |b|)`.
    pub x_rel: T,
    pub max_iter: usize,
}

impl<T: Scalar> Default for Tolerance<T> {
    fn default() -> Self {
        Self {
            f_abs: T::lit(1e-13),
            x_rel: T::lit(1e-15).max(T::lit(4.0) * T::EPS),
            max_iter: 200,
        }
    }
}

impl<T: Scalar> Tolerance<T> {
    /// Iterates until the bracket is as narrow as the float spacing allows.
    pub fn converged() -> Self {
        Self {
            f_abs: T::zero(),
            ..Self::default()
        }
    }
}

/// Root of `f` in `[a, b]`, given that `f(a)` and `f(b)` have opposite signs.
///
/// Each iteration tries the secant point of the current bracket and falls back
/// to the midpoint whenever the secant point is not strictly inside the
/// bracket or the previous step failed to halve it.
pub fn bracketed_root<T, F>(mut f: F, mut a: T, mut b: T, tol: Tolerance<T>) -> Result<T, RootError>
where
    T: Scalar,
    F: FnMut(T) -> T,
{
    if a > b {
        std::mem::swap(&mut a, &mut b);
    }
    let mut fa = f(a);
    let mut fb = f(b);
    for (x, fx) in [(a, fa), (b, fb)] {
        if !fx.is_finite() {
            return Err(RootError::NonFinite { x: x.as_f64() });
        }
    }
    if fa == T::zero() {
        return Ok(a);
    }
    if fb == T::zero() {
        return Ok(b);
    }
    if (fa < T::zero()) == (fb < T::zero()) {
        return Err(RootError::NoBracket {
            fa: fa.as_f64(),
            fb: fb.as_f64(),
        });
    }

    let half = T::lit(0.5);
    let mut force_bisect = false;
    let mut best = if fa.abs() < fb.abs() { a } else { b };
    for _ in 0..tol.max_iter {
        let width = b - a;
        let scale = a.abs().max(b.abs()).max(T::min_positive_value());
        if width <= tol.x_rel * scale {
            break;
        }
        let mid = a + half * width;
        let mut x = mid;
        if !force_bisect {
            let s = b - fb * (b - a) / (fb - fa);
            if s > a && s < b && s.is_finite() {
                x = s;
            }
        }
        if x <= a || x >= b {
            // bracket collapsed to adjacent floats
            break;
        }
        let fx = f(x);
        if !fx.is_finite() {
            return Err(RootError::NonFinite { x: x.as_f64() });
        }
        if fx.abs() < tol.f_abs || fx == T::zero() {
            return Ok(x);
        }
        if (fx < T::zero()) == (fa < T::zero()) {
            a = x;
            fa = fx;
        } else {
            b = x;
            fb = fx;
        }
        force_bisect = b - a > half * width;
        best = if fa.abs() < fb.abs() { a } else { b };
    }
    Ok(best)
}
