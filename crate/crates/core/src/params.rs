//! Market and preference constants.
//!
//! All rates are annual. `MarketParams` can only be obtained through
//! [`MarketParams::validate`] (or deserialization, which routes through it),
//! so downstream code may assume every invariant below holds.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ParamsError {
    #[error("NonFinite: parameter `{0}` is not a finite number")]
    NonFinite(&'static str),
    #[error("RateNotPositive: riskless rate r must be > 0")]
    RateNotPositive,
    #[error("MuNotAboveR: drift mu must exceed the riskless rate r")]
    MuNotAboveR,
    #[error("SigmaNotPositive: volatility sigma must be > 0")]
    SigmaNotPositive,
    #[error("KappaNotAboveR: consumption rate kappa must exceed the riskless rate r")]
    KappaNotAboveR,
    #[error("LambdaNotPositive: hazard rate lam must be > 0")]
    LambdaNotPositive,
    #[error("AlphaOutOfRange: drawdown proportion alpha must lie in (0, 1)")]
    AlphaOutOfRange,
}

impl ParamsError {
    /// Stable short name, printed by the CLI on validation failure.
    pub fn name(&self) -> &'static str {
        match self {
            ParamsError::NonFinite(_) => "NonFinite",
            ParamsError::RateNotPositive => "RateNotPositive",
            ParamsError::MuNotAboveR => "MuNotAboveR",
            ParamsError::SigmaNotPositive => "SigmaNotPositive",
            ParamsError::KappaNotAboveR => "KappaNotAboveR",
            ParamsError::LambdaNotPositive => "LambdaNotPositive",
            ParamsError::AlphaOutOfRange => "AlphaOutOfRange",
        }
    }
}

/// Unvalidated parameter set, exactly the six keys of the JSON document.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawParams<T> {
    pub r: T,
    pub mu: T,
    pub sigma: T,
    pub kappa: T,
    pub lam: T,
    pub alpha: T,
}

/// Validated Black–Scholes market with proportional consumption and exponential lifetime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams<T>", into = "RawParams<T>")]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct MarketParams<T> {
    r: T,
    mu: T,
    sigma: T,
    kappa: T,
    lam: T,
    alpha: T,
}

impl<T: Scalar> MarketParams<T> {
    /// Checks every standing assumption with strict inequalities.
    ///
    /// Constraints are tested in a fixed order and the first violation is
    /// reported, so each rejected input maps to exactly one error.
    pub fn validate(raw: RawParams<T>) -> Result<Self, ParamsError> {
        let RawParams {
            r,
            mu,
            sigma,
            kappa,
            lam,
            alpha,
        } = raw;
        for (name, v) in [
            ("r", r),
            ("mu", mu),
            ("sigma", sigma),
            ("kappa", kappa),
            ("lam", lam),
            ("alpha", alpha),
        ] {
            if !v.is_finite() {
                return Err(ParamsError::NonFinite(name));
            }
        }
        let zero = T::zero();
        if r <= zero {
            return Err(ParamsError::RateNotPositive);
        }
        if mu <= r {
            return Err(ParamsError::MuNotAboveR);
        }
        if sigma <= zero {
            return Err(ParamsError::SigmaNotPositive);
        }
        if kappa <= r {
            return Err(ParamsError::KappaNotAboveR);
        }
        if lam <= zero {
            return Err(ParamsError::LambdaNotPositive);
        }
        if alpha <= zero || alpha >= T::one() {
            return Err(ParamsError::AlphaOutOfRange);
        }
        Ok(Self {
            r,
            mu,
            sigma,
            kappa,
            lam,
            alpha,
        })
    }

    pub fn new(r: T, mu: T, sigma: T, kappa: T, lam: T, alpha: T) -> Result<Self, ParamsError> {
        Self::validate(RawParams {
            r,
            mu,
            sigma,
            kappa,
            lam,
            alpha,
        })
    }

    /// Illustrative parameter set shipped with the CLI (not calibrated to any market).
    pub fn example() -> Self {
        Self::new(
            T::lit(0.02),
            T::lit(0.06),
            T::lit(0.20),
            T::lit(0.04),
            T::lit(0.04),
            T::lit(0.8),
        )
        .expect("example parameters are valid")
    }

    pub fn raw(&self) -> RawParams<T> {
        RawParams {
            r: self.r,
            mu: self.mu,
            sigma: self.sigma,
            kappa: self.kappa,
            lam: self.lam,
            alpha: self.alpha,
        }
    }

    /// Same market with a different drawdown proportion.
    pub fn with_alpha(&self, alpha: T) -> Result<Self, ParamsError> {
        Self::validate(RawParams { alpha, ..self.raw() })
    }

    pub fn with_lam(&self, lam: T) -> Result<Self, ParamsError> {
        Self::validate(RawParams { lam, ..self.raw() })
    }

    pub fn r(&self) -> T {
        self.r
    }
    pub fn mu(&self) -> T {
        self.mu
    }
    pub fn sigma(&self) -> T {
        self.sigma
    }
    pub fn kappa(&self) -> T {
        self.kappa
    }
    pub fn lam(&self) -> T {
        self.lam
    }
    pub fn alpha(&self) -> T {
        self.alpha
    }

    /// Half the squared Sharpe ratio, `((mu - r) / sigma)^2 / 2`.
    pub fn delta(&self) -> T {
        let sharpe = (self.mu - self.r) / self.sigma;
        T::lit(0.5) * sharpe * sharpe
    }

    /// Merton ratio `(mu - r) / sigma^2`, the common factor of every strategy.
    pub fn merton_ratio(&self) -> T {
        (self.mu - self.r) / (self.sigma * self.sigma)
    }
}

impl<T: Scalar> TryFrom<RawParams<T>> for MarketParams<T> {
    type Error = ParamsError;

    fn try_from(raw: RawParams<T>) -> Result<Self, Self::Error> {
        Self::validate(raw)
    }
}

impl<T: Scalar> From<MarketParams<T>> for RawParams<T> {
    fn from(p: MarketParams<T>) -> Self {
        p.raw()
    }
}
