//! Minimum expected lifetime spent in drawdown under proportional consumption.
//!
//! The crate computes the closed-form dual solution of the control problem,
//! evaluates the optimal and three comparison investment strategies, simulates
//! the controlled wealth process by Monte Carlo and numerically certifies the
//! analytic solution.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`, which every tolerance in the test suites
//! assumes.

pub mod params;
pub mod policy;
pub mod rng;
pub mod rootfind;
pub mod scalar;
pub mod sim;
pub mod solver;
pub mod verify;

pub use params::{ParamsError, RawParams};
pub use scalar::Scalar;
pub use sim::{Comparison, Estimator, SimError, SimEstimate};
pub use solver::{Branch, SolverDiagnostics, SolverError};
pub use verify::{CheckEntry, Grids, VerificationReport};

pub type MarketParams = params::MarketParams<f64>;
pub type GammaRoots = solver::GammaRoots<f64>;
pub type FreeBoundaries = solver::FreeBoundaries<f64>;
pub type DualFunction = solver::DualFunction<f64>;
pub type PortfolioState = policy::PortfolioState<f64>;
pub type StrategyKind = policy::StrategyKind<f64>;
pub type SimConfig = sim::SimConfig<f64>;
