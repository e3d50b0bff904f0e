use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use drawdown_core::policy::{self, policy_dispatch};
use drawdown_core::sim::{self, StrategyEstimate};
use drawdown_core::verify::{self, Bound};
use drawdown_core::{
    DualFunction, Estimator, MarketParams, ParamsError, PortfolioState, RawParams, SimConfig, SimError, SolverError,
    StrategyKind,
};
use serde::Serialize;

use crate::{Command, EstimatorArg, Format, Io, Sim, State};

const THREADS_VAR: &str = "DRAWDOWN_THREADS";
const SIMULATE_PATHS: usize = 20_000;
const VERIFY_PATHS: usize = 2_000;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("UsageError: {0}")]
    Usage(String),
    #[error("ParamsFileError: {path}: {reason}")]
    ParamsFile { path: String, reason: String },
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("OutputError: {0}")]
    Output(#[from] io::Error),
    #[error("verification failed")]
    VerificationFailed,
}

/// Applies `DRAWDOWN_THREADS` to the global simulation pool.
pub fn limit_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_VAR} must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size thread pool: {e}")))
}

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Solve { io } => solve(&io),
        Command::Value { io, state } => value(&io, &state),
        Command::Policy { io, state, strategy } => policy_amount(&io, &state, strategy),
        Command::Simulate {
            io,
            state,
            sim,
            strategy,
        } => simulate(&io, &state, &sim, strategy),
        Command::Compare {
            io,
            state,
            sim,
            strategies,
        } => compare(&io, &state, &sim, strategies),
        Command::Verify {
            io,
            state,
            sim,
            corrupt_boundaries,
        } => run_verify(&io, &state, &sim, corrupt_boundaries),
        Command::Sweep { io, grid } => sweep(&io, grid),
    }
}

fn load_params(path: Option<&Path>) -> Result<MarketParams, CliError> {
    let Some(path) = path else {
        return Ok(MarketParams::example());
    };
    let file_error = |reason: String| CliError::ParamsFile {
        path: path.display().to_string(),
        reason,
    };
    let text = fs::read_to_string(path).map_err(|e| file_error(e.to_string()))?;
    let raw: RawParams<f64> = serde_json::from_str(&text).map_err(|e| file_error(e.to_string()))?;
    Ok(MarketParams::validate(raw)?)
}

fn solved(io: &Io) -> Result<DualFunction, CliError> {
    Ok(DualFunction::new(load_params(io.params.as_deref())?)?)
}

fn output(io: &Io, write: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), CliError> {
    match &io.out {
        Some(path) => {
            let mut file = BufWriter::new(File::create(path)?);
            write(&mut file)?;
            file.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn write_json<T: Serialize>(out: &mut dyn Write, value: &T) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)
}

fn portfolio(state: &State) -> Result<PortfolioState, CliError> {
    let w = state.w.ok_or_else(|| CliError::Usage("--w is required".into()))?;
    Ok(PortfolioState::new(w, state.m, state.x)?)
}

fn sim_config(p: &MarketParams, sim: &Sim, initial: PortfolioState, default_paths: usize) -> SimConfig {
    let mut cfg = SimConfig::desk(p, initial);
    cfg.seed = sim.seed;
    cfg.dt = sim.dt;
    cfg.n_paths = sim.paths.unwrap_or(default_paths);
    if let Some(h) = sim.horizon {
        cfg.horizon = h;
    }
    cfg.estimator = match sim.estimator {
        EstimatorArg::Discounted => Estimator::DiscountedOccupancy,
        EstimatorArg::Killed => Estimator::KilledLifetime,
    };
    cfg
}

#[derive(Serialize)]
struct SolveReport<'a> {
    params: RawParams<f64>,
    roots: &'a drawdown_core::GammaRoots,
    boundaries: &'a drawdown_core::FreeBoundaries,
    diagnostics: drawdown_core::SolverDiagnostics,
}

fn solve(io: &Io) -> Result<(), CliError> {
    let d = solved(io)?;
    let report = SolveReport {
        params: d.params.raw(),
        roots: &d.roots,
        boundaries: &d.boundaries,
        diagnostics: d.diagnostics(),
    };
    output(io, |out| match io.format.unwrap_or(Format::Json) {
        Format::Json => write_json(out, &report),
        Format::Csv => {
            let g = &report.diagnostics;
            writeln!(out, "key,value")?;
            let rows = [
                ("delta", g.delta),
                ("gamma1", g.gamma1),
                ("gamma2", g.gamma2),
                ("y1alpha", g.y1alpha),
                ("yalpha", g.yalpha),
                ("y1", g.y1),
                ("vieta_product_rel", g.vieta_product_rel),
                ("vieta_sum_rel", g.vieta_sum_rel),
                ("y1alpha_residual", g.y1alpha_residual),
                ("continuity_rel", g.continuity_rel),
                ("slope_continuity", g.slope_continuity),
                ("smooth_fit_slope_y1", g.smooth_fit_slope_y1),
                ("smooth_fit_curvature_y1", g.smooth_fit_curvature_y1),
                ("slope_at_yalpha", g.slope_at_yalpha),
            ];
            for (k, v) in rows {
                writeln!(out, "{k},{v:e}")?;
            }
            Ok(())
        }
    })
}

#[derive(Serialize)]
struct ValueRow {
    w: f64,
    m: f64,
    x: f64,
    psi: f64,
}

fn value(io: &Io, state: &State) -> Result<(), CliError> {
    let d = solved(io)?;
    let s = portfolio(state)?;
    let row = ValueRow {
        w: s.w,
        m: s.m,
        x: s.x,
        psi: policy::value(&d, &s)?,
    };
    output(io, |out| match io.format.unwrap_or(Format::Json) {
        Format::Json => write_json(out, &row),
        Format::Csv => writeln!(out, "w,m,x,psi\n{},{},{},{}", row.w, row.m, row.x, row.psi),
    })
}

#[derive(Serialize)]
struct PolicyRow {
    strategy: String,
    w: f64,
    m: f64,
    amount: f64,
}

fn policy_amount(io: &Io, state: &State, strategy: StrategyKind) -> Result<(), CliError> {
    let d = solved(io)?;
    let s = portfolio(state)?;
    let kind = strategy.with_default_ceiling(s.m);
    let row = PolicyRow {
        strategy: kind.label(),
        w: s.w,
        m: s.m,
        amount: policy_dispatch(&kind, &d, s.w, s.m)?,
    };
    output(io, |out| match io.format.unwrap_or(Format::Json) {
        Format::Json => write_json(out, &row),
        Format::Csv => writeln!(out, "strategy,w,m,amount\n{},{},{},{}", row.strategy, row.w, row.m, row.amount),
    })
}

fn write_estimates(io: &Io, rows: &[StrategyEstimate], json: impl Serialize) -> Result<(), CliError> {
    output(io, |out| match io.format.unwrap_or(Format::Csv) {
        Format::Csv => sim::write_csv(rows, out),
        Format::Json => write_json(out, &json),
    })
}

fn simulate(io: &Io, state: &State, sim_args: &Sim, strategy: StrategyKind) -> Result<(), CliError> {
    let d = solved(io)?;
    let s = portfolio(state)?;
    let cfg = sim_config(&d.params, sim_args, s, SIMULATE_PATHS);
    let kind = strategy.with_default_ceiling(s.m);
    let row = StrategyEstimate {
        strategy: kind.label(),
        estimate: sim::run(&cfg, kind, &d)?,
    };
    let rows = [row];
    write_estimates(io, &rows, &rows)
}

fn compare(io: &Io, state: &State, sim_args: &Sim, strategies: Vec<StrategyKind>) -> Result<(), CliError> {
    let d = solved(io)?;
    let s = portfolio(state)?;
    let cfg = sim_config(&d.params, sim_args, s, SIMULATE_PATHS);
    let kinds: Vec<StrategyKind> = if strategies.is_empty() {
        vec![
            StrategyKind::OptimalDrawdownTime,
            StrategyKind::RuinMin,
            StrategyKind::ConstantFraction { theta: 0.0 },
            StrategyKind::ConstantFraction { theta: 1.0 },
        ]
    } else {
        strategies.into_iter().map(|k| k.with_default_ceiling(s.m)).collect()
    };
    let result = sim::compare(&cfg, &kinds, &d)?;
    write_estimates(io, &result.estimates, &result)
}

fn run_verify(io: &Io, state: &State, sim_args: &Sim, corrupt: Option<f64>) -> Result<(), CliError> {
    let mut d = solved(io)?;
    if let Some(factor) = corrupt {
        let mut b = d.boundaries;
        b.yalpha *= factor;
        d = DualFunction::from_parts_unchecked(d.params, d.roots, b);
    }
    let initial = PortfolioState::new(state.w.unwrap_or(0.9 * state.m), state.m, state.x)?;
    let cfg = sim_config(&d.params, sim_args, initial, VERIFY_PATHS);
    let sim = (cfg.n_paths > 0).then_some(&cfg);
    let report = verify::report_for(&d, &verify::Grids::default(), sim)?;
    output(io, |out| match io.format.unwrap_or(Format::Json) {
        Format::Json => write_json(out, &report),
        Format::Csv => {
            writeln!(out, "name,value,tolerance,bound,pass")?;
            for e in &report.entries {
                let bound = match e.bound {
                    Bound::AtMost => "at_most",
                    Bound::Above => "above",
                };
                writeln!(out, "{},{:e},{:e},{},{}", e.name, e.value, e.tolerance, bound, e.pass)?;
            }
            Ok(())
        }
    })?;
    if report.pass {
        Ok(())
    } else {
        Err(CliError::VerificationFailed)
    }
}

const SWEEP_HEADER: &str = "z,psi,pi_optimal,pi_ruin,pi_ddprob,pi_occupation";

/// Rows at `z = i/n` with `m = 1`; `pi_ddprob` is empty where it is undefined (`z ≤ α`).
fn sweep(io: &Io, n: usize) -> Result<(), CliError> {
    if n == 0 {
        return Err(CliError::Usage("--grid must be at least 1".into()));
    }
    let d = solved(io)?;
    let mut rows = Vec::with_capacity(n);
    for i in 1..=n {
        let z = i as f64 / n as f64;
        let dd = if z > d.alpha() {
            Some(policy::policy_drawdown_prob(&d, z, 1.0)?)
        } else {
            None
        };
        rows.push(SweepRow {
            z,
            psi: policy::zeta(&d, z)?,
            pi_optimal: policy::policy_optimal(&d, z, 1.0)?,
            pi_ruin: policy::policy_ruin(&d.params, &d.roots, z)?,
            pi_ddprob: dd,
            pi_occupation: policy::policy_occupation(&d.params, &d.roots, z, 1.0)?,
        });
    }
    output(io, |out| match io.format.unwrap_or(Format::Csv) {
        Format::Json => write_json(out, &rows),
        Format::Csv => {
            writeln!(out, "{SWEEP_HEADER}")?;
            for r in &rows {
                let dd = r.pi_ddprob.map(|v| v.to_string()).unwrap_or_default();
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    r.z, r.psi, r.pi_optimal, r.pi_ruin, dd, r.pi_occupation
                )?;
            }
            Ok(())
        }
    })
}

#[derive(Serialize)]
struct SweepRow {
    z: f64,
    psi: f64,
    pi_optimal: f64,
    pi_ruin: f64,
    pi_ddprob: Option<f64>,
    pi_occupation: f64,
}
