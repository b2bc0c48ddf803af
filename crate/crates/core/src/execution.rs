//! Liquidation schedules of a large seller and their value against a market
//! maker who sees the seller's flow as part of the bid-side volume.
//!
//! A plan trades at signed rate `v_t` (negative sells). The market maker's
//! flows become `a = ã + v⁺` and `b = b̃ + v⁻`; the seller's objective, after
//! dropping terms that do not depend on the plan, is `-∫ v_t Y_t dt` along the
//! market maker's optimal adjoint `Y`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fbsde::{solve_auto, GridSpec};
use crate::flow::{iid_flow, FlowPath, PenaltyPath};
use crate::grid::{trapezoid, TimeGrid};
use crate::intensity::{IntensityPair, Truncation};
use crate::io::Table;
use crate::rng::substream_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExecutionKind {
    /// Uniform in time.
    Twap,
    /// Proportional to the background bid volume.
    Vwap,
    /// Idle for the first half, uniform over the second half.
    Exploit,
}

impl ExecutionKind {
    pub const ALL: [ExecutionKind; 3] = [Self::Twap, Self::Vwap, Self::Exploit];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Twap => "twap",
            Self::Vwap => "vwap",
            Self::Exploit => "exploit",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionPlan {
    pub kind: ExecutionKind,
    pub grid: TimeGrid,
    /// Signed trading rate on the flow grid.
    pub v: Vec<f64>,
    pub q0_exec: f64,
}

impl ExecutionPlan {
    /// `|∫v dt + q₀ᵉ|`.
    pub fn liquidation_error(&self) -> f64 {
        (trapezoid(&self.v, self.grid.dt()) + self.q0_exec).abs()
    }
}

/// Build a plan that sells `q0_exec` over the flow horizon.
///
/// Node values are rescaled so that the trapezoid integral of `v` is exactly
/// `-q0_exec`; on the exploit plan the node at `T/2` carries half the rate.
pub fn make_strategy(kind: ExecutionKind, flow: &FlowPath, q0_exec: f64) -> Result<ExecutionPlan> {
    if !(q0_exec.is_finite() && q0_exec > 0.0) {
        return Err(Error::invalid(format!("q0_exec must be positive, got {q0_exec}")));
    }
    let grid = *flow.grid();
    let horizon = grid.horizon();
    let raw: Vec<f64> = match kind {
        ExecutionKind::Twap => vec![-q0_exec / horizon; grid.len()],
        ExecutionKind::Vwap => {
            let (_, ib) = flow.integrate();
            if ib <= 0.0 {
                return Err(Error::invalid("vwap needs positive bid volume"));
            }
            flow.bid().iter().map(|b| -q0_exec * b / ib).collect()
        }
        ExecutionKind::Exploit => {
            let rate = -2.0 * q0_exec / horizon;
            (0..grid.len())
                .map(|i| {
                    let t = grid.time(i);
                    let half = 0.5 * horizon;
                    if (t - half).abs() <= 1e-12 * horizon {
                        0.5 * rate
                    } else if t < half {
                        0.0
                    } else {
                        rate
                    }
                })
                .collect()
        }
    };
    let total = trapezoid(&raw, grid.dt());
    let scale = -q0_exec / total;
    let v = raw.iter().map(|x| x * scale).collect();
    Ok(ExecutionPlan { kind, grid, v, q0_exec })
}

/// Background flow with the plan's volume added on the side it hits.
pub fn composite_flow(plan: &ExecutionPlan, background: &FlowPath) -> Result<FlowPath> {
    if plan.grid != *background.grid() {
        return Err(Error::invalid("plan and background flow use different grids"));
    }
    let a = background.ask().iter().zip(&plan.v).map(|(a, v)| a + v.max(0.0)).collect();
    let b = background.bid().iter().zip(&plan.v).map(|(b, v)| b + (-v).max(0.0)).collect();
    background.with_rates(a, b)
}

/// `-∫ v_t Y_t dt` along the market maker's optimal path from `q0_mm`.
pub fn evaluate_execution(
    plan: &ExecutionPlan,
    background: &FlowPath,
    penalty: &PenaltyPath,
    models: &IntensityPair,
    trunc: &Truncation,
    spec: &GridSpec,
    q0_mm: f64,
) -> Result<f64> {
    if plan.v.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let flow = composite_flow(plan, background)?;
    let (field, tr) = solve_auto(&flow, penalty, models, trunc, spec, q0_mm)?;
    let fine = field.grid.time_grid();
    let y: Vec<f64> = (0..plan.grid.len()).map(|i| fine.sample(&tr.y, plan.grid.time(i))).collect();
    let integrand: Vec<f64> = plan.v.iter().zip(&y).map(|(v, y)| v * y).collect();
    Ok(-trapezoid(&integrand, plan.grid.dt()))
}

/// Settings of the randomized execution experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExecExperiment {
    pub n_trials: usize,
    pub seed: u64,
    /// Background flow nodes.
    pub n_grid: usize,
    pub horizon: f64,
    pub flow_mean: f64,
    pub flow_spread: f64,
    /// Target `∫ã dt - ∫b̃ dt` of every background flow.
    pub imbalance: f64,
    pub phi: f64,
    pub terminal: f64,
    pub q0_mm: f64,
    pub q0_exec: f64,
}

/// Objectives of every strategy in one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialRow {
    pub trial: usize,
    pub twap: f64,
    pub vwap: f64,
    pub exploit: f64,
}

impl TrialRow {
    pub fn get(&self, kind: ExecutionKind) -> f64 {
        match kind {
            ExecutionKind::Twap => self.twap,
            ExecutionKind::Vwap => self.vwap,
            ExecutionKind::Exploit => self.exploit,
        }
    }
}

/// Background flow of trial `k`, drawn from substream `k` of the master seed.
pub fn trial_background(cfg: &ExecExperiment, trial: usize) -> Result<FlowPath> {
    let seed = substream_seed(cfg.seed, trial as u64);
    iid_flow(seed, cfg.flow_mean, cfg.flow_spread, cfg.n_grid, cfg.horizon)?.scale_to_imbalance(cfg.imbalance)
}

/// Evaluate all strategies on `n_trials` random backgrounds. Rows come back
/// in trial order whatever the number of worker threads.
pub fn run_exec_trials(
    cfg: &ExecExperiment,
    models: &IntensityPair,
    trunc: &Truncation,
    spec: &GridSpec,
) -> Result<Vec<TrialRow>> {
    if cfg.n_trials == 0 {
        return Err(Error::invalid("n_trials must be at least 1"));
    }
    let penalty = PenaltyPath::constant(cfg.phi, cfg.terminal, cfg.n_grid)?;
    (0..cfg.n_trials)
        .into_par_iter()
        .map(|trial| {
            let bg = trial_background(cfg, trial)?;
            let eval = |kind| -> Result<f64> {
                let plan = make_strategy(kind, &bg, cfg.q0_exec)?;
                evaluate_execution(&plan, &bg, &penalty, models, trunc, spec, cfg.q0_mm)
            };
            Ok(TrialRow {
                trial,
                twap: eval(ExecutionKind::Twap)?,
                vwap: eval(ExecutionKind::Vwap)?,
                exploit: eval(ExecutionKind::Exploit)?,
            })
        })
        .collect()
}

/// Per-strategy means in the order of [`ExecutionKind::ALL`].
pub fn strategy_means(rows: &[TrialRow]) -> [f64; 3] {
    let n = rows.len() as f64;
    ExecutionKind::ALL.map(|k| rows.iter().map(|r| r.get(k)).sum::<f64>() / n)
}

pub fn trials_table(rows: &[TrialRow]) -> Table {
    let mut t = Table::new(&["trial", "twap", "vwap", "exploit"]);
    for r in rows {
        t.push(vec![r.trial as f64, r.twap, r.vwap, r.exploit]);
    }
    t
}
