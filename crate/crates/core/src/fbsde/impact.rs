//! Terminal quote as a function of order imbalance, and path-ordering checks.

use rayon::prelude::*;

use super::{forward_trajectory, solve_auto, DecouplingField, GridSpec};
use crate::error::{Error, Result};
use crate::flow::{FlowPath, PenaltyPath};
use crate::intensity::{IntensityPair, Truncation};
use crate::riccati::Trajectory;

/// For every target imbalance, rescale the ask side of `base`, solve the
/// field and record `(imbalance, δᵃ(T))`. Rows are sorted by imbalance.
pub fn impact_sweep(
    base: &FlowPath,
    penalty: &PenaltyPath,
    models: &IntensityPair,
    trunc: &Truncation,
    spec: &GridSpec,
    q0: f64,
    targets: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let mut rows = targets
        .par_iter()
        .map(|&target| {
            let flow = base.scale_to_imbalance(target)?;
            let (_, tr) = solve_auto(&flow, penalty, models, trunc, spec, q0)?;
            Ok((target, tr.delta_a[tr.delta_a.len() - 1]))
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|x, y| x.0.total_cmp(&y.0));
    Ok(rows)
}

/// `y ≈ c x^β` fitted by least squares in log-log coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFit {
    pub c: f64,
    pub beta: f64,
    pub r2: f64,
}

pub fn power_fit(points: &[(f64, f64)]) -> Result<PowerFit> {
    if points.len() < 3 {
        return Err(Error::invalid(format!("power fit needs at least 3 points, got {}", points.len())));
    }
    if let Some(&(x, y)) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(Error::invalid(format!("power fit needs positive coordinates, got ({x}, {y})")));
    }
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx <= 1e-300 {
        return Err(Error::invalid("power fit is degenerate: all x values are equal"));
    }
    let beta = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(PowerFit { c: (my - beta * mx).exp(), beta, r2 })
}

/// Outcome of replaying trajectories from ordered initial inventories.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    /// Largest `δᵃ(q_{k+1}) - δᵃ(q_k)` over all nodes and neighbouring pairs.
    pub worst_ask: f64,
    /// Largest `δᵇ(q_k) - δᵇ(q_{k+1})`.
    pub worst_bid: f64,
    pub holds: bool,
    pub trajectories: Vec<Trajectory>,
}

/// Ask quotes should be pathwise nonincreasing and bid quotes nondecreasing
/// in the initial inventory. Violations beyond `tol` are reported, not raised.
pub fn monotonicity_check(
    field: &DecouplingField,
    flow: &FlowPath,
    penalty: &PenaltyPath,
    models: &IntensityPair,
    trunc: &Truncation,
    q_list: &[f64],
    tol: f64,
) -> Result<MonotonicityReport> {
    if q_list.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("initial inventories must be strictly increasing"));
    }
    let trajectories = q_list
        .par_iter()
        .map(|&q0| forward_trajectory(field, flow, penalty, models, trunc, q0))
        .collect::<Result<Vec<_>>>()?;
    let mut worst_ask = f64::NEG_INFINITY;
    let mut worst_bid = f64::NEG_INFINITY;
    for pair in trajectories.windows(2) {
        let (lo, hi) = (&pair[0], &pair[1]);
        for i in 0..lo.times.len() {
            worst_ask = worst_ask.max(hi.delta_a[i] - lo.delta_a[i]);
            worst_bid = worst_bid.max(lo.delta_b[i] - hi.delta_b[i]);
        }
    }
    let holds = trajectories.len() < 2 || (worst_ask <= tol && worst_bid <= tol);
    Ok(MonotonicityReport { worst_ask, worst_bid, holds, trajectories })
}
