//! Decoupling field `Y_t = u(t, Q_t)` for general intensities and
//! deterministic flows.
//!
//! `u` solves the first-order quasilinear equation
//!
//! ```text
//! ∂u/∂t + μ(t, u) ∂u/∂q = 2φ(t) q,    u(T, q) = -2A q
//! ```
//!
//! where `μ` is the inventory drift of [`IntensityPair::drift`]. It is
//! integrated backward with an explicit upwind scheme, which is monotone under
//! the CFL condition and therefore keeps `u` nonincreasing in `q`.

mod impact;

pub use impact::{impact_sweep, monotonicity_check, power_fit, MonotonicityReport, PowerFit};

use crate::error::{Error, Result};
use crate::flow::{FlowPath, PenaltyPath};
use crate::grid::{running_penalty, trapezoid, TimeGrid};
use crate::intensity::{IntensityPair, Truncation};
use crate::io::Table;
use crate::riccati::Trajectory;

/// Largest CFL number accepted by the upwind step.
pub const CFL_LIMIT: f64 = 0.9;
const MONOTONE_TOL: f64 = 1e-10;

/// Uniform inventory-by-time grid for the decoupling field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QGrid {
    pub q_min: f64,
    pub q_max: f64,
    pub n_q: usize,
    pub n_t: usize,
    pub horizon: f64,
}

impl QGrid {
    pub fn new(q_min: f64, q_max: f64, n_q: usize, n_t: usize, horizon: f64) -> Result<Self> {
        let g = Self { q_min, q_max, n_q, n_t, horizon };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q_min.is_finite() && self.q_max.is_finite() && self.q_min < self.q_max) {
            return Err(Error::invalid(format!("inventory range [{}, {}] is empty", self.q_min, self.q_max)));
        }
        if self.n_q < 3 {
            return Err(Error::invalid(format!("n_q must be at least 3, got {}", self.n_q)));
        }
        TimeGrid::new(self.horizon, self.n_t)?;
        Ok(())
    }

    pub fn dq(&self) -> f64 {
        (self.q_max - self.q_min) / (self.n_q - 1) as f64
    }

    pub fn q(&self, j: usize) -> f64 {
        if j + 1 == self.n_q {
            self.q_max
        } else {
            self.q_min + j as f64 * self.dq()
        }
    }

    pub fn q_nodes(&self) -> Vec<f64> {
        (0..self.n_q).map(|j| self.q(j)).collect()
    }

    pub fn time_grid(&self) -> TimeGrid {
        TimeGrid::new(self.horizon, self.n_t).expect("validated grid")
    }

    /// Cell index and weight of `q`, or `None` outside the grid.
    fn locate(&self, q: f64) -> Option<(usize, f64)> {
        if !(q >= self.q_min && q <= self.q_max) {
            return None;
        }
        let x = (q - self.q_min) / self.dq();
        let j = (x.floor() as usize).min(self.n_q - 2);
        Some((j, x - j as f64))
    }
}

/// How to size a [`QGrid`] automatically around an initial inventory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub n_q: usize,
    /// Time nodes; chosen from the CFL target when `None`.
    pub n_t: Option<usize>,
    /// Half-width `M` of `[q₀ - M, q₀ + M]`; estimated from the flows when `None`.
    pub half_width: Option<f64>,
    pub cfl_target: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { n_q: 401, n_t: None, half_width: None, cfl_target: 0.45 }
    }
}

impl GridSpec {
    pub fn with_n_q(n_q: usize) -> Self {
        Self { n_q, ..Self::default() }
    }

    /// Half-width from total executable volume at the unpenalized quote,
    /// with 50% headroom plus one unit.
    fn default_half_width(flow: &FlowPath, models: &IntensityPair, q0: f64) -> f64 {
        let (ia, ib) = flow.integrate();
        let share = models.ask.fill_share(0.0).max(models.bid.fill_share(0.0));
        q0.abs() + 1.5 * ia.max(ib) * share + 1.0
    }

    /// Build a grid centred on `q0`. Time steps are a multiple of the flow's
    /// steps so that flow nodes stay on the field grid.
    pub fn build(
        &self,
        flow: &FlowPath,
        penalty: &PenaltyPath,
        models: &IntensityPair,
        trunc: &Truncation,
        q0: f64,
    ) -> Result<QGrid> {
        let m = self.half_width.unwrap_or_else(|| Self::default_half_width(flow, models, q0));
        let (q_min, q_max) = (q0 - m, q0 + m);
        let horizon = flow.horizon();
        let n_t = match self.n_t {
            Some(n) => n,
            None => {
                let probe = QGrid::new(q_min, q_max, self.n_q, 2, horizon)?;
                let a_max = flow.ask().iter().fold(0.0f64, |m, &x| m.max(x));
                let b_max = flow.bid().iter().fold(0.0f64, |m, &x| m.max(x));
                let speed = probe
                    .q_nodes()
                    .iter()
                    .map(|&q| models.drift(a_max, 0.0, -2.0 * penalty.terminal() * q, trunc).abs()
                        + models.drift(0.0, b_max, -2.0 * penalty.terminal() * q, trunc).abs())
                    .fold(0.0, f64::max);
                let steps = (horizon * speed / (self.cfl_target * probe.dq())).ceil().max(1.0) as usize;
                let base = flow.grid().steps();
                steps.div_ceil(base) * base + 1
            }
        };
        QGrid::new(q_min, q_max, self.n_q, n_t, horizon)
    }
}

/// `u(t_i, q_j)` stored row-major by time.
#[derive(Debug, Clone, PartialEq)]
pub struct DecouplingField {
    pub grid: QGrid,
    u: Vec<f64>,
}

impl DecouplingField {
    pub fn slice(&self, i: usize) -> &[f64] {
        &self.u[i * self.grid.n_q..(i + 1) * self.grid.n_q]
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.u[i * self.grid.n_q + j]
    }

    /// Linear interpolation in `q` on time slice `i`.
    pub fn interp_slice(&self, i: usize, q: f64) -> Option<f64> {
        let (j, w) = self.grid.locate(q)?;
        let s = self.slice(i);
        Some(s[j] * (1.0 - w) + s[j + 1] * w)
    }

    /// Bilinear interpolation in `(t, q)`.
    pub fn interp(&self, t: f64, q: f64) -> Option<f64> {
        let (i, w) = self.grid.time_grid().locate(t);
        let lo = self.interp_slice(i, q)?;
        let hi = self.interp_slice(i + 1, q)?;
        Some(lo * (1.0 - w) + hi * w)
    }

    /// Largest increase `u(t, q_{j+1}) - u(t, q_j)` over all slices; zero or
    /// negative when `u` is nonincreasing in `q`.
    pub fn max_increase(&self) -> f64 {
        (0..self.grid.n_t)
            .flat_map(|i| self.slice(i).windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// CSV with header `t,q,u`, row-major over time then inventory.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["t", "q", "u"]);
        let tg = self.grid.time_grid();
        for i in 0..self.grid.n_t {
            for j in 0..self.grid.n_q {
                t.push(vec![tg.time(i), self.grid.q(j), self.at(i, j)]);
            }
        }
        t
    }
}

/// Align flow and penalty with the field's time grid.
fn aligned(flow: &FlowPath, penalty: &PenaltyPath, grid: &QGrid) -> Result<(FlowPath, PenaltyPath)> {
    penalty.check_aligned(flow.grid())?;
    if (flow.horizon() - grid.horizon).abs() > 1e-12 * grid.horizon {
        return Err(Error::invalid(format!(
            "flow horizon {} differs from grid horizon {}",
            flow.horizon(),
            grid.horizon
        )));
    }
    let tg = grid.time_grid();
    if *flow.grid() == tg {
        return Ok((flow.clone(), penalty.clone()));
    }
    Ok((flow.resample(&tg), penalty.resample(flow.grid(), &tg)))
}

/// Backward explicit upwind solve of the decoupling-field equation.
pub fn solve_decoupling_field(
    flow: &FlowPath,
    penalty: &PenaltyPath,
    models: &IntensityPair,
    trunc: &Truncation,
    grid: &QGrid,
) -> Result<DecouplingField> {
    grid.validate()?;
    models.ask.validate()?;
    models.bid.validate()?;
    let (flow, penalty) = aligned(flow, penalty, grid)?;
    let (n_t, n_q) = (grid.n_t, grid.n_q);
    let tg = grid.time_grid();
    let (dt, dq) = (tg.dt(), grid.dq());
    let qs = grid.q_nodes();
    let terminal = penalty.terminal();

    let mut u = vec![0.0; n_t * n_q];
    for (j, &q) in qs.iter().enumerate() {
        u[(n_t - 1) * n_q + j] = -2.0 * terminal * q;
    }
    let mut mu = vec![0.0; n_q];
    for n in (1..n_t).rev() {
        let (a, b, phi) = (flow.ask()[n], flow.bid()[n], penalty.phi()[n]);
        let (head, tail) = u.split_at_mut(n * n_q);
        let cur = &tail[..n_q];
        let prev = &mut head[(n - 1) * n_q..];
        let mut speed = 0.0f64;
        for j in 0..n_q {
            mu[j] = models.drift(a, b, cur[j], trunc);
            speed = speed.max(mu[j].abs());
        }
        let cfl = speed * dt / dq;
        if !(cfl <= CFL_LIMIT) {
            let suggested = ((n_t - 1) as f64 * cfl / 0.45).ceil() as usize + 1;
            return Err(Error::Cfl { cfl, suggested_n_t: suggested });
        }
        for j in 0..n_q {
            let forward = if mu[j] > 0.0 { j + 1 < n_q } else { j == 0 };
            let d = if forward { cur[j + 1] - cur[j] } else { cur[j] - cur[j - 1] };
            prev[j] = cur[j] + dt * (mu[j] * d / dq - 2.0 * phi * qs[j]);
        }
        if let Some(j) = prev.windows(2).position(|w| w[1] - w[0] > MONOTONE_TOL) {
            return Err(Error::numeric(format!(
                "decoupling field lost monotonicity at t = {}, q = {}",
                tg.time(n - 1),
                qs[j]
            )));
        }
        if prev.iter().any(|x| !x.is_finite()) {
            return Err(Error::numeric(format!("non-finite decoupling field at t = {}", tg.time(n - 1))));
        }
    }
    Ok(DecouplingField { grid: *grid, u })
}

/// Optimal inventory path from `q0` by RK4 on `Q' = μ(t, u(t, Q))`, with
/// quotes `δᵃ = δ̃ᵃ*(Y)`, `δᵇ = δ̃ᵇ*(-Y)` and `Y = u(t, Q)`.
pub fn forward_trajectory(
    field: &DecouplingField,
    flow: &FlowPath,
    penalty: &PenaltyPath,
    models: &IntensityPair,
    trunc: &Truncation,
    q0: f64,
) -> Result<Trajectory> {
    let grid = field.grid;
    let (flow, penalty) = aligned(flow, penalty, &grid)?;
    let tg = grid.time_grid();
    let (n, dt) = (grid.n_t, tg.dt());
    let margin = 2.0 * grid.dq();
    let inside = |t: f64, q: f64| -> Result<()> {
        if q.is_finite() && q >= grid.q_min + margin && q <= grid.q_max - margin {
            Ok(())
        } else {
            Err(Error::Domain { t, q })
        }
    };
    inside(0.0, q0)?;

    let (a, b) = (flow.ask(), flow.bid());
    let mid = |v: &[f64], i: usize| 0.5 * (v[i] + v[i + 1]);
    let u_mid = |i: usize, q: f64| -> Option<f64> {
        Some(0.5 * (field.interp_slice(i, q)? + field.interp_slice(i + 1, q)?))
    };
    let drift = |ai: f64, bi: f64, y: Option<f64>, t: f64, q: f64| -> Result<f64> {
        y.map(|y| models.drift(ai, bi, y, trunc)).ok_or(Error::Domain { t, q })
    };

    let mut q = vec![q0; n];
    for i in 0..n - 1 {
        let (t, th) = (tg.time(i), tg.time(i) + 0.5 * dt);
        let (am, bm) = (mid(a, i), mid(b, i));
        let y = q[i];
        let k1 = drift(a[i], b[i], field.interp_slice(i, y), t, y)?;
        let y2 = y + 0.5 * dt * k1;
        let k2 = drift(am, bm, u_mid(i, y2), th, y2)?;
        let y3 = y + 0.5 * dt * k2;
        let k3 = drift(am, bm, u_mid(i, y3), th, y3)?;
        let y4 = y + dt * k3;
        let k4 = drift(a[i + 1], b[i + 1], field.interp_slice(i + 1, y4), tg.time(i + 1), y4)?;
        q[i + 1] = y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        inside(tg.time(i + 1), q[i + 1])?;
    }

    let y: Vec<f64> = (0..n)
        .map(|i| field.interp_slice(i, q[i]).expect("trajectory checked inside grid"))
        .collect();
    let (delta_a, delta_b): (Vec<f64>, Vec<f64>) = y.iter().map(|&y| models.quotes(y, trunc)).unzip();
    let revenue: Vec<f64> = (0..n)
        .map(|i| {
            a[i] * delta_a[i] * models.ask.lambda(delta_a[i]) + b[i] * delta_b[i] * models.bid.lambda(delta_b[i])
        })
        .collect();
    let objective = trapezoid(&revenue, dt)
        - running_penalty(penalty.phi(), &q, dt)
        - penalty.terminal() * q[n - 1] * q[n - 1];
    Ok(Trajectory { times: tg.times(), q, y, delta_a, delta_b, objective })
}

/// Field and trajectory on an automatically sized grid.
///
/// A trajectory that leaves the grid doubles the half-width; a CFL failure
/// switches to the suggested number of time nodes. Each is retried a few
/// times before the error is returned.
pub fn solve_auto(
    flow: &FlowPath,
    penalty: &PenaltyPath,
    models: &IntensityPair,
    trunc: &Truncation,
    spec: &GridSpec,
    q0: f64,
) -> Result<(DecouplingField, Trajectory)> {
    let mut grid = spec.build(flow, penalty, models, trunc, q0)?;
    let mut last = None;
    for _ in 0..6 {
        let attempt = solve_decoupling_field(flow, penalty, models, trunc, &grid)
            .and_then(|f| forward_trajectory(&f, flow, penalty, models, trunc, q0).map(|t| (f, t)));
        match attempt {
            Ok(r) => return Ok(r),
            Err(Error::Domain { .. }) if spec.half_width.is_none() => {
                let m = 2.0 * (grid.q_max - q0);
                let widened = GridSpec { half_width: Some(m), ..*spec };
                let rebuilt = widened.build(flow, penalty, models, trunc, q0)?;
                grid = QGrid { n_t: rebuilt.n_t.max(grid.n_t), ..rebuilt };
                last = Some(Error::Domain { t: 0.0, q: q0 });
            }
            Err(Error::Cfl { suggested_n_t, cfl }) if spec.n_t.is_none() => {
                let base = flow.grid().steps();
                grid.n_t = (suggested_n_t - 1).div_ceil(base) * base + 1;
                last = Some(Error::Cfl { cfl, suggested_n_t });
            }
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap_or_else(|| Error::numeric("automatic grid sizing did not converge")))
}

/// CSV with header `t,Q,Y,delta_a,delta_b`.
pub fn trajectory_table(tr: &Trajectory) -> Table {
    let mut t = Table::new(&["t", "Q", "Y", "delta_a", "delta_b"]);
    for i in 0..tr.times.len() {
        t.push(vec![tr.times[i], tr.q[i], tr.y[i], tr.delta_a[i], tr.delta_b[i]]);
    }
    t
}
