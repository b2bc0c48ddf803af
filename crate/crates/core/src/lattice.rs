//! Avellaneda–Stoikov market making with discrete order size `Δ`, and its
//! macroscopic counterpart with continuous inventory.
//!
//! With `u = x + qs + θ(t, q)` and exponential intensity `Λ(δ) = e^{-γδ}`:
//!
//! ```text
//! θ_t = ½σ²q² - Δλᵇ W((θ(q) - θ(q+Δ))/Δ) - Δλᵃ W((θ(q) - θ(q-Δ))/Δ),   θ(T) = -Aq²
//! ```
//!
//! The macroscopic `θ̃` replaces the lattice differences by `∓∂θ̃/∂q`. It is
//! discretized with the same one-sided differences on a fine grid of spacing
//! `dq`, which gives a monotone scheme. Both are backward RK4 systems with as
//! many substeps as the local stiffness requires.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fbsde::QGrid;
use crate::grid::TimeGrid;
use crate::intensity::IntensityModel;
use crate::io::Table;
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ASParams {
    /// Order size `Δ`.
    pub delta: f64,
    pub lambda_a: f64,
    pub lambda_b: f64,
    pub sigma: f64,
    pub terminal: f64,
    pub gamma: f64,
    pub horizon: f64,
    /// Inventory states run over `[-q_bound, q_bound]` in steps of `Δ`.
    pub q_bound: f64,
}

impl ASParams {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive, got {v}")))
            }
        };
        let nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be nonnegative, got {v}")))
            }
        };
        pos("delta", self.delta)?;
        pos("gamma", self.gamma)?;
        pos("horizon", self.horizon)?;
        pos("q_bound", self.q_bound)?;
        nonneg("lambda_a", self.lambda_a)?;
        nonneg("lambda_b", self.lambda_b)?;
        nonneg("sigma", self.sigma)?;
        nonneg("terminal", self.terminal)?;
        let k = self.q_bound / self.delta;
        if (k - k.round()).abs() > 1e-9 * k.max(1.0) {
            return Err(Error::invalid(format!(
                "order size {} does not divide the lattice half-width {}",
                self.delta, self.q_bound
            )));
        }
        Ok(())
    }

    pub fn model(&self) -> IntensityModel {
        IntensityModel::Exponential { gamma: self.gamma }
    }

    /// Lattice states `-q_bound, ..., q_bound`.
    pub fn states(&self) -> Vec<f64> {
        let k = (self.q_bound / self.delta).round() as i64;
        (-k..=k).map(|i| i as f64 * self.delta).collect()
    }

    /// Index of the lattice state closest to `q`.
    pub fn state_index(&self, q: f64) -> Result<usize> {
        let k = (self.q_bound / self.delta).round();
        let x = (q / self.delta).round();
        if (q / self.delta - x).abs() > 1e-9 || x.abs() > k {
            return Err(Error::invalid(format!("inventory {q} is not a lattice state")));
        }
        Ok((x + k) as usize)
    }
}

/// `θ(t_i, q_j)` on a uniform inventory grid, row-major by time.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaSurface {
    pub times: TimeGrid,
    pub q: Vec<f64>,
    pub spacing: f64,
    values: Vec<f64>,
}

impl ThetaSurface {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.q.len() + j]
    }

    pub fn slice(&self, i: usize) -> &[f64] {
        let n = self.q.len();
        &self.values[i * n..(i + 1) * n]
    }

    /// Linear interpolation in `q` on slice `i`; `None` outside the grid.
    pub fn interp_q(&self, i: usize, q: f64) -> Option<f64> {
        let s = self.slice(i);
        let x = (q - self.q[0]) / self.spacing;
        if !(x >= -1e-9 && x <= (s.len() - 1) as f64 + 1e-9) {
            return None;
        }
        let j = (x.floor().max(0.0) as usize).min(s.len() - 2);
        let w = (x - j as f64).clamp(0.0, 1.0);
        Some(s[j] * (1.0 - w) + s[j + 1] * w)
    }

    /// CSV with header `t,q,theta`.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["t", "q", "theta"]);
        for i in 0..self.times.len() {
            for (j, &q) in self.q.iter().enumerate() {
                t.push(vec![self.times.time(i), q, self.at(i, j)]);
            }
        }
        t
    }
}

/// Backward RK4 for the lattice ODE system with spacing `h` and flow
/// multipliers `Δλᵃ`, `Δλᵇ`.
fn integrate_theta(p: &ASParams, q: Vec<f64>, h: f64, n_t: usize) -> Result<ThetaSurface> {
    let times = TimeGrid::new(p.horizon, n_t)?;
    let model = p.model();
    let n = q.len();
    let (ma, mb) = (p.delta * p.lambda_a, p.delta * p.lambda_b);
    let half_var = 0.5 * p.sigma * p.sigma;

    let rhs = |th: &[f64], out: &mut [f64]| {
        for j in 0..n {
            let mut v = half_var * q[j] * q[j];
            if j + 1 < n {
                v -= mb * model.w_value((th[j] - th[j + 1]) / h);
            }
            if j > 0 {
                v -= ma * model.w_value((th[j] - th[j - 1]) / h);
            }
            out[j] = v;
        }
    };
    // Largest diagonal entry of the Jacobian, for the RK4 stability bound.
    let stiffness = |th: &[f64]| -> f64 {
        (0..n)
            .map(|j| {
                let mut c = 0.0;
                if j + 1 < n {
                    c += mb * model.fill_share((th[j] - th[j + 1]) / h);
                }
                if j > 0 {
                    c += ma * model.fill_share((th[j] - th[j - 1]) / h);
                }
                c / h
            })
            .fold(0.0, f64::max)
    };

    let bound_coef = p.terminal + half_var * p.horizon;
    let q_max = q.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let data_bound = bound_coef * q_max * q_max
        + p.horizon * (ma + mb) * model.w_value(-2.0 * bound_coef * q_max - 1.0);

    let mut values = vec![0.0; n * n_t];
    for j in 0..n {
        values[(n_t - 1) * n + j] = -p.terminal * q[j] * q[j];
    }
    let mut y = values[(n_t - 1) * n..].to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    for i in (0..n_t - 1).rev() {
        // Each substep keeps |h|·(Jacobian diagonal) ≤ 1, re-measured as θ evolves.
        let mut remaining = times.dt();
        while remaining > 0.0 {
            let step = remaining.min(1.0 / stiffness(&y).max(1e-12));
            let step = if remaining - step < 1e-12 * times.dt() { remaining } else { step };
            remaining -= step;
            let hstep = -step;
            rhs(&y, &mut k1);
            for j in 0..n {
                tmp[j] = y[j] + 0.5 * hstep * k1[j];
            }
            rhs(&tmp, &mut k2);
            for j in 0..n {
                tmp[j] = y[j] + 0.5 * hstep * k2[j];
            }
            rhs(&tmp, &mut k3);
            for j in 0..n {
                tmp[j] = y[j] + hstep * k3[j];
            }
            rhs(&tmp, &mut k4);
            for j in 0..n {
                y[j] += hstep / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
            if y.iter().any(|v| !v.is_finite()) {
                break;
            }
        }
        if let Some(j) = y.iter().position(|v| !(v.is_finite() && v.abs() <= 10.0 * data_bound.max(1.0))) {
            let suggested = (n_t - 1) * 2 + 1;
            return Err(Error::numeric(format!(
                "theta blew up to {} at t = {}, q = {}; try n_t = {suggested}",
                y[j],
                times.time(i),
                q[j]
            )));
        }
        values[i * n..(i + 1) * n].copy_from_slice(&y);
    }
    Ok(ThetaSurface { times, q, spacing: h, values })
}

/// Lattice `θ` with `n_t` output slices.
pub fn solve_theta_discrete(p: &ASParams, n_t: usize) -> Result<ThetaSurface> {
    p.validate()?;
    integrate_theta(p, p.states(), p.delta, n_t)
}

/// Macroscopic `θ̃` on the inventory grid `qgrid` (its `n_t` sets the output slices).
pub fn solve_theta_macro(p: &ASParams, qgrid: &QGrid) -> Result<ThetaSurface> {
    p.validate()?;
    qgrid.validate()?;
    if (qgrid.horizon - p.horizon).abs() > 1e-12 * p.horizon {
        return Err(Error::invalid("grid horizon differs from the model horizon"));
    }
    integrate_theta(p, qgrid.q_nodes(), qgrid.dq(), qgrid.n_t)
}

/// Optimal quotes on the lattice; `+∞` marks a side that is not quoted.
#[derive(Debug, Clone, PartialEq)]
pub struct QuoteLattice {
    pub ask: Vec<f64>,
    pub bid: Vec<f64>,
    pub n_q: usize,
}

impl QuoteLattice {
    pub fn ask_at(&self, i: usize, j: usize) -> f64 {
        self.ask[i * self.n_q + j]
    }

    pub fn bid_at(&self, i: usize, j: usize) -> f64 {
        self.bid[i * self.n_q + j]
    }
}

/// `δ̂ᵃ = δ*((θ(q) - θ(q-Δ))/Δ)`, `δ̂ᵇ = δ*((θ(q) - θ(q+Δ))/Δ)`.
pub fn optimal_quotes_discrete(theta: &ThetaSurface, p: &ASParams) -> QuoteLattice {
    let model = p.model();
    let n = theta.q.len();
    let h = theta.spacing;
    let mut ask = Vec::with_capacity(n * theta.times.len());
    let mut bid = Vec::with_capacity(n * theta.times.len());
    for i in 0..theta.times.len() {
        let s = theta.slice(i);
        for j in 0..n {
            ask.push(if j > 0 { model.delta_star((s[j] - s[j - 1]) / h) } else { f64::INFINITY });
            bid.push(if j + 1 < n { model.delta_star((s[j] - s[j + 1]) / h) } else { f64::INFINITY });
        }
    }
    QuoteLattice { ask, bid, n_q: n }
}

/// Monte Carlo summary of optimally controlled lattice inventories.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    /// Report times (the θ time grid).
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    /// `counts[i][k]`: paths in lattice state `k` at report time `i`.
    pub counts: Vec<Vec<u32>>,
    pub states: Vec<f64>,
    /// Largest per-step fill probability met along the simulated paths, before clipping.
    pub max_step_prob: f64,
    /// Fraction of (path, time) samples on the outermost states.
    pub edge_fraction: f64,
    pub warnings: Vec<String>,
}

impl PathBundle {
    pub fn mean_table(&self) -> Table {
        let mut t = Table::new(&["t", "mean_q", "stderr"]);
        for i in 0..self.times.len() {
            t.push(vec![self.times[i], self.mean[i], self.stderr[i]]);
        }
        t
    }

    /// Nonzero occupancy counts as `t,q,count`.
    pub fn heatmap_table(&self) -> Table {
        let mut t = Table::new(&["t", "q", "count"]);
        for (i, row) in self.counts.iter().enumerate() {
            for (k, &c) in row.iter().enumerate() {
                if c > 0 {
                    t.push(vec![self.times[i], self.states[k], c as f64]);
                }
            }
        }
        t
    }
}

/// Largest acceptable per-step fill probability.
pub const MAX_STEP_PROB: f64 = 0.1;

/// Thin-step Bernoulli simulation of the lattice inventory under the optimal
/// quotes. `n_steps` must be a multiple of the θ time steps; path `k` draws
/// from substream `k` of `seed`.
pub fn simulate_as_paths(
    theta: &ThetaSurface,
    p: &ASParams,
    q0: f64,
    seed: u64,
    n_paths: usize,
    n_steps: usize,
) -> Result<PathBundle> {
    p.validate()?;
    if n_paths == 0 {
        return Err(Error::invalid("n_paths must be at least 1"));
    }
    let slices = theta.times.steps();
    if n_steps == 0 || !n_steps.is_multiple_of(slices) {
        return Err(Error::invalid(format!("n_steps = {n_steps} must be a multiple of {slices}")));
    }
    if theta.q.len() != p.states().len() {
        return Err(Error::invalid("theta was not solved on this lattice"));
    }
    let start = p.state_index(q0)?;
    let n = theta.q.len();
    let model = p.model();
    let quotes = optimal_quotes_discrete(theta, p);
    let rates = |side: &[f64], lambda: f64| -> Vec<f64> {
        side.iter().map(|&d| if d.is_finite() { lambda * model.lambda(d) } else { 0.0 }).collect()
    };
    let (rate_a, rate_b) = (rates(&quotes.ask, p.lambda_a), rates(&quotes.bid, p.lambda_b));
    let ratio = n_steps / slices;
    let dt = p.horizon / n_steps as f64;

    let paths: Vec<(Vec<u32>, f64)> = (0..n_paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = substream(seed, path as u64);
            let mut k = start;
            let mut record = Vec::with_capacity(slices + 1);
            let mut worst = 0.0f64;
            record.push(k as u32);
            for s in 0..n_steps {
                let i = s / ratio;
                let w = (s - i * ratio) as f64 / ratio as f64;
                let at = |r: &[f64]| r[i * n + k] * (1.0 - w) + r[(i + 1) * n + k] * w;
                let (ra, rb) = (at(&rate_a) * dt, at(&rate_b) * dt);
                worst = worst.max(ra).max(rb);
                let (pa, pb) = (ra.min(1.0), rb.min(1.0));
                let sell = rng.random::<f64>() < pa;
                let buy = rng.random::<f64>() < pb;
                if sell && k > 0 {
                    k -= 1;
                }
                if buy && k + 1 < n {
                    k += 1;
                }
                if (s + 1) % ratio == 0 {
                    record.push(k as u32);
                }
            }
            (record, worst)
        })
        .collect();
    let max_step_prob = paths.iter().fold(0.0f64, |m, p| m.max(p.1));

    let states = theta.q.clone();
    let mut counts = vec![vec![0u32; n]; slices + 1];
    let mut mean = vec![0.0; slices + 1];
    let mut stderr = vec![0.0; slices + 1];
    let mut edge = 0usize;
    for i in 0..=slices {
        let (mut s, mut s2) = (0.0, 0.0);
        for (path, _) in &paths {
            let k = path[i] as usize;
            counts[i][k] += 1;
            if k == 0 || k + 1 == n {
                edge += 1;
            }
            s += states[k];
            s2 += states[k] * states[k];
        }
        let m = s / n_paths as f64;
        mean[i] = m;
        stderr[i] = if n_paths > 1 {
            (((s2 - n_paths as f64 * m * m) / (n_paths as f64 - 1.0)).max(0.0) / n_paths as f64).sqrt()
        } else {
            0.0
        };
    }
    let edge_fraction = edge as f64 / (n_paths * (slices + 1)) as f64;
    let mut warnings = Vec::new();
    if max_step_prob > MAX_STEP_PROB {
        warnings.push(format!(
            "per-step fill probability reaches {max_step_prob:.3}; increase n_steps for accuracy"
        ));
    }
    if edge_fraction > 1e-3 {
        warnings.push(format!("{:.3}% of samples sit on the lattice edge", 100.0 * edge_fraction));
    }
    Ok(PathBundle {
        times: theta.times.times(),
        mean,
        stderr,
        counts,
        states,
        max_step_prob,
        edge_fraction,
        warnings,
    })
}

/// Macroscopic inventory `Q' = -Δλᵃ Λ(δ*(θ̃_q)) + Δλᵇ Λ(δ*(-θ̃_q))` on the
/// θ̃ time grid, with `substeps` RK4 steps per slice.
pub fn macro_inventory_path(theta: &ThetaSurface, p: &ASParams, q0: f64, substeps: usize) -> Result<Vec<f64>> {
    let model = p.model();
    let n = theta.q.len();
    let h = theta.spacing;
    let grads: Vec<Vec<f64>> = (0..theta.times.len())
        .map(|i| {
            let s = theta.slice(i);
            (0..n)
                .map(|j| {
                    if j == 0 {
                        (s[1] - s[0]) / h
                    } else if j + 1 == n {
                        (s[n - 1] - s[n - 2]) / h
                    } else {
                        (s[j + 1] - s[j - 1]) / (2.0 * h)
                    }
                })
                .collect()
        })
        .collect();
    let grad_at = |i: usize, w: f64, q: f64| -> Result<f64> {
        let x = (q - theta.q[0]) / h;
        if !(x >= 0.0 && x <= (n - 1) as f64) {
            return Err(Error::Domain { t: theta.times.time(i), q });
        }
        let j = (x.floor() as usize).min(n - 2);
        let wq = x - j as f64;
        let row = |g: &[f64]| g[j] * (1.0 - wq) + g[j + 1] * wq;
        Ok(if w == 0.0 { row(&grads[i]) } else { row(&grads[i]) * (1.0 - w) + row(&grads[i + 1]) * w })
    };
    let (ma, mb) = (p.delta * p.lambda_a, p.delta * p.lambda_b);
    let drift = |i: usize, w: f64, q: f64| -> Result<f64> {
        let g = grad_at(i, w, q)?;
        Ok(-ma * model.fill_share(g) + mb * model.fill_share(-g))
    };
    let subs = substeps.max(1);
    let dt = theta.times.dt() / subs as f64;
    let mut out = vec![q0; theta.times.len()];
    let mut q = q0;
    for i in 0..theta.times.steps() {
        for s in 0..subs {
            let (w0, w1) = (s as f64 / subs as f64, (s as f64 + 0.5) / subs as f64);
            let w2 = (s + 1) as f64 / subs as f64;
            let k1 = drift(i, w0, q)?;
            let k2 = drift(i, w1, q + 0.5 * dt * k1)?;
            let k3 = drift(i, w1, q + 0.5 * dt * k2)?;
            let k4 = drift(i, w2, q + dt * k3)?;
            q += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        out[i + 1] = q;
    }
    Ok(out)
}

/// One row of the `Δ` comparison at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub delta: f64,
    /// `sup_q |θ(0, q) - θ̃(0, q)|` over the common points.
    pub sup_gap: f64,
    /// `min_q (θ̃(0, q) - θ(0, q))`.
    pub min_excess: f64,
    pub q: Vec<f64>,
    pub theta: Vec<f64>,
    pub theta_macro: Vec<f64>,
}

/// Solve both models for each `Δ` and compare `θ(0, ·)` with `θ̃(0, ·)` on
/// common points spaced by the largest `Δ` across `q_range`.
pub fn compare_theta(
    p: &ASParams,
    deltas: &[f64],
    q_range: (f64, f64),
    n_t: usize,
    macro_dq: f64,
) -> Result<Vec<CompareRow>> {
    if deltas.is_empty() {
        return Err(Error::invalid("need at least one order size"));
    }
    let (lo, hi) = q_range;
    if !(lo < hi && lo >= -p.q_bound && hi <= p.q_bound) {
        return Err(Error::invalid(format!("q range [{lo}, {hi}] must lie inside ±{}", p.q_bound)));
    }
    let step = deltas.iter().fold(0.0f64, |m, &d| m.max(d));
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    let points: Vec<f64> = (0..count).map(|k| lo + k as f64 * step).collect();
    let n_q = (2.0 * p.q_bound / macro_dq).round() as usize + 1;

    deltas
        .par_iter()
        .map(|&delta| {
            let pd = ASParams { delta, ..*p };
            let disc = solve_theta_discrete(&pd, n_t)?;
            let grid = QGrid::new(-p.q_bound, p.q_bound, n_q, n_t, p.horizon)?;
            let mac = solve_theta_macro(&pd, &grid)?;
            let pick = |s: &ThetaSurface| -> Result<Vec<f64>> {
                points
                    .iter()
                    .map(|&q| s.interp_q(0, q).ok_or_else(|| Error::invalid(format!("q = {q} outside grid"))))
                    .collect()
            };
            let (theta, theta_macro) = (pick(&disc)?, pick(&mac)?);
            let sup_gap = theta.iter().zip(&theta_macro).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let min_excess = theta.iter().zip(&theta_macro).map(|(a, b)| b - a).fold(f64::INFINITY, f64::min);
            Ok(CompareRow { delta, sup_gap, min_excess, q: points.clone(), theta, theta_macro })
        })
        .collect()
}

pub fn compare_table(rows: &[CompareRow]) -> Table {
    let mut t = Table::new(&["delta", "sup_gap", "min_excess"]);
    for r in rows {
        t.push(vec![r.delta, r.sup_gap, r.min_excess]);
    }
    t
}
