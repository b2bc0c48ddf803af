//! HJB coefficients `h₂, h₁, h₀` when flows and penalties are driven by a
//! one-dimensional Ornstein–Uhlenbeck factor `L`.
//!
//! In backward time `τ = T - t` with generator `𝓛 = κ(m - l)∂_l + ½σ²∂_ll`:
//!
//! ```text
//! ∂_τ h₂ = 𝓛h₂ + γ(a+b) h₂² - φ
//! ∂_τ h₁ = 𝓛h₁ + γ(a+b) h₂ h₁ + ζ(b-a) h₂
//! ∂_τ h₀ = 𝓛h₀ + ζ(b-a) h₁ + γb/4 (ζ/γ - h₁)² + γa/4 (ζ/γ + h₁)²
//! ```
//!
//! with `h₂(T) = -A(L_T)` and `h₁(T) = h₀(T) = 0`. Each step is a θ-scheme
//! (Crank–Nicolson by default) in `𝓛`; the quadratic term of `h₂` is handled by
//! Picard iteration. The outer nodes extrapolate linearly, i.e. `∂_ll h = 0`.
//!
//! [`feynman_kac_fixed_point`] evaluates the same `h₂` independently by Monte
//! Carlo iteration of the map
//! `g ↦ E[-A(L_T) e^{∫γ(a+b)g} - ∫ φ e^{∫γ(a+b)g}]`.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::OuFactor;
use crate::grid::TimeGrid;
use crate::io::Table;
use crate::rng::substream;

/// Uniform lattice over `[0, T] × [l_min, l_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorGrid {
    pub l_min: f64,
    pub l_max: f64,
    pub n_l: usize,
    pub n_t: usize,
    pub horizon: f64,
}

impl FactorGrid {
    pub fn new(l_min: f64, l_max: f64, n_l: usize, n_t: usize, horizon: f64) -> Result<Self> {
        let g = Self { l_min, l_max, n_l, n_t, horizon };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l_min.is_finite() && self.l_max.is_finite() && self.l_min < self.l_max) {
            return Err(Error::invalid(format!("factor range [{}, {}] is empty", self.l_min, self.l_max)));
        }
        if self.n_l < 3 {
            return Err(Error::invalid(format!("n_l must be at least 3, got {}", self.n_l)));
        }
        TimeGrid::new(self.horizon, self.n_t)?;
        Ok(())
    }

    pub fn dl(&self) -> f64 {
        (self.l_max - self.l_min) / (self.n_l - 1) as f64
    }

    pub fn l(&self, j: usize) -> f64 {
        if j + 1 == self.n_l {
            self.l_max
        } else {
            self.l_min + j as f64 * self.dl()
        }
    }

    pub fn l_nodes(&self) -> Vec<f64> {
        (0..self.n_l).map(|j| self.l(j)).collect()
    }

    pub fn time_grid(&self) -> TimeGrid {
        TimeGrid::new(self.horizon, self.n_t).expect("validated grid")
    }

    fn locate(&self, l: f64) -> (usize, f64) {
        let x = ((l - self.l_min) / self.dl()).clamp(0.0, (self.n_l - 1) as f64);
        let j = (x.floor() as usize).min(self.n_l - 2);
        (j, x - j as f64)
    }
}

/// One coefficient `h(t_i, l_j)`, row-major by time.
#[derive(Debug, Clone, PartialEq)]
pub struct HSurface {
    pub grid: FactorGrid,
    values: Vec<f64>,
}

impl HSurface {
    fn zeros(grid: FactorGrid) -> Self {
        Self { grid, values: vec![0.0; grid.n_t * grid.n_l] }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.n_l + j]
    }

    pub fn slice(&self, i: usize) -> &[f64] {
        &self.values[i * self.grid.n_l..(i + 1) * self.grid.n_l]
    }

    fn slice_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.grid.n_l;
        &mut self.values[i * n..(i + 1) * n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Bilinear interpolation; `l` is clamped to the lattice.
    pub fn interp(&self, t: f64, l: f64) -> f64 {
        let (i, wt) = self.grid.time_grid().locate(t);
        self.interp_cell(i, wt, l)
    }

    #[inline]
    fn interp_cell(&self, i: usize, wt: f64, l: f64) -> f64 {
        let (j, wl) = self.grid.locate(l);
        let row = |i: usize| self.at(i, j) * (1.0 - wl) + self.at(i, j + 1) * wl;
        if wt == 0.0 {
            row(i)
        } else {
            row(i) * (1.0 - wt) + row(i + 1) * wt
        }
    }

    pub fn max_abs_diff(&self, other: &HSurface) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Time-stepping options for the PDE solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeOptions {
    /// Implicitness; 0.5 is Crank–Nicolson, 1.0 fully implicit.
    pub theta: f64,
    pub picard_tol: f64,
    pub max_picard: usize,
}

impl Default for PdeOptions {
    fn default() -> Self {
        Self { theta: 0.5, picard_tol: 1e-10, max_picard: 200 }
    }
}

/// Tridiagonal discretization of `𝓛`: `(𝓛h)_j = lo_j h_{j-1} + di_j h_j + up_j h_{j+1}`.
struct Generator {
    lo: Vec<f64>,
    di: Vec<f64>,
    up: Vec<f64>,
}

impl Generator {
    fn new(factor: &OuFactor, grid: &FactorGrid) -> Self {
        let n = grid.n_l;
        let dl = grid.dl();
        let s = 0.5 * factor.vol * factor.vol;
        let (mut lo, mut di, mut up) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for j in 0..n {
            let m = factor.drift(grid.l(j));
            if j == 0 {
                di[j] = -m / dl;
                up[j] = m / dl;
            } else if j == n - 1 {
                lo[j] = -m / dl;
                di[j] = m / dl;
            } else if m.abs() * dl <= 2.0 * s {
                lo[j] = s / (dl * dl) - m / (2.0 * dl);
                up[j] = s / (dl * dl) + m / (2.0 * dl);
                di[j] = -2.0 * s / (dl * dl);
            } else {
                lo[j] = s / (dl * dl) + (-m).max(0.0) / dl;
                up[j] = s / (dl * dl) + m.max(0.0) / dl;
                di[j] = -2.0 * s / (dl * dl) - m.abs() / dl;
            }
        }
        Self { lo, di, up }
    }

    fn apply(&self, h: &[f64], out: &mut [f64]) {
        let n = h.len();
        for j in 0..n {
            let mut v = self.di[j] * h[j];
            if j > 0 {
                v += self.lo[j] * h[j - 1];
            }
            if j + 1 < n {
                v += self.up[j] * h[j + 1];
            }
            out[j] = v;
        }
    }
}

/// Thomas algorithm for `lo x_{j-1} + di x_j + up x_{j+1} = rhs`.
fn solve_tridiagonal(lo: &[f64], di: &[f64], up: &[f64], rhs: &[f64], x: &mut [f64]) -> Result<()> {
    let n = di.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut pivot = di[0];
    for j in 0..n {
        if j > 0 {
            pivot = di[j] - lo[j] * c[j - 1];
        }
        if pivot.abs() < 1e-300 || !pivot.is_finite() {
            return Err(Error::numeric("singular tridiagonal system"));
        }
        c[j] = if j + 1 < n { up[j] / pivot } else { 0.0 };
        d[j] = if j == 0 { rhs[0] / pivot } else { (rhs[j] - lo[j] * d[j - 1]) / pivot };
    }
    x[n - 1] = d[n - 1];
    for j in (0..n - 1).rev() {
        x[j] = d[j] - c[j] * x[j + 1];
    }
    Ok(())
}

/// Link values on the lattice nodes.
struct NodeData {
    rate_sum: Vec<f64>,
    imbalance: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    phi: Vec<f64>,
    terminal: Vec<f64>,
}

impl NodeData {
    fn new(factor: &OuFactor, grid: &FactorGrid) -> Self {
        let ls = grid.l_nodes();
        let map = |f: &dyn Fn(f64) -> f64| ls.iter().map(|&l| f(l)).collect::<Vec<f64>>();
        let k = factor.links;
        let a = map(&|l| k.a.eval(l));
        let b = map(&|l| k.b.eval(l));
        Self {
            rate_sum: a.iter().zip(&b).map(|(a, b)| a + b).collect(),
            imbalance: a.iter().zip(&b).map(|(a, b)| b - a).collect(),
            phi: map(&|l| k.phi.eval(l)),
            terminal: map(&|l| k.terminal.eval(l)),
            a,
            b,
        }
    }
}

/// One θ-step of `∂_τ h = 𝓛h + c h + f` from `old` (with `c_old`, `f_old`) to
/// `new` (with `c_new`, `f_new`).
#[allow(clippy::too_many_arguments)]
fn theta_step(
    gen: &Generator,
    dtau: f64,
    theta: f64,
    old: &[f64],
    old_rate: &[f64],
    c_new: &[f64],
    f_new: &[f64],
    new: &mut [f64],
) -> Result<()> {
    let n = old.len();
    let mut lh = vec![0.0; n];
    gen.apply(old, &mut lh);
    let rhs: Vec<f64> = (0..n)
        .map(|j| old[j] + (1.0 - theta) * dtau * (lh[j] + old_rate[j]) + theta * dtau * f_new[j])
        .collect();
    let lo: Vec<f64> = gen.lo.iter().map(|x| -theta * dtau * x).collect();
    let up: Vec<f64> = gen.up.iter().map(|x| -theta * dtau * x).collect();
    let di: Vec<f64> = (0..n).map(|j| 1.0 - theta * dtau * (gen.di[j] + c_new[j])).collect();
    solve_tridiagonal(&lo, &di, &up, &rhs, new)
}

fn check_factor(factor: &OuFactor, grid: &FactorGrid, gamma: f64) -> Result<()> {
    factor.validate()?;
    grid.validate()?;
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
    }
    Ok(())
}

pub fn solve_h2_pde(factor: &OuFactor, grid: &FactorGrid, gamma: f64) -> Result<HSurface> {
    solve_h2_pde_with(factor, grid, gamma, PdeOptions::default())
}

/// `h₂` with the band `-(Ā + φ̄T) ≤ h₂ ≤ 0` checked after every step.
pub fn solve_h2_pde_with(factor: &OuFactor, grid: &FactorGrid, gamma: f64, opts: PdeOptions) -> Result<HSurface> {
    check_factor(factor, grid, gamma)?;
    let gen = Generator::new(factor, grid);
    let data = NodeData::new(factor, grid);
    let n = grid.n_l;
    let dtau = grid.time_grid().dt();
    let floor = -(data.terminal.iter().fold(0.0f64, |m, &x| m.max(x))
        + data.phi.iter().fold(0.0f64, |m, &x| m.max(x)) * grid.horizon);
    let reaction = |h: &[f64]| -> Vec<f64> {
        (0..n).map(|j| gamma * data.rate_sum[j] * h[j] * h[j] - data.phi[j]).collect()
    };
    let source: Vec<f64> = data.phi.iter().map(|p| -p).collect();

    let mut out = HSurface::zeros(*grid);
    out.slice_mut(grid.n_t - 1).copy_from_slice(&data.terminal.iter().map(|a| -a).collect::<Vec<_>>());
    let mut next = vec![0.0; n];
    for i in (0..grid.n_t - 1).rev() {
        let old = out.slice(i + 1).to_vec();
        let old_rate = reaction(&old);
        let mut guess = old.clone();
        let mut converged = false;
        for _ in 0..opts.max_picard {
            let c: Vec<f64> = (0..n).map(|j| gamma * data.rate_sum[j] * guess[j]).collect();
            theta_step(&gen, dtau, opts.theta, &old, &old_rate, &c, &source, &mut next)?;
            let change = next.iter().zip(&guess).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            guess.copy_from_slice(&next);
            if change <= opts.picard_tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::numeric(format!(
                "Picard iteration for h2 did not converge in {} iterations at t = {}",
                opts.max_picard,
                grid.time_grid().time(i)
            )));
        }
        if let Some(j) = guess.iter().position(|&h| !(h >= floor - 1e-8 && h <= 1e-8)) {
            return Err(Error::numeric(format!(
                "h2 = {} left the band [{floor}, 0] at t = {}, l = {}",
                guess[j],
                grid.time_grid().time(i),
                grid.l(j)
            )));
        }
        out.slice_mut(i).copy_from_slice(&guess);
    }
    Ok(out)
}

/// Linear equations for `h₁` and `h₀` given `h₂` on the same lattice.
pub fn solve_h1_h0_pde(
    h2: &HSurface,
    factor: &OuFactor,
    zeta: f64,
    gamma: f64,
    opts: PdeOptions,
) -> Result<(HSurface, HSurface)> {
    let grid = h2.grid;
    check_factor(factor, &grid, gamma)?;
    if !(zeta.is_finite() && zeta > 0.0) {
        return Err(Error::invalid(format!("zeta must be positive, got {zeta}")));
    }
    let gen = Generator::new(factor, &grid);
    let d = NodeData::new(factor, &grid);
    let n = grid.n_l;
    let dtau = grid.time_grid().dt();
    let r = zeta / gamma;

    let coef = |i: usize| -> Vec<f64> { (0..n).map(|j| gamma * d.rate_sum[j] * h2.at(i, j)).collect() };
    let src1 = |i: usize| -> Vec<f64> { (0..n).map(|j| zeta * d.imbalance[j] * h2.at(i, j)).collect() };
    let src0 = |h1: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|j| {
                zeta * d.imbalance[j] * h1[j]
                    + 0.25 * gamma * d.b[j] * (r - h1[j]).powi(2)
                    + 0.25 * gamma * d.a[j] * (r + h1[j]).powi(2)
            })
            .collect()
    };

    let mut h1 = HSurface::zeros(grid);
    let mut h0 = HSurface::zeros(grid);
    let mut next = vec![0.0; n];
    for i in (0..grid.n_t - 1).rev() {
        let old1 = h1.slice(i + 1).to_vec();
        let (c_old, f_old) = (coef(i + 1), src1(i + 1));
        let old_rate: Vec<f64> = (0..n).map(|j| c_old[j] * old1[j] + f_old[j]).collect();
        theta_step(&gen, dtau, opts.theta, &old1, &old_rate, &coef(i), &src1(i), &mut next)?;
        h1.slice_mut(i).copy_from_slice(&next);

        let old0 = h0.slice(i + 1).to_vec();
        let old_rate = src0(&old1);
        let zero = vec![0.0; n];
        theta_step(&gen, dtau, opts.theta, &old0, &old_rate, &zero, &src0(h1.slice(i)), &mut next)?;
        h0.slice_mut(i).copy_from_slice(&next);
        if next.iter().chain(h1.slice(i)).any(|x| !x.is_finite()) {
            return Err(Error::numeric(format!("non-finite h1/h0 at t = {}", grid.time_grid().time(i))));
        }
    }
    Ok((h1, h0))
}

/// Feedback quotes `ζ/(2γ) ± (h₁ + 2h₂q)/2` on the lattice.
pub fn quote_surface(h2: &HSurface, h1: &HSurface, zeta: f64, gamma: f64, q: f64) -> (HSurface, HSurface) {
    let half = 0.5 * zeta / gamma;
    let slope: Vec<f64> = h1.values.iter().zip(&h2.values).map(|(a, b)| a + 2.0 * b * q).collect();
    (
        HSurface { grid: h2.grid, values: slope.iter().map(|s| half + 0.5 * s).collect() },
        HSurface { grid: h2.grid, values: slope.iter().map(|s| half - 0.5 * s).collect() },
    )
}

/// CSV with header `t,l,h2,h1,h0`, row-major over the lattice.
pub fn surface_table(h2: &HSurface, h1: &HSurface, h0: &HSurface) -> Table {
    let g = h2.grid;
    let tg = g.time_grid();
    let mut t = Table::new(&["t", "l", "h2", "h1", "h0"]);
    for i in 0..g.n_t {
        for j in 0..g.n_l {
            t.push(vec![tg.time(i), g.l(j), h2.at(i, j), h1.at(i, j), h0.at(i, j)]);
        }
    }
    t
}

/// Monte Carlo settings for [`feynman_kac_fixed_point`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub n_paths: usize,
    /// Fine time steps over `[0, T]`; a multiple of the lattice steps.
    pub n_steps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FkEstimate {
    pub surface: HSurface,
    /// Standard error of every node estimate, same layout as the surface.
    pub stderr: Vec<f64>,
    pub iterations: usize,
    pub last_change: f64,
}

impl FkEstimate {
    pub fn max_stderr(&self) -> f64 {
        self.stderr.iter().fold(0.0, |m: f64, &x| m.max(x))
    }
}

const FK_MAX_ITER: usize = 100;

/// Iterate `g ← F₁g` with common random numbers until the sup-change is
/// within twice the largest standard error.
pub fn feynman_kac_fixed_point(factor: &OuFactor, gamma: f64, mc: McConfig, lattice: &FactorGrid) -> Result<FkEstimate> {
    check_factor(factor, lattice, gamma)?;
    if mc.n_paths < 100 {
        return Err(Error::invalid(format!("need at least 100 paths, got {}", mc.n_paths)));
    }
    let steps = lattice.n_t - 1;
    if mc.n_steps == 0 || !mc.n_steps.is_multiple_of(steps) {
        return Err(Error::invalid(format!(
            "n_steps = {} must be a positive multiple of the lattice steps ({steps})",
            mc.n_steps
        )));
    }
    let ratio = mc.n_steps / steps;
    let h = lattice.horizon / mc.n_steps as f64;
    let (_, sd) = factor.transition(0.0, h);

    // Normals are shared by every node and every iteration.
    let normals: Vec<Vec<f64>> = (0..mc.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = substream(mc.seed, p as u64);
            (0..mc.n_steps).map(|_| StandardNormal.sample(&mut rng)).collect()
        })
        .collect();

    let links = factor.links;
    let nodes: Vec<(usize, usize)> =
        (0..lattice.n_t).flat_map(|i| (0..lattice.n_l).map(move |j| (i, j))).collect();

    let apply = |g: &HSurface| -> Vec<(f64, f64)> {
        nodes
            .par_iter()
            .map(|&(i, j)| {
                let start = i * ratio;
                let (mut sum, mut sum_sq) = (0.0, 0.0);
                for z in &normals {
                    let mut l = lattice.l(j);
                    let rate = |s: usize, l: f64| {
                        let cell = (s / ratio).min(steps - 1);
                        let w = (s - cell * ratio) as f64 / ratio as f64;
                        gamma * (links.a.eval(l) + links.b.eval(l)) * g.interp_cell(cell, w, l)
                    };
                    let mut k_prev = rate(start, l);
                    let mut phi_prev = links.phi.eval(l);
                    let mut big_k = 0.0;
                    let mut running = 0.0;
                    for (s, zs) in z.iter().enumerate().take(mc.n_steps).skip(start) {
                        let (m, _) = factor.transition(l, h);
                        l = m + sd * zs;
                        let k = rate(s + 1, l);
                        let phi = links.phi.eval(l);
                        let k_next = big_k + 0.5 * h * (k_prev + k);
                        running += 0.5 * h * (phi_prev * big_k.exp() + phi * k_next.exp());
                        big_k = k_next;
                        k_prev = k;
                        phi_prev = phi;
                    }
                    let x = -links.terminal.eval(l) * big_k.exp() - running;
                    sum += x;
                    sum_sq += x * x;
                }
                let n = normals.len() as f64;
                let mean = sum / n;
                let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
                (mean, (var / n).sqrt())
            })
            .collect()
    };

    let mut g = HSurface::zeros(*lattice);
    let mut changes: Vec<f64> = Vec::new();
    for iter in 1..=FK_MAX_ITER {
        let est = apply(&g);
        let next = HSurface { grid: *lattice, values: est.iter().map(|e| e.0).collect() };
        let stderr: Vec<f64> = est.iter().map(|e| e.1).collect();
        let change = next.max_abs_diff(&g);
        let max_se = stderr.iter().fold(0.0f64, |m, &x| m.max(x));
        if change <= 2.0 * max_se {
            return Ok(FkEstimate { surface: next, stderr, iterations: iter, last_change: change });
        }
        changes.push(change);
        if changes.len() >= 4 && changes[changes.len() - 4..].windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::numeric(format!(
                "fixed-point iteration is not contracting (sup-change {change} after {iter} iterations)"
            )));
        }
        g = next;
    }
    Err(Error::numeric(format!("fixed-point iteration did not settle in {FK_MAX_ITER} iterations")))
}
