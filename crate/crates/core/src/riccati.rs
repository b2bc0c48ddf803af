//! Backward ODEs for deterministic coefficients and a linear intensity
//! `Λ(δ) = ζ - γδ`.
//!
//! With the affine ansatz `Y = P Q + H` the adjoint slope solves the scalar
//! Riccati equation `P' = -μ P² + 2φ`, `P(T) = -ν`, and the intercept a linear
//! companion. The value-function coefficients `h₂, h₁, h₀` of the Markovian
//! problem are the same objects up to scaling (`P = 2h₂`, `H = h₁`).

use crate::error::{Error, Result};
use crate::flow::{FlowPath, PenaltyPath};
use crate::grid::{running_penalty, trapezoid, TimeGrid};
use crate::ode::{rk4_backward, rk4_forward, Series};

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub grid: TimeGrid,
    pub p: Vec<f64>,
}

fn check_nonneg(name: &str, v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
        Some(i) => Err(Error::invalid(format!("{name}[{i}] = {} must be nonnegative", v[i]))),
        None => Ok(()),
    }
}

/// Solve `P' = -μ P² + 2φ` backward from `P(T) = -ν` with RK4 on the grid.
pub fn solve_riccati(grid: &TimeGrid, mu: &[f64], phi: &[f64], nu: f64) -> Result<RiccatiSolution> {
    if mu.len() != grid.len() || phi.len() != grid.len() {
        return Err(Error::invalid(format!(
            "coefficient lengths {}/{} do not match the grid ({})",
            mu.len(),
            phi.len(),
            grid.len()
        )));
    }
    check_nonneg("mu", mu)?;
    check_nonneg("phi", phi)?;
    if !(nu.is_finite() && nu >= 0.0) {
        return Err(Error::invalid(format!("terminal weight must be nonnegative, got {nu}")));
    }
    let mu_s = Series::new(mu.to_vec());
    let phi_s = Series::new(phi.to_vec());
    let p: Vec<f64> = rk4_backward(grid.len(), grid.dt(), [-nu], |s, y| {
        [-mu_s.at(s) * y[0] * y[0] + 2.0 * phi_s.at(s)]
    })
    .into_iter()
    .map(|y| y[0])
    .collect();
    if p.iter().any(|x| !x.is_finite()) {
        return Err(Error::numeric("Riccati solution is not finite; refine the grid"));
    }
    Ok(RiccatiSolution { grid: *grid, p })
}

/// Coefficients of the value function `H(t, q) = h₀ + h₁ q + h₂ q²`.
#[derive(Debug, Clone, PartialEq)]
pub struct HSystem {
    pub grid: TimeGrid,
    pub h2: Vec<f64>,
    pub h1: Vec<f64>,
    pub h0: Vec<f64>,
}

impl HSystem {
    pub fn value(&self, i: usize, q: f64) -> f64 {
        self.h0[i] + self.h1[i] * q + self.h2[i] * q * q
    }
}

fn check_model(zeta: f64, gamma: f64) -> Result<()> {
    if !(zeta.is_finite() && zeta > 0.0 && gamma.is_finite() && gamma > 0.0) {
        return Err(Error::invalid(format!("zeta and gamma must be positive, got {zeta}, {gamma}")));
    }
    Ok(())
}

/// Value-function coefficients for deterministic flows:
///
/// ```text
/// h₂' = -γ(a+b) h₂² + φ                                  h₂(T) = -A
/// h₁' = -ζ(b-a) h₂ - γ(a+b) h₂ h₁                        h₁(T) = 0
/// h₀' = -ζ(b-a) h₁ - γb/4 (ζ/γ - h₁)² - γa/4 (ζ/γ + h₁)²  h₀(T) = 0
/// ```
pub fn solve_h_system(flow: &FlowPath, penalty: &PenaltyPath, zeta: f64, gamma: f64) -> Result<HSystem> {
    check_model(zeta, gamma)?;
    let grid = *flow.grid();
    penalty.check_aligned(&grid)?;
    let a = Series::new(flow.ask().to_vec());
    let b = Series::new(flow.bid().to_vec());
    let phi = Series::new(penalty.phi().to_vec());
    let r = zeta / gamma;
    let sol = rk4_backward(grid.len(), grid.dt(), [-penalty.terminal(), 0.0, 0.0], |s, h| {
        let (a, b, phi) = (a.at(s), b.at(s), phi.at(s));
        let [h2, h1, _] = *h;
        [
            -gamma * (a + b) * h2 * h2 + phi,
            -zeta * (b - a) * h2 - gamma * (a + b) * h2 * h1,
            -zeta * (b - a) * h1 - 0.25 * gamma * b * (r - h1).powi(2) - 0.25 * gamma * a * (r + h1).powi(2),
        ]
    });
    Ok(HSystem {
        grid,
        h2: sol.iter().map(|h| h[0]).collect(),
        h1: sol.iter().map(|h| h[1]).collect(),
        h0: sol.iter().map(|h| h[2]).collect(),
    })
}

/// `Y_t = P_t Q_t + H_t` on the flow grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineField {
    pub grid: TimeGrid,
    pub p: Vec<f64>,
    pub h: Vec<f64>,
}

/// Optimal inventory, adjoint and quotes along a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub q: Vec<f64>,
    pub y: Vec<f64>,
    pub delta_a: Vec<f64>,
    pub delta_b: Vec<f64>,
    /// Spread revenue minus running and terminal inventory penalties.
    pub objective: f64,
}

impl Trajectory {
    pub fn terminal_residual(&self, terminal_penalty: f64) -> f64 {
        let n = self.q.len() - 1;
        (self.y[n] + 2.0 * terminal_penalty * self.q[n]).abs()
    }

    /// `max_t |Y(t) + 2A Q(T) + 2 ∫_t^T φ Q ds|`, the integrated adjoint equation
    /// `dY = 2φQ dt` replayed along the path.
    pub fn adjoint_replay_error(&self, phi: &[f64], terminal_penalty: f64) -> f64 {
        let n = self.q.len();
        let dt = self.times[1] - self.times[0];
        let integrand: Vec<f64> = phi.iter().zip(&self.q).map(|(p, q)| p * q).collect();
        let tails = crate::grid::tail_integrals(&integrand, dt);
        (0..n)
            .map(|i| (self.y[i] + 2.0 * terminal_penalty * self.q[n - 1] + 2.0 * tails[i]).abs())
            .fold(0.0, f64::max)
    }
}

/// Solve the linear-intensity FBSDE
/// `dQ = ζ(b-a)/2 dt + γ(a+b) Y/2 dt`, `dY = 2φQ dt`, `Y_T = -2A Q_T`.
pub fn solve_affine_fbsde(
    flow: &FlowPath,
    penalty: &PenaltyPath,
    zeta: f64,
    gamma: f64,
    q0: f64,
) -> Result<(AffineField, Trajectory)> {
    check_model(zeta, gamma)?;
    if !q0.is_finite() {
        return Err(Error::invalid("q0 must be finite"));
    }
    let grid = *flow.grid();
    penalty.check_aligned(&grid)?;
    let (n, dt) = (grid.len(), grid.dt());
    let a = Series::new(flow.ask().to_vec());
    let b = Series::new(flow.bid().to_vec());
    let phi = Series::new(penalty.phi().to_vec());

    // P' = -γ(a+b)/2 P² + 2φ,  H' = -γ(a+b) P H / 2 - ζ(b-a) P / 2
    let ph = rk4_backward(n, dt, [-2.0 * penalty.terminal(), 0.0], |s, y| {
        let (a, b) = (a.at(s), b.at(s));
        let [p, h] = *y;
        [
            -0.5 * gamma * (a + b) * p * p + 2.0 * phi.at(s),
            -0.5 * gamma * (a + b) * p * h - 0.5 * zeta * (b - a) * p,
        ]
    });
    let p: Vec<f64> = ph.iter().map(|y| y[0]).collect();
    let h: Vec<f64> = ph.iter().map(|y| y[1]).collect();
    let ps = Series::new(p.clone());
    let hs = Series::new(h.clone());

    let q: Vec<f64> = rk4_forward(n, dt, [q0], |s, y| {
        let (a, b) = (a.at(s), b.at(s));
        [0.5 * zeta * (b - a) + 0.5 * gamma * (a + b) * (ps.at(s) * y[0] + hs.at(s))]
    })
    .into_iter()
    .map(|y| y[0])
    .collect();

    let y: Vec<f64> = (0..n).map(|i| p[i] * q[i] + h[i]).collect();
    let half = 0.5 * zeta / gamma;
    let delta_a: Vec<f64> = y.iter().map(|y| half + 0.5 * y).collect();
    let delta_b: Vec<f64> = y.iter().map(|y| half - 0.5 * y).collect();
    let revenue: Vec<f64> = (0..n)
        .map(|i| {
            delta_a[i] * flow.ask()[i] * (zeta - gamma * delta_a[i])
                + delta_b[i] * flow.bid()[i] * (zeta - gamma * delta_b[i])
        })
        .collect();
    let objective = trapezoid(&revenue, dt)
        - running_penalty(penalty.phi(), &q, dt)
        - penalty.terminal() * q[n - 1] * q[n - 1];

    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("affine FBSDE produced non-finite values"));
    }
    Ok((
        AffineField { grid, p, h },
        Trajectory { times: grid.times(), q, y, delta_a, delta_b, objective },
    ))
}

/// Terminal ask quote for the linear intensity with no bid flow and no running
/// penalty, as a function of executed volume `x = ∫a dt`:
/// `f(x) = ζ/(2γ) + (ζx - 2q₀) / (2 (A⁻¹ + γx))`.
pub fn impact_linear_closed_form(zeta: f64, gamma: f64, terminal: f64, q0: f64, x: f64) -> f64 {
    0.5 * zeta / gamma + 0.5 * (zeta * x - 2.0 * q0) / (1.0 / terminal + gamma * x)
}

/// Terminal inventory and ask quote for the exponential intensity with no bid
/// flow and no running penalty.
///
/// `Q_T` is the unique root of `y + x exp(2γA y - 1) - q₀`, found by bisection;
/// the quote is `1/γ - 2A Q_T`.
pub fn impact_exponential_root(gamma: f64, terminal: f64, q0: f64, x: f64) -> Result<(f64, f64)> {
    if !(gamma > 0.0 && terminal > 0.0 && x >= 0.0 && q0.is_finite()) {
        return Err(Error::invalid("need gamma > 0, A > 0, x >= 0 and finite q0"));
    }
    let k = 2.0 * gamma * terminal;
    let f = |y: f64| y + x * (k * y - 1.0).exp() - q0;
    let (mut lo, mut hi) = (q0 - x * (k * q0.abs()).exp(), q0);
    if x == 0.0 {
        return Ok((q0, 1.0 / gamma - k / gamma * q0));
    }
    if !(f(lo) <= 0.0 && f(hi) >= 0.0) {
        return Err(Error::numeric(format!("root not bracketed on [{lo}, {hi}]")));
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if fm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let root = if f(lo).abs() <= f(hi).abs() { lo } else { hi };
    if f(root).abs() > 1e-12 * (1.0 + q0.abs() + x) {
        return Err(Error::numeric(format!("bisection stalled with residual {}", f(root))));
    }
    Ok((root, 1.0 / gamma - 2.0 * terminal * root))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::constant_flow;

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::new(1.0, n).unwrap()
    }

    #[test]
    fn riccati_examples() {
        let g = grid(1001);
        let s = solve_riccati(&g, &vec![1.0; 1001], &vec![0.0; 1001], 0.1).unwrap();
        assert!((s.p[0] + 1.0 / 11.0).abs() < 1e-12);

        let zero = solve_riccati(&g, &vec![1.0; 1001], &vec![0.0; 1001], 0.0).unwrap();
        assert!(zero.p.iter().all(|&p| p == 0.0));

        // μ ≡ 0: P_t = -ν - 2∫_t^T φ ds, here φ(t) = t
        let g = grid(51);
        let s = solve_riccati(&g, &vec![0.0; 51], &g.times(), 0.3).unwrap();
        for (i, t) in g.times().into_iter().enumerate() {
            let exact = -0.3 - (1.0 - t * t);
            assert!((s.p[i] - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn riccati_rejects_mismatch_and_negative() {
        let g = grid(5);
        assert!(solve_riccati(&g, &[1.0; 4], &[0.0; 5], 0.1).is_err());
        assert!(solve_riccati(&g, &[1.0; 5], &[-1.0, 0.0, 0.0, 0.0, 0.0], 0.1).is_err());
        assert!(solve_riccati(&g, &[1.0; 5], &[0.0; 5], -0.1).is_err());
    }

    #[test]
    fn h_system_symmetric_no_penalty() {
        let (zeta, gamma, rate) = (1.5, 2.0, 3.0);
        let flow = constant_flow(rate, rate, 101, 1.0).unwrap();
        let pen = PenaltyPath::constant(0.0, 0.0, 101).unwrap();
        let h = solve_h_system(&flow, &pen, zeta, gamma).unwrap();
        for (i, t) in flow.times().into_iter().enumerate() {
            assert_eq!(h.h2[i], 0.0);
            assert_eq!(h.h1[i], 0.0);
            let exact = zeta * zeta * 2.0 * rate * (1.0 - t) / (4.0 * gamma);
            assert!((h.h0[i] - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn h_system_closed_form_and_terminal() {
        let (a, b, gamma, term) = (4.0, 2.0, 0.5, 0.2);
        let flow = constant_flow(a, b, 201, 1.0).unwrap();
        let pen = PenaltyPath::constant(0.0, term, 201).unwrap();
        let h = solve_h_system(&flow, &pen, 1.0, gamma).unwrap();
        assert!((h.h2[0] + 1.0 / (1.0 / term + gamma * (a + b))).abs() < 1e-12);
        assert_eq!((h.h2[200], h.h1[200], h.h0[200]), (-term, 0.0, 0.0));
    }

    #[test]
    fn h2_matches_riccati_route() {
        let flow = crate::flow::iid_flow(5, 4.0, 2.0, 101, 1.0).unwrap();
        let pen = PenaltyPath::new((0..101).map(|i| 0.01 * (i % 7) as f64).collect(), 0.3).unwrap();
        let gamma = 0.7;
        let h = solve_h_system(&flow, &pen, 1.0, gamma).unwrap();
        let mu: Vec<f64> = flow.ask().iter().zip(flow.bid()).map(|(a, b)| gamma * (a + b)).collect();
        let half_phi: Vec<f64> = pen.phi().iter().map(|p| 0.5 * p).collect();
        let r = solve_riccati(flow.grid(), &mu, &half_phi, pen.terminal()).unwrap();
        for (x, y) in h.h2.iter().zip(&r.p) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn affine_matches_h_system() {
        // P = 2 h₂ and H = h₁ for the same data
        let flow = crate::flow::iid_flow(11, 5.0, 3.0, 201, 1.0).unwrap();
        let pen = PenaltyPath::constant(0.05, 0.1, 201).unwrap();
        let (zeta, gamma) = (1.2, 0.8);
        let h = solve_h_system(&flow, &pen, zeta, gamma).unwrap();
        let (field, _) = solve_affine_fbsde(&flow, &pen, zeta, gamma, 0.0).unwrap();
        for i in 0..201 {
            assert!((field.p[i] - 2.0 * h.h2[i]).abs() < 1e-10);
            assert!((field.h[i] - h.h1[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn affine_symmetric_is_flat() {
        let flow = constant_flow(3.0, 3.0, 101, 1.0).unwrap();
        let pen = PenaltyPath::constant(0.1, 0.2, 101).unwrap();
        let (_, tr) = solve_affine_fbsde(&flow, &pen, 1.0, 2.0, 0.0).unwrap();
        assert!(tr.q.iter().all(|&q| q == 0.0));
        assert!(tr.delta_a.iter().all(|&d| d == 0.25) && tr.delta_b.iter().all(|&d| d == 0.25));
    }

    #[test]
    fn affine_intercept_matches_quadrature_formula() {
        // H_t = ∫_t^T ζ(b-a)P_s/2 · exp(∫_t^s γ(a+b)P/2 du) ds
        let n = 2001;
        let flow = crate::flow::iid_flow(2, 6.0, 2.0, n, 1.0).unwrap();
        let flow = flow.with_rates(
            flow.times().iter().map(|t| 6.0 + 2.0 * t).collect(),
            flow.times().iter().map(|t| 3.0 + (3.0 * t).sin()).collect(),
        ).unwrap();
        let pen = PenaltyPath::constant(0.03, 0.1, n).unwrap();
        let (zeta, gamma) = (1.0, 1.0);
        let (field, _) = solve_affine_fbsde(&flow, &pen, zeta, gamma, 0.0).unwrap();
        let dt = flow.grid().dt();
        let k: Vec<f64> = (0..n).map(|i| 0.5 * gamma * (flow.ask()[i] + flow.bid()[i]) * field.p[i]).collect();
        let g: Vec<f64> = (0..n).map(|i| 0.5 * zeta * (flow.bid()[i] - flow.ask()[i]) * field.p[i]).collect();
        let cum_k: Vec<f64> = {
            let tails = crate::grid::tail_integrals(&k, dt);
            tails.iter().map(|x| tails[0] - x).collect()
        };
        for i in [0, 500, 1500] {
            let integrand: Vec<f64> = (i..n).map(|s| g[s] * (cum_k[s] - cum_k[i]).exp()).collect();
            let h = trapezoid(&integrand, dt);
            assert!((h - field.h[i]).abs() < 1e-6, "i={i}: {h} vs {}", field.h[i]);
        }
    }

    #[test]
    fn affine_terminal_and_adjoint_replay() {
        let flow = crate::flow::iid_flow(3, 5.0, 2.0, 1001, 1.0).unwrap().scale_to_imbalance(4.0).unwrap();
        let pen = PenaltyPath::constant(0.2, 0.1, 1001).unwrap();
        let (_, tr) = solve_affine_fbsde(&flow, &pen, 1.0, 1.0, 2.0).unwrap();
        assert!(tr.terminal_residual(0.1) < 1e-8);
        assert!(tr.adjoint_replay_error(pen.phi(), 0.1) < 1e-6);
    }

    #[test]
    fn linear_impact_examples() {
        assert_eq!(impact_linear_closed_form(1.0, 1.0, 0.05, 0.0, 0.0), 0.5);
        assert!((impact_linear_closed_form(1.0, 1.0, 0.05, 0.0, 20.0) - 0.75).abs() < 1e-15);
        assert!((impact_linear_closed_form(1.0, 1.0, 0.05, 0.0, 1e9) - 1.0).abs() < 1e-6);
        // f(0) = ζ/(2γ) - q₀A
        assert!((impact_linear_closed_form(1.0, 2.0, 0.05, 3.0, 0.0) - (0.25 - 0.15)).abs() < 1e-15);
    }

    #[test]
    fn exponential_root_examples() {
        let (q, d) = impact_exponential_root(1.0, 0.05, 1.5, 0.0).unwrap();
        assert_eq!(q, 1.5);
        assert!((d - (1.0 - 0.15)).abs() < 1e-15);

        let (q, d) = impact_exponential_root(1.0, 0.05, 0.0, std::f64::consts::E).unwrap();
        assert!((q + 0.1 * q).exp().is_finite());
        assert!((q + (0.1 * q).exp()).abs() < 1e-12);
        assert!((q + 0.913).abs() < 1e-3, "{q}");
        assert!((d - (1.0 - 0.1 * q)).abs() < 1e-15);
    }

    #[test]
    fn exponential_root_convex_and_decreasing() {
        let xs: Vec<f64> = (0..40).map(|k| 2.5 * k as f64).collect();
        let qs: Vec<f64> = xs.iter().map(|&x| impact_exponential_root(1.0, 0.02, 0.0, x).unwrap().0).collect();
        for w in qs.windows(2) {
            assert!(w[1] < w[0]);
        }
        for w in qs.windows(3) {
            assert!(w[0] - 2.0 * w[1] + w[2] > 0.0);
        }
    }
}
