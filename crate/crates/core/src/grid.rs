//! Uniform time grids and the quadrature/interpolation rules shared by every solver.

use crate::error::{Error, Result};

/// Uniform grid `0 = t_0 < t_1 < ... < t_{n-1} = T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    len: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, len: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
        }
        if len < 2 {
            return Err(Error::invalid(format!("a time grid needs at least 2 points, got {len}")));
        }
        Ok(Self { horizon, len })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn steps(&self) -> usize {
        self.len - 1
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps() as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        if i + 1 == self.len {
            self.horizon
        } else {
            self.horizon * i as f64 / self.steps() as f64
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.time(i)).collect()
    }

    /// Grid with `factor` times as many steps over the same horizon.
    pub fn refined(&self, factor: usize) -> Self {
        Self { horizon: self.horizon, len: self.steps() * factor.max(1) + 1 }
    }

    /// Cell index and fractional position of `t`, clamped to the grid.
    pub fn locate(&self, t: f64) -> (usize, f64) {
        let x = (t / self.dt()).clamp(0.0, self.steps() as f64);
        let i = (x.floor() as usize).min(self.steps() - 1);
        (i, x - i as f64)
    }

    /// Piecewise-linear interpolation of node values at time `t`.
    pub fn sample(&self, values: &[f64], t: f64) -> f64 {
        debug_assert_eq!(values.len(), self.len);
        let (i, w) = self.locate(t);
        values[i] * (1.0 - w) + values[i + 1] * w
    }

    /// Linearly resample node values onto another grid over the same horizon.
    pub fn resample(&self, values: &[f64], target: &TimeGrid) -> Vec<f64> {
        (0..target.len()).map(|i| self.sample(values, target.time(i))).collect()
    }
}

/// Trapezoid rule on a uniform grid.
pub fn trapezoid(values: &[f64], dt: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => dt * (0.5 * (values[0] + values[n - 1]) + values[1..n - 1].iter().sum::<f64>()),
    }
}

/// `out[i] = ∫_{t_i}^{T} f dt` by the trapezoid rule.
pub fn tail_integrals(values: &[f64], dt: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    for i in (0..n.saturating_sub(1)).rev() {
        out[i] = out[i + 1] + 0.5 * dt * (values[i] + values[i + 1]);
    }
    out
}

/// Running penalty `∫ φ Q² dt` with both `φ` and `Q` piecewise linear between nodes.
///
/// The integrand is a cubic on each cell, so Simpson's rule per cell is exact.
pub fn running_penalty(phi: &[f64], inventory: &[f64], dt: f64) -> f64 {
    debug_assert_eq!(phi.len(), inventory.len());
    phi.windows(2)
        .zip(inventory.windows(2))
        .map(|(p, q)| {
            let pm = 0.5 * (p[0] + p[1]);
            let qm = 0.5 * (q[0] + q[1]);
            dt / 6.0 * (p[0] * q[0] * q[0] + 4.0 * pm * qm * qm + p[1] * q[1] * q[1])
        })
        .sum()
}

/// Values at cell midpoints `t_i + dt/2` by four-point Lagrange interpolation.
///
/// Used to feed RK4 stages from sampled coefficients without losing order.
pub fn midpoints(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    match n {
        0 | 1 => Vec::new(),
        2 => vec![0.5 * (values[0] + values[1])],
        3 => {
            let (a, b, c) = (values[0], values[1], values[2]);
            vec![(3.0 * a + 6.0 * b - c) / 8.0, (-a + 6.0 * b + 3.0 * c) / 8.0]
        }
        _ => (0..n - 1)
            .map(|i| {
                if i == 0 {
                    (5.0 * values[0] + 15.0 * values[1] - 5.0 * values[2] + values[3]) / 16.0
                } else if i == n - 2 {
                    (values[n - 4] - 5.0 * values[n - 3] + 15.0 * values[n - 2] + 5.0 * values[n - 1])
                        / 16.0
                } else {
                    (-values[i - 1] + 9.0 * values[i] + 9.0 * values[i + 1] - values[i + 2]) / 16.0
                }
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_bad_input() {
        assert!(TimeGrid::new(0.0, 10).is_err());
        assert!(TimeGrid::new(1.0, 1).is_err());
        assert!(TimeGrid::new(f64::NAN, 4).is_err());
    }

    #[test]
    fn endpoints_are_exact() {
        let g = TimeGrid::new(0.7, 13).unwrap();
        assert_eq!(g.time(0), 0.0);
        assert_eq!(g.time(12), 0.7);
    }

    #[test]
    fn trapezoid_exact_for_linear() {
        let g = TimeGrid::new(1.0, 11).unwrap();
        let ramp: Vec<f64> = g.times();
        assert!((trapezoid(&ramp, g.dt()) - 0.5).abs() < 1e-15);
        let tails = tail_integrals(&ramp, g.dt());
        assert!((tails[0] - 0.5).abs() < 1e-15);
        assert_eq!(tails[10], 0.0);
    }

    #[test]
    fn linear_liquidation_penalty_is_one_third() {
        let g = TimeGrid::new(1.0, 7).unwrap();
        let q: Vec<f64> = g.times().iter().map(|t| 1.0 - t).collect();
        let phi = vec![1.0; g.len()];
        assert!((running_penalty(&phi, &q, g.dt()) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn midpoints_exact_for_cubics() {
        let g = TimeGrid::new(2.0, 9).unwrap();
        let f = |t: f64| 1.0 - 2.0 * t + 0.5 * t * t - 0.25 * t * t * t;
        let v: Vec<f64> = g.times().into_iter().map(f).collect();
        for (i, m) in midpoints(&v).into_iter().enumerate() {
            let t = g.time(i) + 0.5 * g.dt();
            assert!((m - f(t)).abs() < 1e-13, "cell {i}: {m} vs {}", f(t));
        }
    }

    #[test]
    fn sample_interpolates_and_clamps() {
        let g = TimeGrid::new(1.0, 3).unwrap();
        let v = [0.0, 1.0, 4.0];
        assert_eq!(g.sample(&v, 0.25), 0.5);
        assert_eq!(g.sample(&v, 0.75), 2.5);
        assert_eq!(g.sample(&v, 5.0), 4.0);
        assert_eq!(g.sample(&v, -1.0), 0.0);
    }
}
