//! Deterministic order-flow and penalty paths, and the Ornstein–Uhlenbeck
//! factor that drives flows in the Markovian model.
//!
//! Integrals over a path always use the trapezoid rule on its uniform grid.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grid::{trapezoid, TimeGrid};
use crate::rng::substream;

/// Ask-side and bid-side order-flow rates (volume per unit time) on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowPath {
    grid: TimeGrid,
    a: Vec<f64>,
    b: Vec<f64>,
}

fn check_rates(name: &str, v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
        Some(i) => Err(Error::invalid(format!("{name}[{i}] = {} is not a nonnegative rate", v[i]))),
        None => Ok(()),
    }
}

impl FlowPath {
    /// Rates must be finite and nonnegative. The public constructors below
    /// additionally insist on strictly positive rates.
    pub fn new(grid: TimeGrid, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != grid.len() || b.len() != grid.len() {
            return Err(Error::invalid(format!(
                "rate arrays have lengths {}/{} but the grid has {} points",
                a.len(),
                b.len(),
                grid.len()
            )));
        }
        check_rates("a", &a)?;
        check_rates("b", &b)?;
        Ok(Self { grid, a, b })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn times(&self) -> Vec<f64> {
        self.grid.times()
    }

    pub fn ask(&self) -> &[f64] {
        &self.a
    }

    pub fn bid(&self) -> &[f64] {
        &self.b
    }

    pub fn horizon(&self) -> f64 {
        self.grid.horizon()
    }

    /// `(∫a dt, ∫b dt)`.
    pub fn integrate(&self) -> (f64, f64) {
        let dt = self.grid.dt();
        (trapezoid(&self.a, dt), trapezoid(&self.b, dt))
    }

    /// `∫a dt - ∫b dt`.
    pub fn imbalance(&self) -> f64 {
        let (ia, ib) = self.integrate();
        ia - ib
    }

    pub fn max_rate(&self) -> f64 {
        self.a.iter().chain(&self.b).fold(0.0, |m, &x| m.max(x))
    }

    /// Rates at time `t` by linear interpolation.
    pub fn at(&self, t: f64) -> (f64, f64) {
        (self.grid.sample(&self.a, t), self.grid.sample(&self.b, t))
    }

    pub fn resample(&self, target: &TimeGrid) -> Self {
        Self {
            grid: *target,
            a: self.grid.resample(&self.a, target),
            b: self.grid.resample(&self.b, target),
        }
    }

    /// Multiply the ask rates by `c = (target + ∫b)/∫a` so that
    /// `∫a - ∫b = target`; the bid side is untouched.
    pub fn scale_to_imbalance(&self, target: f64) -> Result<Self> {
        let (ia, ib) = self.integrate();
        if ia <= 0.0 {
            return Err(Error::invalid("cannot scale a flow with zero ask volume"));
        }
        let factor = (target + ib) / ia;
        if !(factor > 0.0) {
            return Err(Error::InfeasibleScaling { factor });
        }
        Ok(Self {
            grid: self.grid,
            a: self.a.iter().map(|x| x * factor).collect(),
            b: self.b.clone(),
        })
    }

    /// Replace both rate arrays, keeping the grid.
    pub fn with_rates(&self, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        Self::new(self.grid, a, b)
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive, got {v}")))
    }
}

pub fn constant_flow(rate_a: f64, rate_b: f64, n: usize, horizon: f64) -> Result<FlowPath> {
    positive("rate_a", rate_a)?;
    positive("rate_b", rate_b)?;
    let grid = TimeGrid::new(horizon, n)?;
    FlowPath::new(grid, vec![rate_a; n], vec![rate_b; n])
}

/// Independent uniform draws on `[mean - spread, mean + spread]` for every
/// node and side, frozen into a deterministic path.
pub fn iid_flow(seed: u64, mean: f64, spread: f64, n: usize, horizon: f64) -> Result<FlowPath> {
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::invalid(format!("spread must be nonnegative, got {spread}")));
    }
    if !(mean - spread > 0.0) {
        return Err(Error::invalid(format!(
            "mean - spread = {} must stay positive",
            mean - spread
        )));
    }
    let grid = TimeGrid::new(horizon, n)?;
    let mut rng = substream(seed, 0);
    let mut draw = || {
        if spread == 0.0 {
            mean
        } else {
            mean + spread * (2.0 * rng.random::<f64>() - 1.0)
        }
    };
    let a: Vec<f64> = (0..n).map(|_| draw()).collect();
    let b: Vec<f64> = (0..n).map(|_| draw()).collect();
    FlowPath::new(grid, a, b)
}

/// Running penalty `φ_t` on the flow grid and terminal penalty `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyPath {
    phi: Vec<f64>,
    terminal: f64,
}

impl PenaltyPath {
    pub fn new(phi: Vec<f64>, terminal: f64) -> Result<Self> {
        if let Some(i) = phi.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::invalid(format!("phi[{i}] = {} must be nonnegative", phi[i])));
        }
        if !(terminal.is_finite() && terminal >= 0.0) {
            return Err(Error::invalid(format!("terminal penalty must be nonnegative, got {terminal}")));
        }
        Ok(Self { phi, terminal })
    }

    pub fn constant(phi: f64, terminal: f64, n: usize) -> Result<Self> {
        Self::new(vec![phi; n], terminal)
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn terminal(&self) -> f64 {
        self.terminal
    }

    pub fn max_phi(&self) -> f64 {
        self.phi.iter().fold(0.0, |m, &x| m.max(x))
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    pub fn resample(&self, from: &TimeGrid, to: &TimeGrid) -> Self {
        Self { phi: from.resample(&self.phi, to), terminal: self.terminal }
    }

    pub(crate) fn check_aligned(&self, grid: &TimeGrid) -> Result<()> {
        if self.phi.len() != grid.len() {
            return Err(Error::invalid(format!(
                "penalty has {} points but the flow grid has {}",
                self.phi.len(),
                grid.len()
            )));
        }
        Ok(())
    }
}

/// Affine map of the factor level clamped into `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkFn {
    pub intercept: f64,
    pub slope: f64,
    pub lo: f64,
    pub hi: f64,
}

impl LinkFn {
    pub fn new(intercept: f64, slope: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::invalid(format!("link bounds [{lo}, {hi}] are not an interval")));
        }
        if !(intercept.is_finite() && slope.is_finite()) {
            return Err(Error::invalid("link coefficients must be finite"));
        }
        Ok(Self { intercept, slope, lo, hi })
    }

    pub fn constant(value: f64) -> Self {
        Self { intercept: value, slope: 0.0, lo: value, hi: value }
    }

    #[inline]
    pub fn eval(&self, l: f64) -> f64 {
        (self.intercept + self.slope * l).clamp(self.lo, self.hi)
    }
}

/// Bounded transforms from the factor level to flows and penalties.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorLinks {
    pub a: LinkFn,
    pub b: LinkFn,
    pub phi: LinkFn,
    pub terminal: LinkFn,
}

impl FactorLinks {
    pub fn constant(a: f64, b: f64, phi: f64, terminal: f64) -> Self {
        Self {
            a: LinkFn::constant(a),
            b: LinkFn::constant(b),
            phi: LinkFn::constant(phi),
            terminal: LinkFn::constant(terminal),
        }
    }
}

/// `dL = κ(mean - L) dt + vol dW`, `L_0 = l0`, with link functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuFactor {
    pub kappa: f64,
    pub mean: f64,
    pub vol: f64,
    pub l0: f64,
    pub links: FactorLinks,
}

impl OuFactor {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::invalid(format!("kappa must be nonnegative, got {}", self.kappa)));
        }
        if !(self.vol >= 0.0 && self.vol.is_finite()) {
            return Err(Error::invalid(format!("vol must be nonnegative, got {}", self.vol)));
        }
        if !(self.mean.is_finite() && self.l0.is_finite()) {
            return Err(Error::invalid("factor mean and l0 must be finite"));
        }
        let FactorLinks { a, b, phi, terminal } = self.links;
        if !(a.lo > 0.0 && b.lo > 0.0) {
            return Err(Error::invalid("flow links need a positive lower bound"));
        }
        if !(phi.lo >= 0.0 && terminal.lo >= 0.0) {
            return Err(Error::invalid("penalty links need a nonnegative lower bound"));
        }
        Ok(())
    }

    #[inline]
    pub fn drift(&self, l: f64) -> f64 {
        self.kappa * (self.mean - l)
    }

    /// Exact OU transition: mean and standard deviation of `L_{t+h}` given `L_t = l`.
    #[inline]
    pub fn transition(&self, l: f64, h: f64) -> (f64, f64) {
        let decay = (-self.kappa * h).exp();
        let m = self.mean + (l - self.mean) * decay;
        let var = if self.kappa > 0.0 {
            self.vol * self.vol * (1.0 - decay * decay) / (2.0 * self.kappa)
        } else {
            self.vol * self.vol * h
        };
        (m, var.sqrt())
    }
}

/// Simulated factor path with the flow and penalty it induces.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPath {
    pub level: Vec<f64>,
    pub flow: FlowPath,
    pub penalty: PenaltyPath,
}

/// Euler–Maruyama path of the factor, reproducible from `seed`.
pub fn simulate_ou_factor(factor: &OuFactor, seed: u64, n: usize, horizon: f64) -> Result<FactorPath> {
    factor.validate()?;
    let grid = TimeGrid::new(horizon, n)?;
    let dt = grid.dt();
    let sqdt = dt.sqrt();
    let mut rng = substream(seed, 0);
    let mut level = Vec::with_capacity(n);
    let mut l = factor.l0;
    level.push(l);
    for _ in 1..n {
        let z: f64 = StandardNormal.sample(&mut rng);
        l += factor.drift(l) * dt + factor.vol * sqdt * z;
        level.push(l);
    }
    let links = factor.links;
    let a = level.iter().map(|&x| links.a.eval(x)).collect();
    let b = level.iter().map(|&x| links.b.eval(x)).collect();
    let phi = level.iter().map(|&x| links.phi.eval(x)).collect();
    let terminal = links.terminal.eval(level[n - 1]);
    Ok(FactorPath {
        level,
        flow: FlowPath::new(grid, a, b)?,
        penalty: PenaltyPath::new(phi, terminal)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_flow_integrals() {
        let f = constant_flow(2.0, 1.0, 11, 1.0).unwrap();
        let (ia, ib) = f.integrate();
        assert!((ia - 2.0).abs() < 1e-14 && (ib - 1.0).abs() < 1e-14);
        assert_eq!(constant_flow(1.0, 1.0, 2, 1.0).unwrap().times(), vec![0.0, 1.0]);
        let flat = constant_flow(10.0, 10.0, 101, 1.0).unwrap();
        assert_eq!(flat.integrate(), (10.0, 10.0));
    }

    #[test]
    fn constant_flow_rejects() {
        assert!(constant_flow(0.0, 1.0, 5, 1.0).is_err());
        assert!(constant_flow(1.0, -1.0, 5, 1.0).is_err());
        assert!(constant_flow(1.0, 1.0, 1, 1.0).is_err());
    }

    #[test]
    fn ramp_integral() {
        let g = TimeGrid::new(1.0, 21).unwrap();
        let f = FlowPath::new(g, g.times(), vec![0.0; 21]).unwrap();
        let (ia, ib) = f.integrate();
        assert!((ia - 0.5).abs() < 1e-15);
        assert_eq!(ib, 0.0);
    }

    #[test]
    fn iid_flow_properties() {
        let flat = iid_flow(3, 5.0, 0.0, 9, 1.0).unwrap();
        assert_eq!(flat, constant_flow(5.0, 5.0, 9, 1.0).unwrap());
        assert_eq!(iid_flow(1, 5.0, 2.0, 50, 1.0).unwrap(), iid_flow(1, 5.0, 2.0, 50, 1.0).unwrap());
        let (x, y) = (iid_flow(1, 5.0, 2.0, 50, 1.0).unwrap(), iid_flow(2, 5.0, 2.0, 50, 1.0).unwrap());
        assert_ne!(x, y);
        assert_eq!(x.times(), y.times());
        assert!(x.ask().iter().chain(x.bid()).all(|&r| (3.0..=7.0).contains(&r)));
        assert!(iid_flow(1, 1.0, 1.0, 5, 1.0).is_err());
    }

    #[test]
    fn scaling_examples() {
        let f = constant_flow(2.0, 1.0, 11, 1.0).unwrap();
        let s = f.scale_to_imbalance(5.0).unwrap();
        assert!((s.ask()[0] - 6.0).abs() < 1e-14);
        assert!((s.imbalance() - 5.0).abs() < 1e-12);
        let sym = constant_flow(3.0, 3.0, 11, 1.0).unwrap();
        assert_eq!(sym.scale_to_imbalance(0.0).unwrap(), sym);
        assert!(matches!(f.scale_to_imbalance(-2.0), Err(Error::InfeasibleScaling { .. })));
    }

    #[test]
    fn ou_deterministic_relaxation() {
        let mut factor = OuFactor {
            kappa: 2.0,
            mean: 1.0,
            vol: 0.0,
            l0: 1.0,
            links: FactorLinks::constant(1.0, 1.0, 0.0, 0.0),
        };
        let p = simulate_ou_factor(&factor, 9, 11, 1.0).unwrap();
        assert!(p.level.iter().all(|&l| l == 1.0));

        factor.l0 = 3.0;
        let exact = 1.0 + 2.0 * (-2.0f64).exp();
        let err = |n: usize| (simulate_ou_factor(&factor, 0, n, 1.0).unwrap().level[n - 1] - exact).abs();
        let (e1, e2) = (err(201), err(401));
        assert!(e1 < 0.01, "{e1}");
        // first order in dt
        assert!((e1 / e2 - 2.0).abs() < 0.2, "{}", e1 / e2);
    }

    #[test]
    fn ou_seeded_and_bounded() {
        let factor = OuFactor {
            kappa: 1.0,
            mean: 0.0,
            vol: 1.0,
            l0: 0.0,
            links: FactorLinks {
                a: LinkFn::new(5.0, 2.0, 1.0, 9.0).unwrap(),
                b: LinkFn::new(5.0, -2.0, 1.0, 9.0).unwrap(),
                phi: LinkFn::new(0.1, 0.05, 0.0, 0.2).unwrap(),
                terminal: LinkFn::constant(0.1),
            },
        };
        let p = simulate_ou_factor(&factor, 4, 200, 1.0).unwrap();
        assert_eq!(p, simulate_ou_factor(&factor, 4, 200, 1.0).unwrap());
        assert!(p.flow.ask().iter().all(|&x| (1.0..=9.0).contains(&x)));
        assert!(p.penalty.phi().iter().all(|&x| (0.0..=0.2).contains(&x)));
    }

    proptest! {
        #[test]
        fn scaling_is_idempotent(seed in 0u64..1000, target in 0.0f64..100.0) {
            let f = iid_flow(seed, 10.0, 5.0, 31, 1.0).unwrap();
            let once = f.scale_to_imbalance(target).unwrap();
            prop_assert!((once.imbalance() - target).abs() < 1e-10);
            let (ia, ib) = once.integrate();
            let c = (target + ib) / ia;
            prop_assert!((c - 1.0).abs() <= 1e-12);
        }
    }
}
