//! Fixed-step classical RK4 on a uniform grid.
//!
//! Coefficients live on grid nodes; the two middle stages read them at cell
//! midpoints through [`Series`], which stores both.

use crate::grid::midpoints;

/// Where an RK4 stage evaluates its coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Node(usize),
    /// Midpoint of cell `[t_i, t_{i+1}]`.
    Mid(usize),
}

/// Node samples of a coefficient plus interpolated cell midpoints.
#[derive(Debug, Clone)]
pub struct Series {
    nodes: Vec<f64>,
    mids: Vec<f64>,
}

impl Series {
    pub fn new(nodes: Vec<f64>) -> Self {
        let mids = midpoints(&nodes);
        Self { nodes, mids }
    }

    pub fn constant(value: f64, len: usize) -> Self {
        Self { nodes: vec![value; len], mids: vec![value; len.saturating_sub(1)] }
    }

    #[inline]
    pub fn at(&self, slot: Slot) -> f64 {
        match slot {
            Slot::Node(i) => self.nodes[i],
            Slot::Mid(i) => self.mids[i],
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, k: &[f64; N]) -> [f64; N] {
    std::array::from_fn(|i| y[i] + h * k[i])
}

/// Integrate `y' = f(slot, y)` from the last node back to the first.
///
/// Returns the state at every node, index-aligned with the grid.
pub fn rk4_backward<const N: usize, F>(len: usize, dt: f64, terminal: [f64; N], f: F) -> Vec<[f64; N]>
where
    F: Fn(Slot, &[f64; N]) -> [f64; N],
{
    let mut out = vec![[0.0; N]; len];
    out[len - 1] = terminal;
    let h = -dt;
    for i in (0..len - 1).rev() {
        let y = out[i + 1];
        let k1 = f(Slot::Node(i + 1), &y);
        let k2 = f(Slot::Mid(i), &axpy(&y, 0.5 * h, &k1));
        let k3 = f(Slot::Mid(i), &axpy(&y, 0.5 * h, &k2));
        let k4 = f(Slot::Node(i), &axpy(&y, h, &k3));
        out[i] = std::array::from_fn(|j| y[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]));
    }
    out
}

/// Integrate `y' = f(slot, y)` from the first node forward.
pub fn rk4_forward<const N: usize, F>(len: usize, dt: f64, initial: [f64; N], f: F) -> Vec<[f64; N]>
where
    F: Fn(Slot, &[f64; N]) -> [f64; N],
{
    let mut out = vec![[0.0; N]; len];
    out[0] = initial;
    let h = dt;
    for i in 0..len - 1 {
        let y = out[i];
        let k1 = f(Slot::Node(i), &y);
        let k2 = f(Slot::Mid(i), &axpy(&y, 0.5 * h, &k1));
        let k3 = f(Slot::Mid(i), &axpy(&y, 0.5 * h, &k2));
        let k4 = f(Slot::Node(i + 1), &axpy(&y, h, &k3));
        out[i + 1] = std::array::from_fn(|j| y[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]));
    }
    out
}
