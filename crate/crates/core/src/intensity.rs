//! Intensity functions `Λ(δ)`: the share of order flow captured when quoting
//! `δ` away from the mid-price.
//!
//! For each model we expose the optimal quote
//! `δ*(p) = argmax_δ Λ(δ)(δ - p)`, the value `W(p) = max_δ Λ(δ)(δ - p)`, and
//! the clamp of `δ*` to `[-ξ, ξ]` used by the truncated FBSDE.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IntensityModel {
    /// `Λ(δ) = ζ - γδ`. Negative for `δ > ζ/γ`; those values are not clamped so
    /// the affine algebra of the linear problem stays exact.
    Linear { zeta: f64, gamma: f64 },
    /// `Λ(δ) = exp(-γδ)`.
    Exponential { gamma: f64 },
}

/// Outcome of checking a model against the admissible intensity class
/// (`Λ > 0`, `Λ' < 0`, `Λ → 0` at infinity, `sup ΛΛ''/Λ'² < 2`).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassReport {
    pub strictly_decreasing: bool,
    /// `sup_x Λ(x)Λ''(x)/Λ'(x)²`.
    pub curvature_ratio_sup: f64,
    pub vanishes_at_infinity: bool,
    /// All conditions hold.
    pub in_class: bool,
    /// Linear intensities fall outside the class and are handled by the
    /// closed-form affine machinery instead.
    pub special_case: bool,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

impl IntensityModel {
    pub fn linear(zeta: f64, gamma: f64) -> Result<Self> {
        check_positive("zeta", zeta)?;
        check_positive("gamma", gamma)?;
        Ok(Self::Linear { zeta, gamma })
    }

    pub fn exponential(gamma: f64) -> Result<Self> {
        check_positive("gamma", gamma)?;
        Ok(Self::Exponential { gamma })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Linear { zeta, gamma } => {
                check_positive("zeta", zeta)?;
                check_positive("gamma", gamma)
            }
            Self::Exponential { gamma } => check_positive("gamma", gamma),
        }
    }

    pub fn gamma(&self) -> f64 {
        match *self {
            Self::Linear { gamma, .. } | Self::Exponential { gamma } => gamma,
        }
    }

    #[inline]
    pub fn lambda(&self, delta: f64) -> f64 {
        match *self {
            Self::Linear { zeta, gamma } => zeta - gamma * delta,
            Self::Exponential { gamma } => (-gamma * delta).exp(),
        }
    }

    #[inline]
    pub fn lambda_prime(&self, delta: f64) -> f64 {
        match *self {
            Self::Linear { gamma, .. } => -gamma,
            Self::Exponential { gamma } => -gamma * (-gamma * delta).exp(),
        }
    }

    #[inline]
    pub fn lambda_second(&self, delta: f64) -> f64 {
        match *self {
            Self::Linear { .. } => 0.0,
            Self::Exponential { gamma } => gamma * gamma * (-gamma * delta).exp(),
        }
    }

    pub fn validate_class(&self) -> ClassReport {
        match *self {
            Self::Linear { .. } => ClassReport {
                strictly_decreasing: true,
                curvature_ratio_sup: 0.0,
                vanishes_at_infinity: false,
                in_class: false,
                special_case: true,
            },
            // ΛΛ''/Λ'² = e^{-γx} γ² e^{-γx} / (γ² e^{-2γx}) = 1 identically
            Self::Exponential { .. } => ClassReport {
                strictly_decreasing: true,
                curvature_ratio_sup: 1.0,
                vanishes_at_infinity: true,
                in_class: true,
                special_case: false,
            },
        }
    }

    /// Unconstrained maximiser of `Λ(δ)(δ - p)`.
    #[inline]
    pub fn delta_star(&self, p: f64) -> f64 {
        match *self {
            Self::Linear { zeta, gamma } => 0.5 * (zeta / gamma + p),
            Self::Exponential { gamma } => 1.0 / gamma + p,
        }
    }

    #[inline]
    pub fn delta_star_truncated(&self, p: f64, trunc: &Truncation) -> f64 {
        trunc.clamp(self.delta_star(p))
    }

    /// `W(p) = sup_δ Λ(δ)(δ - p)`.
    #[inline]
    pub fn w_value(&self, p: f64) -> f64 {
        match *self {
            Self::Linear { zeta, gamma } => {
                let r = zeta / gamma - p;
                0.25 * gamma * r * r
            }
            Self::Exponential { gamma } => (-1.0 - gamma * p).exp() / gamma,
        }
    }

    /// Captured share at the optimal quote, `Λ(δ*(p))`. Equals `-W'(p)`.
    #[inline]
    pub fn fill_share(&self, p: f64) -> f64 {
        self.lambda(self.delta_star(p))
    }
}

/// Clamp bound `ξ` on admissible quotes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    xi: f64,
}

impl Truncation {
    pub fn new(xi: f64) -> Result<Self> {
        check_positive("xi", xi)?;
        Ok(Self { xi })
    }

    /// Default bound `10 (1/γ + y_bound)` for a working estimate `y_bound` of `|Y|`.
    pub fn default_for(model: &IntensityModel, y_bound: f64) -> Self {
        Self { xi: 10.0 * (1.0 / model.gamma() + y_bound.abs()) }
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    #[inline]
    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(-self.xi, self.xi)
    }

    #[inline]
    pub fn is_active(&self, x: f64) -> bool {
        x.abs() > self.xi
    }
}

/// Ask and bid intensity models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityPair {
    pub ask: IntensityModel,
    pub bid: IntensityModel,
}

impl IntensityPair {
    pub fn symmetric(model: IntensityModel) -> Self {
        Self { ask: model, bid: model }
    }

    /// Optimal truncated quotes `(δᵃ, δᵇ) = (δ̃ᵃ*(y), δ̃ᵇ*(-y))` for adjoint `y`.
    #[inline]
    pub fn quotes(&self, y: f64, trunc: &Truncation) -> (f64, f64) {
        (
            self.ask.delta_star_truncated(y, trunc),
            self.bid.delta_star_truncated(-y, trunc),
        )
    }

    /// Inventory drift `μ(y) = -a Λᵃ(δ̃ᵃ*(y)) + b Λᵇ(δ̃ᵇ*(-y))`.
    #[inline]
    pub fn drift(&self, a: f64, b: f64, y: f64, trunc: &Truncation) -> f64 {
        forward_drift(&self.ask, &self.bid, a, b, y, trunc)
    }
}

/// Inventory drift of the truncated FBSDE; nondecreasing in `y`.
#[inline]
pub fn forward_drift(
    ask: &IntensityModel,
    bid: &IntensityModel,
    a: f64,
    b: f64,
    y: f64,
    trunc: &Truncation,
) -> f64 {
    -a * ask.lambda(ask.delta_star_truncated(y, trunc)) + b * bid.lambda(bid.delta_star_truncated(-y, trunc))
}
