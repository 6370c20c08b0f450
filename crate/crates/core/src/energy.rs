//! Body-motion energy between key states.
//!
//! `c(a, b) = alpha * 1[d(a, b) > 0] + gamma * d(a, b)` with
//! `d = |dX|^k + beta * (1 - |cos(dyaw / 2)|)`, `k` being 1 (path-additive
//! Euclidean length) or 2 (squared length).

use crate::reach::BodyPose;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DistanceMetric {
    /// Plain Euclidean length of the planar displacement.
    #[default]
    Euclidean,
    /// Squared planar displacement.
    Squared,
}

impl DistanceMetric {
    pub fn exponent(self) -> u32 {
        match self {
            Self::Euclidean => 1,
            Self::Squared => 2,
        }
    }

    pub fn from_exponent(k: u32) -> Option<Self> {
        match k {
            1 => Some(Self::Euclidean),
            2 => Some(Self::Squared),
            _ => None,
        }
    }

    #[inline]
    pub fn length_term(self, squared_norm: f64) -> f64 {
        match self {
            Self::Euclidean => squared_norm.sqrt(),
            Self::Squared => squared_norm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParams {
    /// Fixed start cost charged once per body move.
    pub alpha: f64,
    /// Variable-cost coefficient.
    pub gamma: f64,
    /// Orientation weight.
    pub beta: f64,
    pub metric: DistanceMetric,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            gamma: 2.0,
            beta: 0.0,
            metric: DistanceMetric::Euclidean,
        }
    }
}

impl EnergyParams {
    pub fn squared(alpha: f64, gamma: f64, beta: f64) -> Self {
        Self {
            alpha,
            gamma,
            beta,
            metric: DistanceMetric::Squared,
        }
    }
}

pub fn state_distance(a: &BodyPose, b: &BodyPose, params: &EnergyParams) -> f64 {
    let lin = params
        .metric
        .length_term((b.position - a.position).norm_squared());
    let rot = if params.beta == 0.0 {
        0.0
    } else {
        // Planar yaw quaternions: |q_a . q_b| = |cos(dyaw / 2)|.
        params.beta * (1.0 - (0.5 * (b.yaw - a.yaw)).cos().abs())
    };
    lin + rot
}

pub fn energy_cost(a: &BodyPose, b: &BodyPose, params: &EnergyParams) -> f64 {
    let d = state_distance(a, b, params);
    if d > 0.0 {
        params.alpha + params.gamma * d
    } else {
        0.0
    }
}

/// Position-only cost used inside the planners' candidate loops (`beta` ignored).
#[inline]
pub fn planar_cost(squared_norm: f64, params: &EnergyParams) -> f64 {
    if squared_norm > 0.0 {
        params.alpha + params.gamma * params.metric.length_term(squared_norm)
    } else {
        0.0
    }
}
