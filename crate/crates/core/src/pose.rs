//! Planar rigid transforms and angle helpers.

use serde::{Deserialize, Serialize};

/// Wraps an angle in degrees into `(-180, 180]`.
pub fn normalize_deg(angle: f64) -> f64 {
    let r = angle.rem_euclid(360.0);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

/// Absolute angular difference in degrees, in `[0, 180]`.
pub fn angle_diff_deg(a: f64, b: f64) -> f64 {
    normalize_deg(a - b).abs()
}

/// Planar pose mapping points of the second scan into the first scan's frame:
/// `p_a = R(theta) * p_b + (dx, dy)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RelativePose {
    pub dx: f64,
    pub dy: f64,
    pub theta_deg: f64,
    /// Mean L1 radius distance at the selected yaw shift.
    #[serde(default)]
    pub yaw_residual: f64,
    /// Final value of the label-gated ICP loss.
    #[serde(default)]
    pub icp_loss: f64,
}

impl RelativePose {
    pub fn new(dx: f64, dy: f64, theta_deg: f64) -> Self {
        Self {
            dx,
            dy,
            theta_deg: normalize_deg(theta_deg),
            yaw_residual: 0.0,
            icp_loss: 0.0,
        }
    }

    pub fn identity() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.theta_deg.to_radians().sin_cos();
        (c * x - s * y + self.dx, s * x + c * y + self.dy)
    }

    pub fn inverse(&self) -> Self {
        let (s, c) = self.theta_deg.to_radians().sin_cos();
        // R^T * (-d)
        let dx = -(c * self.dx + s * self.dy);
        let dy = -(-s * self.dx + c * self.dy);
        Self::new(dx, dy, -self.theta_deg)
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RelativePose) -> Self {
        let (dx, dy) = self.apply(other.dx, other.dy);
        Self::new(dx, dy, self.theta_deg + other.theta_deg)
    }

    pub fn translation_norm(&self) -> f64 {
        self.dx.hypot(self.dy)
    }

    pub fn is_finite(&self) -> bool {
        self.dx.is_finite() && self.dy.is_finite() && self.theta_deg.is_finite()
    }
}
