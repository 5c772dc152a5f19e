use serde::{Deserialize, Serialize};

use crate::linalg::{self, VecD};
use crate::{Error, Result};

/// Closed convex constraint set with a closed-form linear minimization
/// oracle and Euclidean projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ConvexBody {
    /// Euclidean ball of `radius` centred at the origin.
    Ball { dim: usize, radius: f64 },
    /// Axis-aligned box `[-half_width, half_width]^dim`.
    Box { dim: usize, half_width: f64 },
}

impl ConvexBody {
    pub fn ball(dim: usize, radius: f64) -> Result<Self> {
        if dim == 0 || !(radius > 0.0) {
            return Err(Error::InvalidArgument(format!("ball needs dim >= 1 and radius > 0 (got {dim}, {radius})")));
        }
        Ok(ConvexBody::Ball { dim, radius })
    }

    pub fn cube(dim: usize, half_width: f64) -> Result<Self> {
        if dim == 0 || !(half_width > 0.0) {
            return Err(Error::InvalidArgument(format!("box needs dim >= 1 and width > 0 (got {dim}, {half_width})")));
        }
        Ok(ConvexBody::Box { dim, half_width })
    }

    pub fn dim(&self) -> usize {
        match *self {
            ConvexBody::Ball { dim, .. } | ConvexBody::Box { dim, .. } => dim,
        }
    }

    pub fn diameter(&self) -> f64 {
        match *self {
            ConvexBody::Ball { radius, .. } => 2.0 * radius,
            ConvexBody::Box { dim, half_width } => 2.0 * half_width * (dim as f64).sqrt(),
        }
    }

    pub fn center(&self) -> VecD {
        linalg::zeros(self.dim())
    }

    /// `argmin_{v in body} <v, direction>`; ties (zero coordinates) resolve
    /// to the centre.
    pub fn lmo(&self, direction: &[f64]) -> VecD {
        match *self {
            ConvexBody::Ball { radius, .. } => {
                let n = linalg::norm(direction);
                if n == 0.0 {
                    self.center()
                } else {
                    linalg::scale(direction, -radius / n)
                }
            }
            ConvexBody::Box { half_width, .. } => direction
                .iter()
                .map(|&c| if c > 0.0 { -half_width } else if c < 0.0 { half_width } else { 0.0 })
                .collect(),
        }
    }

    pub fn project(&self, point: &[f64]) -> VecD {
        match *self {
            ConvexBody::Ball { radius, .. } => linalg::clip_norm(point, radius),
            ConvexBody::Box { half_width, .. } => point.iter().map(|x| x.clamp(-half_width, half_width)).collect(),
        }
    }

    /// Euclidean distance from `point` to the body.
    pub fn distance(&self, point: &[f64]) -> f64 {
        linalg::dist(point, &self.project(point))
    }
}
