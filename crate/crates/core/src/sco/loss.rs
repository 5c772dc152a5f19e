use serde::{Deserialize, Serialize};

use crate::linalg::{self, VecD};
use crate::{Error, Result};

/// Convex loss `ℓ(w; z)` with declared Lipschitz and smoothness constants
/// over the admissible data.
pub trait LossModel {
    fn value(&self, w: &[f64], z: &[f64]) -> f64;
    fn gradient(&self, w: &[f64], z: &[f64]) -> VecD;
    /// `G`: bound on `‖∇ℓ(w; z)‖`.
    fn lipschitz(&self) -> f64;
    /// `H`: gradient Lipschitz constant, `None` for non-smooth losses.
    fn smoothness(&self) -> Option<f64>;
}

/// Scalar link `φ_y` of a generalized linear model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Link {
    /// `log(1 + exp(−y m))`, labels in {−1, +1}.
    Logistic,
    /// `max(0, 1 − y m)`, labels in {−1, +1}.
    Hinge,
    /// Squared loss `½(m − y)²` continued linearly beyond `|m − y| = clip`
    /// (Huber), which keeps it Lipschitz.
    ClippedQuadratic { clip: f64 },
}

impl Link {
    pub fn value(&self, margin: f64, y: f64) -> f64 {
        match *self {
            Link::Logistic => softplus(-y * margin),
            Link::Hinge => (1.0 - y * margin).max(0.0),
            Link::ClippedQuadratic { clip } => {
                let r = margin - y;
                if r.abs() <= clip {
                    0.5 * r * r
                } else {
                    clip * r.abs() - 0.5 * clip * clip
                }
            }
        }
    }

    /// `φ_y'(m)` (a subgradient for the hinge).
    pub fn derivative(&self, margin: f64, y: f64) -> f64 {
        match *self {
            Link::Logistic => -y * sigmoid(-y * margin),
            Link::Hinge => {
                if y * margin < 1.0 {
                    -y
                } else {
                    0.0
                }
            }
            Link::ClippedQuadratic { clip } => (margin - y).clamp(-clip, clip),
        }
    }

    /// Bound on `|φ'|` for admissible labels.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            Link::Logistic | Link::Hinge => 1.0,
            Link::ClippedQuadratic { clip } => clip,
        }
    }

    /// Bound on `φ''`.
    pub fn smoothness(&self) -> Option<f64> {
        match *self {
            Link::Logistic => Some(0.25),
            Link::Hinge => None,
            Link::ClippedQuadratic { .. } => Some(1.0),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

/// `ℓ(w; (x, y)) = φ_y(<w, x>)` with `‖x‖ ≤ data_radius`. Data rows are
/// `[x_1, …, x_d, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlmLoss {
    pub link: Link,
    pub data_radius: f64,
}

impl GlmLoss {
    pub fn new(link: Link, data_radius: f64) -> Result<Self> {
        if !(data_radius > 0.0) {
            return Err(Error::InvalidArgument(format!("data radius must be positive, got {data_radius}")));
        }
        if let Link::ClippedQuadratic { clip } = link {
            if !(clip > 0.0) {
                return Err(Error::InvalidArgument(format!("clip level must be positive, got {clip}")));
            }
        }
        Ok(GlmLoss { link, data_radius })
    }

    pub fn logistic(data_radius: f64) -> Result<Self> {
        Self::new(Link::Logistic, data_radius)
    }

    pub fn hinge(data_radius: f64) -> Result<Self> {
        Self::new(Link::Hinge, data_radius)
    }

    pub fn clipped_quadratic(data_radius: f64, clip: f64) -> Result<Self> {
        Self::new(Link::ClippedQuadratic { clip }, data_radius)
    }

    fn split<'a>(&self, w: &[f64], z: &'a [f64]) -> (&'a [f64], f64) {
        let d = w.len();
        (&z[..d], z[d])
    }
}

impl LossModel for GlmLoss {
    fn value(&self, w: &[f64], z: &[f64]) -> f64 {
        let (x, y) = self.split(w, z);
        self.link.value(linalg::dot(w, x), y)
    }

    fn gradient(&self, w: &[f64], z: &[f64]) -> VecD {
        let (x, y) = self.split(w, z);
        linalg::scale(x, self.link.derivative(linalg::dot(w, x), y))
    }

    fn lipschitz(&self) -> f64 {
        self.link.lipschitz() * self.data_radius
    }

    fn smoothness(&self) -> Option<f64> {
        self.link.smoothness().map(|h| h * self.data_radius * self.data_radius)
    }
}
