use serde::{Deserialize, Serialize};

use super::{ConvexBody, LossModel};
use crate::engine::{PrefixQuery, UpdateRule};
use crate::linalg::{self, VecD};
use crate::{Error, Result};

/// Hybrid-SARAH increment `(t+1)∇ℓ(w_t; z) − t∇ℓ(w_{t−1}; z)` with
/// `t = history.len()` and `w_0 = w_1`.
pub fn vrfw_query<L: LossModel + ?Sized>(loss: &L, history: &[VecD], z: &[f64]) -> VecD {
    let t = history.len();
    let w_t = &history[t - 1];
    let w_prev = if t >= 2 { &history[t - 2] } else { w_t };
    let mut p = linalg::scale(&loss.gradient(w_t, z), (t + 1) as f64);
    linalg::axpy(&mut p, -(t as f64), &loss.gradient(w_prev, z));
    p
}

/// `v_t = lmo(r_t/(t+1))`, `w_{t+1} = (1 − η_t) w_t + η_t v_t` with
/// `η_t = 1/(t+1)`.
pub fn vrfw_update(history: &[VecD], response: &[f64], body: &ConvexBody) -> VecD {
    let t = history.len();
    let w_t = &history[t - 1];
    let eta = 1.0 / (t + 1) as f64;
    let v = body.lmo(&linalg::scale(response, eta));
    let mut next = linalg::scale(w_t, 1.0 - eta);
    linalg::axpy(&mut next, eta, &v);
    next
}

/// Variance-reduced Frank-Wolfe over a bounded body; needs a smooth loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VrFrankWolfe<L> {
    pub loss: L,
    pub body: ConvexBody,
    smoothness: f64,
}

impl<L: LossModel> VrFrankWolfe<L> {
    pub fn new(loss: L, body: ConvexBody) -> Result<Self> {
        let smoothness = loss
            .smoothness()
            .ok_or_else(|| Error::InvalidArgument("variance-reduced Frank-Wolfe needs a smooth loss".into()))?;
        Ok(VrFrankWolfe { loss, body, smoothness })
    }
}

impl<L: LossModel> PrefixQuery for VrFrankWolfe<L> {
    fn query_dim(&self) -> usize {
        self.body.dim()
    }

    /// `2(HD + G)`.
    fn sensitivity(&self) -> f64 {
        2.0 * (self.smoothness * self.body.diameter() + self.loss.lipschitz())
    }

    fn label(&self) -> &str {
        "vr-frank-wolfe"
    }

    fn increment(&self, history: &[VecD], point: &[f64]) -> VecD {
        vrfw_query(&self.loss, history, point)
    }
}

impl<L: LossModel> UpdateRule for VrFrankWolfe<L> {
    fn initial_model(&self) -> VecD {
        self.body.center()
    }

    fn update(&self, history: &[VecD], response: &[f64]) -> VecD {
        vrfw_update(history, response, &self.body)
    }
}

/// `η = D·d^{1/4}·√(ln n) / (G·√(nρ))`.
pub fn da_step_size(diameter: f64, dim: usize, lipschitz: f64, n: usize, rho: f64) -> f64 {
    let n = n.max(2) as f64;
    diameter * (dim as f64).powf(0.25) * n.ln().sqrt() / (lipschitz * (n * rho).sqrt())
}

/// Dual-averaging step size policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum StepSize {
    Fixed { eta: f64 },
    /// [`da_step_size`] evaluated at the current doubling horizon
    /// `next_power_of_two(t)`, for streams of unknown length.
    DoublingHorizon { rho: f64 },
}

/// Increment `∇ℓ(w_t; z)`.
pub fn da_query<L: LossModel + ?Sized>(loss: &L, history: &[VecD], z: &[f64]) -> VecD {
    loss.gradient(&history[history.len() - 1], z)
}

/// `Π_W(w₀ − η r_t)`.
pub fn da_update(w0: &[f64], response: &[f64], eta: f64, body: &ConvexBody) -> VecD {
    let mut y = w0.to_vec();
    linalg::axpy(&mut y, -eta, response);
    body.project(&y)
}

/// Projected dual averaging: the iterate is the projection of the scaled,
/// negated gradient prefix sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualAveraging<L> {
    pub loss: L,
    pub body: ConvexBody,
    pub step: StepSize,
}

impl<L: LossModel> DualAveraging<L> {
    pub fn new(loss: L, body: ConvexBody, step: StepSize) -> Self {
        DualAveraging { loss, body, step }
    }

    /// Step size tuned for a known horizon `n`.
    pub fn tuned(loss: L, body: ConvexBody, n: usize, rho: f64) -> Self {
        let eta = da_step_size(body.diameter(), body.dim(), loss.lipschitz(), n, rho);
        DualAveraging { loss, body, step: StepSize::Fixed { eta } }
    }

    pub fn eta_at(&self, t: usize) -> f64 {
        match self.step {
            StepSize::Fixed { eta } => eta,
            StepSize::DoublingHorizon { rho } => da_step_size(
                self.body.diameter(),
                self.body.dim(),
                self.loss.lipschitz(),
                t.max(1).next_power_of_two(),
                rho,
            ),
        }
    }
}

impl<L: LossModel> PrefixQuery for DualAveraging<L> {
    fn query_dim(&self) -> usize {
        self.body.dim()
    }

    /// `2G`.
    fn sensitivity(&self) -> f64 {
        2.0 * self.loss.lipschitz()
    }

    fn label(&self) -> &str {
        "dual-averaging"
    }

    fn increment(&self, history: &[VecD], point: &[f64]) -> VecD {
        da_query(&self.loss, history, point)
    }
}

impl<L: LossModel> UpdateRule for DualAveraging<L> {
    fn initial_model(&self) -> VecD {
        self.body.center()
    }

    fn update(&self, history: &[VecD], response: &[f64]) -> VecD {
        da_update(&history[0], response, self.eta_at(history.len()), &self.body)
    }
}
