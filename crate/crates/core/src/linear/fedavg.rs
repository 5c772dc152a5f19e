use serde::{Deserialize, Serialize};

use super::LinearQuery;
use crate::engine::UpdateRule;
use crate::linalg::{self, VecD};
use crate::{Error, Result};

/// Local training a client runs from the broadcast model.
pub trait ClientUpdate {
    fn run(&self, global: &[f64], client_data: &[f64]) -> VecD;
}

/// Plain gradient steps on `½·mean_i ‖w − x_i‖²`, the client's points
/// `x_i ∈ ℝ^dim` laid out back to back in `client_data`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalGradientSteps {
    pub dim: usize,
    pub steps: usize,
    pub lr: f64,
}

impl Default for LocalGradientSteps {
    fn default() -> Self {
        LocalGradientSteps { dim: 1, steps: 5, lr: 0.5 }
    }
}

impl ClientUpdate for LocalGradientSteps {
    fn run(&self, global: &[f64], client_data: &[f64]) -> VecD {
        let pts: Vec<VecD> = client_data.chunks_exact(self.dim).map(<[f64]>::to_vec).collect();
        let Some(mean) = linalg::mean(&pts) else { return global.to_vec() };
        let mut w = global.to_vec();
        for _ in 0..self.steps {
            let g = linalg::sub(&w, &mean);
            linalg::axpy(&mut w, -self.lr, &g);
        }
        w
    }
}

/// One aggregation: mean of the client models, each clipped to `clip`.
pub fn fedavg_round(client_models: &[VecD], clip: f64) -> Result<VecD> {
    if client_models.is_empty() {
        return Err(Error::InvalidArgument("no clients".into()));
    }
    let clipped: Vec<VecD> = client_models.iter().map(|w| linalg::clip_norm(w, clip)).collect();
    Ok(linalg::mean(&clipped).expect("nonempty"))
}

/// Federated averaging as a linear query over clients: the contribution of
/// a client is its clipped local model divided by the original client count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FedAvg<U = LocalGradientSteps> {
    pub dim: usize,
    pub clip: f64,
    pub clients: usize,
    pub client_update: U,
}

impl FedAvg<LocalGradientSteps> {
    pub fn quadratic(dim: usize, clients: usize) -> Result<Self> {
        Self::new(dim, 1.0, clients, LocalGradientSteps { dim, ..Default::default() })
    }
}

impl<U: ClientUpdate> FedAvg<U> {
    pub fn new(dim: usize, clip: f64, clients: usize, client_update: U) -> Result<Self> {
        if dim == 0 || clients == 0 || !(clip > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "fedavg needs dim, clients >= 1 and clip > 0 (got {dim}, {clients}, {clip})"
            )));
        }
        Ok(FedAvg { dim, clip, clients, client_update })
    }

    /// Clipped local models for one round, in client order.
    pub fn client_models(&self, global: &[f64], clients: &[Vec<f64>]) -> Vec<VecD> {
        clients.iter().map(|c| linalg::clip_norm(&self.client_update.run(global, c), self.clip)).collect()
    }
}

impl<U: ClientUpdate> LinearQuery for FedAvg<U> {
    fn query_dim(&self) -> usize {
        self.dim
    }

    /// `2·clip/C`.
    fn sensitivity(&self) -> f64 {
        2.0 * self.clip / self.clients as f64
    }

    fn label(&self) -> &str {
        "fedavg"
    }

    fn contribution(&self, history: &[VecD], point: &[f64]) -> VecD {
        let w = &history[history.len() - 1];
        let local = linalg::clip_norm(&self.client_update.run(w, point), self.clip);
        linalg::scale(&local, 1.0 / self.clients as f64)
    }
}

impl<U: ClientUpdate> UpdateRule for FedAvg<U> {
    fn initial_model(&self) -> VecD {
        linalg::zeros(self.dim)
    }

    fn update(&self, _history: &[VecD], response: &[f64]) -> VecD {
        response.to_vec()
    }
}
