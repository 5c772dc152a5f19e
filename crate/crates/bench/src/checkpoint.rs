//! Saved learner state, `{config, state}` as JSON. The learner itself is
//! rebuilt from the config and the stored rows.

use std::path::Path;

use anyhow::{bail, Context};
use rand::Rng;
use serde::{Deserialize, Serialize};
use unlearn_core::engine::{learn, tree_unlearn_row, LearnState};
use unlearn_core::linalg::VecD;
use unlearn_core::linear::{fit_linear, unlearn_linear, LinearState};
use unlearn_core::stream::{StreamMode, StreamRequest, StreamState};
use unlearn_core::UnlearnReport;

use crate::config::{ExperimentConfig, Problem};
use crate::problems::{build_learner, learn_config, linear_sigma, stream_schedule, Learner};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "state")]
pub enum CheckpointState {
    Prefix(LearnState),
    Linear(LinearState),
    Stream(StreamState),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: ExperimentConfig,
    pub state: CheckpointState,
}

fn first_rows(state: &CheckpointState) -> &[Vec<f64>] {
    match state {
        CheckpointState::Prefix(s) => &s.rows,
        CheckpointState::Linear(s) => &s.rows,
        CheckpointState::Stream(s) => &s.learn.rows,
    }
}

impl Checkpoint {
    /// Learns `rows` under `config` (its `n` is set to the row count).
    pub fn learn<R: Rng + ?Sized>(mut config: ExperimentConfig, rows: Vec<Vec<f64>>, rng: &mut R) -> anyhow::Result<(VecD, Self)> {
        config.n = rows.len();
        config.validate()?;
        let (model, state) = match build_learner(&config, &rows)? {
            Learner::Prefix(alg) if config.problem.is_stream() => {
                let mode = if config.problem == Problem::StreamExact { StreamMode::Exact } else { StreamMode::Weak };
                let schedule = stream_schedule(&config, alg.as_ref())?;
                let st = StreamState::with_schedule(alg.as_ref(), rows, config.rho, schedule, mode, rng)?;
                (st.model(alg.as_ref()), CheckpointState::Stream(st))
            }
            Learner::Prefix(alg) => {
                let lc = learn_config(&config, alg.as_ref())?;
                let (m, st) = learn(alg.as_ref(), rows, &lc, rng)?;
                (m, CheckpointState::Prefix(st))
            }
            Learner::Linear(alg) => {
                let sigma = linear_sigma(&config, alg.as_ref())?;
                let (m, st) = fit_linear(alg.as_ref(), rows, config.steps, sigma, rng)?;
                (m, CheckpointState::Linear(st))
            }
        };
        Ok((model, Checkpoint { config, state }))
    }

    /// Requests applied since learning; distinct for every saved state of
    /// one run.
    pub fn progress(&self) -> usize {
        match &self.state {
            CheckpointState::Prefix(s) => s.rows.len() - s.len(),
            CheckpointState::Linear(s) => s.rows.len() - s.len(),
            CheckpointState::Stream(s) => s.requests,
        }
    }

    fn learner(&self) -> anyhow::Result<Learner> {
        build_learner(&self.config, first_rows(&self.state))
    }

    /// Deletes original row id `row` (prefix and linear checkpoints) or the
    /// point at 1-based `row` position (stream checkpoints).
    pub fn unlearn<R: Rng + ?Sized>(&mut self, row: usize, rng: &mut R) -> anyhow::Result<(VecD, UnlearnReport)> {
        if let CheckpointState::Stream(_) = self.state { return self.stream_step(StreamRequest::Delete(row), rng) }
        let learner = self.learner()?;
        Ok(match (&mut self.state, learner) {
            (CheckpointState::Prefix(st), Learner::Prefix(alg)) => tree_unlearn_row(alg.as_ref(), st, row, rng)?,
            (CheckpointState::Linear(st), Learner::Linear(alg)) => unlearn_linear(alg.as_ref(), st, row, rng)?,
            _ => bail!("checkpoint state does not match problem {:?}", self.config.problem),
        })
    }

    pub fn stream_step<R: Rng + ?Sized>(&mut self, req: StreamRequest, rng: &mut R) -> anyhow::Result<(VecD, UnlearnReport)> {
        let learner = self.learner()?;
        match (&mut self.state, learner) {
            (CheckpointState::Stream(st), Learner::Prefix(alg)) => Ok(st.step(alg.as_ref(), req, rng)?),
            _ => bail!("stream requests need a stream-weak or stream-exact checkpoint"),
        }
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let ck: Checkpoint = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        ck.config.validate()?;
        Ok(ck)
    }
}
