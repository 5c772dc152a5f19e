//! Statistical certificate for exact unlearning: final models after
//! unlearning must be distributed like those of a fresh run on the reduced
//! dataset.

use anyhow::bail;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use unlearn_core::engine::{learn, tree_unlearn_row, LearnConfig, PrefixQuery, UpdateRule};
use unlearn_core::linalg::{self, VecD};
use unlearn_core::linear::{fit_linear, unlearn_linear, LinearQuery};
use unlearn_core::{CouplingMode, NoiseScale};

use crate::experiment::trial_seed;
use crate::stats::{ks_two_sample, z_test_means, TestOutcome};

/// Smallest trial count accepted by [`verify_coupling`].
pub const MIN_TRIALS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EngineKind {
    #[default]
    Prefix,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub engine: EngineKind,
    pub n: usize,
    pub d: usize,
    pub trials: usize,
    /// Family-wise significance; each test runs at `alpha / tests`.
    pub alpha: f64,
    pub sigma: f64,
    /// Iterations of the linear engine.
    pub steps: usize,
    pub seed: u64,
    /// Use the inverted accept ratio (a deliberately wrong coupling).
    pub mutate: bool,
    /// All points equal and no noise.
    pub duplicate: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            engine: EngineKind::Prefix,
            n: 4,
            d: 2,
            trials: 20_000,
            alpha: 0.01,
            sigma: 1.0,
            steps: 4,
            seed: 0,
            mutate: false,
            duplicate: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub trials: usize,
    pub alpha: f64,
    /// Per-test threshold after the Bonferroni correction.
    pub threshold: f64,
    pub ks: Vec<TestOutcome>,
    pub z: Vec<TestOutcome>,
    pub retrain_fraction: f64,
    pub passed: bool,
}

/// `p_t = w_t − z`, `w_{t+1} = −η·response`: dual averaging on
/// `½‖w − z‖²`.
#[derive(Debug, Clone, Copy)]
pub struct QuadraticPrefix {
    pub dim: usize,
    pub eta: f64,
    pub radius: f64,
}

impl PrefixQuery for QuadraticPrefix {
    fn query_dim(&self) -> usize {
        self.dim
    }

    fn sensitivity(&self) -> f64 {
        2.0 * self.radius
    }

    fn label(&self) -> &str {
        "quadratic"
    }

    fn increment(&self, history: &[VecD], point: &[f64]) -> VecD {
        linalg::sub(&history[history.len() - 1], &linalg::clip_norm(point, self.radius))
    }
}

impl UpdateRule for QuadraticPrefix {
    fn initial_model(&self) -> VecD {
        linalg::zeros(self.dim)
    }

    fn update(&self, _history: &[VecD], response: &[f64]) -> VecD {
        linalg::scale(response, -self.eta)
    }
}

/// Full-batch gradient descent on `½·mean‖w − z‖²` as a linear query with a
/// fixed normaliser `n`.
#[derive(Debug, Clone, Copy)]
pub struct QuadraticLinear {
    pub dim: usize,
    pub n: usize,
    pub eta: f64,
    pub radius: f64,
}

impl LinearQuery for QuadraticLinear {
    fn query_dim(&self) -> usize {
        self.dim
    }

    fn sensitivity(&self) -> f64 {
        2.0 * self.radius / self.n as f64
    }

    fn label(&self) -> &str {
        "quadratic-gd"
    }

    fn contribution(&self, history: &[VecD], point: &[f64]) -> VecD {
        let w = &history[history.len() - 1];
        linalg::scale(&linalg::sub(w, &linalg::clip_norm(point, self.radius)), 1.0 / self.n as f64)
    }
}

impl UpdateRule for QuadraticLinear {
    fn initial_model(&self) -> VecD {
        linalg::zeros(self.dim)
    }

    fn update(&self, history: &[VecD], response: &[f64]) -> VecD {
        let mut w = history[history.len() - 1].clone();
        linalg::axpy(&mut w, -self.eta, response);
        w
    }
}

/// Deterministic points on a circle of radius one, or copies of one point.
pub fn fixed_points(n: usize, d: usize, duplicate: bool) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            let a = if duplicate { 0.7 } else { 0.7 + 2.0 * std::f64::consts::PI * i as f64 / n as f64 };
            (0..d).map(|c| if c % 2 == 0 { a.cos() } else { a.sin() } * (1.0 - 0.1 * (c / 2) as f64)).collect()
        })
        .collect()
}

struct Paths {
    unlearned: VecD,
    retrained: VecD,
    did_retrain: bool,
}

fn prefix_trial(cfg: &VerifyConfig, rows: &[Vec<f64>], trial: usize) -> anyhow::Result<Paths> {
    let alg = QuadraticPrefix { dim: cfg.d, eta: 0.25, radius: 1.0 };
    let sigma = if cfg.duplicate { NoiseScale::ZERO } else { NoiseScale::new(cfg.sigma)? };
    let mut lc = LearnConfig::with_sigma(sigma, 1.0);
    if cfg.mutate {
        lc.coupling = CouplingMode::InvertedRatio;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(cfg.seed, trial));
    let (_, mut state) = learn(&alg, rows.to_vec(), &lc, &mut rng)?;
    let (unlearned, rep) = tree_unlearn_row(&alg, &mut state, 0, &mut rng)?;
    let (retrained, _) = learn(&alg, rows[1..].to_vec(), &lc, &mut rng)?;
    Ok(Paths { unlearned, retrained, did_retrain: rep.retrained })
}

fn linear_trial(cfg: &VerifyConfig, rows: &[Vec<f64>], trial: usize) -> anyhow::Result<Paths> {
    let alg = QuadraticLinear { dim: cfg.d, n: cfg.n, eta: 0.5, radius: 1.0 };
    let sigma = if cfg.duplicate { NoiseScale::ZERO } else { NoiseScale::new(cfg.sigma)? };
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(cfg.seed, trial));
    let (_, mut state) = fit_linear(&alg, rows.to_vec(), cfg.steps, sigma, &mut rng)?;
    if cfg.mutate {
        state.coupling = CouplingMode::InvertedRatio;
    }
    let (unlearned, rep) = unlearn_linear(&alg, &mut state, 0, &mut rng)?;
    let (retrained, _) = fit_linear(&alg, rows[1..].to_vec(), cfg.steps, sigma, &mut rng)?;
    Ok(Paths { unlearned, retrained, did_retrain: rep.retrained })
}

/// Runs `trials` independent unlearn and retrain paths (deleting the first
/// point) and compares the final models coordinate by coordinate.
pub fn verify_coupling(cfg: &VerifyConfig) -> anyhow::Result<CouplingReport> {
    if cfg.trials < MIN_TRIALS {
        bail!("need at least {MIN_TRIALS} trials, got {}", cfg.trials);
    }
    if cfg.n < 2 || cfg.d == 0 {
        bail!("need n >= 2 and d >= 1");
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        bail!("alpha must lie in (0, 1)");
    }
    let rows = fixed_points(cfg.n, cfg.d, cfg.duplicate);
    let paths: Vec<Paths> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| match cfg.engine {
            EngineKind::Prefix => prefix_trial(cfg, &rows, t),
            EngineKind::Linear => linear_trial(cfg, &rows, t),
        })
        .collect::<anyhow::Result<_>>()?;
    let tests = 2 * cfg.d;
    let threshold = cfg.alpha / tests as f64;
    let mut ks = Vec::with_capacity(cfg.d);
    let mut z = Vec::with_capacity(cfg.d);
    for c in 0..cfg.d {
        let a: Vec<f64> = paths.iter().map(|p| p.unlearned[c]).collect();
        let b: Vec<f64> = paths.iter().map(|p| p.retrained[c]).collect();
        ks.push(ks_two_sample(&a, &b));
        z.push(z_test_means(&a, &b));
    }
    let passed = ks.iter().chain(&z).all(|t| t.p_value >= threshold);
    let retrain_fraction = paths.iter().filter(|p| p.did_retrain).count() as f64 / cfg.trials as f64;
    Ok(CouplingReport { trials: cfg.trials, alpha: cfg.alpha, threshold, ks, z, retrain_fraction, passed })
}
