//! Held-out risk as a function of `n` and `ρ`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use unlearn_core::engine::learn;
use unlearn_core::linear::fit_linear;
use unlearn_core::stream::{StreamMode, StreamState};

use crate::config::{ExperimentConfig, Problem};
use crate::experiment::{trial_data, trial_seed};
use crate::problems::{build_learner, learn_config, linear_sigma, risk, stream_schedule, Learner};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskPoint {
    pub n: usize,
    pub rho: f64,
    pub mean_heldout_risk: f64,
    pub std_err: f64,
    /// Held-out risk per trial, paired across grid points by trial index.
    pub per_trial: Vec<f64>,
}

/// Held-out risk of one learning run. Data and learning randomness depend
/// only on `(seed, trial)`, so runs pair across `n` and `ρ`.
pub fn heldout_risk(cfg: &ExperimentConfig, trial: usize) -> anyhow::Result<f64> {
    let seed = trial_seed(cfg.seed, trial);
    let data = trial_data(cfg, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let model = match build_learner(cfg, &data.train)? {
        Learner::Prefix(alg) if cfg.problem.is_stream() => {
            let mode = if cfg.problem == Problem::StreamExact { StreamMode::Exact } else { StreamMode::Weak };
            let schedule = stream_schedule(cfg, alg.as_ref())?;
            StreamState::with_schedule(alg.as_ref(), data.train, cfg.rho, schedule, mode, &mut rng)?.model(alg.as_ref())
        }
        Learner::Prefix(alg) => learn(alg.as_ref(), data.train, &learn_config(cfg, alg.as_ref())?, &mut rng)?.0,
        Learner::Linear(alg) => {
            let sigma = linear_sigma(cfg, alg.as_ref())?;
            fit_linear(alg.as_ref(), data.train, cfg.steps, sigma, &mut rng)?.0
        }
    };
    risk(cfg, &model, &data.heldout)
}

/// `cfg.trials` runs at every `(n, ρ)` grid point, `n` varying slowest.
pub fn risk_curve(cfg: &ExperimentConfig, ns: &[usize], rhos: &[f64]) -> anyhow::Result<Vec<RiskPoint>> {
    let mut out = Vec::with_capacity(ns.len() * rhos.len());
    for &n in ns {
        for &rho in rhos {
            let mut c = cfg.clone();
            c.n = n;
            c.rho = rho;
            c.validate()?;
            let per_trial: Vec<f64> = (0..c.trials).into_par_iter().map(|t| heldout_risk(&c, t)).collect::<anyhow::Result<_>>()?;
            let std_err = (stats::variance(&per_trial) / per_trial.len() as f64).sqrt();
            out.push(RiskPoint { n, rho, mean_heldout_risk: stats::mean(&per_trial), std_err, per_trial });
        }
    }
    Ok(out)
}

/// A significant risk increase between two neighbouring grid points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendViolation {
    pub from: (usize, f64),
    pub to: (usize, f64),
    pub p_value: f64,
}

/// Checks that held-out risk does not grow with `n` (at fixed `ρ`) or with
/// `ρ` (at fixed `n`): one-sided paired t-test per neighbouring pair.
pub fn trend_violations(points: &[RiskPoint], alpha: f64) -> Vec<TrendViolation> {
    let mut ns: Vec<usize> = points.iter().map(|p| p.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let mut rhos: Vec<f64> = points.iter().map(|p| p.rho).collect();
    rhos.sort_by(f64::total_cmp);
    rhos.dedup();
    let find = |n: usize, rho: f64| points.iter().find(|p| p.n == n && p.rho == rho);
    let mut pairs = Vec::new();
    for &rho in &rhos {
        pairs.extend(ns.windows(2).map(|w| ((w[0], rho), (w[1], rho))));
    }
    for &n in &ns {
        pairs.extend(rhos.windows(2).map(|w| ((n, w[0]), (n, w[1]))));
    }
    let mut out = Vec::new();
    for (from, to) in pairs {
        let (Some(a), Some(b)) = (find(from.0, from.1), find(to.0, to.1)) else { continue };
        let len = a.per_trial.len().min(b.per_trial.len());
        let t = stats::paired_t_increase(&a.per_trial[..len], &b.per_trial[..len]);
        if t.p_value < alpha {
            out.push(TrendViolation { from, to, p_value: t.p_value });
        }
    }
    out
}

/// Plot-ready CSV: `n,rho,trials,mean_heldout_risk,std_err`.
pub fn to_csv(points: &[RiskPoint]) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["n", "rho", "trials", "mean_heldout_risk", "std_err"])?;
    for p in points {
        w.write_record([
            p.n.to_string(),
            p.rho.to_string(),
            p.per_trial.len().to_string(),
            p.mean_heldout_risk.to_string(),
            p.std_err.to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}
